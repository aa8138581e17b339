#![no_main]

use libfuzzer_sys::fuzz_target;
use localflow::app::checkpoint::Checkpoint;

fuzz_target!(|data: &[u8]| {
    // Any input that decodes must re-encode to the same bytes.
    if let Ok(ckpt) = Checkpoint::decode(data) {
        assert_eq!(ckpt.encode(), data);
    }
});
