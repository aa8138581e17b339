#![no_main]

use libfuzzer_sys::fuzz_target;
use localflow::app::config::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = RunConfig::parse(text) {
        // Accepted configs are valid and survive a text round trip.
        cfg.validate().unwrap();
        let again = RunConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(again, cfg);
    }
});
