use std::path::Path;
use std::process::{Command, Output};

fn localflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_localflow")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const TINY: &str = "\
dataset = gaussian
gaussian_mean = 1.0, -1.0
n_train = 2000
n_test = 200
batch_size = 128
batches_per_block = 60
hidden_width = 16
hidden_layers = 2
activation = relu
n_subflows = 2
c = 0.5
rho = 1.0
learning_rate = 0.005
steps = 8
distill_pairs = 500
seed = 3
";

#[test]
fn presets_list_names_every_preset() {
    let o = localflow(&["presets", "--list"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    for name in localflow::app::presets::NAMES {
        assert!(text.contains(name), "{name} missing from:\n{text}");
    }
}

#[test]
fn verify_succeeds_and_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("verify.txt");
    let o = localflow(&["verify", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(std::fs::metadata(&out).unwrap().len() > 0);
}

#[test]
fn validation_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.conf");
    std::fs::write(&cfg, "preset = imagenet\n").unwrap();
    let o = localflow(&["train", "--config", s(&cfg), "--out", s(&dir.path().join("run"))]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("rose-mini"));

    std::fs::write(&cfg, "n_subflows = 2\nlearning_rate = -1\n").unwrap();
    let o = localflow(&["train", "--config", s(&cfg), "--out", s(&dir.path().join("run"))]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("learning_rate"));

    assert_eq!(code(&localflow(&["generate", "--n", "3"])), 1);
}

#[test]
fn corrupt_checkpoint_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("model.ckpt");
    std::fs::write(&ckpt, b"definitely not a checkpoint").unwrap();
    let o = localflow(&["generate", "--model", s(&ckpt), "--n", "5", "--out", s(&dir.path().join("x.csv"))]);
    assert_ne!(code(&o), 0);
    assert!(!dir.path().join("x.csv").exists());
}

#[test]
fn train_generate_nll_distill_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.conf");
    std::fs::write(&cfg, TINY).unwrap();
    let run = dir.path().join("run");
    let o = localflow(&["train", "--config", s(&cfg), "--out", s(&run)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let model = run.join("model.ckpt");
    assert!(model.exists());
    let history = std::fs::read_to_string(run.join("loss_history.csv")).unwrap();
    assert_eq!(history.lines().next(), Some("block,batch,loss"));
    assert_eq!(history.lines().count(), 1 + 2 * 60);

    let samples = dir.path().join("samples.csv");
    let o = localflow(&["generate", "--model", s(&model), "--n", "1000", "--seed", "9", "--out", s(&samples)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&samples).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x1,x2"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 1000);
    assert!(rows.iter().flatten().all(|v| v.is_finite()));

    // Same seed, same bytes.
    let again = dir.path().join("again.csv");
    assert_eq!(code(&localflow(&["generate", "--model", s(&model), "--n", "1000", "--seed", "9", "--out", s(&again)])), 0);
    assert_eq!(std::fs::read(&samples).unwrap(), std::fs::read(&again).unwrap());

    let nll = dir.path().join("nll.csv");
    let o = localflow(&["nll", "--model", s(&model), "--data", s(&samples), "--header", "--out", s(&nll)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&nll).unwrap();
    assert_eq!(text.lines().next(), Some("index,nll"));
    assert_eq!(text.lines().count(), 1 + 1000 + 1);
    let mean: f64 = text.lines().last().unwrap().strip_prefix("mean,").unwrap().parse().unwrap();
    // Entropy of a unit Gaussian in 2-d is ln(2πe) ≈ 2.84; a rough fit lands nearby.
    assert!(mean.is_finite() && (mean - (2.0 * std::f64::consts::PI * std::f64::consts::E).ln()).abs() < 1.0, "{mean}");

    let dist = dir.path().join("distilled");
    let o = localflow(&["distill", "--model", s(&model), "--k", "2", "--config", s(&cfg), "--out", s(&dist)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let dmodel = dist.join("distilled.ckpt");
    let dsamples = dir.path().join("dsamples.csv");
    assert_eq!(code(&localflow(&["generate", "--model", s(&dmodel), "--n", "50", "--out", s(&dsamples)])), 0);
    assert_eq!(std::fs::read_to_string(&dsamples).unwrap().lines().count(), 51);

    // k must divide N.
    let o = localflow(&["distill", "--model", s(&model), "--k", "3", "--config", s(&cfg), "--out", s(&dist)]);
    assert_eq!(code(&o), 1);
}
