use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use freqseg::data::{read_volume, write_volume, Volume};
use freqseg::experiment::{CONFIG_KEYS, RESULTS_CSV};

fn freqseg(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_freqseg")).args(args).current_dir(cwd).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const TINY: &str = r#"
[data]
dir = "data"
count = 9
n_val = 2
n_test = 2
[phantom]
extents = [16, 16, 8]
radius_min = 1.5
radius_max = 3.0
[model]
mode = "early"
depth = 2
base_channels = 4
branch_channels = 2
[train]
epochs = 2
fraction = 0.6
[sweep]
fractions = [0.6]
modes = ["none", "late"]
seeds = 1
bootstrap = 200
"#;

#[test]
fn theta_outside_the_unit_interval_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = freqseg(&["disentangle", "x.svol", "--theta", "1.5", "--prefix", "p"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("theta"));
}

#[test]
fn bad_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), "[train]\nlearning_rate = 1\n").unwrap();
    let o = freqseg(&["--config", "c.toml", "train"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn help_lists_every_config_key() {
    let dir = tempfile::tempdir().unwrap();
    let help = stdout(&freqseg(&["--help"], dir.path()));
    for (key, _) in CONFIG_KEYS {
        assert!(help.contains(key), "{key} missing from --help");
    }
}

#[test]
fn disentangle_writes_parts_that_sum_to_the_input() {
    let dir = tempfile::tempdir().unwrap();
    let v = Volume::new([8, 8, 4], (0..256).map(|i| ((i * 37) % 11) as f64 * 0.3).collect()).unwrap();
    write_volume(dir.path().join("in.svol"), &v).unwrap();
    let o = freqseg(&["disentangle", "in.svol", "--theta", "0.25", "--prefix", "out/v"], dir.path());
    assert!(!o.status.success(), "missing output directory should fail");
    fs::create_dir(dir.path().join("out")).unwrap();
    let o = freqseg(&["disentangle", "in.svol", "--theta", "0.25", "--prefix", "out/v"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("reconstruction max error"));
    let high = read_volume(dir.path().join("out/v.high.svol")).unwrap();
    let low = read_volume(dir.path().join("out/v.low.svol")).unwrap();
    for ((h, l), x) in high.data().iter().zip(low.data()).zip(v.data()) {
        assert!((h + l - x).abs() < 1e-6);
    }
}

#[test]
fn phantom_gen_train_evaluate_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let cwd = dir.path();
    fs::write(cwd.join("c.toml"), TINY).unwrap();

    let o = freqseg(&["--config", "c.toml", "phantom-gen"], cwd);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = fs::read_to_string(cwd.join("data/manifest.txt")).unwrap();
    assert_eq!(manifest.lines().count(), 9);

    let o = freqseg(&["--config", "c.toml", "--out", "run", "train"], cwd);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["model.ckpt", "config.toml", "train.log", "probe.txt", "record.txt"] {
        assert!(cwd.join("run").join(f).exists(), "{f}");
    }
    let record = fs::read_to_string(cwd.join("run/record.txt")).unwrap();
    assert!(record.contains("mode = early") && record.contains("n_train = 3"), "{record}");

    let eval = |extra: &[&str]| {
        let mut args = vec!["--config", "c.toml", "--out", "eval", "evaluate", "--checkpoint", "run/model.ckpt"];
        args.extend_from_slice(extra);
        freqseg(&args, cwd)
    };
    let o = eval(&[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(fs::read_to_string(cwd.join("eval/report.txt")).unwrap().contains("dice"));
    assert_eq!(eval(&["--split", "train"]).status.code(), Some(2));
    assert!(eval(&["--split", "train", "--leak-ok"]).status.success());

    // a different seed is a different configuration
    let o = freqseg(&["--config", "c.toml", "--seed", "5", "evaluate", "--checkpoint", "run/model.ckpt"], cwd);
    assert_eq!(o.status.code(), Some(1));

    let o = freqseg(&["--config", "c.toml", "--out", "sweep", "sweep"], cwd);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(cwd.join("sweep").join(RESULTS_CSV)).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(stdout(&o).contains("median Dice"));
}
