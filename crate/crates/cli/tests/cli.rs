use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY: &str = r#"
seed = 5

[datagen]
utterances = 20
min_len = 24
max_len = 28

[model]
hidden = 8
epochs = 1

[watermark]
n = 2
trigger_set_size = 4
replay_clean = 2
epochs = 1

[attack]
overwrite_trigger_set_size = 2
overwrite_replay_clean = 1
intercepted = 1
finetune_epochs = 1
recovery_epochs = 1
"#;

fn wmlab(out: &Path, config: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wmlab"))
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn wmlab")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, body).unwrap();
    path
}

/// Runs every stage; returns the exit code of `extract`.
fn full_run(out: &Path, config: &Path) -> i32 {
    for step in [
        &["datagen"][..],
        &["train"],
        &["stego-encode"],
        &["stego-decode"],
        &["trigger-synth"],
        &["embed"],
    ] {
        let o = wmlab(out, config, step);
        assert_eq!(code(&o), 0, "{step:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let extract = code(&wmlab(out, config, &["extract"]));
    for kind in ["prune", "finetune", "overwrite", "evasion"] {
        let o = wmlab(out, config, &["attack", "--kind", kind]);
        assert_eq!(code(&o), 0, "attack {kind}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let o = wmlab(out, config, &["report"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    extract
}

fn tree(root: &Path, rel: &Path, out: &mut Vec<(PathBuf, Vec<u8>)>) {
    for entry in fs::read_dir(root.join(rel)).unwrap() {
        let entry = entry.unwrap();
        let r = rel.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            tree(root, &r, out);
        } else if r != Path::new("run.log") {
            out.push((r, fs::read(entry.path()).unwrap()));
        }
    }
}

fn snapshot(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files = Vec::new();
    tree(root, Path::new(""), &mut files);
    files.sort();
    files
}

#[test]
fn pipeline_is_reproducible_and_logged() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), TINY);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let code_a = full_run(&a, &config);
    let code_b = full_run(&b, &config);
    // one epoch cannot embed a mark, so extraction must refuse ownership
    assert_eq!(code_a, 3);
    assert_eq!(code_b, 3);
    let extract = fs::read_to_string(a.join("reports/extract.txt")).unwrap();
    assert!(extract.contains("extract.verdict=not-watermarked\n"), "{extract}");
    assert!(extract.contains("extract.proves_ownership=false\n"));

    let (sa, sb) = (snapshot(&a), snapshot(&b));
    let names: Vec<_> = sa.iter().map(|(p, _)| p.clone()).collect();
    assert_eq!(names, sb.iter().map(|(p, _)| p.clone()).collect::<Vec<_>>());
    for ((p, x), (_, y)) in sa.iter().zip(&sb) {
        assert!(x == y, "{} differs between identical runs", p.display());
    }
    for f in ["models/baseline.ckpt", "models/watermarked.ckpt", "models/attack-prune.ckpt", "reports/summary.txt"] {
        assert!(a.join(f).exists(), "{f}");
    }

    let log = fs::read_to_string(a.join("run.log")).unwrap();
    assert_eq!(log.lines().count(), 12);
    assert!(log.lines().all(|l| l.starts_with("ts=") && l.contains("\targs=")));
    assert!(log.contains("outcome=claim-failed"));

    let summary = fs::read_to_string(a.join("reports/summary.txt")).unwrap();
    assert!(summary.lines().all(|l| l.starts_with('#') || l.contains('=')));
    assert!(summary.contains("# report"));
    assert!(summary.contains("attack.prune.param.sparsity=0.5\n"));
    assert!(summary.contains("attack.overwrite.param.owner_on_attacker_triggers=not-watermarked\n"));
}

#[test]
fn baseline_is_not_watermarked() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), TINY);
    let out = dir.path().join("run");
    for step in ["datagen", "train", "stego-encode", "trigger-synth"] {
        assert_eq!(code(&wmlab(&out, &config, &[step])), 0, "{step}");
    }
    let baseline = out.join("models/baseline.ckpt");
    let o = wmlab(&out, &config, &["extract", "--model", baseline.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("extract.verdict=not-watermarked"), "{stdout}");
    assert!(stdout.contains("extract.recovered_message=none"));
}

#[test]
fn unknown_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "[watermark]\ngroups = 4\n");
    let o = wmlab(&dir.path().join("x"), &config, &["datagen"]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("groups"), "{err}");
    assert!(!dir.path().join("x").exists(), "nothing runs on a bad config");
}

#[test]
fn invalid_value_names_its_key() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "[datagen]\nmin_len = 9\nmax_len = 3\n");
    let o = wmlab(&dir.path().join("x"), &config, &["datagen"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("datagen.min_len"));
}

#[test]
fn bad_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), TINY);
    let o = wmlab(&dir.path().join("x"), &config, &["attack", "--kind", "melt"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn missing_inputs_name_the_producing_command() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), TINY);
    let o = wmlab(&dir.path().join("empty"), &config, &["train"]);
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("train.tsv") && err.contains("wmlab datagen"), "{err}");
}

#[test]
fn non_stego_text_fails_decoding() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), TINY);
    let out = dir.path().join("run");
    assert_eq!(code(&wmlab(&out, &config, &["stego-encode"])), 0);
    let plain = dir.path().join("plain.txt");
    fs::write(&plain, "the weather was fine and the roads were dry\n").unwrap();
    let o = wmlab(&out, &config, &["stego-decode", plain.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stdout).contains("decode.0.error="));
}

#[test]
fn out_dir_falls_back_to_env() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), TINY);
    let target = dir.path().join("from-env");
    let o = Command::new(env!("CARGO_BIN_EXE_wmlab"))
        .arg("--config")
        .arg(&config)
        .arg("stego-encode")
        .env("WMLAB_OUT", &target)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(target.join("stego/stegos.txt").exists());
}
