use std::path::Path;

use hrlmppi::config::{parse_config, parse_config_str};
use hrlmppi::nn::{load_checkpoint, save_checkpoint};
use hrlmppi::trainer::{evaluate, train, EvalStreams, Mode};

const SMOKE: &str = "env = \"acrobot\"\nmode = \"ppo-mppi\"\ntrainer.total_steps = 2000\ntrainer.eval_episodes = 2\n\
                     trainer.hidden = [16, 16]\nppo.n_steps = 256\nppo.epochs = 2\nmppi.samples = 30\n";

#[test]
fn every_experiment_config_parses() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../experiments");
    let mut n = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = parse_config(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            assert_eq!(cfg.seeds.len(), 5, "{}", path.display());
            let stem = path.file_stem().unwrap().to_string_lossy().into_owned();
            assert_eq!(cfg.mode == Mode::PpoBaseline, stem.ends_with("baseline"), "{stem}");
            n += 1;
        }
    }
    assert_eq!(n, 21);
}

#[test]
fn smoke_run_is_deterministic() {
    let cfg = parse_config_str(SMOKE).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let ra = train(&cfg, 7, Some(&a)).unwrap();
    train(&cfg, 7, Some(&b)).unwrap();
    assert_eq!(ra.steps, 2000);
    for f in ["metrics.csv", "eval.csv", "checkpoint.bin"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let other = train(&cfg, 8, None).unwrap();
    assert_ne!(ra.checkpoint.policy.log_std, other.checkpoint.policy.log_std);
}

#[test]
fn saved_checkpoint_reproduces_evaluation() {
    let cfg = parse_config_str(SMOKE).unwrap();
    let out = train(&cfg, 3, None).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("checkpoint.bin");
    save_checkpoint(&path, &out.checkpoint).unwrap();
    let loaded = load_checkpoint(&path).unwrap();
    let again = evaluate(&cfg, &loaded, cfg.trainer.eval_episodes, 3, EvalStreams::Final).unwrap();
    assert_eq!(again, out.eval);
}

#[test]
fn checkpoint_from_another_environment_is_rejected() {
    let cfg = parse_config_str(SMOKE).unwrap();
    let out = train(&cfg, 1, None).unwrap();
    let lander = parse_config_str("env = \"lander\"\n").unwrap();
    assert!(evaluate(&lander, &out.checkpoint, 1, 1, EvalStreams::Final).is_err());
}
