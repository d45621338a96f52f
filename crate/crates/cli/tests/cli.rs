use std::path::Path;
use std::process::{Command, Output};

use hrlmppi::analysis::{read_csv, theorem_bound, BoundInputs};

fn hrlmppi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hrlmppi")).args(args).env("HRLMPPI_THREADS", "2").output().unwrap()
}

fn ok(out: &Output) -> String {
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(out.status.success(), "stdout:\n{stdout}\nstderr:\n{}", String::from_utf8_lossy(&out.stderr));
    stdout
}

fn smoke_config(dir: &Path, name: &str, extra: &str) -> String {
    let path = dir.join(format!("{name}.toml"));
    let text = format!(
        "env = \"acrobot\"\nout_dir = \"{}\"\nseeds = [0]\n\
         trainer.total_steps = 1100\ntrainer.eval_episodes = 2\ntrainer.hidden = [16, 16]\n\
         ppo.n_steps = 128\nppo.epochs = 2\nmppi.samples = 20\nmppi.horizon = 5\n{extra}",
        dir.join(name).display()
    );
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

#[test]
fn train_eval_analyze_plot() {
    let tmp = tempfile::tempdir().unwrap();
    let a = smoke_config(tmp.path(), "baseline", "mode = \"ppo-baseline\"\n");
    let b = smoke_config(tmp.path(), "mppi", "mode = \"ppo-mppi\"\n");
    ok(&hrlmppi(&["train", "--config", &a, "--seeds", "1,2"]));
    ok(&hrlmppi(&["train", "--config", &b, "--seeds", "1,2"]));
    for run in ["baseline", "mppi"] {
        for s in [1, 2] {
            let d = tmp.path().join(run).join(format!("seed_{s}"));
            for f in ["metrics.csv", "eval.csv", "checkpoint.bin"] {
                assert!(d.join(f).exists(), "{}", d.join(f).display());
            }
        }
    }

    let before = std::fs::read(tmp.path().join("mppi/seed_1/eval.csv")).unwrap();
    ok(&hrlmppi(&["eval", "--config", &b, "--seeds", "1,2"]));
    let after = std::fs::read(tmp.path().join("mppi/seed_1/eval.csv")).unwrap();
    assert_eq!(before, after, "re-evaluation of the saved checkpoint must reproduce eval.csv");

    let out = tmp.path().join("report");
    let o = out.display().to_string();
    ok(&hrlmppi(&["analyze", "--config", &a, "--config", &b, "--seeds", "1,2", "--out", &o]));
    let summary = read_csv(&out.join("summary.csv")).unwrap();
    assert_eq!(summary.header, ["method", "metric", "mean", "std", "runs"]);
    assert!(summary.rows.iter().any(|r| r[0] == "mppi" && r[1] == "success"));
    let welch = read_csv(&out.join("welch.csv")).unwrap();
    assert_eq!(welch.rows.len(), 2);

    ok(&hrlmppi(&["plot", "--config", &a, "--config", &b, "--seeds", "1,2", "--out", &o]));
    for f in ["reward.svg", "rho.svg"] {
        let svg = std::fs::read_to_string(out.join(f)).unwrap();
        assert_eq!(svg.matches("<polygon").count(), 2, "{f}");
    }
}

#[test]
fn bound_with_zero_rho_matches_library() {
    let tmp = tempfile::tempdir().unwrap();
    let c =
        smoke_config(tmp.path(), "b", "rho.rho0 = 0.0\nbound.span_r = 51.0\nbound.r_max = 51.0\nbound.span_g = 10.0\n");
    let stdout = ok(&hrlmppi(&["bound", "--config", &c]));
    let total: f64 = stdout.lines().find_map(|l| l.strip_prefix("bound ")).expect("bound line").parse().unwrap();
    let expected = theorem_bound(&BoundInputs {
        rho: 0.0,
        alpha_p: 0.1,
        alpha_r: 0.05,
        horizon: 5,
        gamma: 0.99,
        span_r: 51.0,
        r_max: 51.0,
        span_g: 10.0,
        d_u: 2.0,
        lambda_max: 2.0,
    })
    .unwrap();
    assert!((total - expected).abs() <= 1e-8 * expected.abs(), "{total} vs {expected}");
    let tail_plus_sampling = 51.0 * 0.99f64.powi(5) / 0.01 + 10.0 * 2.0 * (5.0 / 4.0 * 2.0f64).sqrt();
    assert!((expected - tail_plus_sampling).abs() < 1e-9);
}

#[test]
fn config_errors_exit_nonzero_with_line() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("bad.toml");
    std::fs::write(&p, "env = \"acrobot\"\nrho.mode = \"adaptive\"\nrho.lambda = 1.2\n").unwrap();
    let out = hrlmppi(&["train", "--config", p.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3") && err.contains("lambda"), "{err}");
}
