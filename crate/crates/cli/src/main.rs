mod plot;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use log::info;
use rayon::prelude::*;

use hrlmppi::analysis::{
    aggregate, curve_from_metrics, estimate_span_g, read_csv, theorem_bound, welch_rows, write_summary, BoundInputs,
};
use hrlmppi::config::{parse_config, RunConfig};
use hrlmppi::envs::{make_env, Environment};
use hrlmppi::fmt::sig9;
use hrlmppi::nn::load_checkpoint;
use hrlmppi::rng::{RngStream, StreamId};
use hrlmppi::trainer::{eval_summary, evaluate, train, write_eval, EvalStreams};

#[derive(Parser)]
#[command(name = "hrlmppi", about = "Hierarchical RL + MPPI co-training experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Run configuration (TOML). `analyze` and `plot` accept several, one per method.
    #[arg(long, required = true)]
    config: Vec<PathBuf>,
    /// Comma-separated seeds overriding the config's `seeds`.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Output directory overriding the config's `out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed; writes metrics.csv, eval.csv and checkpoint.bin per seed.
    Train(Common),
    /// Re-evaluate trained checkpoints; rewrites eval.csv per seed.
    Eval(Common),
    /// Cross-seed summary and Welch tests against the first config.
    Analyze(Common),
    /// Value-error bound for the configured planner and mixing ratio.
    Bound(Common),
    /// SVG reward and influence-ratio curves, mean with a one-std band.
    Plot(Common),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = init_threads().and_then(|_| run(Cli::parse().command)) {
        eprintln!("error: {e:#}");
        return ExitCode::FAILURE;
    }
    ExitCode::SUCCESS
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("HRLMPPI_THREADS") {
        let n: usize =
            v.trim().parse().with_context(|| format!("HRLMPPI_THREADS must be a positive integer, got {v:?}"))?;
        if n == 0 {
            bail!("HRLMPPI_THREADS must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

/// A parsed config with command-line overrides applied.
struct Run {
    name: String,
    cfg: RunConfig,
}

impl Run {
    fn seed_dir(&self, seed: u64) -> PathBuf {
        self.cfg.out_dir.join(format!("seed_{seed}"))
    }
}

fn load(common: &Common) -> Result<Vec<Run>> {
    let multi = common.config.len() > 1;
    common
        .config
        .iter()
        .map(|path| {
            let mut cfg = parse_config(path)?;
            if let Some(s) = &common.seeds {
                if s.is_empty() {
                    bail!("--seeds needs at least one seed");
                }
                cfg.seeds = s.clone();
            }
            // several configs share --out as a parent directory
            match (&common.out, multi) {
                (Some(o), false) => cfg.out_dir = o.clone(),
                (Some(o), true) if cfg.out_dir.is_relative() => cfg.out_dir = o.join(&cfg.out_dir),
                _ => {}
            }
            let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
            Ok(Run { name, cfg })
        })
        .collect()
}

fn single(common: &Common, cmd: &str) -> Result<Run> {
    let mut runs = load(common)?;
    if runs.len() != 1 {
        bail!("{cmd} takes exactly one --config");
    }
    Ok(runs.remove(0))
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Train(c) => cmd_train(&single(&c, "train")?),
        Command::Eval(c) => cmd_eval(&single(&c, "eval")?),
        Command::Bound(c) => cmd_bound(&single(&c, "bound")?),
        Command::Analyze(c) => cmd_analyze(&load(&c)?, &output_dir(&c)),
        Command::Plot(c) => cmd_plot(&load(&c)?, &output_dir(&c)),
    }
}

/// Destination of cross-method outputs.
fn output_dir(c: &Common) -> PathBuf {
    c.out.clone().unwrap_or_else(|| PathBuf::from("analysis"))
}

fn cmd_train(r: &Run) -> Result<()> {
    std::fs::create_dir_all(&r.cfg.out_dir)?;
    std::fs::write(r.cfg.out_dir.join("config.toml"), r.cfg.to_toml()?)?;
    let results: Vec<Result<String>> = r
        .cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let dir = r.seed_dir(seed);
            let out = train(&r.cfg, seed, Some(&dir)).with_context(|| format!("seed {seed}"))?;
            let (s, rew) = eval_summary(&out.eval);
            Ok(format!(
                "seed {seed}: {} steps, {} episodes, eval success {} reward {} -> {}",
                out.steps,
                out.episodes,
                sig9(s),
                sig9(rew),
                dir.display()
            ))
        })
        .collect();
    report(results)
}

fn cmd_eval(r: &Run) -> Result<()> {
    let results: Vec<Result<String>> = r
        .cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let dir = r.seed_dir(seed);
            let ck = load_checkpoint(&dir.join("checkpoint.bin")).with_context(|| format!("seed {seed}"))?;
            let rows = evaluate(&r.cfg, &ck, r.cfg.trainer.eval_episodes, seed, EvalStreams::Final)?;
            write_eval(&dir.join("eval.csv"), &rows)?;
            let (s, rew) = eval_summary(&rows);
            Ok(format!("seed {seed}: success {} reward {}", sig9(s), sig9(rew)))
        })
        .collect();
    report(results)
}

fn report(results: Vec<Result<String>>) -> Result<()> {
    let mut failed = 0;
    for r in results {
        match r {
            Ok(line) => println!("{line}"),
            Err(e) => {
                eprintln!("error: {e:#}");
                failed += 1;
            }
        }
    }
    if failed > 0 {
        bail!("{failed} seed(s) failed");
    }
    Ok(())
}

fn groups(runs: &[Run]) -> Vec<(String, Vec<PathBuf>)> {
    runs.iter().map(|r| (r.name.clone(), r.cfg.seeds.iter().map(|&s| r.seed_dir(s)).collect())).collect()
}

fn cmd_analyze(runs: &[Run], out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let g = groups(runs);
    let rows = aggregate(&g)?;
    write_summary(&out.join("summary.csv"), &rows)?;
    for r in &rows {
        println!("{:<24} {:<14} {} ± {} (n={})", r.method, r.metric, sig9(r.mean), sig9(r.std), r.runs);
    }
    let tests = welch_rows(&g, &["success", "reward"])?;
    let mut w = csv::Writer::from_path(out.join("welch.csv"))?;
    w.write_record(["baseline", "method", "metric", "t", "df", "p"])?;
    for (a, b, m, res) in &tests {
        w.write_record([a.clone(), b.clone(), m.clone(), sig9(res.t), sig9(res.df), sig9(res.p)])?;
        println!("welch {a} vs {b} [{m}]: t={} df={} p={}", sig9(res.t), sig9(res.df), sig9(res.p));
    }
    w.flush()?;
    info!("wrote {} and {}", out.join("summary.csv").display(), out.join("welch.csv").display());
    Ok(())
}

fn cmd_plot(runs: &[Run], out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    for (column, kind, file, ylabel) in
        [("reward", "episode", "reward.svg", "episode reward"), ("rho", "update", "rho.svg", "influence ratio")]
    {
        let mut series = Vec::new();
        for r in runs {
            let mut curves = Vec::new();
            for &seed in &r.cfg.seeds {
                let path = r.seed_dir(seed).join("metrics.csv");
                curves.push(curve_from_metrics(&read_csv(&path)?, column, kind)?);
            }
            series.push(plot::Series::from_curves(&r.name, &curves, 100));
        }
        let svg = plot::render(&series, "environment steps", ylabel);
        let path = out.join(file);
        std::fs::write(&path, svg)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_bound(r: &Run) -> Result<()> {
    let cfg = &r.cfg;
    let env = make_env(cfg.env, cfg.track_file.as_deref())?;
    let mppi = cfg.mppi();
    let b = &cfg.bound;
    let seed = cfg.seeds[0];
    let mut rng = RngStream::new(seed, StreamId::EnvNoise);
    let starts: Vec<Vec<f64>> = (0..b.starts).map(|_| env.model_state(&env.reset(&mut rng))).collect();
    let spec = env.spec();

    let mut notes = Vec::new();
    let (span_r, r_max) = match (b.span_r, b.r_max) {
        (Some(s), Some(m)) => (s, m),
        (s, m) => {
            let (lo, hi) = reward_range(env.as_ref(), &starts, mppi.horizon, b.rollouts_per_start, &mut rng);
            notes.push("span_r/r_max: empirical (random-control model rollouts)");
            (s.unwrap_or(hi - lo), m.unwrap_or(lo.abs().max(hi.abs())))
        }
    };
    let span_g = match b.span_g {
        Some(v) => v,
        None => {
            notes.push("span_g: empirical (random-control model rollouts)");
            let mut g_rng = RngStream::new(seed, StreamId::MppiNoise);
            estimate_span_g(
                env.model(),
                &starts,
                &spec.control_low,
                &spec.control_high,
                mppi.horizon,
                cfg.ppo.gamma,
                b.rollouts_per_start,
                &mut g_rng,
            )
        }
    };
    let inputs = BoundInputs {
        rho: cfg.rho.rho0,
        alpha_p: b.alpha_p,
        alpha_r: b.alpha_r,
        horizon: mppi.horizon,
        gamma: cfg.ppo.gamma,
        span_r,
        r_max,
        span_g,
        d_u: spec.control_diameter(),
        lambda_max: 1.0 / mppi.noise_sigma,
    };
    let terms = inputs.terms()?;
    let total = theorem_bound(&inputs)?;
    println!("inputs: {inputs:?}");
    for n in notes {
        println!("note: {n}");
    }
    println!("dynamics {}", sig9(terms.dynamics));
    println!("reward {}", sig9(terms.reward));
    println!("tail {}", sig9(terms.tail));
    println!("sampling {}", sig9(terms.sampling));
    println!("bound {}", sig9(total));
    Ok(())
}

/// Smallest and largest one-step model reward under uniform random controls.
fn reward_range(
    env: &dyn Environment,
    starts: &[Vec<f64>],
    horizon: usize,
    rollouts: usize,
    rng: &mut RngStream,
) -> (f64, f64) {
    let spec = env.spec();
    let model = env.model();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for x0 in starts {
        for _ in 0..rollouts {
            let mut x = x0.clone();
            for _ in 0..horizon {
                let u: Vec<f64> =
                    spec.control_low.iter().zip(&spec.control_high).map(|(l, h)| rng.uniform_range(*l, *h)).collect();
                let next = model.step(&x, &u);
                if next.iter().any(|v| !v.is_finite()) {
                    break;
                }
                let r = model.transition_reward(&x, &u, &next);
                lo = lo.min(r);
                hi = hi.max(r);
                x = next;
            }
        }
    }
    if hi >= lo {
        (lo, hi)
    } else {
        (0.0, 0.0)
    }
}
