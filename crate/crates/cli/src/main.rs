//! Command-line front end: run experiments (presets or config files), solve
//! committee/weight problems for given competencies, and verify the solver
//! oracles against each other.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use votemix::harness::{
    emit_csv, emit_metadata, emit_summary, load_config, preset, preset_names, run_experiment,
    verify_oracles, Algorithm, ConfigFile, ExperimentConfig,
};
use votemix::mip::solve_optimal_weights;
use votemix::votemath::{log_odds_weights, oec_prefix};

#[derive(Parser)]
#[command(
    name = "votemix",
    version,
    about = "Online committee voting experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a preset and/or a JSON config file.
    Run {
        /// JSON config path; may name a preset and override its fields.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Preset name (SE1..SE3, SC1..SC3, WV1..WV3, WZ1..WZ3, WS4..WS6,
        /// WE4..WE6, WG1..WG3, ZG1..ZG3, CS1..CS3, CC1..CC3, WB1..WB3,
        /// ZB1..ZB3).
        #[arg(long)]
        preset: Option<String>,
        /// Override the algorithm.
        #[arg(long)]
        algo: Option<String>,
        /// Override the trial count.
        #[arg(long)]
        trials: Option<u64>,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the horizon T.
        #[arg(long)]
        horizon: Option<u64>,
        /// Output directory for regret.csv, summary.json, metadata.json.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Permit remote experts to reach the network.
        #[arg(long)]
        allow_network: bool,
    },
    /// Print the optimal egalitarian committee and weight solution for a
    /// competency vector.
    Solve {
        /// Comma-separated competencies, e.g. 0.332,0.775,0.881
        #[arg(long)]
        p: String,
        /// Quota; defaults to N/2.
        #[arg(long)]
        quota: Option<f64>,
    },
    /// Run the oracle-equivalence suites and report pass/fail.
    Verify {
        /// Random instances per suite.
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// List available presets.
    Presets,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            preset: preset_name,
            algo,
            trials,
            seed,
            horizon,
            out,
            allow_network,
        } => run(
            config,
            preset_name,
            algo,
            trials,
            seed,
            horizon,
            out,
            allow_network,
        ),
        Command::Solve { p, quota } => solve(&p, quota),
        Command::Verify { samples, seed } => verify(samples, seed),
        Command::Presets => {
            for name in preset_names() {
                let cfg = preset(name).expect("preset table is self-consistent");
                println!(
                    "{name}: algo={} n={} T={} domain={}",
                    cfg.algo,
                    cfg.experts.len(),
                    cfg.horizon,
                    cfg.domain
                );
            }
            Ok(())
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn run(
    config_path: Option<PathBuf>,
    preset_name: Option<String>,
    algo: Option<String>,
    trials: Option<u64>,
    seed: Option<u64>,
    horizon: Option<u64>,
    out: Option<PathBuf>,
    allow_network: bool,
) -> Result<()> {
    let mut cfg: ExperimentConfig = match (&config_path, &preset_name) {
        (Some(path), None) => load_config(path).context("loading config")?,
        (None, Some(name)) => preset(name)?,
        (Some(path), Some(name)) => {
            // Preset base with file overrides layered on top.
            let text = std::fs::read_to_string(path).context("reading config")?;
            let mut file: ConfigFile = serde_json::from_str(&text).context("parsing config")?;
            if file.preset.is_none() {
                file.preset = Some(name.clone());
            }
            file.resolve()?
        }
        (None, None) => bail!("provide --config and/or --preset"),
    };
    if let Some(a) = algo {
        cfg.algo = match a.as_str() {
            "see" => Algorithm::See,
            "wmv" => Algorithm::Wmv,
            "cucb" => Algorithm::Cucb,
            "zooming" => Algorithm::Zooming,
            other => bail!("unknown algorithm {other:?}"),
        };
    }
    if let Some(t) = trials {
        cfg.trials = t;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(h) = horizon {
        cfg.horizon = h;
    }
    if let Some(o) = out {
        cfg.output_dir = Some(o);
    }
    if !allow_network
        && cfg
            .experts
            .iter()
            .any(|e| matches!(e, votemix::experts::ExpertSpec::Remote { .. }))
    {
        bail!("config uses remote experts; pass --allow-network to permit outbound requests");
    }
    cfg.validate()?;

    let result = run_experiment(&cfg)?;
    if let Some(dir) = &cfg.output_dir {
        std::fs::create_dir_all(dir)?;
        emit_csv(&result.traces, &dir.join("regret.csv"))?;
        emit_summary(
            std::slice::from_ref(&result.summary),
            &dir.join("summary.json"),
        )?;
        emit_metadata(&cfg, &dir.join("metadata.json"))?;
        eprintln!("wrote {}", dir.display());
    }
    let s = &result.summary;
    println!(
        "{} algo={} n={} |E*|={} P*={:.4} gap={:.4} T={} trials={} R_T={:.2} (stderr {:.2}) P_hat={:.4}",
        s.name,
        s.algorithm,
        s.n,
        s.optimal_committee_size,
        s.optimal_value,
        s.min_gap,
        cfg.horizon,
        cfg.trials,
        s.mean_regret,
        s.stderr_regret,
        s.empirical_accuracy
    );
    Ok(())
}

fn solve(p_arg: &str, quota: Option<f64>) -> Result<()> {
    let mut p: Vec<f64> = p_arg
        .split(',')
        .map(|s| s.trim().parse::<f64>().context("parsing competency"))
        .collect::<Result<_>>()?;
    if p.is_empty() {
        bail!("empty competency vector");
    }
    p.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let quota = quota.unwrap_or(p.len() as f64 / 2.0);

    let committee = oec_prefix(&p)?;
    println!("competencies (sorted): {p:?}");
    println!(
        "optimal egalitarian committee: top-{} value={:.6}",
        committee.members.len(),
        committee.value
    );
    match log_odds_weights(&p) {
        Ok(w) => println!("log-odds weights: {w:?}"),
        Err(e) => println!("log-odds weights: unavailable ({e})"),
    }
    let sol = solve_optimal_weights(&p, quota)?;
    println!(
        "optimal weighted solution: quota={quota} objective={:.6} margin={:.3e}",
        sol.objective, sol.certificate
    );
    println!("theta: {:?}", sol.theta);
    let passing: Vec<String> = (0..sol.family.indicators().len())
        .filter(|&m| sol.family.passes(m))
        .map(|m| format!("{m:b}"))
        .collect();
    println!(
        "passing coalitions ({}): {}",
        passing.len(),
        passing.join(" ")
    );
    Ok(())
}

fn verify(samples: usize, seed: u64) -> Result<()> {
    let reports = verify_oracles(samples, samples, samples.min(200), seed);
    let mut all_ok = true;
    for r in &reports {
        let status = if r.passed { "PASS" } else { "FAIL" };
        println!("[{status}] {} — {}", r.name, r.detail);
        all_ok &= r.passed;
    }
    if !all_ok {
        bail!("oracle verification failed");
    }
    Ok(())
}
