use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use geclab::agents::tuning::default_epsilon;
use geclab::complexity::{gec_certificate, BurnIn};
use geclab::decision::{Environment, TabularPomdp};
use geclab::hypothesis::{plan_history_tree, plan_mdp, HISTORY_NODE_CAP};
use geclab::io::{load_environment, load_psr, load_trace, validate_file};
use geclab::psr::{
    check_generalized_regular, psr_from_decodable_pomdp, psr_from_weakly_revealing_pomdp, psr_rank_and_delta, Decoder,
};
use geclab_bench::acceptance;
use geclab_bench::config::{parse_seeds, ExperimentConfig};
use geclab_bench::experiment::{run_experiment, Experiment};
use serde_json::json;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "geclab", version, about = "Posterior-sampling agents and complexity certificates for tabular RL")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a TOML config (keys can be overridden by GECLAB_<KEY>).
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (default: `out_dir` from the config, else `./out`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed count `N` or comma-separated list.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Rank, alpha and delta certificate of the PSR of a POMDP or PSR file.
    CertifyPsr {
        file: PathBuf,
        /// Revealing window `m` for POMDP inputs.
        #[arg(long, default_value_t = 1)]
        revealing: usize,
        /// Treat a POMDP input as block-decodable (decoder read off the emission supports).
        #[arg(long)]
        decodable: bool,
        #[arg(long, default_value_t = 100_000)]
        column_cap: usize,
    },
    /// GEC certificate of a recorded trace.
    CertifyGec {
        trace: PathBuf,
        #[arg(long, value_enum, default_value_t = Burn::Generic)]
        burn_in: Burn,
        /// Defaults to `1 / sqrt(H T)`.
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long, default_value_t = 2.0)]
        factor: f64,
    },
    /// Optimal value and policy of an environment.
    Plan { env: PathBuf },
    /// Validate environment, class, PSR or trace files.
    Validate {
        files: Vec<PathBuf>,
        /// Environment to build class files against.
        #[arg(long)]
        env: Option<PathBuf>,
    },
    /// Run the acceptance suite.
    Acceptance {
        /// Criteria to run (default: all).
        #[arg(long, value_delimiter = ',')]
        only: Vec<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Burn {
    None,
    Generic,
    Linear,
    SqrtDht,
}

fn block_decoder(p: &TabularPomdp) -> Result<Decoder> {
    let partition = p
        .emissions
        .iter()
        .enumerate()
        .map(|(h, layer)| {
            (0..p.observations)
                .map(|o| {
                    let support: Vec<usize> = (0..p.states).filter(|&s| layer[s][o] > 0.0).collect();
                    match support.as_slice() {
                        [s] => Ok(*s),
                        [] => Ok(0),
                        _ => bail!("step {h}: observation {o} is emitted by states {support:?}, not decodable"),
                    }
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Decoder::block(partition))
}

fn print_json(v: &impl serde::Serialize) -> Result<()> {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn run(cmd: Command) -> Result<bool> {
    match cmd {
        Command::Run {
            config,
            out,
            seeds,
            threads,
        } => {
            let mut cfg = ExperimentConfig::load(&config, std::env::vars())?;
            if let Some(s) = seeds {
                cfg.seeds = parse_seeds(&s)?;
            }
            if threads.is_some() {
                cfg.threads = threads;
            }
            let exp = Experiment::from_config(&cfg)?;
            let out = out.or(cfg.out_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
            let summary = run_experiment(&exp, &cfg.seed_list(), &out, cfg.threads)?;
            for c in &summary.checkpoints {
                println!(
                    "T={:>7}  regret {:>10.4} ± {:<9.4} per-episode {:.5}  mass on truth {:.3}",
                    c.t, c.regret_cum.mean, c.regret_cum.std, c.regret_per_episode.mean, c.mass_on_truth.mean
                );
            }
            eprintln!("wrote {}", out.display());
            Ok(true)
        }
        Command::CertifyPsr {
            file,
            revealing,
            decodable,
            column_cap,
        } => {
            let text = std::fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
            let is_env = serde_json::from_str::<serde_json::Value>(&text)?.get("type").is_some();
            let (psr, latent) = if is_env {
                let Environment::Pomdp(p) = load_environment(&file)? else {
                    bail!("{} is not a POMDP", file.display());
                };
                let psr = if decodable {
                    psr_from_decodable_pomdp(&p, &block_decoder(&p)?)?
                } else {
                    psr_from_weakly_revealing_pomdp(&p, revealing)?
                };
                (psr, Some(p))
            } else {
                (load_psr(&file)?, None)
            };
            let cert = psr_rank_and_delta(&psr, latent.as_ref(), column_cap)?;
            let general = check_generalized_regular(&psr, HISTORY_NODE_CAP)?;
            print_json(&json!({ "certificate": cert, "generalized": general }))?;
            Ok(true)
        }
        Command::CertifyGec {
            trace,
            burn_in,
            eps,
            factor,
        } => {
            let t = load_trace(&trace)?;
            let eps = eps.unwrap_or_else(|| default_epsilon(t.horizon, t.len().max(1)));
            let burn = match burn_in {
                Burn::None => BurnIn::None,
                Burn::Generic => BurnIn::Generic { eps },
                Burn::Linear => BurnIn::Linear { factor, eps },
                Burn::SqrtDht => BurnIn::SqrtDht,
            };
            print_json(&gec_certificate(&t, burn))?;
            Ok(true)
        }
        Command::Plan { env } => {
            match load_environment(&env)? {
                Environment::Mdp(m) => {
                    let s = plan_mdp(&m);
                    print_json(&json!({ "value": s.value, "policy": s.policy, "values": s.values }))?;
                }
                Environment::Pomdp(p) => {
                    let (value, policy) = plan_history_tree(&p, HISTORY_NODE_CAP)?;
                    print_json(&json!({ "value": value, "policy": policy }))?;
                }
            }
            Ok(true)
        }
        Command::Validate { files, env } => {
            let env = env.map(|p| load_environment(&p)).transpose()?;
            let mut ok = true;
            for f in &files {
                match validate_file(f, env.as_ref()) {
                    Ok(msg) => println!("ok   {}: {msg}", f.display()),
                    Err(e) => {
                        println!("FAIL {e}");
                        ok = false;
                    }
                }
            }
            Ok(ok)
        }
        Command::Acceptance { only } => {
            let ids = if only.is_empty() { (1..=10).collect() } else { only };
            let mut suite = acceptance::Suite::default();
            let mut ok = true;
            for id in ids {
                let r = suite.run(id);
                println!("{r}");
                ok &= r.pass;
            }
            Ok(ok)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
