//! `infrasim` command-line tool.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime failure (including a log
//! that does not replay).

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use infrasim::bench::{generate_predefined, run_benchmark};
use infrasim::io::log::{read_episode_log, write_episode_log};
use infrasim::io::road::{ingest_road_network, parse_road_network, sample_network, IngestRule};
use infrasim::io::scenario::{fingerprint, read_scenario_file, scenario_to_string};
use infrasim::sim::{replay_log, run_episode, EpisodeOptions, ScenarioConfig};
use infrasim::{Error, PolicySpec};

#[derive(Parser)]
#[command(name = "infrasim", version, about = "Simulate maintenance of large infrastructure fleets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Run one episode and write its log.
    Simulate {
        /// Predefined scenario name or path to a scenario file.
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value = "no-action")]
        policy: String,
        /// Episode seed; defaults to the scenario's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Where to write the episode log (JSON lines). Defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the summary as JSON to this file.
        #[arg(long)]
        summary: Option<PathBuf>,
        #[arg(long)]
        include_true_state: bool,
        /// Stamp header and records with wall-clock times.
        #[arg(long)]
        timestamps: bool,
    },
    /// Run many seeded episodes and report aggregate metrics.
    Benchmark {
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value = "no-action")]
        policy: String,
        #[arg(long, default_value_t = 10)]
        runs: usize,
        /// First run seed; run i uses seed + i. Also seeds predefined scenario generation.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
        /// Also write the per-run table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Also write the full report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Write a predefined scenario file.
    Generate {
        name: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convert a road network into a scenario file.
    Ingest {
        /// Road network file; omit to use the bundled sample.
        input: Option<PathBuf>,
        /// Ingestion rule as JSON; unspecified fields keep their defaults.
        #[arg(long)]
        rule: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Start the HTTP session service.
    Serve {
        #[arg(long, env = "INFRASIM_BIND", default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        #[arg(long, env = "INFRASIM_MAX_SESSIONS", default_value_t = 64)]
        max_sessions: usize,
        /// Sessions are restored from and saved to this file.
        #[arg(long, env = "INFRASIM_SNAPSHOT")]
        snapshot: Option<PathBuf>,
    },
    /// Check that a log replays exactly through the simulator.
    Replay { log: PathBuf },
}

fn load_scenario(spec: &str, seed: u64) -> Result<ScenarioConfig, Error> {
    let path = Path::new(spec);
    if path.exists() {
        read_scenario_file(path)
    } else {
        generate_predefined(spec, seed)
    }
}

fn write_text(out: Option<&Path>, text: &str) -> Result<(), Error> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    s
}

fn run(command: Command) -> Result<ExitCode, Error> {
    match command {
        Command::Simulate {
            scenario,
            policy,
            seed,
            out,
            summary,
            include_true_state,
            timestamps,
        } => {
            let config = load_scenario(&scenario, seed.unwrap_or(0))?;
            let seed = seed.unwrap_or(config.master_seed);
            let mut p = infrasim::policy_from_descriptor(&policy)?;
            let opts = EpisodeOptions {
                include_true_state,
                timestamps,
            };
            let log = run_episode(Arc::new(config), p.as_mut(), seed, &opts)?;
            match &out {
                Some(path) => {
                    let w = write_episode_log(&log, BufWriter::new(File::create(path)?))?;
                    w.into_inner().map_err(|e| Error::Io(e.into_error()))?.sync_all()?;
                }
                None => {
                    let _ = write_episode_log(&log, std::io::stdout().lock())?;
                }
            }
            let footer = log.footer.as_ref().expect("finished episodes carry a summary");
            let report = serde_json::json!({
                "fingerprint": log.header.fingerprint,
                "seed": seed,
                "policy": log.header.policy,
                "summary": footer,
            });
            if let Some(path) = summary {
                std::fs::write(path, to_json(&report))?;
            }
            if out.is_some() {
                print!("{}", to_json(&report));
            }
        }
        Command::Benchmark {
            scenario,
            policy,
            runs,
            seed,
            jobs,
            format,
            csv,
            json,
        } => {
            let config = load_scenario(&scenario, seed)?;
            let spec: PolicySpec = policy.parse()?;
            let report = run_benchmark(&config, &spec, runs, seed, jobs)?;
            if let Some(path) = csv {
                std::fs::write(path, report.to_csv()?)?;
            }
            if let Some(path) = json {
                std::fs::write(path, to_json(&report))?;
            }
            let text = match format {
                Format::Table => report.to_table(),
                Format::Csv => report.to_csv()?,
                Format::Json => to_json(&report),
            };
            write_text(None, &text)?;
        }
        Command::Generate { name, seed, out } => {
            let config = generate_predefined(&name, seed)?;
            write_text(out.as_deref(), &scenario_to_string(&config))?;
            if out.is_some() {
                println!("{} {}", config.name, fingerprint(&config));
            }
        }
        Command::Ingest { input, rule, out } => {
            let net = match input {
                Some(p) => parse_road_network(BufReader::new(File::open(p)?))?,
                None => sample_network(),
            };
            let rule: IngestRule = match rule {
                Some(p) => serde_json::from_slice(&std::fs::read(p)?)?,
                None => IngestRule::default(),
            };
            let config = ingest_road_network(&net, &rule)?;
            write_text(out.as_deref(), &scenario_to_string(&config))?;
            if out.is_some() {
                println!(
                    "{} vertices, {} edges -> {} components ({})",
                    net.vertices.len(),
                    net.edges.len(),
                    config.n_components(),
                    fingerprint(&config)
                );
            }
        }
        Command::Serve {
            bind,
            max_sessions,
            snapshot,
        } => {
            let _ = tracing_subscriber::fmt()
                .with_env_filter(
                    tracing_subscriber::EnvFilter::try_from_default_env()
                        .unwrap_or_else(|_| "info".into()),
                )
                .try_init();
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(infrasim_service::serve(infrasim_service::ServiceConfig {
                bind,
                max_sessions,
                snapshot_path: snapshot,
            }))?;
        }
        Command::Replay { log } => {
            let log = read_episode_log(BufReader::new(File::open(log)?))?;
            let outcome = replay_log(&log)?;
            if outcome.is_faithful() {
                println!(
                    "ok: {} steps replayed ({})",
                    outcome.steps_checked, log.header.fingerprint
                );
            } else {
                if let Some(d) = &outcome.first_divergence {
                    println!("diverged at step {}: {}", d.step, d.field);
                }
                if let Some(i) = outcome.broken_digest {
                    println!("digest chain broken at record {i}");
                }
                return Ok(ExitCode::from(2));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
