//! Command-line harness for the d-DSA network simulator.
//!
//! Exit codes: 0 success, 1 configuration error, 2 run failure,
//! 3 audit violation.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use ddsa_core::audit::{audit_event_log, conservation_line};
use ddsa_core::baseline::{build_stb_static, RouteTable};
use ddsa_core::config::{Algorithm, RunConfig};
use ddsa_core::engine::{build_world, run, RunOutput};
use ddsa_core::events::EventLog;
use ddsa_core::metrics::{write_metrics_csv, write_timeseries_csv};
use ddsa_core::sweep::{run_sweep, write_sweep_outputs, SweepSpec};

#[derive(Parser)]
#[command(
    name = "ddsa-sim",
    version,
    about = "Discrete-event simulator for diverse band-aware dynamic spectrum access networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Run configuration (JSON). Omitted or empty file = stock defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the seed from the configuration.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Executes one run and writes events.csv, metrics.csv and
    /// timeseries.csv.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory (created if missing).
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        /// Also dump node positions/roles and PU placements.
        #[arg(long)]
        dump_scenario: bool,
        /// Also dump the generated traffic trace.
        #[arg(long)]
        dump_trace: bool,
        /// Also dump per-node Q-tables (BARD runs).
        #[arg(long)]
        dump_qtables: bool,
    },
    /// Executes a sweep spec: algorithms x values x rounds.
    Sweep {
        /// Sweep specification (JSON).
        #[arg(long)]
        spec: PathBuf,
        /// Output directory (created if missing).
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        /// Overrides the number of rounds in the spec.
        #[arg(long)]
        rounds: Option<u64>,
        /// Overrides the base seed in the spec.
        #[arg(long)]
        seed_base: Option<u64>,
    },
    /// Replays the scenario behind an event log and verifies
    /// non-interference, conservation, deadlines and step budgets.
    Audit {
        #[command(flatten)]
        config: ConfigArgs,
        /// Event log CSV produced by `run`.
        events: PathBuf,
    },
    /// Prints (or writes) the baseline least-delay-cost route table.
    Routes {
        #[command(flatten)]
        config: ConfigArgs,
        /// Write CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load_config(args: &ConfigArgs) -> Result<RunConfig, ddsa_core::config::ConfigError> {
    let mut config = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.engine.seed = seed;
    }
    Ok(config)
}

fn dispatch(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Run {
            config,
            out_dir,
            dump_scenario,
            dump_trace,
            dump_qtables,
        } => {
            let config = match load_config(&config) {
                Ok(c) => c,
                Err(e) => return config_error(e),
            };
            let out = run(&config).context("run failed")?;
            write_run_outputs(&config, &out, &out_dir, dump_scenario, dump_trace, dump_qtables)?;
            let m = &out.metrics;
            println!(
                "run complete: {} messages, mdr={}, latency={}, events={}",
                m.messages_generated,
                m.mdr.map(|x| format!("{x:.4}")).unwrap_or_else(|| "n/a".into()),
                m.mean_latency_s
                    .map(|x| format!("{x:.4} s"))
                    .unwrap_or_else(|| "n/a".into()),
                out.log.len()
            );
            println!("{}", conservation_line(m));
            println!("outputs in {}", out_dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep {
            spec,
            out_dir,
            rounds,
            seed_base,
        } => {
            let mut spec = match SweepSpec::load(&spec) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("error: {e}");
                    return Ok(ExitCode::from(1));
                }
            };
            if let Some(r) = rounds {
                spec.rounds = r;
            }
            if let Some(s) = seed_base {
                spec.seed_base = s;
            }
            if let Err(e) = spec.validate() {
                eprintln!("error: {e}");
                return Ok(ExitCode::from(1));
            }
            let output = run_sweep(&spec).context("sweep failed")?;
            write_sweep_outputs(&spec, &output, &out_dir)?;
            println!(
                "sweep complete: {} runs, {} aggregate rows, outputs in {}",
                output.per_run.len(),
                output.aggregates.len(),
                out_dir.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Audit { config, events } => {
            let config = match load_config(&config) {
                Ok(c) => c,
                Err(e) => return config_error(e),
            };
            let file = File::open(&events)
                .with_context(|| format!("cannot open {}", events.display()))?;
            let log = EventLog::read_csv(BufReader::new(file)).context("cannot parse event log")?;
            let report = audit_event_log(&config, &log).context("audit failed to run")?;
            println!(
                "audited {} successful transmissions against {} PUs",
                report.tx_successes_checked,
                config.topology.num_pus
            );
            for (name, list) in [
                ("non-interference", &report.interference_violations),
                ("conservation", &report.conservation_violations),
                ("delivery deadline", &report.latency_violations),
                ("step budget", &report.budget_violations),
            ] {
                if list.is_empty() {
                    println!("{name}: ok");
                } else {
                    println!("{name}: {} violation(s)", list.len());
                    for v in list {
                        println!("  {v}");
                    }
                }
            }
            if report.is_clean() {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(3))
            }
        }
        Command::Routes { config, out } => {
            let config = match load_config(&config) {
                Ok(c) => c,
                Err(e) => return config_error(e),
            };
            let world = build_world(&config).context("cannot build world")?;
            let graph = build_stb_static(
                &world.positions,
                &world.catalog,
                config.traffic_params().packet_size_bits(),
                &world.radio,
            );
            let table = RouteTable::build(&graph, &world.sources, &world.destinations, &world.catalog);
            let mut text = String::from("source,destination,hop_index,next_node,band\n");
            for (s, d, k, next, band) in table.rows() {
                text.push_str(&format!("{s},{d},{k},{next},{band}\n"));
            }
            match out {
                Some(path) => std::fs::write(&path, text)
                    .with_context(|| format!("cannot write {}", path.display()))?,
                None => print!("{text}"),
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn config_error(e: ddsa_core::config::ConfigError) -> anyhow::Result<ExitCode> {
    eprintln!("error: {e}");
    Ok(ExitCode::from(1))
}

fn write_run_outputs(
    config: &RunConfig,
    out: &RunOutput,
    out_dir: &Path,
    dump_scenario: bool,
    dump_trace: bool,
    dump_qtables: bool,
) -> anyhow::Result<()> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("cannot create {}", out_dir.display()))?;

    let events_path = out_dir.join("events.csv");
    let mut w = BufWriter::new(File::create(&events_path)?);
    out.log.write_csv(&mut w, &out.header)?;
    w.flush()?;

    let mut w = BufWriter::new(File::create(out_dir.join("metrics.csv"))?);
    write_metrics_csv(
        &mut w,
        &out.header,
        &config.engine.algorithm.to_string(),
        config.engine.band_restriction,
        &out.metrics,
    )?;
    w.flush()?;

    let mut w = BufWriter::new(File::create(out_dir.join("timeseries.csv"))?);
    write_timeseries_csv(&mut w, &out.header, &out.metrics)?;
    w.flush()?;

    if dump_scenario {
        let mut text = String::from("kind,id,x,y,role_or_band,channel\n");
        for (id, (p, role)) in out
            .summary
            .node_positions
            .iter()
            .zip(&out.summary.node_roles)
            .enumerate()
        {
            text.push_str(&format!(
                "node,{id},{},{},{},\n",
                p.x,
                p.y,
                match role {
                    ddsa_core::topology::NodeRole::Source => "source",
                    ddsa_core::topology::NodeRole::Relay => "relay",
                    ddsa_core::topology::NodeRole::Destination => "destination",
                }
            ));
        }
        for (id, site) in out.summary.pu_sites.iter().enumerate() {
            text.push_str(&format!(
                "pu,{id},{},{},{},{}\n",
                site.position.x, site.position.y, site.band, site.channel
            ));
        }
        std::fs::write(out_dir.join("scenario.csv"), text)?;
    }

    if dump_trace {
        let mut text = String::from("message_id,source,destination,size_mbit,created_at\n");
        for m in &out.traffic {
            text.push_str(&format!(
                "{},{},{},{},{}\n",
                m.id, m.source, m.destination, m.size_mbit, m.created_at
            ));
        }
        std::fs::write(out_dir.join("traffic.csv"), text)?;
    }

    if dump_qtables {
        if let Some(qtables) = &out.qtables {
            let mut text = String::from("node,state_index,action_index,q_value\n");
            for (node, q) in qtables.iter().enumerate() {
                for s in 0..q.num_states() {
                    for a in 0..q.num_actions() {
                        let v = q.q(s, a);
                        if v != 0.0 {
                            text.push_str(&format!("{node},{s},{a},{v}\n"));
                        }
                    }
                }
            }
            std::fs::write(out_dir.join("qtables.csv"), text)?;
        }
    }

    if config.engine.algorithm == Algorithm::Ddsaar {
        if let Some(routes) = &out.routes {
            let mut text = String::from("source,destination,hop_index,next_node,band\n");
            for (s, d, k, next, band) in routes.rows() {
                text.push_str(&format!("{s},{d},{k},{next},{band}\n"));
            }
            std::fs::write(out_dir.join("routes.csv"), text)?;
        }
    }

    Ok(())
}
