use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mugsim::engine::run::{digest_file, run_in_memory, run_to_dir_paced, RunSummary};
use mugsim::scenario::{load_scenario_with, validate, ScenarioConfig};
use mugsim::World;
use mugsim_gateway::GatewayConfig;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

#[derive(Parser)]
#[command(name = "mugsim", version, about = "Glider, vessel and UAV mission simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario to completion and write its outputs.
    Run(RunArgs),
    /// Check a scenario file without running it.
    Validate {
        /// Scenario file (TOML).
        config: PathBuf,
        /// Reject unknown fields even if the file allows them.
        #[arg(long)]
        strict: bool,
    },
    /// Print the telemetry digest of a telemetry file, or of a scenario run
    /// in memory.
    ReplayHash {
        /// A telemetry.jsonl file or a scenario file.
        path: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Serve a live, paced run to operators over HTTP and WebSocket.
    Serve(ServeArgs),
}

#[derive(Args, Clone, Default)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    /// Simulated duration, s.
    #[arg(long)]
    duration: Option<f64>,
    /// Telemetry row spacing, s.
    #[arg(long)]
    decimation: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (TOML).
    config: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
    /// Pace the run against the wall clock.
    #[arg(long)]
    realtime: bool,
    /// Real-time multiplier used with --realtime.
    #[arg(long, default_value_t = 1.0)]
    speed: f64,
    /// Output directory. Defaults to the scenario's output.dir, then ./out.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Attach {
    /// Start stepping at once.
    Live,
    /// Wait for RESUME_SIM.
    Paused,
}

#[derive(Args)]
struct ServeArgs {
    /// Scenario file (TOML).
    config: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
    #[arg(long, env = "MUGSIM_BIND", default_value = "127.0.0.1:8080")]
    bind: SocketAddr,
    #[arg(long, env = "MUGSIM_ATTACH", value_enum, default_value_t = Attach::Live)]
    attach: Attach,
    /// Real-time multiplier.
    #[arg(long, env = "MUGSIM_SPEED", default_value_t = 1.0)]
    speed: f64,
    /// Include ground truth in snapshots. Development only.
    #[arg(long, env = "MUGSIM_DEBUG_TRUTH")]
    debug_truth: bool,
}

fn load(path: &Path, strict: Option<bool>, o: &Overrides) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let loaded = load_scenario_with(&text, strict).with_context(|| format!("loading {}", path.display()))?;
    for w in &loaded.warnings {
        eprintln!("warning: {}: {w}", path.display());
    }
    let mut c = loaded.config;
    if let Some(seed) = o.seed {
        c.simulation.seed = seed;
    }
    if let Some(d) = o.duration {
        c.simulation.duration = d;
    }
    if let Some(d) = o.decimation {
        c.simulation.telemetry_interval = d;
    }
    validate(&c).context("after command-line overrides")?;
    Ok(c)
}

fn print_summary(s: &RunSummary) {
    println!("seed {}  planner {}  sim time {:.0} s  ticks {}", s.seed, s.planner, s.sim_time, s.ticks);
    if let Some(f) = &s.fault {
        println!("FAULT: {f}");
    }
    let st = &s.stats;
    println!(
        "sorties: {} launched, {} deferred, {} refused; {} pickups, {} deployments, {} emergency landings",
        st.sorties_launched, st.sorties_deferred, st.forced_refused, st.pickups, st.deployments, st.emergency_lands
    );
    let c = &s.comms;
    println!(
        "messages: {} created, {} delivered, {} dropped, {} in flight",
        c.created, c.delivered, c.dropped, c.in_flight
    );
    println!("energy audit residual: {:.3e} Wh", s.energy_residual_wh);
    for v in &s.vehicles {
        let endurance = v.endurance_s.map(|e| format!("  endurance {:.2} d", e / 86_400.0)).unwrap_or_default();
        println!(
            "  {:<8} {:<18} {:>7.2}/{:<7.2} Wh  yos {:<4}{endurance}",
            v.vehicle.as_str(),
            v.final_mode,
            v.final_charge_wh,
            v.capacity_wh,
            v.yo_count
        );
    }
    println!("digest {}  ({} lines)", s.digest, s.telemetry_lines);
}

fn run(args: RunArgs) -> Result<()> {
    let c = load(&args.config, None, &args.overrides)?;
    if args.realtime && !(args.speed.is_finite() && args.speed > 0.0) {
        bail!("--speed must be positive, got {}", args.speed);
    }
    let out = args
        .out
        .or_else(|| c.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let period = Duration::from_secs_f64(c.simulation.dt / args.speed);
    let mut deadline = Instant::now();
    let realtime = args.realtime;
    let summary = run_to_dir_paced(c, &out, |_| {
        if realtime {
            deadline += period;
            std::thread::sleep(deadline.saturating_duration_since(Instant::now()));
        }
    })
    .with_context(|| format!("running into {}", out.display()))?;
    print_summary(&summary);
    println!("outputs in {}", out.display());
    if let Some(f) = summary.fault {
        bail!("simulation fault: {f}");
    }
    Ok(())
}

fn replay_hash(path: &Path, overrides: &Overrides) -> Result<()> {
    let is_telemetry = path.extension().is_some_and(|e| e == "jsonl");
    let (digest, lines) = if is_telemetry {
        digest_file(path).with_context(|| format!("hashing {}", path.display()))?
    } else {
        let (_, s) = run_in_memory(load(path, None, overrides)?)?;
        (s.digest, s.telemetry_lines)
    };
    println!("{digest}  {lines}");
    Ok(())
}

async fn serve(args: ServeArgs) -> Result<()> {
    let c = load(&args.config, None, &args.overrides)?;
    let world = World::new(c)?;
    let config = GatewayConfig {
        debug_truth: args.debug_truth,
        start_paused: args.attach == Attach::Paused,
        speed: args.speed,
        ..GatewayConfig::default()
    };
    eprintln!("serving on http://{}  (GET /health /snapshot, POST /command, WS /stream)", args.bind);
    let stop = async {
        // without a signal handler we simply run until killed
        if tokio::signal::ctrl_c().await.is_err() {
            std::future::pending::<()>().await;
        }
    };
    let world = mugsim_gateway::serve(world, config, args.bind, stop).await?;
    eprintln!("stopped at t={} s", world.time);
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => run(args),
        Command::Validate { config, strict } => {
            let c = load(&config, strict.then_some(true), &Overrides::default())?;
            println!(
                "{}: ok ({} gliders, {} UAVs, {:.0} s at dt {} s)",
                config.display(),
                c.mug.len(),
                c.uav.len(),
                c.simulation.duration,
                c.simulation.dt
            );
            Ok(())
        }
        Command::ReplayHash { path, overrides } => replay_hash(&path, &overrides),
        Command::Serve(args) => tokio::runtime::Runtime::new()?.block_on(serve(args)),
    }
}
