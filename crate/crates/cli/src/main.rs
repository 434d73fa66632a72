use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use metroqkd_core::crypto_app::{transfer, CryptoError, KeySource, RefreshPolicy, SecureSession};
use metroqkd_core::fixtures::table2_records;
use metroqkd_core::network::{build_topology, simulate_network, KeyPool, NetworkError, ScenarioConfig, Topology};
use metroqkd_core::records::RecordError;
use metroqkd_core::report::{
    analyze_records, network_report, pool_rows, render_csv, render_demo_text, render_json, render_pools_csv, render_text, to_json,
    DemoTranscript, RunReport,
};
use metroqkd_core::{load_measurement_records, Fluctuation, NodeId, ProtocolParams};

mod exit {
    pub const IO: u8 = 1;
    pub const PARSE: u8 = 2;
    pub const VALIDATION: u8 = 3;
    pub const NO_SECURE_KEY: u8 = 4;
    pub const STARVATION: u8 = 5;
    pub const SCENARIO: u8 = 6;
}

#[derive(Parser)]
#[command(name = "metroqkd", version, about = "Decoy-state QKD network analysis and simulation")]
struct Cli {
    /// Output format.
    #[arg(long, value_enum, global = true, default_value_t = Format::Text)]
    format: Format,
    /// Use the finite-statistics gain bounds instead of the measured gains.
    #[arg(long, global = true)]
    pessimistic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Key rates from per-route measurement records (CSV).
    Analyze { records: PathBuf },
    /// Simulate every link of a scenario and distill keys into the pools.
    Simulate {
        /// Scenario file; the bundled seven-node network when omitted.
        scenario: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        pulses: Option<u64>,
    },
    /// Simulate, then send a file encrypted with pool keys.
    Demo {
        scenario: Option<PathBuf>,
        #[arg(long)]
        from: String,
        #[arg(long)]
        to: String,
        #[arg(long)]
        file: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        pulses: Option<u64>,
        /// Bytes per message.
        #[arg(long, default_value_t = 1024)]
        chunk: usize,
        /// per-message, per-bytes:N or per-interval:SECONDS
        #[arg(long, default_value = "per-message", value_parser = parse_policy)]
        policy: RefreshPolicy,
    },
}

fn parse_policy(s: &str) -> Result<RefreshPolicy, String> {
    match s.split_once(':') {
        None if s == "per-message" => Ok(RefreshPolicy::PerMessage),
        Some(("per-bytes", n)) => n.parse().map(RefreshPolicy::PerBytes).map_err(|e| format!("{e}")),
        Some(("per-interval", t)) => t.parse().map(RefreshPolicy::PerInterval).map_err(|e| format!("{e}")),
        _ => Err(format!("unknown refresh policy {s}")),
    }
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl From<RecordError> for Failure {
    fn from(e: RecordError) -> Self {
        let code = match e {
            RecordError::Parse { .. } => exit::PARSE,
            RecordError::Validation { .. } => exit::VALIDATION,
            RecordError::Write(_) => exit::IO,
        };
        Self::new(code, e.to_string())
    }
}

impl From<NetworkError> for Failure {
    fn from(e: NetworkError) -> Self {
        let code = match e {
            NetworkError::Parse(_) => exit::PARSE,
            NetworkError::InsufficientKey { .. } => exit::STARVATION,
            NetworkError::NoSecureKey { .. } => exit::NO_SECURE_KEY,
            _ => exit::SCENARIO,
        };
        Self::new(code, e.to_string())
    }
}

impl From<CryptoError> for Failure {
    fn from(e: CryptoError) -> Self {
        match e {
            CryptoError::Network(n) => (*n).into(),
            CryptoError::Starvation { .. } => Self::new(exit::STARVATION, e.to_string()),
            other => Self::new(exit::IO, other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: &Cli) -> Result<u8, Failure> {
    let fluctuation = if cli.pessimistic {
        Fluctuation::Pessimistic
    } else {
        Fluctuation::Ignore
    };
    match &cli.command {
        Command::Analyze { records } => {
            let file = fs::File::open(records).map_err(|e| Failure::new(exit::IO, format!("{}: {e}", records.display())))?;
            let records = load_measurement_records(file)?;
            let topology = default_topology();
            let report = analyze_records(&records, &ProtocolParams::default(), fluctuation, topology.as_ref());
            emit(&report, cli.format)?;
            Ok(if report.any_without_key() { exit::NO_SECURE_KEY } else { 0 })
        }
        Command::Simulate { scenario, seed, pulses } => {
            let (config, mut topology) = load_scenario(scenario.as_deref())?;
            let seed = seed.unwrap_or_else(draw_seed);
            let pulses = pulses.unwrap_or(config.simulation.pulses_per_link);
            let pool = KeyPool::new(config.simulation.low_water_bits);
            let run = simulate_network(&mut topology, pulses, seed, &pool)?;
            let report = network_report(&run, &pool, &topology.params, fluctuation);
            emit(&report, cli.format)?;
            Ok(0)
        }
        Command::Demo {
            scenario,
            from,
            to,
            file,
            seed,
            pulses,
            chunk,
            policy,
        } => {
            let (config, mut topology) = load_scenario(scenario.as_deref())?;
            let data = fs::read(file).map_err(|e| Failure::new(exit::IO, format!("{}: {e}", file.display())))?;
            let seed = seed.unwrap_or_else(draw_seed);
            let pulses = pulses.unwrap_or(config.simulation.pulses_per_link);
            let pool = Arc::new(KeyPool::new(config.simulation.low_water_bits));
            simulate_network(&mut topology, pulses, seed, &pool)?;
            demo(&topology, pool, &NodeId::new(from.as_str()), &NodeId::new(to.as_str()), &data, *chunk, *policy, seed, cli.format)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn demo(
    topology: &Topology,
    pool: Arc<KeyPool>,
    from: &NodeId,
    to: &NodeId,
    data: &[u8],
    chunk: usize,
    policy: RefreshPolicy,
    seed: u64,
    format: Format,
) -> Result<u8, Failure> {
    if chunk == 0 {
        return Err(Failure::new(exit::VALIDATION, "chunk size must be positive"));
    }
    let mut session = SecureSession::between(Arc::clone(&pool), topology, from, to, policy, seed)?;
    let route = match session.source() {
        KeySource::Direct(pair) => pair.to_string(),
        KeySource::Relay(path) => path.to_string(),
    };
    let report = transfer(&mut session, data, chunk);
    let intact = report.received == data[..report.received.len()];
    let transcript = DemoTranscript {
        seed,
        from: from.to_string(),
        to: to.to_string(),
        route,
        frames: report.frames,
        bytes_delivered: report.bytes_delivered,
        bytes_total: data.len() as u64,
        complete: report.complete,
        intact,
        keys_drawn: session.counters().keys_drawn,
        bits_consumed: session
            .counters()
            .bits_consumed
            .iter()
            .map(|(p, b)| (p.to_string(), *b))
            .collect(),
        pools: pool_rows(&pool),
        stopped: report.stopped.as_ref().map(ToString::to_string),
    };
    let text = match format {
        Format::Text => render_demo_text(&transcript),
        Format::Csv => render_pools_csv(&transcript.pools).map_err(|e| Failure::new(exit::IO, e.to_string()))?,
        Format::Json => to_json(&transcript) + "\n",
    };
    print!("{text}");

    if !intact {
        return Err(Failure::new(exit::IO, "received data differs from the sent file"));
    }
    match report.stopped {
        Some(e) => Err(e.into()),
        None => Ok(0),
    }
}

fn draw_seed() -> u64 {
    let seed = rand::random();
    eprintln!("seed: {seed}");
    seed
}

fn default_topology() -> Option<Topology> {
    build_topology(&ScenarioConfig::default_fixture(), &table2_records()).ok()
}

fn load_scenario(path: Option<&Path>) -> Result<(ScenarioConfig, Topology), Failure> {
    let config = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Failure::new(exit::IO, format!("{}: {e}", p.display())))?;
            ScenarioConfig::from_toml(&text)?
        }
        None => ScenarioConfig::default_fixture(),
    };
    let topology = build_topology(&config, &table2_records())?;
    Ok((config, topology))
}

fn emit(report: &RunReport, format: Format) -> Result<(), Failure> {
    let text = match format {
        Format::Text => render_text(report),
        Format::Csv => render_csv(report).map_err(|e| Failure::new(exit::IO, e.to_string()))?,
        Format::Json => render_json(report) + "\n",
    };
    print!("{text}");
    Ok(())
}
