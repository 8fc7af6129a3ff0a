use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, IsTerminal, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use dam_core::agents::{compact_store, Engine, Pipeline};
use dam_core::compression::CompressionAction;
use dam_core::config::ProviderKind;
use dam_core::sim::ablation::{compression_ratio, run_ablation, write_ablation_csv, Mode};
use dam_core::sim::convergence::{
    default_script, packaging_script, read_script, run_convergence, write_convergence_csv,
};
use dam_core::sim::judge::{format_table, read_pairs, run_judge};
use dam_core::sim::{generate, StreamSpec};
use dam_core::{Config, Error, MemoryStore};

#[derive(Parser)]
#[command(name = "dam", version, about = "Affective memory engine for dialogue agents")]
struct Cli {
    /// TOML config file; DAM_* environment variables override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    provider: Option<ProviderArg>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProviderArg {
    Live,
    Mock,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Bayes,
    Naive,
}

#[derive(Clone, Copy, ValueEnum)]
enum SortKey {
    Entropy,
    Weight,
    Updated,
}

#[derive(Subcommand)]
enum Command {
    /// Interactive conversation over a store file.
    Chat {
        #[arg(long)]
        store: Option<PathBuf>,
    },
    /// Memory-growth run over a synthetic stream.
    Simulate {
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[arg(long, default_value_t = 500)]
        turns: usize,
        #[arg(long, default_value_t = 140)]
        vocab: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Confidence trace over a scripted observation sequence.
    Converge {
        /// JSON Lines of observations; the built-in coffee script if omitted.
        #[arg(long)]
        script: Option<PathBuf>,
        /// Built-in script with two packaging observations mixed in.
        #[arg(long, conflicts_with = "script")]
        packaging: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the units of a store.
    Inspect {
        #[arg(long)]
        store: PathBuf,
        #[arg(long, value_enum, default_value = "updated")]
        sort: SortKey,
    },
    /// Run one compression pass over a whole store.
    Compact {
        #[arg(long)]
        store: PathBuf,
    },
    /// Grade responses for query/memory pairs with the judge prompt.
    Judge {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Allow the deterministic mock judge (offline smoke runs).
        #[arg(long, hide = true)]
        mock: bool,
    },
    /// HTTP service.
    Serve {
        #[arg(long)]
        port: Option<u16>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
}

/// An error plus the exit code it maps to.
struct Failure(u8, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_provider() {
            2
        } else if e.is_store_corruption() {
            3
        } else {
            1
        };
        Failure(code, e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure(1, e.to_string())
    }
}

type CliResult = Result<(), Failure>;

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(io::stderr)
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()))
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

fn load_config(cli: &Cli) -> Result<Config, Failure> {
    let mut config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    config.apply_env()?;
    if let Some(p) = cli.provider {
        config.provider = match p {
            ProviderArg::Live => ProviderKind::Live,
            ProviderArg::Mock => ProviderKind::Mock,
        };
    }
    Ok(config)
}

/// Providers are built before any work starts so a misconfiguration is
/// reported up front.
fn engine(config: Config) -> Result<Engine, Failure> {
    Engine::from_config(config).map_err(|e| match e {
        Error::InvalidConfig(m) if m.contains("DAM_API_KEY") => Failure(2, m),
        other => other.into(),
    })
}

fn run(cli: Cli) -> CliResult {
    let config = load_config(&cli)?;
    match cli.command {
        Command::Chat { store } => {
            let path = store.unwrap_or_else(|| config.store_dir.join("chat.damstore"));
            chat(engine(config)?, &path)
        }
        Command::Simulate { mode, turns, vocab, seed, noise, out } => {
            simulate(&config, mode, turns, vocab, seed, noise, &out)
        }
        Command::Converge { script, packaging, out } => converge(&config, script.as_deref(), packaging, &out),
        Command::Inspect { store, sort } => inspect(&store, sort),
        Command::Compact { store } => compact(engine(config)?, &store),
        Command::Judge { pairs, out, seed, mock } => {
            if config.provider != ProviderKind::Live && !mock {
                return Err(Failure(2, "judge needs the live provider (--provider live with DAM_API_KEY set)".into()));
            }
            judge(engine(config)?, &pairs, &out, seed)
        }
        Command::Serve { port, host } => {
            let port = port.unwrap_or(config.port);
            let addr: SocketAddr =
                format!("{host}:{port}").parse().map_err(|e| Failure(1, format!("bad listen address: {e}")))?;
            let engine = engine(config)?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(dam_core::service::serve(engine, addr))?;
            Ok(())
        }
    }
}

fn open_store(engine: &Engine, path: &Path) -> Result<MemoryStore, Failure> {
    if path.exists() {
        Ok(MemoryStore::load(path)?)
    } else {
        Ok(engine.new_store())
    }
}

fn action_kinds(actions: &[CompressionAction]) -> String {
    if actions.is_empty() {
        return "-".into();
    }
    actions.iter().map(|a| a.kind.to_string()).collect::<Vec<_>>().join(",")
}

fn print_units(store: &MemoryStore, sort: SortKey, out: &mut impl Write) -> io::Result<()> {
    let mut units: Vec<_> = store.units().collect();
    match sort {
        SortKey::Entropy => {
            units.sort_by(|a, b| b.entropy().total_cmp(&a.entropy()).then_with(|| a.key().cmp(&b.key())))
        }
        SortKey::Weight => units.sort_by(|a, b| b.weight.total_cmp(&a.weight).then_with(|| a.key().cmp(&b.key()))),
        SortKey::Updated => units.sort_by(|a, b| b.updated_at.cmp(&a.updated_at).then_with(|| a.key().cmp(&b.key()))),
    }
    if !units.is_empty() {
        writeln!(out, "{:<32} {:>20} {:>6} {:>7} {:>6}  summary", "key", "pos/neg/neu", "H", "W", "streak")?;
    }
    for u in units {
        let p = u.profile();
        let head: String = u.summary.chars().take(48).collect();
        writeln!(
            out,
            "{:<32} {:>20} {:>6.3} {:>7.2} {:>6}  {}",
            u.key().to_string(),
            format!("{:.3}/{:.3}/{:.3}", p.positive, p.negative, p.neutral),
            u.entropy(),
            u.weight,
            u.high_entropy_streak,
            head
        )?;
    }
    writeln!(out, "{} units, global entropy {:?}", store.len(), store.global_entropy())
}

fn chat(engine: Engine, path: &Path) -> CliResult {
    let store = open_store(&engine, path)?;
    let mut pipeline = Pipeline::new(engine, store)?;
    let interactive = io::stdin().is_terminal();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let mut lines = io::stdin().lock().lines();
    loop {
        if interactive {
            write!(out, "> ")?;
            out.flush()?;
        }
        let Some(line) = lines.next() else { break };
        let line = line?;
        let input = line.trim();
        match input {
            "" => continue,
            "/quit" => break,
            "/memories" => {
                print_units(pipeline.store(), SortKey::Updated, &mut out)?;
                continue;
            }
            _ => {}
        }
        match pipeline.turn(input) {
            Ok(t) => {
                writeln!(out, "{}", t.response)?;
                writeln!(
                    out,
                    "  [route: {:?} | actions: {} | units: {} | global H: {:.4}]",
                    t.routing.kind,
                    action_kinds(&t.actions),
                    pipeline.store().len(),
                    pipeline.store().global_entropy()
                )?;
                for w in &t.warnings {
                    eprintln!("warning: {w}");
                }
                pipeline.store().save(path)?;
            }
            Err(e) => eprintln!("error: {e}"),
        }
    }
    pipeline.store().save(path)?;
    Ok(())
}

fn simulate(
    config: &Config,
    mode: ModeArg,
    turns: usize,
    vocab: usize,
    seed: u64,
    noise: f64,
    out: &Path,
) -> CliResult {
    if turns == 0 || vocab == 0 {
        return Err(Failure(1, "--turns and --vocab must be at least 1".into()));
    }
    let mode = match mode {
        ModeArg::Bayes => Mode::Bayes,
        ModeArg::Naive => Mode::Naive,
    };
    let stream = generate(&StreamSpec { noise, ..StreamSpec::new(seed, turns, vocab) });
    let report = run_ablation(&stream.observations, mode, config)?;
    let naive_count = match mode {
        Mode::Naive => report.final_count,
        Mode::Bayes => run_ablation(&stream.observations, Mode::Naive, config)?.final_count,
    };
    fs::create_dir_all(out)?;
    let csv = out.join(format!("ablation_{}_{seed}.csv", mode.as_str()));
    let mut w = BufWriter::new(File::create(&csv)?);
    write_ablation_csv(&report, &mut w)?;
    w.flush()?;
    let summary = json!({
        "mode": mode,
        "seed": seed,
        "turns": turns,
        "vocab": vocab,
        "noise": noise,
        "final_count": report.final_count,
        "stored_count": report.stored_count,
        "naive_count": naive_count,
        "compression_ratio": compression_ratio(report.final_count, naive_count),
    });
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    fs::write(out.join(format!("summary_{}_{seed}.json", mode.as_str())), format!("{text}\n"))?;
    println!("{text}");
    Ok(())
}

fn converge(config: &Config, script: Option<&Path>, packaging: bool, out: &Path) -> CliResult {
    let script = match script {
        Some(p) => read_script(BufReader::new(File::open(p)?))?,
        None if packaging => packaging_script(),
        None => default_script(),
    };
    let trace = run_convergence(&script, config)?;
    fs::create_dir_all(out)?;
    let mut w = BufWriter::new(File::create(out.join("convergence.csv"))?);
    write_convergence_csv(&trace, &mut w)?;
    w.flush()?;
    if let Some(r) = trace.last() {
        println!(
            "{}: p = ({:.4}, {:.4}, {:.4})  H = {:.4}  W = {:.4}",
            trace.key, r.profile.positive, r.profile.negative, r.profile.neutral, r.entropy, r.weight
        );
    }
    println!("{} units", trace.store.len());
    Ok(())
}

fn inspect(path: &Path, sort: SortKey) -> CliResult {
    if !path.exists() {
        return Err(Failure(1, format!("no store at {}", path.display())));
    }
    let store = MemoryStore::load(path)?;
    print_units(&store, sort, &mut io::stdout().lock())?;
    Ok(())
}

fn compact(engine: Engine, path: &Path) -> CliResult {
    if !path.exists() {
        return Err(Failure(1, format!("no store at {}", path.display())));
    }
    let mut store = MemoryStore::load(path)?;
    let actions = compact_store(&engine, &mut store)?;
    for a in &actions {
        let targets = a.targets.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ");
        println!("{} {}: {}", a.kind, targets, a.rationale);
    }
    if !actions.is_empty() {
        store.save(path)?;
    }
    println!("{} actions", actions.len());
    Ok(())
}

fn judge(engine: Engine, pairs: &Path, out: &Path, seed: u64) -> CliResult {
    let pairs = read_pairs(&fs::read_to_string(pairs)?)?;
    let report = run_judge(&*engine.chat, &engine.templates, &pairs, seed);
    let mut w = BufWriter::new(File::create(out)?);
    for v in &report.verdicts {
        serde_json::to_writer(&mut w, v).map_err(|e| Failure(1, e.to_string()))?;
        writeln!(w)?;
    }
    w.flush()?;
    for s in &report.skipped {
        eprintln!("skipped pair {}: {}", s.index, s.error);
    }
    print!("{}", format_table(&report));
    if report.verdicts.is_empty() && !report.skipped.is_empty() {
        return Err(Failure(2, "every judge call failed".into()));
    }
    Ok(())
}
