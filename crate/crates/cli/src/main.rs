use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;
use trimer_cli::commands::{self, Outcome};
use trimer_cli::config::{ConfigError, Overrides};
use trimer_cli::schema;

#[derive(Parser)]
#[command(name = "trimer", version, about = "Driven Kerr trimer: spectra, fluctuations, open dynamics and drive planning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Flat TOML file with the same keys as the flags (underscores for dashes)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Report ensemble progress on stderr
    #[arg(long, global = true)]
    progress: bool,
    #[command(flatten)]
    flags: Overrides,
}

#[derive(Subcommand)]
enum Command {
    /// Low-lying levels at each grid point
    Spectrum(Common),
    /// Converged spectra and ground-state observables over a coupling grid
    Sweep(Common),
    /// Mean-field phase regime and predictions
    Meanfield(Common),
    /// Gaussian fluctuations around the displaced branch
    Bogoliubov(Common),
    /// Quantum-jump ensembles with photon loss
    Trajectories(Common),
    /// Drive tones and spurious-resonance check (GHz)
    Freqplan(Common),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Spectrum(_) => "spectrum",
            Command::Sweep(_) => "sweep",
            Command::Meanfield(_) => "meanfield",
            Command::Bogoliubov(_) => "bogoliubov",
            Command::Trajectories(_) => "trajectories",
            Command::Freqplan(_) => "freqplan",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Spectrum(c)
            | Command::Sweep(c)
            | Command::Meanfield(c)
            | Command::Bogoliubov(c)
            | Command::Trajectories(c)
            | Command::Freqplan(c) => c,
        }
    }
}

fn error_record(kind: &str, message: &str) {
    let rec = json!({ "error": { "kind": kind, "message": message } });
    eprintln!("{rec}");
}

fn setup_threads() -> Result<(), ConfigError> {
    let Ok(v) = std::env::var("TRIMER_THREADS") else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| ConfigError::new(format!("TRIMER_THREADS must be a positive integer, got '{v}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| ConfigError::new(format!("thread pool: {e}")))
}

fn open(path: &Option<PathBuf>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn sidecar_path(p: &Path) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn emit(command: &str, out: &Outcome) -> io::Result<()> {
    for t in &out.tables {
        let mut w = open(&t.path)?;
        schema::write_table(&mut w, t.kind, &t.columns, &t.rows)?;
        w.flush()?;
        if let Some(p) = &t.path {
            let doc = json!({
                "schema": schema::header_line(t.kind).trim_start_matches("# schema: "),
                "command": command,
                "version": env!("CARGO_PKG_VERSION"),
                "settings": out.settings,
                "rows": t.rows.len(),
                "failures": out.failures,
            });
            std::fs::write(sidecar_path(p), serde_json::to_string_pretty(&doc).expect("json") + "\n")?;
        }
    }
    if let Some((path, doc)) = &out.json {
        match path {
            Some(p) => std::fs::write(p, doc.clone() + "\n")?,
            None if out.text.is_none() => println!("{doc}"),
            None => {}
        }
    }
    if let Some(text) = &out.text {
        print!("{text}");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode, ExitCode> {
    let config_err = |e: ConfigError| {
        error_record("config", &e.0);
        ExitCode::from(2)
    };
    setup_threads().map_err(config_err)?;
    let common = cli.command.common();
    let base = match &common.config {
        Some(p) => Overrides::from_file(p).map_err(config_err)?,
        None => Overrides::default(),
    };
    let o = common.flags.clone().over(base);
    let outcome = match &cli.command {
        Command::Spectrum(_) => commands::spectrum(&o),
        Command::Sweep(_) => commands::sweep(&o),
        Command::Meanfield(_) => commands::meanfield(&o),
        Command::Bogoliubov(_) => commands::bogoliubov(&o),
        Command::Trajectories(c) => commands::trajectories(&o, c.progress),
        Command::Freqplan(_) => commands::freqplan(&o),
    }
    .map_err(config_err)?;
    if let Err(e) = emit(cli.command.name(), &outcome) {
        error_record("io", &e.to_string());
        return Err(ExitCode::from(2));
    }
    for f in &outcome.failures {
        let rec = json!({ "error": f });
        eprintln!("{rec}");
    }
    Ok(if outcome.failures.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let msg = e.to_string();
            error_record("usage", msg.lines().next().unwrap_or_default().trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    run(cli).unwrap_or_else(|c| c)
}
