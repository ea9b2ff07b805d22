use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mixnas::diagnostics::{fisher_oracle, supernet_gradcheck};
use mixnas::runner::{self, emit_results, Method, SearchConfig, MANIFEST_FILE};
use mixnas::{Error, Result};

#[derive(Parser)]
#[command(name = "mixnas", version, about = "Natural-gradient architecture search with multiple regularization strengths")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config; flags below override its keys
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated regularization coefficients, e.g. 0,0.1,0.3
    #[arg(long, value_delimiter = ',')]
    epsilons: Option<Vec<f64>>,
    /// Samples per iteration
    #[arg(long)]
    lambda: Option<usize>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a search and write trajectory.csv, final.toml, manifest.toml and timings.toml
    Search {
        #[arg(long, value_enum)]
        method: Option<Method>,
        #[command(flatten)]
        common: Common,
    },
    /// Print (or write) the exact Pareto front of a table or tradeoff config as CSV
    ParetoOracle {
        #[command(flatten)]
        common: Common,
    },
    /// Check the regularization natural gradient and the network weight gradients
    Gradcheck {
        #[arg(long, default_value_t = 50)]
        cases: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Rerun a manifest and compare outputs byte for byte
    Replay {
        /// manifest.toml, or the directory containing it
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load(common: &Common) -> Result<SearchConfig> {
    let mut cfg = match &common.config {
        Some(p) => SearchConfig::load(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
        None => SearchConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(e) = &common.epsilons {
        cfg.epsilons = e.clone();
    }
    if let Some(l) = common.lambda {
        cfg.lambda = l;
    }
    if let Some(o) = &common.out {
        cfg.out = Some(o.display().to_string());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn search(method: Option<Method>, common: &Common) -> Result<ExitCode> {
    let mut cfg = load(common)?;
    if let Some(m) = method {
        cfg.method = m;
    }
    let record = runner::run(&cfg)?;
    for fa in &record.finals {
        let eps = fa.epsilon.map(|e| format!("eps={e}")).unwrap_or_default();
        let target = fa.target.map(|t| format!(" target={t:.4}")).unwrap_or_default();
        println!("[{}] {eps}{target} R={:.4} {}", fa.component, fa.complexity, fa.labels.join(","));
    }
    println!(
        "calls: {} weight gradients, {} evaluations, {} retrains ({:.2}s)",
        record.calls.weight_gradients, record.calls.theta_evaluations, record.calls.retrains, record.timings.total
    );
    if let Some(dir) = &cfg.out {
        let paths = emit_results(&record, &cfg, Path::new(dir))?;
        println!("wrote {} files to {dir}", paths.len());
    }
    Ok(ExitCode::SUCCESS)
}

fn pareto(common: &Common) -> Result<ExitCode> {
    let cfg = load(common)?;
    let front = runner::pareto_oracle(&cfg)?;
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(["complexity", "loss", "choices"])?;
        for p in &front {
            let choices: Vec<String> = p.arch.choices().iter().map(usize::to_string).collect();
            w.write_record([p.complexity.to_string(), p.loss.to_string(), choices.join(" ")])?;
        }
        w.flush()?;
    }
    match &cfg.out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let path = Path::new(dir).join("pareto.csv");
            std::fs::write(&path, &buf)?;
            println!("{} Pareto points written to {}", front.len(), path.display());
        }
        None => {
            // a closed pipe (e.g. `| head`) is not an error
            if let Err(e) = std::io::stdout().lock().write_all(&buf) {
                if e.kind() != std::io::ErrorKind::BrokenPipe {
                    return Err(e.into());
                }
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn gradcheck(cases: usize, seed: u64) -> Result<ExitCode> {
    let fim = fisher_oracle(cases, seed)?;
    let fd = supernet_gradcheck(cases, seed)?;
    let mut ok = true;
    for (name, s) in [("regularization vs inverse Fisher", fim), ("network vs finite differences", fd)] {
        let verdict = if s.passed() { "ok" } else { "FAILED" };
        println!("{name}: {} cases, max error {:.3e} (tol {:.0e}) {verdict}", s.cases, s.max_error, s.tolerance);
        ok &= s.passed();
    }
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn replay(manifest: &Path, out: &Path) -> Result<ExitCode> {
    let manifest = if manifest.is_dir() { manifest.join(MANIFEST_FILE) } else { manifest.to_path_buf() };
    let report = runner::replay(&manifest, out)?;
    for (file, same) in &report.files {
        println!("{file}: {}", if *same { "identical" } else { "DIFFERS" });
    }
    Ok(if report.identical() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Search { method, common } => search(*method, common),
        Command::ParetoOracle { common } => pareto(common),
        Command::Gradcheck { cases, seed } => gradcheck(*cases, *seed),
        Command::Replay { manifest, out } => replay(manifest, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
