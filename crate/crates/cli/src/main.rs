use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vaisman_cli::report::{ErrorFile, SCHEMA};
use vaisman_cli::{commands, CliError, Command, ReportFile, RunConfig, Settings};

#[derive(Parser)]
#[command(name = "vaisman-cy", version, about = "Calabi-Yau reconstruction of Vaisman metrics on model manifolds")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Pointwise identity suite on a model manifold.
    Verify(Flags),
    /// Transversal Monge-Ampère solve, reconstruction and verification.
    Solve(Flags),
    /// Solve from several seeded initializations and compare.
    Uniqueness(Flags),
    /// Identity suite, pipeline with uniqueness and linearization checks.
    Report(Flags),
}

#[derive(Args, Clone, Default)]
struct Flags {
    /// `key = value` configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// hopf2, hopf3 or nil3.
    #[arg(long)]
    model: Option<String>,
    /// Band limit L (sphere) or nodes per axis N (torus).
    #[arg(long)]
    grid: Option<String>,
    /// zero, y20:a, ylm:l,m:a, cc13:a, cos:k1,k2,k3,k4:a, fiber:a or file:<path>.
    #[arg(long)]
    psi: Option<String>,
    #[arg(long)]
    lee_scale: Option<String>,
    /// Hopf dilation factor.
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    samples: Option<String>,
    /// Solver initializations for the uniqueness experiment.
    #[arg(long)]
    inits: Option<String>,
    #[arg(long)]
    fd_step: Option<String>,
    #[arg(long)]
    order_step: Option<String>,
    #[arg(long)]
    max_iters: Option<String>,
    /// standard or flipped.
    #[arg(long)]
    convention: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    tol_identity: Option<String>,
    #[arg(long)]
    tol_order: Option<String>,
    #[arg(long)]
    tol_character: Option<String>,
    #[arg(long)]
    tol_residual: Option<String>,
    #[arg(long)]
    tol_volume: Option<String>,
    #[arg(long)]
    tol_vaisman: Option<String>,
    #[arg(long)]
    tol_lee_class: Option<String>,
    #[arg(long)]
    tol_kernel: Option<String>,
    #[arg(long)]
    tol_uniqueness: Option<String>,
    #[arg(long)]
    tol_metric: Option<String>,
}

impl Flags {
    fn settings(&self) -> Result<Settings, CliError> {
        let pairs = [
            ("model", &self.model),
            ("grid", &self.grid),
            ("psi", &self.psi),
            ("lee_scale", &self.lee_scale),
            ("alpha", &self.alpha),
            ("seed", &self.seed),
            ("samples", &self.samples),
            ("inits", &self.inits),
            ("fd_step", &self.fd_step),
            ("order_step", &self.order_step),
            ("max_iters", &self.max_iters),
            ("convention", &self.convention),
            ("out", &self.out),
            ("tol_identity", &self.tol_identity),
            ("tol_order", &self.tol_order),
            ("tol_character", &self.tol_character),
            ("tol_residual", &self.tol_residual),
            ("tol_volume", &self.tol_volume),
            ("tol_vaisman", &self.tol_vaisman),
            ("tol_lee_class", &self.tol_lee_class),
            ("tol_kernel", &self.tol_kernel),
            ("tol_uniqueness", &self.tol_uniqueness),
            ("tol_metric", &self.tol_metric),
        ];
        let mut flags = Settings::default();
        for (key, value) in pairs {
            if let Some(v) = value {
                flags.set(key, v)?;
            }
        }
        let base = match &self.config {
            Some(path) => Settings::load(path)?,
            None => Settings::default(),
        };
        Ok(base.merged(flags))
    }
}

fn summary(report: &ReportFile) {
    for c in &report.checks {
        eprintln!(
            "{:<24} max={:.3e} mean={:.3e} tol={:.1e} {}",
            c.name,
            c.max_residual,
            c.mean_residual,
            c.tolerance,
            if c.pass { "PASS" } else { "FAIL" }
        );
    }
}

fn execute(command: Command, flags: &Flags) -> Result<(RunConfig, ReportFile), (Command, Option<RunConfig>, CliError)> {
    let cfg = flags
        .settings()
        .and_then(|s| s.resolve(command))
        .map_err(|e| (command, None, e))?;
    let report = commands::run(&cfg).map_err(|e| (command, Some(cfg.clone()), e))?;
    Ok((cfg, report))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, flags) = match &cli.command {
        Sub::Verify(f) => (Command::Verify, f),
        Sub::Solve(f) => (Command::Solve, f),
        Sub::Uniqueness(f) => (Command::Uniqueness, f),
        Sub::Report(f) => (Command::Report, f),
    };
    match execute(command, flags) {
        Ok((cfg, report)) => {
            summary(&report);
            match report.write(&cfg.out) {
                Ok(path) => eprintln!("report: {}", path.display()),
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(e.exit_code() as u8);
                }
            }
            eprintln!("{}", if report.pass { "PASS" } else { "FAIL" });
            ExitCode::from(if report.pass { 0 } else { 1 })
        }
        Err((command, cfg, err)) => {
            let record = err.record();
            let file = ErrorFile {
                schema: SCHEMA,
                command,
                error: &record,
            };
            let text = serde_json::to_string_pretty(&file).expect("error record serializes");
            eprintln!("{text}");
            let out = cfg.map(|c| c.out).or_else(|| flags.out.as_ref().map(std::path::PathBuf::from));
            if let Some(out) = out {
                if std::fs::create_dir_all(&out).is_ok() {
                    let _ = std::fs::write(out.join(format!("{}_error.json", command.name())), text + "\n");
                }
            }
            ExitCode::from(record.exit_code as u8)
        }
    }
}
