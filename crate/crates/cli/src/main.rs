use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thermeta::{Method, ScenarioName};

mod commands;
mod config;

use commands::{GradCheckOptions, GRADIENT_TOLERANCE};
use config::{output_dir, Overrides, Resolved, RunConfig};

/// Two-scale thermal metamaterial design.
///
/// Outputs go to `--out`, else `$THERMETA_OUT_DIR`, else the config's
/// `output.directory`, else a per-command default under `thermeta-out/`.
#[derive(Debug, Parser)]
#[command(name = "thermeta", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Unit-cell database.
    #[command(subcommand)]
    Db(DbCommand),
    /// Forward solve of the initial or a given design.
    Solve {
        #[command(flatten)]
        run: RunArgs,
        /// Design CSV to evaluate instead of the initial design.
        #[arg(long)]
        design: Option<PathBuf>,
    },
    /// Optimize the conductivity field.
    Optimize {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Compare adjoint gradients against central differences.
    CheckGrad {
        #[command(flatten)]
        run: RunArgs,
        /// Number of design elements to perturb.
        #[arg(long, default_value_t = 20)]
        probes: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1e-6)]
        step: f64,
    },
    /// Substitute database cells into an optimized design.
    Assemble {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        design: PathBuf,
        /// Database directory; defaults to the config's `database.path`.
        #[arg(long)]
        db: Option<PathBuf>,
    },
    /// Summarize a run directory into `report.md`.
    Report {
        /// Directory holding `summary.json` and/or `assembly.json`.
        dir: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
enum DbCommand {
    /// Enumerate, homogenize and store every unique cell.
    Build {
        /// Cell resolution in pixels (even).
        #[arg(long, default_value_t = 50)]
        n: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Nearest stored cell to a property pair.
    Query {
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        k11: f64,
        #[arg(long)]
        k22: f64,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Mma,
    ProjectedGradient,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preconfigured case study.
    #[arg(long)]
    scenario: Option<ScenarioName>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    ny: Option<usize>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    move_limit: Option<f64>,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
}

impl RunArgs {
    fn load(&self) -> anyhow::Result<RunConfig> {
        match &self.config {
            Some(p) => RunConfig::load(p),
            None => Ok(RunConfig::default()),
        }
    }

    fn overrides(&self) -> Overrides {
        Overrides {
            scenario: self.scenario,
            nx: self.nx,
            ny: self.ny,
            max_iter: self.max_iter,
            tol: self.tol,
            move_limit: self.move_limit,
            method: self.method.map(|m| match m {
                MethodArg::Mma => Method::Mma,
                MethodArg::ProjectedGradient => Method::ProjectedGradient,
            }),
        }
    }

    fn resolve(&self, command: &str) -> anyhow::Result<(Resolved, PathBuf)> {
        self.resolve_with(command, Overrides::default())
    }

    fn resolve_with(&self, command: &str, extra: Overrides) -> anyhow::Result<(Resolved, PathBuf)> {
        let cfg = self.load()?;
        let mut ov = self.overrides();
        ov.nx = ov.nx.or(extra.nx);
        ov.ny = ov.ny.or(extra.ny);
        let has_mesh = cfg
            .mesh
            .as_ref()
            .is_some_and(|m| m.nx.is_some() || m.ny.is_some());
        if has_mesh && self.nx.is_none() && self.ny.is_none() {
            ov.nx = None;
            ov.ny = None;
        }
        let run = Resolved::new(&cfg, &ov)?;
        let fallback = format!("thermeta-out/{command}/{}", run.label());
        let out = output_dir(self.out.as_deref(), &cfg, &fallback);
        Ok((run, out))
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Db(DbCommand::Build { n, out }) => {
            let out = output_dir(
                out.as_deref(),
                &RunConfig::default(),
                &format!("thermeta-out/db-{n}"),
            );
            commands::db_build(n, &out)?;
        }
        Command::Db(DbCommand::Query { db, k11, k22 }) => commands::db_query(&db, k11, k22)?,
        Command::Solve { run, design } => {
            let (r, out) = run.resolve("solve")?;
            commands::solve(&r, design.as_deref(), &out)?;
        }
        Command::Optimize { run } => {
            let (r, out) = run.resolve("optimize")?;
            if !commands::optimize_cmd(&r, &out)? {
                return Ok(ExitCode::from(2));
            }
        }
        Command::CheckGrad {
            run,
            probes,
            seed,
            step,
        } => {
            let small = Overrides {
                nx: Some(10),
                ny: Some(10),
                ..Default::default()
            };
            let (r, out) = run.resolve_with("check-grad", small)?;
            let err = commands::check_grad(&r, GradCheckOptions { probes, seed, step }, &out)?;
            if err > GRADIENT_TOLERANCE {
                eprintln!("FAIL: {err:.3e} exceeds {GRADIENT_TOLERANCE:e}");
                return Ok(ExitCode::FAILURE);
            }
            println!("PASS");
        }
        Command::Assemble { run, design, db } => {
            let (r, out) = run.resolve("assemble")?;
            let db = db
                .or_else(|| r.database.clone())
                .ok_or_else(|| anyhow::anyhow!("no database: pass --db or set database.path"))?;
            commands::assemble(&r, &design, &db, &out)?;
        }
        Command::Report { dir } => {
            commands::report(Path::new(&dir))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
