use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use curvem::config::parse_config;
use curvem::run::{audit_csv, audit_summary, execute, validate_file, CliError};
use curvem_core::experiment::quadrature_audit;

#[derive(Parser)]
#[command(
    name = "curvem",
    version,
    about = "Virtual element experiments on domains with curved boundaries"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment: test1-curved, test1-straight, test2, patch or quadrature-audit.
    Run(Box<RunArgs>),
    /// Check a mesh file for edge-length and star-shapedness conditions.
    Validate {
        mesh: PathBuf,
        #[arg(long)]
        rho: f64,
    },
    /// Gauss-Green rule against exact triangle integrals on random polygons.
    QuadratureAudit {
        #[arg(long = "M", value_delimiter = ',', default_value = "1,2,3,4")]
        m: Vec<usize>,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Also write the table to this CSV file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Every option may also come from the `--config` file; flags win.
#[derive(Args)]
struct RunArgs {
    experiment: Option<String>,
    /// Comma-separated polynomial orders in [1, 4].
    #[arg(long)]
    k: Option<String>,
    /// Comma-separated refinement parameters.
    #[arg(long)]
    n: Option<String>,
    /// Comma-separated mesh files used instead of generated meshes.
    #[arg(long)]
    mesh: Option<String>,
    /// Validate each mesh with this chunkiness parameter.
    #[arg(long)]
    rho: Option<String>,
    /// Extra quadrature points on curved edges.
    #[arg(long)]
    boost: Option<String>,
    /// cg or direct.
    #[arg(long)]
    solver: Option<String>,
    #[arg(long)]
    tol: Option<String>,
    #[arg(long)]
    max_iter: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
    /// Load approximation: auto, pi0 or mean-corrected.
    #[arg(long)]
    load: Option<String>,
    /// Rate check after the run: none, optimal or suboptimal.
    #[arg(long)]
    check: Option<String>,
    /// Quadrature audit orders.
    #[arg(long = "M")]
    m: Option<String>,
    #[arg(long)]
    trials: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Key-value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dump per-element matrices.
    #[arg(short, long)]
    verbose: bool,
}

impl RunArgs {
    fn flags(&self) -> BTreeMap<String, String> {
        let mut map = BTreeMap::new();
        let pairs = [
            ("experiment", &self.experiment),
            ("k", &self.k),
            ("n", &self.n),
            ("mesh", &self.mesh),
            ("rho", &self.rho),
            ("boost", &self.boost),
            ("solver", &self.solver),
            ("tol", &self.tol),
            ("max_iter", &self.max_iter),
            ("out", &self.out),
            ("load", &self.load),
            ("check", &self.check),
            ("m", &self.m),
            ("trials", &self.trials),
            ("seed", &self.seed),
        ];
        for (k, v) in pairs {
            if let Some(v) = v {
                map.insert(k.to_string(), v.clone());
            }
        }
        if self.verbose {
            map.insert("verbose".into(), "true".into());
        }
        map
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => parse_config(&args.flags(), args.config.as_deref())
            .map_err(CliError::from)
            .and_then(|config| execute(&config))
            .map(|out| {
                print!("{}", out.summary);
                for f in &out.files {
                    println!("wrote {}", f.display());
                }
            }),
        Command::Validate { mesh, rho } => validate_file(&mesh, rho).map(|s| print!("{s}")),
        Command::QuadratureAudit {
            m,
            trials,
            seed,
            out,
        } => {
            if m.is_empty() || m.contains(&0) {
                Err(CliError::Config("--M needs positive values".into()))
            } else {
                quadrature_audit(&m, trials, seed)
                    .map_err(|e| CliError::Solver(e.to_string()))
                    .and_then(|(rows, disk)| {
                        print!("{}", audit_summary(&rows, disk, trials));
                        match out {
                            Some(path) => std::fs::write(&path, audit_csv(&rows))
                                .map_err(|e| CliError::Io(format!("{}: {e}", path.display()))),
                            None => Ok(()),
                        }
                    })
            }
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("curvem: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
