use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fockforge::family::{Mode, OperatorFamily};
use fockforge::poly::NormOptions;

mod commands;
mod report;

use commands::{load_family, load_graph, CliResult};
use report::{Format, Report};

#[derive(Parser, Debug)]
#[command(name = "fockforge", version, about = "Checks for operator families attached to directed graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output format.
    #[arg(long, value_enum, global = true, default_value = "json")]
    format: Format,
    /// Write the report here instead of standard output.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GraphArg {
    /// Graph file (`vertex x` / `edge e x -> y` lines).
    #[arg(long)]
    graph: PathBuf,
    /// Create vertices on first mention in an edge line.
    #[arg(long)]
    lenient: bool,
}

#[derive(Args, Debug)]
struct NormArgs {
    /// Largest domain depth (default: degree + 12).
    #[arg(long)]
    dmax: Option<usize>,
    /// Increment below which an estimate counts as stalled.
    #[arg(long, value_parser = positive)]
    stall_tol: Option<f64>,
    /// Largest codomain dimension attempted.
    #[arg(long)]
    budget: Option<usize>,
}

impl NormArgs {
    fn options(&self) -> NormOptions {
        let mut opts = NormOptions { d_max: self.dmax, ..NormOptions::default() };
        if let Some(t) = self.stall_tol {
            opts.stall_tol = t;
        }
        if let Some(b) = self.budget {
            opts.budget = b;
        }
        opts
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Ckt,
    Ck,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sources, sinks, loops, saturations and the aperiodic path property.
    GraphInfo {
        #[command(flatten)]
        graph: GraphArg,
    },
    /// Checks the CKT or CK relations on a family file, or on the pure model of a graph.
    Validate {
        #[arg(long, required_unless_present = "graph")]
        family: Option<PathBuf>,
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "ckt")]
        mode: ModeArg,
        /// Fock levels checked for the pure model.
        #[arg(long, default_value_t = 6)]
        depth: usize,
        #[arg(long, default_value_t = 1e-10, value_parser = positive)]
        tol: f64,
    },
    /// Wold decomposition of a family file.
    Wold {
        #[arg(long)]
        family: PathBuf,
        #[arg(long, default_value_t = 6)]
        depth: usize,
        #[arg(long, default_value_t = 1e-9, value_parser = positive)]
        tol: f64,
    },
    /// Builds and verifies the minimal dilation of a stabilized row contraction.
    Dilate {
        #[arg(long)]
        family: PathBuf,
        #[arg(long, default_value_t = 5)]
        depth: usize,
        #[arg(long, default_value_t = 1e-10, value_parser = positive)]
        tol: f64,
        /// Write the dilated family, compressed to levels `<= export-depth`, as a family file.
        #[arg(long)]
        export: Option<PathBuf>,
        #[arg(long, default_value_t = 2)]
        export_depth: usize,
    },
    /// Lower estimates of the norm of a polynomial in the left creation operators.
    Norm {
        #[command(flatten)]
        graph: GraphArg,
        #[arg(long)]
        poly: String,
        /// Parse the polynomial as starred monomials `v ~ w`.
        #[arg(long)]
        star: bool,
        #[command(flatten)]
        norm: NormArgs,
    },
    /// Von Neumann inequality for a polynomial on a tuple, or for seeded random pairs.
    VnCheck {
        #[arg(long, required_unless_present = "random")]
        family: Option<PathBuf>,
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long, required_unless_present = "random")]
        poly: Option<String>,
        /// Number of random (tuple, polynomial) pairs.
        #[arg(long, conflicts_with_all = ["family", "poly"])]
        random: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-8, value_parser = positive)]
        tol: f64,
        #[command(flatten)]
        norm: NormArgs,
    },
    /// Deformation order between two graphs and the norm chain it implies.
    Poset {
        /// The finer graph.
        #[arg(long)]
        graph: PathBuf,
        /// The coarser graph.
        #[arg(long)]
        graph2: PathBuf,
        /// Polynomial in the edge names of the finer graph.
        #[arg(long)]
        poly: Option<String>,
        /// Number of random polynomials when --poly is absent.
        #[arg(long, default_value_t = 10)]
        random: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-8, value_parser = positive)]
        tol: f64,
        #[command(flatten)]
        norm: NormArgs,
    },
    /// Graph hypotheses, defect conditions and essential-norm probes.
    Cstar {
        #[command(flatten)]
        graph: GraphArg,
        /// Family to test the defect condition on instead of the pure model.
        #[arg(long)]
        family: Option<PathBuf>,
        /// Operator probed, as a polynomial (default: the sum of all edges).
        #[arg(long)]
        poly: Option<String>,
        #[arg(long, default_value_t = 5)]
        depth: usize,
        #[arg(long, default_value_t = 4)]
        probe_depth: usize,
        #[arg(long, default_value_t = 1e-10, value_parser = positive)]
        tol: f64,
    },
}

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        Ok(_) => Err("must be a positive number".into()),
        Err(e) => Err(e.to_string()),
    }
}

fn run(cli: &Cli) -> CliResult<Report> {
    match &cli.command {
        Command::GraphInfo { graph } => Ok(commands::graph_info(&*load_graph(&graph.graph, graph.lenient)?)),
        Command::Validate { family, graph, mode, depth, tol } => {
            let mode = match mode {
                ModeArg::Ckt => Mode::Ckt,
                ModeArg::Ck => Mode::Ck,
            };
            let graph = graph.as_deref().map(|p| load_graph(p, false)).transpose()?;
            let fam = match family {
                Some(path) => OperatorFamily::from_document(&load_family(path, graph.as_ref())?).map_err(|e| e.to_string())?,
                None => OperatorFamily::pure_model(graph.expect("clap requires --graph without --family")),
            };
            commands::validate_family(&fam, mode, *depth, *tol)
        }
        Command::Wold { family, depth, tol } => commands::wold(&load_family(family, None)?, *depth, *tol),
        Command::Dilate { family, depth, tol, export, export_depth } => {
            commands::dilate(&load_family(family, None)?, *depth, *tol, export.as_deref().map(|p| (p, *export_depth)))
        }
        Command::Norm { graph, poly, star, norm } => commands::norm(load_graph(&graph.graph, graph.lenient)?, poly, *star, norm.options()),
        Command::VnCheck { family, graph, poly, random, seed, tol, norm } => {
            let graph = graph.as_deref().map(|p| load_graph(p, false)).transpose()?;
            match random {
                Some(n) => commands::vn_random(graph, *n, *seed, norm.options(), *tol),
                None => {
                    let (family, poly) = (family.as_ref().expect("clap requires --family"), poly.as_ref().expect("clap requires --poly"));
                    commands::vn_check(&load_family(family, graph.as_ref())?, poly, norm.options(), *tol)
                }
            }
        }
        Command::Poset { graph, graph2, poly, random, seed, tol, norm } => {
            let (g1, g2) = (load_graph(graph, false)?, load_graph(graph2, false)?);
            commands::poset(g1, g2, poly.as_deref(), *random, *seed, norm.options(), *tol)
        }
        Command::Cstar { graph, family, poly, depth, probe_depth, tol } => {
            let g: Arc<_> = load_graph(&graph.graph, graph.lenient)?;
            let doc = family.as_deref().map(|p| load_family(p, Some(&g))).transpose()?;
            commands::cstar(g, doc.as_ref(), poly.as_deref(), *depth, *probe_depth, *tol)
        }
    }
}

/// Caps the rayon pool at `FOCKFORGE_THREADS` when set.
fn configure_threads() -> Result<(), String> {
    let Ok(value) = std::env::var("FOCKFORGE_THREADS") else {
        return Ok(());
    };
    let n: usize = value.trim().parse().map_err(|_| format!("FOCKFORGE_THREADS: expected a positive integer, got `{value}`"))?;
    if n == 0 {
        return Err("FOCKFORGE_THREADS must be positive".into());
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    let report = match run(&cli) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let text = report.render(cli.format);
    match &cli.output {
        Some(path) => {
            if let Err(e) = fs::write(path, text) {
                eprintln!("error: {}: {e}", path.display());
                return ExitCode::from(1);
            }
        }
        None => print!("{text}"),
    }
    ExitCode::from(report.status.code())
}
