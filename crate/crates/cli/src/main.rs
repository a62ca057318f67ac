//! `polytest`: test polynomial constraints on covariance matrices from the
//! command line.
//!
//! Results (JSON or CSV) go to stdout or `--out`; diagnostics and the human
//! summary go to stderr. Exit codes: 0 success, 1 other failure, 2 invalid
//! input, 3 degenerate constraint coordinate.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array2;
use polytest_core::constraint_file::{parse_constraint_file, write_constraint_file};
use polytest_core::data::read_csv_file;
use polytest_core::kernel::CovarianceEstimators;
use polytest_core::latent_tree::{format_sigma_poly, ConstraintTag};
use polytest_core::rng::{derive_seed, role};
use polytest_core::simulate::{
    empirical_power, empirical_size, ks_uniform_distance, pvalue_study, pvalues_to_csv, ExperimentConfig,
};
use polytest_core::ustat::binomial_coefficient;
use polytest_core::{
    enumerate_constraints, run_test_n1, BootstrapConfig, BudgetConfig, Constraint, ConstraintKind, ConstraintMode,
    Error, Setup, SymmetricKernel, TestReport, Tree,
};

#[derive(Parser, Debug)]
#[command(name = "polytest", version, about = "Incomplete U-statistic tests of polynomial covariance constraints")]
struct Cli {
    /// Worker threads; 0 uses every core. Output does not depend on it.
    #[arg(long, global = true, env = "POLYTEST_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Test the constraints in a constraint file against a data CSV.
    Test {
        #[command(flatten)]
        input: DataArgs,
        /// Constraint file (`<label> <eq|le> : <expr>` per line).
        #[arg(long)]
        constraints: PathBuf,
        #[command(flatten)]
        test: TestArgs,
    },
    /// Goodness-of-fit test of a Gaussian latent tree model.
    TreeTest {
        #[command(flatten)]
        input: DataArgs,
        /// Tree file, one `nodeA nodeB` edge per line. Data column j is the
        /// j-th leaf in order of first appearance.
        #[arg(long)]
        tree: PathBuf,
        #[arg(long, value_enum, default_value_t = ModeArg::All)]
        mode: ModeArg,
        #[command(flatten)]
        test: TestArgs,
    },
    /// List the constraints of a latent tree model.
    Constraints {
        #[arg(long)]
        tree: PathBuf,
        #[arg(long, value_enum, default_value_t = ModeArg::All)]
        mode: ModeArg,
        /// `listing` for a readable table, `file` for the constraint-file format.
        #[arg(long, value_enum, default_value_t = Format::Listing)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Empirical size over replicated null data sets.
    SimulateSize {
        #[command(flatten)]
        sim: SimArgs,
        /// Comma-separated nominal levels.
        #[arg(long, default_value = "0.01,0.05,0.1", value_delimiter = ',')]
        alphas: Vec<f64>,
        #[arg(long, value_enum, default_value_t = ModeArg::Eq)]
        mode: ModeArg,
    },
    /// Empirical power at level 0.05 under local alternatives.
    SimulatePower {
        #[command(flatten)]
        sim: SimArgs,
        /// Comma-separated shifts h of the alternative `Σ + γγᵀ h/√n`.
        #[arg(long, default_value = "0,4,8,12", value_delimiter = ',', allow_hyphen_values = true)]
        shift_grid: Vec<f64>,
        #[arg(long, value_enum, default_value_t = ModeArg::All)]
        mode: ModeArg,
    },
    /// One p-value per null replicate.
    SimulatePvalues {
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long, value_enum, default_value_t = ModeArg::Eq)]
        mode: ModeArg,
    },
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Numeric CSV, one sample per row.
    #[arg(long)]
    data: PathBuf,
    /// Treat the first CSV row as a header.
    #[arg(long)]
    skip_header: bool,
}

#[derive(Args, Debug)]
struct TestArgs {
    /// Computational budget N: a number or a multiple of n such as `2n`.
    #[arg(long = "budget-N", default_value = "2n")]
    budget: String,
    /// Size of the subset used for the projection variance; defaults to n.
    #[arg(long)]
    n1: Option<usize>,
    /// Bootstrap replicates A.
    #[arg(long = "boot-A", default_value_t = 1000)]
    boot_a: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimArgs {
    #[arg(long, value_enum, default_value_t = SetupArg::A)]
    setup: SetupArg,
    /// Number of observed leaves.
    #[arg(long, default_value_t = 8)]
    l: usize,
    /// Sample size per replicate.
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 300)]
    reps: usize,
    /// Comma-separated budgets, each a number or a multiple of n such as `2n`.
    #[arg(long = "budget-N", default_value = "2n", value_delimiter = ',')]
    budgets: Vec<String>,
    #[arg(long = "boot-A", default_value_t = 500)]
    boot_a: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write 0 in the wall_time_s column so that reruns are byte-identical.
    #[arg(long)]
    no_timing: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Eq,
    All,
}

impl From<ModeArg> for ConstraintMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Eq => ConstraintMode::EqualitiesOnly,
            ModeArg::All => ConstraintMode::All,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SetupArg {
    A,
    B,
    C,
}

impl From<SetupArg> for Setup {
    fn from(s: SetupArg) -> Self {
        match s {
            SetupArg::A => Setup::A,
            SetupArg::B => Setup::B,
            SetupArg::C => Setup::C,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Listing,
    File,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.threads.unwrap_or(0);
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::from(1);
        }
    };
    match pool.install(|| run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Input(_) | Error::Config(_) | Error::Tree(_) => 2,
        Error::DegenerateCoordinate { .. } => 3,
        _ => 1,
    }
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Test {
            input,
            constraints,
            test,
        } => {
            let data = read_csv_file(&input.data, input.skip_header)?;
            let text = read_text(&constraints)?;
            let parsed = parse_constraint_file(&text, data.ncols())
                .map_err(|e| prefix_input(e, &constraints))?;
            let report = test_constraints(&data, &parsed, &test)?;
            emit_report(&report, test.out.as_deref())
        }
        Command::TreeTest {
            input,
            tree,
            mode,
            test,
        } => {
            let data = read_csv_file(&input.data, input.skip_header)?;
            let tree = load_tree(&tree)?;
            if tree.leaf_count() != data.ncols() {
                return Err(Error::Input(format!(
                    "the tree has {} leaves but the data has {} columns",
                    tree.leaf_count(),
                    data.ncols()
                )));
            }
            let set = enumerate_constraints(&tree, mode.into())?;
            let report = test_constraints(&data, &set.constraints(), &test)?;
            emit_report(&report, test.out.as_deref())
        }
        Command::Constraints {
            tree,
            mode,
            format,
            out,
        } => {
            let tree = load_tree(&tree)?;
            let set = enumerate_constraints(&tree, mode.into())?;
            let text = match format {
                Format::File => write_constraint_file(&set.constraints()),
                Format::Listing => {
                    let mut s = String::new();
                    for c in set.iter() {
                        let leaves: Vec<&str> = c.leaves.iter().map(|&i| tree.leaf_name(i)).collect();
                        let (kind, op) = match c.constraint.kind {
                            ConstraintKind::Equality => ("eq", "="),
                            ConstraintKind::Inequality => ("ineq", "<="),
                        };
                        s.push_str(&format!(
                            "{}\t({})\t{kind}\t{} {op} 0\n",
                            c.tag.as_str(),
                            leaves.join(","),
                            format_sigma_poly(&c.constraint.poly, &tree)
                        ));
                    }
                    for tag in ConstraintTag::ALL {
                        s.push_str(&format!("# {} {}\n", tag.as_str(), set.count(tag)));
                    }
                    s.push_str(&format!("# total {}\n", set.len()));
                    s
                }
            };
            eprintln!("{} constraints on {} leaves", set.len(), tree.leaf_count());
            emit(&text, out.as_deref())
        }
        Command::SimulateSize { sim, alphas, mode } => {
            let mut cfg = experiment(&sim, mode)?;
            cfg.alphas = alphas;
            let table = empirical_size(&cfg)?;
            for row in &table.rows {
                eprintln!(
                    "N={} alpha={}: rejection rate {:.4} (se {:.4}, {} reps)",
                    row.budget, row.level, row.rejection_rate, row.mc_se, row.reps
                );
            }
            emit(&table.to_csv(), sim.out.as_deref())
        }
        Command::SimulatePower {
            sim,
            shift_grid,
            mode,
        } => {
            let mut cfg = experiment(&sim, mode)?;
            cfg.shift_grid = shift_grid;
            let table = empirical_power(&cfg)?;
            for row in &table.rows {
                eprintln!(
                    "N={} h={}: rejection rate {:.4} (se {:.4}, {} reps)",
                    row.budget, row.level, row.rejection_rate, row.mc_se, row.reps
                );
            }
            emit(&table.to_csv(), sim.out.as_deref())
        }
        Command::SimulatePvalues { sim, mode } => {
            let cfg = experiment(&sim, mode)?;
            let p = pvalue_study(&cfg)?;
            eprintln!(
                "{} p-values, KS distance to uniform {:.4}",
                p.len(),
                ks_uniform_distance(&p)
            );
            emit(&pvalues_to_csv(&p), sim.out.as_deref())
        }
    }
}

fn read_text(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))
}

fn prefix_input(e: Error, path: &Path) -> Error {
    match e {
        Error::Input(m) => Error::Input(format!("{}: {m}", path.display())),
        other => other,
    }
}

fn load_tree(path: &Path) -> Result<Tree, Error> {
    Tree::parse(&read_text(path)?).map_err(|e| match e {
        Error::Tree(m) => Error::Tree(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Parses `400`, `2n` or `1.5n`.
fn parse_budget(spec: &str, n: usize) -> Result<f64, Error> {
    let spec = spec.trim();
    let value = match spec.strip_suffix('n') {
        Some("") => Some(n as f64),
        Some(k) => k.parse::<f64>().ok().map(|k| k * n as f64),
        None => spec.parse::<f64>().ok(),
    };
    match value {
        Some(v) if v.is_finite() => Ok(v.floor()),
        _ => Err(Error::Input(format!("cannot parse budget `{spec}` (expected a number or e.g. `2n`)"))),
    }
}

fn test_constraints(
    data: &Array2<f64>,
    constraints: &[Constraint],
    args: &TestArgs,
) -> Result<TestReport, Error> {
    if constraints.is_empty() {
        return Err(Error::Input("empty constraint set".into()));
    }
    let n = data.nrows();
    let kernel = SymmetricKernel::from_constraints(constraints, Arc::new(CovarianceEstimators::new(data.ncols())))?;
    let m = kernel.order();
    let mut budget = parse_budget(&args.budget, n)?;
    let total = binomial_coefficient(n, m) as f64;
    if budget > total && n >= m {
        eprintln!("note: budget N = {budget} exceeds the {total} available tuples; using {total}");
        budget = total;
    }
    let budget = BudgetConfig::new(n, m, budget, args.seed)?;
    let boot = BootstrapConfig::new(args.boot_a, args.alpha, derive_seed(args.seed, &[role::MULTIPLIERS]))?;
    let report = run_test_n1(data.view(), &kernel, &budget, &boot, args.n1.unwrap_or(n))?;
    eprintln!(
        "{} constraints, n = {n}, m = {m}, N = {}, sampled tuples = {}",
        constraints.len(),
        report.budget,
        report.n_hat
    );
    eprintln!(
        "T = {:.4}, critical value = {:.4}, p-value = {:.4}: {} at level {}",
        report.t_stat,
        report.critical_value,
        report.p_value,
        if report.reject { "reject" } else { "do not reject" },
        report.alpha
    );
    Ok(report)
}

fn emit_report(report: &TestReport, out: Option<&Path>) -> Result<(), Error> {
    let mut json = serde_json::to_string_pretty(report).map_err(|e| Error::Io(e.to_string()))?;
    json.push('\n');
    emit(&json, out)
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), Error> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn experiment(sim: &SimArgs, mode: ModeArg) -> Result<ExperimentConfig, Error> {
    let budgets = sim
        .budgets
        .iter()
        .map(|b| parse_budget(b, sim.n))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ExperimentConfig {
        setup: sim.setup.into(),
        l: sim.l,
        n: sim.n,
        budgets,
        mode: mode.into(),
        reps: sim.reps,
        alphas: Vec::new(),
        shift_grid: Vec::new(),
        boot_replicates: sim.boot_a,
        master_seed: sim.seed,
        record_timing: !sim.no_timing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budget_specs() {
        assert_eq!(parse_budget("2n", 100).unwrap(), 200.0);
        assert_eq!(parse_budget("n", 7).unwrap(), 7.0);
        assert_eq!(parse_budget("0.5n", 7).unwrap(), 3.0);
        assert_eq!(parse_budget("1234", 7).unwrap(), 1234.0);
        assert!(parse_budget("two", 7).is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Input("x".into())), 2);
        assert_eq!(exit_code(&Error::Tree("x".into())), 2);
        assert_eq!(exit_code(&Error::DegenerateCoordinate { label: "x".into() }), 3);
        assert_eq!(exit_code(&Error::Invariant("x".into())), 1);
    }
}
