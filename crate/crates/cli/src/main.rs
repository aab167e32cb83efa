//! `altserve`: command-line front end for the transient engines.

mod ranges;

use std::io::Write;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use altserve::distributions::{PrepTimeModel, ServiceTimeModel, TimeLaw};
use altserve::exp_exact::{self, ExpCaseParams};
use altserve::gf_fixedpoint::{GfProblem, DEFAULT_GRID_POINTS, DEFAULT_TOL};
use altserve::lindley_ref::{self, GM1Params};
use altserve::output::{Format, Table, Value};
use altserve::phase_markov::{build_chain, PhaseChain};
use altserve::sim::{self, CycleMode, RecursionKind, SimCdf, SimConfig};
use altserve::verify::{self, Scale};
use altserve::{Error, InitialCondition, Result};

use ranges::{parse_reals, parse_steps};

#[derive(Parser, Debug)]
#[command(name = "altserve", version, about = "Transient analysis of the alternating-service recursion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct OutputArgs {
    /// Output format
    #[arg(long, default_value = "csv")]
    format: String,
    /// Write to this file instead of standard output
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args, Debug, Clone)]
struct ModelArgs {
    /// Preparation time, e.g. exp:mu=1, erlang:k=2,mu=1, mixederlang:mu=1,q=0.3|0.7
    #[arg(long)]
    prep: String,
    /// Service time, e.g. exp:lambda=1, erlang:k=2,nu=1, det:d=0.5, hyperexp:p=0.5|0.5,lambda=1|3
    #[arg(long)]
    service: String,
}

#[derive(Args, Debug, Clone)]
struct InitialArgs {
    /// First waiting time: a number, `b1`, or `stationary`
    #[arg(long, default_value = "0")]
    w1: String,
    /// Shorthand for --w1 stationary
    #[arg(long)]
    stationary: bool,
}

impl InitialArgs {
    fn parse(&self) -> Result<InitialCondition> {
        if self.stationary {
            return Ok(InitialCondition::Stationary);
        }
        match self.w1.trim() {
            "b1" | "B1" => Ok(InitialCondition::EqualsB1),
            "stationary" => Ok(InitialCondition::Stationary),
            raw => {
                let w: f64 = raw
                    .parse()
                    .map_err(|_| Error::parse(raw, "expected a number, `b1` or `stationary`"))?;
                if !(w.is_finite() && w >= 0.0) {
                    return Err(Error::parse(raw, "w1 must be a nonnegative number"));
                }
                Ok(InitialCondition::Fixed(w))
            }
        }
    }

    fn is_stationary(&self) -> bool {
        self.stationary || self.w1.trim() == "stationary"
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// P[W_n <= x] from the exact engines
    Transient {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        initial: InitialArgs,
        #[arg(long, default_value = "2")]
        n: String,
        #[arg(long, default_value = "0")]
        x: String,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Regeneration-cycle pmf P[C = n]
    Cycle {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value = "1..10")]
        n: String,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// cov[W_n, W_{n+k}]
    Cov {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        initial: InitialArgs,
        /// Base step (defaults to 1 for a stationary start, 2 otherwise)
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value = "1..5")]
        k: String,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Generating function H(r, x) by fixed-point iteration
    Gf {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        initial: InitialArgs,
        #[arg(long, default_value = "0.5")]
        r: String,
        #[arg(long, default_value = "0")]
        x: String,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        #[arg(long, default_value_t = DEFAULT_GRID_POINTS)]
        points: usize,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Dumps of the remaining-phase chain
    Phase {
        #[command(subcommand)]
        what: PhaseCommand,
    },
    /// G/M/1 reference quantities
    Lindley {
        #[command(subcommand)]
        what: LindleyCommand,
    },
    /// Monte Carlo estimates
    Simulate {
        #[command(subcommand)]
        what: SimulateCommand,
    },
    /// Analytic-versus-simulation cross-checks with a PASS/FAIL report
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100_000)]
        reps: usize,
        #[arg(long)]
        out: Option<String>,
    },
}

#[derive(Subcommand, Debug)]
enum PhaseCommand {
    /// Transition matrix as i,j,p_ij
    Matrix {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Law of the remaining phases at step n as state,prob
    Law {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        initial: InitialArgs,
        #[arg(long, default_value = "2")]
        n: usize,
        #[command(flatten)]
        output: OutputArgs,
    },
}

#[derive(Args, Debug, Clone)]
struct Gm1Args {
    /// Service rate of the queue (exponential service times)
    #[arg(long)]
    mu: f64,
    /// Interarrival time law
    #[arg(long)]
    service: String,
    #[arg(long, default_value = "0.5")]
    r: String,
}

#[derive(Subcommand, Debug)]
enum LindleyCommand {
    /// Root eta(r) of mu r alpha(eta) = mu - eta
    Eta {
        #[command(flatten)]
        gm1: Gm1Args,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// (1 - r) sum_n r^n P[W^L_{n+1} > x]
    Tail {
        #[command(flatten)]
        gm1: Gm1Args,
        #[arg(long, default_value = "0")]
        x: String,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// P[W^L_{k+1} > x] for M/M/1 with rho = 1
    Rho1 {
        #[arg(long, default_value_t = 1.0)]
        mu: f64,
        #[arg(long, default_value = "0..10")]
        k: String,
        #[arg(long, default_value = "0")]
        x: String,
        #[arg(long, default_value_t = 1e-16)]
        trunc_tol: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// M/M/1 busy-cycle pmf
    BusyPmf {
        #[arg(long)]
        rho: f64,
        #[arg(long, default_value = "1..10")]
        n: String,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Busy-cycle generating function E[r^C]
    BusyPgf {
        #[command(flatten)]
        gm1: Gm1Args,
        #[command(flatten)]
        output: OutputArgs,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Kind {
    Alternating,
    Lindley,
}

#[derive(Args, Debug, Clone)]
struct SimArgs {
    /// Preparation time B (any distribution family)
    #[arg(long)]
    prep: String,
    #[arg(long)]
    service: String,
    #[command(flatten)]
    initial: InitialArgs,
    #[arg(long, value_enum, default_value = "alternating")]
    kind: Kind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100_000)]
    reps: usize,
}

impl SimArgs {
    fn config(&self) -> Result<SimConfig> {
        let service: ServiceTimeModel = self.service.parse()?;
        let prep: TimeLaw = self.prep.parse()?;
        let kind = match self.kind {
            Kind::Alternating => RecursionKind::Alternating,
            Kind::Lindley => RecursionKind::Lindley,
        };
        Ok(SimConfig::new(kind, service, prep)
            .initial(self.initial.parse()?)
            .replications(self.reps)
            .seed(self.seed))
    }
}

#[derive(Subcommand, Debug)]
enum SimulateCommand {
    /// Empirical P[W_n <= x] with standard errors
    Cdf {
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long, default_value = "2")]
        n: String,
        #[arg(long, default_value = "0")]
        x: String,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Sample covariance of (W_n, W_{n+k})
    Cov {
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value = "1..4")]
        k: String,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Regeneration-cycle histogram from W1 = 0
    Cycle {
        #[command(flatten)]
        sim: SimArgs,
        /// Longest cycle length tracked individually
        #[arg(long, default_value_t = 20)]
        ncap: usize,
        #[arg(long, default_value_t = 100_000)]
        cycles: u64,
        /// Draw each cycle from its own stream instead of one long path
        #[arg(long)]
        independent: bool,
        #[command(flatten)]
        output: OutputArgs,
    },
}

fn emit(table: &Table, output: &OutputArgs) -> Result<()> {
    let format: Format = output.format.parse()?;
    write_text(&table.render(format), output.out.as_deref())
}

fn write_text(text: &str, out: Option<&str>) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| Error::invalid(format!("cannot write {path}: {e}"))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| Error::invalid(format!("cannot write output: {e}")))
        }
    }
}

/// The exact engine for a model: closed forms for one phase, the phase
/// chain otherwise.
enum Engine {
    Exp(ExpCaseParams),
    Chain(PhaseChain, InitialCondition),
}

impl Engine {
    fn new(model: &ModelArgs, initial: InitialCondition) -> Result<Self> {
        let prep: PrepTimeModel = model.prep.parse()?;
        let service: ServiceTimeModel = model.service.parse()?;
        if prep.is_exponential() {
            Ok(Engine::Exp(ExpCaseParams::from_prep(&prep, service, initial)?))
        } else {
            Ok(Engine::Chain(build_chain(&prep, &service)?, initial))
        }
    }

    fn cdf(&self, n: usize, x: f64) -> Result<f64> {
        match self {
            Engine::Exp(p) => exp_exact::transient_cdf(p, n, x),
            Engine::Chain(c, init) => c.transient_cdf(init, n, x),
        }
    }

    fn cycle_pmf(&self, n: usize) -> Result<f64> {
        match self {
            Engine::Exp(p) => exp_exact::cycle_pmf(p, n),
            Engine::Chain(c, _) => c.cycle_pmf(n),
        }
    }

    fn covariance(&self, n: usize, k: usize) -> Result<f64> {
        match self {
            Engine::Exp(p) => exp_exact::covariance(p, n, k),
            Engine::Chain(c, init) => c.covariance(init, n, k),
        }
    }
}

fn run(command: Command) -> Result<bool> {
    match command {
        Command::Transient {
            model,
            initial,
            n,
            x,
            output,
        } => {
            let engine = Engine::new(&model, initial.parse()?)?;
            let ns = parse_steps(&n)?;
            let xs = parse_reals(&x)?;
            let mut t = Table::new(&["n", "x", "cdf", "p_zero"]);
            for &step in &ns {
                let p_zero = engine.cdf(step, 0.0)?;
                for &xv in &xs {
                    t.push(vec![
                        Value::Int(step as i64),
                        Value::Float(xv),
                        Value::Float(engine.cdf(step, xv)?),
                        Value::Float(p_zero),
                    ]);
                }
            }
            emit(&t, &output)?;
        }
        Command::Cycle { model, n, output } => {
            let engine = Engine::new(&model, InitialCondition::zero())?;
            let mut t = Table::new(&["c", "prob"]);
            for c in parse_steps(&n)? {
                t.push(vec![Value::Int(c as i64), Value::Float(engine.cycle_pmf(c)?)]);
            }
            emit(&t, &output)?;
        }
        Command::Cov {
            model,
            initial,
            n,
            k,
            output,
        } => {
            let base = n.unwrap_or(if initial.is_stationary() { 1 } else { 2 });
            let engine = Engine::new(&model, initial.parse()?)?;
            let mut t = Table::new(&["k", "cov"]);
            for lag in parse_steps(&k)? {
                t.push(vec![Value::Int(lag as i64), Value::Float(engine.covariance(base, lag)?)]);
            }
            emit(&t, &output)?;
        }
        Command::Gf {
            model,
            initial,
            r,
            x,
            tol,
            points,
            output,
        } => {
            let prep: PrepTimeModel = model.prep.parse()?;
            let service: ServiceTimeModel = model.service.parse()?;
            let problem = GfProblem::with_grid(&service, &prep, &initial.parse()?, points, None)?;
            let xs = parse_reals(&x)?;
            let mut t = Table::new(&["r", "x", "H", "certificate"]);
            for rv in parse_reals(&r)? {
                let sol = problem.solve(rv, tol)?;
                t.rows.extend(sol.to_table(&xs).rows);
            }
            emit(&t, &output)?;
        }
        Command::Phase { what } => match what {
            PhaseCommand::Matrix { model, output } => {
                let chain = build_chain(&model.prep.parse()?, &model.service.parse()?)?;
                emit(&chain.matrix_table(), &output)?;
            }
            PhaseCommand::Law {
                model,
                initial,
                n,
                output,
            } => {
                let chain = build_chain(&model.prep.parse()?, &model.service.parse()?)?;
                emit(&chain.phase_law_at(&initial.parse()?, n)?.to_table(), &output)?;
            }
        },
        Command::Lindley { what } => run_lindley(what)?,
        Command::Simulate { what } => run_simulate(what)?,
        Command::Verify { seed, reps, out } => {
            let report = verify::run_all(Scale::new(reps, seed))?;
            write_text(&report.render(), out.as_deref())?;
            return Ok(report.passed());
        }
    }
    Ok(true)
}

fn gm1_list(args: &Gm1Args) -> Result<Vec<GM1Params>> {
    let service: ServiceTimeModel = args.service.parse()?;
    parse_reals(&args.r)?
        .into_iter()
        .map(|r| GM1Params::new(args.mu, service.clone(), r))
        .collect()
}

fn run_lindley(what: LindleyCommand) -> Result<()> {
    match what {
        LindleyCommand::Eta { gm1, output } => {
            let mut t = Table::new(&["r", "eta"]);
            for p in gm1_list(&gm1)? {
                t.push(vec![Value::Float(p.r), Value::Float(lindley_ref::eta_root(&p)?)]);
            }
            emit(&t, &output)
        }
        LindleyCommand::Tail { gm1, x, output } => {
            let xs = parse_reals(&x)?;
            let mut t = Table::new(&["r", "eta", "x", "tail"]);
            for p in gm1_list(&gm1)? {
                let eta = lindley_ref::eta_root(&p)?;
                for &xv in &xs {
                    t.push(vec![
                        Value::Float(p.r),
                        Value::Float(eta),
                        Value::Float(xv),
                        Value::Float(lindley_ref::geometric_tail(&p, xv)?),
                    ]);
                }
            }
            emit(&t, &output)
        }
        LindleyCommand::Rho1 {
            mu,
            k,
            x,
            trunc_tol,
            output,
        } => {
            let xs = parse_reals(&x)?;
            let mut t = Table::new(&["k", "x", "tail"]);
            for kv in parse_steps(&k)? {
                for &xv in &xs {
                    t.push(vec![
                        Value::Int(kv as i64),
                        Value::Float(xv),
                        Value::Float(lindley_ref::mm1_rho1_transient_tail(mu, kv, xv, trunc_tol)?),
                    ]);
                }
            }
            emit(&t, &output)
        }
        LindleyCommand::BusyPmf { rho, n, output } => {
            let mut t = Table::new(&["n", "pmf"]);
            for nv in parse_steps(&n)? {
                t.push(vec![Value::Int(nv as i64), Value::Float(lindley_ref::mm1_busy_cycle_pmf(rho, nv)?)]);
            }
            emit(&t, &output)
        }
        LindleyCommand::BusyPgf { gm1, output } => {
            let mut t = Table::new(&["r", "pgf"]);
            for p in gm1_list(&gm1)? {
                t.push(vec![Value::Float(p.r), Value::Float(lindley_ref::busy_cycle_pgf(&p)?)]);
            }
            emit(&t, &output)
        }
    }
}

fn run_simulate(what: SimulateCommand) -> Result<()> {
    match what {
        SimulateCommand::Cdf { sim, n, x, output } => {
            let ns = parse_steps(&n)?;
            let mut xs = parse_reals(&x)?;
            xs.sort_by(|a, b| a.total_cmp(b));
            xs.dedup();
            let horizon = ns.iter().copied().max().unwrap_or(2).max(2);
            let cfg = sim.config()?.horizon(horizon).x_grid(xs);
            let cdfs = sim::estimate_transient_cdfs(&cfg, &ns)?;
            emit(&SimCdf::to_table(&cdfs), &output)
        }
        SimulateCommand::Cov { sim, n, k, output } => {
            let ks = parse_steps(&k)?;
            let horizon = (n + ks.iter().copied().max().unwrap_or(0)).max(2);
            let cfg = sim.config()?.horizon(horizon);
            let est = sim::estimate_covariances(&cfg, n, &ks)?;
            emit(&sim::covariance_table(&ks, &est), &output)
        }
        SimulateCommand::Cycle {
            sim,
            ncap,
            cycles,
            independent,
            output,
        } => {
            let cfg = sim.config()?;
            let mode = if independent {
                CycleMode::Independent
            } else {
                CycleMode::LongPath
            };
            let hist = sim::estimate_cycle_distribution(&cfg, ncap, cycles, mode)?;
            emit(&hist.to_table(), &output)
        }
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(raw) = std::env::var("ALTSERVE_THREADS") {
        let threads: usize = raw
            .trim()
            .parse()
            .map_err(|_| Error::parse(raw.trim(), "ALTSERVE_THREADS must be a positive integer"))?;
        if threads == 0 {
            return Err(Error::parse(raw.trim(), "ALTSERVE_THREADS must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::invalid(format!("cannot size thread pool: {e}")))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|_| run(cli.command));
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
