use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ndarray::Array2;

use ntf_core::block::{write_trace, MeshEngine, MeshOptions, PartitionPlan, Scheduler};
use ntf_core::experiment::{
    als_baseline, generate, parse_dims, read_state, run_experiment, write_history, write_outputs, write_state,
    EngineChoice, ExperimentSpec,
};
use ntf_core::solver::{fit_with_engine, kkt_residuals, CentralizedEngine, Engine, SolverState};
use ntf_core::tensor::io::{load_dense, save_dense};
use ntf_core::{fit, ConstraintSpec, DenseTensor, FitResult, SolverConfig};

#[derive(Parser)]
#[command(name = "ntf", version, about = "Constrained CP tensor factorization with ADMM")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic tensor: uniform random factors plus Gaussian noise.
    Generate(GenerateArgs),
    /// Factorize one tensor and print a summary.
    Fit(FitArgs),
    /// Run an experiment batch described by a config file.
    Bench(BenchArgs),
    /// Compare centralized and mesh trajectories on one instance.
    Equivcheck(EquivArgs),
    /// Evaluate the KKT residuals of a saved solver state.
    Kkt(KktArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Extents, e.g. 50x50x50.
    #[arg(long)]
    dims: Dims,
    #[arg(long)]
    rank: usize,
    #[arg(long, default_value_t = 0.0)]
    sigma2: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; `.coo`/`.txt` for text, anything else binary.
    #[arg(long, short)]
    output: PathBuf,
    /// Also write the generating factors as a solver state file.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args, Clone, Default)]
struct SolverArgs {
    #[arg(long)]
    eps_abs: Option<f64>,
    #[arg(long)]
    eps_rel: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    tau_incr: Option<f64>,
    #[arg(long)]
    tau_decr: Option<f64>,
    #[arg(long)]
    rho_init: Option<f64>,
    #[arg(long)]
    n_max: Option<usize>,
    #[arg(long)]
    max_restarts: Option<usize>,
    #[arg(long)]
    inner_sweeps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Keep every penalty at rho_init.
    #[arg(long)]
    no_adapt: bool,
}

impl SolverArgs {
    fn apply(&self, cfg: &mut SolverConfig) {
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { cfg.$f = v; })* };
        }
        set!(eps_abs, eps_rel, mu, tau_incr, tau_decr, rho_init, n_max, max_restarts, inner_sweeps, seed);
        if self.no_adapt {
            cfg.adapt_penalties = false;
        }
    }

    fn config(&self) -> SolverConfig {
        let mut cfg = SolverConfig::default();
        self.apply(&mut cfg);
        cfg
    }
}

#[derive(Args)]
struct FitArgs {
    /// Tensor file.
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long)]
    rank: usize,
    /// Constraint for every mode: none, nonneg, nonneg_card:C or row_stochastic.
    #[arg(long, default_value = "nonneg")]
    constraint: ConstraintSpec,
    /// Per-mode constraints, comma separated; overrides --constraint.
    #[arg(long, value_delimiter = ',')]
    constraints: Option<Vec<ConstraintSpec>>,
    /// centralized, mesh:N or als.
    #[arg(long, default_value = "centralized")]
    engine: EngineChoice,
    /// Execution of the mesh elements: sequential or threaded.
    #[arg(long, default_value = "sequential", value_parser = parse_scheduler)]
    scheduler: Scheduler,
    #[command(flatten)]
    solver: SolverArgs,
    /// Write the final solver state here.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Write the per-iteration residual history (CSV) here.
    #[arg(long)]
    history: Option<PathBuf>,
    /// Write the mesh message trace (CSV) here.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Key-value experiment config.
    #[arg(long, short)]
    config: PathBuf,
    /// Output directory; overrides the config's `output` key.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Worker threads for running realizations in parallel.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    realizations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EquivArgs {
    /// Tensor file; when absent a synthetic instance is generated.
    #[arg(long, short)]
    input: Option<PathBuf>,
    #[arg(long, default_value = "8x8x8")]
    dims: Dims,
    #[arg(long, default_value_t = 2)]
    rank: usize,
    #[arg(long, default_value_t = 1e-2)]
    sigma2: f64,
    /// Seed of the data and of the solver.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "mesh:2")]
    engine: EngineChoice,
    #[arg(long, default_value = "sequential", value_parser = parse_scheduler)]
    scheduler: Scheduler,
    #[arg(long, default_value_t = 50)]
    iterations: usize,
    #[arg(long, default_value = "nonneg")]
    constraint: ConstraintSpec,
    /// Fail if the deviation exceeds this.
    #[arg(long)]
    tolerance: Option<f64>,
}

#[derive(Args)]
struct KktArgs {
    #[arg(long, short)]
    tensor: PathBuf,
    /// Solver state file written by `fit --output`.
    #[arg(long, short)]
    state: PathBuf,
}

/// Tensor extents written as `50x50x50`.
#[derive(Clone, Debug)]
struct Dims(Vec<usize>);

impl std::str::FromStr for Dims {
    type Err = ntf_core::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_dims(s).map(Dims)
    }
}

fn parse_scheduler(s: &str) -> Result<Scheduler, String> {
    match s {
        "sequential" => Ok(Scheduler::Sequential),
        "threaded" => Ok(Scheduler::Threaded),
        _ => Err(format!("unknown scheduler `{s}`, expected sequential or threaded")),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("cannot create {}", path.display()))?))
}

fn cmd_generate(a: GenerateArgs) -> Result<()> {
    let (t, truth) = generate(&a.dims.0, a.rank, a.sigma2, a.seed)?;
    save_dense(&t, &a.output).with_context(|| format!("cannot write {}", a.output.display()))?;
    if let Some(path) = &a.truth {
        let factors = truth.into_factors();
        let state = SolverState {
            duals: factors.iter().map(|u| u.mapv(|_| 0.0)).collect(),
            aux: factors.clone(),
            factors,
            penalties: vec![1.0; a.dims.0.len()],
            iter: 0,
        };
        write_state(create(path)?, &state, &vec![ConstraintSpec::NonNegative; a.dims.0.len()])?;
    }
    println!("wrote {} ({:?}, norm {:e})", a.output.display(), t.dims(), t.norm());
    Ok(())
}

fn run_fit(
    t: &DenseTensor,
    rank: usize,
    specs: &[ConstraintSpec],
    cfg: &SolverConfig,
    engine: EngineChoice,
    scheduler: Scheduler,
    trace: Option<&Path>,
) -> Result<FitResult> {
    if trace.is_some() && !matches!(engine, EngineChoice::Mesh(_)) {
        bail!("--trace needs a mesh engine");
    }
    Ok(match engine {
        EngineChoice::Centralized => fit(t, rank, specs, cfg)?,
        EngineChoice::Als => als_baseline(t, rank, cfg)?,
        EngineChoice::Mesh(n) => {
            let plan = PartitionPlan::even(t.dims(), n)?;
            let options = MeshOptions { scheduler, trace: trace.is_some() };
            let mut mesh = MeshEngine::new(t, rank, specs, cfg, &plan, options)?;
            let r = fit_with_engine(&mut mesh, t, rank, specs, cfg, |_, _| {})?;
            println!("messages = {}", mesh.message_count());
            if let Some(path) = trace {
                write_trace(create(path)?, mesh.trace())?;
            }
            r
        }
    })
}

fn specs_for(order: usize, all: ConstraintSpec, per_mode: Option<Vec<ConstraintSpec>>) -> Result<Vec<ConstraintSpec>> {
    let specs = per_mode.unwrap_or_else(|| vec![all; order]);
    if specs.len() != order {
        bail!("{} constraints given for an order-{order} tensor", specs.len());
    }
    Ok(specs)
}

fn cmd_fit(a: FitArgs) -> Result<()> {
    let t = load_dense(&a.input).with_context(|| format!("cannot read {}", a.input.display()))?;
    let specs = specs_for(t.order(), a.constraint, a.constraints)?;
    let mut cfg = a.solver.config();
    cfg.record_rfe = a.history.is_some();
    let r = run_fit(&t, a.rank, &specs, &cfg, a.engine, a.scheduler, a.trace.as_deref())?;
    println!("rfe = {:e}", r.rfe);
    println!("iterations = {}", r.iterations);
    println!("restarts = {}", r.restarts);
    println!("converged = {}", r.converged);
    if let Some(path) = &a.output {
        write_state(create(path)?, &r.state, &specs)?;
    }
    if let Some(path) = &a.history {
        write_history(create(path)?, &r)?;
    }
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.config).with_context(|| format!("cannot read {}", a.config.display()))?;
    let mut spec = ExperimentSpec::from_config(&text)?;
    if let Some(r) = a.realizations {
        spec.realizations = r;
    }
    if let Some(s) = a.seed {
        spec.solver.seed = s;
    }
    let dir = a.output.or(spec.output.clone()).unwrap_or_else(|| PathBuf::from("bench-out"));
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = a.threads {
        pool = pool.num_threads(n);
    }
    let records = pool.build()?.install(|| run_experiment(&spec))?;
    let s = write_outputs(&dir, &records)?;
    println!(
        "realizations = {}\nmean_rfe = {:.4}\nstd_rfe = {:.4}\nmean_time_s = {:.3}\nstd_time_s = {:.3}\nmean_restarts = {}\nconverged = {}/{}",
        s.realizations, s.mean_rfe, s.std_rfe, s.mean_time, s.std_time, s.mean_restarts, s.converged, s.realizations
    );
    println!("wrote {}", dir.display());
    Ok(())
}

fn trajectory(engine: &mut dyn Engine, t: &DenseTensor, rank: usize, specs: &[ConstraintSpec], cfg: &SolverConfig) -> Result<Vec<Vec<Array2<f64>>>> {
    let mut out = Vec::new();
    fit_with_engine(engine, t, rank, specs, cfg, |_, s| out.push(s.factors.clone()))?;
    Ok(out)
}

fn cmd_equivcheck(a: EquivArgs) -> Result<()> {
    let t = match &a.input {
        Some(p) => load_dense(p).with_context(|| format!("cannot read {}", p.display()))?,
        None => generate(&a.dims.0, a.rank, a.sigma2, a.seed)?.0,
    };
    let EngineChoice::Mesh(n) = a.engine else {
        bail!("equivcheck compares against a mesh engine, got {}", a.engine);
    };
    let specs = vec![a.constraint; t.order()];
    let cfg = SolverConfig { seed: a.seed, n_max: a.iterations, max_restarts: 0, eps_abs: 0.0, eps_rel: 0.0, ..Default::default() };
    let central = trajectory(&mut CentralizedEngine::new(&t, &specs, &cfg), &t, a.rank, &specs, &cfg)?;
    let plan = PartitionPlan::even(t.dims(), n)?;
    let options = MeshOptions { scheduler: a.scheduler, trace: false };
    let mut mesh = MeshEngine::new(&t, a.rank, &specs, &cfg, &plan, options)?;
    let distributed = trajectory(&mut mesh, &t, a.rank, &specs, &cfg)?;
    if central.len() != distributed.len() {
        bail!("trajectory lengths differ: {} vs {}", central.len(), distributed.len());
    }
    let mut worst = 0.0f64;
    for (c, d) in central.iter().zip(&distributed) {
        for (x, y) in c.iter().zip(d) {
            let diff = (y - x).mapv(|v| v * v).sum().sqrt();
            let scale = x.mapv(|v| v * v).sum().sqrt();
            worst = worst.max(if scale > 0.0 { diff / scale } else { diff });
        }
    }
    println!("iterations = {}", central.len());
    println!("messages = {}", mesh.message_count());
    println!("max_deviation = {worst:e}");
    if let Some(tol) = a.tolerance {
        if !(worst <= tol) {
            bail!("deviation {worst:e} exceeds tolerance {tol:e}");
        }
    }
    Ok(())
}

fn cmd_kkt(a: KktArgs) -> Result<()> {
    let t = load_dense(&a.tensor).with_context(|| format!("cannot read {}", a.tensor.display()))?;
    let file = File::open(&a.state).with_context(|| format!("cannot read {}", a.state.display()))?;
    let (state, specs) = read_state(file)?;
    if state.dims() != t.dims() {
        bail!("state dims {:?} do not match tensor dims {:?}", state.dims(), t.dims());
    }
    let k = kkt_residuals(&state, &t, &specs)?;
    let norm = t.norm();
    println!("tensor_norm = {norm:e}");
    for (name, v) in k.named() {
        println!("{name} = {v:e}");
    }
    println!("max_relative = {:e}", k.max() / norm);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Equivcheck(a) => cmd_equivcheck(a),
        Command::Kkt(a) => cmd_kkt(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
