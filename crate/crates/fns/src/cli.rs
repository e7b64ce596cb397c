//! Argument parsing and subcommand dispatch.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use fns_core::corrector::{Corrector, CorrectorActivation, Variant};
use fns_core::hybrid::{hybrid_run, residual_contraction, summarize, sweep_scales, SweepSpec, ASYMPTOTIC_STEPS};
use fns_core::lfa::{partition_frequencies, sampled_symbol, stencil_symbol, Label, SymbolMap};
use fns_core::pde::{system_rhs, Instance, ProblemParams};
use fns_core::relax::SmootherSpec;
use fns_core::rng::normal_field;
use fns_core::train::{train, Mode, Model, ModelSpec, TrainItem};
use fns_core::verify::{audit, AssumptionReport};
use fns_core::{Field, Grid};

use crate::checkpoint::Checkpoint;
use crate::config::{ExperimentConfig, RhsChoice};
use crate::dataset::{self, DatasetRecord};
use crate::error::{CliError, Result};
use crate::report::{num, Table};

#[derive(Debug, Parser)]
#[command(
    name = "fns",
    version,
    about = "Fourier neural solver lab: symbols, training, hybrid solves and audits"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the training-set records (parameters + RHS seeds) of a config.
    Dataset(DatasetArgs),
    /// Local Fourier analysis: symbol over the frequency lattice with B/H labels.
    Lfa(LfaArgs),
    /// Train a corrector; writes history.csv and checkpoint.fns.
    Train(TrainArgs),
    /// Run the hybrid iteration on test operators; writes residual histories.
    Solve(SolveArgs),
    /// Iteration counts across grid sizes.
    Sweep(SweepArgs),
    /// Dense audit of the convergence assumptions (N <= 31 in 2D).
    Verify(VerifyArgs),
    /// Dump the intermediate fields of one corrector application.
    Flow(FlowArgs),
}

/// Operator and smoother selection. Without `--config` the operator is built
/// from the flags alone; with it, any operator flag switches the config to
/// that fixed operator.
#[derive(Debug, Args)]
struct ProblemFlags {
    #[arg(long)]
    config: Option<PathBuf>,
    /// poisson1d | random_diffusion | anisotropic | convection_diffusion | jumping
    #[arg(long)]
    pde: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    /// Anisotropy strength.
    #[arg(long)]
    xi: Option<f64>,
    /// Anisotropy angle as a fraction of pi.
    #[arg(long)]
    theta_frac: Option<f64>,
    /// Diffusion of the convection problem.
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    wx: Option<f64>,
    #[arg(long)]
    wy: Option<f64>,
    /// Coefficient seed (random diffusion, jumping).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    blocks: Option<usize>,
    /// Jump exponent: contrast 10^m.
    #[arg(long)]
    m: Option<f64>,
    /// jacobi | richardson
    #[arg(long)]
    smoother: Option<String>,
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    sweeps: Option<usize>,
    /// box | threshold:<t>
    #[arg(long)]
    partition: Option<String>,
    /// Node stride of the frozen-coefficient symbol sampling.
    #[arg(long)]
    stride: Option<usize>,
    /// Test operator index (family configs).
    #[arg(long, default_value_t = 0)]
    instance: u64,
}

#[derive(Debug, Args)]
struct CorrectorFlags {
    /// Trained parameters; without it `--corrector` picks a reference corrector.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// reciprocal (H from the reciprocal averaged symbol) | zero
    #[arg(long, default_value = "reciprocal")]
    corrector: String,
}

#[derive(Debug, Args)]
struct DatasetArgs {
    #[arg(long)]
    config: PathBuf,
    /// Number of records (defaults to problem.count).
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also dump realized stencils, RHS and coefficients.
    #[arg(long)]
    materialize: bool,
}

#[derive(Debug, Args)]
struct LfaArgs {
    #[command(flatten)]
    problem: ProblemFlags,
    /// smoother (error propagation of M sweeps) | operator (constant stencils only)
    #[arg(long, default_value = "smoother")]
    symbol: String,
    /// Output CSV file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Train on stored records instead of regenerating them from the config.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Skip the smoothing-factor gate (mu_B < 1 on every training operator).
    #[arg(long)]
    no_gate: bool,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    corrector: CorrectorFlags,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Plain damped Jacobi, one sweep per iteration and no correction.
    #[arg(long)]
    jacobi_only: bool,
    /// Comma-separated right-hand sides: normal, f1, f2, f3, f4.
    #[arg(long)]
    rhs: Option<String>,
    /// Number of test operators (defaults to solve.test_count).
    #[arg(long)]
    instances: Option<u64>,
    /// Grid size override (the checkpoint is transferred if it differs).
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    maxit: Option<usize>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    corrector: CorrectorFlags,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated grid sizes (defaults to sweep.scales).
    #[arg(long)]
    scales: Option<String>,
    #[arg(long)]
    samples: Option<u64>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[command(flatten)]
    problem: ProblemFlags,
    #[command(flatten)]
    corrector: CorrectorFlags,
    /// Number of consecutive test operators, starting at --instance.
    #[arg(long)]
    instances: Option<u64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FlowArgs {
    #[command(flatten)]
    problem: ProblemFlags,
    #[command(flatten)]
    corrector: CorrectorFlags,
    /// normal | f1 | f2 | f3 | f4
    #[arg(long)]
    rhs: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code: 0 success, 1 invalid input, 2 runtime failure.
pub fn run_cli<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    0
                }
                _ => {
                    eprint!("{}", e.render());
                    1
                }
            };
        }
    };
    match configure_threads().and_then(|_| dispatch(cli.command)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// `FNS_THREADS` caps the worker pool. Results do not depend on it.
fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("FNS_THREADS") else {
        return Ok(());
    };
    let k: usize = v
        .parse()
        .ok()
        .filter(|&k| k > 0)
        .ok_or_else(|| CliError::Validation(format!("FNS_THREADS must be a positive integer, got '{v}'")))?;
    // A pool built by an earlier call in the same process is kept.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
    Ok(())
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Dataset(a) => cmd_dataset(a),
        Command::Lfa(a) => cmd_lfa(a),
        Command::Train(a) => cmd_train(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Flow(a) => cmd_flow(a),
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn out_dir(flag: Option<PathBuf>, cfg: &ExperimentConfig) -> PathBuf {
    flag.unwrap_or_else(|| cfg.output.dir.clone())
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|t| t.trim().parse().map_err(|_| invalid(format!("bad {what} '{t}'"))))
        .collect()
}

/// Config from file and/or flags, validated.
fn resolve_config(f: &ProblemFlags) -> Result<ExperimentConfig> {
    let mut cfg = match &f.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => {
            let pde = f
                .pde
                .clone()
                .ok_or_else(|| invalid("either --config or --pde is required"))?;
            let text = format!(
                "[problem]\npde = \"{pde}\"\nn = {}\nsampling = \"fixed\"\n",
                f.n.unwrap_or(31)
            );
            let mut cfg: ExperimentConfig = toml::from_str(&text).map_err(|e| invalid(e.to_string()))?;
            cfg.problem.coefficient_seed = Some(0);
            cfg.problem.blocks = Some(4);
            cfg.problem.m = Some(8.0);
            cfg
        }
    };
    let p = &mut cfg.problem;
    let operator_flags = f.xi.is_some()
        || f.theta_frac.is_some()
        || f.eps.is_some()
        || f.wx.is_some()
        || f.wy.is_some()
        || f.seed.is_some()
        || f.blocks.is_some()
        || f.m.is_some();
    if let Some(pde) = &f.pde {
        if *pde != p.pde {
            p.pde = pde.clone();
            p.sampling = "fixed".into();
        }
    }
    if operator_flags {
        p.sampling = "fixed".into();
    }
    if let Some(n) = f.n {
        p.n = n;
    }
    p.xi = f.xi.or(p.xi);
    p.theta = f.theta_frac.map(|t| t * std::f64::consts::PI).or(p.theta);
    p.eps = f.eps.or(p.eps);
    p.wx = f.wx.or(p.wx);
    p.wy = f.wy.or(p.wy);
    p.coefficient_seed = f.seed.or(p.coefficient_seed);
    p.blocks = f.blocks.or(p.blocks);
    p.m = f.m.or(p.m);
    if p.sampling == "fixed" {
        // Family configs may leave fixed-operator keys unset.
        p.coefficient_seed = p.coefficient_seed.or(Some(0));
        p.blocks = p.blocks.or(Some(4));
        p.m = p.m.or(Some(8.0));
    }
    if let Some(s) = &f.smoother {
        cfg.smoother.kind = s.clone();
    }
    if let Some(w) = f.omega {
        cfg.smoother.omega = w;
    }
    if let Some(m) = f.sweeps {
        cfg.smoother.sweeps = m;
    }
    if let Some(pm) = &f.partition {
        cfg.partition.mode = pm.clone();
    }
    if let Some(s) = f.stride {
        cfg.partition.sample_stride = s;
    }
    if cfg.corrector.variant == Variant::RegionSplit.name() && cfg.pde()?.name() != "jumping" {
        cfg.corrector.variant = Variant::Conv.name().into();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Where the corrector of a run comes from.
enum Source {
    Trained(Box<(Model, Checkpoint)>),
    Reciprocal,
    Zero,
}

impl Source {
    fn new(f: &CorrectorFlags) -> Result<Self> {
        if let Some(path) = &f.checkpoint {
            let ck = Checkpoint::load(path)?;
            return Ok(Source::Trained(Box::new((ck.model()?, ck))));
        }
        match f.corrector.as_str() {
            "reciprocal" => Ok(Source::Reciprocal),
            "zero" => Ok(Source::Zero),
            other => Err(invalid(format!(
                "--corrector must be 'reciprocal' or 'zero', got '{other}'"
            ))),
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Source::Trained(_) => "trained",
            Source::Reciprocal => "reciprocal",
            Source::Zero => "zero",
        }
    }

    /// The smoother the corrector was built for.
    fn smoother(&self, cfg: &ExperimentConfig) -> Result<SmootherSpec> {
        match self {
            Source::Trained(b) => Ok(b.1.spec.smoother),
            _ => cfg.smoother(),
        }
    }

    fn build(&self, inst: &Instance<f64>, smoother: SmootherSpec) -> Result<Corrector<f64>> {
        let grid = inst.grid();
        match self {
            Source::Zero => Ok(Corrector::zero(grid)?),
            Source::Reciprocal => {
                let model = Model::new(ModelSpec::new(Variant::Diagonal, Mode::Direct, smoother), grid)?;
                let mut params = model.init_params::<f64>(0);
                let lambda = params.get_mut("h0.lambda")?;
                for pair in lambda.chunks_exact_mut(2) {
                    pair[0] = 1.0;
                    pair[1] = 0.0;
                }
                Ok(model.build(&params, &model.prepare(inst)?)?.corrector)
            }
            Source::Trained(b) => {
                let (model, ck) = (&b.0, &b.1);
                let (model, params) = if grid == model.grid() {
                    (model.clone(), ck.params.clone())
                } else {
                    model.transfer(&ck.params, grid)?
                };
                Ok(model.build(&params, &model.prepare(inst)?)?.corrector)
            }
        }
    }
}

fn rhs_field(choice: RhsChoice, inst: &Instance<f64>, seed: u64, stream: u64) -> Result<Field<f64>> {
    Ok(match choice {
        RhsChoice::Normal => normal_field(inst.grid(), seed, stream),
        RhsChoice::Kind(k) => system_rhs(k, inst.grid(), &inst.stencil, seed)?,
    })
}

fn describe(params: &ProblemParams) -> String {
    match params {
        ProblemParams::Poisson1d => "poisson1d".into(),
        ProblemParams::RandomDiffusion { seed } => format!("random_diffusion(seed={seed})"),
        ProblemParams::Anisotropic { xi, theta } => format!("anisotropic(xi={xi:.3e}, theta={theta:.4})"),
        ProblemParams::ConvectionDiffusion { eps, wx, wy } => {
            format!("convection_diffusion(eps={eps:.3e}, w=({wx:.3}, {wy:.3}))")
        }
        ProblemParams::Jumping { seed, blocks, m } => format!("jumping(seed={seed}, blocks={blocks}, m={m:.3})"),
    }
}

fn cmd_dataset(a: DatasetArgs) -> Result<()> {
    let cfg = ExperimentConfig::load(&a.config)?;
    let out = out_dir(a.out, &cfg);
    let records = dataset::generate(&cfg, a.count.unwrap_or(cfg.problem.count))?;
    let path = out.join("dataset.csv");
    dataset::write(&records, &path)?;
    if a.materialize {
        let dir = out.join("materialized");
        for r in &records {
            dataset::materialize(r, cfg.problem.n, &dir)?;
        }
    }
    println!("wrote {} records to {}", records.len(), path.display());
    Ok(())
}

fn bins(grid: Grid, idx: usize) -> (usize, usize) {
    let ex = grid.ext_nx();
    (idx % ex, idx / ex)
}

fn cmd_lfa(a: LfaArgs) -> Result<()> {
    let cfg = resolve_config(&a.problem)?;
    let inst = cfg.test_params(a.problem.instance)?.realize::<f64>(cfg.problem.n)?;
    let smoother = cfg.smoother()?;
    let smoothing = sampled_symbol(smoother, &inst.stencil, cfg.partition.sample_stride)?;
    let mask = partition_frequencies(&smoothing, cfg.partition_mode()?)?;
    let shown: SymbolMap<f64> = match a.symbol.as_str() {
        "smoother" => smoothing,
        "operator" => stencil_symbol(&inst.stencil)?,
        other => {
            return Err(invalid(format!(
                "--symbol must be 'smoother' or 'operator', got '{other}'"
            )))
        }
    };
    let grid = shown.grid();
    let mut t = Table::new(&["bin_x", "bin_y", "theta1", "theta2", "re", "im", "modulus", "label"]);
    for (idx, v) in shown.values().iter().enumerate() {
        let (bx, by) = bins(grid, idx);
        let (t1, t2) = shown.theta(idx);
        t.push(vec![
            bx.to_string(),
            by.to_string(),
            num(t1),
            num(t2),
            num(v.re),
            num(v.im),
            num(v.norm()),
            mask.labels()[idx].as_str().into(),
        ]);
    }
    t.write(&a.out)?;
    println!(
        "{}: N = {}, {} rows; mu_B = {:.6}, eps_B = {:.6}, |H| = {}, |B| = {}, H components = {}",
        describe(&inst.params),
        cfg.problem.n,
        t.len(),
        mask.mu_b,
        mask.eps_b,
        mask.count(Label::H),
        mask.count(Label::B),
        mask.components(Label::H),
    );
    Ok(())
}

/// Largest smoothing factor over the given operators.
fn max_smoothing_factor(cfg: &ExperimentConfig, records: &[DatasetRecord]) -> Result<f64> {
    let smoother = cfg.smoother()?;
    let mode = cfg.partition_mode()?;
    let mut worst: f64 = 0.0;
    let mut seen: Vec<&ProblemParams> = Vec::new();
    for r in records {
        if seen.contains(&&r.params) {
            continue;
        }
        seen.push(&r.params);
        let inst = r.params.realize::<f64>(cfg.problem.n)?;
        let sym = sampled_symbol(smoother, &inst.stencil, cfg.partition.sample_stride)?;
        worst = worst.max(partition_frequencies(&sym, mode)?.mu_b);
    }
    Ok(worst)
}

fn write_history(path: &Path, history: &[fns_core::train::EpochRecord]) -> Result<()> {
    let mut t = Table::new(&["epoch", "loss", "lr", "K"]);
    for r in history {
        t.push(vec![r.epoch.to_string(), num(r.loss), num(r.lr), r.k.to_string()]);
    }
    t.write(path)
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let cfg = ExperimentConfig::load(&a.config)?;
    let out = out_dir(a.out, &cfg);
    let records = match &a.dataset {
        Some(p) => dataset::read(p)?,
        None => dataset::generate(&cfg, cfg.problem.count)?,
    };
    if records.is_empty() {
        return Err(invalid("the training set is empty"));
    }
    if records.iter().any(|r| r.params.kind() != cfg.pde().expect("validated")) {
        return Err(invalid("dataset operators do not match problem.pde"));
    }
    let mu_b = max_smoothing_factor(&cfg, &records)?;
    if mu_b >= 1.0 && !a.no_gate {
        return Err(invalid(format!(
            "smoothing factor mu_B = {mu_b:.6} >= 1 on the training operators; choose another smoother or partition (or pass --no-gate)"
        )));
    }
    let n = cfg.problem.n;
    let model = Model::new(cfg.model_spec()?, cfg.pde()?.grid(n)?)?;
    let items = records
        .iter()
        .map(|r| {
            let inst = r.params.realize::<f64>(n)?;
            Ok(TrainItem {
                prepared: model.prepare(&inst)?,
                rhs: r.rhs(n)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    dataset::write(&records, &out.join("dataset.csv"))?;
    let tc = cfg.train_config();
    let every = cfg.checkpoint_every();
    let ck_path = out.join("checkpoint.fns");
    let hist_path = out.join("history.csv");
    let mut history = Vec::new();
    let mut write_err: Option<CliError> = None;
    let res = train(
        &model,
        model.init_params::<f64>(cfg.train.init_seed),
        &items,
        &tc,
        |rec, params| {
            history.push(rec.clone());
            if rec.epoch % every == 0 || rec.epoch == tc.epochs {
                let ck = Checkpoint::new(&model, params.clone(), rec.epoch as u64, rec.loss);
                if let Err(e) = ck.save(&ck_path).and_then(|_| write_history(&hist_path, &history)) {
                    write_err = Some(e);
                    return Err(fns_core::Error::DomainError("checkpoint write failed".into()));
                }
                eprintln!(
                    "epoch {:>5}  loss {:.6e}  lr {:.3e}  K {}",
                    rec.epoch, rec.loss, rec.lr, rec.k
                );
            }
            Ok(())
        },
    );
    if let Some(e) = write_err {
        return Err(e);
    }
    let res = res?;
    let last = res.history.last().expect("at least one epoch");
    println!(
        "trained {} {} ({} items, N = {n}, {} parameters): final loss {:.6e}, mu_B = {mu_b:.6}",
        cfg.corrector.mode,
        cfg.corrector.variant,
        items.len(),
        res.params.len(),
        last.loss,
    );
    Ok(())
}

fn cmd_solve(a: SolveArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&a.config)?;
    if let Some(n) = a.n {
        cfg.problem.n = n;
    }
    if let Some(t) = a.tol {
        cfg.solve.tol = t;
    }
    if let Some(m) = a.maxit {
        cfg.solve.maxit = m;
        cfg.solve.jacobi_maxit = m;
    }
    if let Some(r) = &a.rhs {
        cfg.solve.rhs = r.clone();
    }
    let rhs_list: Vec<RhsChoice> = parse_list::<String>(&cfg.solve.rhs, "right-hand side")?
        .iter()
        .map(|s| s.parse())
        .collect::<Result<_>>()?;
    cfg.solve.rhs = "normal".into();
    cfg.validate()?;
    let out = out_dir(a.out, &cfg);
    let source = Source::new(&a.corrector)?;
    let count = a.instances.unwrap_or(cfg.solve.test_count as u64);
    if count == 0 {
        return Err(invalid("--instances must be positive"));
    }
    let method = if a.jacobi_only { "jacobi" } else { "hybrid" };
    let mut history = Table::new(&["method", "instance", "rhs", "iteration", "residual", "relative"]);
    let mut summary = Table::new(&[
        "method",
        "instance",
        "rhs",
        "iterations",
        "converged",
        "status",
        "contraction",
        "asymptotic",
    ]);
    let mut total = 0usize;
    let mut runs = 0usize;
    for i in 0..count {
        let inst = cfg.test_params(i)?.realize::<f64>(cfg.problem.n)?;
        let (smoother, hc, maxit) = if a.jacobi_only {
            (
                cfg.smoother()?.with_sweeps(1),
                Corrector::zero(inst.grid())?,
                cfg.solve.jacobi_maxit,
            )
        } else {
            let sm = source.smoother(&cfg)?;
            (sm, source.build(&inst, sm)?, cfg.solve.maxit)
        };
        for &choice in &rhs_list {
            let f = rhs_field(choice, &inst, cfg.solve.rhs_seed, i)?;
            let (rep, _) = hybrid_run(&inst.stencil, &f, smoother, &hc, cfg.solve.tol, maxit)?;
            let f0 = rep.residual_history[0];
            for (k, r) in rep.residual_history.iter().enumerate() {
                history.push(vec![
                    method.into(),
                    i.to_string(),
                    choice.name().into(),
                    k.to_string(),
                    num(*r),
                    num(if f0 > 0.0 { r / f0 } else { 0.0 }),
                ]);
            }
            summary.push(vec![
                method.into(),
                i.to_string(),
                choice.name().into(),
                rep.iterations.to_string(),
                rep.converged.to_string(),
                format!("{:?}", rep.status).to_lowercase(),
                num(rep.contraction_estimate),
                num(residual_contraction(
                    &inst.stencil,
                    &f,
                    smoother,
                    &hc,
                    ASYMPTOTIC_STEPS,
                    5,
                )?),
            ]);
            total += rep.iterations;
            runs += 1;
        }
    }
    history.write(&out.join("residuals.csv"))?;
    summary.write(&out.join("solve.csv"))?;
    println!(
        "{method} ({} corrector): {runs} solves at N = {}, mean iterations {:.2}",
        if a.jacobi_only { "no" } else { source.name() },
        cfg.problem.n,
        total as f64 / runs as f64
    );
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let cfg = ExperimentConfig::load(&a.config)?;
    if cfg.is_fixed()? {
        return Err(invalid("sweep needs a family config (problem.sampling = \"family\")"));
    }
    let scales = match &a.scales {
        Some(s) => parse_list(s, "scale")?,
        None => cfg.sweep.scales.clone(),
    };
    if scales.is_empty() {
        return Err(invalid("no scales given (sweep.scales or --scales)"));
    }
    for &n in &scales {
        cfg.pde()?.grid(n)?.check_fft()?;
    }
    let source = Source::new(&a.corrector)?;
    let smoother = source.smoother(&cfg)?;
    let spec = SweepSpec {
        family: cfg.family()?,
        scales,
        samples: a.samples.unwrap_or(cfg.sweep.samples),
        seed: cfg.sweep.seed,
        smoother,
        tol: cfg.solve.tol,
        maxit: cfg.solve.maxit,
    };
    if spec.samples == 0 {
        return Err(invalid("--samples must be positive"));
    }
    let rows = sweep_scales(&spec, |inst: &Instance<f64>| {
        source.build(inst, smoother).map_err(core_of)
    })?;
    let out = out_dir(a.out, &cfg);
    let mut t = Table::new(&["scale", "mu_id", "iterations", "converged", "contraction"]);
    for r in &rows {
        t.push(vec![
            r.scale.to_string(),
            r.mu_id.to_string(),
            r.iterations.to_string(),
            r.converged.to_string(),
            num(r.contraction),
        ]);
    }
    t.write(&out.join("sweep.csv"))?;
    let mut s = Table::new(&["scale", "mean", "std", "converged", "samples"]);
    for r in summarize(&rows) {
        println!(
            "N = {:>4}: {:.2} +- {:.2} iterations ({}/{} converged)",
            r.scale, r.mean, r.std, r.converged, r.samples
        );
        s.push(vec![
            r.scale.to_string(),
            num(r.mean),
            num(r.std),
            r.converged.to_string(),
            r.samples.to_string(),
        ]);
    }
    s.write(&out.join("sweep_summary.csv"))
}

/// Core errors pass through; anything else is reported as a runtime failure.
fn core_of(e: CliError) -> fns_core::Error {
    match e {
        CliError::Core(c) => c,
        other => fns_core::Error::DomainError(other.to_string()),
    }
}

const AUDIT_KEYS: [&str; 19] = [
    "n",
    "sweeps",
    "mu_b",
    "eps_b",
    "mu_h",
    "c_bound",
    "max_support",
    "size_index_h",
    "size_index_b",
    "mean_l_h",
    "mean_l_b",
    "eps_v",
    "eps_lambda",
    "eta",
    "empirical_contraction",
    "bound_honored",
    "condition",
    "eta_reliable",
    "eigen_residual",
];

fn cmd_verify(a: VerifyArgs) -> Result<()> {
    let mut cfg = resolve_config(&a.problem)?;
    if let Some(t) = a.tau {
        cfg.audit.tau = t;
        cfg.validate()?;
    }
    let source = Source::new(&a.corrector)?;
    let smoother = source.smoother(&cfg)?;
    let acfg = cfg.audit_config()?;
    let count = a.instances.unwrap_or(if a.problem.config.is_some() {
        cfg.audit.instances as u64
    } else {
        1
    });
    if count == 0 {
        return Err(invalid("--instances must be positive"));
    }
    let first = a.problem.instance;
    let mut reports: Vec<(u64, ProblemParams, AssumptionReport)> = Vec::new();
    for i in first..first + count {
        let params = cfg.test_params(i)?;
        let inst = params.realize::<f64>(cfg.problem.n)?;
        let hc = source.build(&inst, smoother)?;
        let rep = audit(&inst.stencil, smoother, &hc, &acfg)?;
        println!("instance {i}: {} ({} corrector)", describe(&params), source.name());
        print!("{}", rep.to_text());
        reports.push((i, params, rep));
    }
    let Some(out) = a.out else {
        return Ok(());
    };
    let mut header = vec!["instance".to_string(), "operator".to_string()];
    header.extend(AUDIT_KEYS.iter().map(|k| k.to_string()));
    let mut t = Table::new(&header);
    let mut text = String::new();
    for (i, params, rep) in &reports {
        let summary = rep.summary();
        debug_assert_eq!(summary.iter().map(|s| s.0).collect::<Vec<_>>(), AUDIT_KEYS);
        let mut row = vec![i.to_string(), describe(params)];
        row.extend(summary.iter().map(|&(_, v)| num(v)));
        t.push(row);
        text.push_str(&format!("instance {i}: {}\n{}\n", describe(params), rep.to_text()));
        let mut th = Table::new(&["j", "k", "label", "support", "sum_l2"]);
        for r in &rep.thetas {
            th.push(vec![
                r.j.to_string(),
                r.k.to_string(),
                r.label.as_str().into(),
                r.support.to_string(),
                num(r.sum_l2),
            ]);
        }
        th.write(&out.join(format!("thetas_{i}.csv")))?;
    }
    t.write(&out.join("audit.csv"))?;
    std::fs::write(out.join("audit.txt"), text).map_err(|e| CliError::io(out.join("audit.txt"), e))
}

fn push_lattice(t: &mut Table, part: usize, stage: &str, grid: Grid, v: &[fns_core::C<f64>]) {
    for (idx, z) in v.iter().enumerate() {
        let (bx, by) = bins(grid, idx);
        t.push(vec![
            part.to_string(),
            stage.into(),
            bx.to_string(),
            by.to_string(),
            num(z.re),
            num(z.im),
            num(z.norm()),
        ]);
    }
}

fn push_field(t: &mut Table, part: &str, stage: &str, f: &Field<f64>) {
    let grid = f.grid();
    for (idx, z) in f.values().iter().enumerate() {
        let (ix, iy) = grid.position(idx);
        t.push(vec![
            part.into(),
            stage.into(),
            ix.to_string(),
            iy.to_string(),
            num(z.re),
            num(z.im),
            num(z.norm()),
        ]);
    }
}

fn cmd_flow(a: FlowArgs) -> Result<()> {
    let mut cfg = resolve_config(&a.problem)?;
    if let Some(r) = &a.rhs {
        cfg.solve.rhs = r.clone();
        cfg.validate()?;
    }
    let source = Source::new(&a.corrector)?;
    let smoother = source.smoother(&cfg)?;
    let inst = cfg.test_params(a.problem.instance)?.realize::<f64>(cfg.problem.n)?;
    let hc = source.build(&inst, smoother)?;
    let f = rhs_field(cfg.rhs()?, &inst, cfg.solve.rhs_seed, a.problem.instance)?;
    // The residual the corrector sees in the first outer iteration.
    let u = fns_core::relax::smooth(smoother, &inst.stencil, &Field::zeros(inst.grid()), &f)?;
    let r = inst.stencil.residual(&u, &f)?;
    let (h_r, rec) = hc.apply_recorded(&r)?;
    let grid = inst.grid();
    let mut t = Table::new(&["part", "stage", "x", "y", "re", "im", "modulus"]);
    push_field(&mut t, "all", "residual", &r);
    for (p, (part, act)) in hc.parts().iter().zip(&rec.parts).enumerate() {
        let CorrectorActivation {
            spectrum,
            transformed,
            scaled,
            corrected,
            ..
        } = act;
        push_lattice(&mut t, p, "lambda", grid, part.lambda());
        push_lattice(&mut t, p, "spectrum", grid, spectrum);
        push_lattice(&mut t, p, "transformed", grid, transformed);
        push_lattice(&mut t, p, "scaled", grid, scaled);
        push_lattice(&mut t, p, "corrected", grid, corrected);
    }
    push_field(&mut t, "all", "output", &h_r);
    let e = u.add(&h_r);
    push_field(&mut t, "all", "corrected_iterate", &e);
    t.write(&a.out.join("flow.csv"))?;
    println!(
        "{}: ||r|| = {:.6e}, ||f - A(u + Hr)|| = {:.6e}",
        describe(&inst.params),
        r.norm(),
        inst.stencil.residual(&e, &f)?.norm()
    );
    Ok(())
}
