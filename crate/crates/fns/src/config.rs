//! Experiment configuration: a sectioned TOML file, validated against the
//! preconditions of every module before anything runs.

use std::path::{Path, PathBuf};

use fns_core::corrector::Variant;
use fns_core::hybrid::DEFAULT_MAXIT;
use fns_core::lfa::PartitionMode;
use fns_core::pde::{Family, PdeKind, ProblemParams, RhsKind};
use fns_core::relax::{SmootherKind, SmootherSpec};
use fns_core::train::{Mode, ModelSpec, TrainConfig};
use fns_core::verify::AuditConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSection,
    #[serde(default)]
    pub smoother: SmootherSection,
    #[serde(default)]
    pub corrector: CorrectorSection,
    #[serde(default)]
    pub partition: PartitionSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub solve: SolveSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub audit: AuditSection,
    #[serde(default)]
    pub output: OutputSection,
}

/// Which operators the experiment draws.
///
/// With `sampling = "family"` item `i` is drawn from the family recipe with
/// stream `(seed, i)`; with `sampling = "fixed"` every item shares the
/// operator given by the explicit parameters and only the RHS varies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub pde: String,
    pub n: usize,
    #[serde(default = "default_sampling")]
    pub sampling: String,
    #[serde(default)]
    pub seed: u64,
    /// Training items.
    #[serde(default = "default_count")]
    pub count: usize,
    pub xi: Option<f64>,
    pub theta: Option<f64>,
    pub eps: Option<f64>,
    pub wx: Option<f64>,
    pub wy: Option<f64>,
    pub blocks: Option<usize>,
    pub m: Option<f64>,
    /// Coefficient seed of a fixed random-diffusion or jumping operator.
    pub coefficient_seed: Option<u64>,
    pub xi_range: Option<[f64; 2]>,
    pub theta_range: Option<[f64; 2]>,
    pub log_inv_eps_range: Option<[f64; 2]>,
    pub wind_range: Option<[f64; 2]>,
    pub m_range: Option<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmootherSection {
    pub kind: String,
    pub omega: f64,
    pub sweeps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorrectorSection {
    pub variant: String,
    pub mode: String,
    pub kernel_size: usize,
    pub depth: usize,
    pub hidden: usize,
    pub mask_inputs: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PartitionSection {
    /// `box` or `threshold:<value>`.
    pub mode: String,
    pub sample_stride: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub k0: usize,
    pub lr_halving_period: usize,
    pub k_increase_period: usize,
    /// Mini-batch shuffling.
    pub seed: u64,
    /// Parameter initialization.
    pub init_seed: u64,
    /// Item `i` trains on `f ~ N(0, I)` drawn from seed `rhs_seed + i`.
    pub rhs_seed: u64,
    /// Checkpoint period in epochs; 0 means the lr halving period.
    pub checkpoint_every: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveSection {
    pub tol: f64,
    pub maxit: usize,
    /// Test operators are drawn with this seed (family sampling only).
    pub test_seed: u64,
    pub test_count: usize,
    /// `normal` or one of `f1`..`f4`.
    pub rhs: String,
    pub rhs_seed: u64,
    /// Budget of the plain damped-Jacobi baseline, counted in sweeps.
    pub jacobi_maxit: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub scales: Vec<usize>,
    pub samples: u64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AuditSection {
    pub tau: f64,
    pub steps: usize,
    pub window: [usize; 2],
    pub rhs_seed: u64,
    /// Number of test operators audited.
    pub instances: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

fn default_sampling() -> String {
    "family".into()
}

fn default_count() -> usize {
    20
}

impl Default for SmootherSection {
    fn default() -> Self {
        Self {
            kind: "jacobi".into(),
            omega: 0.75,
            sweeps: 10,
        }
    }
}

impl Default for CorrectorSection {
    fn default() -> Self {
        Self {
            variant: "conv".into(),
            mode: "direct".into(),
            kernel_size: 3,
            depth: 1,
            hidden: 8,
            mask_inputs: true,
        }
    }
}

impl Default for PartitionSection {
    fn default() -> Self {
        Self {
            mode: "box".into(),
            sample_stride: 1,
        }
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr: t.lr,
            k0: t.k0,
            lr_halving_period: t.lr_halving_period,
            k_increase_period: t.k_increase_period,
            seed: t.seed,
            init_seed: 0,
            rhs_seed: 100,
            checkpoint_every: 0,
        }
    }
}

impl Default for SolveSection {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            maxit: DEFAULT_MAXIT,
            test_seed: 1000,
            test_count: 10,
            rhs: "normal".into(),
            rhs_seed: 999,
            jacobi_maxit: 100_000,
        }
    }
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            scales: Vec::new(),
            samples: 10,
            seed: 2000,
        }
    }
}

impl Default for AuditSection {
    fn default() -> Self {
        let a = AuditConfig::default();
        Self {
            tau: a.tau,
            steps: a.steps,
            window: [a.window.0, a.window.1],
            rhs_seed: a.rhs_seed,
            instances: 3,
        }
    }
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

/// Right-hand side selector of `fns solve`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RhsChoice {
    Normal,
    Kind(RhsKind),
}

impl std::str::FromStr for RhsChoice {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        if s == "normal" {
            Ok(RhsChoice::Normal)
        } else {
            Ok(RhsChoice::Kind(s.parse()?))
        }
    }
}

impl RhsChoice {
    pub fn name(&self) -> &'static str {
        match self {
            RhsChoice::Normal => "normal",
            RhsChoice::Kind(k) => k.name(),
        }
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn range(r: [f64; 2], name: &str) -> Result<(f64, f64)> {
    if !(r[0].is_finite() && r[1].is_finite() && r[0] <= r[1]) {
        return Err(invalid(format!("{name} must be a finite interval [lo, hi], got {r:?}")));
    }
    Ok((r[0], r[1]))
}

fn need<T: Copy>(v: Option<T>, key: &str, pde: PdeKind) -> Result<T> {
    v.ok_or_else(|| invalid(format!("problem.{key} is required for a fixed {} operator", pde.name())))
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| invalid(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            CliError::Validation(m) => CliError::Validation(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configs serialize")
    }

    /// Checks every section against the preconditions of the module using it.
    pub fn validate(&self) -> Result<()> {
        let kind = self.pde()?;
        kind.grid(self.problem.n)?.check_fft()?;
        let fixed = self.is_fixed()?;
        if fixed {
            self.fixed_params()?;
        } else {
            self.family()?;
        }
        if self.problem.count == 0 {
            return Err(invalid("problem.count must be positive"));
        }
        self.model_spec()?.validate()?;
        let mode = self.partition_mode()?;
        if let PartitionMode::Threshold(t) = mode {
            if !(t > 0.0 && t < 1.0) {
                return Err(invalid(format!("partition threshold must lie in (0, 1), got {t}")));
            }
        }
        if self.partition.sample_stride == 0 {
            return Err(invalid("partition.sample_stride must be positive"));
        }
        self.train_config().validate()?;
        let s = &self.solve;
        if !(s.tol > 0.0 && s.tol.is_finite()) {
            return Err(invalid(format!("solve.tol must be positive, got {}", s.tol)));
        }
        if s.maxit == 0 || s.jacobi_maxit == 0 || s.test_count == 0 {
            return Err(invalid(
                "solve.maxit, solve.jacobi_maxit and solve.test_count must be positive",
            ));
        }
        self.rhs()?;
        for &n in &self.sweep.scales {
            kind.grid(n)?.check_fft()?;
        }
        if !self.sweep.scales.is_empty() && self.sweep.samples == 0 {
            return Err(invalid("sweep.samples must be positive"));
        }
        let a = self.audit_config()?;
        if !(a.tau >= 0.0 && a.tau.is_finite()) {
            return Err(invalid(format!("audit.tau must be non-negative, got {}", a.tau)));
        }
        if a.window.0 >= a.window.1 || a.window.1 > a.steps {
            return Err(invalid(format!(
                "audit.window {:?} must be increasing and within audit.steps",
                a.window
            )));
        }
        if self.audit.instances == 0 {
            return Err(invalid("audit.instances must be positive"));
        }
        Ok(())
    }

    pub fn pde(&self) -> Result<PdeKind> {
        Ok(self.problem.pde.parse()?)
    }

    pub fn is_fixed(&self) -> Result<bool> {
        match self.problem.sampling.as_str() {
            "family" => Ok(false),
            "fixed" => Ok(true),
            other => Err(invalid(format!(
                "problem.sampling must be 'family' or 'fixed', got '{other}'"
            ))),
        }
    }

    pub fn family(&self) -> Result<Family> {
        let p = &self.problem;
        let mut fam = Family::new(self.pde()?);
        if let Some(r) = p.xi_range {
            fam.xi_range = range(r, "xi_range")?;
            if fam.xi_range.0 <= 0.0 {
                return Err(invalid("xi_range must be positive"));
            }
        }
        if let Some(r) = p.theta_range {
            fam.theta_range = range(r, "theta_range")?;
        }
        if let Some(r) = p.log_inv_eps_range {
            fam.log_inv_eps_range = range(r, "log_inv_eps_range")?;
        }
        if let Some(r) = p.wind_range {
            fam.wind_range = range(r, "wind_range")?;
        }
        if let Some(r) = p.m_range {
            fam.m_range = range(r, "m_range")?;
        }
        if let Some(b) = p.blocks {
            if b == 0 {
                return Err(invalid("problem.blocks must be positive"));
            }
            fam.blocks = b;
        }
        Ok(fam)
    }

    /// Explicit operator parameters (`sampling = "fixed"`).
    pub fn fixed_params(&self) -> Result<ProblemParams> {
        let p = &self.problem;
        let kind = self.pde()?;
        let params = match kind {
            PdeKind::Poisson1d => ProblemParams::Poisson1d,
            PdeKind::RandomDiffusion => ProblemParams::RandomDiffusion {
                seed: need(p.coefficient_seed, "coefficient_seed", kind)?,
            },
            PdeKind::Anisotropic => ProblemParams::Anisotropic {
                xi: need(p.xi, "xi", kind)?,
                theta: need(p.theta, "theta", kind)?,
            },
            PdeKind::ConvectionDiffusion => ProblemParams::ConvectionDiffusion {
                eps: need(p.eps, "eps", kind)?,
                wx: need(p.wx, "wx", kind)?,
                wy: need(p.wy, "wy", kind)?,
            },
            PdeKind::Jumping => ProblemParams::Jumping {
                seed: need(p.coefficient_seed, "coefficient_seed", kind)?,
                blocks: need(p.blocks, "blocks", kind)?,
                m: need(p.m, "m", kind)?,
            },
        };
        // Realize once on the smallest valid grid to surface domain errors early.
        params.realize::<f64>(3)?;
        Ok(params)
    }

    /// Parameters of training item `i`.
    pub fn train_params(&self, i: u64) -> Result<ProblemParams> {
        if self.is_fixed()? {
            self.fixed_params()
        } else {
            Ok(self.family()?.sample(self.problem.seed, i))
        }
    }

    /// Parameters of test operator `i` (the fixed operator, or a fresh draw).
    pub fn test_params(&self, i: u64) -> Result<ProblemParams> {
        if self.is_fixed()? {
            self.fixed_params()
        } else {
            Ok(self.family()?.sample(self.solve.test_seed, i))
        }
    }

    pub fn smoother(&self) -> Result<SmootherSpec> {
        let kind: SmootherKind = self.smoother.kind.parse()?;
        Ok(SmootherSpec::new(kind, self.smoother.omega, self.smoother.sweeps)?)
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        let c = &self.corrector;
        let variant: Variant = c.variant.parse()?;
        let mode: Mode = c.mode.parse()?;
        if variant == Variant::RegionSplit && self.pde()? != PdeKind::Jumping {
            return Err(invalid(
                "the region_split variant needs a jumping-coefficient problem (it uses the region mask)",
            ));
        }
        let mut spec = ModelSpec::new(variant, mode, self.smoother()?);
        spec.kernel_size = c.kernel_size;
        spec.depth = c.depth;
        spec.hidden = c.hidden;
        spec.mask_inputs = c.mask_inputs;
        Ok(spec)
    }

    pub fn partition_mode(&self) -> Result<PartitionMode> {
        Ok(self.partition.mode.parse()?)
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            k0: t.k0,
            batch_size: t.batch_size,
            epochs: t.epochs,
            lr: t.lr,
            lr_halving_period: t.lr_halving_period,
            k_increase_period: t.k_increase_period,
            seed: t.seed,
        }
    }

    pub fn checkpoint_every(&self) -> usize {
        match self.train.checkpoint_every {
            0 => self.train.lr_halving_period,
            k => k,
        }
    }

    pub fn rhs(&self) -> Result<RhsChoice> {
        self.solve.rhs.parse()
    }

    pub fn audit_config(&self) -> Result<AuditConfig> {
        let a = &self.audit;
        Ok(AuditConfig {
            partition: self.partition_mode()?,
            sample_stride: self.partition.sample_stride,
            tau: a.tau,
            steps: a.steps,
            window: (a.window[0], a.window[1]),
            rhs_seed: a.rhs_seed,
        })
    }
}
