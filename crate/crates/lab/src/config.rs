//! Run configuration: JSON file plus dotted-path flag overrides on top of
//! per-experiment defaults.
//!
//! Resolution order is defaults, then file, then flags. Unknown keys and type
//! mismatches are rejected with the offending path. The resolved value of
//! every leaf is tagged with where it came from.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use meanfield_core::dynamics::{DynamicsConfig, DynamicsKind, InitSpec, StepSchedule};
use meanfield_core::kernel::RescaledFlowConfig;
use meanfield_core::model::{
    AnisotropicGaussians, CoefficientMode, DataModel, EmpiricalDataset, EstimatorStrategy, PopulationEstimator,
    Rotation, TruncatedReluDot,
};
use meanfield_core::oracle::FokkerPlanckCheck;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{LabError, LabResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    #[default]
    RunSgd,
    RunCoupled,
    GapScaling,
    GaussiansDemo,
    KernelCrossover,
    FokkerPlanckCheck,
    KrrCheck,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::RunSgd,
        Experiment::RunCoupled,
        Experiment::GapScaling,
        Experiment::GaussiansDemo,
        Experiment::KernelCrossover,
        Experiment::FokkerPlanckCheck,
        Experiment::KrrCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::RunSgd => "run-sgd",
            Experiment::RunCoupled => "run-coupled",
            Experiment::GapScaling => "gap-scaling",
            Experiment::GaussiansDemo => "gaussians-demo",
            Experiment::KernelCrossover => "kernel-crossover",
            Experiment::FokkerPlanckCheck => "fokker-planck-check",
            Experiment::KrrCheck => "krr-check",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == name)
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub experiment: Experiment,
    /// Base seed of the dynamics streams; seed index `s` uses `seed + s`.
    pub seed: u64,
    pub model: ModelSection,
    pub dynamics: DynamicsSection,
    pub estimator: EstimatorSection,
    pub study: StudySection,
    pub kernel: KernelSection,
    pub fokker_planck: FokkerPlanckSection,
    pub io: IoSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub activation: ActivationSection,
    pub data: DataSection,
}

/// Truncated ReLU: `s1` below `t1`, `s2` above `t2`, linear in between.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ActivationSection {
    pub s1: f64,
    pub s2: f64,
    pub t1: f64,
    pub t2: f64,
}

impl Default for ActivationSection {
    fn default() -> Self {
        Self { s1: 0.0, s2: 1.0, t1: -0.5, t2: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RotationKind {
    #[default]
    Identity,
    Haar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub d: usize,
    pub gamma: f64,
    pub delta: f64,
    pub rotation: RotationKind,
    pub rotation_seed: u64,
    /// 0 streams fresh Gaussian-mixture samples. A positive value freezes
    /// that many draws into a dataset that both the data stream and the
    /// estimator use, so expectations become exact finite averages.
    pub points: usize,
    pub points_seed: u64,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            d: 10,
            gamma: 0.5,
            delta: 0.5,
            rotation: RotationKind::Identity,
            rotation_seed: 0,
            points: 0,
            points_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ModeKind {
    Fixed,
    #[default]
    General,
}

impl From<ModeKind> for CoefficientMode {
    fn from(m: ModeKind) -> Self {
        match m {
            ModeKind::Fixed => CoefficientMode::Fixed,
            ModeKind::General => CoefficientMode::General,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    #[default]
    Constant,
    ExpDecay,
}

/// `ξ(t) = c` or `ξ(t) = c·e^{−rate·t}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSection {
    pub kind: ScheduleKind,
    pub c: f64,
    pub rate: f64,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        Self { kind: ScheduleKind::Constant, c: 0.5, rate: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    PointMass,
    #[default]
    Uniform,
    Antithetic,
    RadialSphere,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitSection {
    pub kind: InitKind,
    pub a0: f64,
    pub r_lo: f64,
    pub r_hi: f64,
    /// Seed index `s` draws its initial ensemble from `seed + s`.
    pub seed: u64,
}

impl Default for InitSection {
    fn default() -> Self {
        Self { kind: InitKind::Uniform, a0: 1.0, r_lo: 0.1, r_hi: 2.0, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindName {
    Sgd,
    NoisySgd,
    Gd,
    NoisyGd,
    Pd,
    LangevinPd,
}

impl From<KindName> for DynamicsKind {
    fn from(k: KindName) -> Self {
        match k {
            KindName::Sgd => DynamicsKind::Sgd,
            KindName::NoisySgd => DynamicsKind::NoisySgd,
            KindName::Gd => DynamicsKind::Gd,
            KindName::NoisyGd => DynamicsKind::NoisyGd,
            KindName::Pd => DynamicsKind::Pd,
            KindName::LangevinPd => DynamicsKind::LangevinPd,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicsSection {
    pub eps: f64,
    pub lambda: f64,
    pub tau: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub mode: ModeKind,
    pub schedule: ScheduleSection,
    /// ODE substep; `null` means one substep per `eps`.
    pub h_ode: Option<f64>,
    pub ode_tol: f64,
    /// Output scale `α` of the predictor.
    pub scale: f64,
    pub init: InitSection,
    /// Dynamics run side by side by `run-coupled`.
    pub kinds: Vec<KindName>,
}

impl Default for DynamicsSection {
    fn default() -> Self {
        Self {
            eps: 0.01,
            lambda: 0.0,
            tau: 0.0,
            horizon: 1.0,
            n: 100,
            mode: ModeKind::General,
            schedule: ScheduleSection::default(),
            h_ode: None,
            ode_tol: 1e-8,
            scale: 1.0,
            init: InitSection::default(),
            kinds: vec![KindName::Gd, KindName::Pd],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    #[default]
    MonteCarlo,
    GaussHermite,
    Analytic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorSection {
    pub strategy: StrategyKind,
    pub n_mc: usize,
    pub n_nodes: usize,
    pub seed: u64,
}

impl Default for EstimatorSection {
    fn default() -> Self {
        Self { strategy: StrategyKind::MonteCarlo, n_mc: 4096, n_nodes: 16, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudySection {
    #[serde(rename = "N_grid")]
    pub n_grid: Vec<usize>,
    pub alpha_grid: Vec<f64>,
    /// Empty: `run-coupled` uses `dynamics.eps` alone.
    pub eps_grid: Vec<f64>,
    /// Number of seed indices per grid point.
    pub seeds: u64,
    #[serde(rename = "N_ref")]
    pub n_ref: usize,
    pub ref_seed: u64,
    pub ref_h_ode: f64,
}

impl Default for StudySection {
    fn default() -> Self {
        Self {
            n_grid: vec![25, 50, 100, 200, 400, 800],
            alpha_grid: vec![2.0, 4.0, 8.0, 16.0, 32.0, 64.0],
            eps_grid: Vec::new(),
            seeds: 8,
            n_ref: 6400,
            ref_seed: 999,
            ref_h_ode: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelSection {
    pub horizon: f64,
    pub snapshot_dt: f64,
    pub h_ode: f64,
    pub ode_tol: f64,
    /// The KRR check integrates to `t = krr_time_factor / λ_min(H)`.
    pub krr_time_factor: f64,
    /// Fresh query points added to the training points by the KRR check.
    pub test_points: usize,
    pub test_seed: u64,
}

impl Default for KernelSection {
    fn default() -> Self {
        let f = RescaledFlowConfig::default();
        Self {
            horizon: f.horizon,
            snapshot_dt: f.eps,
            h_ode: f.h_ode,
            ode_tol: f.ode_tol,
            krr_time_factor: 1e3,
            test_points: 4,
            test_seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FokkerPlanckSection {
    pub half_width: f64,
    pub cells: usize,
    pub bins: usize,
    pub init_mean: f64,
    pub init_sd: f64,
    pub xi: f64,
    pub tau: f64,
    pub lambda: f64,
    pub horizon: f64,
    pub snapshot_dt: f64,
    pub h: f64,
    pub cfl_fraction: f64,
    /// Horizon and particle count of the null-activation stationary check.
    pub ou_horizon: f64,
    pub ou_particles: usize,
}

impl Default for FokkerPlanckSection {
    fn default() -> Self {
        let c = FokkerPlanckCheck::default();
        Self {
            half_width: c.half_width,
            cells: c.cells,
            bins: c.bins,
            init_mean: c.init_mean,
            init_sd: c.init_sd,
            xi: c.xi,
            tau: c.tau,
            lambda: c.lambda,
            horizon: c.horizon,
            snapshot_dt: c.eps,
            h: c.h,
            cfl_fraction: c.cfl_fraction,
            ou_horizon: 5.0,
            ou_particles: 4000,
        }
    }
}

impl FokkerPlanckSection {
    pub fn check(&self, horizon: f64) -> FokkerPlanckCheck {
        FokkerPlanckCheck {
            half_width: self.half_width,
            cells: self.cells,
            bins: self.bins,
            init_mean: self.init_mean,
            init_sd: self.init_sd,
            xi: self.xi,
            tau: self.tau,
            lambda: self.lambda,
            horizon,
            eps: self.snapshot_dt,
            h: self.h,
            cfl_fraction: self.cfl_fraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IoSection {
    pub out_dir: String,
    pub snapshot_every: u64,
    /// When set, overrides `snapshot_every` with `max(1, round(snapshot_dt/ε))`.
    pub snapshot_dt: Option<f64>,
}

impl Default for IoSection {
    fn default() -> Self {
        Self { out_dir: "meanfield-out".into(), snapshot_every: 1, snapshot_dt: None }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::defaults(Experiment::RunSgd)
    }
}

impl RunConfig {
    /// Defaults for one experiment: the shared base plus that experiment's
    /// working point.
    pub fn defaults(experiment: Experiment) -> Self {
        let mut c = RunConfig {
            experiment,
            seed: 0,
            model: ModelSection::default(),
            dynamics: DynamicsSection::default(),
            estimator: EstimatorSection::default(),
            study: StudySection::default(),
            kernel: KernelSection::default(),
            fokker_planck: FokkerPlanckSection::default(),
            io: IoSection::default(),
        };
        match experiment {
            Experiment::RunSgd => {
                c.io.snapshot_every = 10;
            }
            Experiment::RunCoupled => {
                c.model.activation = ActivationSection { s1: -1.0, s2: 1.0, t1: 0.5, t2: 1.5 };
                c.estimator.strategy = StrategyKind::Analytic;
                c.dynamics.n = 32;
                c.dynamics.eps = 1.0 / 32.0;
                c.dynamics.init = InitSection { a0: 2.0, seed: 3, ..Default::default() };
                c.study.eps_grid = (3..=8).map(|k| 1.0 / f64::from(1u32 << k)).collect();
                c.study.seeds = 1;
                c.dynamics.ode_tol = 1e-6;
                c.io.snapshot_dt = Some(1.0 / 16.0);
            }
            Experiment::GapScaling => {
                c.model.activation = ActivationSection { s1: -1.0, s2: 1.0, t1: 0.5, t2: 1.5 };
                c.model.data.d = 20;
                c.model.data.points = 2048;
                c.model.data.points_seed = 7;
                c.dynamics.mode = ModeKind::Fixed;
                c.dynamics.init = InitSection { kind: InitKind::RadialSphere, r_lo: 0.1, r_hi: 2.0, seed: 10, a0: 1.0 };
                c.dynamics.eps = 1e-4;
                c.dynamics.ode_tol = 1e-3;
                c.io.snapshot_dt = Some(0.2);
            }
            Experiment::GaussiansDemo => {
                c.model.activation = ActivationSection { s1: 0.0, s2: 4.0, t1: 0.5, t2: 1.5 };
                c.model.data = DataSection {
                    d: 40,
                    delta: 0.8,
                    rotation: RotationKind::Haar,
                    rotation_seed: 1,
                    ..Default::default()
                };
                c.dynamics.n = 200;
                c.dynamics.eps = 1.0 / 400.0;
                c.dynamics.horizon = 2.0;
                c.dynamics.mode = ModeKind::Fixed;
                c.dynamics.init = InitSection { kind: InitKind::RadialSphere, r_lo: 0.1, r_hi: 0.3, seed: 0, a0: 1.0 };
                c.io.snapshot_dt = Some(0.2);
            }
            Experiment::KernelCrossover => {
                c.model.activation = ActivationSection { s1: -1.0, s2: 1.0, t1: -0.5, t2: 0.5 };
                c.model.data.d = 8;
                c.model.data.points = 32;
                c.model.data.points_seed = 3;
                c.dynamics.n = 2000;
                c.dynamics.init = InitSection { kind: InitKind::Antithetic, a0: 1.0, seed: 5, ..Default::default() };
                c.kernel.ode_tol = 1e-3;
            }
            Experiment::FokkerPlanckCheck => {
                c.model.activation = ActivationSection { s1: 0.0, s2: 1.0, t1: -0.5, t2: 1.0 };
                c.model.data.d = 1;
                c.dynamics.mode = ModeKind::Fixed;
                c.estimator = EstimatorSection { n_mc: 256, seed: 1, ..Default::default() };
                c.study.n_grid = vec![1000, 4000, 16000];
                c.study.seeds = 4;
            }
            Experiment::KrrCheck => {
                c.model.activation = ActivationSection { s1: -0.5, s2: 1.0, t1: -0.3, t2: 0.8 };
                c.model.data.d = 3;
                c.model.data.points = 4;
                c.model.data.points_seed = 8;
                c.dynamics.n = 60;
                c.dynamics.init = InitSection { kind: InitKind::Antithetic, a0: 1.0, seed: 9, ..Default::default() };
            }
        }
        c
    }

    pub fn activation(&self) -> LabResult<TruncatedReluDot> {
        let a = &self.model.activation;
        if !(a.t1 < a.t2) {
            return Err(LabError::config(format!(
                "model.activation.t1 < t2 is required (got t1 = {}, t2 = {})",
                a.t1, a.t2
            )));
        }
        Ok(TruncatedReluDot::new(a.s1, a.s2, a.t1, a.t2)?)
    }

    pub fn gaussians(&self) -> LabResult<AnisotropicGaussians> {
        let d = &self.model.data;
        let rotation = match d.rotation {
            RotationKind::Identity => Rotation::Identity,
            RotationKind::Haar => Rotation::Haar { seed: d.rotation_seed },
        };
        Ok(AnisotropicGaussians::new(d.d, d.gamma, d.delta, rotation)?)
    }

    /// The data stream: the mixture itself, or a frozen dataset drawn from it.
    pub fn data(&self) -> LabResult<Data> {
        let g = self.gaussians()?;
        if self.model.data.points == 0 {
            return Ok(Data::Gaussians(g));
        }
        Ok(Data::Empirical(EmpiricalDataset::draw_from(&g, self.model.data.points, self.model.data.points_seed)?))
    }

    pub fn strategy(&self) -> EstimatorStrategy {
        let e = &self.estimator;
        match e.strategy {
            StrategyKind::MonteCarlo => EstimatorStrategy::MonteCarlo { n_mc: e.n_mc, seed: e.seed },
            StrategyKind::GaussHermite => EstimatorStrategy::GaussHermite { n_nodes: e.n_nodes },
            StrategyKind::Analytic => EstimatorStrategy::Analytic { n_nodes: e.n_nodes },
        }
    }

    /// Frozen datasets are their own estimator; otherwise `estimator.*` decides.
    pub fn estimator(&self, data: &Data, act: &TruncatedReluDot) -> LabResult<PopulationEstimator> {
        match data {
            Data::Empirical(ds) => Ok(PopulationEstimator::from_frozen(ds.points().clone())),
            Data::Gaussians(g) => Ok(PopulationEstimator::new(self.strategy(), g, act)?),
        }
    }

    pub fn mode(&self) -> CoefficientMode {
        self.dynamics.mode.into()
    }

    pub fn init_spec(&self) -> InitSpec {
        let i = &self.dynamics.init;
        match i.kind {
            InitKind::PointMass => InitSpec::PointMass { a0: i.a0 },
            InitKind::Uniform => InitSpec::Uniform { a0: i.a0 },
            InitKind::Antithetic => InitSpec::Antithetic { a0: i.a0 },
            InitKind::RadialSphere => InitSpec::RadialSphere { r_lo: i.r_lo, r_hi: i.r_hi },
        }
    }

    pub fn schedule(&self) -> StepSchedule {
        let s = &self.dynamics.schedule;
        match s.kind {
            ScheduleKind::Constant => StepSchedule::Constant(s.c),
            ScheduleKind::ExpDecay => StepSchedule::ExpDecay { c: s.c, rate: s.rate },
        }
    }

    /// Snapshot stride in steps of size `eps`.
    pub fn snapshot_every(&self, eps: f64) -> u64 {
        match self.io.snapshot_dt {
            Some(dt) => ((dt / eps).round() as u64).max(1),
            None => self.io.snapshot_every,
        }
    }

    /// Dynamics settings at step size `eps` for seed index `s`.
    pub fn dynamics_config(&self, eps: f64, s: u64) -> DynamicsConfig {
        let d = &self.dynamics;
        DynamicsConfig {
            eps,
            lambda: d.lambda,
            tau: d.tau,
            horizon: d.horizon,
            h_ode: d.h_ode.unwrap_or(eps).min(eps),
            seed: self.seed.wrapping_add(s),
            snapshot_every: self.snapshot_every(eps),
            schedule: self.schedule(),
            ode_tol: d.ode_tol,
        }
    }

    pub fn rescaled_flow_config(&self) -> RescaledFlowConfig {
        let k = &self.kernel;
        RescaledFlowConfig { horizon: k.horizon, eps: k.snapshot_dt, h_ode: k.h_ode, ode_tol: k.ode_tol }
    }

    /// Invariants that serde cannot express. Each message names its path.
    pub fn validate(&self) -> LabResult<()> {
        self.activation()?;
        let d = &self.dynamics;
        if let Some(h) = d.h_ode {
            if h > d.eps * (1.0 + 1e-12) && self.study.eps_grid.is_empty() {
                return Err(LabError::config("dynamics.h_ode must not exceed dynamics.eps"));
            }
        }
        if d.n == 0 {
            return Err(LabError::config("dynamics.N must be ≥ 1"));
        }
        if !(d.scale > 0.0 && d.scale.is_finite()) {
            return Err(LabError::config("dynamics.scale must be finite and > 0"));
        }
        if self.io.snapshot_every == 0 {
            return Err(LabError::config("io.snapshot_every must be ≥ 1"));
        }
        if let Some(dt) = self.io.snapshot_dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(LabError::config("io.snapshot_dt must be finite and > 0"));
            }
        }
        if self.study.seeds == 0 {
            return Err(LabError::config("study.seeds must be ≥ 1"));
        }
        if self.study.eps_grid.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(LabError::config("study.eps_grid entries must be finite and > 0"));
        }
        if self.study.alpha_grid.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
            return Err(LabError::config("study.alpha_grid entries must be finite and > 0"));
        }
        if self.io.out_dir.is_empty() {
            return Err(LabError::config("io.out_dir must not be empty"));
        }
        self.dynamics_config(d.eps, 0).validate()?;
        Ok(())
    }
}

/// Owned data stream behind a `&dyn DataModel`.
#[derive(Debug, Clone)]
pub enum Data {
    Gaussians(AnisotropicGaussians),
    Empirical(EmpiricalDataset),
}

impl Data {
    pub fn model(&self) -> &dyn DataModel {
        match self {
            Data::Gaussians(g) => g,
            Data::Empirical(e) => e,
        }
    }

    pub fn empirical(&self) -> Option<&EmpiricalDataset> {
        match self {
            Data::Empirical(e) => Some(e),
            Data::Gaussians(_) => None,
        }
    }
}

/// Where a resolved leaf value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Default,
    File,
    Flag,
}

#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: RunConfig,
    pub provenance: BTreeMap<String, Source>,
}

impl Resolved {
    /// Pretty JSON of the resolved config, newline-terminated.
    pub fn echo(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.config).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn provenance_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.provenance).expect("provenance serializes");
        s.push('\n');
        s
    }
}

/// Splits `key.path=value`; a leading `--` is optional.
pub fn parse_override(arg: &str) -> LabResult<(String, String)> {
    let body = arg.strip_prefix("--").unwrap_or(arg);
    match body.split_once('=') {
        Some((k, v)) if !k.is_empty() => Ok((k.to_string(), v.to_string())),
        _ => Err(LabError::config(format!("override {arg:?} must look like --section.key=value"))),
    }
}

/// Flag values are read as JSON when they parse, and as strings otherwise,
/// so `--dynamics.mode=fixed` and `--dynamics.eps=1e-3` both work.
fn flag_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

fn merge(base: &mut Value, top: &Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, t) => *b = t.clone(),
    }
}

fn set_path(root: &mut Value, path: &str, value: Value) -> LabResult<()> {
    let mut cur = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(LabError::config(format!("empty segment in override path {path:?}")));
        }
        let obj =
            cur.as_object_mut().ok_or_else(|| LabError::config(format!("{}: not a section", parts[..i].join("."))))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    Ok(())
}

fn leaves(v: &Value, prefix: &str, out: &mut Vec<String>) {
    match v {
        Value::Object(m) if !m.is_empty() => {
            for (k, child) in m {
                let p = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                leaves(child, &p, out);
            }
        }
        _ => out.push(prefix.to_string()),
    }
}

fn has_path(v: &Value, path: &str) -> bool {
    let mut cur = v;
    for part in path.split('.') {
        match cur.get(part) {
            Some(next) => cur = next,
            None => return false,
        }
    }
    true
}

/// Parses an optional file (empty or missing contents mean `{}`), applies
/// flag overrides, rejects unknown keys and checks invariants.
pub fn parse_and_validate(
    experiment: Experiment,
    file: Option<&Path>,
    overrides: &[(String, String)],
) -> LabResult<Resolved> {
    let file_value = match file {
        None => Value::Object(Map::new()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| LabError::io(p, e))?;
            if text.trim().is_empty() {
                Value::Object(Map::new())
            } else {
                serde_json::from_str(&text).map_err(|e| LabError::config(format!("{}: {e}", p.display())))?
            }
        }
    };
    if !file_value.is_object() {
        return Err(LabError::config("the config file must hold a JSON object"));
    }
    if let Some(e) = file_value.get("experiment") {
        if e.as_str() != Some(experiment.name()) {
            return Err(LabError::config(format!("experiment: file says {e}, command line says {experiment}")));
        }
    }
    resolve(experiment, file_value, overrides)
}

/// Same as [`parse_and_validate`] with the file contents given as a value.
pub fn resolve(experiment: Experiment, file_value: Value, overrides: &[(String, String)]) -> LabResult<Resolved> {
    let mut merged = serde_json::to_value(RunConfig::defaults(experiment)).expect("defaults serialize");
    merge(&mut merged, &file_value);
    let mut flag_paths = Vec::new();
    for (k, v) in overrides {
        if k == "experiment" {
            return Err(LabError::config("experiment is chosen on the command line, not by a flag"));
        }
        set_path(&mut merged, k, flag_value(v))?;
        flag_paths.push(k.clone());
    }
    let config: RunConfig = serde_path_to_error::deserialize(&merged).map_err(|e| {
        let path = e.path().to_string();
        LabError::config(format!("{path}: {}", e.into_inner()))
    })?;
    config.validate()?;
    let resolved_value = serde_json::to_value(&config).expect("config serializes");
    let mut paths = Vec::new();
    leaves(&resolved_value, "", &mut paths);
    let provenance = paths
        .into_iter()
        .map(|p| {
            let src = if flag_paths.iter().any(|f| p == *f || p.starts_with(&format!("{f}."))) {
                Source::Flag
            } else if has_path(&file_value, &p) {
                Source::File
            } else {
                Source::Default
            };
            (p, src)
        })
        .collect();
    Ok(Resolved { config, provenance })
}
