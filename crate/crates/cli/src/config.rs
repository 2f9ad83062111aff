//! TOML run configuration.

use serde::Deserialize;

use qse_core::engine::{CycleSpec, GammaPolicy, Segment, SegmentKind};
use qse_core::model::{GaussianPacket, PhysicalParams, PotentialSpec, Schedule};
use qse_core::wignerpde::{FieldKind, PhaseGrid};
use qse_core::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Pde,
    Operator,
    Classical,
    Engine,
    VerifyQa,
    Crosscheck,
}

impl Scenario {
    pub const ALL: [Scenario; 6] =
        [Scenario::Pde, Scenario::Operator, Scenario::Classical, Scenario::Engine, Scenario::VerifyQa, Scenario::Crosscheck];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Pde => "pde",
            Scenario::Operator => "operator",
            Scenario::Classical => "classical",
            Scenario::Engine => "engine",
            Scenario::VerifyQa => "verify-qa",
            Scenario::Crosscheck => "crosscheck",
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            Scenario::Pde => "phase-space PDE for rho_W and rho_KR with the entropy ledger",
            Scenario::Operator => "operator stochastic trajectories in a truncated oscillator basis",
            Scenario::Classical => "classical Langevin trajectories with stochastic heat and work",
            Scenario::Engine => "two-bath stiffness cycle with the extracted-work bound",
            Scenario::VerifyQa => "quantum-analysis identity suite on random hermitian matrices",
            Scenario::Crosscheck => "PDE vs Langevin vs operator moments of a harmonic relaxation",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: Scenario,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub params: ParamsConfig,
    #[serde(default)]
    pub potential: PotentialConfig,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub basis: BasisConfig,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub cycle: Option<CycleConfig>,
    #[serde(default)]
    pub crosscheck: CrosscheckSection,
    #[serde(default)]
    pub tolerances: Tolerances,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamsConfig {
    pub mass: f64,
    pub nu: f64,
    pub temperature: f64,
    pub hbar: f64,
    pub kb: f64,
}

impl Default for ParamsConfig {
    fn default() -> Self {
        Self { mass: 1.0, nu: 1.0, temperature: 1.0, hbar: 1.0, kb: 1.0 }
    }
}

impl ParamsConfig {
    pub fn build(&self) -> Result<PhysicalParams> {
        PhysicalParams::with_kb(self.mass, self.nu, self.temperature, self.kb, self.hbar)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialConfig {
    /// λx²/2.
    Harmonic,
    /// λx²/2 + g x⁴.
    Quartic { g: f64 },
    Free,
    /// Σ c_k x^k with λ multiplying c[lambda_index].
    Polynomial {
        coefficients: Vec<f64>,
        lambda_index: usize,
        #[serde(default = "one")]
        lambda_scale: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl Default for PotentialConfig {
    fn default() -> Self {
        PotentialConfig::Harmonic
    }
}

impl PotentialConfig {
    pub fn build(&self) -> Result<PotentialSpec> {
        match self {
            PotentialConfig::Harmonic => Ok(PotentialSpec::harmonic()),
            PotentialConfig::Quartic { g } => PotentialSpec::harmonic_quartic(*g),
            PotentialConfig::Free => Ok(PotentialSpec::free()),
            PotentialConfig::Polynomial { coefficients, lambda_index, lambda_scale } => {
                PotentialSpec::scaled(coefficients.clone(), *lambda_index, *lambda_scale)
            }
        }
    }
}

/// Piecewise-linear λ(t); a single value means a static protocol.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub breakpoints: Option<Vec<[f64; 2]>>,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self { lambda: Some(1.0), breakpoints: None }
    }
}

impl ScheduleConfig {
    pub fn build(&self) -> Result<Schedule> {
        match (&self.breakpoints, self.lambda) {
            (Some(bp), _) => Schedule::new(bp.iter().map(|&[t, l]| (t, l)).collect()),
            (None, Some(l)) => Ok(Schedule::constant(l)),
            (None, None) => Ok(Schedule::constant(1.0)),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConfig {
    /// Gaussian packet; σ_p defaults to the minimum-uncertainty value ħ/2σ_x
    /// and σ_x to the coherent-state width of the reference oscillator.
    Packet {
        x0: f64,
        p0: f64,
        #[serde(default)]
        sigma_x: Option<f64>,
        #[serde(default)]
        sigma_p: Option<f64>,
    },
    /// Boltzmann state e^{−βH(λ)} at the schedule's initial λ.
    Equilibrium,
}

impl Default for InitialConfig {
    fn default() -> Self {
        InitialConfig::Packet { x0: 0.0, p0: 0.0, sigma_x: None, sigma_p: None }
    }
}

impl InitialConfig {
    /// Resolved Gaussian packet, or `None` for an equilibrium start.
    pub fn packet(&self, params: &PhysicalParams, omega: f64) -> Result<Option<GaussianPacket>> {
        match *self {
            InitialConfig::Equilibrium => Ok(None),
            InitialConfig::Packet { x0, p0, sigma_x, sigma_p } => {
                let hbar = params.hbar();
                let sx = match sigma_x {
                    Some(s) => s,
                    None if hbar > 0.0 => (hbar / (2.0 * params.mass() * omega)).sqrt(),
                    None => 0.5,
                };
                let sp = match sigma_p {
                    Some(s) => s,
                    None if hbar > 0.0 => hbar / (2.0 * sx),
                    None => 0.5,
                };
                GaussianPacket::new(x0, p0, sx, sp).map(Some)
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub x_half: f64,
    pub nx: usize,
    pub p_half: f64,
    pub np: usize,
}

impl GridConfig {
    pub fn build(&self) -> Result<PhaseGrid> {
        PhaseGrid::symmetric(self.x_half, self.nx, self.p_half, self.np)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BasisConfig {
    pub n: usize,
    pub guard: usize,
    /// Reference frequency; defaults to √(λ₀/m).
    #[serde(default)]
    pub omega_ref: Option<f64>,
}

impl Default for BasisConfig {
    fn default() -> Self {
        Self { n: qse_core::heisenberg::DEFAULT_DIMENSION, guard: qse_core::heisenberg::DEFAULT_GUARD, omega_ref: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindConfig {
    Quantum,
    Classical,
}

impl From<KindConfig> for FieldKind {
    fn from(k: KindConfig) -> Self {
        match k {
            KindConfig::Quantum => FieldKind::Quantum,
            KindConfig::Classical => FieldKind::Classical,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub dt: f64,
    pub t_end: f64,
    pub sample_every: usize,
    /// Snapshot stride in steps; 0 keeps only the initial and final fields.
    pub snapshot_every: usize,
    /// Trajectories for the stochastic scenarios.
    pub paths: usize,
    pub field_kind: KindConfig,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { dt: 1e-3, t_end: 1.0, sample_every: 10, snapshot_every: 0, paths: 1000, field_kind: KindConfig::Quantum }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaConfig {
    Continue,
    Reset,
}

impl From<GammaConfig> for GammaPolicy {
    fn from(g: GammaConfig) -> Self {
        match g {
            GammaConfig::Continue => GammaPolicy::Continue,
            GammaConfig::Reset => GammaPolicy::Reset,
        }
    }
}

/// Four-stroke stiffness cycle, or an explicit list of segments.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CycleConfig {
    #[serde(default)]
    pub t_hot: Option<f64>,
    #[serde(default)]
    pub t_cold: Option<f64>,
    #[serde(default)]
    pub lambdas: Option<[f64; 4]>,
    #[serde(default)]
    pub isotherm_time: Option<f64>,
    #[serde(default)]
    pub adiabat_time: Option<f64>,
    #[serde(default)]
    pub segments: Option<Vec<SegmentConfig>>,
    #[serde(default = "one_usize")]
    pub repetitions: usize,
    #[serde(default = "continue_policy")]
    pub reset_gamma: GammaConfig,
    /// Replace linear ramps by smoothstep ramps with this many pieces.
    #[serde(default)]
    pub smooth_pieces: Option<usize>,
    /// Largest PDE step; defaults to `run.dt`.
    #[serde(default)]
    pub dt_max: Option<f64>,
}

fn one_usize() -> usize {
    1
}

fn continue_policy() -> GammaConfig {
    GammaConfig::Continue
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentConfig {
    /// Bath temperature; absent for an adiabat.
    #[serde(default)]
    pub temperature: Option<f64>,
    pub duration: f64,
    pub lambda_start: f64,
    pub lambda_end: f64,
}

impl CycleConfig {
    pub fn build(&self) -> Result<CycleSpec> {
        let missing = |name: &'static str| qse_core::QseError::InvalidParameter {
            name,
            reason: "required for a four-stroke cycle without explicit segments".into(),
        };
        let spec = match &self.segments {
            Some(segs) => {
                let segments = segs
                    .iter()
                    .map(|s| {
                        let kind = match s.temperature {
                            Some(temperature) => SegmentKind::Isothermal { temperature },
                            None => SegmentKind::Adiabatic,
                        };
                        Segment::ramp(kind, s.duration, s.lambda_start, s.lambda_end)
                    })
                    .collect::<Result<Vec<_>>>()?;
                CycleSpec::new(segments, self.repetitions)?
            }
            None => CycleSpec::carnot(
                self.t_hot.ok_or_else(|| missing("t_hot"))?,
                self.t_cold.ok_or_else(|| missing("t_cold"))?,
                self.lambdas.ok_or_else(|| missing("lambdas"))?,
                self.isotherm_time.ok_or_else(|| missing("isotherm_time"))?,
                self.adiabat_time.ok_or_else(|| missing("adiabat_time"))?,
                self.repetitions,
            )?,
        };
        let spec = match self.smooth_pieces {
            Some(n) => spec.smoothed(n)?,
            None => spec,
        };
        Ok(spec.with_gamma_policy(self.reset_gamma.into()))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CrosscheckSection {
    pub langevin_paths: usize,
    pub operator_paths: usize,
    pub samples: usize,
    pub dt_sde: f64,
    pub z_max: f64,
}

impl Default for CrosscheckSection {
    fn default() -> Self {
        Self { langevin_paths: 100_000, operator_paths: 2_000, samples: 10, dt_sde: 0.01, z_max: 3.0 }
    }
}

/// Thresholds of the invariant checks reported in the summary.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub norm_drift: f64,
    /// Allowed ratio of |lhs − rhs| to 1e−3·max(|lhs|, νk_BT/m).
    pub identity_ratio: f64,
    pub min_rhs: f64,
    /// ∫HΣ dΓ relative to νk_BT/m.
    pub sigma_energy: f64,
    pub first_law_rel: f64,
    pub leak: f64,
    pub bound_slack: f64,
    pub hermiticity: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            norm_drift: 1e-6,
            identity_ratio: 1.0,
            min_rhs: -1e-10,
            sigma_energy: 1e-8,
            first_law_rel: 1e-3,
            leak: 1e-6,
            bound_slack: -1e-6,
            hermiticity: 1e-10,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> std::result::Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn grid(&self) -> Result<PhaseGrid> {
        match &self.grid {
            Some(g) => g.build(),
            None => Err(qse_core::QseError::InvalidParameter { name: "grid", reason: "this scenario needs a [grid] section".into() }),
        }
    }

    /// Reference oscillator frequency √(λ₀/m), falling back to 1 for
    /// non-confining starts.
    pub fn omega_ref(&self, params: &PhysicalParams, lambda0: f64) -> f64 {
        self.basis.omega_ref.unwrap_or_else(|| {
            let w = (lambda0 / params.mass()).sqrt();
            if w.is_finite() && w > 0.0 {
                w
            } else {
                1.0
            }
        })
    }
}
