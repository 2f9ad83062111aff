//! Two-bath stiffness cycles: isothermal segments coupled to a bath at T_i
//! and adiabatic segments with the bath removed (ν = 0). The extracted work
//! is compared against T_l ΔS^l + T_h ΔS^h.

#[cfg(test)]
mod tests;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::{PhysicalParams, PotentialSpec, Schedule};
use crate::thermo::{run_ledger, EntropyLedger, LedgerOptions, LedgerState, DEFAULT_EPSILON_REL};
use crate::wignerpde::{WignerStepper, BOUNDARY_TOL, DEFAULT_COURANT};

/// Relative tolerance for λ continuity between segments.
const LAMBDA_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum SegmentKind {
    Isothermal { temperature: f64 },
    Adiabatic,
}

/// Whether the memory factor γ restarts when a segment begins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaPolicy {
    #[default]
    Continue,
    Reset,
}

/// One stroke of the cycle; `schedule` runs on segment-local time [0, duration].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: SegmentKind,
    pub duration: f64,
    pub schedule: Schedule,
    #[serde(default)]
    pub reset_gamma: GammaPolicy,
}

impl Segment {
    /// Linear ramp from `lambda0` to `lambda1` over the whole segment.
    pub fn ramp(kind: SegmentKind, duration: f64, lambda0: f64, lambda1: f64) -> Result<Self> {
        if !(duration > 0.0) {
            return Err(invalid("duration", "segment duration must be positive"));
        }
        Ok(Self { kind, duration, schedule: Schedule::ramp(0.0, lambda0, duration, lambda1)?, reset_gamma: GammaPolicy::Continue })
    }

    /// Ramp along the smoothstep 3u² − 2u³, sampled at `pieces` linear
    /// pieces, so λ̇ starts and ends near zero. Slow adiabats with smooth ends
    /// excite far less than linear ones.
    pub fn smooth_ramp(kind: SegmentKind, duration: f64, lambda0: f64, lambda1: f64, pieces: usize) -> Result<Self> {
        if !(duration > 0.0) {
            return Err(invalid("duration", "segment duration must be positive"));
        }
        if pieces == 0 {
            return Err(invalid("pieces", "need at least one piece"));
        }
        let points = (0..=pieces)
            .map(|k| {
                let u = k as f64 / pieces as f64;
                (u * duration, lambda0 + (lambda1 - lambda0) * u * u * (3.0 - 2.0 * u))
            })
            .collect();
        Ok(Self { kind, duration, schedule: Schedule::new(points)?, reset_gamma: GammaPolicy::Continue })
    }

    pub fn lambda_start(&self) -> f64 {
        self.schedule.value(0.0)
    }

    pub fn lambda_end(&self) -> f64 {
        self.schedule.value(self.duration)
    }

    pub fn temperature(&self) -> Option<f64> {
        match self.kind {
            SegmentKind::Isothermal { temperature } => Some(temperature),
            SegmentKind::Adiabatic => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleSpec {
    pub segments: Vec<Segment>,
    #[serde(default = "one")]
    pub repetitions: usize,
}

fn one() -> usize {
    1
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= LAMBDA_TOL * a.abs().max(b.abs()).max(1.0)
}

impl CycleSpec {
    pub fn new(segments: Vec<Segment>, repetitions: usize) -> Result<Self> {
        let spec = Self { segments, repetitions };
        spec.validate()?;
        Ok(spec)
    }

    /// Four-stroke stiffness cycle: hot isotherm λ_a → λ_b, adiabat λ_b → λ_c,
    /// cold isotherm λ_c → λ_d, adiabat λ_d → λ_a.
    pub fn carnot(
        t_hot: f64,
        t_cold: f64,
        lambdas: [f64; 4],
        isotherm_time: f64,
        adiabat_time: f64,
        repetitions: usize,
    ) -> Result<Self> {
        let [a, b, c, d] = lambdas;
        Self::new(
            vec![
                Segment::ramp(SegmentKind::Isothermal { temperature: t_hot }, isotherm_time, a, b)?,
                Segment::ramp(SegmentKind::Adiabatic, adiabat_time, b, c)?,
                Segment::ramp(SegmentKind::Isothermal { temperature: t_cold }, isotherm_time, c, d)?,
                Segment::ramp(SegmentKind::Adiabatic, adiabat_time, d, a)?,
            ],
            repetitions,
        )
    }

    /// Replaces every segment's schedule by a smoothstep ramp between the
    /// same end values.
    pub fn smoothed(self, pieces: usize) -> Result<Self> {
        let segments = self
            .segments
            .iter()
            .map(|s| {
                let mut out = Segment::smooth_ramp(s.kind, s.duration, s.lambda_start(), s.lambda_end(), pieces)?;
                out.reset_gamma = s.reset_gamma;
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(segments, self.repetitions)
    }

    pub fn with_gamma_policy(mut self, policy: GammaPolicy) -> Self {
        self.segments.iter_mut().for_each(|s| s.reset_gamma = policy);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(invalid("segments", "a cycle needs at least one segment"));
        }
        if self.repetitions == 0 {
            return Err(invalid("repetitions", "must be at least 1"));
        }
        for (i, s) in self.segments.iter().enumerate() {
            if !(s.duration > 0.0 && s.duration.is_finite()) {
                return Err(invalid("duration", format!("segment {i} has duration {}", s.duration)));
            }
            if let Some(t) = s.temperature() {
                if !(t > 0.0 && t.is_finite()) {
                    return Err(invalid("temperature", format!("segment {i} has bath temperature {t}")));
                }
            }
        }
        for (i, w) in self.segments.windows(2).enumerate() {
            if !close(w[0].lambda_end(), w[1].lambda_start()) {
                return Err(invalid(
                    "schedule",
                    format!("lambda jumps from {} to {} between segments {i} and {}", w[0].lambda_end(), w[1].lambda_start(), i + 1),
                ));
            }
        }
        let (first, last) = (self.segments[0].lambda_start(), self.segments[self.segments.len() - 1].lambda_end());
        if !close(first, last) {
            return Err(invalid("schedule", format!("cycle does not close: lambda starts at {first} and ends at {last}")));
        }
        let mut temps: Vec<f64> = self.segments.iter().filter_map(Segment::temperature).collect();
        temps.sort_by(f64::total_cmp);
        temps.dedup();
        if temps.len() > 2 {
            return Err(invalid("segments", format!("at most two bath temperatures allowed, found {temps:?}")));
        }
        Ok(())
    }

    /// (T_l, T_h); equal for a single bath, `None` without any isothermal segment.
    pub fn temperatures(&self) -> Option<(f64, f64)> {
        let temps: Vec<f64> = self.segments.iter().filter_map(Segment::temperature).collect();
        let lo = temps.iter().copied().reduce(f64::min)?;
        let hi = temps.iter().copied().reduce(f64::max)?;
        Some((lo, hi))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleOptions {
    /// Largest PDE step; each segment uses the largest step below both this
    /// and its stability bound that divides its duration.
    pub dt_max: f64,
    pub sample_every: usize,
    pub epsilon_rel: f64,
    pub courant: f64,
    pub boundary_tol: f64,
}

impl CycleOptions {
    pub fn new(dt_max: f64, sample_every: usize) -> Self {
        Self { dt_max, sample_every, epsilon_rel: DEFAULT_EPSILON_REL, courant: DEFAULT_COURANT, boundary_tol: BOUNDARY_TOL }
    }
}

/// Bookkeeping of one simulated segment.
#[derive(Debug, Clone, Serialize)]
pub struct SegmentReport {
    pub repetition: usize,
    pub index: usize,
    pub kind: SegmentKind,
    /// Temperature entering T_i dS^i: the bath's, or the last bath's for an adiabat.
    pub temperature: f64,
    pub t_start: f64,
    pub duration: f64,
    pub steps: usize,
    pub dt: f64,
    pub lambda_start: f64,
    pub lambda_end: f64,
    pub gamma_start: f64,
    pub gamma_end: f64,
    pub energy_start: f64,
    pub energy_end: f64,
    pub heat: f64,
    /// Work done on the system.
    pub work: f64,
    pub delta_s_sh: f64,
    /// ∫ S_ME rate dt.
    pub delta_s_me: f64,
    pub delta_s: f64,
    /// ∫S_ME / ΔS (0 when ΔS vanishes).
    pub memory_share: f64,
    /// T_i ΔS^i.
    pub bound: f64,
    /// −ΔE + T_i ΔS^i − extracted work.
    pub slack: f64,
    /// Minimum of the instantaneous per-segment bound margin.
    pub bound_margin: f64,
    /// Worst |lhs − rhs| relative to the identity tolerance; isothermal only,
    /// since the tolerance floor νk_BT/m vanishes without a bath.
    pub identity_ratio: Option<f64>,
    pub min_rhs: f64,
    pub max_norm_drift: f64,
    pub min_value_w: f64,
    pub min_value_kr: f64,
    pub max_boundary_ratio: f64,
    #[serde(skip)]
    pub ledger: EntropyLedger,
}

/// Totals of one pass through the cycle.
#[derive(Debug, Clone, Serialize)]
pub struct CycleTotals {
    pub repetition: usize,
    /// W_EXT = −Σ work.
    pub w_ext: f64,
    pub delta_s_l: f64,
    pub delta_s_h: f64,
    pub memory_s_l: f64,
    pub memory_s_h: f64,
    pub memory_share_l: f64,
    pub memory_share_h: f64,
    pub heat_l: f64,
    pub heat_h: f64,
    pub bound: f64,
    pub slack: f64,
    pub energy_start: f64,
    pub energy_end: f64,
    /// W_EXT / Q_h (0 when no heat enters from the hot bath).
    pub efficiency: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CycleReport {
    pub t_l: f64,
    pub t_h: f64,
    pub carnot_efficiency: f64,
    pub segments: Vec<SegmentReport>,
    pub cycles: Vec<CycleTotals>,
    #[serde(skip)]
    pub state: Option<LedgerState>,
}

impl CycleReport {
    /// Totals of the last repetition, closest to the periodic steady state.
    pub fn last(&self) -> &CycleTotals {
        self.cycles.last().expect("a cycle report holds at least one repetition")
    }

    pub fn min_slack(&self) -> f64 {
        self.cycles.iter().map(|c| c.slack).fold(f64::INFINITY, f64::min)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn share(part: f64, total: f64) -> f64 {
    if total == 0.0 {
        0.0
    } else {
        part / total
    }
}

/// min over sampled times of −d⟨H⟩/dt + T_i dS/dt − extracted power, with
/// extracted power = −λ̇⟨∂_λV⟩.
pub fn segment_bound_check(segment: &SegmentReport) -> f64 {
    segment
        .ledger
        .rows
        .iter()
        .map(|r| -r.de_dt + segment.temperature * (r.ds_sh_dt + r.s_me_rate) + r.work_rate)
        .fold(f64::INFINITY, f64::min)
}

/// Evolves ρ_W and ρ_KR through every segment of every repetition.
pub fn run_cycle(
    spec: &CycleSpec,
    params_base: &PhysicalParams,
    potential: &PotentialSpec,
    initial: LedgerState,
    opts: &CycleOptions,
) -> Result<CycleReport> {
    spec.validate()?;
    let has_isotherm = spec.temperatures().is_some();
    if has_isotherm && params_base.nu() <= 0.0 {
        return Err(invalid("nu", "isothermal segments need nu > 0"));
    }
    if !(opts.dt_max > 0.0) {
        return Err(invalid("dt_max", "must be positive"));
    }
    let (t_l, t_h) = spec.temperatures().unwrap_or((params_base.temperature(), params_base.temperature()));
    let mut state = initial;
    let mut last_temperature = spec.segments.iter().find_map(Segment::temperature).unwrap_or(params_base.temperature());
    let mut segments = Vec::new();
    let mut cycles = Vec::new();

    for rep in 0..spec.repetitions {
        let first_seg = segments.len();
        for (index, seg) in spec.segments.iter().enumerate() {
            if seg.reset_gamma == GammaPolicy::Reset {
                state.reset_gamma();
            }
            let params = match seg.kind {
                SegmentKind::Isothermal { temperature } => {
                    last_temperature = temperature;
                    params_base.with_temperature(temperature)?
                }
                SegmentKind::Adiabatic => params_base.with_temperature(last_temperature)?.with_nu(0.0)?,
            };
            let t_start = state.rho_w.t;
            let shifted = Schedule::new(seg.schedule.breakpoints().iter().map(|(t, l)| (t + t_start, *l)).collect())?;
            let bound_dt = WignerStepper::new(&params, potential, &shifted, &state.rho_w.grid, opts.dt_max)?.stable_dt(
                &state.rho_w.grid,
                state.rho_w.kind,
                state.rho_w.gamma(),
                opts.courant,
            );
            let steps = (seg.duration / opts.dt_max.min(bound_dt)).ceil().max(4.0) as usize;
            let dt = seg.duration / steps as f64;
            let lopts = LedgerOptions {
                dt,
                duration: seg.duration,
                sample_every: opts.sample_every,
                snapshot_every: 0,
                epsilon_rel: opts.epsilon_rel,
                courant: opts.courant,
                boundary_tol: opts.boundary_tol,
            };
            let gamma_start = state.rho_w.gamma();
            let run = run_ledger(state, &params, potential, &shifted, &lopts)?;
            let delta_s = run.delta_s();
            let extracted = -run.work;
            let bound = last_temperature * delta_s;
            let mut report = SegmentReport {
                repetition: rep,
                index,
                kind: seg.kind,
                temperature: last_temperature,
                t_start,
                duration: seg.duration,
                steps: run.steps,
                dt,
                lambda_start: seg.lambda_start(),
                lambda_end: seg.lambda_end(),
                gamma_start,
                gamma_end: run.state.rho_w.gamma(),
                energy_start: run.energy_start,
                energy_end: run.energy_end,
                heat: run.heat,
                work: run.work,
                delta_s_sh: run.delta_s_sh,
                delta_s_me: run.s_me_integral,
                delta_s,
                memory_share: share(run.s_me_integral, delta_s),
                bound,
                slack: -(run.energy_end - run.energy_start) + bound - extracted,
                bound_margin: 0.0,
                identity_ratio: seg.temperature().map(|_| run.ledger.identity_ratio(&params)),
                min_rhs: run.ledger.min_rhs(),
                max_norm_drift: run.max_norm_drift,
                min_value_w: run.min_value_w,
                min_value_kr: run.min_value_kr,
                max_boundary_ratio: run.max_boundary_ratio,
                ledger: run.ledger,
            };
            report.bound_margin = segment_bound_check(&report);
            state = run.state;
            segments.push(report);
        }
        cycles.push(totals(rep, &segments[first_seg..], t_l, t_h));
    }
    Ok(CycleReport {
        t_l,
        t_h,
        carnot_efficiency: 1.0 - t_l / t_h,
        segments,
        cycles,
        state: Some(state),
    })
}

fn totals(repetition: usize, segs: &[SegmentReport], t_l: f64, t_h: f64) -> CycleTotals {
    let mut c = CycleTotals {
        repetition,
        w_ext: -segs.iter().map(|s| s.work).sum::<f64>(),
        delta_s_l: 0.0,
        delta_s_h: 0.0,
        memory_s_l: 0.0,
        memory_s_h: 0.0,
        memory_share_l: 0.0,
        memory_share_h: 0.0,
        heat_l: 0.0,
        heat_h: 0.0,
        bound: 0.0,
        slack: 0.0,
        energy_start: segs[0].energy_start,
        energy_end: segs[segs.len() - 1].energy_end,
        efficiency: 0.0,
    };
    for s in segs {
        let Some(t) = s.kind_temperature() else { continue };
        // a single-bath cycle books everything under the cold bath
        if t == t_l {
            c.delta_s_l += s.delta_s;
            c.memory_s_l += s.delta_s_me;
            c.heat_l += s.heat;
        } else if t == t_h {
            c.delta_s_h += s.delta_s;
            c.memory_s_h += s.delta_s_me;
            c.heat_h += s.heat;
        }
    }
    c.memory_share_l = share(c.memory_s_l, c.delta_s_l);
    c.memory_share_h = share(c.memory_s_h, c.delta_s_h);
    c.bound = t_l * c.delta_s_l + t_h * c.delta_s_h;
    c.slack = c.bound - c.w_ext;
    c.efficiency = if c.heat_h > 0.0 { c.w_ext / c.heat_h } else { 0.0 };
    c
}

impl SegmentReport {
    fn kind_temperature(&self) -> Option<f64> {
        match self.kind {
            SegmentKind::Isothermal { temperature } => Some(temperature),
            SegmentKind::Adiabatic => None,
        }
    }
}
