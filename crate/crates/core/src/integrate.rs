//! Propagation of any supported formulation as a first-order system of
//! doubled dimension, with a fixed-step RK4 path, an adaptive embedded
//! RK45 (Dormand-Prince) path, a hard collision guard, and the
//! quadrature-based double-integral solution for externally prescribed
//! accelerations.

use crate::dynamics::{nbody_accelerations, reduced_bcos_rhs, rs1_rhs, rs2_rhs, Singularity};
use crate::invariants::{InvariantError, InvariantReport};
use crate::kepler::OrbitSample;
use crate::model::{
    all_pairs, validate_initial_conditions, to_relative, Formulation, MethodKind, ModelError,
    NBodyState, PairKey, RelativeState, Scenario, Vec3,
};
use serde::Serialize;

/// Fraction of the initial minimum separation used for the default
/// collision guard. The model is collision-free by assumption; the guard
/// turns an approach to collision into a recorded termination instead of a
/// silent blowup.
pub const DEFAULT_GUARD_FRACTION: f64 = 1e-8;

const DEFAULT_MAX_STEPS: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Method {
    Rk4 { dt: f64 },
    Rk45 { rel_tol: f64, abs_tol: f64 },
}

/// Runtime integration configuration, assembled from a scenario or built
/// directly. All fields must be strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntegratorSettings {
    pub method: Method,
    pub max_steps: u64,
    /// Cadence at which samples (and optional invariant reports) are taken.
    pub sample_interval: f64,
    /// Explicit guard radius; `None` derives it from the initial state.
    pub collision_guard_eps: Option<f64>,
}

impl IntegratorSettings {
    pub fn validated(self) -> Result<Self, IntegrateError> {
        let bad = |what: &str| Err(IntegrateError::Settings(what.to_string()));
        match self.method {
            Method::Rk4 { dt } if !dt.is_finite() || dt <= 0.0 => {
                return bad("dt must be positive and finite")
            }
            Method::Rk45 { rel_tol, abs_tol }
                if !rel_tol.is_finite()
                    || !abs_tol.is_finite()
                    || rel_tol <= 0.0
                    || abs_tol <= 0.0 =>
            {
                return bad("rel_tol and abs_tol must be positive and finite")
            }
            _ => {}
        }
        if self.max_steps == 0 {
            return bad("max_steps must be > 0");
        }
        if !self.sample_interval.is_finite() || self.sample_interval <= 0.0 {
            return bad("sample_interval must be positive and finite");
        }
        if let Some(eps) = self.collision_guard_eps {
            if !eps.is_finite() || eps <= 0.0 {
                return bad("collision_guard_eps must be positive and finite");
            }
        }
        Ok(self)
    }

    /// Combines the scenario's stepper table with its top-level run keys,
    /// rejecting mismatched method/tuning combinations.
    pub fn from_scenario(sc: &Scenario) -> Result<Self, IntegrateError> {
        let spec = &sc.integrator;
        let method = match spec.method {
            MethodKind::Rk4 => {
                if spec.rel_tol.is_some() || spec.abs_tol.is_some() {
                    return Err(IntegrateError::Settings(
                        "rel_tol/abs_tol apply to RK45, not RK4".into(),
                    ));
                }
                let dt = spec.dt.ok_or_else(|| {
                    IntegrateError::Settings("integrator.dt is required for RK4".into())
                })?;
                Method::Rk4 { dt }
            }
            MethodKind::Rk45 => {
                if spec.dt.is_some() {
                    return Err(IntegrateError::Settings("dt applies to RK4, not RK45".into()));
                }
                let rel_tol = spec.rel_tol.ok_or_else(|| {
                    IntegrateError::Settings("integrator.rel_tol is required for RK45".into())
                })?;
                let abs_tol = spec.abs_tol.ok_or_else(|| {
                    IntegrateError::Settings("integrator.abs_tol is required for RK45".into())
                })?;
                Method::Rk45 { rel_tol, abs_tol }
            }
        };
        IntegratorSettings {
            method,
            max_steps: spec.max_steps.unwrap_or(DEFAULT_MAX_STEPS),
            sample_interval: sc.sample_interval,
            collision_guard_eps: sc.collision_guard_eps,
        }
        .validated()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IntegrateError {
    #[error("initial conditions rejected: {0}")]
    InvalidInitialConditions(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Singularity(#[from] Singularity),
    #[error("integrator settings: {0}")]
    Settings(String),
    #[error("step budget of {0} exhausted")]
    StepBudget(u64),
}

impl From<InvariantError> for IntegrateError {
    fn from(e: InvariantError) -> Self {
        match e {
            InvariantError::Model(m) => IntegrateError::Model(m),
            InvariantError::Dynamics(d) => match d {
                crate::dynamics::DynamicsError::Singularity(s) => IntegrateError::Singularity(s),
                other => IntegrateError::Settings(other.to_string()),
            },
        }
    }
}

/// Why a trajectory stopped where it did.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TerminationReason {
    ReachedTEnd,
    CollisionGuard,
    MaxSteps,
}

impl std::fmt::Display for TerminationReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            TerminationReason::ReachedTEnd => "ReachedTEnd",
            TerminationReason::CollisionGuard => "CollisionGuard",
            TerminationReason::MaxSteps => "MaxSteps",
        };
        f.write_str(s)
    }
}

/// What one slot of the state vector refers to: a body's absolute
/// coordinate or a pair difference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateKey {
    Body(usize),
    Pair(PairKey),
}

impl StateKey {
    /// Digit stub for column headers: body 2 -> "2", pair (1,2) -> "12".
    pub fn stub(&self) -> String {
        match self {
            StateKey::Body(i) => i.to_string(),
            StateKey::Pair(p) => p.stub(),
        }
    }
}

/// One recorded instant: the packed state vector is all key positions
/// (3 components each) followed by all key velocities.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub time: f64,
    pub y: Vec<f64>,
    pub report: Option<InvariantReport>,
}

/// Ordered samples of one run plus enough metadata to interpret them.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub formulation: Formulation,
    pub g: f64,
    pub masses: Vec<f64>,
    pub keys: Vec<StateKey>,
    pub samples: Vec<Sample>,
    pub termination: TerminationReason,
    /// Guard radius actually in force during the run.
    pub collision_guard_eps: f64,
    /// Attempted steps, including rejected ones.
    pub steps: u64,
}

impl Trajectory {
    pub fn n_keys(&self) -> usize {
        self.keys.len()
    }

    pub fn position(&self, sample: usize, key: usize) -> Vec3 {
        let y = &self.samples[sample].y;
        Vec3::new(y[3 * key], y[3 * key + 1], y[3 * key + 2])
    }

    pub fn velocity(&self, sample: usize, key: usize) -> Vec3 {
        let off = 3 * self.keys.len();
        let y = &self.samples[sample].y;
        Vec3::new(y[off + 3 * key], y[off + 3 * key + 1], y[off + 3 * key + 2])
    }

    pub fn key_index(&self, key: StateKey) -> Option<usize> {
        self.keys.iter().position(|k| *k == key)
    }

    pub fn final_sample(&self) -> &Sample {
        self.samples.last().expect("a trajectory always records its initial sample")
    }

    /// Position/velocity track of one key, for conic fitting.
    pub fn orbit_samples(&self, key: usize) -> Vec<OrbitSample> {
        (0..self.samples.len())
            .map(|s| OrbitSample { position: self.position(s, key), velocity: self.velocity(s, key) })
            .collect()
    }

    /// Reconstructs the absolute state at a sample; `None` for relative
    /// formulations, which never carry absolute positions.
    pub fn absolute_state_at(&self, sample: usize) -> Option<NBodyState> {
        if self.formulation != Formulation::Ncme {
            return None;
        }
        let bodies = (0..self.keys.len())
            .map(|i| crate::model::Body {
                mass: self.masses[i],
                position: self.position(sample, i),
                velocity: self.velocity(sample, i),
            })
            .collect();
        Some(NBodyState::new(self.samples[sample].time, self.g, bodies))
    }

    /// Reconstructs the relative state at a sample; `None` for NCME runs.
    pub fn relative_state_at(&self, sample: usize) -> Option<RelativeState> {
        let mode = self.formulation.relative_mode()?;
        let diffs = self
            .keys
            .iter()
            .enumerate()
            .map(|(i, key)| {
                let StateKey::Pair(pair) = *key else { unreachable!("relative keys are pairs") };
                crate::model::PairDiff {
                    key: pair,
                    position: self.position(sample, i),
                    velocity: self.velocity(sample, i),
                }
            })
            .collect();
        Some(RelativeState {
            time: self.samples[sample].time,
            g: self.g,
            mode,
            masses: self.masses.clone(),
            diffs,
        })
    }
}

/// Classical fourth-order Runge-Kutta update of `y` over one step `dt`.
/// The evaluator fills `dydt` for a given `(t, y)`; a singularity raised at
/// any of the four stage points aborts the step.
pub fn rk4_step<F>(rhs: &mut F, y: &[f64], t: f64, dt: f64) -> Result<Vec<f64>, Singularity>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<(), Singularity>,
{
    let n = y.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];

    rhs(t, y, &mut k1)?;
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * dt * k1[i];
    }
    rhs(t + 0.5 * dt, &tmp, &mut k2)?;
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * dt * k2[i];
    }
    rhs(t + 0.5 * dt, &tmp, &mut k3)?;
    for i in 0..n {
        tmp[i] = y[i] + dt * k3[i];
    }
    rhs(t + dt, &tmp, &mut k4)?;

    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        out.push(y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
    }
    Ok(out)
}

// Dormand-Prince 5(4) tableau. The seventh stage sits at t + h and the
// fifth-order weights are its row, so the error estimate costs one extra
// evaluation per attempt.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Fifth-order minus embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

struct Dopri5 {
    rel_tol: f64,
    abs_tol: f64,
}

struct Attempt {
    y_new: Vec<f64>,
    /// Scaled error norm; <= 1 means the step is acceptable.
    err: f64,
}

impl Dopri5 {
    fn attempt<F>(&self, rhs: &mut F, y: &[f64], t: f64, h: f64) -> Result<Attempt, Singularity>
    where
        F: FnMut(f64, &[f64], &mut [f64]) -> Result<(), Singularity>,
    {
        let n = y.len();
        let mut k = vec![vec![0.0; n]; 7];
        let mut tmp = vec![0.0; n];

        rhs(t, y, &mut k[0])?;
        for stage in 1..7 {
            for i in 0..n {
                let mut acc = 0.0;
                for (s, ks) in k.iter().enumerate().take(stage) {
                    acc += A[stage][s] * ks[i];
                }
                tmp[i] = y[i] + h * acc;
            }
            let (head, tail) = k.split_at_mut(stage);
            let _ = head;
            rhs(t + C[stage] * h, &tmp, &mut tail[0])?;
        }

        // Stage 7 input is already the fifth-order solution.
        let mut y_new = vec![0.0; n];
        for i in 0..n {
            let mut acc = 0.0;
            for s in 0..6 {
                acc += A[6][s] * k[s][i];
            }
            y_new[i] = y[i] + h * acc;
        }

        let mut err_sq = 0.0;
        for i in 0..n {
            let mut e = 0.0;
            for (s, ks) in k.iter().enumerate() {
                e += E[s] * ks[i];
            }
            let scale = self.abs_tol + self.rel_tol * y[i].abs().max(y_new[i].abs());
            let ratio = h * e / scale;
            err_sq += ratio * ratio;
        }
        Ok(Attempt { y_new, err: (err_sq / n as f64).sqrt() })
    }

    fn step_factor(err: f64) -> f64 {
        // Standard controller: safety 0.9, growth clamped to [0.2, 10].
        (0.9 * err.powf(-0.2)).clamp(0.2, 10.0)
    }
}

/// Adaptive RK45 drive of a generic first-order system from `t0` to
/// `t_end`, returning the final state. Exposed for validating externally
/// prescribed accelerations against quadrature.
pub fn rk45_integrate<F>(
    rhs: &mut F,
    y0: &[f64],
    t0: f64,
    t_end: f64,
    rel_tol: f64,
    abs_tol: f64,
    max_steps: u64,
) -> Result<Vec<f64>, IntegrateError>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<(), Singularity>,
{
    let stepper = Dopri5 { rel_tol, abs_tol };
    let mut t = t0;
    let mut y = y0.to_vec();
    let span = t_end - t0;
    if span <= 0.0 {
        return Ok(y);
    }
    let mut h = span * 1e-4;
    let mut steps = 0u64;
    while t < t_end {
        if steps >= max_steps {
            return Err(IntegrateError::StepBudget(max_steps));
        }
        steps += 1;
        let clamped = h >= t_end - t;
        let h_try = if clamped { t_end - t } else { h };
        let attempt = stepper.attempt(rhs, &y, t, h_try)?;
        if attempt.err <= 1.0 {
            y = attempt.y_new;
            t = if clamped { t_end } else { t + h_try };
            h = h_try * Dopri5::step_factor(attempt.err);
        } else {
            h = h_try * Dopri5::step_factor(attempt.err).min(1.0);
        }
    }
    Ok(y)
}

/// Formulation-specific packing and right-hand side around scratch states.
struct System {
    formulation: Formulation,
    guard: f64,
    scratch_abs: Option<NBodyState>,
    scratch_rel: Option<RelativeState>,
    keys: Vec<StateKey>,
}

impl System {
    fn new(initial: &NBodyState, formulation: Formulation, guard: f64) -> Result<Self, ModelError> {
        let (scratch_abs, scratch_rel, keys) = match formulation.relative_mode() {
            None => {
                let keys = (1..=initial.n()).map(StateKey::Body).collect();
                (Some(initial.clone()), None, keys)
            }
            Some(mode) => {
                let rel = to_relative(initial, mode)?;
                let keys = rel.diffs.iter().map(|d| StateKey::Pair(d.key)).collect();
                (None, Some(rel), keys)
            }
        };
        Ok(System { formulation, guard, scratch_abs, scratch_rel, keys })
    }

    fn dim(&self) -> usize {
        6 * self.keys.len()
    }

    fn pack_initial(&self) -> Vec<f64> {
        let k = self.keys.len();
        let mut y = vec![0.0; 6 * k];
        match (&self.scratch_abs, &self.scratch_rel) {
            (Some(abs), _) => {
                for (i, b) in abs.bodies.iter().enumerate() {
                    y[3 * i..3 * i + 3].copy_from_slice(b.position.as_slice());
                    y[3 * k + 3 * i..3 * k + 3 * i + 3].copy_from_slice(b.velocity.as_slice());
                }
            }
            (None, Some(rel)) => {
                for (i, d) in rel.diffs.iter().enumerate() {
                    y[3 * i..3 * i + 3].copy_from_slice(d.position.as_slice());
                    y[3 * k + 3 * i..3 * k + 3 * i + 3].copy_from_slice(d.velocity.as_slice());
                }
            }
            _ => unreachable!(),
        }
        y
    }

    fn rhs(&mut self, t: f64, y: &[f64], dydt: &mut [f64]) -> Result<(), Singularity> {
        let k = self.keys.len();
        dydt[..3 * k].copy_from_slice(&y[3 * k..]);
        match self.formulation {
            Formulation::Ncme => {
                let state = self.scratch_abs.as_mut().expect("NCME system has absolute scratch");
                state.time = t;
                for (i, b) in state.bodies.iter_mut().enumerate() {
                    b.position = Vec3::new(y[3 * i], y[3 * i + 1], y[3 * i + 2]);
                }
                let accels = nbody_accelerations(state, self.guard)?;
                for (i, a) in accels.iter().enumerate() {
                    dydt[3 * k + 3 * i..3 * k + 3 * i + 3].copy_from_slice(a.as_slice());
                }
            }
            _ => {
                let rel = self.scratch_rel.as_mut().expect("relative system has relative scratch");
                rel.time = t;
                for (i, d) in rel.diffs.iter_mut().enumerate() {
                    d.position = Vec3::new(y[3 * i], y[3 * i + 1], y[3 * i + 2]);
                }
                let rhs = match self.formulation {
                    Formulation::Rs1 => rs1_rhs(rel, self.guard),
                    Formulation::Rs2 => rs2_rhs(rel, self.guard),
                    Formulation::BcosReduced => reduced_bcos_rhs(rel, self.guard),
                    Formulation::Ncme => unreachable!(),
                };
                let rhs = rhs.map_err(|e| match e {
                    crate::dynamics::DynamicsError::Singularity(s) => s,
                    other => unreachable!("mode mismatch cannot occur here: {other}"),
                })?;
                for (i, (_, a)) in rhs.entries().iter().enumerate() {
                    dydt[3 * k + 3 * i..3 * k + 3 * i + 3].copy_from_slice(a.as_slice());
                }
            }
        }
        Ok(())
    }

    /// Smallest pair separation implied by a packed state, including the
    /// separations a pivot-difference state only represents implicitly.
    fn min_separation(&self, y: &[f64]) -> f64 {
        let k = self.keys.len();
        let pos = |i: usize| Vec3::new(y[3 * i], y[3 * i + 1], y[3 * i + 2]);
        let mut min = f64::INFINITY;
        match self.formulation {
            Formulation::Ncme => {
                for p in all_pairs(k) {
                    min = min.min((pos(p.j - 1) - pos(p.k - 1)).norm());
                }
            }
            Formulation::Rs1 | Formulation::BcosReduced => {
                // Stored: d_i for bodies 2..N. Implied: d_k - d_j.
                for i in 0..k {
                    min = min.min(pos(i).norm());
                }
                for i in 0..k {
                    for j in (i + 1)..k {
                        min = min.min((pos(j) - pos(i)).norm());
                    }
                }
            }
            Formulation::Rs2 => {
                for i in 0..k {
                    min = min.min(pos(i).norm());
                }
            }
        }
        min
    }

    fn report(&self, time: f64, y: &[f64]) -> Result<Option<InvariantReport>, InvariantError> {
        let k = self.keys.len();
        let pos = |i: usize| Vec3::new(y[3 * i], y[3 * i + 1], y[3 * i + 2]);
        let vel = |i: usize| Vec3::new(y[3 * k + 3 * i], y[3 * k + 3 * i + 1], y[3 * k + 3 * i + 2]);
        match self.formulation {
            Formulation::Ncme => {
                let abs = self.scratch_abs.as_ref().expect("NCME scratch");
                if abs.bodies.len() < 2 {
                    return Ok(None);
                }
                let bodies = abs
                    .bodies
                    .iter()
                    .enumerate()
                    .map(|(i, b)| crate::model::Body {
                        mass: b.mass,
                        position: pos(i),
                        velocity: vel(i),
                    })
                    .collect();
                let state = NBodyState::new(time, abs.g, bodies);
                Ok(Some(InvariantReport::from_state(&state)?))
            }
            _ => {
                let rel = self.scratch_rel.as_ref().expect("relative scratch");
                let mut snapshot = rel.clone();
                snapshot.time = time;
                for (i, d) in snapshot.diffs.iter_mut().enumerate() {
                    d.position = pos(i);
                    d.velocity = vel(i);
                }
                Ok(Some(InvariantReport::from_relative(&snapshot)?))
            }
        }
    }
}

/// Integrates a scenario under the given settings. The initial state is
/// validated before any stepping. The result is a trajectory that always
/// contains the initial sample, ends at `t_end`, the collision guard, or
/// the step budget, and records which of the three happened.
/// `with_reports` attaches an invariant report to every sample.
pub fn propagate(
    scenario: &Scenario,
    settings: &IntegratorSettings,
    with_reports: bool,
) -> Result<Trajectory, IntegrateError> {
    let settings = settings.validated()?;
    scenario.validate()?;
    let initial = scenario.initial_state();
    let validation = validate_initial_conditions(&initial);
    if !validation.is_ok() {
        return Err(IntegrateError::InvalidInitialConditions(validation.to_string()));
    }

    let min_sep0 = initial.min_separation();
    let guard = match settings.collision_guard_eps {
        Some(eps) => {
            if initial.n() >= 2 && eps >= min_sep0 {
                return Err(IntegrateError::InvalidInitialConditions(format!(
                    "collision guard {eps:e} is not below the initial minimum separation {min_sep0:e}"
                )));
            }
            eps
        }
        None if initial.n() >= 2 => DEFAULT_GUARD_FRACTION * min_sep0,
        None => 0.0,
    };

    let mut system = System::new(&initial, scenario.formulation, guard)?;
    let mut y = system.pack_initial();
    debug_assert_eq!(y.len(), system.dim());

    let t_end = scenario.t_end;
    if !t_end.is_finite() || t_end <= 0.0 {
        return Err(IntegrateError::Settings("t_end must be positive and finite".into()));
    }
    let interval = settings.sample_interval;
    let want_reports = with_reports && initial.n() >= 2;

    let mut samples = Vec::new();
    let mut record = |system: &System, t: f64, y: &[f64]| -> Result<(), IntegrateError> {
        let report = if want_reports { system.report(t, y)? } else { None };
        samples.push(Sample { time: t, y: y.to_vec(), report });
        Ok(())
    };

    let mut t = 0.0;
    record(&system, t, &y)?;

    let mut steps = 0u64;
    let mut sample_idx = 1u64;
    // RK45 step-size memory; harmless for RK4.
    let mut h_next = (interval.min(t_end)) / 100.0;
    let h_floor = 16.0 * f64::EPSILON * t_end.max(1.0);

    let termination = 'run: loop {
        if t >= t_end {
            break TerminationReason::ReachedTEnd;
        }
        // Next sample boundary; snap to t_end when the remainder is dust.
        let raw = sample_idx as f64 * interval;
        let target = if raw >= t_end - 1e-9 * interval { t_end } else { raw };

        // Advance to the target, recording nothing in between.
        while t < target {
            if steps >= settings.max_steps {
                break 'run TerminationReason::MaxSteps;
            }
            steps += 1;
            match settings.method {
                Method::Rk4 { dt } => {
                    let clamped = dt >= target - t;
                    let h = if clamped { target - t } else { dt };
                    match rk4_step(&mut |tt, yy, dd| system.rhs(tt, yy, dd), &y, t, h) {
                        Ok(y_new) => {
                            if system.min_separation(&y_new) < guard {
                                break 'run TerminationReason::CollisionGuard;
                            }
                            y = y_new;
                            t = if clamped { target } else { t + h };
                        }
                        Err(_) => break 'run TerminationReason::CollisionGuard,
                    }
                }
                Method::Rk45 { rel_tol, abs_tol } => {
                    let stepper = Dopri5 { rel_tol, abs_tol };
                    let clamped = h_next >= target - t;
                    let h = if clamped { target - t } else { h_next };
                    match stepper.attempt(&mut |tt, yy, dd| system.rhs(tt, yy, dd), &y, t, h) {
                        Ok(attempt) if attempt.err <= 1.0 => {
                            if system.min_separation(&attempt.y_new) < guard {
                                break 'run TerminationReason::CollisionGuard;
                            }
                            y = attempt.y_new;
                            t = if clamped { target } else { t + h };
                            h_next = h * Dopri5::step_factor(attempt.err);
                        }
                        Ok(attempt) => {
                            h_next = h * Dopri5::step_factor(attempt.err).min(1.0);
                        }
                        Err(_) => {
                            // A stage point crossed the guard. Retry shorter:
                            // a smaller step may stay clear. Persistent
                            // failure down to the floor is a real approach
                            // to collision.
                            h_next = h * 0.5;
                            if h_next < h_floor {
                                break 'run TerminationReason::CollisionGuard;
                            }
                        }
                    }
                }
            }
        }

        if t >= target && target < t_end {
            record(&system, t, &y)?;
            sample_idx += 1;
        } else if t >= t_end {
            record(&system, t, &y)?;
            break TerminationReason::ReachedTEnd;
        }
    };

    Ok(Trajectory {
        formulation: scenario.formulation,
        g: scenario.g,
        masses: initial.masses(),
        keys: system.keys.clone(),
        samples,
        termination,
        collision_guard_eps: guard,
        steps,
    })
}

/// Composite-Simpson evaluation of
/// `r(t) = r0 + v0 (t - t0) + \int_{t0}^{t} \int_{t0}^{s} A(u) du ds`
/// for an externally prescribed acceleration. The inner antiderivative is
/// accumulated per node with one Simpson panel (exact through cubic A);
/// the outer integral uses 1024 composite panels. Requires `t >= t0`.
pub fn double_integral_solution<F>(a: F, r0: Vec3, v0: Vec3, t0: f64, t: f64) -> Vec3
where
    F: Fn(f64) -> Vec3,
{
    assert!(t >= t0, "double integral runs forward from t0");
    if t == t0 {
        return r0;
    }
    const OUTER_PANELS: usize = 1024;
    let nodes = 2 * OUTER_PANELS;
    let h = (t - t0) / nodes as f64;

    // Inner antiderivative F(s) at every outer node.
    let mut inner = Vec::with_capacity(nodes + 1);
    inner.push(Vec3::zeros());
    let mut acc = Vec3::zeros();
    for i in 0..nodes {
        let s0 = t0 + i as f64 * h;
        let s1 = s0 + h;
        acc += (h / 6.0) * (a(s0) + 4.0 * a(0.5 * (s0 + s1)) + a(s1));
        inner.push(acc);
    }

    // Outer composite Simpson over the tabulated antiderivative.
    let mut outer = Vec3::zeros();
    for p in 0..OUTER_PANELS {
        let base = 2 * p;
        outer += (h / 3.0) * (inner[base] + 4.0 * inner[base + 1] + inner[base + 2]);
    }

    r0 + v0 * (t - t0) + outer
}
