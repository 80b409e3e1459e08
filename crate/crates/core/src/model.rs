//! Shared state types: point masses, absolute configurations, and the
//! relative-difference configurations the origin-independent formulations
//! evolve. Bodies are numbered 1..=N in input order everywhere user-facing.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Cartesian 3-vector used throughout the crate.
pub type Vec3 = Vector3<f64>;

/// Ordered pair of body indices, 1-based, always `j < k`.
///
/// Keys difference coordinates `r_j - r_k` and names body pairs in
/// diagnostics and trajectory columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PairKey {
    pub j: usize,
    pub k: usize,
}

impl PairKey {
    /// Panics if `j == 0` or `j >= k`; pair keys are 1-based and ordered.
    pub fn new(j: usize, k: usize) -> Self {
        assert!(j >= 1 && j < k, "pair key requires 1 <= j < k, got ({j},{k})");
        PairKey { j, k }
    }

    /// Digit stub used in column headers, e.g. `(1,2)` becomes `"12"`.
    pub fn stub(&self) -> String {
        format!("{}{}", self.j, self.k)
    }
}

impl fmt::Display for PairKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.j, self.k)
    }
}

/// All pair keys for `n` bodies in lexicographic order.
pub fn all_pairs(n: usize) -> Vec<PairKey> {
    let mut keys = Vec::with_capacity(n * (n.saturating_sub(1)) / 2);
    for j in 1..=n {
        for k in (j + 1)..=n {
            keys.push(PairKey { j, k });
        }
    }
    keys
}

/// Position of `key` within the lexicographic pair ordering for `n` bodies.
pub fn pair_index(key: PairKey, n: usize) -> usize {
    debug_assert!(key.k <= n);
    (key.j - 1) * (2 * n - key.j) / 2 + (key.k - key.j - 1)
}

/// Point mass with instantaneous position and velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Body {
    pub mass: f64,
    #[serde(with = "vec3_array")]
    pub position: Vec3,
    #[serde(with = "vec3_array")]
    pub velocity: Vec3,
}

impl Body {
    /// Rejects non-positive or non-finite masses and non-finite coordinates.
    pub fn new(mass: f64, position: Vec3, velocity: Vec3) -> Result<Self, ModelError> {
        if !mass.is_finite() || mass <= 0.0 {
            return Err(ModelError::NonPositiveMass { index: 0, mass });
        }
        for v in [&position, &velocity] {
            if !v.iter().all(|c| c.is_finite()) {
                return Err(ModelError::NonFiniteComponent { index: 0 });
            }
        }
        Ok(Body { mass, position, velocity })
    }
}

/// Serialize a `Vec3` as a plain 3-element array so state files stay
/// readable and independent of the linear algebra backend.
mod vec3_array {
    use super::Vec3;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Vec3, s: S) -> Result<S::Ok, S::Error> {
        [v.x, v.y, v.z].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec3, D::Error> {
        let a = <[f64; 3]>::deserialize(d)?;
        Ok(Vec3::new(a[0], a[1], a[2]))
    }
}

/// Snapshot of an absolute configuration at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct NBodyState {
    pub time: f64,
    /// Gravitational constant; nondimensional setups use 1.
    pub g: f64,
    pub bodies: Vec<Body>,
}

impl NBodyState {
    pub fn new(time: f64, g: f64, bodies: Vec<Body>) -> Self {
        NBodyState { time, g, bodies }
    }

    pub fn n(&self) -> usize {
        self.bodies.len()
    }

    pub fn masses(&self) -> Vec<f64> {
        self.bodies.iter().map(|b| b.mass).collect()
    }

    /// `r_j - r_k` for 1-based indices.
    pub fn difference(&self, j: usize, k: usize) -> Vec3 {
        self.bodies[j - 1].position - self.bodies[k - 1].position
    }

    pub fn separation(&self, j: usize, k: usize) -> f64 {
        self.difference(j, k).norm()
    }

    /// Smallest pairwise separation; `f64::INFINITY` for fewer than two bodies.
    pub fn min_separation(&self) -> f64 {
        let mut min = f64::INFINITY;
        for key in all_pairs(self.n()) {
            min = min.min(self.separation(key.j, key.k));
        }
        min
    }

    /// Same configuration with every position shifted by `shift`.
    /// Velocities are untouched: a rigid translation of the frame.
    pub fn translated(&self, shift: Vec3) -> Self {
        let bodies = self
            .bodies
            .iter()
            .map(|b| Body { mass: b.mass, position: b.position + shift, velocity: b.velocity })
            .collect();
        NBodyState { time: self.time, g: self.g, bodies }
    }
}

/// Mass-weighted mean position. Total mass is positive for any state built
/// from validated bodies.
pub fn center_of_mass(state: &NBodyState) -> Vec3 {
    let mut weighted = Vec3::zeros();
    let mut total = 0.0;
    for b in &state.bodies {
        weighted += b.mass * b.position;
        total += b.mass;
    }
    weighted / total
}

/// Which difference coordinates a relative configuration carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RelativeMode {
    /// N-1 differences against body 1: keys (1,2), ..., (1,N).
    Rs1,
    /// All N(N-1)/2 pairwise differences in lexicographic key order.
    Rs2,
}

impl RelativeMode {
    pub fn keys(&self, n: usize) -> Vec<PairKey> {
        match self {
            RelativeMode::Rs1 => (2..=n).map(|k| PairKey { j: 1, k }).collect(),
            RelativeMode::Rs2 => all_pairs(n),
        }
    }
}

/// One difference coordinate `r_j - r_k` and its rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairDiff {
    pub key: PairKey,
    pub position: Vec3,
    pub velocity: Vec3,
}

/// Configuration expressed purely in difference coordinates. Absolute
/// positions are deliberately absent; every operation downstream works on
/// differences alone.
#[derive(Debug, Clone, PartialEq)]
pub struct RelativeState {
    pub time: f64,
    pub g: f64,
    pub mode: RelativeMode,
    /// Masses of all N bodies, index 0 holding body 1.
    pub masses: Vec<f64>,
    /// Diffs in the exact key order of `mode.keys(n)`.
    pub diffs: Vec<PairDiff>,
}

impl RelativeState {
    pub fn n_bodies(&self) -> usize {
        self.masses.len()
    }

    /// Stored difference for a key pair, or its negation when queried in
    /// reverse order. `None` when (a,b) is not representable in this mode.
    pub fn diff_position(&self, a: usize, b: usize) -> Option<Vec3> {
        if a == b {
            return Some(Vec3::zeros());
        }
        let (key, sign) =
            if a < b { (PairKey { j: a, k: b }, 1.0) } else { (PairKey { j: b, k: a }, -1.0) };
        self.diffs.iter().find(|d| d.key == key).map(|d| sign * d.position)
    }

    /// Worst violation of `r_jk = r_1k - r_1j` over stored pairs. Meaningful
    /// for Rs2 states, where the triangle identities are monitored but never
    /// enforced; exact zero for Rs1 states (nothing redundant to check).
    pub fn triangle_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        if self.mode == RelativeMode::Rs2 {
            let n = self.n_bodies();
            for key in all_pairs(n) {
                if key.j == 1 {
                    continue;
                }
                let r_jk = self.diffs[pair_index(key, n)].position;
                let r_1j = self.diffs[pair_index(PairKey { j: 1, k: key.j }, n)].position;
                let r_1k = self.diffs[pair_index(PairKey { j: 1, k: key.k }, n)].position;
                worst = worst.max((r_jk - (r_1k - r_1j)).norm());
            }
        }
        worst
    }
}

/// Errors from constructing or converting model types.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("body {index}: mass must be a positive finite number, got {mass}")]
    NonPositiveMass { index: usize, mass: f64 },
    #[error("body {index}: position or velocity has a non-finite component")]
    NonFiniteComponent { index: usize },
    #[error("bodies {pair} coincide; difference coordinates need distinct positions")]
    DegeneratePair { pair: PairKey },
    #[error("{formulation} needs at least {required} bodies, got {actual}")]
    TooFewBodies { formulation: &'static str, required: usize, actual: usize },
}

/// Initial-condition audit. The absolute conditions demand distinct
/// positions for every body pair; the derived conditions restate that in
/// pivot differences d_k = r_1 - r_k, namely d_k != 0 and d_j != d_k.
/// `equivalence_ok` records that both views flag exactly the same pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    /// Pairs with coincident positions, by absolute comparison.
    pub coincident: Vec<PairKey>,
    /// 1-based indices of bodies with non-positive mass.
    pub bad_masses: Vec<usize>,
    /// k with d_k = 0, i.e. body k sitting on body 1.
    pub zero_pivot_diffs: Vec<usize>,
    /// (j,k) with j,k >= 2 and d_j = d_k.
    pub equal_pivot_diffs: Vec<PairKey>,
    /// Absolute and derived violation sets agree pair-for-pair.
    pub equivalence_ok: bool,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.coincident.is_empty() && self.bad_masses.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            write!(f, "ok: all masses positive, all pairwise separations nonzero")?;
        } else {
            for i in &self.bad_masses {
                writeln!(f, "body {i}: non-positive mass")?;
            }
            for p in &self.coincident {
                writeln!(f, "bodies {p}: coincident positions")?;
            }
        }
        if !self.equivalence_ok {
            write!(f, "\nwarning: pivot-difference conditions disagree with absolute ones")?;
        }
        Ok(())
    }
}

/// Checks that the state admits every formulation: positive masses and
/// strictly positive separation for each pair, cross-checked against the
/// equivalent conditions on pivot differences.
pub fn validate_initial_conditions(state: &NBodyState) -> ValidationReport {
    let n = state.n();
    let mut coincident = Vec::new();
    let mut bad_masses = Vec::new();
    for (i, b) in state.bodies.iter().enumerate() {
        if !b.mass.is_finite() || b.mass <= 0.0 {
            bad_masses.push(i + 1);
        }
    }
    for key in all_pairs(n) {
        if state.separation(key.j, key.k) == 0.0 {
            coincident.push(key);
        }
    }

    // Derived view: d_k = r_1 - r_k for k >= 2.
    let mut zero_pivot_diffs = Vec::new();
    let mut equal_pivot_diffs = Vec::new();
    if n >= 2 {
        let r1 = state.bodies[0].position;
        let d: Vec<Vec3> = state.bodies[1..].iter().map(|b| r1 - b.position).collect();
        for (i, dk) in d.iter().enumerate() {
            if dk.norm() == 0.0 {
                zero_pivot_diffs.push(i + 2);
            }
        }
        for j in 2..=n {
            for k in (j + 1)..=n {
                if (d[j - 2] - d[k - 2]).norm() == 0.0 {
                    equal_pivot_diffs.push(PairKey { j, k });
                }
            }
        }
    }

    let derived: Vec<PairKey> = zero_pivot_diffs
        .iter()
        .map(|&k| PairKey { j: 1, k })
        .chain(equal_pivot_diffs.iter().copied())
        .collect();
    let mut absolute = coincident.clone();
    let mut derived_sorted = derived;
    absolute.sort();
    derived_sorted.sort();
    let equivalence_ok = absolute == derived_sorted;

    ValidationReport { coincident, bad_masses, zero_pivot_diffs, equal_pivot_diffs, equivalence_ok }
}

/// Projects an absolute state onto difference coordinates. Fails on any
/// degenerate (zero) difference the target mode would have to store or
/// reconstruct, naming the offending pair.
pub fn to_relative(state: &NBodyState, mode: RelativeMode) -> Result<RelativeState, ModelError> {
    let n = state.n();
    if n < 2 {
        return Err(ModelError::TooFewBodies {
            formulation: "relative coordinates",
            required: 2,
            actual: n,
        });
    }
    // Every pair must be distinct regardless of mode: Rs1 reconstructs the
    // (j,k) differences it does not store.
    for key in all_pairs(n) {
        if state.separation(key.j, key.k) == 0.0 {
            return Err(ModelError::DegeneratePair { pair: key });
        }
    }
    let diffs = mode
        .keys(n)
        .iter()
        .map(|&key| PairDiff {
            key,
            position: state.difference(key.j, key.k),
            velocity: state.bodies[key.j - 1].velocity - state.bodies[key.k - 1].velocity,
        })
        .collect();
    Ok(RelativeState { time: state.time, g: state.g, mode, masses: state.masses(), diffs })
}

/// How a scenario's evolution is represented and stepped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Formulation {
    /// Absolute positions, one second-order equation per body.
    Ncme,
    /// Differences against body 1.
    Rs1,
    /// All pairwise differences.
    Rs2,
    /// Differences against body 1 with body 1 treated as a fixed origin;
    /// same storage as Rs1, right side arranged around the origin body.
    BcosReduced,
}

impl Formulation {
    pub fn relative_mode(&self) -> Option<RelativeMode> {
        match self {
            Formulation::Ncme => None,
            Formulation::Rs1 | Formulation::BcosReduced => Some(RelativeMode::Rs1),
            Formulation::Rs2 => Some(RelativeMode::Rs2),
        }
    }

    pub fn min_bodies(&self) -> usize {
        match self {
            Formulation::Ncme => 1,
            _ => 2,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Formulation::Ncme => "NCME",
            Formulation::Rs1 => "RS1",
            Formulation::Rs2 => "RS2",
            Formulation::BcosReduced => "BCOS_REDUCED",
        }
    }
}

impl fmt::Display for Formulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Stepper choice and its tuning knobs as they appear in scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepperSpec {
    pub method: MethodKind,
    /// Fixed step for RK4.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// Error-control tolerances for RK45.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rel_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub abs_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MethodKind {
    #[serde(rename = "RK4")]
    Rk4,
    #[serde(rename = "RK45")]
    Rk45,
}

/// Named initial configuration plus run parameters; the on-disk scenario
/// format serializes this struct directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(rename = "G", default = "default_g")]
    pub g: f64,
    pub formulation: Formulation,
    pub t_end: f64,
    pub sample_interval: f64,
    /// Pair-separation floor below which a run aborts. Defaults to
    /// 1e-8 times the initial minimum separation when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub collision_guard_eps: Option<f64>,
    pub integrator: StepperSpec,
    pub bodies: Vec<Body>,
}

fn default_g() -> f64 {
    1.0
}

impl Scenario {
    /// Absolute state at t = 0 as listed in the scenario.
    pub fn initial_state(&self) -> NBodyState {
        NBodyState::new(0.0, self.g, self.bodies.clone())
    }

    /// Semantic checks beyond parsing: body count and per-body fields.
    pub fn validate(&self) -> Result<(), ModelError> {
        let required = self.formulation.min_bodies();
        if self.bodies.len() < required {
            return Err(ModelError::TooFewBodies {
                formulation: self.formulation.as_str(),
                required,
                actual: self.bodies.len(),
            });
        }
        for (i, b) in self.bodies.iter().enumerate() {
            if !b.mass.is_finite() || b.mass <= 0.0 {
                return Err(ModelError::NonPositiveMass { index: i + 1, mass: b.mass });
            }
            let finite = b.position.iter().chain(b.velocity.iter()).all(|c| c.is_finite());
            if !finite {
                return Err(ModelError::NonFiniteComponent { index: i + 1 });
            }
        }
        Ok(())
    }
}
