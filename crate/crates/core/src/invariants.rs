//! Checks that hold along any gravitational evolution regardless of where
//! the origin sits: a strictly negative constant-of-motion identity over
//! pairwise differences, its cross-term decomposition, restlessness counts
//! derived from it, translation-invariance measurements, and the
//! consistency analysis of pinning an origin to a body.

use crate::dynamics::{
    body_accels_from_diffs, rs1_rhs, rs2_rhs, DynamicsError, Singularity,
};
use crate::model::{
    all_pairs, pair_index, to_relative, ModelError, NBodyState, PairKey, RelativeMode,
    RelativeState, Vec3,
};
use serde::Serialize;

/// Residuals are measured relative to |rhs| with this absolute floor, so
/// states whose closed form is legitimately zero report zero residual
/// instead of dividing by zero.
const RESIDUAL_FLOOR: f64 = 1e-300;

/// Slack for the weighted-bound comparison. The bound is an exact-arithmetic
/// inequality whose two sides are computed along different floating-point
/// routes; collinear states reach equality and need a few ulps of grace.
const BOUND_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum InvariantError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

impl From<Singularity> for InvariantError {
    fn from(s: Singularity) -> Self {
        InvariantError::Dynamics(DynamicsError::Singularity(s))
    }
}

/// All pairwise differences of one configuration, with masses. This is the
/// common ground between absolute and relative states: every invariant here
/// is a function of differences only, so it can be evaluated along any
/// formulation's trajectory without reconstructing absolute positions.
pub(crate) struct PairGeometry {
    masses: Vec<f64>,
    g: f64,
    /// r_j - r_k for every j < k, lexicographic.
    diffs: Vec<Vec3>,
}

impl PairGeometry {
    pub fn from_state(state: &NBodyState) -> Self {
        let n = state.n();
        let diffs = all_pairs(n).iter().map(|p| state.difference(p.j, p.k)).collect();
        PairGeometry { masses: state.masses(), g: state.g, diffs }
    }

    pub fn from_relative(rel: &RelativeState) -> Self {
        let n = rel.n_bodies();
        let diffs = match rel.mode {
            RelativeMode::Rs2 => rel.diffs.iter().map(|p| p.position).collect(),
            RelativeMode::Rs1 => {
                // d_i = r_1 - r_i, so r_j - r_k = d_k - d_j.
                let d = |i: usize| -> Vec3 {
                    if i == 1 {
                        Vec3::zeros()
                    } else {
                        rel.diffs[i - 2].position
                    }
                };
                all_pairs(n).iter().map(|p| d(p.k) - d(p.j)).collect()
            }
        };
        PairGeometry { masses: rel.masses.clone(), g: rel.g, diffs }
    }

    fn n(&self) -> usize {
        self.masses.len()
    }

    /// r_a - r_b, 1-based.
    fn diff(&self, a: usize, b: usize) -> Vec3 {
        if a == b {
            Vec3::zeros()
        } else if a < b {
            self.diffs[pair_index(PairKey { j: a, k: b }, self.n())]
        } else {
            -self.diffs[pair_index(PairKey { j: b, k: a }, self.n())]
        }
    }

    fn body_accels(&self) -> Result<Vec<Vec3>, Singularity> {
        body_accels_from_diffs(&self.masses, self.g, |a, b| self.diff(a, b), 0.0)
    }
}

fn relative_residual(lhs: f64, rhs: f64) -> f64 {
    (lhs - rhs).abs() / rhs.abs().max(RESIDUAL_FLOOR)
}

/// Both sides of the pairwise-difference identity
///
///   sum_{j<k} m_j m_k (r_j - r_k) . (r_j - r_k)''
///     = -G M sum_{j<k} m_j m_k / |r_j - r_k|  <  0,    M = sum_i m_i.
///
/// The left side uses brute-force per-body accelerations; the right side is
/// the closed form. Their agreement is what trajectory monitoring tracks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MotionIdentity {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

fn identity_of(geom: &PairGeometry) -> Result<MotionIdentity, Singularity> {
    let accels = geom.body_accels()?;
    let n = geom.n();
    let total_mass: f64 = geom.masses.iter().sum();
    let mut lhs = 0.0;
    let mut inv_sep_sum = 0.0;
    for (idx, key) in all_pairs(n).iter().enumerate() {
        let mm = geom.masses[key.j - 1] * geom.masses[key.k - 1];
        let d = geom.diffs[idx];
        let rel_accel = accels[key.j - 1] - accels[key.k - 1];
        lhs += mm * d.dot(&rel_accel);
        inv_sep_sum += mm / d.norm();
    }
    let rhs = -geom.g * total_mass * inv_sep_sum;
    Ok(MotionIdentity { lhs, rhs, residual: relative_residual(lhs, rhs) })
}

/// Evaluates the identity on an absolute state. Requires N >= 2; the empty
/// pair sum of a single body carries no information.
pub fn motion_identity(state: &NBodyState) -> Result<MotionIdentity, InvariantError> {
    Ok(identity_of(&PairGeometry::from_state(state))?)
}

/// Cross-term sum of the identity's proof, checked against its closed form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TSumCheck {
    /// Direct evaluation of the triple sum over (j,k) pairs and third bodies.
    pub t_sum: f64,
    /// -G sum_{j<k} (sum_{i != j,k} m_i) m_j m_k / |r_j - r_k|.
    pub closed: f64,
    pub residual: f64,
}

fn t_sums_of(geom: &PairGeometry) -> Result<TSumCheck, Singularity> {
    let n = geom.n();
    let g = geom.g;
    let m = &geom.masses;
    let mut t_sum = 0.0;
    let mut closed = 0.0;
    let checked = |a: usize, b: usize, v: &Vec3| -> Result<f64, Singularity> {
        let sep = v.norm();
        if sep > 0.0 {
            Ok(sep)
        } else {
            Err(Singularity { pair: PairKey { j: a.min(b), k: a.max(b) }, separation: sep, guard: 0.0 })
        }
    };
    for (idx, key) in all_pairs(n).iter().enumerate() {
        let (j, k) = (key.j, key.k);
        let d_jk = geom.diffs[idx];
        let s_jk = checked(j, k, &d_jk)?;
        let mm = m[j - 1] * m[k - 1];
        let mut cross = 0.0;
        // Mass of everything except j and k, summed directly rather than as
        // M - m_j - m_k: the subtraction leaves rounding debris where the
        // true value is zero (N = 2) or tiny.
        let mut others = 0.0;
        for i in 1..=n {
            if i == j || i == k {
                continue;
            }
            let r_ij = geom.diff(i, j);
            let s_ij = checked(i, j, &r_ij)?;
            let r_ik = geom.diff(i, k);
            let s_ik = checked(i, k, &r_ik)?;
            cross += m[i - 1]
                * (d_jk.dot(&r_ij) / (s_ij * s_ij * s_ij) - d_jk.dot(&r_ik) / (s_ik * s_ik * s_ik));
            others += m[i - 1];
        }
        t_sum += g * mm * cross;
        closed -= g * others * mm / s_jk;
    }
    Ok(TSumCheck { t_sum, closed, residual: relative_residual(t_sum, closed) })
}

/// Direct-versus-closed comparison of the cross terms. Informative for
/// N >= 3; with two bodies both sides are exactly zero by construction.
pub fn t_sum_check(state: &NBodyState) -> Result<TSumCheck, InvariantError> {
    Ok(t_sums_of(&PairGeometry::from_state(state))?)
}

/// Verdict on pinning the origin to body 1 of a three-body system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BcosVerdict {
    /// Equal companion masses in the exact antipodal configuration; the
    /// naive origin-pinned equations happen to be solvable.
    Consistent,
    /// Companion masses differ; no geometry can satisfy the pinned system.
    InconsistentMassRatio,
    /// Masses match but the companions are not antipodal.
    InconsistentGeometry,
}

/// BCOS check tolerances: the underlying conditions are exact equalities,
/// tested up to floating error.
pub const BCOS_MASS_TOL: f64 = 1e-9;
pub const BCOS_GEOMETRY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bcos3Consistency {
    pub verdict: BcosVerdict,
    /// | m2 r2/|r2|^3 + m3 r3/|r3|^3 |; zero exactly when the pinned
    /// system's algebraic constraint is satisfiable.
    pub constraint_residual: f64,
    /// |m2 - m3| / max(m2, m3).
    pub mass_mismatch: f64,
    /// | r2 + sqrt(m2/m3) r3 |, the distance from the antipodal relation.
    pub geometry_residual: f64,
}

/// Classifies a three-body configuration with body 1 pinned at the origin.
/// Consistent iff the companion masses are equal (relative tolerance
/// [`BCOS_MASS_TOL`]) and r2 = -sqrt(m2/m3) r3 within
/// [`BCOS_GEOMETRY_TOL`] times the larger companion radius.
/// Requires nonzero r2, r3 and positive masses.
pub fn bcos3_consistency_check(m2: f64, m3: f64, r2: Vec3, r3: Vec3) -> Bcos3Consistency {
    debug_assert!(m2 > 0.0 && m3 > 0.0);
    let s2 = r2.norm();
    let s3 = r3.norm();
    debug_assert!(s2 > 0.0 && s3 > 0.0);

    let constraint_residual = (m2 * r2 / (s2 * s2 * s2) + m3 * r3 / (s3 * s3 * s3)).norm();
    let mass_mismatch = (m2 - m3).abs() / m2.max(m3);
    let geometry_residual = (r2 + (m2 / m3).sqrt() * r3).norm();

    let verdict = if mass_mismatch > BCOS_MASS_TOL {
        BcosVerdict::InconsistentMassRatio
    } else if geometry_residual > BCOS_GEOMETRY_TOL * s2.max(s3) {
        BcosVerdict::InconsistentGeometry
    } else {
        BcosVerdict::Consistent
    };
    Bcos3Consistency { verdict, constraint_residual, mass_mismatch, geometry_residual }
}

/// Magnitude of the acceleration a two-body system with the origin pinned
/// on body 1 demands of the motionless origin: G m2 / |r2|^2. Any strictly
/// positive value certifies that the pinned two-body system contradicts
/// itself. Requires nonzero r2.
pub fn two_body_bcos_contradiction(m2: f64, r2: Vec3, g: f64) -> f64 {
    let s = r2.norm();
    debug_assert!(s > 0.0);
    g * m2 / (s * s)
}

/// Restlessness indicators: which pairs and bodies accelerate measurably,
/// plus the weighted bound that proves some pair always must.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RestlessnessReport {
    /// Pairs with relative acceleration magnitude above the threshold.
    pub restless_pairs: Vec<PairKey>,
    /// Bodies with acceleration magnitude above the threshold.
    pub accelerating_bodies: usize,
    /// Threshold actually used.
    pub threshold: f64,
    /// sum m_j m_k |r_jk| |(r_jk)''|, the weighted acceleration mass.
    pub weighted_sum: f64,
    /// |rhs| of the motion identity; the weighted sum can never fall below
    /// it, which forces restless pairs to exist.
    pub bound: f64,
    pub bound_ok: bool,
}

fn restlessness_of(
    geom: &PairGeometry,
    threshold: Option<f64>,
) -> Result<RestlessnessReport, Singularity> {
    let accels = geom.body_accels()?;
    let identity = identity_of(geom)?;
    let n = geom.n();
    let keys = all_pairs(n);

    let mut weighted_sum = 0.0;
    let mut max_weight = 0.0f64;
    let mut rel_accel_norms = Vec::with_capacity(keys.len());
    for (idx, key) in keys.iter().enumerate() {
        let weight = geom.masses[key.j - 1] * geom.masses[key.k - 1] * geom.diffs[idx].norm();
        let rel = (accels[key.j - 1] - accels[key.k - 1]).norm();
        weighted_sum += weight * rel;
        max_weight = max_weight.max(weight);
        rel_accel_norms.push(rel);
    }

    let bound = identity.rhs.abs();
    // Default threshold: if every pair sat at or below it, the weighted sum
    // would be at most half the bound, a contradiction. So "restless" is a
    // provable floor, not an arbitrary epsilon.
    let threshold = threshold
        .unwrap_or_else(|| bound / (2.0 * keys.len() as f64 * max_weight.max(RESIDUAL_FLOOR)));

    let restless_pairs = keys
        .iter()
        .zip(&rel_accel_norms)
        .filter(|(_, &a)| a > threshold)
        .map(|(k, _)| *k)
        .collect();
    let accelerating_bodies = accels.iter().filter(|a| a.norm() > threshold).count();
    let bound_ok = weighted_sum >= bound * (1.0 - BOUND_SLACK);

    Ok(RestlessnessReport {
        restless_pairs,
        accelerating_bodies,
        threshold,
        weighted_sum,
        bound,
        bound_ok,
    })
}

/// Counts restless pairs and accelerating bodies at the given threshold,
/// or at the bound-derived default when `None`.
pub fn restlessness_check(
    state: &NBodyState,
    threshold: Option<f64>,
) -> Result<RestlessnessReport, InvariantError> {
    Ok(restlessness_of(&PairGeometry::from_state(state), threshold)?)
}

/// Measures how far the relative right side moves when every absolute
/// position is shifted by the same vector before deriving relative
/// coordinates. Exact arithmetic gives zero for any shift; the return is
/// the worst per-key value of |rhs_shifted - rhs| / max(1, |rhs|).
pub fn translation_invariance_residual(
    state: &NBodyState,
    shift: Vec3,
    mode: RelativeMode,
) -> Result<f64, InvariantError> {
    let base = to_relative(state, mode)?;
    let shifted = to_relative(&state.translated(shift), mode)?;
    let (rhs_base, rhs_shifted) = match mode {
        RelativeMode::Rs1 => (rs1_rhs(&base, 0.0)?, rs1_rhs(&shifted, 0.0)?),
        RelativeMode::Rs2 => (rs2_rhs(&base, 0.0)?, rs2_rhs(&shifted, 0.0)?),
    };
    let mut worst = 0.0f64;
    for ((_, a), (_, b)) in rhs_base.entries().iter().zip(rhs_shifted.entries()) {
        worst = worst.max((b - a).norm() / a.norm().max(1.0));
    }
    Ok(worst)
}

/// Everything monitored at one sampled instant of a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantReport {
    pub time: f64,
    pub identity_lhs: f64,
    pub identity_rhs: f64,
    pub identity_residual: f64,
    pub t_sum: f64,
    pub t_sum_closed: f64,
    pub t_sum_residual: f64,
    pub restless_pairs: Vec<PairKey>,
    pub accelerating_bodies: usize,
    pub restless_threshold: f64,
    pub bound_ok: bool,
    /// identity_rhs < 0, as the identity demands of any valid state.
    pub negativity_ok: bool,
}

fn report_of(geom: &PairGeometry, time: f64) -> Result<InvariantReport, Singularity> {
    let identity = identity_of(geom)?;
    let t = t_sums_of(geom)?;
    let restless = restlessness_of(geom, None)?;
    Ok(InvariantReport {
        time,
        identity_lhs: identity.lhs,
        identity_rhs: identity.rhs,
        identity_residual: identity.residual,
        t_sum: t.t_sum,
        t_sum_closed: t.closed,
        t_sum_residual: t.residual,
        restless_pairs: restless.restless_pairs,
        accelerating_bodies: restless.accelerating_bodies,
        restless_threshold: restless.threshold,
        bound_ok: restless.bound_ok,
        negativity_ok: identity.rhs < 0.0,
    })
}

impl InvariantReport {
    /// Report for an absolute configuration. Requires N >= 2.
    pub fn from_state(state: &NBodyState) -> Result<Self, InvariantError> {
        Ok(report_of(&PairGeometry::from_state(state), state.time)?)
    }

    /// Report computed purely from difference coordinates; absolute
    /// positions are never reconstructed.
    pub fn from_relative(rel: &RelativeState) -> Result<Self, InvariantError> {
        Ok(report_of(&PairGeometry::from_relative(rel), rel.time)?)
    }
}
