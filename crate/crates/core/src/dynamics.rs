//! Right-hand sides of the gravitational equations of motion in each
//! supported coordinate system, plus the origin-pinned variants used to
//! probe what goes wrong when one body is declared a fixed origin.
//!
//! All kernels visit pairs in a fixed lexicographic order and reuse each
//! pairwise interaction with a sign flip, so repeated evaluation of the
//! same state is bit-reproducible.

use crate::model::{PairKey, RelativeMode, RelativeState, NBodyState, Vec3};

/// A pair separation at or below the active collision guard.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("pair {pair}: separation {separation:.6e} at or below collision guard {guard:.6e}")]
pub struct Singularity {
    pub pair: PairKey,
    pub separation: f64,
    pub guard: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DynamicsError {
    #[error(transparent)]
    Singularity(#[from] Singularity),
    #[error("expected a {expected:?} relative state, got {actual:?}")]
    WrongMode { expected: RelativeMode, actual: RelativeMode },
    #[error("origin-pinned three-body analysis needs exactly 3 bodies, got {0}")]
    NotThreeBodies(usize),
    #[error("origin-pinned analysis requires body 1 at rest at the origin")]
    OriginBodyNotPinned,
}

/// `|d|` if it clears the guard, otherwise the singularity report.
/// A guard of zero still rejects exact coincidences and NaN.
fn checked_norm(pair: PairKey, d: &Vec3, guard: f64) -> Result<f64, Singularity> {
    let sep = d.norm();
    if sep > guard {
        Ok(sep)
    } else {
        Err(Singularity { pair, separation: sep, guard })
    }
}

/// Second derivatives of difference coordinates, keyed exactly like the
/// `RelativeState` they were computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct PairAccelerations {
    entries: Vec<(PairKey, Vec3)>,
}

impl PairAccelerations {
    pub fn entries(&self) -> &[(PairKey, Vec3)] {
        &self.entries
    }

    pub fn keys(&self) -> impl Iterator<Item = PairKey> + '_ {
        self.entries.iter().map(|(k, _)| *k)
    }

    pub fn values(&self) -> impl Iterator<Item = Vec3> + '_ {
        self.entries.iter().map(|(_, v)| *v)
    }

    /// `(r_a - r_b)''`, flipping the stored sign when `a > b`.
    pub fn get(&self, a: usize, b: usize) -> Option<Vec3> {
        if a == b {
            return Some(Vec3::zeros());
        }
        let (key, sign) =
            if a < b { (PairKey { j: a, k: b }, 1.0) } else { (PairKey { j: b, k: a }, -1.0) };
        self.entries.iter().find(|(k, _)| *k == key).map(|(_, v)| sign * v)
    }
}

/// Generic pairwise accumulation of per-body accelerations.
/// `diff(a, b)` must return `r_a - r_b` for 0-based indices.
fn accumulate_body_accels(
    masses: &[f64],
    g: f64,
    diff: impl Fn(usize, usize) -> Vec3,
    guard: f64,
) -> Result<Vec<Vec3>, Singularity> {
    let n = masses.len();
    let mut accels = vec![Vec3::zeros(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = diff(j, i);
            let sep = checked_norm(PairKey { j: i + 1, k: j + 1 }, &d, guard)?;
            let pull = d / (sep * sep * sep);
            accels[i] += g * masses[j] * pull;
            accels[j] -= g * masses[i] * pull;
        }
    }
    Ok(accels)
}

/// Acceleration of every body under mutual Newtonian attraction:
/// `a_i = G sum_{j != i} m_j (r_j - r_i) / |r_j - r_i|^3`.
pub fn nbody_accelerations(state: &NBodyState, guard: f64) -> Result<Vec<Vec3>, Singularity> {
    let masses = state.masses();
    let positions: Vec<Vec3> = state.bodies.iter().map(|b| b.position).collect();
    accumulate_body_accels(&masses, state.g, |a, b| positions[a] - positions[b], guard)
}

/// Per-body accelerations computed purely from difference coordinates.
/// `diff_1based(a, b)` must return `r_a - r_b`; absolute positions never
/// enter. Used for invariant monitoring along relative trajectories.
pub(crate) fn body_accels_from_diffs(
    masses: &[f64],
    g: f64,
    diff_1based: impl Fn(usize, usize) -> Vec3,
    guard: f64,
) -> Result<Vec<Vec3>, Singularity> {
    accumulate_body_accels(masses, g, |a, b| diff_1based(a + 1, b + 1), guard)
}

/// Shared kernel for the pivot-difference right side. With d_i = r_1 - r_i
/// (d_1 = 0), each pivot difference obeys
///
///   d_k'' = -G sum_{i=2..N} m_i d_i / |d_i|^3
///           -G sum_{i != k} m_i (d_k - d_i) / |d_k - d_i|^3
///
/// which closes over the stored differences alone.
fn pivot_rhs(rel: &RelativeState, guard: f64) -> Result<PairAccelerations, DynamicsError> {
    if rel.mode != RelativeMode::Rs1 {
        return Err(DynamicsError::WrongMode { expected: RelativeMode::Rs1, actual: rel.mode });
    }
    let n = rel.n_bodies();
    let g = rel.g;
    let m = &rel.masses;
    // d[i-2] holds the stored difference for pair (1,i).
    let d: Vec<Vec3> = rel.diffs.iter().map(|p| p.position).collect();

    // First sum is shared by every output component.
    let mut shared = Vec3::zeros();
    for i in 2..=n {
        let di = d[i - 2];
        let sep = checked_norm(PairKey { j: 1, k: i }, &di, guard)?;
        shared += m[i - 1] * di / (sep * sep * sep);
    }

    let mut entries = Vec::with_capacity(n - 1);
    for k in 2..=n {
        let dk = d[k - 2];
        let mut tail = Vec3::zeros();
        for i in 1..=n {
            if i == k {
                continue;
            }
            let rel_ik = if i == 1 { dk } else { dk - d[i - 2] };
            let pair = PairKey { j: i.min(k), k: i.max(k) };
            let sep = checked_norm(pair, &rel_ik, guard)?;
            tail += m[i - 1] * rel_ik / (sep * sep * sep);
        }
        let accel = -(g * shared) - g * tail;
        entries.push((PairKey { j: 1, k }, accel));
    }
    Ok(PairAccelerations { entries })
}

/// Right side of the pivot-difference system: second derivatives of
/// `r_1 - r_k` for k = 2..N, closed over the stored differences. Adding any
/// twice-differentiable shift c(t) to all positions leaves this unchanged.
pub fn rs1_rhs(rel: &RelativeState, guard: f64) -> Result<PairAccelerations, DynamicsError> {
    pivot_rhs(rel, guard)
}

/// Right side of the all-pairs system. For each stored pair (j,k),
///
///   (r_j - r_k)'' = -G (m_j + m_k) r_jk / |r_jk|^3
///                   + G sum_{i != j,k} m_i [ (r_i - r_j)/|r_i - r_j|^3
///                                          - (r_i - r_k)/|r_i - r_k|^3 ]
///
/// where every (r_a - r_b) is read from the stored pairs via the sign flip
/// r_ab = -r_ba. No triangle identity is assumed, so the system remains
/// well defined even when numerical drift breaks exact triangle closure.
pub fn rs2_rhs(rel: &RelativeState, guard: f64) -> Result<PairAccelerations, DynamicsError> {
    if rel.mode != RelativeMode::Rs2 {
        return Err(DynamicsError::WrongMode { expected: RelativeMode::Rs2, actual: rel.mode });
    }
    let n = rel.n_bodies();
    let g = rel.g;
    let m = &rel.masses;
    let lookup = |a: usize, b: usize| -> Vec3 {
        // r_a - r_b from stored pairs; callers never ask for a == b.
        if a < b {
            rel.diffs[crate::model::pair_index(PairKey { j: a, k: b }, n)].position
        } else {
            -rel.diffs[crate::model::pair_index(PairKey { j: b, k: a }, n)].position
        }
    };

    let mut entries = Vec::with_capacity(rel.diffs.len());
    for p in &rel.diffs {
        let PairKey { j, k } = p.key;
        let r_jk = p.position;
        let sep = checked_norm(p.key, &r_jk, guard)?;
        let mut accel = -g * (m[j - 1] + m[k - 1]) * r_jk / (sep * sep * sep);
        for i in 1..=n {
            if i == j || i == k {
                continue;
            }
            let r_ij = lookup(i, j);
            let s_ij = checked_norm(PairKey { j: i.min(j), k: i.max(j) }, &r_ij, guard)?;
            let r_ik = lookup(i, k);
            let s_ik = checked_norm(PairKey { j: i.min(k), k: i.max(k) }, &r_ik, guard)?;
            accel += g * m[i - 1] * (r_ij / (s_ij * s_ij * s_ij) - r_ik / (s_ik * s_ik * s_ik));
        }
        entries.push((p.key, accel));
    }
    Ok(PairAccelerations { entries })
}

/// Pivot-difference right side reread with body 1 frozen at the origin, so
/// the stored d_k = r_1 - r_k is just -r_k. Algebraically identical to
/// [`rs1_rhs`]; pinning the pivot discards its motion but not the form of
/// the equations, which is exactly why this reduced system stays usable
/// where a naive fixed-origin derivation becomes overdetermined.
pub fn reduced_bcos_rhs(
    rel: &RelativeState,
    guard: f64,
) -> Result<PairAccelerations, DynamicsError> {
    pivot_rhs(rel, guard)
}

/// What a naive "body 1 is the origin" rewrite of the three-body equations
/// produces: an algebraic constraint that generically cannot hold, plus the
/// two remaining acceleration right sides.
#[derive(Debug, Clone, PartialEq)]
pub struct Bcos3Rhs {
    /// G m2 r2/|r2|^3 + G m3 r3/|r3|^3; must vanish for the rewrite to be
    /// self-consistent.
    pub constraint: Vec3,
    pub accel2: Vec3,
    pub accel3: Vec3,
}

/// Evaluates the naive origin-pinned three-body right side. Requires body 1
/// exactly at rest at the origin; positions of bodies 2 and 3 are read as
/// offsets from it.
pub fn bcos3_naive_rhs(state: &NBodyState, guard: f64) -> Result<Bcos3Rhs, DynamicsError> {
    if state.n() != 3 {
        return Err(DynamicsError::NotThreeBodies(state.n()));
    }
    let b1 = &state.bodies[0];
    if b1.position != Vec3::zeros() || b1.velocity != Vec3::zeros() {
        return Err(DynamicsError::OriginBodyNotPinned);
    }
    let g = state.g;
    let (m1, m2, m3) = (state.bodies[0].mass, state.bodies[1].mass, state.bodies[2].mass);
    let r2 = state.bodies[1].position;
    let r3 = state.bodies[2].position;
    let s2 = checked_norm(PairKey { j: 1, k: 2 }, &r2, guard)?;
    let s3 = checked_norm(PairKey { j: 1, k: 3 }, &r3, guard)?;
    let r23 = r3 - r2;
    let s23 = checked_norm(PairKey { j: 2, k: 3 }, &r23, guard)?;

    let u2 = r2 / (s2 * s2 * s2);
    let u3 = r3 / (s3 * s3 * s3);
    let u23 = r23 / (s23 * s23 * s23);
    Ok(Bcos3Rhs {
        constraint: g * m2 * u2 + g * m3 * u3,
        accel2: -g * m1 * u2 + g * m3 * u23,
        accel3: -g * m1 * u3 - g * m2 * u23,
    })
}

/// Per-body disagreement between accelerations evaluated in the original
/// frame and in the frame whose origin rides on body 1.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyFrameCheck {
    /// One residual per body; body 1 first.
    pub residuals: Vec<f64>,
    /// Largest per-body acceleration magnitude, for scaling residuals.
    pub acceleration_scale: f64,
}

/// Measures how closely the equations of motion commute with moving the
/// origin onto body 1: for each body, the acceleration computed from
/// absolute positions against the one computed from positions relative to
/// body 1. Exact arithmetic gives zero for every body; floating point
/// leaves only cancellation noise. When body 1 already sits at the origin
/// the translation is the identity and every residual is exactly zero.
pub fn body_frame_residual(state: &NBodyState, guard: f64) -> Result<BodyFrameCheck, Singularity> {
    let absolute = nbody_accelerations(state, guard)?;
    let shifted = state.translated(-state.bodies[0].position);
    let in_frame = nbody_accelerations(&shifted, guard)?;
    let residuals = absolute.iter().zip(&in_frame).map(|(a, b)| (a - b).norm()).collect();
    let acceleration_scale = absolute.iter().map(|a| a.norm()).fold(0.0, f64::max);
    Ok(BodyFrameCheck { residuals, acceleration_scale })
}
