//! Conic-section reference solutions for two-body and effectively
//! two-body motion. A trajectory of one difference coordinate is reduced
//! to eccentricity, scale, and an in-plane basis in closed form from the
//! energy and angular momentum of its first sample; the fit quality over
//! the whole track then measures how well a chosen gravitational
//! parameter explains the motion.

use crate::model::Vec3;

/// Below this fitted eccentricity an orbit is reported as circular: the
/// directrix distance diverges as e -> 0 while the track itself stays
/// indistinguishable from a circle, so `d` carries the circular radius
/// instead.
pub const CIRCULAR_ECCENTRICITY_EDGE: f64 = 1e-8;

const PLANE_TOL_FACTOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KeplerError {
    #[error("theta {theta} lies outside the admissible range for eccentricity {e}")]
    ThetaOutOfRange { theta: f64, e: f64 },
    #[error("conic fit needs at least one sample")]
    EmptyTrajectory,
    #[error("gravitational parameter must be positive, got {0}")]
    NonPositiveMu(f64),
    #[error("angular momentum too small to define an orbital plane")]
    DegenerateAngularMomentum,
    #[error("samples leave the orbital plane: residual {residual:e} exceeds {tolerance:e}")]
    NonCoplanar { residual: f64, tolerance: f64 },
}

/// Position and velocity of one coordinate at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitSample {
    pub position: Vec3,
    pub velocity: Vec3,
}

/// Conic in polar form `r(theta) = e d / (1 + e cos theta)` around a focus,
/// with an orthonormal in-plane basis: `basis[0]` points at periapsis,
/// `basis[1]` completes it in the direction of motion at theta = 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ConicParams {
    pub e: f64,
    /// Distance to the directrix; the circular radius when `e` is below
    /// the circular edge.
    pub d: f64,
    /// Gravitational parameter the conic was built or fitted with.
    pub mu_eff: f64,
    pub basis: [Vec3; 2],
    /// Numerator of the polar form. Kept explicit so the circular edge
    /// does not degrade the radius formula.
    pub semi_latus: f64,
}

impl ConicParams {
    /// Panics on a malformed conic: negative `e`, non-positive `d`, or a
    /// basis that is not orthonormal.
    pub fn new(e: f64, d: f64, mu_eff: f64, basis: [Vec3; 2]) -> Self {
        assert!(e >= 0.0 && e.is_finite(), "eccentricity must be finite and non-negative");
        assert!(d > 0.0 && d.is_finite(), "directrix distance must be finite and positive");
        let ortho = (basis[0].norm() - 1.0).abs().max((basis[1].norm() - 1.0).abs())
            .max(basis[0].dot(&basis[1]).abs());
        assert!(ortho <= 1e-9, "basis must be orthonormal, defect {ortho:e}");
        let semi_latus = if e < CIRCULAR_ECCENTRICITY_EDGE { d } else { e * d };
        ConicParams { e, d, mu_eff, basis, semi_latus }
    }

    /// Unit normal of the orbital plane.
    pub fn normal(&self) -> Vec3 {
        self.basis[0].cross(&self.basis[1])
    }

    /// True anomaly of an in-plane point.
    pub fn theta_of(&self, r: Vec3) -> f64 {
        r.dot(&self.basis[1]).atan2(r.dot(&self.basis[0]))
    }

    /// Largest |theta| with a finite radius: pi for bound conics, the
    /// asymptote angle for e >= 1.
    pub fn admissible_half_range(&self) -> f64 {
        if self.e < 1.0 {
            std::f64::consts::PI
        } else {
            (-1.0 / self.e).acos()
        }
    }
}

/// Radius of the conic at true anomaly `theta`. For e >= 1 only
/// |theta| strictly inside the asymptote angle is admissible.
pub fn conic_radius(params: &ConicParams, theta: f64) -> Result<f64, KeplerError> {
    if params.e >= 1.0 && theta.abs() >= params.admissible_half_range() {
        return Err(KeplerError::ThetaOutOfRange { theta, e: params.e });
    }
    Ok(params.semi_latus / (1.0 + params.e * theta.cos()))
}

/// Result of reducing a trajectory to a conic.
#[derive(Debug, Clone, PartialEq)]
pub struct ConicFit {
    pub params: ConicParams,
    /// max over samples of |(sample radius) - (conic radius)| / d.
    pub max_residual: f64,
    /// Worst out-of-plane excursion relative to the largest radius.
    pub plane_residual: f64,
}

/// Fits a conic to one coordinate's track in closed form. Shape comes from
/// the first sample alone: the semi-latus rectum from its specific angular
/// momentum and the eccentricity from its specific energy under `mu_eff`.
/// Every sample must lie in the plane of the first one; the radial
/// mismatch over all samples is reported, not thresholded, so a caller can
/// compare candidate gravitational parameters.
pub fn fit_conic(samples: &[OrbitSample], mu_eff: f64) -> Result<ConicFit, KeplerError> {
    if samples.is_empty() {
        return Err(KeplerError::EmptyTrajectory);
    }
    if !mu_eff.is_finite() || mu_eff <= 0.0 {
        return Err(KeplerError::NonPositiveMu(mu_eff));
    }

    let r0 = samples[0].position;
    let v0 = samples[0].velocity;
    let r0_norm = r0.norm();
    let h = r0.cross(&v0);
    let scale = samples.iter().map(|s| s.position.norm()).fold(r0_norm, f64::max);
    if h.norm() <= 1e-12 * scale * v0.norm().max(1e-300) {
        return Err(KeplerError::DegenerateAngularMomentum);
    }
    let h_hat = h.normalize();

    let plane_tol = PLANE_TOL_FACTOR * scale;
    let plane_residual =
        samples.iter().map(|s| s.position.dot(&h_hat).abs()).fold(0.0, f64::max);
    if plane_residual > plane_tol {
        return Err(KeplerError::NonCoplanar { residual: plane_residual, tolerance: plane_tol });
    }

    let p = h.norm_squared() / mu_eff;
    let energy = 0.5 * v0.norm_squared() - mu_eff / r0_norm;
    let e = (1.0 + 2.0 * energy * p / mu_eff).max(0.0).sqrt();

    let e_hat_p = if e < CIRCULAR_ECCENTRICITY_EDGE {
        // No meaningful periapsis; anchor the basis at the first sample.
        let in_plane = r0 - r0.dot(&h_hat) * h_hat;
        in_plane.normalize()
    } else {
        let e_vec = v0.cross(&h) / mu_eff - r0 / r0_norm;
        e_vec.normalize()
    };
    let e_hat_q = h_hat.cross(&e_hat_p);
    let d = if e < CIRCULAR_ECCENTRICITY_EDGE { p } else { p / e };

    let params =
        ConicParams { e, d, mu_eff, basis: [e_hat_p, e_hat_q], semi_latus: p };

    let mut max_residual = 0.0f64;
    for s in samples {
        let theta = params.theta_of(s.position);
        let predicted = params.semi_latus / (1.0 + e * theta.cos());
        max_residual = max_residual.max((s.position.norm() - predicted).abs() / d);
    }

    Ok(ConicFit { params, max_residual, plane_residual })
}

/// Gravitational parameter when only the pivot body's mass is counted,
/// as a pinned-origin treatment implicitly assumes.
pub fn pivot_only_mu(g: f64, m_pivot: f64) -> f64 {
    g * m_pivot
}

/// Parameter governing the difference coordinate of an isolated pair.
pub fn two_body_mu(g: f64, m1: f64, m2: f64) -> f64 {
    g * (m1 + m2)
}

/// Parameter for one companion in the symmetric antipodal three-body
/// arrangement: the opposite twin sits at twice the radius and so
/// contributes a quarter of its mass.
pub fn antipodal_pair_mu(g: f64, m_pivot: f64, m_companion: f64) -> f64 {
    g * (m_pivot + 0.25 * m_companion)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn xy_basis() -> [Vec3; 2] {
        [Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)]
    }

    /// Analytic samples of a conic orbit in the plane spanned by `basis`,
    /// at the given true anomalies.
    fn conic_track(mu: f64, p: f64, e: f64, basis: [Vec3; 2], thetas: &[f64]) -> Vec<OrbitSample> {
        let vf = (mu / p).sqrt();
        thetas
            .iter()
            .map(|&th| {
                let r = p / (1.0 + e * th.cos());
                let pos = r * (th.cos() * basis[0] + th.sin() * basis[1]);
                let vel = vf * (-th.sin() * basis[0] + (e + th.cos()) * basis[1]);
                OrbitSample { position: pos, velocity: vel }
            })
            .collect()
    }

    #[test]
    fn polar_radius_hand_values() {
        let params = ConicParams::new(0.5, 2.0, 1.0, xy_basis());
        assert_relative_eq!(conic_radius(&params, 0.0).unwrap(), 2.0 / 3.0, max_relative = 1e-15);
        assert_relative_eq!(
            conic_radius(&params, std::f64::consts::PI).unwrap(),
            2.0,
            max_relative = 1e-15
        );
        assert_relative_eq!(
            conic_radius(&params, std::f64::consts::FRAC_PI_2).unwrap(),
            1.0,
            max_relative = 1e-15
        );
    }

    #[test]
    fn hyperbolic_radius_rejects_asymptote() {
        let params = ConicParams::new(2.0, 1.0, 1.0, xy_basis());
        let limit = (-0.5f64).acos();
        assert!(conic_radius(&params, limit).is_err());
        assert!(conic_radius(&params, -limit - 0.1).is_err());
        let just_inside = conic_radius(&params, 0.999 * limit).unwrap();
        assert!(just_inside.is_finite() && just_inside > 0.0);
    }

    #[test]
    fn radius_is_even_and_minimal_at_periapsis() {
        let params = ConicParams::new(0.7, 3.0, 1.0, xy_basis());
        let at0 = conic_radius(&params, 0.0).unwrap();
        for i in 1..=60 {
            let th = i as f64 * 3.0 / 60.0;
            let plus = conic_radius(&params, th).unwrap();
            let minus = conic_radius(&params, -th).unwrap();
            assert_relative_eq!(plus, minus, max_relative = 1e-14);
            assert!(plus >= at0);
        }
    }

    #[test]
    fn malformed_conics_are_rejected() {
        let r = std::panic::catch_unwind(|| ConicParams::new(-0.1, 1.0, 1.0, xy_basis()));
        assert!(r.is_err());
        let r = std::panic::catch_unwind(|| ConicParams::new(0.5, 0.0, 1.0, xy_basis()));
        assert!(r.is_err());
        let skew = [Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.5, 0.5, 0.0)];
        let r = std::panic::catch_unwind(|| ConicParams::new(0.5, 1.0, 1.0, skew));
        assert!(r.is_err());
    }

    #[test]
    fn circular_track_fits_as_circle() {
        let mu = 1.5;
        let thetas: Vec<f64> = (0..32).map(|i| i as f64 * 0.19).collect();
        let samples = conic_track(mu, 1.0, 0.0, xy_basis(), &thetas);
        let fit = fit_conic(&samples, mu).unwrap();
        assert!(fit.params.e <= 1e-12, "e = {}", fit.params.e);
        assert_relative_eq!(fit.params.d, 1.0, max_relative = 1e-12);
        assert!(fit.max_residual <= 1e-12);
    }

    #[test]
    fn eccentric_track_recovers_shape() {
        let mu = 1.5;
        let (p, e) = (1.0, 0.5);
        let thetas: Vec<f64> = (0..64).map(|i| -2.4 + i as f64 * 0.075).collect();
        let samples = conic_track(mu, p, e, xy_basis(), &thetas);
        let fit = fit_conic(&samples, mu).unwrap();
        assert_relative_eq!(fit.params.e, e, max_relative = 1e-12);
        assert_relative_eq!(fit.params.d, p / e, max_relative = 1e-12);
        assert!(fit.max_residual <= 1e-12, "residual {}", fit.max_residual);
        // Periapsis axis should be +x for this construction.
        assert_relative_eq!(fit.params.basis[0].x, 1.0, max_relative = 1e-10);
    }

    #[test]
    fn wrong_parameter_shows_up_in_the_residual() {
        let mu = 1.5;
        let thetas: Vec<f64> = (0..64).map(|i| -2.4 + i as f64 * 0.075).collect();
        let samples = conic_track(mu, 1.0, 0.5, xy_basis(), &thetas);
        let right = fit_conic(&samples, mu).unwrap();
        let wrong = fit_conic(&samples, 0.8 * mu).unwrap();
        assert!(wrong.max_residual > right.max_residual);
        assert!(wrong.max_residual > 1e-3, "wrong mu should visibly misfit");
    }

    #[test]
    fn tilted_plane_is_handled() {
        let mu = 2.0;
        let n = Vec3::new(1.0, 1.0, 1.0).normalize();
        let u = Vec3::new(1.0, -1.0, 0.0).normalize();
        let w = n.cross(&u);
        let thetas: Vec<f64> = (0..40).map(|i| i as f64 * 0.15).collect();
        let samples = conic_track(mu, 2.0, 0.3, [u, w], &thetas);
        let fit = fit_conic(&samples, mu).unwrap();
        assert_relative_eq!(fit.params.e, 0.3, max_relative = 1e-12);
        assert!(fit.max_residual <= 1e-12);
        assert!((fit.params.normal() - n).norm() <= 1e-10);
    }

    #[test]
    fn off_plane_samples_are_rejected() {
        let mu = 1.0;
        let thetas: Vec<f64> = (0..16).map(|i| i as f64 * 0.2).collect();
        let mut samples = conic_track(mu, 1.0, 0.2, xy_basis(), &thetas);
        samples[7].position.z += 1e-3;
        assert!(matches!(fit_conic(&samples, mu), Err(KeplerError::NonCoplanar { .. })));
    }

    #[test]
    fn radial_track_has_no_plane() {
        let samples: Vec<OrbitSample> = (1..5)
            .map(|i| OrbitSample {
                position: Vec3::new(i as f64, 0.0, 0.0),
                velocity: Vec3::new(1.0, 0.0, 0.0),
            })
            .collect();
        assert!(matches!(
            fit_conic(&samples, 1.0),
            Err(KeplerError::DegenerateAngularMomentum)
        ));
    }

    #[test]
    fn empty_and_bad_mu_are_rejected() {
        assert!(matches!(fit_conic(&[], 1.0), Err(KeplerError::EmptyTrajectory)));
        let s = [OrbitSample { position: Vec3::new(1.0, 0.0, 0.0), velocity: Vec3::new(0.0, 1.0, 0.0) }];
        assert!(matches!(fit_conic(&s, 0.0), Err(KeplerError::NonPositiveMu(_))));
        assert!(matches!(fit_conic(&s, -2.0), Err(KeplerError::NonPositiveMu(_))));
    }

    #[test]
    fn parameter_helpers_hand_values() {
        assert_eq!(pivot_only_mu(1.0, 1.5), 1.5);
        assert_eq!(two_body_mu(1.0, 1.0, 0.5), 1.5);
        assert_eq!(antipodal_pair_mu(1.0, 1.0, 4.0), 2.0);
        assert_eq!(antipodal_pair_mu(2.0, 1.0, 4.0), 4.0);
    }
}
