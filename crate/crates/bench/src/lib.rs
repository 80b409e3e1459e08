//! Deterministic state builders shared by the benchmark targets.

use relbody::{Body, NBodyState, Vec3};

/// Bodies on a unit ring with a small vertical stagger and tangential
/// velocities. Separations stay bounded away from zero at any count, so
/// kernels never hit a guard.
pub fn ring_state(n: usize) -> NBodyState {
    let bodies = (0..n)
        .map(|i| {
            let theta = i as f64 / n as f64 * std::f64::consts::TAU;
            Body {
                mass: 1.0 + 0.5 * (i as f64).sin(),
                position: Vec3::new(theta.cos(), theta.sin(), 1e-2 * i as f64),
                velocity: Vec3::new(-theta.sin(), theta.cos(), 0.0),
            }
        })
        .collect();
    NBodyState { time: 0.0, g: 1.0, bodies }
}
