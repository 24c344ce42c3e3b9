//! Problem data: inflow profiles, observation targets, and discrete lifts.
//!
//! Profiles are stored at unit amplitude; the parameter-dependent amplitude
//! is a separate scalar so that right-hand sides stay affine in the
//! parameters.  The time-dependent problem prescribes the inflow
//! `(10 (x2 - 1) (1 - x2), 0)`, which equals `-10 (1 - x2)^2` and is
//! nonpositive across the inlet (flow directed out of the domain); it is
//! implemented exactly as stated.  Inlet values at the two channel corners
//! are overridden by the no-slip walls.

use nalgebra::DVector;

use crate::fem::layout::DofLayout;
use crate::ocp::ProblemId;

/// Unit-amplitude inflow profile at a point.
pub fn inflow_profile(problem: ProblemId, x: [f64; 2]) -> [f64; 2] {
    let y = x[1];
    match problem {
        ProblemId::StokesTd => [10.0 * (y - 1.0) * (1.0 - y), 0.0],
        ProblemId::NsSteady => [10.0 * y * (2.0 - y), 0.0],
    }
}

/// Amplitude multiplying the inflow profile at a parameter point.
pub fn inflow_amplitude(problem: ProblemId, mu: &[f64]) -> f64 {
    match problem {
        ProblemId::StokesTd => 1.0,
        ProblemId::NsSteady => mu[0],
    }
}

/// Unit-amplitude observation target at a point.
pub fn target_profile(problem: ProblemId, x: [f64; 2]) -> [f64; 2] {
    let y = x[1];
    match problem {
        ProblemId::StokesTd => {
            let a = y.powi(3) - y.powi(2) - y + 1.0;
            let b = -y.powi(3) - y.powi(2) + y + 1.0;
            [8.0 * a + 2.0 * b, 0.0]
        }
        ProblemId::NsSteady => {
            let s = y - 1.0;
            let a = s.powi(3) - s.powi(2) - s + 1.0;
            let b = -s.powi(3) - s.powi(2) + y;
            [10.0 * (0.8 * a + 0.2 * b), 0.0]
        }
    }
}

/// Amplitude multiplying the target profile at a parameter point.
pub fn target_amplitude(problem: ProblemId, mu: &[f64]) -> f64 {
    match problem {
        ProblemId::StokesTd => mu[2],
        ProblemId::NsSteady => mu[0],
    }
}

/// Discrete lift at unit amplitude: inflow values at the free inlet nodes,
/// zero at every other dof (walls included).
pub fn unit_lift(problem: ProblemId, layout: &DofLayout) -> DVector<f64> {
    let mut out = DVector::zeros(layout.n_velocity);
    for &n in &layout.inlet_nodes {
        let v = inflow_profile(problem, layout.p2_coords[n]);
        out[2 * n] = v[0];
        out[2 * n + 1] = v[1];
    }
    out
}

/// Nodal interpolant of the unit-amplitude target over the whole velocity
/// space (only its observation-line trace enters the cost).
pub fn unit_target(problem: ProblemId, layout: &DofLayout) -> DVector<f64> {
    let mut out = DVector::zeros(layout.n_velocity);
    for (n, &p) in layout.p2_coords.iter().enumerate() {
        let v = target_profile(problem, p);
        out[2 * n] = v[0];
        out[2 * n + 1] = v[1];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_values_at_reference_points() {
        // Mid-channel: the time-dependent inflow vanishes, target is largest.
        let v = inflow_profile(ProblemId::StokesTd, [0.0, 1.0]);
        assert_eq!(v, [0.0, 0.0]);
        let t = target_profile(ProblemId::StokesTd, [2.0, 0.0]);
        assert_eq!(t, [10.0, 0.0]);
        // Convective problem: parabolic inflow peaks at mid-channel.
        let v = inflow_profile(ProblemId::NsSteady, [0.0, 1.0]);
        assert_eq!(v, [10.0, 0.0]);
        let v = inflow_profile(ProblemId::NsSteady, [0.0, 0.0]);
        assert_eq!(v, [0.0, 0.0]);
        let t = target_profile(ProblemId::NsSteady, [2.0, 1.0]);
        assert!((t[0] - 10.0).abs() < 1e-14);
    }

    #[test]
    fn stokes_inflow_is_nonpositive() {
        for k in 0..=20 {
            let y = 2.0 * k as f64 / 20.0;
            let v = inflow_profile(ProblemId::StokesTd, [0.0, y]);
            assert!(v[0] <= 0.0);
        }
    }
}
