//! The smooth step S(τ) = 1/(1 + e^{1/τ − 1/(1−τ)}) on [0, 1] and the objects
//! built from it: temporal ramps and the compact 1D mollifier kernel.
//!
//! S is C^∞, flat to all orders at both endpoints, symmetric
//! (S(1−τ) = 1 − S(τ)), and its derivative peaks at S'(½) = 2.

use serde::{Deserialize, Serialize};

/// Maximum of S' on [0, 1], attained at ½.
pub const STEP_DERIVATIVE_MAX: f64 = 2.0;

/// `[S, S', S'', S''']` at `t`.
pub fn step_jet(t: f64) -> [f64; 4] {
    if t <= 0.0 {
        return [0.0, 0.0, 0.0, 0.0];
    }
    if t >= 1.0 {
        return [1.0, 0.0, 0.0, 0.0];
    }
    let u = 1.0 - t;
    let g = 1.0 / t - 1.0 / u;
    // p = S = σ(−g), q = 1 − p, split by sign of g to avoid overflow.
    let (p, q) = if g > 0.0 {
        let e = (-g).exp();
        (e / (1.0 + e), 1.0 / (1.0 + e))
    } else {
        let e = g.exp();
        (1.0 / (1.0 + e), e / (1.0 + e))
    };
    let s1 = p * q;
    if s1 == 0.0 {
        return if t < 0.5 {
            [0.0, 0.0, 0.0, 0.0]
        } else {
            [1.0, 0.0, 0.0, 0.0]
        };
    }
    let s2 = s1 * (q - p);
    let s3 = s1 * ((q - p) * (q - p) - 2.0 * s1);
    let (t2, u2) = (t * t, u * u);
    let x1 = 1.0 / t2 + 1.0 / u2;
    let x2 = -2.0 / (t2 * t) + 2.0 / (u2 * u);
    let x3 = 6.0 / (t2 * t2) + 6.0 / (u2 * u2);
    [
        p,
        s1 * x1,
        s2 * x1 * x1 + s1 * x2,
        s3 * x1 * x1 * x1 + 3.0 * s2 * x1 * x2 + s1 * x3,
    ]
}

pub fn step(t: f64) -> f64 {
    step_jet(t)[0]
}

pub fn step_derivative(t: f64) -> f64 {
    step_jet(t)[1]
}

/// Compact kernel K_w(x) = S'((x+w)/(2w))/(2w): nonnegative, unit mass,
/// supported in [−w, w].
pub fn kernel_1d(x: f64, w: f64) -> f64 {
    step_derivative((x + w) / (2.0 * w)) / (2.0 * w)
}

/// ∫_{−∞}^{x} K_w.
pub fn kernel_1d_cdf(x: f64, w: f64) -> f64 {
    step((x + w) / (2.0 * w))
}

/// Time reparametrization of a shear sub-step over its unit interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ramp {
    /// Constant velocity.
    None,
    /// Velocity ∝ S', vanishing to all orders at both ends.
    SmoothBump,
}

impl Ramp {
    /// Fraction of the total displacement completed at unit time `s`.
    pub fn fraction(self, s: f64) -> f64 {
        match self {
            Ramp::None => s.clamp(0.0, 1.0),
            Ramp::SmoothBump => step(s),
        }
    }

    /// `[F, F', F'', F''']` in unit time.
    pub fn jet(self, s: f64) -> [f64; 4] {
        match self {
            Ramp::None => {
                if s <= 0.0 {
                    [0.0; 4]
                } else if s >= 1.0 {
                    [1.0, 0.0, 0.0, 0.0]
                } else {
                    [s, 1.0, 0.0, 0.0]
                }
            }
            Ramp::SmoothBump => step_jet(s),
        }
    }

    pub fn peak_density(self) -> f64 {
        match self {
            Ramp::None => 1.0,
            Ramp::SmoothBump => STEP_DERIVATIVE_MAX,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_symmetry() {
        assert_eq!(step(0.0), 0.0);
        assert_eq!(step(1.0), 1.0);
        assert!((step(0.5) - 0.5).abs() < 1e-15);
        for &t in &[0.01, 0.1, 0.3, 0.45] {
            assert!((step(t) + step(1.0 - t) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn derivative_peak_is_two() {
        assert!((step_derivative(0.5) - 2.0).abs() < 1e-14);
        let max = (1..10_000)
            .map(|i| step_derivative(i as f64 / 10_000.0))
            .fold(0.0, f64::max);
        assert!(max <= 2.0 + 1e-12);
    }

    #[test]
    fn jet_matches_finite_differences() {
        let h = 1e-5;
        for &t in &[0.12, 0.3, 0.5, 0.77, 0.9] {
            let j = step_jet(t);
            for k in 0..3 {
                let fd = (step_jet(t + h)[k] - step_jet(t - h)[k]) / (2.0 * h);
                let scale = j[k + 1].abs().max(1.0);
                assert!((fd - j[k + 1]).abs() < 1e-5 * scale, "order {} at {t}", k + 1);
            }
        }
    }

    #[test]
    fn underflow_near_endpoints_is_flat() {
        assert_eq!(step_jet(1e-4), [0.0; 4]);
        assert_eq!(step_jet(1.0 - 1e-4), [1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn kernel_unit_mass() {
        let w = 0.1;
        let n = 20_000;
        let h = 2.0 * w / n as f64;
        let mass: f64 = (0..n).map(|i| kernel_1d(-w + (i as f64 + 0.5) * h, w) * h).sum();
        assert!((mass - 1.0).abs() < 1e-10);
        assert_eq!(kernel_1d(w * 1.01, w), 0.0);
    }
}
