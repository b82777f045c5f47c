//! Shear sub-steps and chessboard halving stages.
//!
//! One halving of cell s to h = s/2 is an x-shear by D(y) = h·P[⌊y/h⌋ mod 4]
//! followed by a y-shear by E(x) = h·E[⌊x/h⌋ mod 4]. The composed map sends
//! the chessboard of cell s exactly onto the chessboard of cell h; the oracle
//! arbitrates this.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ScalarGrid1D, ScalarGrid2D};
use crate::smooth::{self, Ramp};

pub const X_PATTERN: [f64; 4] = [-1.0, 1.0, 1.0, -1.0];
pub const Y_PATTERN: [f64; 4] = [0.0, 0.0, -1.0, 1.0];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    /// Velocity (W(y), 0).
    XShearOfY,
    /// Velocity (0, W(x)).
    YShearOfX,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    /// Piecewise-constant displacement: exact cell permutation.
    Square,
    /// Square profile mollified with K_{h/2}: C^∞, approximate permutation.
    Smooth,
}

/// Displacement profile W of period 4h: level pattern[c]·h on cell c.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileShape {
    pub kind: ProfileKind,
    pub h: f64,
    pub pattern: [f64; 4],
}

impl ProfileShape {
    fn level(&self, cell: i64) -> f64 {
        self.pattern[cell.rem_euclid(4) as usize]
    }

    /// `[W, W', W'']` at `c`.
    pub fn jet(&self, c: f64) -> [f64; 3] {
        let c = c.rem_euclid(1.0);
        match self.kind {
            ProfileKind::Square => [self.h * self.level((c / self.h).floor() as i64), 0.0, 0.0],
            ProfileKind::Smooth => {
                let k = (c / self.h).round() as i64;
                let e = k as f64 * self.h;
                let w = 0.5 * self.h;
                let (pl, pr) = (self.level(k - 1), self.level(k));
                let s = smooth::step_jet((c - e + w) / (2.0 * w));
                let jump = self.h * (pr - pl);
                [
                    self.h * pl + jump * s[0],
                    jump * s[1] / (2.0 * w),
                    jump * s[2] / (4.0 * w * w),
                ]
            }
        }
    }

    pub fn value(&self, c: f64) -> f64 {
        self.jet(c)[0]
    }

    pub fn max_abs(&self) -> f64 {
        self.h * self.pattern.iter().fold(0.0f64, |m, p| m.max(p.abs()))
    }

    pub fn sample(&self, n: usize) -> ScalarGrid1D {
        ScalarGrid1D::from_fn(n, |c| self.value(c)).expect("power-of-two grid")
    }
}

/// A shear active on (t0, t0 + duration]. Content at transverse coordinate c
/// is displaced by amplitude·W(c)·F((t − t0)/duration) along the shear axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShearStep {
    pub axis: Axis,
    pub shape: ProfileShape,
    /// W sampled on the construction grid.
    pub profile: ScalarGrid1D,
    pub amplitude: f64,
    pub t0: f64,
    pub duration: f64,
    pub ramp: Ramp,
}

impl ShearStep {
    pub fn t1(&self) -> f64 {
        self.t0 + self.duration
    }

    fn unit(&self, t: f64) -> f64 {
        (t - self.t0) / self.duration
    }

    /// F at time t, clamped to [0, 1].
    pub fn fraction(&self, t: f64) -> f64 {
        self.ramp.fraction(self.unit(t))
    }

    /// Displacement fraction accrued over [ta, tb].
    pub fn fraction_between(&self, ta: f64, tb: f64) -> f64 {
        self.fraction(tb) - self.fraction(ta)
    }

    /// Total displacement of content at transverse coordinate c.
    pub fn total_displacement(&self, c: f64) -> f64 {
        self.amplitude * self.shape.value(c)
    }

    /// `[ρ, ρ', ρ'']` of the time factor ρ(t) = F'(unit)/duration.
    pub fn time_jet(&self, t: f64) -> [f64; 3] {
        let j = self.ramp.jet(self.unit(t));
        let d = self.duration;
        [j[1] / d, j[2] / (d * d), j[3] / (d * d * d)]
    }

    /// Speed along the shear axis at (t, c).
    pub fn speed(&self, t: f64, c: f64) -> f64 {
        self.amplitude * self.shape.value(c) * self.time_jet(t)[0]
    }

    pub fn peak_speed(&self) -> f64 {
        self.amplitude.abs() * self.shape.max_abs() * self.ramp.peak_density() / self.duration
    }

    /// The same step moved to (t0, t0 + duration].
    pub fn retimed(&self, t0: f64, duration: f64) -> ShearStep {
        ShearStep {
            t0,
            duration,
            ..self.clone()
        }
    }
}

/// Applies the inverse of a shear displacement `frac` of `step` to a point.
pub fn pull_back_point(step: &ShearStep, frac: f64, p: (f64, f64)) -> (f64, f64) {
    let (x, y) = p;
    match step.axis {
        Axis::XShearOfY => ((x - step.amplitude * step.shape.value(y) * frac).rem_euclid(1.0), y),
        Axis::YShearOfX => (x, (y - step.amplitude * step.shape.value(x) * frac).rem_euclid(1.0)),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixingStage {
    pub s_from: f64,
    pub s_to: f64,
    /// Steps in application order, on unit time slots (i, i + 1].
    pub steps: Vec<ShearStep>,
}

fn halvings(s_from: f64, s_to: f64) -> Result<u32> {
    let r = s_from / s_to;
    let k = r.log2().round();
    if !(k >= 0.0) || (2f64.powi(k as i32) - r).abs() > 1e-9 * r {
        return Err(Error::Input(format!("s_from/s_to = {r} is not a power of two")));
    }
    Ok(k as u32)
}

impl MixingStage {
    /// Halving composition without the contract check.
    pub fn unchecked(
        s_from: f64,
        s_to: f64,
        n: usize,
        kind: ProfileKind,
        ramp: Ramp,
        amplitude: f64,
    ) -> Result<MixingStage> {
        let k = halvings(s_from, s_to)?;
        let mut steps = Vec::with_capacity(2 * k as usize);
        let mut s = s_from;
        for _ in 0..k {
            let h = 0.5 * s;
            let cells = 1.0 / h;
            if (cells - cells.round()).abs() > 1e-9 || cells.round() as u64 % 4 != 0 {
                return Err(Error::Alignment(format!(
                    "half-cell {h} does not give a whole number of profile periods"
                )));
            }
            for (axis, pattern) in [(Axis::XShearOfY, X_PATTERN), (Axis::YShearOfX, Y_PATTERN)] {
                let shape = ProfileShape { kind, h, pattern };
                let i = steps.len() as f64;
                steps.push(ShearStep {
                    axis,
                    shape,
                    profile: shape.sample(n),
                    amplitude,
                    t0: i,
                    duration: 1.0,
                    ramp,
                });
            }
            s = h;
        }
        Ok(MixingStage { s_from, s_to, steps })
    }

    pub fn halving_count(&self) -> usize {
        self.steps.len() / 2
    }

    /// Inverse of the full stage map.
    pub fn pull_back(&self, p: (f64, f64)) -> (f64, f64) {
        self.steps.iter().rev().fold(p, |q, s| pull_back_point(s, 1.0, q))
    }

    /// Σ over steps of max |total displacement|.
    pub fn displacement_budget(&self) -> f64 {
        self.steps.iter().map(|s| s.amplitude.abs() * s.shape.max_abs()).sum()
    }
}

/// Square-profile stages are checked against the exact refinement contract
/// on `n`; smooth stages are approximate by construction and are not.
pub fn build_mixing_stage(s_from: f64, s_to: f64, n: usize, kind: ProfileKind) -> Result<MixingStage> {
    for s in [s_from, s_to] {
        let m = s * n as f64;
        if (m - m.round()).abs() > 1e-9 || m.round() < 2.0 {
            return Err(Error::Alignment(format!("scale {s} not aligned with n = {n}")));
        }
    }
    let stage = MixingStage::unchecked(s_from, s_to, n, kind, Ramp::SmoothBump, 1.0)?;
    if kind == ProfileKind::Square && !stage.steps.is_empty() {
        let report = crate::oracle::stage_contract(&stage, n, 10_000, 0x5eed);
        if report.mismatches > 0 {
            let grid = crate::oracle::mismatch_grid(&stage, n);
            return Err(Error::Construction {
                msg: format!(
                    "stage {s_from} -> {s_to}: {} of {} oracle points mismatch",
                    report.mismatches, report.points
                ),
                mismatch: Box::new(grid),
            });
        }
    }
    Ok(stage)
}

pub fn mismatch_field(stage: &MixingStage, n: usize) -> ScalarGrid2D {
    crate::oracle::mismatch_grid(stage, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::chess_value;

    #[test]
    fn identity_stage_is_empty() {
        let s = build_mixing_stage(0.25, 0.25, 64, ProfileKind::Square).unwrap();
        assert!(s.steps.is_empty());
        assert_eq!(s.pull_back((0.3, 0.7)), (0.3, 0.7));
    }

    #[test]
    fn one_halving_refines_chessboard() {
        let s = build_mixing_stage(0.25, 0.125, 512, ProfileKind::Square).unwrap();
        assert_eq!(s.steps.len(), 2);
        for j in 0..64 {
            for i in 0..64 {
                let p = ((i as f64 + 0.5) / 64.0, (j as f64 + 0.5) / 64.0);
                let q = s.pull_back(p);
                assert_eq!(chess_value(q.0, q.1, 0.25), chess_value(p.0, p.1, 0.125));
            }
        }
    }

    #[test]
    fn composition_budget_adds_up() {
        let two = build_mixing_stage(0.25, 0.0625, 512, ProfileKind::Square).unwrap();
        let a = build_mixing_stage(0.25, 0.125, 512, ProfileKind::Square).unwrap();
        let b = build_mixing_stage(0.125, 0.0625, 512, ProfileKind::Square).unwrap();
        assert_eq!(two.halving_count(), 2);
        assert!((two.displacement_budget() - a.displacement_budget() - b.displacement_budget()).abs() < 1e-15);
    }

    #[test]
    fn smooth_profile_is_continuous_and_bounded() {
        let shape = ProfileShape {
            kind: ProfileKind::Smooth,
            h: 0.125,
            pattern: X_PATTERN,
        };
        let mut prev = shape.value(0.0);
        for i in 1..=4000 {
            let v = shape.value(i as f64 / 4000.0);
            assert!((v - prev).abs() < 0.01);
            assert!(v.abs() <= 0.125 + 1e-15);
            prev = v;
        }
    }

    #[test]
    fn ramp_preserves_total_displacement() {
        let s = MixingStage::unchecked(0.25, 0.125, 64, ProfileKind::Square, Ramp::SmoothBump, 1.0).unwrap();
        let step = s.steps[0].retimed(0.3, 0.1);
        let linear = ShearStep { ramp: Ramp::None, ..step.clone() };
        assert_eq!(step.fraction_between(0.3, 0.4), 1.0);
        assert_eq!(linear.fraction_between(0.3, 0.4), 1.0);
    }
}
