//! Time-indexed shear schedule ū(t, x, y) and its autonomous lift
//! u(x, y, z) = (ū(z, x, y), 1).

use serde::{Deserialize, Serialize};

use crate::cascade::CascadeParams;
use crate::error::{Error, Result};
use crate::smooth::Ramp;

use super::shear::{pull_back_point, Axis, MixingStage, ProfileKind, ShearStep};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleOptions {
    pub kind: ProfileKind,
    pub ramp: Ramp,
    /// Multiplies every displacement; 1 realizes the exact halvings.
    pub amplitude_scale: f64,
}

impl Default for ScheduleOptions {
    fn default() -> Self {
        ScheduleOptions {
            kind: ProfileKind::Square,
            ramp: Ramp::SmoothBump,
            amplitude_scale: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VelocitySchedule {
    /// Non-overlapping steps sorted by start time, all inside (0, 1].
    pub steps: Vec<ShearStep>,
    /// Cascade stage each step belongs to.
    pub stage_of_step: Vec<usize>,
    pub n: usize,
    pub params: Option<CascadeParams>,
}

/// One entry of the JSON step-list export.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t0: f64,
    pub t1: f64,
    pub axis: Axis,
    pub scale: f64,
    pub amplitude: f64,
    pub ramp: Ramp,
}

/// Places stage q's halvings evenly over I_{q,1} ∪ I_{q,2} ∪ I_{q,3}.
pub fn assemble_velocity_schedule(p: &CascadeParams, n: usize, opts: ScheduleOptions) -> Result<VelocitySchedule> {
    let finest = p.a[p.q_count];
    let pts = finest * n as f64;
    if !(pts >= 2.0) || (pts - pts.round()).abs() > 1e-9 || pts.round() as u64 % 2 != 0 {
        return Err(Error::Resolution(format!(
            "n = {n} cannot resolve a_Q = {finest} with grid-aligned edges"
        )));
    }
    let mut steps = Vec::new();
    let mut stage_of_step = Vec::new();
    for q in 0..p.q_count {
        let stage = MixingStage::unchecked(p.a[q], p.a[q + 1], n, opts.kind, opts.ramp, opts.amplitude_scale)?;
        let iv = p.intervals[q];
        let (lo, hi) = (iv[1].lo, iv[3].hi);
        let k = stage.steps.len();
        let dur = (hi - lo) / k as f64;
        for (i, s) in stage.steps.iter().enumerate() {
            let t0 = lo + i as f64 * dur;
            let t1 = if i + 1 == k { hi } else { lo + (i + 1) as f64 * dur };
            steps.push(s.retimed(t0, t1 - t0));
            stage_of_step.push(q);
        }
    }
    Ok(VelocitySchedule {
        steps,
        stage_of_step,
        n,
        params: Some(p.clone()),
    })
}

impl VelocitySchedule {
    /// No horizontal motion at all.
    pub fn zero(n: usize) -> Self {
        VelocitySchedule {
            steps: Vec::new(),
            stage_of_step: Vec::new(),
            n,
            params: None,
        }
    }

    pub fn from_steps(steps: Vec<ShearStep>, n: usize) -> Result<Self> {
        for w in steps.windows(2) {
            if w[1].t0 < w[0].t1() {
                return Err(Error::Schedule("shear steps overlap or are unsorted".into()));
            }
        }
        if let (Some(f), Some(l)) = (steps.first(), steps.last()) {
            if f.t0 < 0.0 || l.t1() > 1.0 {
                return Err(Error::Schedule("shear steps must lie in [0, 1]".into()));
            }
        }
        let len = steps.len();
        Ok(VelocitySchedule {
            steps,
            stage_of_step: vec![0; len],
            n,
            params: None,
        })
    }

    pub fn records(&self) -> Vec<StepRecord> {
        self.steps
            .iter()
            .map(|s| StepRecord {
                t0: s.t0,
                t1: s.t1(),
                axis: s.axis,
                scale: s.shape.h,
                amplitude: s.amplitude,
                ramp: s.ramp,
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.records())?)
    }

    /// Indices of steps overlapping the open interval (a, b), in time order.
    pub fn steps_between(&self, a: f64, b: f64) -> impl Iterator<Item = (usize, &ShearStep)> + '_ {
        let first = self.steps.partition_point(|s| s.t1() <= a);
        self.steps[first..]
            .iter()
            .enumerate()
            .take_while(move |(_, s)| s.t0 < b)
            .map(move |(i, s)| (first + i, s))
    }

    fn active(&self, t: f64) -> Option<&ShearStep> {
        let i = self.steps.partition_point(|s| s.t1() < t);
        self.steps.get(i).filter(|s| s.t0 < t && t <= s.t1())
    }

    /// ū(t, x, y) for t ∈ [0, 1].
    pub fn sample_velocity(&self, t: f64, x: f64, y: f64) -> [f64; 2] {
        match self.active(t) {
            None => [0.0, 0.0],
            Some(s) => match s.axis {
                Axis::XShearOfY => [s.speed(t, y), 0.0],
                Axis::YShearOfX => [0.0, s.speed(t, x)],
            },
        }
    }

    /// The lift (ū(z, x, y)·1_{z < cutoff}, 1).
    pub fn sample_lifted(&self, p: [f64; 3], truncate_at: Option<f64>) -> [f64; 3] {
        let z = p[2].rem_euclid(1.0);
        if truncate_at.is_some_and(|c| z >= c) {
            return [0.0, 0.0, 1.0];
        }
        let h = self.sample_velocity(z, p[0], p[1]);
        [h[0], h[1], 1.0]
    }

    /// Peak horizontal speed over the whole schedule.
    pub fn peak_speed(&self) -> f64 {
        self.steps.iter().map(|s| s.peak_speed()).fold(0.0, f64::max)
    }

    /// Start and end of the support of the horizontal field, if any.
    pub fn support(&self) -> Option<(f64, f64)> {
        Some((self.steps.first()?.t0, self.steps.last()?.t1()))
    }

    /// Inverse flow map: the position at time τ0 of the content found at `p`
    /// at time τ1 ≥ τ0. Times are unwrapped; the schedule repeats with period
    /// 1. With a cutoff, motion is switched off for phases in [cutoff, 1).
    pub fn pull_back(&self, p: (f64, f64), tau0: f64, tau1: f64, cutoff: Option<f64>) -> (f64, f64) {
        let mut q = p;
        if tau1 <= tau0 || self.steps.is_empty() {
            return q;
        }
        let k_lo = tau0.floor() as i64;
        let k_hi = (tau1.ceil() as i64).max(k_lo + 1);
        for k in (k_lo..k_hi).rev() {
            let kf = k as f64;
            let a = (tau0 - kf).max(0.0);
            let mut b = (tau1 - kf).min(1.0);
            if let Some(c) = cutoff {
                b = b.min(c);
            }
            if a >= b {
                continue;
            }
            let idx: Vec<usize> = self.steps_between(a, b).map(|(i, _)| i).collect();
            for &i in idx.iter().rev() {
                let s = &self.steps[i];
                let f = s.fraction_between(a.max(s.t0), b.min(s.t1()));
                if f != 0.0 {
                    q = pull_back_point(s, f, q);
                }
            }
        }
        q
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cascade::{build_cascade, CascadeInput, DeskOverrides, Mode, Scale, StageDurations, LN_100};
    use crate::fields::chess_value;

    fn desk_params() -> CascadeParams {
        build_cascade(&CascadeInput {
            alpha: 0.0,
            epsilon: 0.0005,
            delta: 0.5,
            a0: Scale::from_value(0.25),
            q_count: 2,
            m: 1,
            mode: Mode::Desk,
            desk: Some(DeskOverrides {
                durations: vec![StageDurations { rest: 1.0 / 64.0, mix: 1.0 / 256.0 }],
                ratios: vec![4],
                window: 4.0,
                decay_budget: LN_100,
            }),
        })
        .unwrap()
    }

    #[test]
    fn rest_intervals_are_still() {
        let p = desk_params();
        let s = assemble_velocity_schedule(&p, 256, ScheduleOptions::default()).unwrap();
        assert_eq!(s.steps.len(), 8);
        let iv = p.intervals[1][0];
        let t = 0.5 * (iv.lo + iv.hi);
        assert_eq!(s.sample_velocity(t, 0.3, 0.4), [0.0, 0.0]);
        for st in &s.steps {
            let mid = 0.5 * (st.t0 + st.t1());
            let v = s.sample_velocity(mid, 0.1, 0.3);
            match st.axis {
                Axis::XShearOfY => assert_eq!(v[1], 0.0),
                Axis::YShearOfX => assert_eq!(v[0], 0.0),
            }
        }
    }

    #[test]
    fn lifted_field() {
        let p = desk_params();
        let s = assemble_velocity_schedule(&p, 256, ScheduleOptions::default()).unwrap();
        assert_eq!(s.sample_lifted([0.2, 0.3, 0.7], None), [0.0, 0.0, 1.0]);
        let z = 0.5 * (s.steps[0].t0 + s.steps[0].t1());
        assert_ne!(s.sample_lifted([0.2, 0.3, z], None)[0], 0.0);
        assert_eq!(s.sample_lifted([0.2, 0.3, z], Some(z - 1e-3)), [0.0, 0.0, 1.0]);
        assert_eq!(s.sample_lifted([0.2, 0.3, z], None), s.sample_lifted([1.2, 0.3, z], None));
    }

    #[test]
    fn full_schedule_maps_coarse_to_finest_chessboard() {
        let p = desk_params();
        let s = assemble_velocity_schedule(&p, 256, ScheduleOptions::default()).unwrap();
        for j in 0..128 {
            for i in 0..128 {
                let x = (i as f64 + 0.5) / 128.0;
                let y = (j as f64 + 0.5) / 128.0;
                let q = s.pull_back((x, y), 0.0, 1.0, None);
                assert_eq!(chess_value(q.0, q.1, p.a[0]), chess_value(x, y, p.a[2]));
            }
        }
    }

    #[test]
    fn insufficient_grid_is_rejected() {
        let p = desk_params();
        assert!(matches!(
            assemble_velocity_schedule(&p, 16, ScheduleOptions::default()),
            Err(Error::Resolution(_))
        ));
    }
}
