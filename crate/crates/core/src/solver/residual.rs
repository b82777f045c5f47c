//! Pointwise residual of ∂_t θ + u·∇θ − κΔθ from stored snapshots, with a
//! centered time difference and spectral space derivatives.

use crate::error::{Error, Result};
use crate::fields::VelocitySchedule;
use crate::grid::node;
use crate::spectral::{derivative3, laplacian3};

use super::{AdvDiffRun, State};

fn values_of(s: &State) -> (&[f64], usize, usize) {
    match s {
        State::D2(g) => (g.values(), g.n(), 1),
        State::D3(g) => (g.values(), g.n_xy(), g.n_z()),
    }
}

/// Residual field at substep boundary `step`; needs snapshots at step − 1,
/// step and step + 1. 3D runs use the lifted field with the run's cutoff.
pub fn adv_diff_residual_field(run: &AdvDiffRun, s: &VelocitySchedule, step: usize) -> Result<Vec<f64>> {
    let get = |k: usize| {
        run.snapshot(k)
            .ok_or_else(|| Error::Input(format!("no snapshot at step {k}")))
    };
    if step == 0 {
        return Err(Error::Input("residual needs a snapshot before the sample".into()));
    }
    let (prev, mid, next) = (get(step - 1)?, get(step)?, get(step + 1)?);
    let (vp, nxy, nz) = values_of(&prev.state);
    let (vm, _, _) = values_of(&mid.state);
    let (vn, _, _) = values_of(&next.state);
    let three_d = matches!(mid.state, State::D3(_));
    let dx = derivative3(vm, nxy, nz, 0);
    let dy = derivative3(vm, nxy, nz, 1);
    let dz = if three_d { derivative3(vm, nxy, nz, 2) } else { Vec::new() };
    let lap = laplacian3(vm, nxy, nz);
    let inv = 1.0 / (next.t - prev.t);
    let t = mid.t;
    let mut r = Vec::with_capacity(vm.len());
    for l in 0..nz {
        let z = node(l, nz);
        for j in 0..nxy {
            let y = node(j, nxy);
            for i in 0..nxy {
                let x = node(i, nxy);
                let idx = (l * nxy + j) * nxy + i;
                let (u, dzterm) = if three_d {
                    let u = s.sample_lifted([x, y, z], run.truncate_at);
                    ([u[0], u[1]], u[2] * dz[idx])
                } else {
                    (s.sample_velocity(t, x, y), 0.0)
                };
                r.push(
                    (vn[idx] - vp[idx]) * inv + u[0] * dx[idx] + u[1] * dy[idx] + dzterm
                        - run.kappa * lap[idx],
                );
            }
        }
    }
    Ok(r)
}

/// L² norm of [`adv_diff_residual_field`].
pub fn adv_diff_residual(run: &AdvDiffRun, s: &VelocitySchedule, step: usize) -> Result<f64> {
    let r = adv_diff_residual_field(run, s, step)?;
    let ms = crate::sum::sum(r.iter().map(|v| v * v)) / r.len() as f64;
    Ok(ms.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ScalarGrid2D;
    use crate::solver::{run_adv_diff_2d, SnapshotPlan};
    use std::f64::consts::PI;

    #[test]
    fn heat_mode_residual_is_second_order_in_dt() {
        let f = ScalarGrid2D::from_fn(32, |x, y| (2.0 * PI * (x + 2.0 * y)).cos()).unwrap();
        let s = VelocitySchedule::zero(32);
        let mut res = Vec::new();
        for dt in [1.0 / 64.0, 1.0 / 128.0] {
            let k = (0.25 / dt) as usize;
            let run = run_adv_diff_2d(&f, &s, 0.01, 0.5, dt, &SnapshotPlan::at(vec![k - 1, k, k + 1])).unwrap();
            res.push(adv_diff_residual(&run, &s, k).unwrap());
        }
        let order = (res[0] / res[1]).log2();
        assert!(order > 1.9, "{res:?}");
    }
}
