//! Exact pure transport (κ = 0) by composing shear flow maps.
//!
//! A grid-aligned shear (every row displacement a whole number of cells) is
//! an index roll and moves nodes onto nodes, so the output is the pointwise
//! composition. Other shears fall back to spectral phase shifts.

use crate::error::{Error, Result};
use crate::fields::{Axis, ShearStep, VelocitySchedule};
use crate::grid::{node, ScalarGrid2D, ScalarGrid3D};

use super::spectral2d::Spectral2D;

const ALIGN_TOL: f64 = 1e-9;

fn whole_cells(disp: &[f64], n: usize) -> Option<Vec<i64>> {
    disp.iter()
        .map(|d| {
            let c = d * n as f64;
            ((c - c.round()).abs() <= ALIGN_TOL).then(|| c.round() as i64)
        })
        .collect()
}

/// Pushes `values` ([y][x]) forward by `frac` of one step.
fn push_step(values: &mut Vec<f64>, n: usize, step: &ShearStep, frac: f64) {
    let disp: Vec<f64> = (0..n).map(|j| step.total_displacement(node(j, n)) * frac).collect();
    match whole_cells(&disp, n) {
        Some(cells) => {
            let src = values.clone();
            let ni = n as i64;
            match step.axis {
                Axis::XShearOfY => {
                    for j in 0..n {
                        let k = cells[j].rem_euclid(ni) as usize;
                        let (row, out) = (&src[j * n..(j + 1) * n], &mut values[j * n..(j + 1) * n]);
                        for i in 0..n {
                            out[(i + k) % n] = row[i];
                        }
                    }
                }
                Axis::YShearOfX => {
                    for i in 0..n {
                        let k = cells[i].rem_euclid(ni) as usize;
                        for j in 0..n {
                            values[((j + k) % n) * n + i] = src[j * n + i];
                        }
                    }
                }
            }
        }
        None => {
            let g = ScalarGrid2D::new(n, std::mem::take(values)).expect("shape");
            let mut s = Spectral2D::from_grid(&g);
            s.shear(step.axis, &disp);
            *values = s.to_grid().into_values();
        }
    }
}

/// Forward flow over unwrapped 2D times [tau0, tau1] with period 1 and an
/// optional phase cutoff.
fn push_window(values: &mut Vec<f64>, n: usize, s: &VelocitySchedule, tau0: f64, tau1: f64, cutoff: Option<f64>) {
    if tau1 <= tau0 || s.steps.is_empty() {
        return;
    }
    let k_lo = tau0.floor() as i64;
    let k_hi = (tau1.ceil() as i64).max(k_lo + 1);
    for k in k_lo..k_hi {
        let kf = k as f64;
        let a = (tau0 - kf).max(0.0);
        let mut b = (tau1 - kf).min(1.0);
        if let Some(c) = cutoff {
            b = b.min(c);
        }
        if a >= b {
            continue;
        }
        let acts: Vec<(usize, f64)> = s
            .steps_between(a, b)
            .map(|(i, st)| (i, st.fraction_between(a.max(st.t0), b.min(st.t1()))))
            .filter(|&(_, f)| f != 0.0)
            .collect();
        for (i, f) in acts {
            push_step(values, n, &s.steps[i], f);
        }
    }
}

/// θ0 transported by the 2D schedule from time 0 to `t_end`.
pub fn run_pure_transport(theta0: &ScalarGrid2D, s: &VelocitySchedule, t_end: f64) -> Result<ScalarGrid2D> {
    if !(0.0..=1.0).contains(&t_end) {
        return Err(Error::Input(format!("t_end = {t_end} must lie in [0, 1]")));
    }
    let n = theta0.n();
    let mut v = theta0.values().to_vec();
    push_window(&mut v, n, s, 0.0, t_end, None);
    ScalarGrid2D::new(n, v)
}

/// θ0 transported by the lifted field (ū(z)·1_{z<cutoff}, 1). Requires
/// t_end to be a whole number of vertical cells.
pub fn run_pure_transport_3d(
    theta0: &ScalarGrid3D,
    s: &VelocitySchedule,
    t_end: f64,
    cutoff: Option<f64>,
) -> Result<ScalarGrid3D> {
    if !(0.0..=1.0).contains(&t_end) {
        return Err(Error::Input(format!("t_end = {t_end} must lie in [0, 1]")));
    }
    let (nxy, nz) = (theta0.n_xy(), theta0.n_z());
    let shift = t_end * nz as f64;
    if (shift - shift.round()).abs() > 1e-9 {
        return Err(Error::Alignment(format!(
            "t_end = {t_end} is not a whole number of vertical cells (n_z = {nz})"
        )));
    }
    let shift = shift.round() as usize;
    let slices: Vec<ScalarGrid2D> = (0..nz)
        .map(|l| {
            let src = (l + nz - shift % nz) % nz;
            let z = node(l, nz);
            let mut v = theta0.slice_values(src).to_vec();
            push_window(&mut v, nxy, s, z - t_end, z, cutoff);
            ScalarGrid2D::new(nxy, v)
        })
        .collect::<Result<_>>()?;
    ScalarGrid3D::from_slices(&slices)
}

/// f ∘ Φ⁻¹ sampled at the nodes, with Φ the flow from t0 to t1.
pub fn transport_closed_form(
    f: impl Fn(f64, f64) -> f64 + Sync,
    s: &VelocitySchedule,
    t0: f64,
    t1: f64,
    n: usize,
) -> Result<ScalarGrid2D> {
    ScalarGrid2D::from_fn(n, |x, y| {
        let (px, py) = s.pull_back((x, y), t0, t1, None);
        f(px, py)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{chess_value, chessboard, MixingStage, ProfileKind};
    use crate::smooth::Ramp;

    fn one_stage(n: usize, kind: ProfileKind) -> VelocitySchedule {
        let st = MixingStage::unchecked(0.25, 0.125, n, kind, Ramp::SmoothBump, 1.0).unwrap();
        let steps = st
            .steps
            .iter()
            .enumerate()
            .map(|(i, s)| s.retimed(0.1 + 0.1 * i as f64, 0.1))
            .collect();
        VelocitySchedule::from_steps(steps, n).unwrap()
    }

    #[test]
    fn aligned_transport_matches_closed_form_on_nodes() {
        let n = 64;
        let s = one_stage(n, ProfileKind::Square);
        let g = chessboard(0.25, n).unwrap();
        let a = run_pure_transport(&g, &s, 1.0).unwrap();
        let b = transport_closed_form(|x, y| chess_value(x, y, 0.25), &s, 0.0, 1.0, n).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, chessboard(0.125, n).unwrap());
        assert_eq!(a.sup(), g.sup());
    }

    #[test]
    fn zero_time_is_identity() {
        let n = 32;
        let s = one_stage(n, ProfileKind::Smooth);
        let g = ScalarGrid2D::from_fn(n, |x, y| (x * 7.0).sin() + y).unwrap();
        assert_eq!(run_pure_transport(&g, &s, 0.0).unwrap(), g);
    }

    #[test]
    fn vertical_roll_without_horizontal_field() {
        let g = ScalarGrid3D::from_fn(4, 16, |x, _, z| x + z).unwrap();
        let out = run_pure_transport_3d(&g, &VelocitySchedule::zero(4), 0.25, None).unwrap();
        for l in 0..16 {
            assert_eq!(out.slice_values((l + 4) % 16), g.slice_values(l));
        }
    }
}
