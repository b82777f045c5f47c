//! Spatial objects: chessboards, mollification, the slab profile, shear
//! stages and schedules, the slab initial datum, the partition of unity.

pub mod datum;
pub mod holder;
pub mod partition;
pub mod schedule;
pub mod shear;

use std::f64::consts::SQRT_2;

use crate::error::{Error, Result};
use crate::grid::{ScalarGrid1D, ScalarGrid2D, ScalarGrid3D};
use crate::smooth;
use crate::spectral::{freq, RowFft, C64};

pub use schedule::{assemble_velocity_schedule, ScheduleOptions, VelocitySchedule};
pub use shear::{build_mixing_stage, Axis, MixingStage, ProfileKind, ProfileShape, ShearStep};

/// Normalizing constant of φ_in, fixed so that ‖φ_in‖_{L²} = 3/2.
pub const PHI_IN_C: f64 = 11.629_736_350_882_793;

fn wrap(x: f64) -> f64 {
    x.rem_euclid(1.0)
}

/// (−1)^⌊x/cell⌋ on the torus.
pub fn square_wave(x: f64, cell: f64) -> f64 {
    if (wrap(x) / cell).floor() as i64 % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// +1 on same-parity cells of side `cell`, −1 otherwise.
pub fn chess_value(x: f64, y: f64, cell: f64) -> f64 {
    square_wave(x, cell) * square_wave(y, cell)
}

fn check_aligned(cell: f64, n: usize) -> Result<()> {
    let m = cell * n as f64;
    let r = m.round();
    if (m - r).abs() > 1e-9 || r < 2.0 || r as u64 % 2 != 0 {
        return Err(Error::Alignment(format!(
            "cell {cell} spans {m} grid points on n = {n}; need an even integer"
        )));
    }
    if ((1.0 / cell).round() - 1.0 / cell).abs() > 1e-9 || (1.0 / cell).round() as u64 % 2 != 0 {
        return Err(Error::Alignment(format!("cell {cell} does not tile the torus evenly")));
    }
    Ok(())
}

pub fn chessboard(cell: f64, n: usize) -> Result<ScalarGrid2D> {
    check_aligned(cell, n)?;
    ScalarGrid2D::from_fn(n, |x, y| chess_value(x, y, cell))
}

/// Half-width of the per-axis factor of the 2D mollifier of radius r. The
/// product kernel K_w(x)K_w(y) lives in the square [−w, w]², which sits inside
/// the disc of radius r.
pub fn axis_halfwidth(r: f64) -> f64 {
    r / SQRT_2
}

/// Square wave of cell `cell` convolved with K_w, in closed form. Needs
/// w ≤ cell/2 so that at most one jump is inside the kernel window.
pub fn mollified_square_wave(x: f64, cell: f64, w: f64) -> f64 {
    let x = wrap(x);
    let k = (x / cell).round();
    let e = k * cell;
    if (x - e).abs() >= w {
        return square_wave(x, cell);
    }
    let left = square_wave(e - 0.5 * cell, cell);
    let right = square_wave(e + 0.5 * cell, cell);
    left + (right - left) * smooth::kernel_1d_cdf(x - e, w)
}

/// Chessboard of cell `cell` mollified at radius `r`: M(x)M(y).
pub fn mollified_chess_value(x: f64, y: f64, cell: f64, r: f64) -> f64 {
    let w = axis_halfwidth(r);
    mollified_square_wave(x, cell, w) * mollified_square_wave(y, cell, w)
}

pub fn mollified_chessboard(cell: f64, r: f64, n: usize) -> Result<ScalarGrid2D> {
    check_aligned(cell, n)?;
    if axis_halfwidth(r) > 0.5 * cell {
        return Err(Error::Input(format!("mollification radius {r} too large for cell {cell}")));
    }
    ScalarGrid2D::from_fn(n, |x, y| mollified_chess_value(x, y, cell, r))
}

/// Discrete Fourier multiplier of the sampled, renormalized kernel K_w on n
/// points. Entry 0 is exactly 1.
pub fn kernel_multiplier(n: usize, w: f64) -> Vec<f64> {
    let mut k: Vec<C64> = (0..n)
        .map(|m| C64::new(smooth::kernel_1d(freq(m, n) as f64 / n as f64, w), 0.0))
        .collect();
    let mass: f64 = k.iter().map(|c| c.re).sum();
    for c in k.iter_mut() {
        *c /= mass;
    }
    RowFft::new(n).forward(&mut k);
    let mut out: Vec<f64> = k.iter().map(|c| c.re * n as f64).collect();
    out[0] = 1.0;
    out
}

fn check_radius(r: f64, n: usize) -> Result<()> {
    if !(r > 2.0 / n as f64) {
        return Err(Error::Resolution(format!("radius {r} not above 2/n = {}", 2.0 / n as f64)));
    }
    Ok(())
}

/// f ⋆ ρ_r with the separable product kernel; mean preserved exactly since
/// the zero mode is never touched.
pub fn mollify(f: &ScalarGrid2D, r: f64) -> Result<ScalarGrid2D> {
    let n = f.n();
    check_radius(r, n)?;
    let m = kernel_multiplier(n, axis_halfwidth(r));
    let mut s = crate::solver::Spectral2D::from_grid(f);
    s.apply_separable(&m, &m);
    Ok(s.to_grid())
}

/// Horizontal mollification of every z-slice.
pub fn mollify_horizontal(f: &ScalarGrid3D, r: f64) -> Result<ScalarGrid3D> {
    let slices: Result<Vec<ScalarGrid2D>> = (0..f.n_z()).map(|l| mollify(&f.slice(l), r)).collect();
    ScalarGrid3D::from_slices(&slices?)
}

pub fn phi_in_value(z: f64) -> f64 {
    if !(z > 0.0 && z < 0.25) {
        return 0.0;
    }
    let s = 8.0 * z - 1.0;
    let d = 1.0 - s * s;
    if d <= 0.0 {
        return 0.0;
    }
    PHI_IN_C * (-1.0 / d).exp()
}

/// The slab profile φ_in: C^∞, supported in (0, 1/4), 0 ≤ φ_in ≤ 5,
/// ‖φ_in‖_{L²} = 3/2.
pub fn phi_in(n: usize) -> Result<ScalarGrid1D> {
    if n < 64 {
        return Err(Error::Resolution(format!("phi_in needs n >= 64, got {n}")));
    }
    ScalarGrid1D::from_fn(n, phi_in_value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chessboard_blocks() {
        let g = chessboard(0.5, 8).unwrap();
        assert_eq!(g.at(0, 0), 1.0);
        assert_eq!(g.at(3, 3), 1.0);
        assert_eq!(g.at(4, 0), -1.0);
        assert_eq!(g.mean(), 0.0);
        assert!((g.l2() - 1.0).abs() < 1e-15);
        assert!(chessboard(0.3, 8).is_err());
    }

    #[test]
    fn different_scales_are_orthogonal() {
        let a = chessboard(0.25, 64).unwrap();
        let b = chessboard(0.125, 64).unwrap();
        assert_eq!(a.inner(&b), 0.0);
    }

    #[test]
    fn mollify_preserves_constants_and_mean() {
        let c = ScalarGrid2D::from_fn(32, |_, _| 0.7).unwrap();
        let m = mollify(&c, 0.1).unwrap();
        for v in m.values() {
            assert!((v - 0.7).abs() < 1e-14);
        }
        let g = chessboard(0.25, 64).unwrap();
        let mg = mollify(&g, 0.05).unwrap();
        assert!((mg.mean() - g.mean()).abs() < 1e-15);
        assert!(mollify(&g, 1.0 / 64.0).is_err());
    }

    #[test]
    fn closed_form_matches_spectral_mollification() {
        let n = 256;
        let cell = 0.25;
        let r = 0.06;
        let spectral = mollify(&chessboard(cell, n).unwrap(), r).unwrap();
        let closed = mollified_chessboard(cell, r, n).unwrap();
        assert!(spectral.dist(&closed) < 5e-3);
    }

    #[test]
    fn phi_in_bounds() {
        let g = phi_in(4096).unwrap();
        assert!(g.sup() <= 5.0);
        let norm = g.l2();
        assert!(norm > 1.0 && norm < 2.0);
        assert!((norm - 1.5).abs() < 1e-9);
        assert_eq!(phi_in_value(0.25), 0.0);
        assert_eq!(phi_in_value(0.3), 0.0);
    }
}
