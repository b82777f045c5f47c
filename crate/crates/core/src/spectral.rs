//! FFT plumbing on the unit torus. Coefficients are normalized (forward
//! transforms divide by the length), so Σ|ĉ|² equals the mean square of the
//! samples.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::sum::Neumaier;

pub type C64 = Complex<f64>;

/// Signed frequency of index `i` on a length-`n` transform; the Nyquist index
/// maps to +n/2.
pub fn freq(i: usize, n: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

pub fn is_nyquist(i: usize, n: usize) -> bool {
    n % 2 == 0 && i == n / 2
}

/// Frequency used for derivatives: the Nyquist mode of a real field has no
/// odd derivative.
pub fn deriv_freq(i: usize, n: usize) -> f64 {
    if is_nyquist(i, n) {
        0.0
    } else {
        freq(i, n) as f64
    }
}

/// e^{−2πi k d}, with the Nyquist mode replaced by the real unit
/// sign(cos(π n d)) so real fields stay real and the map stays unitary.
pub fn shift_phase(i: usize, n: usize, d: f64) -> C64 {
    if is_nyquist(i, n) {
        let c = (PI * n as f64 * d).cos();
        return C64::new(if c >= 0.0 { 1.0 } else { -1.0 }, 0.0);
    }
    let k = freq(i, n) as f64;
    let arg = -2.0 * PI * (k * d).rem_euclid(1.0);
    let (s, c) = arg.sin_cos();
    C64::new(c, s)
}

/// `shift_phase(r, n, disp[j])` laid out [r][j], built by a renormalized
/// power recurrence per column (one sin/cos per column).
pub fn shift_table(n: usize, disp: &[f64]) -> Vec<C64> {
    let m = disp.len();
    let mut t = vec![C64::new(1.0, 0.0); n * m];
    for (j, &d) in disp.iter().enumerate() {
        let w = shift_phase(1, n, d);
        let mut p = C64::new(1.0, 0.0);
        for r in 1..n.div_ceil(2) {
            p *= w;
            p /= p.norm();
            t[r * m + j] = p;
            t[(n - r) * m + j] = p.conj();
        }
        if n % 2 == 0 && n > 1 {
            t[(n / 2) * m + j] = shift_phase(n / 2, n, d);
        }
    }
    t
}

/// Row transforms of a fixed length over contiguous buffers.
#[derive(Clone)]
pub struct RowFft {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for RowFft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "RowFft({})", self.n)
    }
}

const ROWS_PER_TASK: usize = 16;

impl RowFft {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        RowFft {
            n,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Forward transform of every row, scaled by 1/n.
    pub fn forward(&self, data: &mut [C64]) {
        let scale = 1.0 / self.n as f64;
        self.run(&self.fwd, data, Some(scale));
    }

    /// Unscaled inverse transform of every row.
    pub fn inverse(&self, data: &mut [C64]) {
        self.run(&self.inv, data, None);
    }

    /// Serial forward transform with caller scratch (see `scratch_len`).
    pub fn forward_serial(&self, data: &mut [C64], scratch: &mut [C64]) {
        self.fwd.process_with_scratch(data, scratch);
        let scale = 1.0 / self.n as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }

    pub fn inverse_serial(&self, data: &mut [C64], scratch: &mut [C64]) {
        self.inv.process_with_scratch(data, scratch);
    }

    pub fn scratch_len(&self) -> usize {
        self.fwd.get_inplace_scratch_len().max(self.inv.get_inplace_scratch_len())
    }

    fn run(&self, plan: &Arc<dyn Fft<f64>>, data: &mut [C64], scale: Option<f64>) {
        assert_eq!(data.len() % self.n, 0);
        let chunk = self.n * ROWS_PER_TASK;
        data.par_chunks_mut(chunk).for_each_init(
            || vec![C64::new(0.0, 0.0); plan.get_inplace_scratch_len()],
            |scratch, block| {
                plan.process_with_scratch(block, scratch);
                if let Some(s) = scale {
                    for v in block.iter_mut() {
                        *v *= s;
                    }
                }
            },
        );
    }
}

/// Out-of-place transpose of a `rows × cols` row-major matrix.
pub fn transpose(src: &[C64], dst: &mut [C64], rows: usize, cols: usize) {
    assert_eq!(src.len(), rows * cols);
    assert_eq!(dst.len(), rows * cols);
    const B: usize = 32;
    for r0 in (0..rows).step_by(B) {
        for c0 in (0..cols).step_by(B) {
            for r in r0..(r0 + B).min(rows) {
                for c in c0..(c0 + B).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

/// Σ|c|² in fixed row order.
pub fn energy(data: &[C64], row: usize) -> f64 {
    let parts: Vec<Neumaier> = data
        .par_chunks(row)
        .map(|r| {
            let mut acc = Neumaier::default();
            for c in r {
                acc.add(c.norm_sqr());
            }
            acc
        })
        .collect();
    crate::sum::sum_partials(&parts)
}

/// Forward 1D transform of real samples.
pub fn rfft(values: &[f64]) -> Vec<C64> {
    let fft = RowFft::new(values.len());
    let mut buf: Vec<C64> = values.iter().map(|&v| C64::new(v, 0.0)).collect();
    fft.forward(&mut buf);
    buf
}

/// Inverse of [`rfft`], keeping the real part.
pub fn irfft(coeffs: &[C64]) -> Vec<f64> {
    let fft = RowFft::new(coeffs.len());
    let mut buf = coeffs.to_vec();
    fft.inverse(&mut buf);
    buf.iter().map(|c| c.re).collect()
}

/// Full transform of a real [z][y][x] array; coefficients come back indexed
/// [kz][ky][kx]. An `nz` of 1 gives the 2D transform.
pub fn fft3_forward(values: &[f64], nxy: usize, nz: usize) -> Vec<C64> {
    let mut a: Vec<C64> = values.iter().map(|&v| C64::new(v, 0.0)).collect();
    fft3_in_place(&mut a, nxy, nz, true);
    a
}

/// Real part of the inverse of [`fft3_forward`].
pub fn fft3_inverse(coeffs: &[C64], nxy: usize, nz: usize) -> Vec<f64> {
    let mut a = coeffs.to_vec();
    fft3_in_place(&mut a, nxy, nz, false);
    a.iter().map(|c| c.re).collect()
}

fn fft3_in_place(a: &mut [C64], nxy: usize, nz: usize, forward: bool) {
    let m = nxy * nxy;
    assert_eq!(a.len(), m * nz);
    let run = |f: &RowFft, d: &mut [C64]| if forward { f.forward(d) } else { f.inverse(d) };
    let fx = RowFft::new(nxy);
    let mut buf = vec![C64::new(0.0, 0.0); a.len()];
    run(&fx, a);
    for l in 0..nz {
        transpose(&a[l * m..(l + 1) * m], &mut buf[l * m..(l + 1) * m], nxy, nxy);
    }
    run(&fx, &mut buf);
    for l in 0..nz {
        transpose(&buf[l * m..(l + 1) * m], &mut a[l * m..(l + 1) * m], nxy, nxy);
    }
    if nz > 1 {
        transpose(a, &mut buf, nz, m);
        run(&RowFft::new(nz), &mut buf);
        transpose(&buf, a, m, nz);
    }
}

/// Applies a Fourier multiplier `mult(ix, iy, iz)` to a real [z][y][x] array.
pub fn apply_multiplier3(
    values: &[f64],
    nxy: usize,
    nz: usize,
    mult: impl Fn(usize, usize, usize) -> C64 + Sync,
) -> Vec<f64> {
    let mut c = fft3_forward(values, nxy, nz);
    c.par_chunks_mut(nxy).enumerate().for_each(|(r, row)| {
        let (iz, iy) = (r / nxy, r % nxy);
        for (ix, v) in row.iter_mut().enumerate() {
            *v *= mult(ix, iy, iz);
        }
    });
    fft3_inverse(&c, nxy, nz)
}

/// ∂/∂axis of a real [z][y][x] array (axis 0 = x, 1 = y, 2 = z).
pub fn derivative3(values: &[f64], nxy: usize, nz: usize, axis: usize) -> Vec<f64> {
    apply_multiplier3(values, nxy, nz, |ix, iy, iz| {
        let k = match axis {
            0 => deriv_freq(ix, nxy),
            1 => deriv_freq(iy, nxy),
            _ => deriv_freq(iz, nz),
        };
        C64::new(0.0, 2.0 * PI * k)
    })
}

/// Δ of a real [z][y][x] array, with the Nyquist modes at k = n/2.
pub fn laplacian3(values: &[f64], nxy: usize, nz: usize) -> Vec<f64> {
    apply_multiplier3(values, nxy, nz, |ix, iy, iz| {
        let k2 = (freq(ix, nxy).pow(2) + freq(iy, nxy).pow(2) + freq(iz, nz).pow(2)) as f64;
        C64::new(-4.0 * PI * PI * k2, 0.0)
    })
}

#[cfg(test)]
mod tests {
    #[test]
    fn shift_table_matches_direct_phases() {
        let disp = [0.0, 0.1234, -0.77, 3.0 / 64.0, 0.5];
        for n in [1usize, 2, 7, 64] {
            let t = shift_table(n, &disp);
            for r in 0..n {
                for (j, &d) in disp.iter().enumerate() {
                    assert!((t[r * disp.len() + j] - shift_phase(r, n, d)).norm() < 1e-13);
                }
            }
        }
    }

    use super::*;

    #[test]
    fn frequencies() {
        let f: Vec<i64> = (0..8).map(|i| freq(i, 8)).collect();
        assert_eq!(f, vec![0, 1, 2, 3, 4, -3, -2, -1]);
        assert_eq!(deriv_freq(4, 8), 0.0);
    }

    #[test]
    fn roundtrip_and_parseval() {
        let v: Vec<f64> = (0..64).map(|i| ((i * 7 % 13) as f64).sin()).collect();
        let c = rfft(&v);
        let back = irfft(&c);
        for (a, b) in v.iter().zip(&back) {
            assert!((a - b).abs() < 1e-13);
        }
        let ms = v.iter().map(|x| x * x).sum::<f64>() / 64.0;
        assert!((energy(&c, 64) - ms).abs() < 1e-13);
    }

    #[test]
    fn integer_shift_phase_is_a_roll() {
        let n = 16;
        let v: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).cos() + i as f64).collect();
        let mut c = rfft(&v);
        for (i, ci) in c.iter_mut().enumerate() {
            *ci *= shift_phase(i, n, 3.0 / n as f64);
        }
        let w = irfft(&c);
        for i in 0..n {
            assert!((w[(i + 3) % n] - v[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn transpose_roundtrip() {
        let src: Vec<C64> = (0..12).map(|i| C64::new(i as f64, 0.0)).collect();
        let mut t = vec![C64::new(0.0, 0.0); 12];
        let mut back = t.clone();
        transpose(&src, &mut t, 3, 4);
        assert_eq!(t[1].re, 4.0);
        transpose(&t, &mut back, 4, 3);
        assert_eq!(src, back);
    }
}
