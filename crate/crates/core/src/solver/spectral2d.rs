//! Spectral state of a 2D field kept in one of two transposed layouts so that
//! a shear only ever needs row transforms.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::fields::Axis;
use crate::grid::ScalarGrid2D;
use crate::spectral::{self, freq, shift_table, RowFft, C64};
use crate::sum::{sum_partials, Neumaier};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    /// Row index kx, column index ky.
    KxKy,
    /// Row index ky, column index kx.
    KyKx,
}

/// Per-axis heat factors for e^{−4π²κ|k|²τ}.
#[derive(Clone, Debug)]
pub struct HeatTable {
    /// e^{−4π²κk²τ}.
    pub m: Vec<f64>,
    /// m².
    pub m2: Vec<f64>,
    /// 1 − m², computed without cancellation.
    pub d2: Vec<f64>,
    /// k².
    pub k2: Vec<f64>,
}

impl HeatTable {
    pub fn new(n: usize, kappa: f64, tau: f64) -> Self {
        let mut t = HeatTable {
            m: Vec::with_capacity(n),
            m2: Vec::with_capacity(n),
            d2: Vec::with_capacity(n),
            k2: Vec::with_capacity(n),
        };
        for i in 0..n {
            let k = freq(i, n) as f64;
            let a = -4.0 * PI * PI * kappa * k * k * tau;
            t.m.push(a.exp());
            t.m2.push((2.0 * a).exp());
            t.d2.push(-(2.0 * a).exp_m1());
            t.k2.push(k * k);
        }
        t
    }
}

/// Sums produced by one heat pass.
#[derive(Clone, Copy, Debug, Default)]
pub struct HeatPass {
    /// Exact energy removed, Σ|c|²(1 − m²).
    pub decrement: f64,
    /// Σ|c|² after the pass.
    pub energy: f64,
    /// Σ|k|²|c|² after the pass.
    pub grad_weight: f64,
}

#[derive(Clone, Debug)]
pub struct Spectral2D {
    n: usize,
    data: Vec<C64>,
    layout: Layout,
    fft: RowFft,
    buf: Vec<C64>,
}

impl Spectral2D {
    pub fn from_grid(g: &ScalarGrid2D) -> Self {
        let n = g.n();
        let fft = RowFft::new(n);
        let mut data: Vec<C64> = g.values().iter().map(|&v| C64::new(v, 0.0)).collect();
        let mut buf = vec![C64::new(0.0, 0.0); n * n];
        fft.forward(&mut data);
        spectral::transpose(&data, &mut buf, n, n);
        fft.forward(&mut buf);
        Spectral2D {
            n,
            data: buf,
            layout: Layout::KxKy,
            fft,
            buf: data,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.data
    }

    /// Coefficient at (kx index, ky index) regardless of layout.
    pub fn coeff(&self, ix: usize, iy: usize) -> C64 {
        match self.layout {
            Layout::KxKy => self.data[ix * self.n + iy],
            Layout::KyKx => self.data[iy * self.n + ix],
        }
    }

    pub fn set_layout(&mut self, l: Layout) {
        if l != self.layout {
            spectral::transpose(&self.data, &mut self.buf, self.n, self.n);
            std::mem::swap(&mut self.data, &mut self.buf);
            self.layout = l;
        }
    }

    pub fn to_grid(&self) -> ScalarGrid2D {
        let n = self.n;
        let mut a = self.data.clone();
        if self.layout == Layout::KyKx {
            let mut t = vec![C64::new(0.0, 0.0); n * n];
            spectral::transpose(&a, &mut t, n, n);
            a = t;
        }
        self.fft.inverse(&mut a);
        let mut b = vec![C64::new(0.0, 0.0); n * n];
        spectral::transpose(&a, &mut b, n, n);
        self.fft.inverse(&mut b);
        ScalarGrid2D::new(n, b.iter().map(|c| c.re).collect()).expect("square grid")
    }

    pub fn energy(&self) -> f64 {
        spectral::energy(&self.data, self.n)
    }

    /// Σ|k|²|c|².
    pub fn grad_weight(&self) -> f64 {
        let n = self.n;
        let parts: Vec<Neumaier> = self
            .data
            .par_chunks(n)
            .enumerate()
            .map(|(r, row)| {
                let kr = freq(r, n) as f64;
                let mut acc = Neumaier::default();
                for (c, v) in row.iter().enumerate() {
                    let kc = freq(c, n) as f64;
                    acc.add((kr * kr + kc * kc) * v.norm_sqr());
                }
                acc
            })
            .collect();
        sum_partials(&parts)
    }

    /// Multiplies by mx[kx]·my[ky].
    pub fn apply_separable(&mut self, mx: &[f64], my: &[f64]) {
        let n = self.n;
        let (mr, mc) = match self.layout {
            Layout::KxKy => (mx, my),
            Layout::KyKx => (my, mx),
        };
        self.data.par_chunks_mut(n).enumerate().for_each(|(r, row)| {
            for (c, v) in row.iter_mut().enumerate() {
                *v *= mr[r] * mc[c];
            }
        });
    }

    /// Exact heat multiplier with the same table on both axes.
    pub fn heat(&mut self, t: &HeatTable) -> HeatPass {
        let n = self.n;
        let parts: Vec<(Neumaier, Neumaier, Neumaier)> = self
            .data
            .par_chunks_mut(n)
            .enumerate()
            .map(|(r, row)| {
                let (mut dec, mut en, mut gr) = (Neumaier::default(), Neumaier::default(), Neumaier::default());
                let (mr, m2r, d2r, k2r) = (t.m[r], t.m2[r], t.d2[r], t.k2[r]);
                for (c, v) in row.iter_mut().enumerate() {
                    let e = v.norm_sqr();
                    dec.add(e * (d2r + m2r * t.d2[c]));
                    *v *= mr * t.m[c];
                    let e1 = v.norm_sqr();
                    en.add(e1);
                    gr.add((k2r + t.k2[c]) * e1);
                }
                (dec, en, gr)
            })
            .collect();
        let (mut dec, mut en, mut gr) = (Neumaier::default(), Neumaier::default(), Neumaier::default());
        for (a, b, c) in parts {
            dec.merge(a);
            en.merge(b);
            gr.merge(c);
        }
        HeatPass {
            decrement: dec.total(),
            energy: en.total(),
            grad_weight: gr.total(),
        }
    }

    /// Displaces content along `axis` by `disp[j]` at transverse node j.
    pub fn shear(&mut self, axis: Axis, disp: &[f64]) {
        let n = self.n;
        assert_eq!(disp.len(), n);
        self.set_layout(match axis {
            Axis::XShearOfY => Layout::KxKy,
            Axis::YShearOfX => Layout::KyKx,
        });
        self.fft.inverse(&mut self.data);
        let table = shift_table(n, disp);
        self.data.par_chunks_mut(n).zip(table.par_chunks(n)).skip(1).for_each(|(row, ph)| {
            for (v, p) in row.iter_mut().zip(ph) {
                *v *= p;
            }
        });
        self.fft.forward(&mut self.data);
    }
}
