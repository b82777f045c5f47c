//! 3D advection–diffusion for the lifted field u = (ū(z, x, y)·1_{z<c}, 1).
//!
//! With dt a whole number k of vertical cells, transport over one substep is
//! exact: each slice is sheared by the 2D flow over its own 2D-time window
//! [z_l, z_l + dt] and then moved up by k slices. Heat is the full 3D
//! multiplier, applied with the vertical index in spectral form.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{Axis, VelocitySchedule};
use crate::grid::{node, ScalarGrid3D};
use crate::spectral::{self, freq, shift_phase, shift_table, RowFft, C64};
use crate::sum::Neumaier;

use super::spectral2d::{HeatPass, HeatTable};
use super::{step_count, AdvDiffRun, Snapshot, SnapshotPlan, State};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Run3dOptions {
    pub truncate_at: Option<f64>,
    pub plan: SnapshotPlan,
    /// Upper bound on working memory in bytes.
    pub memory_budget: usize,
}

impl Default for Run3dOptions {
    fn default() -> Self {
        Run3dOptions {
            truncate_at: None,
            plan: SnapshotPlan::none(),
            memory_budget: 2 << 30,
        }
    }
}

struct Spectral3D {
    nxy: usize,
    nz: usize,
    /// Physical-z layout [l][ix][iy] or spectral-z layout [ix·nxy + iy][kz].
    data: Vec<C64>,
    zspec: bool,
    fft_xy: RowFft,
    fft_z: RowFft,
    buf: Vec<C64>,
}

impl Spectral3D {
    fn from_grid(g: &ScalarGrid3D) -> Self {
        let (nxy, nz) = (g.n_xy(), g.n_z());
        let m = nxy * nxy;
        let fft_xy = RowFft::new(nxy);
        let mut data: Vec<C64> = g.values().iter().map(|&v| C64::new(v, 0.0)).collect();
        let mut buf = vec![C64::new(0.0, 0.0); m * nz];
        fft_xy.forward(&mut data);
        for l in 0..nz {
            spectral::transpose(&data[l * m..(l + 1) * m], &mut buf[l * m..(l + 1) * m], nxy, nxy);
        }
        fft_xy.forward(&mut buf);
        let mut s = Spectral3D {
            nxy,
            nz,
            data: buf,
            zspec: false,
            fft_xy,
            fft_z: RowFft::new(nz),
            buf: data,
        };
        s.to_z();
        s
    }

    fn to_z(&mut self) {
        if !self.zspec {
            spectral::transpose(&self.data, &mut self.buf, self.nz, self.nxy * self.nxy);
            std::mem::swap(&mut self.data, &mut self.buf);
            self.fft_z.forward(&mut self.data);
            self.zspec = true;
        }
    }

    fn to_p(&mut self) {
        if self.zspec {
            self.fft_z.inverse(&mut self.data);
            spectral::transpose(&self.data, &mut self.buf, self.nxy * self.nxy, self.nz);
            std::mem::swap(&mut self.data, &mut self.buf);
            self.zspec = false;
        }
    }

    fn to_grid(&mut self) -> ScalarGrid3D {
        self.to_p();
        let (nxy, nz) = (self.nxy, self.nz);
        let m = nxy * nxy;
        let mut a = self.data.clone();
        self.fft_xy.inverse(&mut a);
        let mut b = vec![C64::new(0.0, 0.0); m * nz];
        for l in 0..nz {
            spectral::transpose(&a[l * m..(l + 1) * m], &mut b[l * m..(l + 1) * m], nxy, nxy);
        }
        self.fft_xy.inverse(&mut b);
        self.to_z();
        ScalarGrid3D::new(nxy, nz, b.iter().map(|c| c.re).collect()).expect("shape")
    }

    fn energy(&self) -> f64 {
        spectral::energy(&self.data, self.nz)
    }

    /// Mean square in physical-z layout.
    fn energy_physical(&self) -> f64 {
        debug_assert!(!self.zspec);
        spectral::energy(&self.data, self.nxy * self.nxy) / self.nz as f64
    }

    fn grad_weight(&self) -> f64 {
        let (nxy, nz) = (self.nxy, self.nz);
        let parts: Vec<Neumaier> = self
            .data
            .par_chunks(nz)
            .enumerate()
            .map(|(mi, row)| {
                let (ix, iy) = (mi / nxy, mi % nxy);
                let kh = (freq(ix, nxy).pow(2) + freq(iy, nxy).pow(2)) as f64;
                let mut acc = Neumaier::default();
                for (kz, v) in row.iter().enumerate() {
                    acc.add((kh + freq(kz, nz).pow(2) as f64) * v.norm_sqr());
                }
                acc
            })
            .collect();
        crate::sum::sum_partials(&parts)
    }

    /// Heat multiplier in spectral-z layout, optionally fused with a unitary
    /// vertical phase.
    fn heat(&mut self, h: &HeatTable, hz: &HeatTable, phase: Option<&[C64]>) -> HeatPass {
        debug_assert!(self.zspec);
        let (nxy, nz) = (self.nxy, self.nz);
        let parts: Vec<(f64, f64, f64)> = self
            .data
            .par_chunks_mut(nz)
            .enumerate()
            .map(|(mi, row)| {
                let (ix, iy) = (mi / nxy, mi % nxy);
                let mh = h.m[ix] * h.m[iy];
                let kh = h.k2[ix] + h.k2[iy];
                let (d2x, m2x, d2y, m2y) = (h.d2[ix], h.m2[ix], h.d2[iy], h.m2[iy]);
                // Plain sums inside a row (terms all nonnegative), compensated
                // across rows.
                let (mut dec, mut en, mut gr) = (0.0, 0.0, 0.0);
                for (kz, v) in row.iter_mut().enumerate() {
                    let e = v.norm_sqr();
                    dec += e * (d2x + m2x * (d2y + m2y * hz.d2[kz]));
                    *v *= mh * hz.m[kz];
                    if let Some(p) = phase {
                        *v *= p[kz];
                    }
                    let e1 = v.norm_sqr();
                    en += e1;
                    gr += (kh + hz.k2[kz]) * e1;
                }
                (dec, en, gr)
            })
            .collect();
        let (mut dec, mut en, mut gr) = (Neumaier::default(), Neumaier::default(), Neumaier::default());
        for (a, b, c) in parts {
            dec.add(a);
            en.add(b);
            gr.add(c);
        }
        HeatPass {
            decrement: dec.total(),
            energy: en.total(),
            grad_weight: gr.total(),
        }
    }

    /// Applies each slice's shear actions (physical-z layout), slices in
    /// parallel.
    fn shear_slices(&mut self, s: &VelocitySchedule, actions: &[Vec<(usize, f64)>], base: &[Vec<f64>]) {
        debug_assert!(!self.zspec);
        let n = self.nxy;
        let m = n * n;
        let fft = &self.fft_xy;
        self.data
            .par_chunks_mut(m)
            .zip(self.buf.par_chunks_mut(m))
            .zip(actions.par_iter())
            .filter(|(_, acts)| !acts.is_empty())
            .for_each_init(
                || (vec![C64::new(0.0, 0.0); fft.scratch_len()], vec![0.0; n]),
                |(fs, disp), ((slice, scratch), acts)| {
                    for &(i, f) in acts {
                        for (d, b) in disp.iter_mut().zip(&base[i]) {
                            *d = b * f;
                        }
                        shear_plane(slice, scratch, fs, fft, s.steps[i].axis, disp);
                    }
                },
            );
    }

    fn roll_slices(&mut self, k: usize) {
        debug_assert!(!self.zspec);
        let m = self.nxy * self.nxy;
        self.data.rotate_right((k % self.nz) * m);
    }
}

/// Shears one spectral xy-plane along `axis` by `disp[j]` at transverse node j.
fn shear_plane(slice: &mut [C64], scratch: &mut [C64], fs: &mut [C64], fft: &RowFft, axis: Axis, disp: &[f64]) {
    let n = disp.len();
    let transposed = axis == Axis::YShearOfX;
    if transposed {
        spectral::transpose(slice, scratch, n, n);
        slice.copy_from_slice(scratch);
    }
    fft.inverse_serial(slice, fs);
    let table = shift_table(n, disp);
    for (row, ph) in slice.chunks_mut(n).zip(table.chunks(n)).skip(1) {
        for (v, p) in row.iter_mut().zip(ph) {
            *v *= p;
        }
    }
    fft.forward_serial(slice, fs);
    if transposed {
        spectral::transpose(slice, scratch, n, n);
        slice.copy_from_slice(scratch);
    }
}

/// Per-slice (step index, displacement fraction) lists for one substep.
fn slice_actions(s: &VelocitySchedule, nz: usize, dt: f64, cutoff: Option<f64>) -> Vec<Vec<(usize, f64)>> {
    (0..nz)
        .map(|l| {
            let z = node(l, nz);
            let mut acts = Vec::new();
            let (mut a, end) = (z, z + dt);
            while a < end {
                let k = a.floor();
                let b = end.min(k + 1.0);
                let (pa, mut pb) = (a - k, b - k);
                if let Some(c) = cutoff {
                    pb = pb.min(c);
                }
                if pa < pb {
                    for (i, st) in s.steps_between(pa, pb) {
                        let f = st.fraction_between(pa.max(st.t0), pb.min(st.t1()));
                        if f != 0.0 {
                            acts.push((i, f));
                        }
                    }
                }
                a = b;
            }
            acts
        })
        .collect()
}

pub fn heat_step_3d(f: &ScalarGrid3D, kappa: f64, dt: f64) -> (ScalarGrid3D, f64) {
    let mut s = Spectral3D::from_grid(f);
    let h = HeatTable::new(f.n_xy(), kappa, dt);
    let hz = HeatTable::new(f.n_z(), kappa, dt);
    let p = s.heat(&h, &hz, None);
    (s.to_grid(), p.decrement)
}

pub fn run_adv_diff_3d(
    theta0: &ScalarGrid3D,
    s: &VelocitySchedule,
    kappa: f64,
    t_end: f64,
    dt: f64,
    opts: &Run3dOptions,
) -> Result<AdvDiffRun> {
    let (nxy, nz) = (theta0.n_xy(), theta0.n_z());
    let bytes = nxy * nxy * nz * std::mem::size_of::<C64>() * 3;
    if bytes > opts.memory_budget {
        return Err(Error::Memory(format!(
            "{nxy}x{nxy}x{nz} needs {bytes} bytes, budget {}",
            opts.memory_budget
        )));
    }
    if !(kappa >= 0.0) {
        return Err(Error::Input(format!("kappa = {kappa} must be nonnegative")));
    }
    let steps = step_count(t_end, dt)?;
    let shift = dt * nz as f64;
    if (shift - shift.round()).abs() > 1e-9 || shift.round() < 1.0 {
        return Err(Error::Alignment(format!(
            "dt = {dt} is not a whole number of vertical cells (n_z = {nz})"
        )));
    }
    let shift = shift.round() as usize;
    let actions = slice_actions(s, nz, dt, opts.truncate_at);
    let any_active = actions.iter().any(|a| !a.is_empty());
    let base: Vec<Vec<f64>> = s
        .steps
        .iter()
        .map(|st| (0..nxy).map(|j| st.total_displacement(node(j, nxy))).collect())
        .collect();
    let half = (HeatTable::new(nxy, kappa, 0.5 * dt), HeatTable::new(nz, kappa, 0.5 * dt));
    let full = (HeatTable::new(nxy, kappa, dt), HeatTable::new(nz, kappa, dt));
    let roll_phase: Vec<C64> = (0..nz).map(|i| shift_phase(i, nz, dt)).collect();
    let rate_scale = 2.0 * kappa * 4.0 * PI * PI;

    let mut state = Spectral3D::from_grid(theta0);
    let mut times = vec![0.0];
    let mut energy = vec![state.energy()];
    let mut rate = vec![rate_scale * state.grad_weight()];
    let mut ledger = Vec::with_capacity(steps);
    let mut snapshots = Vec::new();
    if opts.plan.wants(0) {
        snapshots.push(Snapshot { step: 0, t: 0.0, state: State::D3(theta0.clone()) });
    }
    for k in 0..steps {
        let t1 = (k + 1) as f64 * dt;
        let pass = if kappa == 0.0 {
            // Heat is the identity: stay in physical-z layout.
            state.to_p();
            if any_active {
                state.shear_slices(s, &actions, &base);
            }
            state.roll_slices(shift);
            ledger.push(0.0);
            HeatPass {
                decrement: 0.0,
                energy: state.energy_physical(),
                grad_weight: 0.0,
            }
        } else if !any_active {
            let p = state.heat(&full.0, &full.1, Some(&roll_phase));
            ledger.push(p.decrement);
            p
        } else {
            let p1 = state.heat(&half.0, &half.1, None);
            state.to_p();
            state.shear_slices(s, &actions, &base);
            state.roll_slices(shift);
            state.to_z();
            let p2 = state.heat(&half.0, &half.1, None);
            ledger.push(p1.decrement + p2.decrement);
            p2
        };
        if !pass.energy.is_finite() {
            return Err(Error::NonFinite(t1));
        }
        times.push(t1);
        energy.push(pass.energy);
        rate.push(rate_scale * pass.grad_weight);
        if opts.plan.wants(k + 1) {
            snapshots.push(Snapshot { step: k + 1, t: t1, state: State::D3(state.to_grid()) });
        }
    }
    let fin = state.to_grid();
    Ok(AdvDiffRun {
        kappa,
        dt,
        times,
        energy,
        ledger,
        spectral_rate: rate,
        snapshots,
        mean0: theta0.mean(),
        mean_end: fin.mean(),
        final_state: State::D3(fin),
        truncate_at: opts.truncate_at,
    })
}
