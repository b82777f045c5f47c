//! Quantities computed from completed runs: balance residuals, coarse-grained
//! energies, κ-sweeps, the in-window/out-of-window split of the dissipation
//! profile, stability gaps, tail checks and refinement errors.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cascade::{stage_schedule, CascadeParams};
use crate::error::{Error, Result};
use crate::fields::partition::Partition;
use crate::fields::{chessboard, mollify, mollify_horizontal, VelocitySchedule};
use crate::grid::{node, ScalarGrid1D, ScalarGrid2D};
use crate::smooth::step;
use crate::solver::{run_adv_diff_2d, solve_drift_diffusion_1d, AdvDiffRun, Snapshot, SnapshotPlan, State};
use crate::spectral::{fft3_forward, freq};
use crate::sum::{self, Neumaier};

pub fn energy_series(r: &AdvDiffRun) -> Vec<(f64, f64)> {
    r.times.iter().copied().zip(r.energy.iter().copied()).collect()
}

pub fn ledger_total(r: &AdvDiffRun) -> f64 {
    sum::sum(r.ledger.iter().copied())
}

/// |e(0) − e(T) − Σ ledger|.
pub fn balance_residual(r: &AdvDiffRun) -> f64 {
    let mut acc = Neumaier::default();
    acc.add(r.e0());
    acc.add(-r.e_end());
    for &d in &r.ledger {
        acc.add(-d);
    }
    acc.total().abs()
}

/// |∫ 2κ‖∇θ‖² dt − Σ ledger| with the trapezoid rule on the substep grid.
pub fn spectral_balance_residual(r: &AdvDiffRun) -> f64 {
    let mut acc = Neumaier::default();
    for k in 0..r.steps() {
        acc.add(0.5 * (r.times[k + 1] - r.times[k]) * (r.spectral_rate[k] + r.spectral_rate[k + 1]));
    }
    (acc.total() - ledger_total(r)).abs()
}

/// 4π²Σ|k|²|ĉ|², the squared L² norm of the gradient.
pub fn grad_sq(state: &State) -> f64 {
    let (v, nxy, nz) = match state {
        State::D2(g) => (g.values(), g.n(), 1),
        State::D3(g) => (g.values(), g.n_xy(), g.n_z()),
    };
    let c = fft3_forward(v, nxy, nz);
    let parts: Vec<Neumaier> = c
        .par_chunks(nxy)
        .enumerate()
        .map(|(r, row)| {
            let (iz, iy) = (r / nxy, r % nxy);
            let kzy = (freq(iz, nz).pow(2) + freq(iy, nxy).pow(2)) as f64;
            let mut acc = Neumaier::default();
            for (ix, z) in row.iter().enumerate() {
                acc.add((kzy + freq(ix, nxy).pow(2) as f64) * z.norm_sqr());
            }
            acc
        })
        .collect();
    4.0 * PI * PI * sum::sum_partials(&parts)
}

/// ‖(θ)_ℓ‖². 3D states are filtered slice by slice in the horizontal
/// variables only.
pub fn coarse_grained_energy(state: &State, ell: f64) -> Result<f64> {
    match state {
        State::D2(g) => Ok(mollify(g, ell)?.energy()),
        State::D3(g) => Ok(mollify_horizontal(g, ell)?.energy()),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub id: usize,
    pub lo: f64,
    pub hi: f64,
}

/// Windows for a 2D run at κ_q: the stage's arrival time ½ − T_q plus the
/// diffusion window t̃_q, clipped to [0, t_end].
pub fn windows_2d(p: &CascadeParams, q: usize, t_end: f64) -> Result<Vec<Window>> {
    let st = stage_schedule(p, q, None)?;
    let lo = (0.5 - p.big_t[q]).clamp(0.0, t_end);
    Ok(vec![Window { id: 0, lo, hi: (lo + st.t_tilde).min(t_end) }])
}

/// Windows J_{q,j} = [t_{q,j}, t_{q,j} + t̃_q] for every slab.
pub fn windows_3d(p: &CascadeParams, q: usize, part: &Partition, t_end: f64) -> Result<Vec<Window>> {
    let st = stage_schedule(p, q, Some(part))?;
    Ok(st
        .critical_times
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let lo = t.clamp(0.0, t_end);
            Window { id: j, lo, hi: (lo + st.t_tilde).min(t_end) }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowMass {
    pub window: Window,
    pub mass: f64,
}

/// Time profile of the dissipation with its window split. Masses are in
/// energy units, so in + out equals e(0) − e(T).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DissipationProfile {
    pub kappa: f64,
    pub q: usize,
    /// Substep midpoints.
    pub t: Vec<f64>,
    /// −½ de/dt from the ledger, per substep.
    pub rate: Vec<f64>,
    /// First window containing each substep midpoint.
    pub window_id: Vec<Option<usize>>,
    pub windows: Vec<WindowMass>,
    pub total: f64,
    pub in_window_mass: f64,
    pub out_window_mass: f64,
    pub sup_in_window_rate: f64,
    /// (t, e_ℓ(t)) at stored snapshots, if requested.
    pub coarse: Vec<(f64, f64)>,
    pub warnings: Vec<String>,
}

impl DissipationProfile {
    pub fn in_fraction(&self) -> f64 {
        self.in_window_mass / self.total
    }

    pub fn out_fraction(&self) -> f64 {
        self.out_window_mass / self.total
    }

    /// Columns t, rate, window_id (−1 outside every window).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,rate,window_id\n");
        for k in 0..self.t.len() {
            let id = self.window_id[k].map_or(-1, |i| i as i64);
            let _ = writeln!(out, "{},{},{}", self.t[k], self.rate[k], id);
        }
        out
    }
}

/// Splits the ledger by substep midpoint over `windows`.
pub fn decompose(r: &AdvDiffRun, q: usize, windows: &[Window]) -> DissipationProfile {
    let mut warnings = Vec::new();
    let mut sorted: Vec<Window> = windows.to_vec();
    sorted.sort_by(|a, b| a.lo.total_cmp(&b.lo));
    for w in sorted.windows(2) {
        if w[1].lo < w[0].hi {
            warnings.push(format!("windows {} and {} overlap", w[0].id, w[1].id));
        }
    }
    let t_end = *r.times.last().expect("non-empty run");
    for w in windows {
        if w.hi <= w.lo {
            warnings.push(format!("window {} is empty inside [0, {t_end}]", w.id));
        }
    }
    let steps = r.steps();
    let mut t = Vec::with_capacity(steps);
    let mut rate = Vec::with_capacity(steps);
    let mut ids = Vec::with_capacity(steps);
    let mut inside = Neumaier::default();
    let mut outside = Neumaier::default();
    let mut per = vec![Neumaier::default(); windows.len()];
    let mut sup = 0.0f64;
    for k in 0..steps {
        let (t0, t1) = (r.times[k], r.times[k + 1]);
        let mid = 0.5 * (t0 + t1);
        let rk = r.ledger[k] / (2.0 * (t1 - t0));
        let id = windows.iter().position(|w| w.lo <= mid && mid <= w.hi);
        match id {
            Some(i) => {
                inside.add(r.ledger[k]);
                per[i].add(r.ledger[k]);
                sup = sup.max(rk);
            }
            None => outside.add(r.ledger[k]),
        }
        t.push(mid);
        rate.push(rk);
        ids.push(id.map(|i| windows[i].id));
    }
    DissipationProfile {
        kappa: r.kappa,
        q,
        t,
        rate,
        window_id: ids,
        windows: windows
            .iter()
            .zip(&per)
            .map(|(w, m)| WindowMass { window: *w, mass: m.total() })
            .collect(),
        total: ledger_total(r),
        in_window_mass: inside.total(),
        out_window_mass: outside.total(),
        sup_in_window_rate: sup,
        coarse: Vec::new(),
        warnings,
    }
}

/// Window split at the stage whose matched κ is nearest to the run's κ.
/// Without a partition the 2D windows are used.
pub fn window_decomposition(r: &AdvDiffRun, p: &CascadeParams, part: Option<&Partition>) -> Result<DissipationProfile> {
    let q = if r.kappa > 0.0 { p.nearest_stage(r.kappa) } else { p.q_count };
    let t_end = *r.times.last().expect("non-empty run");
    let w = match part {
        None => windows_2d(p, q, t_end)?,
        Some(part) => windows_3d(p, q, part, t_end)?,
    };
    Ok(decompose(r, q, &w))
}

/// Adds e_ℓ at every stored snapshot of `r`.
pub fn with_coarse_series(mut prof: DissipationProfile, r: &AdvDiffRun, ell: f64) -> Result<DissipationProfile> {
    prof.coarse = r
        .snapshots
        .iter()
        .map(|s| Ok((s.t, coarse_grained_energy(&s.state, ell)?)))
        .collect::<Result<_>>()?;
    Ok(prof)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub q: usize,
    pub kappa: f64,
    pub e0: f64,
    pub e_end: f64,
    pub dissipated_fraction: f64,
    pub profile: DissipationProfile,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// Columns q, kappa, e_end, dissipated_fraction, in_window_mass,
    /// out_window_mass, sup_in_window_rate.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("q,kappa,e_end,dissipated_fraction,in_window_mass,out_window_mass,sup_in_window_rate\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.q,
                r.kappa,
                r.e_end,
                r.dissipated_fraction,
                r.profile.in_window_mass,
                r.profile.out_window_mass,
                r.profile.sup_in_window_rate
            );
        }
        out
    }
}

/// One 2D run per κ, in parallel; rows keep the order of `kappas`. `dt_for`
/// picks the substep for each κ.
pub fn kappa_sweep(
    p: &CascadeParams,
    s: &VelocitySchedule,
    theta0: &ScalarGrid2D,
    kappas: &[f64],
    t_end: f64,
    dt_for: impl Fn(f64) -> f64 + Sync,
) -> Result<SweepTable> {
    if kappas.iter().any(|&k| !(k > 0.0)) {
        return Err(Error::Input("sweep diffusivities must be positive".into()));
    }
    if kappas.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::Input("sweep diffusivities must be sorted descending".into()));
    }
    let rows: Result<Vec<SweepRow>> = kappas
        .par_iter()
        .map(|&kappa| {
            let r = run_adv_diff_2d(theta0, s, kappa, t_end, dt_for(kappa), &SnapshotPlan::none())?;
            let profile = window_decomposition(&r, p, None)?;
            Ok(SweepRow {
                q: profile.q,
                kappa,
                e0: r.e0(),
                e_end: r.e_end(),
                dissipated_fraction: (r.e0() - r.e_end()) / r.e0(),
                profile,
            })
        })
        .collect();
    Ok(SweepTable { rows: rows? })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapSample {
    pub step: usize,
    pub t: f64,
    pub gap: f64,
    /// κ∫₀ᵗ‖∇θ_0‖².
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub samples: Vec<GapSample>,
    pub sup_gap: f64,
    /// (slab index, time, gap) at the critical times, nearest sample.
    pub slab_gaps: Vec<(usize, f64, f64)>,
    pub tolerance: f64,
    /// θ_0 carries energy in the top third of the spectrum, so the bound
    /// is only a lower estimate.
    pub unresolved: bool,
    pub pass: bool,
}

/// Gap ‖θ_κ − θ_0‖ at every step where both runs hold a snapshot. The
/// bound integrates ‖∇θ_0‖² over the reference snapshots by the trapezoid
/// rule, so the reference should be dense in time.
pub fn stability_gap(
    r: &AdvDiffRun,
    reference: &[Snapshot],
    critical_times: &[f64],
    tolerance: f64,
) -> Result<StabilityReport> {
    if reference.is_empty() {
        return Err(Error::Input("empty reference series".into()));
    }
    let g: Vec<(f64, f64)> = reference.par_iter().map(|s| (s.t, grad_sq(&s.state))).collect();
    let unresolved = reference.iter().any(|s| top_third_energy(&s.state) > 1e-8 * s.state.energy().max(1e-300));
    let mut cum = vec![0.0; g.len()];
    let mut acc = Neumaier::default();
    for k in 1..g.len() {
        acc.add(0.5 * (g[k].0 - g[k - 1].0) * (g[k].1 + g[k - 1].1));
        cum[k] = acc.total();
    }
    let mut samples = Vec::new();
    for (k, rs) in reference.iter().enumerate() {
        let Some(snap) = r.snapshot(rs.step) else { continue };
        let gap = state_dist(&snap.state, &rs.state)?;
        samples.push(GapSample { step: rs.step, t: rs.t, gap, bound: r.kappa * cum[k] });
    }
    if samples.is_empty() {
        return Err(Error::Input("no common snapshot steps".into()));
    }
    let sup_gap = samples.iter().map(|s| s.gap).fold(0.0, f64::max);
    let slab_gaps = critical_times
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let s = samples
                .iter()
                .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
                .expect("non-empty");
            (j, s.t, s.gap)
        })
        .collect();
    let pass = samples.iter().all(|s| s.gap * s.gap <= s.bound + tolerance);
    Ok(StabilityReport { samples, sup_gap, slab_gaps, tolerance, unresolved, pass })
}

fn state_dist(a: &State, b: &State) -> Result<f64> {
    match (a, b) {
        (State::D2(x), State::D2(y)) if x.n() == y.n() => Ok(x.dist(y)),
        (State::D3(x), State::D3(y)) if x.n_xy() == y.n_xy() && x.n_z() == y.n_z() => Ok(x.dist(y)),
        _ => Err(Error::Input("stability gap needs matching grids".into())),
    }
}

fn top_third_energy(state: &State) -> f64 {
    let (v, nxy, nz) = match state {
        State::D2(g) => (g.values(), g.n(), 1),
        State::D3(g) => (g.values(), g.n_xy(), g.n_z()),
    };
    let c = fft3_forward(v, nxy, nz);
    let cut = nxy as i64 / 3;
    let mut acc = Neumaier::default();
    for (idx, z) in c.iter().enumerate() {
        let (ix, iy) = (idx % nxy, (idx / nxy) % nxy);
        if freq(ix, nxy).abs() > cut || freq(iy, nxy).abs() > cut {
            acc.add(z.norm_sqr());
        }
    }
    acc.total()
}

/// C^∞ bump supported in (a, b) with peak 1 at the midpoint.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailDatum {
    pub a: f64,
    pub b: f64,
}

impl TailDatum {
    pub fn value(&self, z: f64) -> f64 {
        let z = z.rem_euclid(1.0);
        if !(z > self.a && z < self.b) {
            return 0.0;
        }
        let u = (z - self.a) / (self.b - self.a);
        // S(2u) on the rising half, mirrored.
        step(2.0 * u.min(1.0 - u))
    }

    pub fn sample(&self, n: usize) -> Result<ScalarGrid1D> {
        ScalarGrid1D::from_fn(n, |z| self.value(z))
    }
}

/// True when z lies outside (a − c + t, b + c + t) on the circle.
pub fn in_tail_domain(z: f64, a: f64, b: f64, c: f64, t: f64) -> bool {
    let lo = a - c + t;
    let w = (z - lo).rem_euclid(1.0);
    w == 0.0 || w >= b - a + 2.0 * c
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub t: f64,
    pub c: f64,
    pub kappa: f64,
    pub sup: f64,
    pub bound: f64,
    pub margin: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub factor: f64,
    pub rows: Vec<TailRow>,
}

impl TailReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }
}

pub const TAIL_SLACK: f64 = 1e-12;

fn check_tail_geometry(a: f64, b: f64, c: f64) -> Result<()> {
    if !(a < b && c > 0.0 && c + (b - a) < 0.5) {
        return Err(Error::Input(format!(
            "tail check needs a < b, c > 0 and c + (b − a) < 1/2; got a = {a}, b = {b}, c = {c}"
        )));
    }
    Ok(())
}

fn tail_row(sup: f64, sup0: f64, factor: f64, c: f64, kappa: f64, t: f64) -> TailRow {
    let bound = factor * sup0 * (-c * c / (8.0 * kappa * t)).exp();
    let bound = if bound.is_nan() { 0.0 } else { bound };
    TailRow {
        t,
        c,
        kappa,
        sup,
        bound,
        margin: bound + TAIL_SLACK - sup,
        pass: sup <= bound + TAIL_SLACK,
    }
}

/// Evolves ψ0 (supported in (a, b)) by drift–diffusion and compares the sup
/// over the tail domain with factor·‖ψ0‖_∞·e^{−c²/(8κt)}.
pub fn tail_check(
    psi0: &ScalarGrid1D,
    a: f64,
    b: f64,
    c: f64,
    kappa: f64,
    times: &[f64],
    factor: f64,
) -> Result<TailReport> {
    check_tail_geometry(a, b, c)?;
    let n = psi0.n();
    let sup0 = psi0.sup();
    let rows = times
        .iter()
        .map(|&t| {
            let psi = solve_drift_diffusion_1d(psi0, kappa, t);
            let sup = psi
                .values()
                .iter()
                .enumerate()
                .filter(|(i, _)| in_tail_domain(node(*i, n), a, b, c, t))
                .map(|(_, v)| v.abs())
                .fold(0.0, f64::max);
            tail_row(sup, sup0, factor, c, kappa, t)
        })
        .collect();
    Ok(TailReport { factor, rows })
}

/// 3D variant: sup over T² × A_c(t) from the run's snapshots, against
/// factor·‖θ0‖_∞·e^{−c²/(8κt)}.
pub fn tail_check_3d(r: &AdvDiffRun, sup0: f64, a: f64, b: f64, c: f64, factor: f64) -> Result<TailReport> {
    check_tail_geometry(a, b, c)?;
    let mut rows = Vec::new();
    for s in r.snapshots.iter().filter(|s| s.step > 0) {
        let g = s
            .state
            .as_3d()
            .ok_or_else(|| Error::Input("tail_check_3d needs a 3D run".into()))?;
        let nz = g.n_z();
        let sup = (0..nz)
            .filter(|&l| in_tail_domain(node(l, nz), a, b, c, s.t))
            .map(|l| g.slice_values(l).iter().fold(0.0f64, |m, v| m.max(v.abs())))
            .fold(0.0, f64::max);
        rows.push(tail_row(sup, sup0, factor, c, r.kappa, s.t));
    }
    Ok(TailReport { factor, rows })
}

/// ‖ρ_r ⋆ transported − ρ_r ⋆ chess(target_cell)‖_{L²}.
pub fn refinement_error(transported: &ScalarGrid2D, target_cell: f64, moll_r: f64) -> Result<f64> {
    let n = transported.n();
    let target = mollify(&chessboard(target_cell, n)?, moll_r)?;
    Ok(mollify(transported, moll_r)?.dist(&target))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::VelocitySchedule;
    use crate::solver::run_adv_diff_2d;

    #[test]
    fn heat_only_run_balances_and_has_no_outside_mass() {
        let f = ScalarGrid2D::from_fn(32, |x, y| (2.0 * PI * x).sin() + (4.0 * PI * y).cos()).unwrap();
        let r = run_adv_diff_2d(&f, &VelocitySchedule::zero(32), 1e-3, 1.0, 1.0 / 64.0, &SnapshotPlan::none()).unwrap();
        assert!(balance_residual(&r) <= 1e-12 * r.e0());
        let prof = decompose(&r, 0, &[Window { id: 0, lo: 0.0, hi: 1.0 }]);
        assert_eq!(prof.out_window_mass, 0.0);
        assert!(((prof.in_window_mass + prof.out_window_mass) - prof.total).abs() <= 1e-15);
    }

    #[test]
    fn constant_field_keeps_energy_under_filter() {
        let f = ScalarGrid2D::from_fn(64, |_, _| 0.7).unwrap();
        for ell in [0.05, 0.1, 0.3] {
            let e = coarse_grained_energy(&State::D2(f.clone()), ell).unwrap();
            assert!((e - 0.49).abs() < 1e-14);
        }
    }

    #[test]
    fn coarse_graining_is_monotone_on_chessboard() {
        let f = State::D2(chessboard(0.125, 128).unwrap());
        let mut last = f64::INFINITY;
        for ell in [0.02, 0.04, 0.08, 0.16, 0.32] {
            let e = coarse_grained_energy(&f, ell).unwrap();
            assert!(e <= last + 1e-14);
            last = e;
        }
    }

    #[test]
    fn tail_bound_substitution() {
        let r = tail_row(0.0, 1.0, 1.0, 0.1, 1e-3, 0.5);
        assert!((r.bound - 0.082085).abs() < 1e-6);
    }

    #[test]
    fn zero_kappa_tail_is_zero() {
        let d = TailDatum { a: 0.1, b: 0.3 };
        let psi = d.sample(1024).unwrap();
        let rep = tail_check(&psi, 0.1, 0.3, 0.05, 0.0, &[0.25, 0.5], 1.0).unwrap();
        for r in &rep.rows {
            assert!(r.pass);
            assert!(r.sup < 1e-12);
        }
    }

    #[test]
    fn refinement_orthogonality() {
        let g = chessboard(0.125, 256).unwrap();
        assert!(refinement_error(&g, 0.125, 0.02).unwrap() < 1e-12);
        let wrong = refinement_error(&g, 0.25, 0.02).unwrap();
        assert!(wrong > 1.2 && wrong < 1.45, "{wrong}");
    }
}
