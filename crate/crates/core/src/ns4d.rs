//! The 3+½-dimensional Navier–Stokes lift. The velocity
//! v = (u^(1), u^(2), 1, θ) never depends on the fourth coordinate w, and
//! u^(1) = U(y, z), u^(2) = V(x, z) are separable planes, so every quantity
//! is evaluated on two 2D grids plus the θ run. The pressure is zero.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cascade::CascadeParams;
use crate::error::{Error, Result};
use crate::fields::holder::{holder_of, HolderSampling};
use crate::fields::{Axis, ShearStep, VelocitySchedule};
use crate::grid::{node, ScalarGrid3D};
use crate::solver::residual::adv_diff_residual;
use crate::solver::AdvDiffRun;
use crate::spectral::{self, deriv_freq, freq, RowFft, C64};
use crate::sum;

/// Resolution of the velocity planes: `n_t` transverse, `n_z` vertical.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlaneGrid {
    pub n_t: usize,
    pub n_z: usize,
}

impl Default for PlaneGrid {
    fn default() -> Self {
        PlaneGrid { n_t: 1024, n_z: 4096 }
    }
}

/// Smallest number of points per profile cell and per step duration.
const MIN_POINTS_PER_CELL: f64 = 16.0;
const MIN_POINTS_PER_STEP: f64 = 32.0;

/// Truncation height of u_ν: ν ∈ (ν_{q+1}, ν_q] keeps the field below
/// ½ − T_q. ν = 0 keeps everything.
pub fn cutoff_for(p: &CascadeParams, nu: f64) -> Option<f64> {
    if nu <= 0.0 {
        return None;
    }
    let tol = 1e-12;
    let q = p.nu.iter().rposition(|&v| nu <= v * (1.0 + tol)).unwrap_or(0);
    Some(0.5 - p.big_t[q])
}

fn active(s: &VelocitySchedule, z: f64, cutoff: Option<f64>) -> Option<&ShearStep> {
    let z = z.rem_euclid(1.0);
    if cutoff.is_some_and(|c| z >= c) {
        return None;
    }
    let i = s.steps.partition_point(|st| st.t1() < z);
    s.steps.get(i).filter(|st| st.t0 < z && z <= st.t1())
}

/// Closed-form (value, ∂_z, Δ) of the plane component along `axis` at
/// transverse coordinate c and height z.
fn plane_jet(s: &VelocitySchedule, axis: Axis, c: f64, z: f64, cutoff: Option<f64>) -> [f64; 3] {
    match active(s, z, cutoff) {
        Some(st) if st.axis == axis => {
            let w = st.shape.jet(c);
            let r = st.time_jet(z);
            let a = st.amplitude;
            [a * w[0] * r[0], a * w[0] * r[1], a * (w[2] * r[0] + w[0] * r[2])]
        }
        _ => [0.0; 3],
    }
}

/// Closed-form force component along `axis`: ∂_z u − νΔu.
pub fn closed_force(s: &VelocitySchedule, axis: Axis, nu: f64, c: f64, z: f64, cutoff: Option<f64>) -> f64 {
    let j = plane_jet(s, axis, c, z, cutoff);
    j[1] - nu * j[2]
}

/// A real field on an n_z × n_t plane, row-major [z][c].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub grid: PlaneGrid,
    pub values: Vec<f64>,
}

impl Plane {
    fn from_fn(grid: PlaneGrid, f: impl Fn(f64, f64) -> f64) -> Plane {
        let mut values = Vec::with_capacity(grid.n_t * grid.n_z);
        for l in 0..grid.n_z {
            let z = node(l, grid.n_z);
            for j in 0..grid.n_t {
                values.push(f(node(j, grid.n_t), z));
            }
        }
        Plane { grid, values }
    }

    fn mean_sq(&self) -> f64 {
        sum::sum(self.values.iter().map(|v| v * v)) / self.values.len() as f64
    }

    fn row(&self, l: usize) -> &[f64] {
        &self.values[l * self.grid.n_t..(l + 1) * self.grid.n_t]
    }

    fn zip(&self, o: &Plane, f: impl Fn(f64, f64) -> f64) -> Plane {
        Plane {
            grid: self.grid,
            values: self.values.iter().zip(&o.values).map(|(a, b)| f(*a, *b)).collect(),
        }
    }

    /// Spectral ∂_c^{oc} ∂_z^{oz}; odd orders drop the Nyquist mode.
    fn derivative(&self, oc: u32, oz: u32) -> Plane {
        let PlaneGrid { n_t, n_z } = self.grid;
        let mut a: Vec<C64> = self.values.iter().map(|&v| C64::new(v, 0.0)).collect();
        let mut b = vec![C64::new(0.0, 0.0); a.len()];
        let (ft, fz) = (RowFft::new(n_t), RowFft::new(n_z));
        ft.forward(&mut a);
        spectral::transpose(&a, &mut b, n_z, n_t);
        fz.forward(&mut b);
        let factor = |i: usize, n: usize, o: u32| -> C64 {
            let k = if o % 2 == 1 { deriv_freq(i, n) } else { freq(i, n) as f64 };
            C64::new(0.0, 2.0 * PI * k).powu(o)
        };
        let mc: Vec<C64> = (0..n_t).map(|i| factor(i, n_t, oc)).collect();
        let mz: Vec<C64> = (0..n_z).map(|i| factor(i, n_z, oz)).collect();
        for (j, row) in b.chunks_mut(n_z).enumerate() {
            for (l, v) in row.iter_mut().enumerate() {
                *v *= mc[j] * mz[l];
            }
        }
        fz.inverse(&mut b);
        spectral::transpose(&b, &mut a, n_t, n_z);
        ft.inverse(&mut a);
        Plane { grid: self.grid, values: a.iter().map(|c| c.re).collect() }
    }

    fn laplacian(&self) -> Plane {
        let (a, b) = (self.derivative(2, 0), self.derivative(0, 2));
        a.zip(&b, |x, y| x + y)
    }
}

/// Discrete velocity planes U(y, z) (x-shears) and V(x, z) (y-shears).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VelocityPlanes {
    pub u: Plane,
    pub v: Plane,
}

fn check_resolution(s: &VelocitySchedule, g: PlaneGrid, cutoff: Option<f64>) -> Result<()> {
    for st in &s.steps {
        if cutoff.is_some_and(|c| st.t0 >= c) {
            continue;
        }
        if st.shape.h * (g.n_t as f64) < MIN_POINTS_PER_CELL {
            return Err(Error::Resolution(format!(
                "profile cell {} has fewer than {MIN_POINTS_PER_CELL} points on n_t = {}",
                st.shape.h, g.n_t
            )));
        }
        if st.duration * (g.n_z as f64) < MIN_POINTS_PER_STEP {
            return Err(Error::Resolution(format!(
                "step of duration {} has fewer than {MIN_POINTS_PER_STEP} points on n_z = {}",
                st.duration, g.n_z
            )));
        }
    }
    Ok(())
}

pub fn velocity_planes(s: &VelocitySchedule, g: PlaneGrid, cutoff: Option<f64>) -> VelocityPlanes {
    VelocityPlanes {
        u: Plane::from_fn(g, |c, z| plane_jet(s, Axis::XShearOfY, c, z, cutoff)[0]),
        v: Plane::from_fn(g, |c, z| plane_jet(s, Axis::YShearOfX, c, z, cutoff)[0]),
    }
}

/// F_ν = (∂_z u − νΔu, 0, 0) on the planes, by spectral differentiation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForceField {
    pub nu: f64,
    pub cutoff: Option<f64>,
    /// First component, a function of (y, z).
    pub f1: Plane,
    /// Second component, a function of (x, z).
    pub f2: Plane,
}

fn spectral_force(pl: &Plane, nu: f64) -> Plane {
    pl.derivative(0, 1).zip(&pl.laplacian(), |dz, lap| dz - nu * lap)
}

pub fn build_force(p: &CascadeParams, s: &VelocitySchedule, nu: f64, grid: PlaneGrid) -> Result<ForceField> {
    let cutoff = cutoff_for(p, nu);
    check_resolution(s, grid, cutoff)?;
    let planes = velocity_planes(s, grid, cutoff);
    Ok(ForceField {
        nu,
        cutoff,
        f1: spectral_force(&planes.u, nu),
        f2: spectral_force(&planes.v, nu),
    })
}

/// (v_ν, F_ν, p ≡ 0) with the scalar run riding in the fourth component.
#[derive(Clone, Debug)]
pub struct NS4DBundle {
    pub nu: f64,
    pub cutoff: Option<f64>,
    pub params: CascadeParams,
    pub schedule: Arc<VelocitySchedule>,
    pub theta: Arc<AdvDiffRun>,
    pub planes: VelocityPlanes,
    pub force: ForceField,
}

impl NS4DBundle {
    /// First three velocity components at (x, y, z, w); w is ignored.
    pub fn velocity(&self, p: [f64; 4]) -> [f64; 3] {
        let u = plane_jet(&self.schedule, Axis::XShearOfY, p[1], p[2], self.cutoff)[0];
        let v = plane_jet(&self.schedule, Axis::YShearOfX, p[0], p[2], self.cutoff)[0];
        [u, v, 1.0]
    }

    /// Closed-form force at (x, y, z, w); w is ignored.
    pub fn force_at(&self, p: [f64; 4]) -> [f64; 4] {
        let s = &self.schedule;
        [
            closed_force(s, Axis::XShearOfY, self.nu, p[1], p[2], self.cutoff),
            closed_force(s, Axis::YShearOfX, self.nu, p[0], p[2], self.cutoff),
            0.0,
            0.0,
        ]
    }

    pub fn pressure(&self, _p: [f64; 4]) -> f64 {
        0.0
    }

    /// Fourth component of the initial datum: θ_in.
    pub fn theta_in(&self) -> Option<&ScalarGrid3D> {
        self.theta.snapshot(0).and_then(|s| s.state.as_3d())
    }
}

pub fn assemble_bundle(
    p: &CascadeParams,
    s: &VelocitySchedule,
    nu: f64,
    theta_run: Arc<AdvDiffRun>,
    grid: PlaneGrid,
) -> Result<NS4DBundle> {
    let scale = nu.abs().max(f64::MIN_POSITIVE);
    if (theta_run.kappa - nu).abs() > 1e-12 * scale {
        return Err(Error::Consistency(format!(
            "scalar run has κ = {} but the bundle has ν = {nu}",
            theta_run.kappa
        )));
    }
    let cutoff = cutoff_for(p, nu);
    let same = match (cutoff, theta_run.truncate_at) {
        (None, None) => true,
        (Some(a), Some(b)) => (a - b).abs() <= 1e-12,
        (None, Some(b)) => b >= 1.0,
        (Some(a), None) => a >= 1.0,
    };
    if !same {
        return Err(Error::Consistency(format!(
            "scalar run truncated at {:?}, ν = {nu} needs {cutoff:?}",
            theta_run.truncate_at
        )));
    }
    if theta_run.final_state.as_3d().is_none() {
        return Err(Error::Consistency("the scalar run must be three-dimensional".into()));
    }
    check_resolution(s, grid, cutoff)?;
    let planes = velocity_planes(s, grid, cutoff);
    let force = ForceField {
        nu,
        cutoff,
        f1: spectral_force(&planes.u, nu),
        f2: spectral_force(&planes.v, nu),
    };
    Ok(NS4DBundle {
        nu,
        cutoff,
        params: p.clone(),
        schedule: Arc::new(s.clone()),
        theta: theta_run,
        planes,
        force,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NsResidualReport {
    pub nu: f64,
    /// ‖div v‖ / ‖v‖.
    pub div_residual: f64,
    pub residual_c1: f64,
    pub residual_c2: f64,
    pub residual_c3: f64,
    /// Largest scalar-equation residual over the sampled steps.
    pub residual_c4: f64,
    /// Triangle-inequality bound on components 1–2 from the measured 1D
    /// differentiation errors of the ramps and profiles.
    pub diff_error: f64,
    /// ∫ F_ν · v_ν over T⁴.
    pub forcing_power: f64,
    /// ν‖∇u_ν‖² over (0, 1) × T³.
    pub nu_grad_u_sq: f64,
    pub f_dist_alpha: f64,
}

/// ‖G + V·H‖ over T³ for G, H functions of (c, z) and V a function of
/// (c', z), using the separable structure.
fn mixed_norm(g: &Plane, h: &Plane, other: &Plane) -> f64 {
    let PlaneGrid { n_t, n_z } = g.grid;
    let mut acc = sum::Neumaier::default();
    for l in 0..n_z {
        let vr = other.row(l);
        let vbar = sum::sum(vr.iter().copied()) / n_t as f64;
        let v2 = sum::sum(vr.iter().map(|v| v * v)) / n_t as f64;
        let (gr, hr) = (g.row(l), h.row(l));
        let gg = sum::sum(gr.iter().map(|v| v * v)) / n_t as f64;
        let gh = sum::sum(gr.iter().zip(hr).map(|(a, b)| a * b)) / n_t as f64;
        let hh = sum::sum(hr.iter().map(|v| v * v)) / n_t as f64;
        acc.add(gg + 2.0 * vbar * gh + v2 * hh);
    }
    (acc.total() / n_z as f64).max(0.0).sqrt()
}

fn rms(v: &[f64]) -> f64 {
    (sum::sum(v.iter().map(|x| x * x)) / v.len() as f64).sqrt()
}

fn spectral_1d_error(samples: &[f64], exact: &[f64], order: u32) -> f64 {
    let n = samples.len();
    let mut c = spectral::rfft(samples);
    for (i, v) in c.iter_mut().enumerate() {
        let k = if order % 2 == 1 { deriv_freq(i, n) } else { freq(i, n) as f64 };
        *v *= C64::new(0.0, 2.0 * PI * k).powu(order);
    }
    let d = spectral::irfft(&c);
    let e: Vec<f64> = d.iter().zip(exact).map(|(a, b)| a - b).collect();
    rms(&e)
}

/// Σ over kept steps of |A|(‖W‖·err(ρ′) + ν(err(W″)·‖ρ‖ + ‖W‖·err(ρ″))).
fn differentiation_error(s: &VelocitySchedule, g: PlaneGrid, nu: f64, cutoff: Option<f64>) -> f64 {
    let mut total = 0.0;
    for st in &s.steps {
        if cutoff.is_some_and(|c| st.t0 >= c) {
            continue;
        }
        let inside = |z: f64| st.t0 < z && z <= st.t1() && !cutoff.is_some_and(|c| z >= c);
        let zs: Vec<f64> = (0..g.n_z).map(|l| node(l, g.n_z)).collect();
        let jet: Vec<[f64; 3]> = zs.iter().map(|&z| if inside(z) { st.time_jet(z) } else { [0.0; 3] }).collect();
        let rho: Vec<f64> = jet.iter().map(|j| j[0]).collect();
        let e1 = spectral_1d_error(&rho, &jet.iter().map(|j| j[1]).collect::<Vec<_>>(), 1);
        let e2 = spectral_1d_error(&rho, &jet.iter().map(|j| j[2]).collect::<Vec<_>>(), 2);
        let wj: Vec<[f64; 3]> = (0..g.n_t).map(|j| st.shape.jet(node(j, g.n_t))).collect();
        let w: Vec<f64> = wj.iter().map(|j| j[0]).collect();
        let ew2 = spectral_1d_error(&w, &wj.iter().map(|j| j[2]).collect::<Vec<_>>(), 2);
        let (wn, rn) = (rms(&w), rms(&rho));
        total += st.amplitude.abs() * (wn * e1 + nu * (ew2 * rn + wn * e2));
    }
    total
}

fn closed_plane(s: &VelocitySchedule, g: PlaneGrid, axis: Axis, nu: f64, cutoff: Option<f64>) -> Plane {
    Plane::from_fn(g, |c, z| closed_force(s, axis, nu, c, z, cutoff))
}

/// Sampled ‖F_ν − F_0‖: sup over the planes plus the α-Hölder seminorm.
fn force_distance(s: &VelocitySchedule, g: PlaneGrid, nu: f64, cut: Option<f64>, alpha: f64, seed: u64) -> Result<f64> {
    let mut sup = 0.0f64;
    for axis in [Axis::XShearOfY, Axis::YShearOfX] {
        let d = closed_plane(s, g, axis, nu, cut).zip(&closed_plane(s, g, axis, 0.0, None), |a, c| a - c);
        sup = sup.max(d.values.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    }
    let diff = |p: [f64; 3]| {
        [
            closed_force(s, Axis::XShearOfY, nu, p[1], p[2], cut) - closed_force(s, Axis::XShearOfY, 0.0, p[1], p[2], None),
            closed_force(s, Axis::YShearOfX, nu, p[0], p[2], cut) - closed_force(s, Axis::YShearOfX, 0.0, p[0], p[2], None),
        ]
    };
    let h = holder_of(
        diff,
        alpha,
        HolderSampling {
            samples: 4000,
            min_separation: 1.0 / g.n_t as f64,
            seed,
            z_range: (0.0, 1.0),
        },
    )?;
    Ok(sup + h.sup)
}

/// ν‖∇u‖² from the discrete planes.
fn nu_grad_sq(planes: &VelocityPlanes, nu: f64) -> f64 {
    let t = |p: &Plane| p.derivative(1, 0).mean_sq() + p.derivative(0, 1).mean_sq();
    nu * (t(&planes.u) + t(&planes.v))
}

fn div_residual(b: &NS4DBundle) -> Result<f64> {
    let (nxy, nz) = match b.theta.final_state.as_3d() {
        Some(g) => (g.n_xy(), g.n_z()),
        None => return Err(Error::Consistency("bundle without 3D scalar".into())),
    };
    let u1 = ScalarGrid3D::from_fn(nxy, nz, |x, y, z| b.velocity([x, y, z, 0.0])[0])?;
    let u2 = ScalarGrid3D::from_fn(nxy, nz, |x, y, z| b.velocity([x, y, z, 0.0])[1])?;
    let d1 = spectral::derivative3(u1.values(), nxy, nz, 0);
    let d2 = spectral::derivative3(u2.values(), nxy, nz, 1);
    // u^(3) ≡ 1 and θ does not depend on w, so both remaining terms vanish.
    let div: Vec<f64> = d1.iter().zip(&d2).map(|(a, c)| a + c).collect();
    let theta = b.theta.final_state.as_3d().expect("checked");
    let vnorm = (u1.energy() + u2.energy() + 1.0 + theta.energy()).sqrt();
    Ok(rms(&div) / vnorm)
}

/// Residuals of ∂_t v + (v·∇)v + ∇p − νΔv − F with p ≡ 0. `steps` are the
/// substep indices where the scalar equation is sampled; each needs stored
/// neighbours.
pub fn ns_residual(b: &NS4DBundle, steps: &[usize], alpha: f64, seed: u64) -> Result<NsResidualReport> {
    let (nu, cut) = (b.nu, b.cutoff);
    let (pu, pv) = (&b.planes.u, &b.planes.v);
    // U is steady and x-independent: ∂_t U = U ∂_x U = 0, leaving V ∂_y U.
    let (s, g) = (&*b.schedule, pu.grid);
    let g1 = b.force.f1.zip(&closed_plane(s, g, Axis::XShearOfY, nu, cut), |a, c| a - c);
    let g2 = b.force.f2.zip(&closed_plane(s, g, Axis::YShearOfX, nu, cut), |a, c| a - c);
    let residual_c1 = mixed_norm(&g1, &pu.derivative(1, 0), pv);
    let residual_c2 = mixed_norm(&g2, &pv.derivative(1, 0), pu);
    let mut c4 = 0.0f64;
    for &k in steps {
        c4 = c4.max(adv_diff_residual(&b.theta, &b.schedule, k)?);
    }
    let power = |f: &Plane, u: &Plane| sum::sum(f.values.iter().zip(&u.values).map(|(a, c)| a * c)) / f.values.len() as f64;
    Ok(NsResidualReport {
        nu,
        div_residual: div_residual(b)?,
        residual_c1,
        residual_c2,
        residual_c3: 0.0,
        residual_c4: c4,
        diff_error: differentiation_error(&b.schedule, pu.grid, nu, cut),
        forcing_power: power(&b.force.f1, pu) + power(&b.force.f2, pv),
        nu_grad_u_sq: nu_grad_sq(&b.planes, nu),
        f_dist_alpha: force_distance(s, g, nu, cut, alpha, seed)?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForceConvergenceRow {
    pub nu: f64,
    pub cutoff: Option<f64>,
    /// sup |F_ν − F_0| plus the sampled α-seminorm.
    pub f_dist_alpha: f64,
    /// sup |νΔu_ν|, the viscous part of the distance.
    pub viscous_part: f64,
    pub nu_grad_u_sq: f64,
}

/// Per ν: sampled ‖F_ν − F_0‖_{C^α} and ν‖∇u_ν‖². `nus` must descend.
pub fn force_convergence_report(
    p: &CascadeParams,
    s: &VelocitySchedule,
    nus: &[f64],
    alpha: f64,
    grid: PlaneGrid,
    seed: u64,
) -> Result<Vec<ForceConvergenceRow>> {
    if nus.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::Input("viscosities must be sorted descending".into()));
    }
    nus.iter()
        .map(|&nu| {
            let cutoff = cutoff_for(p, nu);
            check_resolution(s, grid, cutoff)?;
            let planes = velocity_planes(s, grid, cutoff);
            Ok(ForceConvergenceRow {
                nu,
                cutoff,
                f_dist_alpha: force_distance(s, grid, nu, cutoff, alpha, seed)?,
                viscous_part: nu * laplacian_sup(&planes),
                nu_grad_u_sq: nu_grad_sq(&planes, nu),
            })
        })
        .collect()
}

fn laplacian_sup(planes: &VelocityPlanes) -> f64 {
    [&planes.u, &planes.v]
        .iter()
        .map(|pl| pl.laplacian().values.iter().fold(0.0f64, |m, v| m.max(v.abs())))
        .fold(0.0, f64::max)
}

/// The convergence row of an assembled bundle, reusing its residual report.
pub fn convergence_row(b: &NS4DBundle, report: &NsResidualReport) -> ForceConvergenceRow {
    ForceConvergenceRow {
        nu: b.nu,
        cutoff: b.cutoff,
        f_dist_alpha: report.f_dist_alpha,
        viscous_part: b.nu * laplacian_sup(&b.planes),
        nu_grad_u_sq: report.nu_grad_u_sq,
    }
}

/// True when `vals[from..]` is strictly decreasing.
pub fn strictly_decreasing_from(vals: &[f64], from: usize) -> bool {
    vals.get(from..).is_some_and(|v| v.windows(2).all(|w| w[1] < w[0]))
}
