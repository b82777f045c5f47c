//! Independent references: an explicit upwind finite-difference solver, the
//! exact flow-map transport oracle for mixing stages, and a closed-form case
//! suite.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{tail_check, TailDatum};
use crate::error::{Error, Result};
use crate::fields::{chess_value, Axis, MixingStage, VelocitySchedule};
use crate::grid::{node, ScalarGrid1D, ScalarGrid2D};
use crate::solver::{heat_step, solve_drift_diffusion_1d, step_count, AdvDiffRun, Snapshot, SnapshotPlan, State};
use crate::sum;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MismatchReport {
    pub points: usize,
    pub mismatches: usize,
    pub fraction: f64,
    /// Up to 64 mismatching points, in sample order.
    pub locations: Vec<(f64, f64)>,
}

const MAX_LOCATIONS: usize = 64;

/// Compares pattern ∘ (stage flow)⁻¹ with `target` at every point.
pub fn exact_transport_oracle(
    pattern: impl Fn(f64, f64) -> f64 + Sync,
    target: impl Fn(f64, f64) -> f64 + Sync,
    stage: &MixingStage,
    points: &[(f64, f64)],
) -> MismatchReport {
    let bad: Vec<bool> = points
        .par_iter()
        .map(|&p| {
            let q = stage.pull_back(p);
            pattern(q.0, q.1) != target(p.0, p.1)
        })
        .collect();
    let mismatches = bad.iter().filter(|&&b| b).count();
    let locations = points
        .iter()
        .zip(&bad)
        .filter(|(_, &b)| b)
        .take(MAX_LOCATIONS)
        .map(|(p, _)| *p)
        .collect();
    MismatchReport {
        points: points.len(),
        mismatches,
        fraction: if points.is_empty() { 0.0 } else { mismatches as f64 / points.len() as f64 },
        locations,
    }
}

fn band_distance(x: f64, cell: f64) -> f64 {
    let r = (x / cell).fract() * cell;
    r.min(cell - r)
}

/// Uniform points on T² whose coordinates stay at least `half_band` away
/// from every multiple of `cell`.
/// `half_band` is capped at cell/4 so the accepted set keeps a quarter of
/// the torus.
pub fn sample_off_band(count: usize, cell: f64, half_band: f64, seed: u64) -> Vec<(f64, f64)> {
    let half_band = half_band.min(0.25 * cell);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = Vec::with_capacity(count);
    while pts.len() < count {
        let (x, y): (f64, f64) = (rng.gen(), rng.gen());
        if band_distance(x, cell) >= half_band && band_distance(y, cell) >= half_band {
            pts.push((x, y));
        }
    }
    pts
}

/// The refinement contract: chess(s_from) pulled back through the stage
/// equals chess(s_to), tested off bands of width 2/n around target edges (at most half a cell).
pub fn stage_contract(stage: &MixingStage, n: usize, points: usize, seed: u64) -> MismatchReport {
    let pts = sample_off_band(points, stage.s_to, 1.0 / n as f64, seed);
    let (a, b) = (stage.s_from, stage.s_to);
    exact_transport_oracle(|x, y| chess_value(x, y, a), |x, y| chess_value(x, y, b), stage, &pts)
}

/// 1 at nodes where the pulled-back coarse pattern misses the target.
pub fn mismatch_grid(stage: &MixingStage, n: usize) -> ScalarGrid2D {
    let (a, b) = (stage.s_from, stage.s_to);
    ScalarGrid2D::from_fn(n, |x, y| {
        let q = stage.pull_back((x, y));
        if chess_value(q.0, q.1, a) != chess_value(x, y, b) {
            1.0
        } else {
            0.0
        }
    })
    .expect("power-of-two grid")
}

fn fd_energy(v: &[f64]) -> f64 {
    sum::sum(v.iter().map(|x| x * x)) / v.len() as f64
}

fn fd_grad_sq(v: &[f64], n: usize) -> f64 {
    let h = 1.0 / n as f64;
    let mut acc = sum::Neumaier::default();
    for j in 0..n {
        for i in 0..n {
            let c = v[j * n + i];
            let gx = (v[j * n + (i + 1) % n] - c) / h;
            let gy = (v[((j + 1) % n) * n + i] - c) / h;
            acc.add(gx * gx + gy * gy);
        }
    }
    acc.total() / (n * n) as f64
}

/// Explicit Euler with first-order upwind advection and the 5-point
/// Laplacian. The velocity of substep k is the schedule at t_k.
pub fn fd_reference_run(
    theta0: &ScalarGrid2D,
    s: &VelocitySchedule,
    kappa: f64,
    t_end: f64,
    dt: f64,
    plan: &SnapshotPlan,
) -> Result<AdvDiffRun> {
    let steps = step_count(t_end, dt)?;
    let n = theta0.n();
    let h = 1.0 / n as f64;
    let umax = s
        .steps_between(0.0, t_end)
        .map(|(_, st)| st.peak_speed())
        .fold(0.0, f64::max);
    if umax * dt > 0.5 * h {
        return Err(Error::Cfl(format!("max|u|·dt = {} exceeds h/2 = {}", umax * dt, 0.5 * h)));
    }
    if kappa * dt > 0.25 * h * h {
        return Err(Error::Cfl(format!("κ·dt = {} exceeds h²/4 = {}", kappa * dt, 0.25 * h * h)));
    }
    let weight = dt * (umax / h + 4.0 * kappa / (h * h));
    if weight > 1.0 {
        return Err(Error::Cfl(format!("dt·(max|u|/h + 4κ/h²) = {weight} exceeds 1")));
    }
    let mut cur = theta0.values().to_vec();
    let mut next = vec![0.0; n * n];
    let mut times = vec![0.0];
    let mut energy = vec![fd_energy(&cur)];
    let mut rate = vec![2.0 * kappa * fd_grad_sq(&cur, n)];
    let mut ledger = Vec::with_capacity(steps);
    let mut snapshots = Vec::new();
    if plan.wants(0) {
        snapshots.push(Snapshot { step: 0, t: 0.0, state: State::D2(theta0.clone()) });
    }
    let dif = kappa * dt / (h * h);
    let mut u = vec![0.0; n];
    for k in 0..steps {
        let t = k as f64 * dt;
        let active = s.steps.iter().find(|st| st.t0 <= t && t < st.t1());
        let axis = active.map(|st| st.axis);
        if let Some(st) = active {
            for (j, v) in u.iter_mut().enumerate() {
                *v = st.speed(t, node(j, n));
            }
        }
        next.par_chunks_mut(n).enumerate().for_each(|(j, row)| {
            let (jm, jp) = ((j + n - 1) % n, (j + 1) % n);
            for i in 0..n {
                let (im, ip) = ((i + n - 1) % n, (i + 1) % n);
                let c = cur[j * n + i];
                let (l, r, d, up) = (cur[j * n + im], cur[j * n + ip], cur[jm * n + i], cur[jp * n + i]);
                let mut v = c + dif * (l + r + d + up - 4.0 * c);
                match axis {
                    Some(Axis::XShearOfY) => {
                        let w = u[j] * dt / h;
                        v -= if w > 0.0 { w * (c - l) } else { w * (r - c) };
                    }
                    Some(Axis::YShearOfX) => {
                        let w = u[i] * dt / h;
                        v -= if w > 0.0 { w * (c - d) } else { w * (up - c) };
                    }
                    None => {}
                }
                row[i] = v;
            }
        });
        std::mem::swap(&mut cur, &mut next);
        let e = fd_energy(&cur);
        if !e.is_finite() {
            return Err(Error::NonFinite(t + dt));
        }
        ledger.push(energy[k] - e);
        times.push((k + 1) as f64 * dt);
        energy.push(e);
        rate.push(2.0 * kappa * fd_grad_sq(&cur, n));
        if plan.wants(k + 1) {
            snapshots.push(Snapshot {
                step: k + 1,
                t: (k + 1) as f64 * dt,
                state: State::D2(ScalarGrid2D::new(n, cur.clone())?),
            });
        }
    }
    let fin = ScalarGrid2D::new(n, cur)?;
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
        final_state: State::D2(fin),
        truncate_at: None,
    })
}

/// How a case's computed value is judged against its expectation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    /// |actual − expected| ≤ tolerance·|expected|.
    Relative,
    /// |actual − expected| ≤ tolerance.
    Absolute,
    /// actual ≤ expected + tolerance.
    AtMost,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CaseInput {
    /// Energy ratio of cos(2π(λx + y)) against cos(2π(x + y)) under heat.
    ModeRatio { n: usize, lambda: f64, kappa: f64, t: f64 },
    /// Energy of one Fourier mode under heat, relative to its start.
    ModeDecay { n: usize, kx: i64, ky: i64, kappa: f64, t: f64 },
    /// Max error of the 1D drift–diffusion solver on a periodized Gaussian.
    WrappedGaussian { n: usize, sigma: f64, center: f64, kappa: f64, t: f64 },
    /// Sup outside (a − c + t, b + c + t) of the drift–diffusion bump.
    Tail { n: usize, a: f64, b: f64, c: f64, kappa: f64, t: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleCase {
    pub name: String,
    pub input: CaseInput,
    pub expected: f64,
    pub tolerance: f64,
    pub comparison: Comparison,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub name: String,
    pub expected: f64,
    pub actual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

fn mode_energy_ratio(n: usize, kx: i64, ky: i64, kappa: f64, t: f64) -> f64 {
    let f = ScalarGrid2D::from_fn(n, |x, y| (2.0 * PI * (kx as f64 * x + ky as f64 * y)).cos()).expect("grid");
    let (g, _) = heat_step(&f, kappa, t);
    g.energy() / f.energy()
}

/// Periodized Gaussian of variance σ², by image sum.
pub fn wrapped_gaussian(z: f64, center: f64, sigma2: f64) -> f64 {
    let norm = 1.0 / (2.0 * PI * sigma2).sqrt();
    (-12..=12)
        .map(|m| {
            let d = z - center - m as f64;
            norm * (-d * d / (2.0 * sigma2)).exp()
        })
        .sum()
}

/// The compact bump used by the tail cases.
pub fn tail_bump(a: f64, b: f64) -> TailDatum {
    TailDatum { a, b }
}

/// The closed-form suite: mode decay, λ-rescaling law, wrapped heat kernel
/// and the 5×5×5 tail grid.
pub fn analytic_cases() -> Vec<OracleCase> {
    let mut cases = Vec::new();
    for &(kx, ky) in &[(1i64, 0i64), (3, 0), (2, 5), (8, 8)] {
        for &(kappa, t) in &[(1e-3, 0.5), (1e-2, 0.1)] {
            let k2 = (kx * kx + ky * ky) as f64;
            cases.push(OracleCase {
                name: format!("mode_decay_k{kx}_{ky}_kappa{kappa}_t{t}"),
                input: CaseInput::ModeDecay { n: 64, kx, ky, kappa, t },
                expected: (-8.0 * PI * PI * kappa * k2 * t).exp(),
                tolerance: 1e-10,
                comparison: Comparison::Relative,
            });
        }
    }
    for &lambda in &[2.0, 4.0, 8.0] {
        let (kappa, t) = (1e-3, 0.25);
        cases.push(OracleCase {
            name: format!("rescaled_lambda{lambda}"),
            input: CaseInput::ModeRatio { n: 64, lambda, kappa, t },
            expected: (-8.0 * PI * PI * kappa * (lambda * lambda - 1.0) * t).exp(),
            tolerance: 1e-10,
            comparison: Comparison::Relative,
        });
    }
    for &(kappa, t) in &[(1e-3, 0.5), (1e-2, 1.0), (3e-3, 0.25)] {
        cases.push(OracleCase {
            name: format!("wrapped_gaussian_kappa{kappa}_t{t}"),
            input: CaseInput::WrappedGaussian { n: 1024, sigma: 0.03, center: 0.3, kappa, t },
            expected: 0.0,
            tolerance: 1e-8,
            comparison: Comparison::Absolute,
        });
    }
    let (a, b) = (0.1, 0.3);
    for &c in &TAIL_C {
        for &kappa in &TAIL_KAPPA {
            for &t in &TAIL_T {
                cases.push(OracleCase {
                    name: format!("tail_c{c}_kappa{kappa}_t{t}"),
                    input: CaseInput::Tail { n: 4096, a, b, c, kappa, t },
                    expected: (-c * c / (8.0 * kappa * t)).exp(),
                    tolerance: 1e-12,
                    comparison: Comparison::AtMost,
                });
            }
        }
    }
    cases
}

pub const TAIL_C: [f64; 5] = [0.02, 0.05, 0.1, 0.15, 0.2];
pub const TAIL_KAPPA: [f64; 5] = [1e-4, 3e-4, 1e-3, 3e-3, 1e-2];
pub const TAIL_T: [f64; 5] = [0.0625, 0.125, 0.25, 0.5, 1.0];

pub fn run_case(c: &OracleCase) -> Result<CaseResult> {
    let actual = match c.input {
        CaseInput::ModeDecay { n, kx, ky, kappa, t } => mode_energy_ratio(n, kx, ky, kappa, t),
        CaseInput::ModeRatio { n, lambda, kappa, t } => {
            mode_energy_ratio(n, lambda as i64, 1, kappa, t) / mode_energy_ratio(n, 1, 1, kappa, t)
        }
        CaseInput::WrappedGaussian { n, sigma, center, kappa, t } => {
            let s2 = sigma * sigma;
            let psi0 = ScalarGrid1D::from_fn(n, |z| wrapped_gaussian(z, center, s2))?;
            let out = solve_drift_diffusion_1d(&psi0, kappa, t);
            let var = s2 + 2.0 * kappa * t;
            out.values()
                .iter()
                .enumerate()
                .map(|(i, v)| (v - wrapped_gaussian(node(i, n), center + t, var)).abs())
                .fold(0.0, f64::max)
        }
        CaseInput::Tail { n, a, b, c: cc, kappa, t } => {
            let d = tail_bump(a, b);
            let psi0 = d.sample(n)?;
            let r = tail_check(&psi0, a, b, cc, kappa, &[t], 1.0)?;
            r.rows[0].sup
        }
    };
    let err = actual - c.expected;
    let pass = match c.comparison {
        Comparison::Relative => err.abs() <= c.tolerance * c.expected.abs(),
        Comparison::Absolute => err.abs() <= c.tolerance,
        Comparison::AtMost => err <= c.tolerance,
    };
    Ok(CaseResult {
        name: c.name.clone(),
        expected: c.expected,
        actual,
        tolerance: c.tolerance,
        pass,
    })
}

/// Evaluates cases in parallel; results keep the case order.
pub fn run_suite(cases: &[OracleCase]) -> Result<Vec<CaseResult>> {
    cases.par_iter().map(run_case).collect()
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

pub fn junit_xml(suite: &str, results: &[CaseResult]) -> String {
    let failures = results.iter().filter(|r| !r.pass).count();
    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<testsuite name="{}" tests="{}" failures="{}">"#,
        xml_escape(suite),
        results.len(),
        failures
    );
    for r in results {
        let _ = write!(out, r#"  <testcase classname="{}" name="{}""#, xml_escape(suite), xml_escape(&r.name));
        if r.pass {
            let _ = writeln!(out, "/>");
        } else {
            let _ = writeln!(out, ">");
            let _ = writeln!(
                out,
                r#"    <failure message="expected {:e}, got {:e}, tolerance {:e}"/>"#,
                r.expected, r.actual, r.tolerance
            );
            let _ = writeln!(out, "  </testcase>");
        }
    }
    let _ = writeln!(out, "</testsuite>");
    out
}

pub fn write_junit(path: &Path, suite: &str, results: &[CaseResult]) -> Result<()> {
    fs::write(path, junit_xml(suite, results))?;
    Ok(())
}

pub fn write_results_csv(path: &Path, results: &[CaseResult]) -> Result<()> {
    let mut out = String::from("name,expected,actual,tolerance,pass\n");
    for r in results {
        let _ = writeln!(out, "{},{:e},{:e},{:e},{}", r.name, r.expected, r.actual, r.tolerance, r.pass);
    }
    fs::write(path, out)?;
    Ok(())
}
