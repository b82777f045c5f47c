use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anomix::cascade::{build_cascade, derive, validate_cascade, CascadeParams};
use anomix::diagnostics::{balance_residual, refinement_error, window_decomposition, DissipationProfile};
use anomix::fields::datum::build_initial_datum;
use anomix::fields::{
    assemble_velocity_schedule, build_mixing_stage, chessboard, mollified_chessboard, MixingStage, ProfileKind,
    ScheduleOptions, VelocitySchedule,
};
use anomix::ns4d::{assemble_bundle, convergence_row, cutoff_for, ns_residual, NsResidualReport, PlaneGrid};
use anomix::oracle::stage_contract;
use anomix::smooth::Ramp;
use anomix::solver::{
    run_adv_diff_2d, run_adv_diff_3d, run_pure_transport, AdvDiffRun, DtPolicy, Run3dOptions, SnapshotPlan,
};
use anomix::{Error, Result};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;

/// Process exit status: 0 ok, 1 check failure, 2 input error.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    Fail = 1,
    Input = 2,
}

impl Exit {
    fn worst(self, other: Exit) -> Exit {
        if (other as u8) > (self as u8) {
            other
        } else {
            self
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct GlobalOpts {
    pub out: Option<PathBuf>,
    pub dt_policy: Option<DtPolicy>,
    pub nus: Vec<f64>,
}

fn input_error(e: impl std::fmt::Display) -> Exit {
    eprintln!("error: {e}");
    Exit::Input
}

/// Input-shaped library errors map to exit 2, everything else to 1.
fn classify(e: &Error) -> Exit {
    match e {
        Error::Input(_) | Error::Json(_) => Exit::Input,
        _ => Exit::Fail,
    }
}

fn report_error(e: Error) -> Exit {
    eprintln!("error: {e}");
    classify(&e)
}

fn out_dir(cfg: &RunConfig, g: &GlobalOpts) -> std::io::Result<PathBuf> {
    let d = g
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&d)?;
    Ok(d)
}

fn load(path: &Path) -> std::result::Result<RunConfig, Exit> {
    RunConfig::load(path).map_err(input_error)
}

pub fn params(cfg: &RunConfig) -> Result<CascadeParams> {
    build_cascade(&cfg.cascade.to_input()?)
}

/// Mollified coarse chessboard at cell a0, unit L² norm.
pub fn sweep_datum(p: &CascadeParams, n: usize, moll_frac: f64) -> Result<anomix::grid::ScalarGrid2D> {
    let g = mollified_chessboard(p.a[0], moll_frac * p.a[0], n)?;
    Ok(g.scaled(1.0 / g.l2()))
}

pub fn schedule(p: &CascadeParams, n: usize, kind: ProfileKind) -> Result<VelocitySchedule> {
    assemble_velocity_schedule(
        p,
        n,
        ScheduleOptions {
            kind,
            ramp: Ramp::SmoothBump,
            amplitude_scale: 1.0,
        },
    )
}

pub fn validate_text(text: &str) -> (Exit, String) {
    let cfg = match RunConfig::parse(text) {
        Ok(c) => c,
        Err(e) => return (Exit::Input, format!("error: {e}\n")),
    };
    let input = match cfg.cascade.to_input() {
        Ok(i) => i,
        Err(e) => return (Exit::Input, format!("error: {e}\n")),
    };
    match derive(&input) {
        Ok(p) => {
            let rep = validate_cascade(&p);
            let mut s = rep.to_string();
            if rep.all_pass() {
                s.push_str("valid\n");
                (Exit::Ok, s)
            } else {
                s.push_str(&format!("failed: {}\n", rep.failed().join(", ")));
                (Exit::Fail, s)
            }
        }
        Err(e) => {
            let code = classify(&e);
            (code, format!("error: {e}\n"))
        }
    }
}

pub fn cmd_validate(path: &Path) -> Exit {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => return input_error(e),
    };
    let (code, s) = validate_text(&text);
    print!("{s}");
    code
}

#[derive(Clone, Debug)]
pub struct SweepOutcome {
    pub csv: String,
    pub profiles: Vec<(String, String)>,
    pub errors: Vec<String>,
}

struct SweepItem {
    q: usize,
    kappa: f64,
    file: String,
    result: Result<(AdvDiffRun, DissipationProfile)>,
}

/// All sweep runs; rows keep κ order whatever the pool size.
pub fn run_sweep(cfg: &RunConfig, policy: DtPolicy) -> Result<SweepOutcome> {
    let p = params(cfg)?;
    let n = cfg.grid.n;
    let s = schedule(&p, n, cfg.profile)?;
    let theta0 = sweep_datum(&p, n, cfg.moll_frac)?;
    let matched = cfg.matched().map_err(Error::Input)?;
    let kappas: Vec<(usize, f64, String)> = if matched {
        (0..=p.q_count).map(|q| (q, p.kappa[q], format!("profile_q{q}.csv"))).collect()
    } else {
        let crate::config::KappaSpec::List(list) = &cfg.kappas else { unreachable!() };
        if list.windows(2).any(|w| w[1] > w[0]) || list.iter().any(|&k| !(k > 0.0)) {
            return Err(Error::Input("kappas must be positive and sorted descending".into()));
        }
        list.iter()
            .enumerate()
            .map(|(i, &k)| (p.nearest_stage(k), k, format!("profile_k{i}.csv")))
            .collect()
    };
    let items: Vec<SweepItem> = kappas
        .into_par_iter()
        .map(|(q, kappa, file)| {
            let dt = policy.choose(&p, kappa, n, cfg.dt);
            let result = run_adv_diff_2d(&theta0, &s, kappa, cfg.t_end, dt, &SnapshotPlan::none())
                .and_then(|r| window_decomposition(&r, &p, None).map(|prof| (r, prof)));
            SweepItem { q, kappa, file, result }
        })
        .collect();
    let mut csv =
        String::from("q,kappa,e_end,dissipated_fraction,in_window_mass,out_window_mass,sup_in_window_rate\n");
    let mut profiles = Vec::new();
    let mut errors = Vec::new();
    for it in items {
        match it.result {
            Ok((r, prof)) => {
                csv.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    it.q,
                    it.kappa,
                    r.e_end(),
                    (r.e0() - r.e_end()) / r.e0(),
                    prof.in_window_mass,
                    prof.out_window_mass,
                    prof.sup_in_window_rate
                ));
                let bal = balance_residual(&r);
                if bal > 1e-12 * r.e0() {
                    errors.push(format!("kappa {}: balance residual {bal:e}", it.kappa));
                }
                profiles.push((it.file, prof.to_csv()));
            }
            Err(e) => {
                csv.push_str(&format!("{},{},nan,nan,nan,nan,nan\n", it.q, it.kappa));
                errors.push(format!("kappa {}: {e}", it.kappa));
            }
        }
    }
    Ok(SweepOutcome { csv, profiles, errors })
}

pub fn cmd_sweep(path: &Path, g: &GlobalOpts) -> Exit {
    let cfg = match load(path) {
        Ok(c) => c,
        Err(e) => return e,
    };
    let policy = g.dt_policy.unwrap_or(cfg.dt_policy);
    let out = match out_dir(&cfg, g) {
        Ok(d) => d,
        Err(e) => return input_error(e),
    };
    let res = match run_sweep(&cfg, policy) {
        Ok(r) => r,
        Err(e) => return report_error(e),
    };
    let write = || -> std::io::Result<()> {
        fs::write(out.join("sweep.csv"), &res.csv)?;
        if cfg.diagnostics.profiles {
            for (name, body) in &res.profiles {
                fs::write(out.join(name), body)?;
            }
        }
        if cfg.diagnostics.schedule_json {
            let p = params(&cfg).map_err(std::io::Error::other)?;
            let s = schedule(&p, cfg.grid.n, cfg.profile).map_err(std::io::Error::other)?;
            fs::write(out.join("schedule.json"), s.to_json().map_err(std::io::Error::other)?)?;
        }
        Ok(())
    };
    if let Err(e) = write() {
        eprintln!("error: {e}");
        return Exit::Fail;
    }
    print!("{}", res.csv);
    for e in &res.errors {
        eprintln!("error: {e}");
    }
    if res.errors.is_empty() {
        Exit::Ok
    } else {
        Exit::Fail
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StageCheck {
    pub q: usize,
    pub s_from: f64,
    pub s_to: f64,
    pub points: usize,
    pub mismatches: usize,
    pub mismatch_fraction: f64,
    pub refinement_error: f64,
    pub refinement_n: usize,
    pub pass: bool,
    pub dump: Option<PathBuf>,
}

pub const MIX_POINTS: usize = 100_000;
pub const REFINEMENT_TOL: f64 = 0.05;

/// Grid for the refinement error: doubled from `n` until the mollifier
/// radius spans at least four cells.
pub fn refinement_grid(n: usize, moll_r: f64) -> usize {
    let mut m = n;
    while moll_r * (m as f64) < 4.0 {
        m *= 2;
    }
    m
}

/// The stage as a unit-time schedule, for grid transport.
pub fn stage_schedule_of(stage: &MixingStage, n: usize) -> Result<VelocitySchedule> {
    let k = stage.steps.len().max(1) as f64;
    let steps = stage
        .steps
        .iter()
        .enumerate()
        .map(|(i, s)| s.retimed(i as f64 / k, 1.0 / k))
        .collect();
    VelocitySchedule::from_steps(steps, n)
}

/// Oracle plus refinement error for every stage of the cascade.
pub fn mix_checks(cfg: &RunConfig, dump_dir: Option<&Path>) -> Result<Vec<StageCheck>> {
    let p = params(cfg)?;
    let n = cfg.grid.n_mix;
    let mut out = Vec::new();
    for q in 0..p.q_count {
        let (a, b) = (p.a[q], p.a[q + 1]);
        let stage = if cfg.amplitude_scale == 1.0 {
            match build_mixing_stage(a, b, n, ProfileKind::Square) {
                Ok(s) => s,
                Err(Error::Construction { msg, mismatch }) => {
                    let dump = dump_dir.map(|d| d.join(format!("mismatch_q{q}.raw")));
                    if let Some(path) = &dump {
                        mismatch.write_raw(path)?;
                    }
                    eprintln!("stage {q}: {msg}");
                    out.push(StageCheck {
                        q,
                        s_from: a,
                        s_to: b,
                        points: 0,
                        mismatches: 0,
                        mismatch_fraction: f64::NAN,
                        refinement_error: f64::NAN,
                        refinement_n: n,
                        pass: false,
                        dump,
                    });
                    continue;
                }
                Err(e) => return Err(e),
            }
        } else {
            MixingStage::unchecked(a, b, n, ProfileKind::Square, Ramp::SmoothBump, cfg.amplitude_scale)?
        };
        let rep = stage_contract(&stage, n, MIX_POINTS, cfg.seed ^ (q as u64));
        let n_ref = refinement_grid(n, cfg.moll_frac * b);
        let fine = if n_ref == n {
            stage.clone()
        } else {
            MixingStage::unchecked(a, b, n_ref, ProfileKind::Square, Ramp::SmoothBump, cfg.amplitude_scale)?
        };
        let sched = stage_schedule_of(&fine, n_ref)?;
        let moved = run_pure_transport(&chessboard(a, n_ref)?, &sched, 1.0)?;
        let err = refinement_error(&moved, b, cfg.moll_frac * b)?;
        let pass = rep.mismatches == 0 && err <= REFINEMENT_TOL;
        let dump = if !pass {
            dump_dir.map(|d| d.join(format!("mismatch_q{q}.raw")))
        } else {
            None
        };
        if let Some(path) = &dump {
            anomix::oracle::mismatch_grid(&stage, n).write_raw(path)?;
        }
        out.push(StageCheck {
            q,
            s_from: a,
            s_to: b,
            points: rep.points,
            mismatches: rep.mismatches,
            mismatch_fraction: rep.fraction,
            refinement_error: err,
            refinement_n: n_ref,
            pass,
            dump,
        });
    }
    Ok(out)
}

pub fn cmd_mix_test(path: &Path, g: &GlobalOpts) -> Exit {
    let cfg = match load(path) {
        Ok(c) => c,
        Err(e) => return e,
    };
    let out = match out_dir(&cfg, g) {
        Ok(d) => d,
        Err(e) => return input_error(e),
    };
    let checks = match mix_checks(&cfg, Some(&out)) {
        Ok(c) => c,
        Err(e) => return report_error(e),
    };
    let json = serde_json::to_string_pretty(&checks).expect("plain data");
    if let Err(e) = fs::write(out.join("mix_report.json"), &json) {
        eprintln!("error: {e}");
        return Exit::Fail;
    }
    let mut code = Exit::Ok;
    for c in &checks {
        println!(
            "stage {} {} -> {}: {} / {} mismatches ({:.4}), refinement error {:.3e}  {}",
            c.q,
            c.s_from,
            c.s_to,
            c.mismatches,
            c.points,
            c.mismatch_fraction,
            c.refinement_error,
            if c.pass { "pass" } else { "FAIL" }
        );
        if let Some(d) = &c.dump {
            println!("  mismatch dump: {}", d.display());
        }
        if !c.pass {
            code = code.worst(Exit::Fail);
        }
    }
    code
}

#[derive(Clone, Debug, Serialize)]
pub struct NsCheck {
    pub report: NsResidualReport,
    pub pass: bool,
}

pub const DIV_TOL: f64 = 1e-10;
pub const POWER_TOL: f64 = 1e-8;
pub const DIFF_FACTOR: f64 = 10.0;

/// Substeps at which the scalar residual is sampled.
pub fn ns_sample_steps(steps: usize) -> Vec<usize> {
    (1..=4).map(|i| i * steps / 5).collect()
}

/// 3D scalar run for viscosity ν with the matching truncation.
pub fn ns_theta_run(p: &CascadeParams, s: &VelocitySchedule, cfg: &RunConfig, nu: f64) -> Result<AdvDiffRun> {
    let (nxy, nz) = (cfg.grid.n_xy, cfg.grid.n_z);
    let datum = build_initial_datum(p, s, nxy, nz, cfg.moll_frac)?;
    let dt = 1.0 / nz as f64;
    let steps = (cfg.t_end / dt).round() as usize;
    let mut at = vec![0];
    for k in ns_sample_steps(steps) {
        at.extend([k - 1, k, k + 1]);
    }
    let opts = Run3dOptions {
        truncate_at: cutoff_for(p, nu),
        plan: SnapshotPlan::at(at),
        ..Run3dOptions::default()
    };
    run_adv_diff_3d(&datum.theta_in, s, nu, cfg.t_end, dt, &opts)
}

pub fn ns_checks(cfg: &RunConfig, nus: &[f64]) -> Result<(Vec<NsCheck>, Vec<anomix::ns4d::ForceConvergenceRow>)> {
    let p = params(cfg)?;
    let s = schedule(&p, cfg.grid.n_xy, ProfileKind::Smooth)?;
    let grid = PlaneGrid { n_t: cfg.grid.plane_t, n_z: cfg.grid.plane_z };
    let nus: Vec<f64> = if nus.is_empty() {
        let mut v = vec![0.0];
        v.extend(p.nu.iter().copied());
        v.sort_by(|a, b| b.total_cmp(a));
        v
    } else {
        nus.to_vec()
    };
    if nus.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::Input("viscosities must be sorted descending".into()));
    }
    let mut checks = Vec::new();
    let mut conv = Vec::new();
    for &nu in &nus {
        let run = Arc::new(ns_theta_run(&p, &s, cfg, nu)?);
        let steps = ns_sample_steps(run.steps());
        let b = assemble_bundle(&p, &s, nu, run, grid)?;
        let report = ns_residual(&b, &steps, p.alpha, cfg.seed)?;
        conv.push(convergence_row(&b, &report));
        let mut pass = report.div_residual <= DIV_TOL
            && report.residual_c1 <= DIFF_FACTOR * report.diff_error + 1e-13
            && report.residual_c2 <= DIFF_FACTOR * report.diff_error + 1e-13;
        if nu == 0.0 {
            pass &= report.forcing_power.abs() <= POWER_TOL;
        }
        checks.push(NsCheck { report, pass });
    }
    Ok((checks, conv))
}

pub fn cmd_ns_check(path: &Path, g: &GlobalOpts) -> Exit {
    let cfg = match load(path) {
        Ok(c) => c,
        Err(e) => return e,
    };
    let out = match out_dir(&cfg, g) {
        Ok(d) => d,
        Err(e) => return input_error(e),
    };
    let nus = if g.nus.is_empty() { cfg.nus.clone().unwrap_or_default() } else { g.nus.clone() };
    let (checks, conv) = match ns_checks(&cfg, &nus) {
        Ok(r) => r,
        Err(e) => return report_error(e),
    };
    let reports: Vec<&NsResidualReport> = checks.iter().map(|c| &c.report).collect();
    let json = serde_json::to_string_pretty(&reports).expect("plain data");
    let conv_json = serde_json::to_string_pretty(&conv).expect("plain data");
    if let Err(e) = fs::write(out.join("ns_report.json"), &json)
        .and_then(|_| fs::write(out.join("force_convergence.json"), &conv_json))
    {
        eprintln!("error: {e}");
        return Exit::Fail;
    }
    println!("{json}");
    if checks.iter().all(|c| c.pass) {
        Exit::Ok
    } else {
        Exit::Fail
    }
}
