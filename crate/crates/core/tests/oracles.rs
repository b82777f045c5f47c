//! Frozen reference values, computed independently of the library.

use std::f64::consts::PI;

use anomix::cascade::{build_cascade, CascadeInput, DeskOverrides, Mode, Scale, StageDurations, LN_100};
use anomix::diagnostics::{tail_check, TailDatum};
use anomix::grid::ScalarGrid2D;
use anomix::oracle::{analytic_cases, run_suite};
use anomix::solver::heat_step;

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * b.abs()
}

#[test]
fn mode_energy_ratio_matches_frozen_value() {
    let f = ScalarGrid2D::from_fn(64, |x, y| (2.0 * PI * (3.0 * x + 4.0 * y)).cos()).unwrap();
    let (g, _) = heat_step(&f, 1e-3, 0.5);
    assert!(close(g.energy() / f.energy(), 0.37270783885343794, 1e-12));
}

#[test]
fn default_desk_kappas_match_frozen_values() {
    let p = build_cascade(&CascadeInput {
        alpha: 0.0,
        epsilon: 5e-4,
        delta: 0.5,
        a0: Scale::from_value(0.25),
        q_count: 3,
        m: 1,
        mode: Mode::Desk,
        desk: Some(DeskOverrides {
            durations: vec![StageDurations { rest: 1.0 / 64.0, mix: 1.0 / 256.0 }],
            ratios: vec![4],
            window: 4.0,
            decay_budget: LN_100,
        }),
    })
    .unwrap();
    let frozen = [
        0.0018226613051512432,
        0.0001139163315719527,
        7.119770723247044e-06,
        4.4498567020294023e-07,
    ];
    for (k, f) in p.kappa.iter().zip(frozen) {
        assert!(close(*k, f, 1e-14), "{k} vs {f}");
    }
}

#[test]
fn tail_bound_at_the_reference_point() {
    let psi = TailDatum { a: 0.1, b: 0.3 }.sample(4096).unwrap();
    let rep = tail_check(&psi, 0.1, 0.3, 0.1, 1e-3, &[0.5], 1.0).unwrap();
    assert!(close(rep.rows[0].bound, 0.0820849986238988, 1e-12));
    assert!(rep.all_pass());
}

#[test]
fn analytic_suite_passes() {
    let res = run_suite(&analytic_cases()).unwrap();
    let bad: Vec<_> = res.iter().filter(|r| !r.pass).map(|r| &r.name).collect();
    assert!(bad.is_empty(), "{bad:?}");
}
