//! Invariants as properties over random inputs.

use std::f64::consts::PI;

use anomix::cascade::{build_cascade, CascadeInput, DeskOverrides, Mode, Scale, StageDurations, LN_100};
use anomix::diagnostics::{balance_residual, decompose, Window};
use anomix::fields::{build_mixing_stage, chessboard, Axis, ProfileKind, VelocitySchedule};
use anomix::grid::ScalarGrid2D;
use anomix::oracle::stage_contract;
use anomix::solver::{heat_step, run_adv_diff_2d, run_pure_transport, SnapshotPlan, Spectral2D};
use proptest::prelude::*;

fn field(n: usize, c: &[f64; 6]) -> ScalarGrid2D {
    ScalarGrid2D::from_fn(n, |x, y| {
        c[0] * (2.0 * PI * x).sin()
            + c[1] * (2.0 * PI * (3.0 * y + x)).cos()
            + c[2] * (2.0 * PI * 7.0 * x).sin() * (2.0 * PI * 5.0 * y).cos()
            + c[3] * x * (1.0 - x)
            + c[4] * if y < 0.5 { 1.0 } else { -1.0 }
            + c[5]
    })
    .unwrap()
}

fn desk(q: usize, a0_exp: i32) -> CascadeInput {
    CascadeInput {
        alpha: 0.0,
        epsilon: 5e-4,
        delta: 0.5,
        a0: Scale::from_value(2f64.powi(-a0_exp)),
        q_count: q,
        m: 1,
        mode: Mode::Desk,
        desk: Some(DeskOverrides {
            durations: vec![StageDurations { rest: 1.0 / 64.0, mix: 1.0 / 256.0 }],
            ratios: vec![4],
            window: 4.0,
            decay_budget: LN_100,
        }),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn heat_decrement_is_the_energy_drop(c in prop::array::uniform6(-1.0..1.0f64), kappa in 0.0..1e-2f64, dt in 1e-4..0.1f64) {
        let f = field(32, &c);
        let (g, dec) = heat_step(&f, kappa, dt);
        prop_assert!(dec >= 0.0);
        prop_assert!((f.energy() - g.energy() - dec).abs() <= 1e-14 * f.energy().max(1.0));
        prop_assert!((g.mean() - f.mean()).abs() <= 1e-14);
    }

    #[test]
    fn shears_are_unitary(c in prop::array::uniform6(-1.0..1.0f64), amp in -2.0..2.0f64, yshear in any::<bool>()) {
        let n = 32;
        let f = field(n, &c);
        let disp: Vec<f64> = (0..n).map(|j| amp * (2.0 * PI * j as f64 / n as f64).sin()).collect();
        let mut s = Spectral2D::from_grid(&f);
        s.shear(if yshear { Axis::YShearOfX } else { Axis::XShearOfY }, &disp);
        prop_assert!((s.energy() - f.energy()).abs() <= 1e-13 * f.energy().max(1.0));
    }

    #[test]
    fn runs_balance_exactly(c in prop::array::uniform6(-1.0..1.0f64), kexp in -6.0..-2.0f64) {
        let p = build_cascade(&desk(1, 2)).unwrap();
        let n = 64;
        let s = anomix::fields::assemble_velocity_schedule(&p, n, Default::default()).unwrap();
        let f = field(n, &c);
        let r = run_adv_diff_2d(&f, &s, 10f64.powf(kexp), 1.0, 1.0 / 1024.0, &SnapshotPlan::none()).unwrap();
        prop_assert!(balance_residual(&r) <= 1e-12 * r.e0());
        prop_assert!(r.energy.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-14)));
    }

    #[test]
    fn square_stages_refine_exactly(from_exp in 1u32..4, halvings in 1u32..4, seed in any::<u64>()) {
        let (a, b) = (2f64.powi(-(from_exp as i32)), 2f64.powi(-((from_exp + halvings) as i32)));
        let n = 256;
        let stage = build_mixing_stage(a, b, n, ProfileKind::Square).unwrap();
        let rep = stage_contract(&stage, n, 2000, seed);
        prop_assert_eq!(rep.mismatches, 0);
    }

    #[test]
    fn cascades_have_decreasing_kappa_and_contiguous_tiling(q in 1usize..5, a0_exp in 1i32..4) {
        let p = build_cascade(&desk(q, a0_exp)).unwrap();
        prop_assert!(p.kappa.windows(2).all(|w| w[1] < w[0]));
        prop_assert!(p.a.windows(2).all(|w| w[1] < w[0]));
        for iv in &p.intervals {
            prop_assert!(iv.windows(2).all(|w| (w[0].hi - w[1].lo).abs() <= 1e-15));
        }
    }

    #[test]
    fn window_split_is_exact(lo in 0.0..0.9f64, width in 0.0..0.5f64, kexp in -5.0..-2.0f64) {
        let f = field(32, &[0.3, 0.5, 0.2, 0.1, 0.0, 0.0]);
        let r = run_adv_diff_2d(&f, &VelocitySchedule::zero(32), 10f64.powf(kexp), 1.0, 1.0 / 128.0, &SnapshotPlan::none()).unwrap();
        let prof = decompose(&r, 0, &[Window { id: 0, lo, hi: (lo + width).min(1.0) }]);
        prop_assert!((prof.in_window_mass + prof.out_window_mass - prof.total).abs() <= 1e-15 * prof.total.max(1e-300) + 1e-300);
    }
}

#[test]
fn pure_transport_preserves_the_chessboard_values() {
    let p = build_cascade(&desk(2, 2)).unwrap();
    let n = 256;
    let s = anomix::fields::assemble_velocity_schedule(&p, n, Default::default()).unwrap();
    let f = chessboard(p.a[0], n).unwrap();
    let g = run_pure_transport(&f, &s, 1.0).unwrap();
    assert!(g.values().iter().all(|v| v.abs() == 1.0));
    assert_eq!(g.dist(&chessboard(p.a[2], n).unwrap()), 0.0);
}
