//! Smooth partition of unity of the z-circle into slabs of width below
//! a_q^γ/8, with overlaps of adjacent pieces bounded by a_0·a_q^γ.

use serde::{Deserialize, Serialize};

use crate::cascade::CascadeParams;
use crate::error::{Error, Result};
use crate::grid::ScalarGrid1D;
use crate::smooth::{self, STEP_DERIVATIVE_MAX};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    /// z_j = j/N.
    pub cuts: Vec<f64>,
    /// Support length of each χ_j; supp χ_j = (z_j, z_j + width).
    pub width: f64,
    /// Length of the rise and fall transitions (the adjacent overlap).
    pub overlap: f64,
    pub count: usize,
    pub chi: Vec<ScalarGrid1D>,
    /// a_q^γ.
    pub a_gamma: f64,
    pub a0: f64,
    /// Measured C in ‖χ_j‖_{C¹} ≤ C a_0^{−1} a_q^{−γ}.
    pub c1_constant: f64,
    /// Measured C in N_q ≤ C a_q^{−γ}.
    pub count_constant: f64,
}

impl Partition {
    /// χ_j(z) in closed form.
    pub fn chi_value(&self, j: usize, z: f64) -> f64 {
        let u = (z - self.cuts[j]).rem_euclid(1.0);
        if u >= self.width {
            return 0.0;
        }
        let spacing = 1.0 / self.count as f64;
        smooth::step(u / self.overlap) * (1.0 - smooth::step((u - spacing) / self.overlap))
    }

    pub fn centers(&self) -> Vec<f64> {
        self.cuts.iter().map(|z| z + 0.5 * self.width).collect()
    }

    /// Gap between supp χ_j and supp χ_{j+2}.
    pub fn second_neighbour_gap(&self) -> f64 {
        2.0 / self.count as f64 - self.width
    }

    /// Max over j of ‖χ_j‖_{C¹} = sup|χ| + sup|χ'|.
    pub fn c1_norm(&self) -> f64 {
        1.0 + STEP_DERIVATIVE_MAX / self.overlap
    }
}

pub fn partition_of_unity(p: &CascadeParams, q: usize, n: usize) -> Result<Partition> {
    if q > p.q_count {
        return Err(Error::OutOfRange(format!("stage {q} > Q = {}", p.q_count)));
    }
    let a_gamma = (p.gamma * p.ln_a[q]).exp();
    let w_max = a_gamma / 8.0;
    let omega = (4.0 * p.a0).min(0.125);
    let count = (1.0 / (w_max * (1.0 - omega))).ceil() as usize;
    let spacing = 1.0 / count as f64;
    let width = spacing / (1.0 - omega);
    let overlap = omega * width;
    if overlap * (n as f64) < 4.0 {
        return Err(Error::Resolution(format!(
            "partition overlap {overlap} spans fewer than 4 points of n = {n}"
        )));
    }
    let cuts: Vec<f64> = (0..count).map(|j| j as f64 * spacing).collect();
    let mut part = Partition {
        cuts,
        width,
        overlap,
        count,
        chi: Vec::new(),
        a_gamma,
        a0: p.a0,
        c1_constant: 0.0,
        count_constant: count as f64 * a_gamma,
    };
    part.c1_constant = part.c1_norm() * p.a0 * a_gamma;
    part.chi = (0..count)
        .map(|j| ScalarGrid1D::from_fn(n, |z| part.chi_value(j, z)))
        .collect::<Result<_>>()?;
    Ok(part)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cascade::{build_cascade, CascadeInput, DeskOverrides, Mode, Scale, StageDurations, LN_100};

    fn params() -> CascadeParams {
        build_cascade(&CascadeInput {
            alpha: 0.0,
            epsilon: 0.0005,
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
        .unwrap()
    }

    #[test]
    fn sums_to_one_and_respects_supports() {
        let p = params();
        for q in 0..=3 {
            let part = partition_of_unity(&p, q, 1024).unwrap();
            assert!(part.width <= part.a_gamma / 8.0);
            assert!(part.overlap <= p.a0 * part.a_gamma);
            assert!(part.second_neighbour_gap() >= part.a_gamma / 16.0);
            for k in 0..10_000 {
                let z = (k as f64 + 0.37) / 10_000.0;
                let s: f64 = (0..part.count).map(|j| part.chi_value(j, z)).sum();
                assert!((s - 1.0).abs() < 1e-12);
                for j in 0..part.count {
                    let v = part.chi_value(j, z);
                    assert!((0.0..=1.0).contains(&v));
                    let u = (z - part.cuts[j]).rem_euclid(1.0);
                    if v > 0.0 {
                        assert!(u > 0.0 && u < part.a_gamma / 8.0);
                    }
                }
            }
        }
    }
}
