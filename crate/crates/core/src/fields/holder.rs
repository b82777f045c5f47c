//! Sampled Hölder seminorms over stratified dyadic separations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::VelocitySchedule;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleSample {
    pub separation: f64,
    pub sup: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderEstimate {
    pub alpha: f64,
    pub sup: f64,
    pub per_scale: Vec<ScaleSample>,
}

#[derive(Clone, Copy, Debug)]
pub struct HolderSampling {
    pub samples: usize,
    /// Smallest separation probed.
    pub min_separation: f64,
    pub seed: u64,
    /// Base points are drawn with z in this range.
    pub z_range: (f64, f64),
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// sup |f(p) − f(p')| / |p − p'|^α over random pairs with |p − p'| in
/// [s, 2s) for s = 1/2, 1/4, …, down to `min_separation`.
pub fn holder_of<const D: usize>(
    f: impl Fn([f64; 3]) -> [f64; D],
    alpha: f64,
    cfg: HolderSampling,
) -> Result<HolderEstimate> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::Input(format!("alpha = {alpha} must lie in [0,1)")));
    }
    let mut seps = Vec::new();
    let mut s = 0.5;
    while s >= cfg.min_separation * (1.0 - 1e-12) {
        seps.push(s);
        s *= 0.5;
    }
    let per = (cfg.samples / seps.len().max(1)).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut per_scale = Vec::with_capacity(seps.len());
    for &sep in &seps {
        let mut best = 0.0f64;
        for _ in 0..per {
            let p = [
                rng.gen::<f64>(),
                rng.gen::<f64>(),
                cfg.z_range.0 + (cfg.z_range.1 - cfg.z_range.0) * rng.gen::<f64>(),
            ];
            let mut d = [0.0; 3];
            loop {
                for c in d.iter_mut() {
                    *c = 2.0 * rng.gen::<f64>() - 1.0;
                }
                let l = norm(&d);
                if l > 1e-3 && l <= 1.0 {
                    let r = sep * (1.0 + rng.gen::<f64>()) / l;
                    for c in d.iter_mut() {
                        *c *= r;
                    }
                    break;
                }
            }
            let q = [p[0] + d[0], p[1] + d[1], p[2] + d[2]];
            let (u, v) = (f(p), f(q));
            let diff: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a - b).collect();
            best = best.max(norm(&diff) / norm(&d).powf(alpha));
        }
        per_scale.push(ScaleSample { separation: sep, sup: best });
    }
    let sup = per_scale.iter().map(|s| s.sup).fold(0.0, f64::max);
    Ok(HolderEstimate { alpha, sup, per_scale })
}

/// Hölder estimate of the lifted velocity, down to grid scale `1/s.n`.
pub fn holder_seminorm_estimate(
    s: &VelocitySchedule,
    alpha: f64,
    samples: usize,
    seed: u64,
    truncate_at: Option<f64>,
) -> Result<HolderEstimate> {
    if samples < 1000 {
        return Err(Error::Input("Hölder sampling needs at least 1000 samples".into()));
    }
    holder_of(
        |p| s.sample_lifted(p, truncate_at),
        alpha,
        HolderSampling {
            samples,
            min_separation: 1.0 / s.n as f64,
            seed,
            z_range: (0.0, 1.0),
        },
    )
}
