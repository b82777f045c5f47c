//! Slab initial datum θ_in = θ_stat·φ_in, with θ_stat(x, y, z) the 2D pure
//! transport of the mollified coarse chessboard up to 2D-time z.

use std::sync::Arc;

use crate::cascade::CascadeParams;
use crate::error::{Error, Result};
use crate::grid::ScalarGrid3D;

use super::{mollified_chess_value, phi_in_value, VelocitySchedule};

/// Closed-form evaluator of the slab datum and of its exact transport.
#[derive(Clone, Debug)]
pub struct SlabDatum {
    pub schedule: Arc<VelocitySchedule>,
    pub cell: f64,
    pub moll_radius: f64,
    /// Factor making the sampled θ_in have unit L² norm.
    pub scale: f64,
}

impl SlabDatum {
    pub fn theta_stat(&self, x: f64, y: f64, z: f64) -> f64 {
        let (px, py) = self.schedule.pull_back((x, y), 0.0, z.rem_euclid(1.0), None);
        mollified_chess_value(px, py, self.cell, self.moll_radius)
    }

    pub fn theta_in(&self, x: f64, y: f64, z: f64) -> f64 {
        let z = z.rem_euclid(1.0);
        let phi = phi_in_value(z);
        if phi == 0.0 {
            return 0.0;
        }
        self.scale * phi * self.theta_stat(x, y, z)
    }

    /// θ_0(t) at (x, y, z): content arrived along the characteristic that left
    /// height z − t at time 0. Horizontal motion only below `cutoff`.
    pub fn transported(&self, x: f64, y: f64, z: f64, t: f64, cutoff: Option<f64>) -> f64 {
        let z0 = z - t;
        let zm = z0.rem_euclid(1.0);
        if phi_in_value(zm) == 0.0 {
            return 0.0;
        }
        let (px, py) = self.schedule.pull_back((x, y), z0, z, cutoff);
        self.theta_in(px, py, zm)
    }

    pub fn transport_grid(&self, t: f64, n_xy: usize, n_z: usize, cutoff: Option<f64>) -> Result<ScalarGrid3D> {
        ScalarGrid3D::from_fn(n_xy, n_z, |x, y, z| self.transported(x, y, z, t, cutoff))
    }
}

#[derive(Clone, Debug)]
pub struct InitialDatum {
    pub theta_in: ScalarGrid3D,
    pub theta_stat: ScalarGrid3D,
    pub slab: SlabDatum,
}

/// Samples θ_stat and θ_in on an n_xy² × n_z grid; `moll_frac` sets the
/// initial mollification radius as a fraction of a_0.
pub fn build_initial_datum(
    p: &CascadeParams,
    s: &VelocitySchedule,
    n_xy: usize,
    n_z: usize,
    moll_frac: f64,
) -> Result<InitialDatum> {
    let finest = p.a[p.q_count] * n_xy as f64;
    if finest < 2.0 - 1e-9 {
        return Err(Error::Resolution(format!(
            "n_xy = {n_xy} cannot resolve a_Q = {}",
            p.a[p.q_count]
        )));
    }
    let mut slab = SlabDatum {
        schedule: Arc::new(s.clone()),
        cell: p.a[0],
        moll_radius: moll_frac * p.a[0],
        scale: 1.0,
    };
    let theta_stat = ScalarGrid3D::from_fn(n_xy, n_z, |x, y, z| slab.theta_stat(x, y, z))?;
    let raw = ScalarGrid3D::from_fn(n_xy, n_z, |x, y, z| slab.theta_in(x, y, z))?;
    slab.scale = 1.0 / raw.l2();
    let theta_in = raw.scaled(slab.scale);
    Ok(InitialDatum {
        theta_in,
        theta_stat,
        slab,
    })
}
