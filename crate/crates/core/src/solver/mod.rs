//! Exact-substep pseudo-spectral evolution.
//!
//! Heat substeps apply e^{−4π²κ|k|²τ} exactly and record the energy they
//! remove; shear substeps are per-row phase shifts, hence isometries. The
//! energy ledger is therefore a sum of exact heat decrements.

pub mod drift;
pub mod policy;
pub mod residual;
pub mod run2d;
pub mod run3d;
pub mod spectral2d;
pub mod transport;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grid::{ScalarGrid2D, ScalarGrid3D};

pub use drift::{factorized_slab_run, solve_drift_diffusion_1d, FactorizedSlab};
pub use policy::DtPolicy;
pub use run2d::{heat_step, run_adv_diff_2d, shear_step};
pub use run3d::{heat_step_3d, run_adv_diff_3d, Run3dOptions};
pub use spectral2d::{HeatPass, HeatTable, Layout, Spectral2D};
pub use transport::{run_pure_transport, run_pure_transport_3d, transport_closed_form};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum State {
    D2(ScalarGrid2D),
    D3(ScalarGrid3D),
}

impl State {
    pub fn energy(&self) -> f64 {
        match self {
            State::D2(g) => g.energy(),
            State::D3(g) => g.energy(),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            State::D2(g) => g.mean(),
            State::D3(g) => g.mean(),
        }
    }

    pub fn as_2d(&self) -> Option<&ScalarGrid2D> {
        match self {
            State::D2(g) => Some(g),
            State::D3(_) => None,
        }
    }

    pub fn as_3d(&self) -> Option<&ScalarGrid3D> {
        match self {
            State::D3(g) => Some(g),
            State::D2(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub step: usize,
    pub t: f64,
    pub state: State,
}

/// Which substep boundaries to keep full states for. Step 0 is the initial
/// state.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SnapshotPlan {
    pub every: Option<usize>,
    pub at: Vec<usize>,
}

impl SnapshotPlan {
    pub fn none() -> Self {
        SnapshotPlan::default()
    }

    pub fn every(k: usize) -> Self {
        SnapshotPlan { every: Some(k), at: Vec::new() }
    }

    pub fn at(steps: Vec<usize>) -> Self {
        SnapshotPlan { every: None, at: steps }
    }

    pub fn wants(&self, step: usize) -> bool {
        self.every.is_some_and(|k| k > 0 && step % k == 0) || self.at.contains(&step)
    }
}

/// A completed solve. `times`, `energy` and `spectral_rate` are indexed by
/// substep boundary (length steps + 1); `ledger[k]` is the energy removed by
/// the heat parts of substep k.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdvDiffRun {
    pub kappa: f64,
    pub dt: f64,
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    pub ledger: Vec<f64>,
    /// 2κ‖∇θ‖² at each boundary.
    pub spectral_rate: Vec<f64>,
    pub snapshots: Vec<Snapshot>,
    pub final_state: State,
    pub mean0: f64,
    pub mean_end: f64,
    /// Cutoff of the horizontal field in 3D runs.
    pub truncate_at: Option<f64>,
}

impl AdvDiffRun {
    pub fn steps(&self) -> usize {
        self.ledger.len()
    }

    pub fn e0(&self) -> f64 {
        self.energy[0]
    }

    pub fn e_end(&self) -> f64 {
        *self.energy.last().expect("non-empty run")
    }

    pub fn snapshot(&self, step: usize) -> Option<&Snapshot> {
        self.snapshots.iter().find(|s| s.step == step)
    }

    /// Columns t, energy, diss_rate_spectral, cumdiss_ledger.
    pub fn write_series_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "t,energy,diss_rate_spectral,cumdiss_ledger")?;
        let mut cum = crate::sum::Neumaier::default();
        for k in 0..self.times.len() {
            if k > 0 {
                cum.add(self.ledger[k - 1]);
            }
            writeln!(
                w,
                "{},{},{},{}",
                self.times[k],
                self.energy[k],
                self.spectral_rate[k],
                cum.total()
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn step_count(t_end: f64, dt: f64) -> Result<usize> {
    use crate::error::Error;
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Input(format!("dt = {dt} must be positive")));
    }
    if !(0.0..=1.0 + 1e-12).contains(&t_end) {
        return Err(Error::Input(format!("t_end = {t_end} must lie in [0, 1]")));
    }
    let k = (t_end / dt).round();
    if (k * dt - t_end).abs() > 1e-9 * dt.max(t_end) {
        return Err(Error::Schedule(format!("dt = {dt} does not divide t_end = {t_end}")));
    }
    Ok(k as usize)
}
