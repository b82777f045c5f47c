use serde::{Deserialize, Serialize};

use crate::cascade::CascadeParams;

/// Substep selection. `Safe` resolves every schedule sub-interval with 8
/// substeps and keeps the Nyquist heat factor above e^{−30}; `Fast` uses 4
/// and e^{−120}.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DtPolicy {
    #[default]
    Safe,
    Fast,
}

impl DtPolicy {
    fn limits(self) -> (f64, f64) {
        match self {
            DtPolicy::Safe => (8.0, 30.0),
            DtPolicy::Fast => (4.0, 120.0),
        }
    }

    /// Halves `base` until both limits hold. Halving keeps any dyadic
    /// alignment the base already has.
    pub fn choose(self, p: &CascadeParams, kappa: f64, n: usize, base: f64) -> f64 {
        let (per, stiff) = self.limits();
        let min_sub = p
            .intervals
            .iter()
            .flatten()
            .map(|iv| iv.len())
            .filter(|&l| l > 0.0)
            .fold(f64::INFINITY, f64::min);
        let knyq = std::f64::consts::PI * n as f64;
        let mut dt = base;
        while dt > min_sub / per || kappa * dt * knyq * knyq > stiff {
            dt *= 0.5;
        }
        dt
    }
}

impl std::str::FromStr for DtPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "safe" => Ok(DtPolicy::Safe),
            "fast" => Ok(DtPolicy::Fast),
            _ => Err(format!("unknown dt policy {s:?}; expected safe or fast")),
        }
    }
}
