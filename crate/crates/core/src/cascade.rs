//! Parameter cascade and time schedule.
//!
//! Strict mode follows the asymptotic construction literally and keeps every
//! sequence in log form next to its (possibly underflowed) value. Desk mode
//! keeps the stage structure (one rest interval, three mixing sub-intervals)
//! with user durations, dyadic scale ratios, and diffusivities matched to the
//! scales through a decay budget.

use std::f64::consts::{LN_10, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::partition::Partition;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Strict,
    Desk,
}

/// A positive scale stored as (value, ln value); the value may underflow.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scale {
    pub value: f64,
    pub ln: f64,
}

impl Scale {
    pub fn from_value(v: f64) -> Self {
        Scale { value: v, ln: v.ln() }
    }

    pub fn from_ln(ln: f64) -> Self {
        Scale { value: ln.exp(), ln }
    }

    /// Parses a decimal literal such as `"0.25"` or `"1e-50000"` without
    /// passing through f64 for the exponent.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let (mant, exp) = match s.find(['e', 'E']) {
            Some(k) => (&s[..k], &s[k + 1..]),
            None => (s, "0"),
        };
        let mant: f64 = mant
            .parse()
            .map_err(|_| Error::Input(format!("bad scale literal {s:?}")))?;
        let exp: i64 = exp
            .parse()
            .map_err(|_| Error::Input(format!("bad scale exponent in {s:?}")))?;
        if !(mant > 0.0) || !mant.is_finite() {
            return Err(Error::Input(format!("scale {s:?} must be positive")));
        }
        Ok(Self::from_ln(mant.ln() + exp as f64 * LN_10))
    }
}

/// Half-open time interval (lo, hi].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.hi <= self.lo
    }

    pub fn contains(&self, t: f64) -> bool {
        self.lo < t && t <= self.hi
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageDurations {
    pub rest: f64,
    pub mix: f64,
}

/// Desk-mode schedule. One-element `durations`/`ratios` lists apply to every
/// stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeskOverrides {
    pub durations: Vec<StageDurations>,
    pub ratios: Vec<u64>,
    /// Decay window t̃ shared by all stages.
    pub window: f64,
    /// B in 4π²κ_q t̃ / a_q² = B.
    pub decay_budget: f64,
}

pub const LN_100: f64 = 4.605170185988091;

impl DeskOverrides {
    fn duration(&self, q: usize) -> Option<StageDurations> {
        match self.durations.len() {
            1 => Some(self.durations[0]),
            _ => self.durations.get(q).copied(),
        }
    }

    fn ratio(&self, q: usize) -> Option<u64> {
        match self.ratios.len() {
            1 => Some(self.ratios[0]),
            _ => self.ratios.get(q).copied(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CascadeInput {
    pub alpha: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub a0: Scale,
    pub q_count: usize,
    pub m: u64,
    pub mode: Mode,
    pub desk: Option<DeskOverrides>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CascadeParams {
    pub mode: Mode,
    pub alpha: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub gamma: f64,
    pub a0: f64,
    pub ln_a0: f64,
    pub m: u64,
    #[serde(rename = "Q")]
    pub q_count: usize,
    /// a_q, q = 0..=Q.
    pub a: Vec<f64>,
    pub ln_a: Vec<f64>,
    /// Mixing sub-interval length t_q.
    pub t: Vec<f64>,
    #[serde(with = "crate::serde_ext::vec_f64")]
    pub ln_t: Vec<f64>,
    /// Rest interval length t̄_q.
    pub tbar: Vec<f64>,
    #[serde(with = "crate::serde_ext::vec_f64")]
    pub ln_tbar: Vec<f64>,
    /// Remaining schedule length T_q from the start of stage q.
    #[serde(rename = "T")]
    pub big_t: Vec<f64>,
    #[serde(rename = "ln_T", with = "crate::serde_ext::vec_f64")]
    pub ln_big_t: Vec<f64>,
    /// (I_{q,0}, I_{q,1}, I_{q,2}, I_{q,3}).
    pub intervals: Vec<[Interval; 4]>,
    pub kappa: Vec<f64>,
    pub ln_kappa: Vec<f64>,
    pub nu: Vec<f64>,
    pub t_tilde: Vec<f64>,
    pub ln_t_tilde: Vec<f64>,
    /// a_q / a_{q+1} in desk mode; empty in strict mode.
    pub ratios: Vec<u64>,
    pub decay_budget: Option<f64>,
}

impl CascadeParams {
    pub fn stage_count(&self) -> usize {
        self.q_count
    }

    /// Start of the first stage, 1/2 − T_0.
    pub fn schedule_start(&self) -> f64 {
        0.5 - self.big_t[0]
    }

    /// Index of the matched diffusivity nearest to `kappa` in log distance.
    pub fn nearest_stage(&self, kappa: f64) -> usize {
        let lk = kappa.ln();
        let mut best = (0, f64::INFINITY);
        for (q, &l) in self.ln_kappa.iter().enumerate() {
            let d = (l - lk).abs();
            if d < best.1 {
                best = (q, d);
            }
        }
        best.0
    }
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

fn check_open_unit(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v < 1.0) {
        return Err(Error::Input(format!("{name} = {v} must lie in (0,1)")));
    }
    Ok(())
}

/// Every derived sequence, without checking the constraints.
pub fn derive(input: &CascadeInput) -> Result<CascadeParams> {
    if !(0.0..1.0).contains(&input.alpha) {
        return Err(Error::Input(format!("alpha = {} must lie in [0,1)", input.alpha)));
    }
    check_open_unit("epsilon", input.epsilon)?;
    check_open_unit("delta", input.delta)?;
    if !(input.a0.ln < 0.0) {
        return Err(Error::Input("a0 must lie in (0,1)".into()));
    }
    if input.q_count < 1 {
        return Err(Error::Input("Q must be at least 1".into()));
    }
    if input.m < 1 {
        return Err(Error::Input("m must be at least 1".into()));
    }
    match (input.mode, &input.desk) {
        (Mode::Desk, None) => return Err(Error::Input("desk mode needs a duration table".into())),
        (Mode::Strict, Some(_)) => {
            return Err(Error::Input("duration overrides are only valid in desk mode".into()))
        }
        _ => {}
    }
    match input.mode {
        Mode::Strict => derive_strict(input),
        Mode::Desk => derive_desk(input, input.desk.as_ref().expect("checked")),
    }
}

fn derive_strict(input: &CascadeInput) -> Result<CascadeParams> {
    let (eps, delta) = (input.epsilon, input.delta);
    let gamma = delta / 8.0;
    let qn = input.q_count;
    let ln_quarter = 0.25f64.ln();
    let ln_a_at = |q: usize| input.a0.ln * (1.0 + delta).powi(q as i32);
    let ln_t_at = |q: usize| ln_quarter + gamma * ln_a_at(q);
    let rests = |q: usize| q > 0 && q as u64 % input.m == 0;
    let ln_tbar_at = |q: usize| {
        if rests(q) {
            ln_quarter + (gamma - gamma * delta) * ln_a_at(q)
        } else {
            f64::NEG_INFINITY
        }
    };

    // Tail Σ_{j>Q}(t̄_j + 3t_j) in log form; terms fall doubly exponentially.
    let mut tail_terms = Vec::new();
    let mut j = qn + 1;
    loop {
        let lt = ln_t_at(j);
        tail_terms.push(3f64.ln() + lt);
        tail_terms.push(ln_tbar_at(j));
        let acc = log_sum_exp(&tail_terms);
        let rest_bound = ln_quarter + (gamma - gamma * delta) * ln_a_at(j);
        if (lt < acc - 60.0 && rest_bound < acc - 60.0) || !lt.is_finite() || j > qn + 10_000 {
            break;
        }
        j += 1;
    }
    let ln_tail = log_sum_exp(&tail_terms);

    let ln_a: Vec<f64> = (0..=qn).map(ln_a_at).collect();
    let ln_t: Vec<f64> = (0..=qn).map(ln_t_at).collect();
    let ln_tbar: Vec<f64> = (0..=qn).map(ln_tbar_at).collect();
    let mut ln_big_t = vec![0.0; qn + 1];
    for q in 0..=qn {
        let mut terms = vec![ln_tail];
        for k in q..=qn {
            terms.push(ln_tbar[k]);
            terms.push(3f64.ln() + ln_t[k]);
        }
        ln_big_t[q] = log_sum_exp(&terms);
    }

    let t: Vec<f64> = ln_t.iter().map(|l| l.exp()).collect();
    let tbar: Vec<f64> = ln_tbar.iter().map(|l| l.exp()).collect();
    let mut durations = Vec::with_capacity(4 * (qn + 1));
    for q in 0..=qn {
        durations.extend_from_slice(&[tbar[q], t[q], t[q], t[q]]);
    }
    let (intervals, big_t) = tile(&durations, ln_tail.exp());

    let kexp = 2.0 - gamma / (1.0 + delta) + 10.0 * eps;
    let ln_kappa: Vec<f64> = ln_a.iter().map(|l| kexp * l).collect();
    let ttexp = gamma / (1.0 + delta) - 10.0 * eps;
    let ln_t_tilde: Vec<f64> = ln_a
        .iter()
        .map(|l| 4f64.ln() - eps * delta * input.a0.ln + ttexp * l)
        .collect();
    let kappa: Vec<f64> = ln_kappa.iter().map(|l| l.exp()).collect();

    Ok(CascadeParams {
        mode: Mode::Strict,
        alpha: input.alpha,
        epsilon: eps,
        delta,
        gamma,
        a0: input.a0.value,
        ln_a0: input.a0.ln,
        m: input.m,
        q_count: qn,
        a: ln_a.iter().map(|l| l.exp()).collect(),
        ln_a,
        t,
        ln_t,
        tbar,
        ln_tbar,
        big_t,
        ln_big_t,
        intervals,
        nu: kappa.clone(),
        kappa,
        ln_kappa,
        t_tilde: ln_t_tilde.iter().map(|l| l.exp()).collect(),
        ln_t_tilde,
        ratios: Vec::new(),
        decay_budget: None,
    })
}

/// Tiles (1/2 − T_0, 1/2] with the given sub-interval durations, four per
/// stage, using reverse suffix sums so that adjacent intervals share their
/// endpoint bit-for-bit. Returns the intervals and T_q per stage.
fn tile(durations: &[f64], tail: f64) -> (Vec<[Interval; 4]>, Vec<f64>) {
    let k = durations.len();
    let mut suffix = vec![0.0; k + 1];
    suffix[k] = tail;
    for i in (0..k).rev() {
        suffix[i] = suffix[i + 1] + durations[i];
    }
    let stages = k / 4;
    let mut intervals = Vec::with_capacity(stages);
    let mut big_t = Vec::with_capacity(stages);
    for q in 0..stages {
        let mut iv = [Interval { lo: 0.0, hi: 0.0 }; 4];
        for (i, slot) in iv.iter_mut().enumerate() {
            *slot = Interval {
                lo: 0.5 - suffix[4 * q + i],
                hi: 0.5 - suffix[4 * q + i + 1],
            };
        }
        intervals.push(iv);
        big_t.push(suffix[4 * q]);
    }
    (intervals, big_t)
}

fn derive_desk(input: &CascadeInput, desk: &DeskOverrides) -> Result<CascadeParams> {
    let qn = input.q_count;
    let gamma = input.delta / 8.0;
    let mut ratios = Vec::with_capacity(qn);
    let mut ln_a = vec![input.a0.ln];
    for q in 0..qn {
        let r = desk
            .ratio(q)
            .ok_or_else(|| Error::Input(format!("no scale ratio for stage {q}")))?;
        if r < 2 {
            return Err(Error::Input(format!("ratio {r} for stage {q} must exceed 1")));
        }
        ratios.push(r);
        ln_a.push(ln_a[q] - (r as f64).ln());
    }
    let mut a = vec![input.a0.value];
    for q in 0..qn {
        a.push(a[q] / ratios[q] as f64);
    }

    let mut t = Vec::with_capacity(qn + 1);
    let mut tbar = Vec::with_capacity(qn + 1);
    for q in 0..qn {
        let d = desk
            .duration(q)
            .ok_or_else(|| Error::Input(format!("no durations for stage {q}")))?;
        if !(d.rest >= 0.0 && d.mix > 0.0 && d.rest.is_finite() && d.mix.is_finite()) {
            return Err(Error::Schedule(format!(
                "stage {q}: rest must be ≥ 0 and mix > 0, got {d:?}"
            )));
        }
        t.push(d.mix);
        tbar.push(if q as u64 % input.m == 0 { d.rest } else { 0.0 });
    }
    let mut durations = Vec::with_capacity(4 * qn);
    for q in 0..qn {
        durations.extend_from_slice(&[tbar[q], t[q], t[q], t[q]]);
    }
    let (mut intervals, mut big_t) = tile(&durations, 0.0);
    if !(big_t[0] < 0.5) {
        return Err(Error::Schedule(format!(
            "desk schedule length {} does not fit below 1/2",
            big_t[0]
        )));
    }
    // Terminal stage Q: rest at the finest scale on (1/2, 1], no mixing.
    t.push(0.0);
    tbar.push(0.5);
    big_t.push(0.0);
    intervals.push([
        Interval { lo: 0.5, hi: 1.0 },
        Interval { lo: 1.0, hi: 1.0 },
        Interval { lo: 1.0, hi: 1.0 },
        Interval { lo: 1.0, hi: 1.0 },
    ]);

    if !(desk.window > 0.0) {
        return Err(Error::Input("desk window must be positive".into()));
    }
    let b = desk.decay_budget;
    let ln_norm = (4.0 * PI * PI * desk.window).ln();
    let ln_kappa: Vec<f64> = ln_a.iter().map(|l| b.ln() + 2.0 * l - ln_norm).collect();
    let kappa: Vec<f64> = a.iter().map(|x| b * x * x / (4.0 * PI * PI * desk.window)).collect();

    Ok(CascadeParams {
        mode: Mode::Desk,
        alpha: input.alpha,
        epsilon: input.epsilon,
        delta: input.delta,
        gamma,
        a0: input.a0.value,
        ln_a0: input.a0.ln,
        m: input.m,
        q_count: qn,
        a,
        ln_a,
        ln_t: t.iter().map(|x| x.ln()).collect(),
        t,
        ln_tbar: tbar.iter().map(|x| x.ln()).collect(),
        tbar,
        ln_big_t: big_t.iter().map(|x| x.ln()).collect(),
        big_t,
        intervals,
        nu: kappa.clone(),
        kappa,
        ln_kappa,
        t_tilde: vec![desk.window; qn + 1],
        ln_t_tilde: vec![desk.window.ln(); qn + 1],
        ratios,
        decay_budget: Some(b),
    })
}

/// Derives the cascade and rejects it if any constraint of its mode fails.
pub fn build_cascade(input: &CascadeInput) -> Result<CascadeParams> {
    let p = derive(input)?;
    let report = validate_cascade(&p);
    if let Some(c) = report.checks.iter().find(|c| !c.pass) {
        return Err(Error::Validation {
            constraint: c.name.clone(),
            detail: format!("slack {} ({})", c.slack, c.detail),
        });
    }
    Ok(p)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    /// Signed margin; negative when the check fails.
    pub slack: f64,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub mode: Mode,
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failed(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect()
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "{:<16} {}  slack {:>12.6e}  {}",
                c.name,
                if c.pass { "pass" } else { "FAIL" },
                c.slack,
                c.detail
            )?;
        }
        Ok(())
    }
}

fn check(name: &str, slack: f64, detail: String) -> Check {
    Check {
        name: name.into(),
        pass: slack >= 0.0,
        slack,
        detail,
    }
}

fn strict_check(name: &str, slack: f64, detail: String) -> Check {
    Check {
        name: name.into(),
        pass: slack > 0.0,
        slack,
        detail,
    }
}

/// Evaluates every constraint of the cascade's mode. Total: never errors.
pub fn validate_cascade(p: &CascadeParams) -> ValidationReport {
    let mut checks = Vec::new();
    checks.push(check(
        "gamma",
        if p.gamma == p.delta / 8.0 { 0.0 } else { -(p.gamma - p.delta / 8.0).abs() },
        format!("gamma = {} vs delta/8 = {}", p.gamma, p.delta / 8.0),
    ));
    let (a, e, d) = (p.alpha, p.epsilon, p.delta);
    checks.push(strict_check(
        "P1",
        1.0 - a * (1.0 + e * d) * (1.0 + d) - d / 4.0,
        "1 - alpha(1+eps*delta)(1+delta) - delta/4 > 0".into(),
    ));
    checks.push(check("P2", d * d * d / 200.0 - e, "eps <= delta^3/200".into()));

    let decreasing = p.ln_kappa.windows(2).map(|w| w[0] - w[1]).fold(f64::INFINITY, f64::min);
    checks.push(strict_check(
        "kappa_decreasing",
        decreasing,
        "min_q ln(kappa_q / kappa_{q+1})".into(),
    ));
    checks.push(check("tiling", tiling_slack(p), "stage intervals ordered, contiguous and exact".into()));

    match p.mode {
        Mode::Strict => {
            let s1 = (e * d / 8.0 * p.ln_a0).exp() + (e * d * d * p.ln_a0).exp();
            checks.push(check(
                "a0_smallness",
                1.0 / 20.0 - s1,
                format!("a0^(eps delta/8) + a0^(eps delta^2) = {s1}"),
            ));
            let need = 16.0 / (d * d);
            checks.push(check(
                "m",
                (p.m as f64 - 1.0) - need,
                format!("m - 1 >= 16/delta^2 = {need}"),
            ));
            // T_0 < 1/4 in log form so underflowed schedules still certify.
            let lt0 = p.ln_big_t[0];
            checks.push(strict_check(
                "T0_budget",
                if lt0 == f64::NEG_INFINITY { 0.25 } else { 0.25 - lt0.exp() },
                format!("ln T_0 = {lt0}"),
            ));
        }
        Mode::Desk => {
            let worst = p
                .ratios
                .iter()
                .map(|&r| if r.is_power_of_two() && r % 4 == 0 { 0.0 } else { -1.0 })
                .fold(0.0, f64::min);
            checks.push(check(
                "ratios",
                worst,
                format!("a_q/a_(q+1) powers of two and multiples of 4: {:?}", p.ratios),
            ));
            checks.push(strict_check(
                "schedule_budget",
                0.5 - p.big_t[0],
                format!("T_0 = {} < 1/2", p.big_t[0]),
            ));
            let b = p.decay_budget.unwrap_or(f64::NAN);
            checks.push(check(
                "decay_budget",
                if b.is_nan() { -1.0 } else { b - LN_100 },
                format!("B = {b} >= ln 100"),
            ));
        }
    }
    ValidationReport { mode: p.mode, checks }
}

fn tiling_slack(p: &CascadeParams) -> f64 {
    let stages = match p.mode {
        Mode::Strict => p.q_count + 1,
        Mode::Desk => p.q_count,
    };
    for q in 0..stages {
        let iv = &p.intervals[q];
        if iv[0].lo != 0.5 - p.big_t[q] {
            return -1.0;
        }
        for i in 0..4 {
            if iv[i].hi < iv[i].lo {
                return -1.0;
            }
            if i < 3 && iv[i].hi != iv[i + 1].lo {
                return -1.0;
            }
        }
        let end = if q + 1 < p.big_t.len() { 0.5 - p.big_t[q + 1] } else { iv[3].hi };
        if p.mode == Mode::Desk || q < p.q_count {
            if iv[3].hi != end {
                return -1.0;
            }
        }
    }
    0.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageSchedule {
    pub q: usize,
    pub intervals: [Interval; 4],
    pub kappa: f64,
    pub nu: f64,
    pub t_tilde: f64,
    /// Scale entering the stage and, for q < Q, the scale it mixes down to.
    pub a_from: f64,
    pub a_to: Option<f64>,
    /// t_{q,j} per partition piece, present when a partition is supplied.
    pub critical_times: Vec<f64>,
}

/// Intervals and matched coefficients of stage `q` (0 ≤ q ≤ Q; q = Q is the
/// terminal rest stage in desk mode).
pub fn stage_schedule(p: &CascadeParams, q: usize, part: Option<&Partition>) -> Result<StageSchedule> {
    if q > p.q_count {
        return Err(Error::OutOfRange(format!("stage {q} > Q = {}", p.q_count)));
    }
    let critical_times = match part {
        None => Vec::new(),
        Some(part) => {
            let start = 0.5 - p.big_t[q];
            match p.mode {
                Mode::Strict => {
                    let w = (p.gamma * p.ln_a[q]).exp() / 8.0;
                    part.cuts.iter().map(|z| start - z + w).collect()
                }
                Mode::Desk => part.centers().iter().map(|c| (start - c).max(0.0)).collect(),
            }
        }
    };
    Ok(StageSchedule {
        q,
        intervals: p.intervals[q],
        kappa: p.kappa[q],
        nu: p.nu[q],
        t_tilde: p.t_tilde[q],
        a_from: p.a[q],
        a_to: p.a.get(q + 1).copied(),
        critical_times,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strict(a0: Scale, eps: f64, m: u64) -> CascadeInput {
        CascadeInput {
            alpha: 0.0,
            epsilon: eps,
            delta: 0.5,
            a0,
            q_count: 3,
            m,
            mode: Mode::Strict,
            desk: None,
        }
    }

    #[test]
    fn substitution_examples() {
        let p = derive(&strict(Scale::from_value(0.01), 0.0005, 65)).unwrap();
        assert_eq!(p.gamma, 0.0625);
        assert!((p.kappa[0] - 0.01f64.powf(2.0 - 0.0625 / 1.5 + 0.005)).abs() < 1e-18);
        assert!((p.kappa[0] - 1.184e-4).abs() < 1e-7);
        assert!((p.a[1] - 1e-3).abs() < 1e-15);
        assert!((p.t[0] - 0.18747).abs() < 1e-5);
        assert!((p.intervals[0][1].len() - p.t[0]).abs() < 1e-15);
        assert_eq!(p.tbar[1], 0.0);
    }

    #[test]
    fn tiny_a0_parses_in_log_form() {
        let s = Scale::parse("1e-50000").unwrap();
        assert_eq!(s.value, 0.0);
        assert!((s.ln + 50000.0 * LN_10).abs() < 1e-9);
        let p = build_cascade(&strict(s, 0.0005, 65)).unwrap();
        assert!(p.ln_kappa.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn small_a0_is_rejected_in_strict_mode() {
        let err = build_cascade(&strict(Scale::from_value(0.01), 0.0005, 65)).unwrap_err();
        assert!(matches!(err, Error::Validation { ref constraint, .. } if constraint == "a0_smallness"));
    }

    #[test]
    fn p2_failure_slack() {
        let p = derive(&strict(Scale::from_value(0.01), 0.001, 65)).unwrap();
        let r = validate_cascade(&p);
        let c = r.get("P2").unwrap();
        assert!(!c.pass);
        assert!((c.slack + 0.000375).abs() < 1e-15);
        assert!((r.get("P1").unwrap().slack - (1.0 - 0.125)).abs() < 1e-15);
    }

    #[test]
    fn minimal_m() {
        let ok = derive(&strict(Scale::from_value(0.01), 0.0005, 65)).unwrap();
        let bad = derive(&strict(Scale::from_value(0.01), 0.0005, 64)).unwrap();
        assert!(validate_cascade(&ok).get("m").unwrap().pass);
        assert!(!validate_cascade(&bad).get("m").unwrap().pass);
    }

    fn desk(a0: f64, ratios: Vec<u64>, rest: f64, mix: f64) -> CascadeInput {
        CascadeInput {
            alpha: 0.0,
            epsilon: 0.0005,
            delta: 0.5,
            a0: Scale::from_value(a0),
            q_count: ratios.len(),
            m: 1,
            mode: Mode::Desk,
            desk: Some(DeskOverrides {
                durations: vec![StageDurations { rest, mix }],
                ratios,
                window: 4.0,
                decay_budget: LN_100,
            }),
        }
    }

    #[test]
    fn desk_ratio_check_and_window() {
        let p = build_cascade(&desk(0.125, vec![16, 16], 0.05, 0.02)).unwrap();
        assert!(validate_cascade(&p).get("ratios").unwrap().pass);
        let one = build_cascade(&desk(0.25, vec![4], 0.1, 0.05)).unwrap();
        let iv = one.intervals[0];
        assert!((iv[3].hi - iv[0].lo - 0.25).abs() < 1e-15);
        assert_eq!(iv[3].hi, 0.5);
        assert!(build_cascade(&desk(0.25, vec![6], 0.1, 0.05)).is_err());
        assert!(matches!(
            build_cascade(&desk(0.25, vec![4, 4], 0.2, 0.05)),
            Err(Error::Schedule(_))
        ));
    }

    #[test]
    fn stage_out_of_range() {
        let p = build_cascade(&desk(0.25, vec![4], 0.1, 0.05)).unwrap();
        assert!(stage_schedule(&p, 1, None).is_ok());
        assert!(matches!(stage_schedule(&p, 2, None), Err(Error::OutOfRange(_))));
    }
}
