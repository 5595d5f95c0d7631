//! Unit-root and cointegration tests: ADF, Phillips-Perron, residual ADF
//! on a fixed (1, -1) cointegrating vector, and the two-variable Johansen
//! trace test.
//!
//! Every test returns a [`TestReport`]. Designs that cannot be estimated
//! (constant input, exact collinearity, perfect fit) yield a report with
//! `degenerate` set and no statistics.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::linalg::{self, LinalgError, OlsFit};
use crate::series::{self, AnnualSeries, SeriesError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TestError {
    #[error("series too short: need more than {need} observations, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("supports differ: {0}..={1} vs {2}..={3}")]
    Misaligned(i32, i32, i32, i32),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error(transparent)]
    Series(#[from] SeriesError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeterministicSpec {
    None,
    Constant,
    ConstantAndTrend,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    RejectNull,
    FailToReject,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tail {
    /// Reject when the statistic is below the critical value.
    Left,
    /// Reject when the statistic exceeds the critical value.
    Right,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalValue {
    /// Significance level as a fraction (0.01, 0.05, 0.10).
    pub level: f64,
    pub value: f64,
    pub decision: Decision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Statistic {
    pub value: f64,
    pub tail: Tail,
    /// Empty for purely descriptive statistics.
    pub critical_values: Vec<CriticalValue>,
}

impl Statistic {
    fn new(value: f64, tail: Tail, cvs: &[(f64, f64)]) -> Self {
        let critical_values = cvs
            .iter()
            .map(|&(level, cv)| {
                let reject = match tail {
                    Tail::Left => value < cv,
                    Tail::Right => value > cv,
                };
                CriticalValue {
                    level,
                    value: cv,
                    decision: if reject {
                        Decision::RejectNull
                    } else {
                        Decision::FailToReject
                    },
                }
            })
            .collect();
        Self {
            value,
            tail,
            critical_values,
        }
    }

    fn descriptive(value: f64) -> Self {
        Self {
            value,
            tail: Tail::Left,
            critical_values: Vec::new(),
        }
    }

    pub fn decision_at(&self, level: f64) -> Option<Decision> {
        self.critical_values
            .iter()
            .find(|c| (c.level - level).abs() < 1e-12)
            .map(|c| c.decision)
    }

    pub fn rejects_at(&self, level: f64) -> bool {
        self.decision_at(level) == Some(Decision::RejectNull)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub test: String,
    pub label: String,
    pub nobs: usize,
    pub statistics: BTreeMap<String, Statistic>,
    /// Nuisance settings: lag order, bandwidth, deterministic terms.
    pub settings: BTreeMap<String, Value>,
    /// Set when the design could not be estimated.
    pub degenerate: Option<String>,
    /// Johansen only: selected cointegrating rank at 5%.
    pub rank: Option<usize>,
}

impl TestReport {
    fn new(test: &str, label: &str) -> Self {
        Self {
            test: test.to_string(),
            label: label.to_string(),
            nobs: 0,
            statistics: BTreeMap::new(),
            settings: BTreeMap::new(),
            degenerate: None,
            rank: None,
        }
    }

    fn degenerate(mut self, why: impl Into<String>) -> Self {
        self.degenerate = Some(why.into());
        self.statistics.clear();
        self
    }

    fn set(&mut self, key: &str, v: impl Into<Value>) {
        self.settings.insert(key.to_string(), v.into());
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate.is_some()
    }

    pub fn stat(&self, name: &str) -> Option<&Statistic> {
        self.statistics.get(name)
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.statistics.get(name).map(|s| s.value)
    }

    /// Flat key/value record: `stat.<name>`, `cv.<name>.<pct>`,
    /// `decision.<name>.<pct>` and the settings.
    pub fn to_flat(&self) -> Map<String, Value> {
        let mut m = Map::new();
        m.insert("test".into(), self.test.clone().into());
        m.insert("label".into(), self.label.clone().into());
        m.insert("nobs".into(), self.nobs.into());
        m.insert(
            "degenerate".into(),
            self.degenerate.clone().map_or(Value::Null, Value::from),
        );
        if let Some(r) = self.rank {
            m.insert("rank".into(), r.into());
        }
        for (k, v) in &self.settings {
            m.insert(format!("setting.{k}"), v.clone());
        }
        for (name, s) in &self.statistics {
            m.insert(format!("stat.{name}"), json_f64(s.value));
            for c in &s.critical_values {
                let pct = format!("{}pct", (c.level * 100.0).round() as i64);
                m.insert(format!("cv.{name}.{pct}"), json_f64(c.value));
                let d = match c.decision {
                    Decision::RejectNull => "reject_null",
                    Decision::FailToReject => "fail_to_reject",
                };
                m.insert(format!("decision.{name}.{pct}"), d.into());
            }
        }
        m
    }
}

fn json_f64(v: f64) -> Value {
    serde_json::Number::from_f64(v).map_or(Value::Null, Value::Number)
}

// ---------------------------------------------------------------------------
// Critical values

/// MacKinnon (2010) response surfaces for the single-series unit-root
/// t-test: `b0 + b1/T + b2/T^2 + b3/T^3` at 1%, 5%, 10%.
const MACKINNON_TAU: [[[f64; 4]; 3]; 3] = [
    [
        [-2.56574, -2.2358, -3.627, 0.0],
        [-1.94100, -0.2686, -3.365, 31.223],
        [-1.61682, 0.2656, -2.714, 25.364],
    ],
    [
        [-3.43035, -6.5393, -16.786, -79.433],
        [-2.86154, -2.8903, -4.234, -40.040],
        [-2.56677, -1.5384, -2.809, 0.0],
    ],
    [
        [-3.95877, -9.0531, -28.428, -134.155],
        [-3.41049, -4.3904, -9.036, -45.374],
        [-3.12705, -2.5856, -3.925, -22.380],
    ],
];

pub const LEVELS: [f64; 3] = [0.01, 0.05, 0.10];

fn det_index(det: DeterministicSpec) -> usize {
    match det {
        DeterministicSpec::None => 0,
        DeterministicSpec::Constant => 1,
        DeterministicSpec::ConstantAndTrend => 2,
    }
}

/// Finite-sample critical values of the unit-root t-statistic.
pub fn tau_critical_values(det: DeterministicSpec, nobs: usize) -> [(f64, f64); 3] {
    let t = nobs as f64;
    let tab = &MACKINNON_TAU[det_index(det)];
    let mut out = [(0.0, 0.0); 3];
    for (i, b) in tab.iter().enumerate() {
        out[i] = (
            LEVELS[i],
            b[0] + b[1] / t + b[2] / (t * t) + b[3] / (t * t * t),
        );
    }
    out
}

/// Fuller's tables for the normalised-bias statistic `n(rho - 1)`, rows at
/// n = 25, 50, 100, 250, 500, infinity.
const RHO_N: [f64; 6] = [25.0, 50.0, 100.0, 250.0, 500.0, f64::INFINITY];
const RHO_TABLE: [[[f64; 3]; 6]; 3] = [
    [
        [-11.9, -7.3, -5.3],
        [-12.9, -7.7, -5.5],
        [-13.3, -7.9, -5.6],
        [-13.6, -8.0, -5.7],
        [-13.7, -8.0, -5.7],
        [-13.8, -8.1, -5.7],
    ],
    [
        [-17.2, -12.5, -10.2],
        [-18.9, -13.3, -10.7],
        [-19.8, -13.7, -11.0],
        [-20.3, -14.0, -11.2],
        [-20.5, -14.0, -11.2],
        [-20.7, -14.1, -11.3],
    ],
    [
        [-22.5, -17.9, -15.6],
        [-25.7, -19.8, -16.8],
        [-27.4, -20.7, -17.5],
        [-28.4, -21.3, -18.0],
        [-28.9, -21.5, -18.1],
        [-29.5, -21.8, -18.3],
    ],
];

/// Critical values of `n(rho - 1)`, linear in `1/n` between table rows.
pub fn rho_critical_values(det: DeterministicSpec, nobs: usize) -> [(f64, f64); 3] {
    let tab = &RHO_TABLE[det_index(det)];
    let inv = |n: f64| if n.is_infinite() { 0.0 } else { 1.0 / n };
    let x = inv(nobs as f64);
    let mut out = [(0.0, 0.0); 3];
    for lvl in 0..3 {
        let v = if x >= inv(RHO_N[0]) {
            tab[0][lvl]
        } else {
            let mut v = tab[5][lvl];
            for i in 0..5 {
                let (x0, x1) = (inv(RHO_N[i]), inv(RHO_N[i + 1]));
                if x <= x0 && x >= x1 {
                    let w = (x - x1) / (x0 - x1);
                    v = tab[i + 1][lvl] + w * (tab[i][lvl] - tab[i + 1][lvl]);
                    break;
                }
            }
            v
        };
        out[lvl] = (LEVELS[lvl], v);
    }
    out
}

/// Residual-based test with a fixed cointegrating vector, two variables,
/// 50 observations (Engle and Yoo).
pub const CADF_CRITICAL: [(f64, f64); 3] = [(0.01, -4.32), (0.05, -3.67), (0.10, -3.28)];

/// Trace critical values (90%, 95%, 99%) for two variables; index 0 tests
/// rank 0, index 1 tests rank <= 1.
fn trace_critical_values(det: DeterministicSpec) -> Option<[[f64; 3]; 2]> {
    match det {
        DeterministicSpec::None => Some([[10.4741, 12.3212, 16.364], [2.9762, 4.1296, 6.9406]]),
        DeterministicSpec::Constant => {
            Some([[13.4294, 15.4943, 19.9349], [2.7055, 3.8415, 6.6349]])
        }
        DeterministicSpec::ConstantAndTrend => None,
    }
}

// ---------------------------------------------------------------------------
// Regression helpers

/// Relative residual size below which a fit is treated as exact.
const PERFECT_FIT_TOL: f64 = 1e-20;

fn push_det(row: &mut Vec<f64>, det: DeterministicSpec, t: usize) {
    match det {
        DeterministicSpec::None => {}
        DeterministicSpec::Constant => row.push(1.0),
        DeterministicSpec::ConstantAndTrend => {
            row.push(1.0);
            row.push(t as f64 + 1.0);
        }
    }
}

enum RegOutcome {
    Fit(OlsFit),
    Degenerate(String),
}

fn regress(rows: &[Vec<f64>], y: &[f64]) -> Result<RegOutcome, TestError> {
    let n = rows.len();
    let k = rows.first().map_or(0, Vec::len);
    let x = DMatrix::from_fn(n, k, |i, j| rows[i][j]);
    let yv = DVector::from_column_slice(y);
    match linalg::ols(&x, &yv) {
        Ok(f) => {
            let scale = yv.norm_squared().max(x.norm_squared());
            if f.ssr <= PERFECT_FIT_TOL * scale {
                Ok(RegOutcome::Degenerate("regression fits exactly".into()))
            } else {
                Ok(RegOutcome::Fit(f))
            }
        }
        Err(LinalgError::Underdetermined { nobs, cols }) => Err(TestError::TooShort {
            need: cols,
            got: nobs,
        }),
        Err(e) => Ok(RegOutcome::Degenerate(e.to_string())),
    }
}

/// ADF regression rows for augmentation `p` on rows `t_first..` of the
/// differenced series. Column 0 is the lagged level.
fn adf_design(
    x: &[f64],
    p: usize,
    t_first: usize,
    det: DeterministicSpec,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let dx: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for t in t_first..dx.len() {
        let mut r = vec![x[t]];
        for i in 1..=p {
            r.push(dx[t - i]);
        }
        push_det(&mut r, det, t);
        rows.push(r);
        y.push(dx[t]);
    }
    (rows, y)
}

fn aic(f: &OlsFit) -> f64 {
    let n = f.nobs as f64;
    n * (f.ssr / n).ln() + 2.0 * f.k() as f64
}

// ---------------------------------------------------------------------------
// ADF

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LagChoice {
    /// Minimum AIC over `0..=max`, selected on a common sample.
    Aic {
        max: usize,
    },
    Fixed(usize),
}

/// Augmented Dickey-Fuller test with AIC lag selection over `0..=max_lag`.
pub fn adf_test(
    x: &AnnualSeries,
    max_lag: usize,
    det: DeterministicSpec,
) -> Result<TestReport, TestError> {
    adf_with(x, LagChoice::Aic { max: max_lag }, det)
}

pub fn adf_with(
    x: &AnnualSeries,
    lags: LagChoice,
    det: DeterministicSpec,
) -> Result<TestReport, TestError> {
    let max_lag = match lags {
        LagChoice::Aic { max } => max,
        LagChoice::Fixed(p) => p,
    };
    let n = x.len();
    if n <= max_lag + 3 {
        return Err(TestError::TooShort {
            need: max_lag + 3,
            got: n,
        });
    }
    let v = x.values();
    let mut rep = TestReport::new("adf", x.label());
    rep.set("deterministic", serde_json::to_value(det).unwrap());
    rep.set(
        "lag_selection",
        match lags {
            LagChoice::Aic { .. } => "aic",
            LagChoice::Fixed(_) => "fixed",
        },
    );
    rep.set("max_lag", max_lag);

    let chosen = match lags {
        LagChoice::Fixed(p) => p,
        LagChoice::Aic { max } => {
            let mut best: Option<(usize, f64)> = None;
            for p in 0..=max {
                let (rows, y) = adf_design(v, p, max, det);
                match regress(&rows, &y)? {
                    RegOutcome::Fit(f) => {
                        let a = aic(&f);
                        if best.is_none_or(|(_, b)| a < b) {
                            best = Some((p, a));
                        }
                    }
                    RegOutcome::Degenerate(why) => return Ok(rep.degenerate(why)),
                }
            }
            best.map(|b| b.0).unwrap_or(0)
        }
    };
    let (rows, y) = adf_design(v, chosen, chosen, det);
    let fit = match regress(&rows, &y)? {
        RegOutcome::Fit(f) => f,
        RegOutcome::Degenerate(why) => return Ok(rep.degenerate(why)),
    };
    rep.nobs = fit.nobs;
    rep.set("lag", chosen);
    let tau = fit.t_ratio(0);
    rep.statistics.insert(
        "tau".into(),
        Statistic::new(tau, Tail::Left, &tau_critical_values(det, fit.nobs)),
    );
    Ok(rep)
}

// ---------------------------------------------------------------------------
// Phillips-Perron

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    /// `floor(4 (n/100)^(2/9))`.
    Automatic,
    Fixed(usize),
}

pub fn automatic_bandwidth(n: usize) -> usize {
    (4.0 * (n as f64 / 100.0).powf(2.0 / 9.0)).floor() as usize
}

/// Bartlett-kernel long-run variance of `u` with `lags` autocovariances
/// (divisor n).
pub fn bartlett_lrv(u: &[f64], lags: usize) -> f64 {
    let n = u.len() as f64;
    let gamma = |j: usize| u[j..].iter().zip(u).map(|(a, b)| a * b).sum::<f64>() / n;
    let mut s = gamma(0);
    for j in 1..=lags.min(u.len().saturating_sub(1)) {
        s += 2.0 * (1.0 - j as f64 / (lags as f64 + 1.0)) * gamma(j);
    }
    s
}

/// Phillips-Perron `Z_rho` and `Z_t` from the regression of `x(t)` on
/// `x(t-1)` and the deterministic terms.
pub fn pp_test(
    x: &AnnualSeries,
    det: DeterministicSpec,
    bandwidth: Bandwidth,
) -> Result<TestReport, TestError> {
    let n_all = x.len();
    if n_all < 10 {
        return Err(TestError::TooShort {
            need: 9,
            got: n_all,
        });
    }
    let v = x.values();
    let mut rows = Vec::with_capacity(n_all - 1);
    let mut y = Vec::with_capacity(n_all - 1);
    for t in 1..n_all {
        let mut r = vec![v[t - 1]];
        push_det(&mut r, det, t);
        rows.push(r);
        y.push(v[t]);
    }
    let mut rep = TestReport::new("pp", x.label());
    rep.set("deterministic", serde_json::to_value(det).unwrap());
    let fit = match regress(&rows, &y)? {
        RegOutcome::Fit(f) => f,
        RegOutcome::Degenerate(why) => return Ok(rep.degenerate(why)),
    };
    let n = fit.nobs;
    let l = match bandwidth {
        Bandwidth::Automatic => automatic_bandwidth(n),
        Bandwidth::Fixed(l) => l,
    };
    rep.nobs = n;
    rep.set("bandwidth", l);
    rep.set("kernel", "bartlett");
    let nf = n as f64;
    let u = fit.resid.as_slice();
    let gamma0 = u.iter().map(|e| e * e).sum::<f64>() / nf;
    let lambda2 = bartlett_lrv(u, l);
    let s2 = fit.sigma2();
    let se_rho = fit.se(0);
    let rho = fit.coef[0];
    let t_rho = (rho - 1.0) / se_rho;
    let z_rho = nf * (rho - 1.0) - 0.5 * (nf * nf * se_rho * se_rho / s2) * (lambda2 - gamma0);
    let lambda = lambda2.sqrt();
    let z_t = (gamma0 / lambda2).sqrt() * t_rho
        - 0.5 * (lambda2 - gamma0) / lambda * (nf * se_rho / s2.sqrt());
    rep.statistics.insert(
        "z_rho".into(),
        Statistic::new(z_rho, Tail::Left, &rho_critical_values(det, n)),
    );
    rep.statistics.insert(
        "z_t".into(),
        Statistic::new(z_t, Tail::Left, &tau_critical_values(det, n)),
    );
    Ok(rep)
}

// ---------------------------------------------------------------------------
// Residual-based cointegration test

fn check_aligned(a: &AnnualSeries, b: &AnnualSeries) -> Result<(), TestError> {
    if a.start_year() != b.start_year() || a.len() != b.len() {
        return Err(TestError::Misaligned(
            a.start_year(),
            a.end_year(),
            b.start_year(),
            b.end_year(),
        ));
    }
    Ok(())
}

/// Default augmentation search for the residual tests.
pub const CADF_MAX_LAG: usize = 4;

/// Unit-root tests on `measured - predicted` with the cointegrating vector
/// fixed at (1, -1). Reports ADF and PP on the cumulative residual (the
/// cointegration statistics, judged against the residual-test critical
/// values) and on its first difference, the annual residual.
pub fn engle_granger_cadf(
    measured: &AnnualSeries,
    predicted: &AnnualSeries,
) -> Result<TestReport, TestError> {
    check_aligned(measured, predicted)?;
    if measured.len() < 15 {
        return Err(TestError::TooShort {
            need: 14,
            got: measured.len(),
        });
    }
    let resid: Vec<f64> = measured
        .values()
        .iter()
        .zip(predicted.values())
        .map(|(m, p)| m - p)
        .collect();
    let label = format!("{} - {}", measured.label(), predicted.label());
    let mut rep = TestReport::new("cadf", &label);
    rep.set("cointegrating_vector", serde_json::json!([1.0, -1.0]));
    rep.set("deterministic", "constant");
    rep.set("max_lag", CADF_MAX_LAG);
    let scale = measured
        .values()
        .iter()
        .chain(predicted.values())
        .fold(0.0_f64, |a, v| a.max(v.abs()));
    if resid.iter().all(|e| e.abs() <= 1e-14 * scale.max(1.0)) {
        return Ok(rep.degenerate("residual is identically zero"));
    }
    let cum = AnnualSeries::new(
        measured.start_year(),
        resid,
        series::Unit::Cumulative,
        &label,
    )?;
    let ann = cum.diff()?;
    let det = DeterministicSpec::Constant;

    let adf_c = adf_test(&cum, CADF_MAX_LAG, det)?;
    let pp_c = pp_test(&cum, det, Bandwidth::Automatic)?;
    let adf_a = adf_test(&ann, CADF_MAX_LAG, det)?;
    let pp_a = pp_test(&ann, det, Bandwidth::Automatic)?;
    for r in [&adf_c, &pp_c] {
        if let Some(why) = &r.degenerate {
            return Ok(rep.degenerate(why.clone()));
        }
    }
    rep.nobs = adf_c.nobs;
    rep.set("lag", adf_c.settings["lag"].clone());
    rep.set(
        "lag_annual",
        adf_a.settings.get("lag").cloned().unwrap_or(Value::Null),
    );
    rep.set("bandwidth", pp_c.settings["bandwidth"].clone());
    rep.statistics.insert(
        "adf".into(),
        Statistic::new(adf_c.value("tau").unwrap(), Tail::Left, &CADF_CRITICAL),
    );
    rep.statistics.insert(
        "pp_z_t".into(),
        Statistic::new(pp_c.value("z_t").unwrap(), Tail::Left, &CADF_CRITICAL),
    );
    rep.statistics.insert(
        "pp_z_rho".into(),
        Statistic::descriptive(pp_c.value("z_rho").unwrap()),
    );
    if let Some(s) = adf_a.stat("tau") {
        rep.statistics.insert("adf_annual".into(), s.clone());
    }
    if let Some(s) = pp_a.stat("z_rho") {
        rep.statistics.insert("pp_z_rho_annual".into(), s.clone());
    }
    if let Some(s) = pp_a.stat("z_t") {
        rep.statistics.insert("pp_z_t_annual".into(), s.clone());
    }
    Ok(rep)
}

// ---------------------------------------------------------------------------
// Johansen

/// Eigenvalues (descending) and the matching cointegrating vectors of the
/// reduced-rank problem `|l S11 - S10 S00^-1 S01| = 0`.
#[derive(Debug, Clone)]
pub struct JohansenEigen {
    pub eigenvalues: Vec<f64>,
    /// Columns are cointegrating vectors normalised so that `b' S11 b = 1`.
    pub vectors: DMatrix<f64>,
    pub nobs: usize,
}

/// Builds the residual moment matrices and solves the eigenproblem. `None`
/// when a moment matrix is singular.
pub fn johansen_eigen(
    y: &[[f64; 2]],
    max_lag: usize,
    det: DeterministicSpec,
) -> Result<Option<JohansenEigen>, TestError> {
    let k = max_lag;
    if k == 0 {
        return Err(TestError::Invalid("max_lag must be at least 1".into()));
    }
    let n = y.len();
    let dy: Vec<[f64; 2]> = y
        .windows(2)
        .map(|w| [w[1][0] - w[0][0], w[1][1] - w[0][1]])
        .collect();
    // Row t uses dy[t] with lagged differences dy[t-1..t-k+1]; y[t] is the
    // lagged level for dy[t].
    let first = k - 1;
    let t_n = dy.len() - first;
    let ncz = 2 * (k - 1) + usize::from(det == DeterministicSpec::Constant);
    if t_n <= ncz + 2 {
        return Err(TestError::TooShort {
            need: 2 * k + 5,
            got: n,
        });
    }
    let mut r0 = DMatrix::zeros(t_n, 2);
    let mut r1 = DMatrix::zeros(t_n, 2);
    let mut z = DMatrix::zeros(t_n, ncz);
    for (row, t) in (first..dy.len()).enumerate() {
        for c in 0..2 {
            r0[(row, c)] = dy[t][c];
            r1[(row, c)] = y[t][c];
        }
        let mut col = 0;
        for i in 1..k {
            for c in 0..2 {
                z[(row, col)] = dy[t - i][c];
                col += 1;
            }
        }
        if det == DeterministicSpec::Constant {
            z[(row, col)] = 1.0;
        }
    }
    let (r0, r1) = match (linalg::partial_out(&r0, &z), linalg::partial_out(&r1, &z)) {
        (Ok(a), Ok(b)) => (a, b),
        _ => return Ok(None),
    };
    let tf = t_n as f64;
    let s00 = r0.transpose() * &r0 / tf;
    let s11 = r1.transpose() * &r1 / tf;
    let s01 = r0.transpose() * &r1 / tf;
    // Singularity checks on the correlation scale.
    for s in [&s00, &s11] {
        let d = s[(0, 0)] * s[(1, 1)];
        if !(d > 0.0) || (s.determinant() / d) < 1e-12 {
            return Ok(None);
        }
    }
    let Some(l11) = s11.clone().cholesky() else {
        return Ok(None);
    };
    let Some(s00_inv) = s00.clone().try_inverse() else {
        return Ok(None);
    };
    let l_inv = l11.l().try_inverse().expect("cholesky factor invertible");
    let m = &l_inv * s01.transpose() * s00_inv * &s01 * l_inv.transpose();
    let m = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..2).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order
        .iter()
        .map(|&i| eig.eigenvalues[i].clamp(0.0, 1.0 - 1e-15))
        .collect();
    let mut vectors = DMatrix::zeros(2, 2);
    for (c, &i) in order.iter().enumerate() {
        let v = l_inv.transpose() * eig.eigenvectors.column(i);
        vectors.set_column(c, &v);
    }
    Ok(Some(JohansenEigen {
        eigenvalues,
        vectors,
        nobs: t_n,
    }))
}

/// Johansen trace test for a two-variable system. `max_lag` is the VAR
/// order in levels, so the error-correction form carries `max_lag - 1`
/// lagged differences.
pub fn johansen_trace(
    y1: &AnnualSeries,
    y2: &AnnualSeries,
    max_lag: usize,
    det: DeterministicSpec,
) -> Result<TestReport, TestError> {
    check_aligned(y1, y2)?;
    let n = y1.len();
    if n <= 2 * max_lag + 5 {
        return Err(TestError::TooShort {
            need: 2 * max_lag + 5,
            got: n,
        });
    }
    let Some(cv) = trace_critical_values(det) else {
        return Err(TestError::Invalid(
            "trace critical values are embedded for none and constant only".into(),
        ));
    };
    let y: Vec<[f64; 2]> = y1
        .values()
        .iter()
        .zip(y2.values())
        .map(|(&a, &b)| [a, b])
        .collect();
    let mut rep = TestReport::new("johansen", &format!("{} / {}", y1.label(), y2.label()));
    rep.set("deterministic", serde_json::to_value(det).unwrap());
    rep.set("max_lag", max_lag);
    rep.set("lagged_differences", max_lag - 1);
    let Some(e) = johansen_eigen(&y, max_lag, det)? else {
        return Ok(rep.degenerate("singular residual moment matrix"));
    };
    rep.nobs = e.nobs;
    let tf = e.nobs as f64;
    let trace0 = -tf * e.eigenvalues.iter().map(|l| (1.0 - l).ln()).sum::<f64>();
    let trace1 = -tf * (1.0 - e.eigenvalues[1]).ln();
    let levels = [0.10, 0.05, 0.01];
    let cvs = |r: usize| -> Vec<(f64, f64)> { (0..3).map(|i| (levels[i], cv[r][i])).collect() };
    let s0 = Statistic::new(trace0, Tail::Right, &cvs(0));
    let s1 = Statistic::new(trace1, Tail::Right, &cvs(1));
    let rank = if !s0.rejects_at(0.05) {
        0
    } else if !s1.rejects_at(0.05) {
        1
    } else {
        2
    };
    rep.rank = Some(rank);
    rep.statistics.insert("trace_r0".into(), s0);
    rep.statistics.insert("trace_r1".into(), s1);
    rep.statistics.insert(
        "eigenvalue_1".into(),
        Statistic::descriptive(e.eigenvalues[0]),
    );
    rep.statistics.insert(
        "eigenvalue_2".into(),
        Statistic::descriptive(e.eigenvalues[1]),
    );
    let b = e.vectors.column(0);
    if b[0].abs() > 0.0 {
        rep.statistics
            .insert("beta_2".into(), Statistic::descriptive(b[1] / b[0]));
    }
    Ok(rep)
}

// ---------------------------------------------------------------------------
// Monte Carlo

/// Seeded Monte Carlo helpers. Replication `i` draws from a ChaCha stream
/// selected by `i` under the master seed, so results do not depend on how
/// replications are scheduled across threads.
pub mod mc {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};
    use rayon::prelude::*;

    pub fn stream(master_seed: u64, replication: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(replication);
        rng
    }

    /// Runs `reps` replications in parallel and returns their outputs in
    /// replication order.
    pub fn replicate<T, F>(reps: usize, master_seed: u64, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(&mut ChaCha8Rng) -> T + Sync,
    {
        (0..reps as u64)
            .into_par_iter()
            .map(|i| f(&mut stream(master_seed, i)))
            .collect()
    }

    /// Fraction of replications for which `f` returns true.
    pub fn rate<F>(reps: usize, master_seed: u64, f: F) -> f64
    where
        F: Fn(&mut ChaCha8Rng) -> bool + Sync,
    {
        let hits = replicate(reps, master_seed, f)
            .into_iter()
            .filter(|&b| b)
            .count();
        hits as f64 / reps as f64
    }

    pub fn normals(rng: &mut ChaCha8Rng, n: usize, sd: f64) -> Vec<f64> {
        (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                sd * z
            })
            .collect()
    }

    /// Driftless Gaussian random walk starting at zero.
    pub fn random_walk(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        let mut acc = 0.0;
        normals(rng, n, 1.0)
            .into_iter()
            .map(|e| {
                acc += e;
                acc
            })
            .collect()
    }
}
