//! Boundary-conditioned least squares on cumulative curves.
//!
//! A model relates an annual rate `y(t)` to lagged annual predictors,
//!
//! ```text
//! y(t) = sum_j b_j x_j(t - lag_j) + a + e(t),
//! ```
//!
//! but the coefficients are estimated on the integrated form. With the
//! observed cumulative curve `Y(t) = sum_{s<=t} y(s)` anchored at the first
//! window year `t0`, the predicted curve is
//!
//! ```text
//! M(t) = Y(t0) + sum_{s=t0+1..t} ( sum_j b_j x_j(s - lag_j) + a ).
//! ```
//!
//! One structural break splits the window into two segments. Segment one is
//! anchored at the observed start value; segment two starts from the last
//! value of segment one (the predicted curve is continuous) and is
//! constrained to hit the observed value at the window end. Lag and break
//! year are found by exhaustive grid search over the objective.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::ingest::{fingerprint, Registry, SeriesEntry, YearWindow};
use crate::linalg::{self, LinalgError};
use crate::series::{self, AnnualSeries, SeriesError, Unit};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("series `{0}` not found")]
    MissingSeries(String),
    #[error("degenerate design: {0}")]
    Degenerate(String),
    #[error("segment too short: {0} points")]
    SegmentTooShort(usize),
    #[error("no feasible (lag, break) cell: {}", .0.join("; "))]
    EmptyGrid(Vec<String>),
    #[error("invalid search: {0}")]
    InvalidSearch(String),
    #[error("negative lag {0} not allowed for this model form")]
    NegativeLag(i32),
    #[error("horizon needs {series} up to {needed}, available to {available}; last forecastable year {last_ok}")]
    HorizonTooLong {
        series: String,
        needed: i32,
        available: i32,
        last_ok: i32,
    },
    #[error("zero slope: threshold undefined")]
    ZeroSlope,
    #[error(transparent)]
    Series(#[from] SeriesError),
}

impl From<LinalgError> for FitError {
    fn from(e: LinalgError) -> Self {
        FitError::Degenerate(e.to_string())
    }
}

/// Status of a predictor coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coefficient {
    Free,
    Pinned(f64),
}

/// How a predictor's lag is set for a grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LagRule {
    /// `grid lag + offset`.
    Searched {
        offset: i32,
    },
    Fixed(i32),
}

impl LagRule {
    pub fn resolve(&self, grid_lag: i32) -> i32 {
        match *self {
            LagRule::Searched { offset } => grid_lag + offset,
            LagRule::Fixed(l) => l,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorSpec {
    pub series: String,
    /// Centred moving-average window applied before lagging.
    pub smooth: usize,
    pub lag: LagRule,
    pub coefficient: Coefficient,
}

impl PredictorSpec {
    pub fn searched(series: &str, smooth: usize) -> Self {
        Self {
            series: series.to_string(),
            smooth,
            lag: LagRule::Searched { offset: 0 },
            coefficient: Coefficient::Free,
        }
    }

    pub fn pinned(mut self, value: f64) -> Self {
        self.coefficient = Coefficient::Pinned(value);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BreakSpec {
    None,
    OneBreak,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelForm {
    pub dependent: String,
    pub predictors: Vec<PredictorSpec>,
    pub breaks: BreakSpec,
    /// Permits negative lags (dependent leading the predictor). Only the
    /// inflation-on-unemployment form uses this.
    pub allow_lead: bool,
    /// Overrides the dataset's model window.
    pub window: Option<YearWindow>,
}

impl ModelForm {
    pub fn single(dependent: &str, predictor: &str, smooth: usize) -> Self {
        Self {
            dependent: dependent.to_string(),
            predictors: vec![PredictorSpec::searched(predictor, smooth)],
            breaks: BreakSpec::OneBreak,
            allow_lead: false,
            window: None,
        }
    }

    pub fn describe(&self) -> String {
        let preds: Vec<String> = self
            .predictors
            .iter()
            .map(|p| {
                let s = if p.smooth > 1 {
                    format!("{}_{}", p.series, p.smooth)
                } else {
                    p.series.clone()
                };
                match p.coefficient {
                    Coefficient::Free => s,
                    Coefficient::Pinned(c) => format!("{c}*{s}"),
                }
            })
            .collect();
        format!("{} ~ {}", self.dependent, preds.join(" + "))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    CumulativeSse,
    AnnualSse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpec {
    /// Inclusive.
    pub lag_grid: (i32, i32),
    /// Inclusive; a candidate is the last year of segment one.
    pub break_grid: (i32, i32),
    pub smoothing_windows: Vec<usize>,
    pub objective: Objective,
}

impl Default for SearchSpec {
    fn default() -> Self {
        Self {
            lag_grid: (0, 10),
            break_grid: (1986, 2003),
            smoothing_windows: vec![1, 3, 5, 7],
            objective: Objective::CumulativeSse,
        }
    }
}

/// Minimum number of years on each side of a break.
pub const MIN_SEGMENT: i32 = 3;

impl SearchSpec {
    pub fn validate(&self, window: (i32, i32), breaks: BreakSpec) -> Result<(), FitError> {
        let (l0, l1) = self.lag_grid;
        if l0 > l1 {
            return Err(FitError::InvalidSearch("empty lag grid".into()));
        }
        if breaks == BreakSpec::OneBreak {
            let (b0, b1) = self.break_grid;
            if b0 > b1 {
                return Err(FitError::InvalidSearch("empty break grid".into()));
            }
            if b0 - window.0 + 1 < MIN_SEGMENT || window.1 - b1 < MIN_SEGMENT {
                return Err(FitError::InvalidSearch(format!(
                    "break grid {b0}..={b1} needs {MIN_SEGMENT} years on each side inside {}..={}",
                    window.0, window.1
                )));
            }
        }
        Ok(())
    }
}

/// Model definition as written in the dataset config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub dependent: String,
    pub predictors: Vec<PredictorConfig>,
    #[serde(default = "default_true")]
    pub breaks: bool,
    #[serde(default)]
    pub allow_lead: bool,
    #[serde(default)]
    pub window: Option<YearWindow>,
    #[serde(default)]
    pub lag_grid: Option<(i32, i32)>,
    #[serde(default)]
    pub break_grid: Option<(i32, i32)>,
    #[serde(default)]
    pub objective: Option<Objective>,
    #[serde(default)]
    pub description: String,
}

fn default_true() -> bool {
    true
}

fn default_one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictorConfig {
    pub series: String,
    #[serde(default = "default_one")]
    pub smooth: usize,
    /// Fixed lag; when absent the lag is searched.
    #[serde(default)]
    pub lag: Option<i32>,
    #[serde(default)]
    pub lag_offset: i32,
    /// Pinned coefficient; when absent the coefficient is estimated.
    #[serde(default)]
    pub coefficient: Option<f64>,
}

impl ModelConfig {
    pub fn validate(&self, series: &BTreeMap<String, SeriesEntry>) -> Result<(), String> {
        let mut names = vec![self.dependent.as_str()];
        names.extend(self.predictors.iter().map(|p| p.series.as_str()));
        for n in names {
            if !series.contains_key(n) {
                return Err(format!("unknown series `{n}`"));
            }
        }
        if self.predictors.is_empty() {
            return Err("no predictors".into());
        }
        for p in &self.predictors {
            if p.smooth == 0 || p.smooth % 2 == 0 {
                return Err(format!("smoothing window {} must be odd", p.smooth));
            }
        }
        Ok(())
    }

    pub fn form(&self) -> ModelForm {
        ModelForm {
            dependent: self.dependent.clone(),
            predictors: self
                .predictors
                .iter()
                .map(|p| PredictorSpec {
                    series: p.series.clone(),
                    smooth: p.smooth,
                    lag: match p.lag {
                        Some(l) => LagRule::Fixed(l),
                        None => LagRule::Searched {
                            offset: p.lag_offset,
                        },
                    },
                    coefficient: match p.coefficient {
                        Some(c) => Coefficient::Pinned(c),
                        None => Coefficient::Free,
                    },
                })
                .collect(),
            breaks: if self.breaks {
                BreakSpec::OneBreak
            } else {
                BreakSpec::None
            },
            allow_lead: self.allow_lead,
            window: self.window,
        }
    }

    /// Search spec with this model's overrides applied on top of `base`.
    pub fn search(&self, base: &SearchSpec) -> SearchSpec {
        let mut s = base.clone();
        if let Some(g) = self.lag_grid {
            s.lag_grid = g;
        }
        if let Some(g) = self.break_grid {
            s.break_grid = g;
        }
        if let Some(o) = self.objective {
            s.objective = o;
        }
        s
    }
}

// ---------------------------------------------------------------------------
// Cumulative solution and single-segment fit

/// `anchor + slope * sum_{s<=t} x(s) + intercept * (t - t0)` with `t0` the
/// year before the predictor's first year.
pub fn cumulative_solution(
    predictor: &AnnualSeries,
    slope: f64,
    intercept: f64,
    anchor: f64,
) -> AnnualSeries {
    let mut acc = anchor;
    let values = predictor
        .values()
        .iter()
        .map(|&x| {
            acc += slope * x + intercept;
            acc
        })
        .collect();
    AnnualSeries::new(
        predictor.start_year(),
        values,
        Unit::Cumulative,
        "cumulative solution",
    )
    .expect("predictor is non-empty and finite")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Boundary {
    pub fix_start: bool,
    pub fix_end: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentFit {
    pub slope: f64,
    pub intercept: f64,
    /// Predicted cumulative value at the segment's first year.
    pub anchor: f64,
    pub sse: f64,
}

/// Where a piece's predicted curve starts.
#[derive(Debug, Clone, Copy)]
enum Anchor {
    /// Predicted value at `base` is given; rows start at `base + 1`.
    Fixed(f64),
    /// Predicted value at `base` is a free parameter; rows start at `base`.
    Free,
}

struct PieceFit {
    /// Free predictor coefficients followed by the intercept.
    coefs: Vec<f64>,
    /// Predicted value at `base`.
    anchor: f64,
}

/// Fits one piece of the predicted cumulative curve.
///
/// `xs[j][i]` is predictor `j` at window index `i`; `cum[i]` the observed
/// cumulative curve. Rows cover `base..=last` (window indices).
fn fit_piece(
    xs: &[Vec<f64>],
    cum: &[f64],
    coefs: &[Coefficient],
    base: usize,
    last: usize,
    anchor: Anchor,
    fix_end: bool,
) -> Result<PieceFit, FitError> {
    let free: Vec<usize> = (0..xs.len())
        .filter(|&j| coefs[j] == Coefficient::Free)
        .collect();
    let free_anchor = matches!(anchor, Anchor::Free);
    let first_row = if free_anchor { base } else { base + 1 };
    if last < first_row {
        return Err(FitError::SegmentTooShort(last + 1 - base));
    }
    let n = last + 1 - first_row;
    let k = free.len() + 1 + usize::from(free_anchor);
    let needed = k - usize::from(fix_end);
    if n < needed.max(1) {
        return Err(FitError::SegmentTooShort(last + 1 - base));
    }
    let base_val = match anchor {
        Anchor::Fixed(v) => v,
        Anchor::Free => 0.0,
    };

    let mut z = DMatrix::zeros(n, k);
    let mut y = DVector::zeros(n);
    let mut run = vec![0.0; xs.len()];
    let mut steps = 0.0;
    for (r, i) in (first_row..=last).enumerate() {
        if i > base {
            for (j, xj) in xs.iter().enumerate() {
                run[j] += xj[i];
            }
            steps += 1.0;
        }
        let mut target = cum[i] - base_val;
        for (j, c) in coefs.iter().enumerate() {
            if let Coefficient::Pinned(v) = c {
                target -= v * run[j];
            }
        }
        y[r] = target;
        for (c, &j) in free.iter().enumerate() {
            z[(r, c)] = run[j];
        }
        z[(r, free.len())] = steps;
        if free_anchor {
            z[(r, free.len() + 1)] = 1.0;
        }
    }
    let b = if fix_end {
        let a = z.row(n - 1).transpose();
        let c = y[n - 1];
        if n == needed {
            // Exactly determined: solve directly.
            let lu = z.clone().full_piv_lu();
            lu.solve(&y)
                .ok_or_else(|| FitError::Degenerate("singular boundary system".into()))?
        } else {
            linalg::constrained_ls(&z, &y, Some((&a, c)))?
        }
    } else if n == k {
        z.clone()
            .full_piv_lu()
            .solve(&y)
            .ok_or_else(|| FitError::Degenerate("singular segment system".into()))?
    } else {
        linalg::ols(&z, &y)?.coef
    };
    let (coefs_out, anchor_out) = if free_anchor {
        (b.rows(0, k - 1).iter().copied().collect(), b[k - 1])
    } else {
        (b.iter().copied().collect(), base_val)
    };
    Ok(PieceFit {
        coefs: coefs_out,
        anchor: anchor_out,
    })
}

/// Least-squares fit of `dep_cum` by a single cumulative solution on the
/// aligned support of both inputs.
pub fn fit_segment(
    dep_cum: &AnnualSeries,
    pred_rate: &AnnualSeries,
    boundary: Boundary,
) -> Result<SegmentFit, FitError> {
    let al = series::align(&[dep_cum, pred_rate])?;
    let (d, x) = (&al[0], &al[1]);
    if d.len() < 3 {
        return Err(FitError::SegmentTooShort(d.len()));
    }
    let cum = d.values();
    let xs = vec![x.values().to_vec()];
    let anchor = if boundary.fix_start {
        Anchor::Fixed(cum[0])
    } else {
        Anchor::Free
    };
    let last = cum.len() - 1;
    let p = fit_piece(
        &xs,
        cum,
        &[Coefficient::Free],
        0,
        last,
        anchor,
        boundary.fix_end,
    )?;
    let (slope, intercept) = (p.coefs[0], p.coefs[1]);
    let mut m = p.anchor;
    let mut sse = (cum[0] - m).powi(2);
    for i in 1..=last {
        m += slope * xs[0][i] + intercept;
        sse += (cum[i] - m).powi(2);
    }
    Ok(SegmentFit {
        slope,
        intercept,
        anchor: p.anchor,
        sse,
    })
}

/// Rate of the predictor below which the segment predicts a falling price
/// level: `-intercept / slope`.
pub fn deflation_threshold(slope: f64, intercept: f64) -> Result<f64, FitError> {
    if slope == 0.0 {
        return Err(FitError::ZeroSlope);
    }
    Ok(-intercept / slope)
}

// ---------------------------------------------------------------------------
// Break model

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefEstimate {
    pub name: String,
    pub value: f64,
    pub pinned: bool,
    pub std_error: Option<f64>,
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub first_year: i32,
    pub last_year: i32,
    /// One entry per predictor, in form order.
    pub slopes: Vec<CoefEstimate>,
    pub intercept: CoefEstimate,
    pub rmse_annual: f64,
}

impl Segment {
    pub fn slope_values(&self) -> Vec<f64> {
        self.slopes.iter().map(|c| c.value).collect()
    }

    /// Threshold from the first predictor's slope.
    pub fn deflation_threshold(&self) -> Result<f64, FitError> {
        deflation_threshold(self.slopes[0].value, self.intercept.value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub lag: i32,
    pub break_year: Option<i32>,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakModel {
    pub form: ModelForm,
    pub search: SearchSpec,
    pub window: YearWindow,
    /// Lag of the first predictor in the winning cell.
    pub lag: i32,
    /// Resolved lag per predictor.
    pub predictor_lags: Vec<i32>,
    /// Lag minus half the smoothing window of the first predictor: how far
    /// ahead the model predicts using data already observed.
    pub effective_horizon: i32,
    /// Last year governed by segment one.
    pub break_year: Option<i32>,
    pub segment1: Segment,
    pub segment2: Option<Segment>,
    pub r2_annual: f64,
    pub r2_cumulative: f64,
    /// The cumulative R^2 is only meaningful when the measured and predicted
    /// curves are cointegrated.
    pub r2_cumulative_requires_cointegration: bool,
    pub rmse_annual: f64,
    pub rmse_cumulative: f64,
    pub objective_value: f64,
    /// Observed cumulative values at the window start and end.
    pub start_anchor: f64,
    pub end_anchor: f64,
    pub observed_annual: AnnualSeries,
    pub observed_cumulative: AnnualSeries,
    pub fitted_annual: AnnualSeries,
    pub fitted_cumulative: AnnualSeries,
    pub annual_residuals: AnnualSeries,
    pub cumulative_residuals: AnnualSeries,
    pub grid: Vec<GridCell>,
    pub data_fingerprint: String,
}

impl BreakModel {
    /// Segment in force for `year` (segment two continues past the window).
    pub fn segment_for(&self, year: i32) -> &Segment {
        match (&self.segment2, self.break_year) {
            (Some(s2), Some(b)) if year > b => s2,
            _ => &self.segment1,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialises")
    }

    /// Number of estimated quantities used in adjusted R^2: free
    /// coefficients plus the lag plus the break year.
    pub fn parameter_count(&self) -> usize {
        let free_per_seg = self
            .form
            .predictors
            .iter()
            .filter(|p| p.coefficient == Coefficient::Free)
            .count()
            + 1;
        let segs = if self.segment2.is_some() { 2 } else { 1 };
        free_per_seg * segs + 1 + usize::from(self.break_year.is_some())
    }
}

/// Dependent and predictor data assembled for one model form.
struct Problem {
    window: (i32, i32),
    dep: Vec<f64>,
    /// Smoothed, unlagged predictors.
    preds: Vec<AnnualSeries>,
    coefs: Vec<Coefficient>,
    lag_rules: Vec<LagRule>,
    names: Vec<String>,
}

impl Problem {
    fn new(form: &ModelForm, reg: &Registry, default_window: YearWindow) -> Result<Self, FitError> {
        let dep = reg
            .prepared(&form.dependent)
            .ok_or_else(|| FitError::MissingSeries(form.dependent.clone()))?;
        let w = form.window.unwrap_or(default_window);
        let first = w.first_year.max(dep.start_year());
        let last = w.last_year.min(dep.end_year());
        if first > last {
            return Err(FitError::EmptyGrid(vec![format!(
                "{} has no data inside {}..={}",
                form.dependent, w.first_year, w.last_year
            )]));
        }
        let dep_w = dep.window(first, last)?;
        let mut preds = Vec::new();
        for p in &form.predictors {
            let s = reg
                .prepared(&p.series)
                .ok_or_else(|| FitError::MissingSeries(p.series.clone()))?;
            preds.push(series::centered_ma(s, p.smooth)?);
        }
        Ok(Self {
            window: (first, last),
            dep: dep_w.values().to_vec(),
            preds,
            coefs: form.predictors.iter().map(|p| p.coefficient).collect(),
            lag_rules: form.predictors.iter().map(|p| p.lag).collect(),
            names: form
                .predictors
                .iter()
                .map(|p| {
                    if p.smooth > 1 {
                        format!("{}_{}", p.series, p.smooth)
                    } else {
                        p.series.clone()
                    }
                })
                .collect(),
        })
    }

    fn n(&self) -> usize {
        self.dep.len()
    }

    /// Lagged predictor values for years `first..=last`, or a description
    /// of the missing support.
    fn regressors(&self, grid_lag: i32, first: i32, last: i32) -> Result<Vec<Vec<f64>>, String> {
        let mut out = Vec::with_capacity(self.preds.len());
        for (j, p) in self.preds.iter().enumerate() {
            let lag = self.lag_rules[j].resolve(grid_lag);
            let need0 = first - lag;
            let need1 = last - lag;
            if need0 < p.start_year() || need1 > p.end_year() {
                return Err(format!(
                    "lag {lag}: {} needs {need0}..={need1}, has {}..={}",
                    self.names[j],
                    p.start_year(),
                    p.end_year()
                ));
            }
            out.push((need0..=need1).map(|y| p.get(y).unwrap()).collect());
        }
        Ok(out)
    }
}

struct CellFit {
    seg1: Vec<f64>,
    seg2: Option<Vec<f64>>,
    fitted_cum: Vec<f64>,
    fitted_ann: Vec<f64>,
    cum: Vec<f64>,
    objective_cum: f64,
    objective_ann: f64,
}

/// Expands free coefficients plus intercept into a full slope vector.
fn full_slopes(coefs: &[Coefficient], free_and_intercept: &[f64]) -> (Vec<f64>, f64) {
    let mut it = free_and_intercept.iter();
    let slopes = coefs
        .iter()
        .map(|c| match c {
            Coefficient::Free => *it.next().unwrap(),
            Coefficient::Pinned(v) => *v,
        })
        .collect();
    (slopes, *it.next().unwrap())
}

fn fit_cell(
    xs: &[Vec<f64>],
    dep: &[f64],
    coefs: &[Coefficient],
    brk_idx: Option<usize>,
) -> Result<CellFit, FitError> {
    let n = dep.len();
    let mut cum = Vec::with_capacity(n);
    let mut acc = 0.0;
    for &v in dep {
        acc += v;
        cum.push(acc);
    }
    let last = n - 1;
    let (seg1, seg2) = match brk_idx {
        None => {
            let p = fit_piece(xs, &cum, coefs, 0, last, Anchor::Fixed(cum[0]), true)?;
            (p.coefs, None)
        }
        Some(b) => {
            let p1 = fit_piece(xs, &cum, coefs, 0, b, Anchor::Fixed(cum[0]), false)?;
            let (s1, a1) = full_slopes(coefs, &p1.coefs);
            let mut m = cum[0];
            for i in 1..=b {
                m += s1.iter().zip(xs).map(|(s, x)| s * x[i]).sum::<f64>() + a1;
            }
            let p2 = fit_piece(xs, &cum, coefs, b, last, Anchor::Fixed(m), true)?;
            (p1.coefs, Some(p2.coefs))
        }
    };
    let (s1, a1) = full_slopes(coefs, &seg1);
    let s2 = seg2.as_ref().map(|c| full_slopes(coefs, c));
    let mut fitted_ann = Vec::with_capacity(n);
    let mut fitted_cum = Vec::with_capacity(n);
    let mut m = cum[0];
    for i in 0..n {
        let (s, a) = match (&s2, brk_idx) {
            (Some((s, a)), Some(b)) if i > b => (s, *a),
            _ => (&s1, a1),
        };
        let rate = s.iter().zip(xs).map(|(s, x)| s * x[i]).sum::<f64>() + a;
        if i > 0 {
            m += rate;
        }
        fitted_ann.push(rate);
        fitted_cum.push(m);
    }
    let objective_cum = cum
        .iter()
        .zip(&fitted_cum)
        .map(|(o, f)| (o - f).powi(2))
        .sum();
    let objective_ann = dep
        .iter()
        .zip(&fitted_ann)
        .map(|(o, f)| (o - f).powi(2))
        .sum();
    Ok(CellFit {
        seg1,
        seg2,
        fitted_cum,
        fitted_ann,
        cum,
        objective_cum,
        objective_ann,
    })
}

fn flatten(c: &CellFit) -> Vec<f64> {
    let mut v = c.seg1.clone();
    if let Some(s2) = &c.seg2 {
        v.extend_from_slice(s2);
    }
    v
}

fn adjusted_r2(obs: &[f64], fitted: &[f64], params: usize) -> f64 {
    let n = obs.len();
    let mean = obs.iter().sum::<f64>() / n as f64;
    let sst: f64 = obs.iter().map(|v| (v - mean).powi(2)).sum();
    let sse: f64 = obs.iter().zip(fitted).map(|(o, f)| (o - f).powi(2)).sum();
    if n <= params || sst == 0.0 {
        return f64::NAN;
    }
    1.0 - (sse / (n - params) as f64) / (sst / (n - 1) as f64)
}

fn rms(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x * x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        (s / n as f64).sqrt()
    }
}

/// Grid-searches lag and break year and returns the best model.
pub fn fit_break_model(
    form: &ModelForm,
    reg: &Registry,
    default_window: YearWindow,
    search: &SearchSpec,
) -> Result<BreakModel, FitError> {
    let prob = Problem::new(form, reg, default_window)?;
    let (w0, w1) = prob.window;
    search.validate(prob.window, form.breaks)?;
    if !form.allow_lead {
        for r in &prob.lag_rules {
            for l in [r.resolve(search.lag_grid.0), r.resolve(search.lag_grid.1)] {
                if l < 0 {
                    return Err(FitError::NegativeLag(l));
                }
            }
        }
    }

    let any_searched = prob
        .lag_rules
        .iter()
        .any(|r| matches!(r, LagRule::Searched { .. }));
    let lags: Vec<i32> = if any_searched {
        (search.lag_grid.0..=search.lag_grid.1).collect()
    } else {
        vec![search.lag_grid.0]
    };
    let breaks: Vec<Option<i32>> = match form.breaks {
        BreakSpec::None => vec![None],
        BreakSpec::OneBreak => (search.break_grid.0..=search.break_grid.1)
            .map(Some)
            .collect(),
    };

    let mut violations = Vec::new();
    let mut designs: Vec<(i32, Vec<Vec<f64>>)> = Vec::new();
    for &lag in &lags {
        match prob.regressors(lag, w0, w1) {
            Ok(x) => designs.push((lag, x)),
            Err(msg) => violations.push(msg),
        }
    }
    let cells: Vec<(usize, Option<i32>)> = (0..designs.len())
        .flat_map(|d| breaks.iter().map(move |&b| (d, b)))
        .collect();
    let results: Vec<Result<f64, String>> = cells
        .par_iter()
        .map(|&(d, b)| {
            let (lag, xs) = &designs[d];
            let bi = b.map(|y| (y - w0) as usize);
            fit_cell(xs, &prob.dep, &prob.coefs, bi)
                .map(|c| match search.objective {
                    Objective::CumulativeSse => c.objective_cum,
                    Objective::AnnualSse => c.objective_ann,
                })
                .map_err(|e| format!("lag {lag}, break {b:?}: {e}"))
        })
        .collect();

    let mut grid = Vec::new();
    let mut best: Option<(usize, f64)> = None;
    for (ci, r) in results.into_iter().enumerate() {
        let (d, b) = cells[ci];
        match r {
            Ok(obj) if obj.is_finite() => {
                grid.push(GridCell {
                    lag: designs[d].0,
                    break_year: b,
                    objective: obj,
                });
                // Cells are ordered by (lag, break); strict improvement keeps
                // the smallest lag and earliest break among ties.
                if best.is_none_or(|(_, o)| obj < o) {
                    best = Some((ci, obj));
                }
            }
            Ok(_) => violations.push(format!(
                "lag {}, break {b:?}: non-finite objective",
                designs[d].0
            )),
            Err(msg) => violations.push(msg),
        }
    }
    let Some((ci, objective_value)) = best else {
        return Err(FitError::EmptyGrid(violations));
    };
    let (d, brk) = cells[ci];
    let (lag, xs) = (&designs[d].0, &designs[d].1);
    let bi = brk.map(|y| (y - w0) as usize);
    let cell = fit_cell(xs, &prob.dep, &prob.coefs, bi)?;

    // Coefficients are affine in the dependent series, so the Jacobian
    // columns are exact differences against the all-zero response.
    let zero = fit_cell(xs, &vec![0.0; prob.n()], &prob.coefs, bi)?;
    let theta0 = flatten(&zero);
    let q = theta0.len();
    let n = prob.n();
    let mut jac = DMatrix::zeros(q, n);
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        let th = flatten(&fit_cell(xs, &e, &prob.coefs, bi)?);
        for r in 0..q {
            jac[(r, i)] = th[r] - theta0[r];
        }
    }
    let resid_ann: Vec<f64> = prob
        .dep
        .iter()
        .zip(&cell.fitted_ann)
        .map(|(o, f)| o - f)
        .collect();
    let sse_ann: f64 = resid_ann.iter().map(|e| e * e).sum();
    let df = n.saturating_sub(q);
    let sigma2 = if df > 0 {
        sse_ann / df as f64
    } else {
        f64::NAN
    };
    let cov = &jac * jac.transpose() * sigma2;
    let tdist = if df > 0 {
        StudentsT::new(0.0, 1.0, df as f64).ok()
    } else {
        None
    };
    let theta = flatten(&cell);

    let make_segment = |offset: usize, vals: &[f64], first: i32, last: i32| -> Segment {
        let mut idx = offset;
        let mut est = |name: String, value: f64, pinned: bool| -> CoefEstimate {
            if pinned {
                return CoefEstimate {
                    name,
                    value,
                    pinned,
                    std_error: None,
                    p_value: None,
                };
            }
            let se = cov[(idx, idx)].sqrt();
            idx += 1;
            let p = tdist.as_ref().and_then(|t| {
                (se > 0.0 && se.is_finite()).then(|| 2.0 * (1.0 - t.cdf((value / se).abs())))
            });
            CoefEstimate {
                name,
                value,
                pinned,
                std_error: se.is_finite().then_some(se),
                p_value: p,
            }
        };
        let (slopes, intercept) = full_slopes(&prob.coefs, vals);
        let slope_est: Vec<CoefEstimate> = slopes
            .iter()
            .enumerate()
            .map(|(j, &v)| {
                est(
                    prob.names[j].clone(),
                    v,
                    matches!(prob.coefs[j], Coefficient::Pinned(_)),
                )
            })
            .collect();
        let intercept = est("intercept".into(), intercept, false);
        let a = (first - w0) as usize;
        let b = (last - w0) as usize;
        Segment {
            first_year: first,
            last_year: last,
            slopes: slope_est,
            intercept,
            rmse_annual: rms(resid_ann[a..=b].iter().copied()),
        }
    };
    let k1 = cell.seg1.len();
    let seg1_last = brk.unwrap_or(w1);
    let segment1 = make_segment(0, &theta[..k1], w0, seg1_last);
    let segment2 = brk.map(|b| make_segment(k1, &theta[k1..], b + 1, w1));

    let mk = |vals: Vec<f64>, unit: Unit, label: &str| {
        AnnualSeries::new(w0, vals, unit, label).expect("window non-empty")
    };
    let resid_cum: Vec<f64> = cell
        .cum
        .iter()
        .zip(&cell.fitted_cum)
        .map(|(o, f)| o - f)
        .collect();
    let predictor_lags: Vec<i32> = prob.lag_rules.iter().map(|r| r.resolve(*lag)).collect();
    let first_smooth = form.predictors[0].smooth as i32;
    let mut fp_inputs: Vec<&AnnualSeries> = vec![reg.prepared(&form.dependent).unwrap()];
    for p in &form.predictors {
        fp_inputs.push(reg.prepared(&p.series).unwrap());
    }

    let mut model = BreakModel {
        form: form.clone(),
        search: search.clone(),
        window: YearWindow {
            first_year: w0,
            last_year: w1,
        },
        lag: predictor_lags[0],
        effective_horizon: predictor_lags[0] - (first_smooth - 1) / 2,
        predictor_lags,
        break_year: brk,
        segment1,
        segment2,
        r2_annual: 0.0,
        r2_cumulative: 0.0,
        r2_cumulative_requires_cointegration: true,
        rmse_annual: rms(resid_ann.iter().copied()),
        rmse_cumulative: rms(resid_cum.iter().copied()),
        objective_value,
        start_anchor: cell.cum[0],
        end_anchor: cell.cum[n - 1],
        observed_annual: mk(prob.dep.clone(), Unit::RatePerYear, &form.dependent),
        observed_cumulative: mk(cell.cum.clone(), Unit::Cumulative, &form.dependent),
        fitted_annual: mk(cell.fitted_ann.clone(), Unit::RatePerYear, "fitted"),
        fitted_cumulative: mk(cell.fitted_cum.clone(), Unit::Cumulative, "fitted"),
        annual_residuals: mk(resid_ann, Unit::RatePerYear, "annual residual"),
        cumulative_residuals: mk(resid_cum, Unit::Cumulative, "cumulative residual"),
        grid,
        data_fingerprint: fingerprint(&fp_inputs),
    };
    let p = model.parameter_count();
    model.r2_annual = adjusted_r2(&prob.dep, &cell.fitted_ann, p);
    model.r2_cumulative = adjusted_r2(&cell.cum, &cell.fitted_cum, p);
    Ok(model)
}

/// One model per smoothing window of the first predictor.
pub fn fit_smoothing_family(
    form: &ModelForm,
    reg: &Registry,
    default_window: YearWindow,
    search: &SearchSpec,
) -> Result<Vec<BreakModel>, FitError> {
    search
        .smoothing_windows
        .iter()
        .map(|&w| {
            let mut f = form.clone();
            f.predictors[0].smooth = w;
            fit_break_model(&f, reg, default_window, search)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralizedFit {
    /// Fit with the pinned coefficients as configured.
    pub pinned: BreakModel,
    /// Same search with every pinned coefficient freed.
    pub freed: Option<BreakModel>,
}

/// Fits a multi-predictor form; optionally refits with the pinned
/// coefficients released so the two can be compared.
pub fn fit_generalized(
    form: &ModelForm,
    reg: &Registry,
    default_window: YearWindow,
    search: &SearchSpec,
    free_pinned: bool,
) -> Result<GeneralizedFit, FitError> {
    let pinned = fit_break_model(form, reg, default_window, search)?;
    let freed = if free_pinned {
        let mut f = form.clone();
        for p in &mut f.predictors {
            p.coefficient = Coefficient::Free;
        }
        Some(fit_break_model(&f, reg, default_window, search)?)
    } else {
        None
    };
    Ok(GeneralizedFit { pinned, freed })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub annual: AnnualSeries,
    pub cumulative: AnnualSeries,
    /// First year not covered by the fit window.
    pub first_out_of_sample: i32,
}

/// Last year the model can predict from available predictor data.
pub fn last_predictable_year(model: &BreakModel, reg: &Registry) -> Result<i32, FitError> {
    let mut last = i32::MAX;
    for (j, p) in model.form.predictors.iter().enumerate() {
        let s = reg
            .prepared(&p.series)
            .ok_or_else(|| FitError::MissingSeries(p.series.clone()))?;
        let sm = series::centered_ma(s, p.smooth)?;
        last = last.min(sm.end_year() + model.predictor_lags[j]);
    }
    Ok(last)
}

/// In-sample fitted values plus `horizon` years beyond the window, using
/// segment-two coefficients out of sample.
pub fn predict(model: &BreakModel, reg: &Registry, horizon: usize) -> Result<Prediction, FitError> {
    let w0 = model.window.first_year;
    let w1 = model.window.last_year;
    let end = w1 + horizon as i32;
    let mut xs: Vec<AnnualSeries> = Vec::new();
    for (j, p) in model.form.predictors.iter().enumerate() {
        let s = reg
            .prepared(&p.series)
            .ok_or_else(|| FitError::MissingSeries(p.series.clone()))?;
        let sm = series::shift(&series::centered_ma(s, p.smooth)?, model.predictor_lags[j]);
        if sm.end_year() < end || sm.start_year() > w0 {
            let last_ok = last_predictable_year(model, reg)?;
            return Err(FitError::HorizonTooLong {
                series: p.series.clone(),
                needed: end,
                available: sm.end_year(),
                last_ok,
            });
        }
        xs.push(sm);
    }
    let mut ann = Vec::new();
    let mut cum = Vec::new();
    let mut m = model.start_anchor;
    for t in w0..=end {
        let seg = model.segment_for(t);
        let rate = seg
            .slopes
            .iter()
            .zip(&xs)
            .map(|(c, x)| c.value * x.get(t).unwrap())
            .sum::<f64>()
            + seg.intercept.value;
        if t > w0 {
            m += rate;
        }
        ann.push(rate);
        cum.push(m);
    }
    let label = format!("{} predicted", model.form.dependent);
    Ok(Prediction {
        annual: AnnualSeries::new(w0, ann, Unit::RatePerYear, label.clone())?,
        cumulative: AnnualSeries::new(w0, cum, Unit::Cumulative, label)?,
        first_out_of_sample: w1 + 1,
    })
}
