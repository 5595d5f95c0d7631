//! Single-equation error-correction model linking a measured cumulative
//! series `P` to a predicted cumulative series `X`:
//!
//! ```text
//! dP(t) = g1 dX(t) - g2 (P(t-1) - X(t-1))
//!         + sum_{i=1..k-1} (a_i dP(t-i) + b_i dX(t-i)) + v(t)
//! ```
//!
//! `k` is the VAR order in levels; `g1` is pinned to 1 unless freed.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, LinalgError};
use crate::series::{AnnualSeries, SeriesError};
use crate::stattests::DeterministicSpec;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VecmError {
    #[error("series too short: {got} observations, need more than {need}")]
    TooShort { need: usize, got: usize },
    #[error("supports differ: {0}..={1} vs {2}..={3}")]
    Misaligned(i32, i32, i32, i32),
    #[error("degenerate design: {0}")]
    Degenerate(String),
    #[error("max_lag {0} outside 1..=4")]
    BadLag(usize),
    #[error("forecast needs X through {needed}, available through {available}")]
    HorizonTooLong { needed: i32, available: i32 },
    #[error(transparent)]
    Series(#[from] SeriesError),
}

pub const MAX_VAR_ORDER: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VecmSpec {
    pub rank: usize,
    pub max_lag: usize,
    pub det: DeterministicSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShortRun {
    pub lag: usize,
    pub dp: f64,
    pub dx: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VecmModel {
    pub gamma1: f64,
    pub gamma1_pinned: bool,
    pub gamma2: f64,
    pub short_run: Vec<ShortRun>,
    pub residual_sd: f64,
    pub nobs: usize,
    pub aic: f64,
    pub spec: VecmSpec,
    /// `|1 - gamma2| < 1`.
    pub stable: bool,
    pub warnings: Vec<String>,
    /// Last year of the estimation sample.
    pub last_year: i32,
}

impl VecmModel {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialises")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LagSelection {
    /// Minimum AIC over VAR orders `1..=max`, compared on a common sample.
    Aic {
        max: usize,
    },
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VecmOptions {
    pub lags: LagSelection,
    pub free_gamma1: bool,
    /// Drops the error-correction term (`g2 = 0`).
    pub error_correction: bool,
}

impl Default for VecmOptions {
    fn default() -> Self {
        Self {
            lags: LagSelection::Aic { max: MAX_VAR_ORDER },
            free_gamma1: false,
            error_correction: true,
        }
    }
}

fn check(p: &AnnualSeries, x: &AnnualSeries) -> Result<(), VecmError> {
    if p.start_year() != x.start_year() || p.len() != x.len() {
        return Err(VecmError::Misaligned(
            p.start_year(),
            p.end_year(),
            x.start_year(),
            x.end_year(),
        ));
    }
    Ok(())
}

struct Design {
    z: DMatrix<f64>,
    y: DVector<f64>,
}

/// Rows for dP[t], t = `first..n-1` (indices into levels). Columns: gap,
/// dX (when free), then (dP, dX) pairs per short-run lag.
fn design(p: &[f64], x: &[f64], k: usize, first: usize, opt: &VecmOptions) -> Design {
    let n = p.len();
    let rows = n - first;
    let cols = usize::from(opt.error_correction) + usize::from(opt.free_gamma1) + 2 * (k - 1);
    let mut z = DMatrix::zeros(rows, cols);
    let mut y = DVector::zeros(rows);
    for (r, t) in (first..n).enumerate() {
        let dp = p[t] - p[t - 1];
        let dx = x[t] - x[t - 1];
        y[r] = if opt.free_gamma1 { dp } else { dp - dx };
        let mut c = 0;
        if opt.error_correction {
            z[(r, c)] = p[t - 1] - x[t - 1];
            c += 1;
        }
        if opt.free_gamma1 {
            z[(r, c)] = dx;
            c += 1;
        }
        for i in 1..k {
            z[(r, c)] = p[t - i] - p[t - i - 1];
            z[(r, c + 1)] = x[t - i] - x[t - i - 1];
            c += 2;
        }
    }
    Design { z, y }
}

struct RawFit {
    coef: DVector<f64>,
    ssr: f64,
    nobs: usize,
}

fn solve(d: &Design) -> Result<RawFit, VecmError> {
    let n = d.y.len();
    if d.z.ncols() == 0 {
        return Ok(RawFit {
            coef: DVector::zeros(0),
            ssr: d.y.norm_squared(),
            nobs: n,
        });
    }
    match linalg::ols(&d.z, &d.y) {
        Ok(f) => Ok(RawFit {
            coef: f.coef,
            ssr: f.ssr,
            nobs: n,
        }),
        Err(LinalgError::Underdetermined { nobs, cols }) => Err(VecmError::TooShort {
            need: cols,
            got: nobs,
        }),
        Err(e) => Err(VecmError::Degenerate(e.to_string())),
    }
}

fn aic(f: &RawFit, k: usize) -> f64 {
    let n = f.nobs as f64;
    n * (f.ssr / n).ln() + 2.0 * k as f64
}

/// Fits the error-correction equation with default options.
pub fn fit_vecm(
    p: &AnnualSeries,
    x: &AnnualSeries,
    max_lag: usize,
) -> Result<VecmModel, VecmError> {
    fit_vecm_with(
        p,
        x,
        VecmOptions {
            lags: LagSelection::Aic { max: max_lag },
            ..VecmOptions::default()
        },
    )
}

pub fn fit_vecm_with(
    p: &AnnualSeries,
    x: &AnnualSeries,
    opt: VecmOptions,
) -> Result<VecmModel, VecmError> {
    check(p, x)?;
    let max_lag = match opt.lags {
        LagSelection::Aic { max } | LagSelection::Fixed(max) => max,
    };
    if !(1..=MAX_VAR_ORDER).contains(&max_lag) {
        return Err(VecmError::BadLag(max_lag));
    }
    let n = p.len();
    if n <= 2 * max_lag + 5 {
        return Err(VecmError::TooShort {
            need: 2 * max_lag + 5,
            got: n,
        });
    }
    let pv = p.values();
    let xv = x.values();
    let scale = pv
        .iter()
        .chain(xv)
        .fold(0.0_f64, |a, v| a.max(v.abs()))
        .max(1e-300);
    if opt.error_correction
        && pv
            .iter()
            .zip(xv)
            .all(|(a, b)| (a - b).abs() <= 1e-14 * scale)
    {
        return Err(VecmError::Degenerate(
            "error-correction term is identically zero".into(),
        ));
    }
    let k = match opt.lags {
        LagSelection::Fixed(k) => k,
        LagSelection::Aic { max } => {
            let mut best: Option<(usize, f64)> = None;
            for k in 1..=max {
                let d = design(pv, xv, k, max, &opt);
                let f = solve(&d)?;
                let a = aic(&f, d.z.ncols());
                if best.is_none_or(|(_, b)| a < b) {
                    best = Some((k, a));
                }
            }
            best.expect("at least one order").0
        }
    };
    let d = design(pv, xv, k, k, &opt);
    let f = solve(&d)?;
    let mut c = 0;
    let gamma2 = if opt.error_correction {
        c += 1;
        -f.coef[0]
    } else {
        0.0
    };
    let gamma1 = if opt.free_gamma1 {
        c += 1;
        f.coef[c - 1]
    } else {
        1.0
    };
    let short_run = (1..k)
        .map(|i| {
            let s = ShortRun {
                lag: i,
                dp: f.coef[c],
                dx: f.coef[c + 1],
            };
            c += 2;
            s
        })
        .collect();
    let dof = f.nobs.saturating_sub(d.z.ncols()).max(1);
    let stable = (1.0 - gamma2).abs() < 1.0;
    let mut warnings = Vec::new();
    if !stable {
        warnings.push(format!(
            "explosive correction: |1 - gamma2| = {:.4}",
            (1.0 - gamma2).abs()
        ));
    }
    Ok(VecmModel {
        gamma1,
        gamma1_pinned: !opt.free_gamma1,
        gamma2,
        short_run,
        residual_sd: (f.ssr / dof as f64).sqrt(),
        nobs: f.nobs,
        aic: aic(&f, d.z.ncols()),
        spec: VecmSpec {
            rank: 1,
            max_lag: k,
            det: DeterministicSpec::None,
        },
        stable,
        warnings,
        last_year: p.end_year(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forecast {
    pub start_year: i32,
    /// Forecast annual rates (first differences of the cumulative path).
    pub rates: Vec<f64>,
    pub cumulative: Vec<f64>,
}

impl Forecast {
    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    pub fn years(&self) -> impl Iterator<Item = i32> + '_ {
        (0..self.rates.len()).map(move |i| self.start_year + i as i32)
    }
}

/// Iterates the equation `h` steps past the end of `p_hist` with zero
/// shocks. `x_path` must cover the history and the forecast years.
pub fn forecast_vecm(
    model: &VecmModel,
    p_hist: &AnnualSeries,
    x_path: &AnnualSeries,
    h: usize,
) -> Result<Forecast, VecmError> {
    let t_end = p_hist.end_year();
    let needed = t_end + h as i32;
    if x_path.end_year() < needed {
        return Err(VecmError::HorizonTooLong {
            needed,
            available: x_path.end_year(),
        });
    }
    let k = model.spec.max_lag;
    let first_needed = t_end - k as i32;
    if p_hist.start_year() > first_needed || x_path.start_year() > first_needed {
        return Err(VecmError::TooShort {
            need: k + 1,
            got: p_hist.len(),
        });
    }
    let mut p: Vec<f64> = p_hist.values().to_vec();
    let off = p_hist.start_year();
    let xa = |year: i32| x_path.get(year).expect("support checked");
    let mut rates = Vec::with_capacity(h);
    let mut cumulative = Vec::with_capacity(h);
    for step in 1..=h as i32 {
        let t = t_end + step;
        let idx = (t - off) as usize;
        let gap = p[idx - 1] - xa(t - 1);
        let mut dp = model.gamma1 * (xa(t) - xa(t - 1)) - model.gamma2 * gap;
        for s in &model.short_run {
            let i = s.lag;
            dp += s.dp * (p[idx - i] - p[idx - i - 1])
                + s.dx * (xa(t - i as i32) - xa(t - i as i32 - 1));
        }
        let level = p[idx - 1] + dp;
        p.push(level);
        rates.push(dp);
        cumulative.push(level);
    }
    Ok(Forecast {
        start_year: t_end + 1,
        rates,
        cumulative,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollingEval {
    pub horizon: usize,
    pub min_train: usize,
    /// (target year, forecast rate - observed rate).
    pub errors: Vec<(i32, f64)>,
    pub rmsfe: f64,
}

/// Rolling-origin evaluation: for every origin `T` with at least
/// `min_train` observations, fit on data through `T`, forecast `T + h`
/// (X known through `T + h`) and score the annual rate at `T + h`.
pub fn rolling_rmsfe(
    p: &AnnualSeries,
    x: &AnnualSeries,
    opt: VecmOptions,
    h: usize,
    min_train: usize,
) -> Result<RollingEval, VecmError> {
    check(p, x)?;
    if h == 0 {
        return Err(VecmError::TooShort { need: 1, got: 0 });
    }
    let first_origin = p.start_year() + min_train as i32 - 1;
    let last_origin = p.end_year() - h as i32;
    if first_origin > last_origin {
        return Err(VecmError::TooShort {
            need: min_train + h,
            got: p.len(),
        });
    }
    let errors: Result<Vec<(i32, f64)>, VecmError> = (first_origin..=last_origin)
        .into_par_iter()
        .map(|t| {
            let ph = p.window(p.start_year(), t)?;
            let xh = x.window(x.start_year(), t)?;
            let m = fit_vecm_with(&ph, &xh, opt)?;
            let f = forecast_vecm(&m, &ph, x, h)?;
            let target = t + h as i32;
            let obs = p.get(target).unwrap() - p.get(target - 1).unwrap();
            Ok((target, f.rates[h - 1] - obs))
        })
        .collect();
    let errors = errors?;
    let rmsfe = (errors.iter().map(|(_, e)| e * e).sum::<f64>() / errors.len() as f64).sqrt();
    Ok(RollingEval {
        horizon: h,
        min_train,
        errors,
        rmsfe,
    })
}

/// Simulates the equation with `g1 = 1`, no short-run terms, `X` a
/// Gaussian random walk with step sd `sx` and shocks with sd `sv`.
pub fn simulate(
    rng: &mut rand_chacha::ChaCha8Rng,
    n: usize,
    gamma2: f64,
    sx: f64,
    sv: f64,
) -> (Vec<f64>, Vec<f64>) {
    use rand_distr::{Distribution, StandardNormal};
    let mut x = Vec::with_capacity(n);
    let mut p = Vec::with_capacity(n);
    let (mut xt, mut pt) = (0.0, 0.0);
    for t in 0..n {
        let ex: f64 = StandardNormal.sample(rng);
        let ev: f64 = StandardNormal.sample(rng);
        if t == 0 {
            pt = sv * ev;
        } else {
            let dx = sx * ex;
            let gap = pt - xt;
            xt += dx;
            pt += dx - gamma2 * gap + sv * ev;
        }
        x.push(xt);
        p.push(pt);
    }
    (p, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::Unit;
    use crate::stattests::mc;

    fn cum(v: Vec<f64>) -> AnnualSeries {
        AnnualSeries::new(1900, v, Unit::Cumulative, "c").unwrap()
    }

    #[test]
    fn identical_inputs_are_degenerate() {
        let x = cum(mc::random_walk(&mut mc::stream(1, 0), 60));
        assert!(matches!(fit_vecm(&x, &x, 4), Err(VecmError::Degenerate(_))));
    }

    #[test]
    fn zero_correction_reproduces_predicted_increments() {
        let m = VecmModel {
            gamma1: 1.0,
            gamma1_pinned: true,
            gamma2: 0.0,
            short_run: vec![],
            residual_sd: 0.0,
            nobs: 0,
            aic: 0.0,
            spec: VecmSpec {
                rank: 1,
                max_lag: 1,
                det: DeterministicSpec::None,
            },
            stable: true,
            warnings: vec![],
            last_year: 1909,
        };
        let p = cum((0..10).map(|t| 0.1 * t as f64 + 0.3).collect());
        let x = cum((0..14).map(|t| (t as f64).powi(2) * 0.01).collect());
        let f = forecast_vecm(&m, &p, &x, 4).unwrap();
        for (i, y) in f.years().enumerate() {
            let dx = x.get(y).unwrap() - x.get(y - 1).unwrap();
            assert!((f.rates[i] - dx).abs() < 1e-15);
        }
        assert!(forecast_vecm(&m, &p, &x, 0).unwrap().is_empty());
        assert!(matches!(
            forecast_vecm(&m, &p, &x, 5),
            Err(VecmError::HorizonTooLong { .. })
        ));
    }

    #[test]
    fn recovers_adjustment_speed() {
        let (p, x) = simulate(&mut mc::stream(5, 0), 500, 0.5, 0.01, 0.01);
        let m = fit_vecm_with(
            &cum(p),
            &cum(x),
            VecmOptions {
                lags: LagSelection::Fixed(1),
                ..VecmOptions::default()
            },
        )
        .unwrap();
        assert!((m.gamma2 - 0.5).abs() < 0.1, "{}", m.gamma2);
        assert!(m.stable);
    }

    #[test]
    fn rejects_bad_lag() {
        let x = cum((0..40).map(|t| t as f64).collect());
        let y = cum((0..40).map(|t| (t as f64).sqrt()).collect());
        assert!(matches!(fit_vecm(&x, &y, 5), Err(VecmError::BadLag(5))));
    }
}
