//! Descriptive statistics, no-change benchmark errors and model error
//! tables.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::YearWindow;
use crate::series::{self, AnnualSeries, SeriesError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("need at least {need} observations, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("horizon {0} outside 1..=5")]
    BadHorizon(usize),
    #[error("period {0}..={1} has no observations")]
    EmptyPeriod(i32, i32),
    #[error("split year {split} must lie strictly inside {first}..={last}")]
    BadSplit { split: i32, first: i32, last: i32 },
    #[error(transparent)]
    Series(#[from] SeriesError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Descriptive {
    pub n: usize,
    pub mean: f64,
    /// Divisor `n - 1`.
    pub st_dev: f64,
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let ss = v.iter().map(|x| (x - m).powi(2)).sum::<f64>();
    (m, (ss / (n - 1.0)).sqrt())
}

pub fn descriptive(x: &AnnualSeries) -> Result<Descriptive, EvalError> {
    if x.len() < 2 {
        return Err(EvalError::TooShort {
            need: 2,
            got: x.len(),
        });
    }
    let (mean, st_dev) = mean_sd(x.values());
    Ok(Descriptive {
        n: x.len(),
        mean,
        st_dev,
    })
}

pub const MAX_HORIZON: usize = 5;

fn check_h(h: usize) -> Result<(), EvalError> {
    if (1..=MAX_HORIZON).contains(&h) {
        Ok(())
    } else {
        Err(EvalError::BadHorizon(h))
    }
}

/// No-change forecast error `sqrt(mean (x(t) - x(t-h))^2)` over every `t`
/// with `t - h` in the support.
pub fn naive_rmsfe(x: &AnnualSeries, h: usize) -> Result<f64, EvalError> {
    check_h(h)?;
    if x.len() <= h {
        return Err(EvalError::TooShort {
            need: h + 1,
            got: x.len(),
        });
    }
    let v = x.values();
    let n = v.len() - h;
    let ss: f64 = (h..v.len()).map(|t| (v[t] - v[t - h]).powi(2)).sum();
    Ok((ss / n as f64).sqrt())
}

/// As [`naive_rmsfe`] with targets restricted to `window`; forecasts for
/// early targets draw on values before the window when the series has them.
pub fn naive_rmsfe_window(
    x: &AnnualSeries,
    h: usize,
    window: YearWindow,
) -> Result<(f64, usize), EvalError> {
    check_h(h)?;
    let first = window.first_year.max(x.start_year() + h as i32);
    let last = window.last_year.min(x.end_year());
    if first > last {
        return Err(EvalError::EmptyPeriod(window.first_year, window.last_year));
    }
    let ss: f64 = (first..=last)
        .map(|t| (x.get(t).unwrap() - x.get(t - h as i32).unwrap()).powi(2))
        .sum();
    let n = (last - first + 1) as usize;
    Ok(((ss / n as f64).sqrt(), n))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Period {
    Full,
    /// 1970-1994.
    PreBreak,
    /// 1995-2012.
    PostBreak,
    Custom {
        first_year: i32,
        last_year: i32,
    },
}

pub const SPLIT_YEAR: i32 = 1994;

impl Period {
    /// Year bounds before intersecting with the data.
    pub fn bounds(&self) -> (i32, i32) {
        match *self {
            Period::Full => (i32::MIN, i32::MAX),
            Period::PreBreak => (1970, SPLIT_YEAR),
            Period::PostBreak => (SPLIT_YEAR + 1, 2012),
            Period::Custom {
                first_year,
                last_year,
            } => (first_year, last_year),
        }
    }

    pub fn label(&self) -> String {
        match *self {
            Period::Full => "full".into(),
            Period::PreBreak => "pre_break".into(),
            Period::PostBreak => "post_break".into(),
            Period::Custom {
                first_year,
                last_year,
            } => format!("{first_year}-{last_year}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub rmsfe: f64,
    pub n: usize,
    pub first_year: i32,
    pub last_year: i32,
}

/// Root mean squared difference of `pred` and `obs` on their common
/// support restricted to `period`.
pub fn model_rmsfe(
    pred: &AnnualSeries,
    obs: &AnnualSeries,
    period: Period,
) -> Result<ErrorSummary, EvalError> {
    let (a, b) = series::common_support(&[pred, obs])?;
    let (p0, p1) = period.bounds();
    let first = a.max(p0);
    let last = b.min(p1);
    if first > last {
        return Err(EvalError::EmptyPeriod(p0.max(a), p1.min(b)));
    }
    let ss: f64 = (first..=last)
        .map(|t| (pred.get(t).unwrap() - obs.get(t).unwrap()).powi(2))
        .sum();
    let n = (last - first + 1) as usize;
    Ok(ErrorSummary {
        rmsfe: (ss / n as f64).sqrt(),
        n,
        first_year: first,
        last_year: last,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubperiodVolatility {
    pub split_year: i32,
    /// St. dev. of first differences dated up to and including the split.
    pub sd1: f64,
    /// St. dev. of first differences dated after the split.
    pub sd2: f64,
}

pub fn subperiod_volatility(
    x: &AnnualSeries,
    split_year: i32,
) -> Result<SubperiodVolatility, EvalError> {
    // Each side needs two differences for a standard deviation.
    if split_year < x.start_year() + 2 || split_year > x.end_year() - 2 {
        return Err(EvalError::BadSplit {
            split: split_year,
            first: x.start_year(),
            last: x.end_year(),
        });
    }
    let d = x.diff()?;
    let before: Vec<f64> = d
        .iter()
        .filter(|(y, _)| *y <= split_year)
        .map(|p| p.1)
        .collect();
    let after: Vec<f64> = d
        .iter()
        .filter(|(y, _)| *y > split_year)
        .map(|p| p.1)
        .collect();
    Ok(SubperiodVolatility {
        split_year,
        sd1: mean_sd(&before).1,
        sd2: mean_sd(&after).1,
    })
}

/// `(naive - model) / naive`.
pub fn gain(model: f64, naive: f64) -> f64 {
    (naive - model) / naive
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCell {
    pub model: String,
    pub horizon: usize,
    pub period: String,
    pub first_year: i32,
    pub last_year: i32,
    pub n: usize,
    pub rmsfe: f64,
    pub naive_rmsfe: f64,
    pub gain: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalTable {
    pub cells: Vec<EvalCell>,
}

impl EvalTable {
    pub fn push(
        &mut self,
        model: &str,
        horizon: usize,
        period: &str,
        summary: ErrorSummary,
        naive: f64,
    ) {
        self.cells.push(EvalCell {
            model: model.to_string(),
            horizon,
            period: period.to_string(),
            first_year: summary.first_year,
            last_year: summary.last_year,
            n: summary.n,
            rmsfe: summary.rmsfe,
            naive_rmsfe: naive,
            gain: gain(summary.rmsfe, naive),
        });
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for c in &self.cells {
            w.serialize(c).expect("in-memory write");
        }
        if self.cells.is_empty() {
            w.write_record([
                "model",
                "horizon",
                "period",
                "first_year",
                "last_year",
                "n",
                "rmsfe",
                "naive_rmsfe",
                "gain",
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::Unit;

    fn s(start: i32, v: Vec<f64>) -> AnnualSeries {
        AnnualSeries::new(start, v, Unit::RatePerYear, "x").unwrap()
    }

    #[test]
    fn descriptive_constant_and_short() {
        let d = descriptive(&s(2000, vec![0.3; 5])).unwrap();
        assert_eq!(d.st_dev, 0.0);
        assert!((d.mean - 0.3).abs() < 1e-15);
        assert!(matches!(
            descriptive(&s(2000, vec![1.0])),
            Err(EvalError::TooShort { .. })
        ));
    }

    #[test]
    fn naive_examples() {
        assert_eq!(naive_rmsfe(&s(2000, vec![1.0, 2.0, 3.0]), 1).unwrap(), 1.0);
        let lin = s(2000, (0..20).map(|t| 0.25 * t as f64).collect());
        for h in 1..=5 {
            assert!((naive_rmsfe(&lin, h).unwrap() - 0.25 * h as f64).abs() < 1e-12);
        }
        assert!(matches!(
            naive_rmsfe(&lin, 0),
            Err(EvalError::BadHorizon(0))
        ));
        assert!(matches!(
            naive_rmsfe(&lin, 6),
            Err(EvalError::BadHorizon(6))
        ));
    }

    #[test]
    fn naive_window_uses_earlier_history() {
        let x = s(1990, (0..10).map(|t| t as f64).collect());
        let w = YearWindow {
            first_year: 1995,
            last_year: 1999,
        };
        let (r, n) = naive_rmsfe_window(&x, 5, w).unwrap();
        assert_eq!(n, 5);
        assert_eq!(r, 5.0);
    }

    #[test]
    fn model_rmsfe_zero_and_period() {
        let a = s(1970, (0..43).map(|t| t as f64 * 0.001).collect());
        assert_eq!(model_rmsfe(&a, &a, Period::Full).unwrap().rmsfe, 0.0);
        let pre = model_rmsfe(&a, &a, Period::PreBreak).unwrap();
        assert_eq!((pre.first_year, pre.last_year, pre.n), (1970, 1994, 25));
        let post = model_rmsfe(&a, &a, Period::PostBreak).unwrap();
        assert_eq!((post.first_year, post.last_year), (1995, 2012));
        let empty = Period::Custom {
            first_year: 2020,
            last_year: 2030,
        };
        assert!(model_rmsfe(&a, &a, empty).is_err());
    }

    #[test]
    fn volatility_split() {
        let c = s(1970, vec![0.02; 43]);
        let v = subperiod_volatility(&c, 1994).unwrap();
        assert_eq!((v.sd1, v.sd2), (0.0, 0.0));
        assert!(subperiod_volatility(&c, 1970).is_err());
        assert!(subperiod_volatility(&c, 2012).is_err());
    }

    #[test]
    fn gain_convention() {
        assert!((gain(0.015, 0.034) - 0.019 / 0.034).abs() < 1e-15);
    }

    #[test]
    fn table_csv_has_header() {
        let t = EvalTable::default();
        assert!(t.to_csv().starts_with("model,horizon"));
    }
}
