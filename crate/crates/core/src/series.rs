//! Year-indexed annual series and the deterministic transforms applied to
//! them: log change rates, cumulation, centred moving averages, spike repair,
//! lag shifting and support alignment.
//!
//! Every transform is a pure function returning a new series; nothing here
//! mutates its input.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeriesError {
    #[error("series is empty")]
    Empty,
    #[error("series too short: need at least {need} values, have {have}")]
    TooShort { need: usize, have: usize },
    #[error("non-positive level {value} in year {year}; cannot take a logarithm")]
    NonPositiveLevel { year: i32, value: f64 },
    #[error("non-finite value in year {year}")]
    NonFinite { year: i32 },
    #[error("moving-average window must be odd and positive, got {0}")]
    EvenWindow(usize),
    #[error("moving-average window {window} exceeds series length {len}")]
    WindowTooLong { window: usize, len: usize },
    #[error("spike year {year} is not interior to {first}..={last}")]
    SpikeNotInterior { year: i32, first: i32, last: i32 },
    #[error("MAD multiplier must be positive, got {0}")]
    BadMadMultiplier(f64),
    #[error("expected unit {expected:?}, got {actual:?}")]
    WrongUnit { expected: Unit, actual: Unit },
    #[error("no common support across {0}")]
    NoOverlap(String),
    #[error("year range {first}..={last} not inside {have_first}..={have_last}")]
    OutOfRange {
        first: i32,
        last: i32,
        have_first: i32,
        have_last: i32,
    },
}

/// Physical meaning of the values in a series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    Level,
    RatePerYear,
    Cumulative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnualSeries {
    start_year: i32,
    values: Vec<f64>,
    unit: Unit,
    label: String,
}

impl AnnualSeries {
    pub fn new(
        start_year: i32,
        values: Vec<f64>,
        unit: Unit,
        label: impl Into<String>,
    ) -> Result<Self, SeriesError> {
        if values.is_empty() {
            return Err(SeriesError::Empty);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(SeriesError::NonFinite {
                year: start_year + i as i32,
            });
        }
        Ok(Self {
            start_year,
            values,
            unit,
            label: label.into(),
        })
    }

    /// Builds a series from `(year, value)` pairs already known to be
    /// consecutive. Used by transforms that preserve the invariant.
    fn derived(&self, start_year: i32, values: Vec<f64>, unit: Unit, suffix: &str) -> Self {
        debug_assert!(!values.is_empty());
        Self {
            start_year,
            values,
            unit,
            label: if suffix.is_empty() {
                self.label.clone()
            } else {
                format!("{} {}", self.label, suffix)
            },
        }
    }

    pub fn start_year(&self) -> i32 {
        self.start_year
    }

    pub fn end_year(&self) -> i32 {
        self.start_year + self.values.len() as i32 - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn years(&self) -> impl Iterator<Item = i32> + '_ {
        (0..self.values.len()).map(move |i| self.start_year + i as i32)
    }

    pub fn iter(&self) -> impl Iterator<Item = (i32, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(move |(i, &v)| (self.start_year + i as i32, v))
    }

    pub fn contains_year(&self, year: i32) -> bool {
        year >= self.start_year && year <= self.end_year()
    }

    pub fn get(&self, year: i32) -> Option<f64> {
        if self.contains_year(year) {
            Some(self.values[(year - self.start_year) as usize])
        } else {
            None
        }
    }

    /// Restricts the series to `first..=last`, which must lie inside its support.
    pub fn window(&self, first: i32, last: i32) -> Result<Self, SeriesError> {
        if first > last || first < self.start_year || last > self.end_year() {
            return Err(SeriesError::OutOfRange {
                first,
                last,
                have_first: self.start_year,
                have_last: self.end_year(),
            });
        }
        let a = (first - self.start_year) as usize;
        let b = (last - self.start_year) as usize;
        Ok(self.derived(first, self.values[a..=b].to_vec(), self.unit, ""))
    }

    /// Same values, same support, different unit tag.
    pub fn retag(&self, unit: Unit) -> Self {
        self.derived(self.start_year, self.values.clone(), unit, "")
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        self.derived(
            self.start_year,
            self.values.iter().map(|&v| f(v)).collect(),
            self.unit,
            "",
        )
    }

    /// First difference; the result starts one year later.
    pub fn diff(&self) -> Result<Self, SeriesError> {
        if self.len() < 2 {
            return Err(SeriesError::TooShort {
                need: 2,
                have: self.len(),
            });
        }
        let v = self.values.windows(2).map(|w| w[1] - w[0]).collect();
        let unit = match self.unit {
            Unit::Cumulative => Unit::RatePerYear,
            u => u,
        };
        Ok(self.derived(self.start_year + 1, v, unit, "diff"))
    }
}

/// `ln(level(t)) - ln(level(t-1))`, starting one year after the input.
pub fn log_change_rate(levels: &AnnualSeries) -> Result<AnnualSeries, SeriesError> {
    if levels.unit != Unit::Level {
        return Err(SeriesError::WrongUnit {
            expected: Unit::Level,
            actual: levels.unit,
        });
    }
    if levels.len() < 2 {
        return Err(SeriesError::TooShort {
            need: 2,
            have: levels.len(),
        });
    }
    if let Some((year, value)) = levels.iter().find(|&(_, v)| v <= 0.0) {
        return Err(SeriesError::NonPositiveLevel { year, value });
    }
    let rates = levels
        .values
        .windows(2)
        .map(|w| w[1].ln() - w[0].ln())
        .collect();
    Ok(levels.derived(
        levels.start_year + 1,
        rates,
        Unit::RatePerYear,
        "log-change",
    ))
}

/// Running sum of the rates on top of `base`; same support as the input.
pub fn cumulate(rates: &AnnualSeries, base: f64) -> AnnualSeries {
    let mut acc = base;
    let values = rates
        .values
        .iter()
        .map(|&r| {
            acc += r;
            acc
        })
        .collect();
    rates.derived(rates.start_year, values, Unit::Cumulative, "cumulative")
}

/// Centred moving average over an odd window; drops `(window-1)/2` years at each end.
pub fn centered_ma(x: &AnnualSeries, window: usize) -> Result<AnnualSeries, SeriesError> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(SeriesError::EvenWindow(window));
    }
    if window > x.len() {
        return Err(SeriesError::WindowTooLong {
            window,
            len: x.len(),
        });
    }
    if window == 1 {
        return Ok(x.clone());
    }
    let half = (window - 1) / 2;
    let w = window as f64;
    let values = x
        .values
        .windows(window)
        .map(|win| win.iter().sum::<f64>() / w)
        .collect();
    Ok(x.derived(
        x.start_year + half as i32,
        values,
        x.unit,
        &format!("MA({window})"),
    ))
}

/// How spike years are chosen for neighbour-mean repair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SpikeRepairSpec {
    ExplicitYears {
        years: Vec<i32>,
    },
    /// Flags interior points with `|x - median| > k * MAD` (raw MAD, no
    /// normal-consistency factor).
    MadThreshold {
        #[serde(default = "default_mad_k")]
        k: f64,
    },
}

fn default_mad_k() -> f64 {
    5.0
}

impl SpikeRepairSpec {
    pub fn mad_default() -> Self {
        SpikeRepairSpec::MadThreshold { k: default_mad_k() }
    }
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Years the spec would repair, without modifying anything.
pub fn spike_years(x: &AnnualSeries, spec: &SpikeRepairSpec) -> Result<Vec<i32>, SeriesError> {
    match spec {
        SpikeRepairSpec::ExplicitYears { years } => {
            for &year in years {
                if year <= x.start_year() || year >= x.end_year() {
                    return Err(SeriesError::SpikeNotInterior {
                        year,
                        first: x.start_year(),
                        last: x.end_year(),
                    });
                }
            }
            let mut ys = years.clone();
            ys.sort_unstable();
            ys.dedup();
            Ok(ys)
        }
        SpikeRepairSpec::MadThreshold { k } => {
            if !(*k > 0.0) {
                return Err(SeriesError::BadMadMultiplier(*k));
            }
            if x.len() < 3 {
                return Ok(Vec::new());
            }
            let med = median(&x.values);
            let dev: Vec<f64> = x.values.iter().map(|v| (v - med).abs()).collect();
            let mad = median(&dev);
            Ok((1..x.len() - 1)
                .filter(|&i| dev[i] > k * mad)
                .map(|i| x.start_year + i as i32)
                .collect())
        }
    }
}

/// Replaces each flagged value by the mean of its two original neighbours.
pub fn repair_spikes(
    x: &AnnualSeries,
    spec: &SpikeRepairSpec,
) -> Result<AnnualSeries, SeriesError> {
    let years = spike_years(x, spec)?;
    let orig = &x.values;
    let mut out = orig.clone();
    for year in years {
        let i = (year - x.start_year) as usize;
        out[i] = 0.5 * (orig[i - 1] + orig[i + 1]);
    }
    Ok(x.derived(x.start_year, out, x.unit, ""))
}

/// Moves the series `lag` years later: the value observed in year `t`
/// is re-indexed to year `t + lag`.
pub fn shift(x: &AnnualSeries, lag: i32) -> AnnualSeries {
    let suffix = if lag == 0 {
        String::new()
    } else {
        format!("(t{:+})", -lag)
    };
    x.derived(x.start_year + lag, x.values.clone(), x.unit, &suffix)
}

/// Intersection of supports as `(first, last)`.
pub fn common_support(xs: &[&AnnualSeries]) -> Result<(i32, i32), SeriesError> {
    let first = xs.iter().map(|s| s.start_year()).max();
    let last = xs.iter().map(|s| s.end_year()).min();
    match (first, last) {
        (Some(a), Some(b)) if a <= b => Ok((a, b)),
        _ => Err(SeriesError::NoOverlap(
            xs.iter()
                .map(|s| format!("{}..={}", s.start_year(), s.end_year()))
                .collect::<Vec<_>>()
                .join(", "),
        )),
    }
}

/// Truncates every series to the common support.
pub fn align(xs: &[&AnnualSeries]) -> Result<Vec<AnnualSeries>, SeriesError> {
    let (first, last) = common_support(xs)?;
    xs.iter().map(|s| s.window(first, last)).collect()
}
