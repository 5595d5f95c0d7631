//! CSV and JSON renderings shared by the commands.

use serde::Serialize;

use phillips_lf::bem::BreakModel;
use phillips_lf::stattests::TestReport;
use phillips_lf::AnnualSeries;

/// Shortest round-trip representation; empty for non-finite values.
pub fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::new()
    }
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn csv_string(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

pub fn json<T: Serialize + ?Sized>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serialisable") + "\n"
}

/// year, observed, fitted, residual.
pub fn fit_csv(obs: &AnnualSeries, fitted: &AnnualSeries, resid: &AnnualSeries) -> String {
    let rows: Vec<Vec<String>> = obs
        .iter()
        .map(|(y, o)| vec![y.to_string(), num(o), opt(fitted.get(y)), opt(resid.get(y))])
        .collect();
    csv_string(&["year", "observed", "fitted", "residual"], &rows)
}

pub fn annual_csv(m: &BreakModel) -> String {
    fit_csv(&m.observed_annual, &m.fitted_annual, &m.annual_residuals)
}

pub fn cumulative_csv(m: &BreakModel) -> String {
    fit_csv(
        &m.observed_cumulative,
        &m.fitted_cumulative,
        &m.cumulative_residuals,
    )
}

pub fn grid_csv(m: &BreakModel) -> String {
    let rows: Vec<Vec<String>> = m
        .grid
        .iter()
        .map(|c| {
            vec![
                c.lag.to_string(),
                c.break_year.map(|b| b.to_string()).unwrap_or_default(),
                num(c.objective),
            ]
        })
        .collect();
    csv_string(&["lag", "break_year", "objective"], &rows)
}

pub const BREAK_MODEL_HEADER: [&str; 20] = [
    "model",
    "form",
    "first_year",
    "last_year",
    "lag",
    "effective_horizon",
    "break_year",
    "slope1",
    "slope1_se",
    "intercept1",
    "intercept1_se",
    "slope2",
    "slope2_se",
    "intercept2",
    "intercept2_se",
    "r2_annual",
    "r2_cumulative",
    "rmse_annual",
    "deflation_threshold1",
    "deflation_threshold2",
];

pub fn break_model_row(name: &str, m: &BreakModel) -> Vec<String> {
    let s1 = &m.segment1;
    let s2 = m.segment2.as_ref();
    vec![
        name.to_string(),
        m.form.describe(),
        m.window.first_year.to_string(),
        m.window.last_year.to_string(),
        m.lag.to_string(),
        m.effective_horizon.to_string(),
        m.break_year.map(|b| b.to_string()).unwrap_or_default(),
        num(s1.slopes[0].value),
        opt(s1.slopes[0].std_error),
        num(s1.intercept.value),
        opt(s1.intercept.std_error),
        opt(s2.map(|s| s.slopes[0].value)),
        opt(s2.and_then(|s| s.slopes[0].std_error)),
        opt(s2.map(|s| s.intercept.value)),
        opt(s2.and_then(|s| s.intercept.std_error)),
        num(m.r2_annual),
        num(m.r2_cumulative),
        num(m.rmse_annual),
        opt(s1.deflation_threshold().ok()),
        opt(s2.and_then(|s| s.deflation_threshold().ok())),
    ]
}

/// key,value rows of a report's flat record.
pub fn test_report_csv(r: &TestReport) -> String {
    let rows: Vec<Vec<String>> = r
        .to_flat()
        .into_iter()
        .map(|(k, v)| {
            let v = match v {
                serde_json::Value::String(s) => s,
                serde_json::Value::Null => String::new(),
                other => other.to_string(),
            };
            vec![k, v]
        })
        .collect();
    csv_string(&["key", "value"], &rows)
}
