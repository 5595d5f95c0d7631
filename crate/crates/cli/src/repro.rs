//! Signed comparison of reproduced quantities with the reference estimates.
//!
//! Each row carries the reference value, the reproduced value, their signed
//! difference (reproduced minus reference) and whether it meets the stated
//! tolerance. Rows with `gate = false` are informational.

use std::collections::BTreeMap;

use serde::Serialize;

use phillips_lf::bem::BreakModel;
use phillips_lf::eval;
use phillips_lf::reference;
use phillips_lf::stattests::{self, Bandwidth, DeterministicSpec};
use phillips_lf::vecm::{self, VecmOptions};

use crate::commands::model_curves;
use crate::tables::{csv_string, opt};
use crate::Context;

pub const JOHANSEN_LAG: usize = 4;
pub const VECM_MIN_TRAIN: usize = 20;
pub const LEVEL_TOL: f64 = 0.0005;

#[derive(Debug, Clone, Serialize)]
pub struct DiffRow {
    pub check: String,
    pub item: String,
    pub quantity: String,
    pub reference: Option<f64>,
    pub reproduced: Option<f64>,
    pub diff: Option<f64>,
    pub tolerance: String,
    pub gate: bool,
    pub pass: bool,
}

#[allow(clippy::too_many_arguments)]
fn row(
    check: &str,
    item: &str,
    quantity: &str,
    reference: Option<f64>,
    reproduced: Option<f64>,
    tolerance: impl Into<String>,
    gate: bool,
    pass: bool,
) -> DiffRow {
    DiffRow {
        check: check.into(),
        item: item.into(),
        quantity: quantity.into(),
        reference,
        reproduced,
        diff: reference.zip(reproduced).map(|(a, b)| b - a),
        tolerance: tolerance.into(),
        gate,
        pass,
    }
}

/// Row judged by `|reproduced - reference| <= tol`.
fn close(
    check: &str,
    item: &str,
    quantity: &str,
    reference: f64,
    reproduced: Option<f64>,
    tol: f64,
    gate: bool,
) -> DiffRow {
    let pass = reproduced.is_some_and(|v| (v - reference).abs() <= tol + 1e-12);
    row(
        check,
        item,
        quantity,
        Some(reference),
        reproduced,
        format!("+/-{tol}"),
        gate,
        pass,
    )
}

fn info(
    check: &str,
    item: &str,
    quantity: &str,
    reference: f64,
    reproduced: Option<f64>,
) -> DiffRow {
    row(
        check,
        item,
        quantity,
        Some(reference),
        reproduced,
        "none",
        false,
        true,
    )
}

pub type Fits = BTreeMap<String, Result<BreakModel, String>>;

pub fn fit_all(ctx: &Context) -> Fits {
    ctx.config
        .models
        .keys()
        .map(|name| {
            (
                name.clone(),
                ctx.fit(name, &Default::default())
                    .map_err(|e| e.to_string()),
            )
        })
        .collect()
}

fn fitted<'a>(fits: &'a Fits, name: &str) -> Option<&'a BreakModel> {
    fits.get(name).and_then(|r| r.as_ref().ok())
}

/// Coefficients within 10% or 0.01 (whichever is looser), lag and break
/// exact, for the eight inflation rows; the unemployment row is reported
/// without gating.
pub fn break_model_rows(fits: &Fits) -> Vec<DiffRow> {
    const C: &str = "break_models";
    let mut rows = Vec::new();
    for r in &reference::BREAK_MODELS {
        let gate = r.model != "u_l3";
        let m = fitted(fits, r.model);
        let s2 = m.and_then(|m| m.segment2.as_ref());
        let coef = [
            ("slope1", r.slope1, m.map(|m| m.segment1.slopes[0].value)),
            (
                "intercept1",
                r.intercept1,
                m.map(|m| m.segment1.intercept.value),
            ),
            ("slope2", r.slope2, s2.map(|s| s.slopes[0].value)),
            ("intercept2", r.intercept2, s2.map(|s| s.intercept.value)),
        ];
        for (q, reference, got) in coef {
            let tol = (0.10 * reference.abs()).max(0.01);
            rows.push(close(C, r.model, q, reference, got, tol, gate));
        }
        let h = m.map(|m| m.effective_horizon as f64);
        rows.push(close(
            C,
            r.model,
            "effective_horizon",
            r.horizon as f64,
            h,
            0.0,
            gate,
        ));
        let b = m.and_then(|m| m.break_year).map(f64::from);
        rows.push(close(
            C,
            r.model,
            "break_year",
            r.break_year as f64,
            b,
            0.0,
            gate,
        ));
        rows.push(info(
            C,
            r.model,
            "r2_annual",
            r.r2_annual,
            m.map(|m| m.r2_annual),
        ));
        rows.push(info(
            C,
            r.model,
            "r2_cumulative",
            r.r2_cumulative,
            m.map(|m| m.r2_cumulative),
        ));
    }
    if let Some(m) = fitted(fits, "cpi_l_early") {
        rows.push(info(
            C,
            "cpi_l_early",
            "slope",
            reference::EARLY_CPI_SLOPE,
            Some(m.segment1.slopes[0].value),
        ));
        rows.push(info(
            C,
            "cpi_l_early",
            "intercept",
            reference::EARLY_CPI_INTERCEPT,
            Some(m.segment1.intercept.value),
        ));
        rows.push(info(
            C,
            "cpi_l_early",
            "deflation_threshold",
            reference::EARLY_CPI_THRESHOLD,
            m.segment1.deflation_threshold().ok(),
        ));
    }
    for g in &reference::GENERALIZED {
        let m = fitted(fits, g.model);
        let s2 = m.and_then(|m| m.segment2.as_ref());
        rows.push(info(
            C,
            g.model,
            "slope_l1",
            g.slope_l[0],
            m.map(|m| m.segment1.slopes[0].value),
        ));
        rows.push(info(
            C,
            g.model,
            "intercept1",
            g.intercept[0],
            m.map(|m| m.segment1.intercept.value),
        ));
        rows.push(info(
            C,
            g.model,
            "slope_l2",
            g.slope_l[1],
            s2.map(|s| s.slopes[0].value),
        ));
        rows.push(info(
            C,
            g.model,
            "intercept2",
            g.intercept[1],
            s2.map(|s| s.intercept.value),
        ));
        rows.push(info(
            C,
            g.model,
            "r2_annual",
            g.r2_annual,
            m.map(|m| m.r2_annual),
        ));
    }
    rows
}

/// Means, standard deviations, no-change errors and sub-period volatility
/// over the model window, within 0.0005.
pub fn descriptive_rows(ctx: &Context) -> Vec<DiffRow> {
    const C: &str = "descriptive";
    let w = ctx.config.model_window;
    let mut rows = Vec::new();
    for r in &reference::DESCRIPTIVE {
        let Some(full) = ctx.registry.prepared(r.series) else {
            rows.push(row(
                C, r.series, "series", None, None, "present", true, false,
            ));
            continue;
        };
        let x = full
            .window(
                w.first_year.max(full.start_year()),
                w.last_year.min(full.end_year()),
            )
            .ok();
        let d = x.as_ref().and_then(|x| eval::descriptive(x).ok());
        rows.push(close(
            C,
            r.series,
            "mean",
            r.mean,
            d.map(|d| d.mean),
            LEVEL_TOL,
            true,
        ));
        rows.push(close(
            C,
            r.series,
            "st_dev",
            r.st_dev,
            d.map(|d| d.st_dev),
            LEVEL_TOL,
            true,
        ));
        for (i, reference) in r.naive.iter().enumerate() {
            if let Some(reference) = reference {
                let h = i + 1;
                let got = eval::naive_rmsfe_window(full, h, w).ok().map(|v| v.0);
                rows.push(close(
                    C,
                    r.series,
                    &format!("naive_rmsfe{h}"),
                    *reference,
                    got,
                    LEVEL_TOL,
                    true,
                ));
            }
        }
        let v = x
            .as_ref()
            .and_then(|x| eval::subperiod_volatility(x, eval::SPLIT_YEAR).ok());
        rows.push(close(
            C,
            r.series,
            "sd1",
            r.sd1,
            v.map(|v| v.sd1),
            LEVEL_TOL,
            true,
        ));
        rows.push(close(
            C,
            r.series,
            "sd2",
            r.sd2,
            v.map(|v| v.sd2),
            LEVEL_TOL,
            true,
        ));
    }
    rows
}

pub fn vecm_rolling(m: &BreakModel, h: usize) -> Result<vecm::RollingEval, String> {
    let (p, x) = model_curves(m);
    vecm::rolling_rmsfe(&p, &x, VecmOptions::default(), h, VECM_MIN_TRAIN)
        .map_err(|e| e.to_string())
}

/// Model error against the no-change error at the stated horizon, and the
/// error-correction rolling-origin errors against their bounds.
pub fn forecast_rows(ctx: &Context, fits: &Fits) -> Vec<DiffRow> {
    const C: &str = "forecast_errors";
    let w = ctx.config.model_window;
    let mut rows = Vec::new();
    for r in &reference::FORECAST_ERRORS {
        let m = fitted(fits, r.model);
        let model = m.map(|m| m.rmse_annual);
        let naive = m.and_then(|m| {
            ctx.registry
                .prepared(&m.form.dependent)
                .and_then(|s| eval::naive_rmsfe_window(s, r.horizon, w).ok())
                .map(|v| v.0)
        });
        rows.push(info(C, r.model, "model_rmsfe", r.model_rmsfe, model));
        rows.push(info(
            C,
            r.model,
            &format!("naive_rmsfe{}", r.horizon),
            r.naive_rmsfe,
            naive,
        ));
        let ratio = model.zip(naive).map(|(a, b)| b / a);
        let pass = ratio.is_some_and(|v| v >= r.min_ratio);
        rows.push(row(
            C,
            r.model,
            "naive_over_model",
            Some(r.naive_rmsfe / r.model_rmsfe),
            ratio,
            format!(">={}", r.min_ratio),
            true,
            pass,
        ));
    }
    for r in &reference::VECM {
        let got =
            fitted(fits, r.model).and_then(|m| vecm_rolling(m, r.horizon).ok().map(|e| e.rmsfe));
        let pass = got.is_some_and(|v| v <= r.bound);
        rows.push(row(
            C,
            r.model,
            &format!("vecm_rmsfe{}", r.horizon),
            Some(r.rmsfe),
            got,
            format!("<={}", r.bound),
            true,
            pass,
        ));
    }
    rows
}

/// Johansen rank 1 for the four pairs; residual ADF rejects at 1% for the
/// unsmoothed predictor and does not reject for the MA(3) predictor.
pub fn cointegration_rows(fits: &Fits) -> Vec<DiffRow> {
    const C: &str = "cointegration";
    let mut rows = Vec::new();
    for r in &reference::COINTEGRATION {
        let m = fitted(fits, r.model);
        let curves = m.map(model_curves);
        let j = curves.as_ref().and_then(|(p, x)| {
            stattests::johansen_trace(p, x, JOHANSEN_LAG, DeterministicSpec::None).ok()
        });
        let rank = j.as_ref().and_then(|j| j.rank).map(|r| r as f64);
        rows.push(close(
            C,
            r.model,
            "johansen_rank",
            r.rank as f64,
            rank,
            0.0,
            true,
        ));
        rows.push(info(
            C,
            r.model,
            "eigenvalue",
            r.eigenvalue,
            j.as_ref().and_then(|j| j.value("eigenvalue_1")),
        ));
        let c = curves
            .as_ref()
            .and_then(|(p, x)| stattests::engle_granger_cadf(p, x).ok());
        let adf = c.as_ref().and_then(|c| c.value("adf"));
        let smoothed = r.model.ends_with("_l3");
        let reject = c
            .as_ref()
            .and_then(|c| c.stat("adf"))
            .map(|s| s.rejects_at(0.01));
        let (tolerance, pass) = if smoothed {
            ("no rejection at 1%", reject == Some(false))
        } else {
            ("rejection at 1%", reject == Some(true))
        };
        rows.push(row(
            C,
            r.model,
            "cadf_cumulative",
            Some(r.adf_cumulative),
            adf,
            tolerance,
            true,
            pass,
        ));
        rows.push(info(
            C,
            r.model,
            "adf_annual",
            r.adf_annual,
            c.as_ref().and_then(|c| c.value("adf_annual")),
        ));
        rows.push(info(
            C,
            r.model,
            "pp_z_rho_annual",
            r.pp_annual,
            c.as_ref().and_then(|c| c.value("pp_z_rho_annual")),
        ));
        rows.push(info(
            C,
            r.model,
            "pp_z_rho_cumulative",
            r.pp_cumulative,
            c.as_ref().and_then(|c| c.value("pp_z_rho")),
        ));
    }
    rows
}

/// Series used for the unit-root table: the model window for rates that
/// are modelled, the full support for the labour-force rate.
pub fn unit_root_input(ctx: &Context, name: &str) -> Option<phillips_lf::AnnualSeries> {
    let s = ctx.registry.prepared(name)?;
    if name.starts_with("l_") {
        return Some(s.clone());
    }
    let w = ctx.config.model_window;
    s.window(
        w.first_year.max(s.start_year()),
        w.last_year.min(s.end_year()),
    )
    .ok()
}

pub fn unit_root_rows(ctx: &Context) -> Vec<DiffRow> {
    const C: &str = "unit_root";
    let mut rows = Vec::new();
    let det = DeterministicSpec::Constant;
    for r in &reference::UNIT_ROOT {
        let Some(x) = unit_root_input(ctx, r.series) else {
            continue;
        };
        let d = x.diff().ok();
        let adf = |s: &phillips_lf::AnnualSeries| {
            stattests::adf_test(s, 4, det)
                .ok()
                .and_then(|t| t.value("tau"))
        };
        let pp = |s: &phillips_lf::AnnualSeries, k: &str| {
            stattests::pp_test(s, det, Bandwidth::Automatic)
                .ok()
                .and_then(|t| t.value(k))
        };
        let cells = [
            ("adf", r.adf, adf(&x)),
            ("pp_z_rho", r.pp_z_rho, pp(&x, "z_rho")),
            ("pp_z_t", r.pp_z_t, pp(&x, "z_t")),
            ("adf_diff", r.adf_diff, d.as_ref().and_then(adf)),
            (
                "pp_z_rho_diff",
                r.pp_z_rho_diff,
                d.as_ref().and_then(|d| pp(d, "z_rho")),
            ),
            (
                "pp_z_t_diff",
                r.pp_z_t_diff,
                d.as_ref().and_then(|d| pp(d, "z_t")),
            ),
        ];
        for (q, reference, got) in cells {
            if let Some(reference) = reference {
                rows.push(info(C, r.series, q, reference, got));
            }
        }
    }
    rows
}

pub fn all_rows(ctx: &Context, fits: &Fits) -> Vec<DiffRow> {
    let mut rows = unit_root_rows(ctx);
    rows.extend(descriptive_rows(ctx));
    rows.extend(break_model_rows(fits));
    rows.extend(forecast_rows(ctx, fits));
    rows.extend(cointegration_rows(fits));
    rows
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CheckSummary {
    pub passed: usize,
    pub total: usize,
}

impl CheckSummary {
    pub fn pass(&self) -> bool {
        self.passed == self.total
    }
}

pub fn summarize(rows: &[DiffRow], check: &str) -> CheckSummary {
    let gated: Vec<&DiffRow> = rows.iter().filter(|r| r.check == check && r.gate).collect();
    CheckSummary {
        passed: gated.iter().filter(|r| r.pass).count(),
        total: gated.len(),
    }
}

pub fn rows_csv(rows: &[DiffRow]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.check.clone(),
                r.item.clone(),
                r.quantity.clone(),
                opt(r.reference),
                opt(r.reproduced),
                opt(r.diff),
                r.tolerance.clone(),
                r.gate.to_string(),
                r.pass.to_string(),
            ]
        })
        .collect();
    csv_string(
        &[
            "check",
            "item",
            "quantity",
            "reference",
            "reproduced",
            "diff",
            "tolerance",
            "gate",
            "pass",
        ],
        &body,
    )
}

/// Plain-text summary with one line per check and every failing gated row.
pub fn rows_markdown(rows: &[DiffRow]) -> String {
    let mut s = String::from("# Reference comparison\n\n");
    s.push_str("`diff` is reproduced minus reference. Informational rows are not gated.\n\n");
    for check in [
        "descriptive",
        "break_models",
        "forecast_errors",
        "cointegration",
    ] {
        let c = summarize(rows, check);
        s.push_str(&format!(
            "- {check}: {}/{} gated rows within tolerance ({})\n",
            c.passed,
            c.total,
            if c.pass() { "pass" } else { "fail" }
        ));
    }
    s.push_str("\n| check | item | quantity | reference | reproduced | diff | tolerance |\n|---|---|---|---|---|---|---|\n");
    for r in rows.iter().filter(|r| r.gate && !r.pass) {
        s.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} | {} |\n",
            r.check,
            r.item,
            r.quantity,
            opt(r.reference),
            opt(r.reproduced),
            opt(r.diff),
            r.tolerance
        ));
    }
    s
}
