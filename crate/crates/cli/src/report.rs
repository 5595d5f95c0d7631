//! `report`: every table and figure for a dataset config, plus the
//! reference comparison, installed as one directory.

use std::path::{Path, PathBuf};

use serde::Serialize;

use phillips_lf::bem;
use phillips_lf::eval::{self, EvalTable, Period};
use phillips_lf::series::{self, log_change_rate};
use phillips_lf::stattests::{self, mc, Bandwidth, DeterministicSpec, TestReport};
use phillips_lf::vecm::{self, VecmOptions};
use phillips_lf::{AnnualSeries, Unit};

use crate::commands::{compute_forecast, forecast_csv, model_curves, write_model};
use crate::output::{Install, Staging};
use crate::repro::{self, Fits, JOHANSEN_LAG};
use crate::svg::{line_chart, Line};
use crate::tables::{self, csv_string, json, num, opt};
use crate::{CliError, Context, ReportArgs};

const RATE_SERIES: [&str; 3] = ["cpi_oecd", "dgdp_oecd", "u_oecd"];
const INFLATION: [&str; 2] = ["cpi_oecd", "dgdp_oecd"];

#[derive(Debug, Clone, Serialize)]
struct TestRow {
    series: String,
    transform: &'static str,
    test: &'static str,
    deterministic: &'static str,
    statistic: String,
    value: Option<f64>,
    cv1: Option<f64>,
    cv5: Option<f64>,
    cv10: Option<f64>,
    reject5: Option<bool>,
    nobs: usize,
    setting: String,
}

fn det_name(d: DeterministicSpec) -> &'static str {
    match d {
        DeterministicSpec::None => "none",
        DeterministicSpec::Constant => "constant",
        DeterministicSpec::ConstantAndTrend => "trend",
    }
}

fn test_rows(
    series: &str,
    transform: &'static str,
    test: &'static str,
    det: DeterministicSpec,
    r: &TestReport,
) -> Vec<TestRow> {
    let setting = r
        .settings
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(";");
    r.statistics
        .iter()
        .map(|(k, s)| {
            let cv = |lvl: f64| {
                s.critical_values
                    .iter()
                    .find(|c| c.level == lvl)
                    .map(|c| c.value)
            };
            TestRow {
                series: series.into(),
                transform,
                test,
                deterministic: det_name(det),
                statistic: k.clone(),
                value: s.value.is_finite().then_some(s.value),
                cv1: cv(0.01),
                cv5: cv(0.05),
                cv10: cv(0.10),
                reject5: (!s.critical_values.is_empty()).then(|| s.rejects_at(0.05)),
                nobs: r.nobs,
                setting: setting.clone(),
            }
        })
        .collect()
}

fn test_rows_csv(rows: &[TestRow]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.series.clone(),
                r.transform.into(),
                r.test.into(),
                r.deterministic.into(),
                r.statistic.clone(),
                opt(r.value),
                opt(r.cv1),
                opt(r.cv5),
                opt(r.cv10),
                r.reject5.map(|b| b.to_string()).unwrap_or_default(),
                r.nobs.to_string(),
                r.setting.clone(),
            ]
        })
        .collect();
    csv_string(
        &[
            "series",
            "transform",
            "test",
            "deterministic",
            "statistic",
            "value",
            "cv1",
            "cv5",
            "cv10",
            "reject5",
            "nobs",
            "setting",
        ],
        &body,
    )
}

/// ADF and PP on levels and differences, with and without a trend.
fn unit_root_table(ctx: &Context) -> Vec<TestRow> {
    let mut rows = Vec::new();
    for r in &phillips_lf::reference::UNIT_ROOT {
        let Some(x) = repro::unit_root_input(ctx, r.series) else {
            continue;
        };
        let d = x.diff().ok();
        for det in [
            DeterministicSpec::Constant,
            DeterministicSpec::ConstantAndTrend,
        ] {
            for (transform, s) in [("level", Some(&x)), ("difference", d.as_ref())] {
                let Some(s) = s else { continue };
                if let Ok(t) = stattests::adf_test(s, 4, det) {
                    rows.extend(test_rows(r.series, transform, "adf", det, &t));
                }
                if let Ok(t) = stattests::pp_test(s, det, Bandwidth::Automatic) {
                    rows.extend(test_rows(r.series, transform, "pp", det, &t));
                }
            }
        }
    }
    rows
}

fn descriptive_csv(ctx: &Context) -> String {
    let w = ctx.config.model_window;
    let mut rows = Vec::new();
    for name in RATE_SERIES {
        let Some(full) = ctx.registry.prepared(name) else {
            continue;
        };
        let Ok(x) = full.window(
            w.first_year.max(full.start_year()),
            w.last_year.min(full.end_year()),
        ) else {
            continue;
        };
        let d = eval::descriptive(&x).ok();
        let v = eval::subperiod_volatility(&x, eval::SPLIT_YEAR).ok();
        let mut r = vec![
            name.to_string(),
            x.start_year().to_string(),
            x.end_year().to_string(),
            opt(d.map(|d| d.mean)),
            opt(d.map(|d| d.st_dev)),
        ];
        for h in 1..=5 {
            r.push(opt(eval::naive_rmsfe_window(full, h, w).ok().map(|v| v.0)));
        }
        r.push(opt(v.map(|v| v.sd1)));
        r.push(opt(v.map(|v| v.sd2)));
        rows.push(r);
    }
    csv_string(
        &[
            "series",
            "first_year",
            "last_year",
            "mean",
            "st_dev",
            "naive_rmsfe1",
            "naive_rmsfe2",
            "naive_rmsfe3",
            "naive_rmsfe4",
            "naive_rmsfe5",
            "sd1",
            "sd2",
        ],
        &rows,
    )
}

/// In-sample model errors against the no-change forecast at the model's
/// effective horizon, over the full window and either side of the split.
fn forecast_error_table(ctx: &Context, fits: &Fits) -> EvalTable {
    let mut t = EvalTable::default();
    for (name, m) in fits {
        let Ok(m) = m else { continue };
        if m.form.predictors.len() != 1 || m.segment2.is_none() {
            continue;
        }
        let Some(dep) = ctx.registry.prepared(&m.form.dependent) else {
            continue;
        };
        let h = m.effective_horizon.clamp(1, 5) as usize;
        let periods = [
            Period::Custom {
                first_year: m.window.first_year,
                last_year: m.window.last_year,
            },
            Period::PreBreak,
            Period::PostBreak,
        ];
        for p in periods {
            let Ok(s) = eval::model_rmsfe(&m.fitted_annual, &m.observed_annual, p) else {
                continue;
            };
            let win = phillips_lf::ingest::YearWindow {
                first_year: s.first_year,
                last_year: s.last_year,
            };
            let Ok((naive, _)) = eval::naive_rmsfe_window(dep, h, win) else {
                continue;
            };
            let label = if matches!(p, Period::Custom { .. }) {
                "full".to_string()
            } else {
                p.label()
            };
            t.push(name, h, &label, s, naive);
        }
    }
    t
}

#[derive(Debug, Clone, Serialize)]
struct CointegrationRow {
    model: String,
    cadf: Option<TestReport>,
    johansen_none: Option<TestReport>,
    johansen_constant: Option<TestReport>,
}

fn cointegration_table(fits: &Fits) -> (Vec<CointegrationRow>, String) {
    let mut out = Vec::new();
    let mut rows = Vec::new();
    for (name, m) in fits {
        let Ok(m) = m else { continue };
        if m.form.predictors.len() != 1 || m.segment2.is_none() {
            continue;
        }
        let (p, x) = model_curves(m);
        let cadf = stattests::engle_granger_cadf(&p, &x).ok();
        let jn = stattests::johansen_trace(&p, &x, JOHANSEN_LAG, DeterministicSpec::None).ok();
        let jc = stattests::johansen_trace(&p, &x, JOHANSEN_LAG, DeterministicSpec::Constant).ok();
        let v = |r: &Option<TestReport>, k: &str| opt(r.as_ref().and_then(|r| r.value(k)));
        let rank = |r: &Option<TestReport>| {
            r.as_ref()
                .and_then(|r| r.rank)
                .map(|k| k.to_string())
                .unwrap_or_default()
        };
        rows.push(vec![
            name.clone(),
            v(&cadf, "adf"),
            v(&cadf, "pp_z_t"),
            v(&cadf, "pp_z_rho"),
            v(&cadf, "adf_annual"),
            v(&cadf, "pp_z_t_annual"),
            v(&cadf, "pp_z_rho_annual"),
            cadf.as_ref()
                .and_then(|c| c.stat("adf"))
                .map(|s| s.rejects_at(0.01).to_string())
                .unwrap_or_default(),
            v(&jn, "trace_r0"),
            v(&jn, "trace_r1"),
            v(&jn, "eigenvalue_1"),
            rank(&jn),
            v(&jc, "trace_r0"),
            v(&jc, "trace_r1"),
            rank(&jc),
        ]);
        out.push(CointegrationRow {
            model: name.clone(),
            cadf,
            johansen_none: jn,
            johansen_constant: jc,
        });
    }
    let csv = csv_string(
        &[
            "model",
            "cadf_adf",
            "cadf_pp_z_t",
            "cadf_pp_z_rho",
            "adf_annual",
            "pp_z_t_annual",
            "pp_z_rho_annual",
            "cadf_rejects_1pct",
            "johansen_trace_r0",
            "johansen_trace_r1",
            "johansen_eigenvalue",
            "johansen_rank",
            "johansen_const_trace_r0",
            "johansen_const_trace_r1",
            "johansen_const_rank",
        ],
        &rows,
    );
    (out, csv)
}

#[derive(Debug, Clone, Serialize)]
struct VecmRow {
    model: String,
    fit: Option<vecm::VecmModel>,
    rolling_rmsfe: Vec<Option<f64>>,
}

fn vecm_table(fits: &Fits) -> (Vec<VecmRow>, String) {
    let mut out = Vec::new();
    let mut rows = Vec::new();
    for (name, m) in fits {
        let Ok(m) = m else { continue };
        if m.form.predictors.len() != 1 || m.segment2.is_none() {
            continue;
        }
        let (p, x) = model_curves(m);
        let fit = vecm::fit_vecm_with(&p, &x, VecmOptions::default()).ok();
        let rolling: Vec<Option<f64>> = (1..=5)
            .map(|h| repro::vecm_rolling(m, h).ok().map(|e| e.rmsfe))
            .collect();
        let mut r = vec![
            name.clone(),
            opt(fit.as_ref().map(|f| f.gamma1)),
            opt(fit.as_ref().map(|f| f.gamma2)),
            fit.as_ref()
                .map(|f| (f.short_run.len() + 1).to_string())
                .unwrap_or_default(),
            opt(fit.as_ref().map(|f| f.residual_sd)),
            fit.as_ref()
                .map(|f| f.stable.to_string())
                .unwrap_or_default(),
        ];
        r.extend(rolling.iter().map(|v| opt(*v)));
        rows.push(r);
        out.push(VecmRow {
            model: name.clone(),
            fit,
            rolling_rmsfe: rolling,
        });
    }
    let csv = csv_string(
        &[
            "model",
            "gamma1",
            "gamma2",
            "var_order",
            "residual_sd",
            "stable",
            "rmsfe1",
            "rmsfe2",
            "rmsfe3",
            "rmsfe4",
            "rmsfe5",
        ],
        &rows,
    );
    (out, csv)
}

fn level_series(v: Vec<f64>) -> AnnualSeries {
    AnnualSeries::new(1970, v, Unit::Level, "sim").expect("finite draws")
}

#[derive(Debug, Clone, Serialize)]
struct McRow {
    experiment: &'static str,
    n: usize,
    reps: usize,
    rejection_rate: f64,
    nominal: f64,
}

/// Rejection rates at 5% on simulated data of the dataset's length: sizes
/// under a unit root or no cointegration, power under error correction.
fn monte_carlo(reps: usize, seed: u64, n: usize) -> Vec<McRow> {
    let five = |r: Result<TestReport, stattests::TestError>, k: &str| {
        r.ok()
            .and_then(|r| r.stat(k).map(|s| s.rejects_at(0.05)))
            .unwrap_or(false)
    };
    let rw = |s: u64| {
        mc::rate(reps, seed ^ s, |rng| {
            let x = level_series(mc::random_walk(rng, n));
            match s {
                1 => five(
                    stattests::adf_test(&x, 4, DeterministicSpec::Constant),
                    "tau",
                ),
                _ => five(
                    stattests::pp_test(&x, DeterministicSpec::Constant, Bandwidth::Automatic),
                    "z_t",
                ),
            }
        })
    };
    let pair = |s: u64| {
        mc::rate(reps, seed ^ s, |rng| {
            let a = level_series(mc::random_walk(rng, n));
            let b = level_series(mc::random_walk(rng, n));
            match s {
                3 => five(stattests::engle_granger_cadf(&a, &b), "adf"),
                _ => five(
                    stattests::johansen_trace(&a, &b, JOHANSEN_LAG, DeterministicSpec::None),
                    "trace_r0",
                ),
            }
        })
    };
    let power = mc::rate(reps, seed ^ 5, |rng| {
        let (p, x) = vecm::simulate(rng, n, 0.5, 1.0, 1.0);
        five(
            stattests::johansen_trace(
                &level_series(p),
                &level_series(x),
                JOHANSEN_LAG,
                DeterministicSpec::None,
            ),
            "trace_r0",
        )
    });
    let row = |experiment, rejection_rate| McRow {
        experiment,
        n,
        reps,
        rejection_rate,
        nominal: 0.05,
    };
    vec![
        row("adf_size_random_walk", rw(1)),
        row("pp_z_t_size_random_walk", rw(2)),
        row("cadf_size_independent_walks", pair(3)),
        row("johansen_size_independent_walks", pair(4)),
        row("johansen_power_error_correction_0.5", power),
    ]
}

fn chart(title: &str, y: &str, lines: &[(&str, &AnnualSeries, bool)]) -> String {
    let ls: Vec<Line> = lines
        .iter()
        .map(|(label, series, dashed)| Line {
            label,
            series,
            dashed: *dashed,
        })
        .collect();
    line_chart(title, y, &ls)
}

fn series_csv(cols: &[(&str, &AnnualSeries)]) -> String {
    let first = cols.iter().map(|(_, s)| s.start_year()).min().unwrap_or(0);
    let last = cols.iter().map(|(_, s)| s.end_year()).max().unwrap_or(-1);
    let rows: Vec<Vec<String>> = (first..=last)
        .map(|y| {
            let mut r = vec![y.to_string()];
            r.extend(cols.iter().map(|(_, s)| opt(s.get(y))));
            r
        })
        .collect();
    let mut header = vec!["year"];
    header.extend(cols.iter().map(|(n, _)| *n));
    csv_string(&header, &rows)
}

fn figure(
    st: &mut Staging,
    stem: &str,
    title: &str,
    y: &str,
    lines: &[(&str, &AnnualSeries, bool)],
) -> Result<(), CliError> {
    let cols: Vec<(&str, &AnnualSeries)> = lines.iter().map(|(n, s, _)| (*n, *s)).collect();
    st.write(&format!("figures/{stem}.csv"), series_csv(&cols))?;
    st.write(&format!("figures/{stem}.svg"), chart(title, y, lines))
}

fn data_figures(st: &mut Staging, ctx: &Context) -> Result<(), CliError> {
    let w = ctx.config.model_window;
    let rates: Vec<(&str, AnnualSeries)> = INFLATION
        .iter()
        .filter_map(|n| ctx.registry.prepared(n).map(|s| (*n, s.clone())))
        .collect();
    if !rates.is_empty() {
        let lines: Vec<(&str, &AnnualSeries, bool)> =
            rates.iter().map(|(n, s)| (*n, s, false)).collect();
        figure(st, "inflation_rates", "Inflation", "rate per year", &lines)?;
        let cum: Vec<(&str, AnnualSeries)> = rates
            .iter()
            .filter_map(|(n, s)| {
                s.window(
                    w.first_year.max(s.start_year()),
                    w.last_year.min(s.end_year()),
                )
                .ok()
                .map(|x| (*n, series::cumulate(&x, 0.0)))
            })
            .collect();
        let lines: Vec<(&str, &AnnualSeries, bool)> =
            cum.iter().map(|(n, s)| (*n, s, false)).collect();
        figure(
            st,
            "cumulative_inflation",
            "Cumulative inflation",
            "cumulative rate",
            &lines,
        )?;
    }
    if let Some(lf) = ctx.registry.prepared("lf_oecd") {
        figure(
            st,
            "labour_force_level",
            "Labour force",
            "level",
            &[("lf_oecd", lf, false)],
        )?;
    }
    if let Some(rec) = ctx.registry.get("l_oecd") {
        let raw = if rec.raw.unit() == Unit::Level {
            log_change_rate(&rec.raw).ok()
        } else {
            Some(rec.raw.clone())
        };
        let mut lines = vec![("repaired", &rec.prepared, false)];
        if let Some(raw) = &raw {
            lines.insert(0, ("raw", raw, true));
        }
        figure(
            st,
            "labour_force_rate",
            "Labour force change rate",
            "rate per year",
            &lines,
        )?;
    }
    if let Some(u) = ctx.registry.prepared("u_oecd") {
        figure(
            st,
            "unemployment",
            "Unemployment",
            "fraction of labour force",
            &[("u_oecd", u, false)],
        )?;
    }
    Ok(())
}

pub fn report(a: &ReportArgs, out: &Path, seed: u64, argv: &[String]) -> Result<PathBuf, CliError> {
    let ctx = Context::load(&a.config)?;
    let fits = repro::fit_all(&ctx);
    let mut st = Staging::new(out)?;

    let ur = unit_root_table(&ctx);
    st.write("tables/unit_root_tests.csv", test_rows_csv(&ur))?;
    st.write("tables/unit_root_tests.json", json(&ur))?;

    st.write("tables/descriptive_statistics.csv", descriptive_csv(&ctx))?;

    let mut bm_rows = Vec::new();
    let mut failures = Vec::new();
    for (name, m) in &fits {
        match m {
            Ok(m) => {
                bm_rows.push(tables::break_model_row(name, m));
                write_model(&mut st, "models/", name, m)?;
            }
            Err(e) => failures.push(vec![name.clone(), e.clone()]),
        }
    }
    st.write(
        "tables/break_models.csv",
        csv_string(&tables::BREAK_MODEL_HEADER, &bm_rows),
    )?;
    let ok: std::collections::BTreeMap<&String, &bem::BreakModel> = fits
        .iter()
        .filter_map(|(k, v)| v.as_ref().ok().map(|m| (k, m)))
        .collect();
    st.write("tables/break_models.json", json(&ok))?;
    if !failures.is_empty() {
        st.write(
            "tables/failed_models.csv",
            csv_string(&["model", "error"], &failures),
        )?;
    }

    let mut gen_rows = Vec::new();
    let mut gen_json = std::collections::BTreeMap::new();
    for (name, mc) in &ctx.config.models {
        if mc.predictors.len() < 2 {
            continue;
        }
        let search = mc.search(&ctx.base_search());
        if let Ok(g) = bem::fit_generalized(
            &mc.form(),
            &ctx.registry,
            ctx.config.model_window,
            &search,
            true,
        ) {
            let mut r = tables::break_model_row(name, &g.pinned);
            r.insert(1, "pinned".into());
            gen_rows.push(r);
            if let Some(f) = &g.freed {
                let mut r = tables::break_model_row(name, f);
                r.insert(1, "freed".into());
                gen_rows.push(r);
            }
            gen_json.insert(name.clone(), g);
        }
    }
    let mut gen_header: Vec<&str> = tables::BREAK_MODEL_HEADER.to_vec();
    gen_header.insert(1, "variant");
    st.write(
        "tables/generalized_models.csv",
        csv_string(&gen_header, &gen_rows),
    )?;
    st.write("tables/generalized_models.json", json(&gen_json))?;

    let fe = forecast_error_table(&ctx, &fits);
    st.write("tables/forecast_errors.csv", fe.to_csv())?;
    st.write("tables/forecast_errors.json", fe.to_json() + "\n")?;

    let (co, co_csv) = cointegration_table(&fits);
    st.write("tables/cointegration_tests.csv", co_csv)?;
    st.write("tables/cointegration_tests.json", json(&co))?;

    let (vm, vm_csv) = vecm_table(&fits);
    st.write("tables/vecm_models.csv", vm_csv)?;
    st.write("tables/vecm_models.json", json(&vm))?;

    let n = ctx.config.model_window.last_year - ctx.config.model_window.first_year + 1;
    let mcr = monte_carlo(a.mc_reps, seed, n as usize);
    let mc_rows: Vec<Vec<String>> = mcr
        .iter()
        .map(|r| {
            vec![
                r.experiment.into(),
                r.n.to_string(),
                r.reps.to_string(),
                num(r.rejection_rate),
                num(r.nominal),
            ]
        })
        .collect();
    st.write(
        "tables/monte_carlo_calibration.csv",
        csv_string(
            &["experiment", "n", "reps", "rejection_rate", "nominal"],
            &mc_rows,
        ),
    )?;
    st.write("tables/monte_carlo_calibration.json", json(&mcr))?;

    for (name, m) in &fits {
        let Ok(m) = m else { continue };
        let Ok(last) = bem::last_predictable_year(m, &ctx.registry) else {
            continue;
        };
        let h = (last - m.window.last_year).max(0) as usize;
        let with_vecm = m.segment2.is_some() && m.form.predictors.len() == 1;
        let Ok(f) = compute_forecast(&ctx, name, h, with_vecm) else {
            continue;
        };
        st.write(&format!("forecasts/{name}.csv"), forecast_csv(&f))?;
        if name == "cpi_l_early" {
            let svg = chart(
                "CPI on l(t-5) fitted 1970-1990, extended",
                "rate per year",
                &[
                    (
                        "observed",
                        ctx.registry
                            .prepared(&m.form.dependent)
                            .unwrap_or(&m.observed_annual),
                        false,
                    ),
                    ("predicted", &f.prediction.annual, true),
                ],
            );
            st.write("figures/cpi_early_extended.svg", svg)?;
            st.write(
                "figures/cpi_early_extended.csv",
                series_csv(&[
                    (
                        "observed",
                        ctx.registry
                            .prepared(&m.form.dependent)
                            .unwrap_or(&m.observed_annual),
                    ),
                    ("predicted", &f.prediction.annual),
                ]),
            )?;
        }
    }

    data_figures(&mut st, &ctx)?;

    let rows = repro::all_rows(&ctx, &fits);
    st.write("reference_diff.csv", repro::rows_csv(&rows))?;
    st.write("reference_diff.md", repro::rows_markdown(&rows))?;

    st.commit(ctx.manifest(argv, seed), Install::Replace)
}
