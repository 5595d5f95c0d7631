//! `estimate`, `test` and `forecast`.

use std::path::{Path, PathBuf};

use phillips_lf::bem::{self, BreakModel};
use phillips_lf::stattests::{self, Bandwidth, DeterministicSpec, TestReport};
use phillips_lf::vecm;
use phillips_lf::AnnualSeries;

use crate::output::{Install, Staging};
use crate::svg::{line_chart, Line};
use crate::tables::{self, csv_string, num};
use crate::{CliError, Context, EstimateArgs, ForecastArgs, Range, TestArgs, TestKind};

fn run_err(e: impl std::fmt::Display) -> CliError {
    CliError::Run(e.to_string())
}

/// Annual and cumulative observed-vs-fitted charts.
pub fn model_plots(name: &str, m: &BreakModel) -> (String, String) {
    let brk = m
        .break_year
        .map(|b| format!(", break after {b}"))
        .unwrap_or_default();
    let title = format!("{} (lag {}{brk})", m.form.describe(), m.lag);
    let annual = line_chart(
        &title,
        &format!("{name}: rate per year"),
        &[
            Line {
                label: "observed",
                series: &m.observed_annual,
                dashed: false,
            },
            Line {
                label: "predicted",
                series: &m.fitted_annual,
                dashed: true,
            },
        ],
    );
    let cumulative = line_chart(
        &title,
        &format!("{name}: cumulative"),
        &[
            Line {
                label: "observed",
                series: &m.observed_cumulative,
                dashed: false,
            },
            Line {
                label: "predicted",
                series: &m.fitted_cumulative,
                dashed: true,
            },
        ],
    );
    (annual, cumulative)
}

/// Writes the record, residual tables, grid and plots for one fitted model
/// under `prefix`.
pub fn write_model(
    st: &mut Staging,
    prefix: &str,
    name: &str,
    m: &BreakModel,
) -> Result<(), CliError> {
    st.write(&format!("{prefix}{name}.json"), m.to_json() + "\n")?;
    st.write(&format!("{prefix}{name}_annual.csv"), tables::annual_csv(m))?;
    st.write(
        &format!("{prefix}{name}_cumulative.csv"),
        tables::cumulative_csv(m),
    )?;
    st.write(&format!("{prefix}{name}_grid.csv"), tables::grid_csv(m))?;
    let (a, c) = model_plots(name, m);
    st.write(&format!("{prefix}{name}_annual.svg"), a)?;
    st.write(&format!("{prefix}{name}_cumulative.svg"), c)?;
    Ok(())
}

pub fn estimate(
    a: &EstimateArgs,
    out: &Path,
    seed: u64,
    argv: &[String],
) -> Result<PathBuf, CliError> {
    let ctx = Context::load(&a.config)?;
    let m = ctx.fit(&a.model, &a.fit)?;
    let mut st = Staging::new(out)?;
    write_model(&mut st, "", &a.model, &m)?;
    st.commit(ctx.manifest(argv, seed), Install::Merge)
}

fn window(s: &AnnualSeries, w: Option<Range>) -> Result<AnnualSeries, CliError> {
    match w {
        None => Ok(s.clone()),
        Some(Range(a, b)) => s
            .window(a.max(s.start_year()), b.min(s.end_year()))
            .map_err(run_err),
    }
}

/// Measured and predicted cumulative curves of a fitted model, labelled.
pub fn model_curves(m: &BreakModel) -> (AnnualSeries, AnnualSeries) {
    (
        m.observed_cumulative.clone().with_label("measured"),
        m.fitted_cumulative.clone().with_label("predicted"),
    )
}

pub fn test(a: &TestArgs, out: &Path, seed: u64, argv: &[String]) -> Result<PathBuf, CliError> {
    let ctx = Context::load(&a.config)?;
    let (report, stem): (TestReport, String) = match a.test {
        TestKind::Adf | TestKind::Pp => {
            let Some(name) = &a.series else {
                return Err(CliError::Usage(
                    format!("--test {:?} needs --series", a.test).to_lowercase(),
                ));
            };
            let s = ctx
                .registry
                .prepared(name)
                .ok_or_else(|| CliError::Usage(format!("unknown series `{name}`")))?;
            let mut s = window(s, a.window)?;
            if a.diff {
                s = s.diff().map_err(run_err)?;
            }
            let det: DeterministicSpec =
                a.det.map(Into::into).unwrap_or(DeterministicSpec::Constant);
            let r = if a.test == TestKind::Adf {
                stattests::adf_test(&s, a.max_lag, det)
            } else {
                stattests::pp_test(&s, det, Bandwidth::Automatic)
            }
            .map_err(run_err)?;
            let tag = if a.test == TestKind::Adf { "adf" } else { "pp" };
            let d = if a.diff { "_diff" } else { "" };
            (r, format!("{name}{d}_{tag}"))
        }
        TestKind::Cadf | TestKind::Johansen => {
            let Some(name) = &a.model else {
                return Err(CliError::Usage(
                    format!("--test {:?} needs --model", a.test).to_lowercase(),
                ));
            };
            let m = ctx.fit(name, &Default::default())?;
            let (p, x) = model_curves(&m);
            let r = if a.test == TestKind::Cadf {
                stattests::engle_granger_cadf(&p, &x)
            } else {
                let det = a.det.map(Into::into).unwrap_or(DeterministicSpec::None);
                stattests::johansen_trace(&p, &x, a.max_lag, det)
            }
            .map_err(run_err)?;
            let tag = if a.test == TestKind::Cadf {
                "cadf"
            } else {
                "johansen"
            };
            (r, format!("{name}_{tag}"))
        }
    };
    let mut st = Staging::new(out)?;
    st.write(&format!("test_{stem}.json"), tables::json(&report))?;
    st.write(
        &format!("test_{stem}.csv"),
        tables::test_report_csv(&report),
    )?;
    st.commit(ctx.manifest(argv, seed), Install::Merge)
}

pub struct ForecastOutput {
    pub model: BreakModel,
    pub prediction: bem::Prediction,
    pub vecm: Option<(vecm::VecmModel, vecm::Forecast)>,
}

pub fn compute_forecast(
    ctx: &Context,
    name: &str,
    horizon: usize,
    with_vecm: bool,
) -> Result<ForecastOutput, CliError> {
    let m = ctx.fit(name, &Default::default())?;
    let prediction = bem::predict(&m, &ctx.registry, horizon).map_err(run_err)?;
    let vecm = if with_vecm {
        let (p, x) = model_curves(&m);
        let vm = vecm::fit_vecm(&p, &x, vecm::MAX_VAR_ORDER).map_err(run_err)?;
        let f = vecm::forecast_vecm(&vm, &p, &prediction.cumulative, horizon).map_err(run_err)?;
        Some((vm, f))
    } else {
        None
    };
    Ok(ForecastOutput {
        model: m,
        prediction,
        vecm,
    })
}

/// Out-of-sample rows: year, annual, cumulative (+ error-correction columns).
pub fn forecast_csv(f: &ForecastOutput) -> String {
    let first = f.prediction.first_out_of_sample;
    let mut header = vec!["year", "annual", "cumulative"];
    if f.vecm.is_some() {
        header.extend(["vecm_annual", "vecm_cumulative"]);
    }
    let rows: Vec<Vec<String>> = f
        .prediction
        .annual
        .iter()
        .filter(|(y, _)| *y >= first)
        .enumerate()
        .map(|(i, (y, v))| {
            let mut r = vec![
                y.to_string(),
                num(v),
                num(f.prediction.cumulative.get(y).unwrap()),
            ];
            if let Some((_, vf)) = &f.vecm {
                r.push(num(vf.rates[i]));
                r.push(num(vf.cumulative[i]));
            }
            r
        })
        .collect();
    csv_string(&header, &rows)
}

pub fn forecast(
    a: &ForecastArgs,
    out: &Path,
    seed: u64,
    argv: &[String],
) -> Result<PathBuf, CliError> {
    let ctx = Context::load(&a.config)?;
    let f = compute_forecast(&ctx, &a.model, a.horizon, a.vecm)?;
    let mut st = Staging::new(out)?;
    st.write(&format!("forecast_{}.csv", a.model), forecast_csv(&f))?;
    let svg = line_chart(
        &format!("{} forecast, {} years", f.model.form.describe(), a.horizon),
        "rate per year",
        &[
            Line {
                label: "observed",
                series: &f.model.observed_annual,
                dashed: false,
            },
            Line {
                label: "predicted",
                series: &f.prediction.annual,
                dashed: true,
            },
        ],
    );
    st.write(&format!("forecast_{}.svg", a.model), svg)?;
    if let Some((vm, _)) = &f.vecm {
        st.write(
            &format!("forecast_{}_vecm.json", a.model),
            vm.to_json() + "\n",
        )?;
    }
    st.commit(ctx.manifest(argv, seed), Install::Merge)
}
