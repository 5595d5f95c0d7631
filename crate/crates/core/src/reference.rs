//! Reference estimates for the France dataset that reproduction runs are
//! compared against. Rates are fractions per year.

use serde::Serialize;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PublishedBreakModel {
    /// Model name in the bundled config.
    pub model: &'static str,
    pub slope1: f64,
    pub intercept1: f64,
    pub slope2: f64,
    pub intercept2: f64,
    /// Effective horizon: lag minus half the smoothing window.
    pub horizon: i32,
    pub break_year: i32,
    pub r2_annual: f64,
    pub r2_cumulative: f64,
}

#[allow(clippy::too_many_arguments)]
const fn bm(
    model: &'static str,
    slope1: f64,
    intercept1: f64,
    slope2: f64,
    intercept2: f64,
    horizon: i32,
    break_year: i32,
    r2_annual: f64,
    r2_cumulative: f64,
) -> PublishedBreakModel {
    PublishedBreakModel {
        model,
        slope1,
        intercept1,
        slope2,
        intercept2,
        horizon,
        break_year,
        r2_annual,
        r2_cumulative,
    }
}

pub const BREAK_MODELS: [PublishedBreakModel; 9] = [
    bm(
        "cpi_l", 16.304, -0.0513, 2.046, -0.0001, 5, 1994, 0.5251, 0.9978,
    ),
    bm(
        "cpi_l3", 16.108, -0.0500, 0.952, 0.0093, 4, 1993, 0.8626, 0.9993,
    ),
    bm(
        "cpi_l5", 16.363, -0.0525, 0.879, 0.0100, 3, 1994, 0.8550, 0.9992,
    ),
    bm(
        "cpi_l7", 17.324, -0.0595, 1.039, 0.0089, 2, 1994, 0.8659, 0.9991,
    ),
    bm(
        "dgdp_l", 16.543, -0.0539, 2.920, -0.0065, 5, 1994, 0.5532, 0.9980,
    ),
    bm(
        "dgdp_l3", 16.348, -0.0526, 1.941, 0.0020, 4, 1993, 0.9212, 0.9996,
    ),
    bm(
        "dgdp_l5", 16.031, -0.0501, 1.574, 0.0054, 3, 1992, 0.8870, 0.9996,
    ),
    bm(
        "dgdp_l7", 17.344, -0.0602, 1.945, 0.0027, 2, 1993, 0.9031, 0.9995,
    ),
    bm(
        "u_l3", -13.684, 0.1661, 3.578, 0.0659, 0, 1995, 0.7817, 0.9996,
    ),
];

/// The lagged labour-force relation fitted without a break over 1970-1990.
pub const EARLY_CPI_SLOPE: f64 = 16.0;
pub const EARLY_CPI_INTERCEPT: f64 = -0.050;
pub const EARLY_CPI_THRESHOLD: f64 = 0.0031;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PublishedGeneralized {
    pub model: &'static str,
    pub slope_l: [f64; 2],
    pub slope_u: f64,
    pub intercept: [f64; 2],
    pub r2_annual: f64,
}

pub const GENERALIZED: [PublishedGeneralized; 2] = [
    PublishedGeneralized {
        model: "dgdp_gen",
        slope_l: [2.69, 6.40],
        slope_u: -1.0,
        intercept: [0.108, 0.059],
        r2_annual: 0.87,
    },
    PublishedGeneralized {
        model: "cpi_gen",
        slope_l: [3.0, 5.0],
        slope_u: -1.0,
        intercept: [0.108, 0.067],
        r2_annual: 0.83,
    },
];

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PublishedDescriptive {
    pub series: &'static str,
    pub mean: f64,
    pub st_dev: f64,
    /// Naive RMSFE at horizons 1..=5; `None` where not printed.
    pub naive: [Option<f64>; 5],
    pub sd1: f64,
    pub sd2: f64,
}

pub const DESCRIPTIVE: [PublishedDescriptive; 3] = [
    PublishedDescriptive {
        series: "cpi_oecd",
        mean: 0.0474,
        st_dev: 0.0407,
        naive: [
            Some(0.0156),
            Some(0.0233),
            Some(0.0293),
            Some(0.0334),
            Some(0.0362),
        ],
        sd1: 0.0192,
        sd2: 0.0092,
    },
    PublishedDescriptive {
        series: "dgdp_oecd",
        mean: 0.0465,
        st_dev: 0.0396,
        naive: [
            Some(0.0129),
            Some(0.0205),
            Some(0.0257),
            Some(0.0295),
            Some(0.0323),
        ],
        sd1: 0.0163,
        sd2: 0.0066,
    },
    PublishedDescriptive {
        series: "u_oecd",
        mean: 0.0814,
        st_dev: 0.0302,
        naive: [Some(0.0072), None, None, None, None],
        sd1: 0.0059,
        sd2: 0.0077,
    },
];

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PublishedForecastError {
    pub model: &'static str,
    pub horizon: usize,
    pub model_rmsfe: f64,
    pub naive_rmsfe: f64,
    /// Required `naive / model` ratio.
    pub min_ratio: f64,
}

pub const FORECAST_ERRORS: [PublishedForecastError; 2] = [
    PublishedForecastError {
        model: "cpi_l3",
        horizon: 4,
        model_rmsfe: 0.015,
        naive_rmsfe: 0.034,
        min_ratio: 2.0,
    },
    PublishedForecastError {
        model: "dgdp_l3",
        horizon: 4,
        model_rmsfe: 0.010,
        naive_rmsfe: 0.029,
        min_ratio: 2.5,
    },
];

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PublishedVecm {
    pub model: &'static str,
    pub horizon: usize,
    pub rmsfe: f64,
    pub bound: f64,
}

pub const VECM: [PublishedVecm; 2] = [
    PublishedVecm {
        model: "dgdp_l3",
        horizon: 4,
        rmsfe: 0.008,
        bound: 0.009,
    },
    PublishedVecm {
        model: "cpi_l7",
        horizon: 2,
        rmsfe: 0.009,
        bound: 0.010,
    },
];

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PublishedCointegration {
    pub model: &'static str,
    pub adf_annual: f64,
    pub adf_cumulative: f64,
    pub pp_annual: f64,
    pub pp_cumulative: f64,
    pub rank: usize,
    pub eigenvalue: f64,
}

pub const COINTEGRATION: [PublishedCointegration; 4] = [
    PublishedCointegration {
        model: "cpi_l",
        adf_annual: -7.67,
        adf_cumulative: -5.28,
        pp_annual: -37.44,
        pp_cumulative: -30.08,
        rank: 1,
        eigenvalue: 0.54,
    },
    PublishedCointegration {
        model: "cpi_l3",
        adf_annual: -5.02,
        adf_cumulative: -2.71,
        pp_annual: -27.16,
        pp_cumulative: -13.43,
        rank: 1,
        eigenvalue: 0.47,
    },
    PublishedCointegration {
        model: "dgdp_l",
        adf_annual: -8.16,
        adf_cumulative: -5.68,
        pp_annual: -30.72,
        pp_cumulative: -32.57,
        rank: 1,
        eigenvalue: 0.51,
    },
    PublishedCointegration {
        model: "dgdp_l3",
        adf_annual: -5.48,
        adf_cumulative: -3.40,
        pp_annual: -26.34,
        pp_cumulative: -15.32,
        rank: 1,
        eigenvalue: 0.56,
    },
];

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PublishedUnitRoot {
    pub series: &'static str,
    /// Levels of the rate; `None` where not printed.
    pub adf: Option<f64>,
    pub pp_z_rho: Option<f64>,
    pub pp_z_t: Option<f64>,
    /// First differences of the rate.
    pub adf_diff: Option<f64>,
    pub pp_z_rho_diff: Option<f64>,
    pub pp_z_t_diff: Option<f64>,
}

pub const UNIT_ROOT: [PublishedUnitRoot; 4] = [
    PublishedUnitRoot {
        series: "cpi_oecd",
        adf: Some(-1.45),
        pp_z_rho: Some(-5.06),
        pp_z_t: Some(-1.58),
        adf_diff: Some(-6.40),
        pp_z_rho_diff: Some(-43.79),
        pp_z_t_diff: Some(-6.40),
    },
    PublishedUnitRoot {
        series: "dgdp_oecd",
        adf: Some(-1.21),
        pp_z_rho: Some(-4.09),
        pp_z_t: Some(-1.39),
        adf_diff: Some(-6.26),
        pp_z_rho_diff: Some(-41.25),
        pp_z_t_diff: Some(-6.26),
    },
    PublishedUnitRoot {
        series: "u_oecd",
        adf: Some(-1.35),
        pp_z_rho: Some(-3.08),
        pp_z_t: Some(-1.78),
        adf_diff: Some(-4.75),
        pp_z_rho_diff: Some(-31.41),
        pp_z_t_diff: Some(-4.75),
    },
    PublishedUnitRoot {
        series: "l_oecd",
        adf: Some(-5.30),
        pp_z_rho: Some(-35.53),
        pp_z_t: Some(-5.28),
        adf_diff: None,
        pp_z_rho_diff: None,
        pp_z_t_diff: None,
    },
];

pub fn break_model(model: &str) -> Option<&'static PublishedBreakModel> {
    BREAK_MODELS.iter().find(|r| r.model == model)
}
