use proptest::prelude::*;

use phillips_lf::stattests::{self, mc, Bandwidth, DeterministicSpec};
use phillips_lf::{AnnualSeries, Unit};

fn level(v: Vec<f64>) -> AnnualSeries {
    AnnualSeries::new(1900, v, Unit::Level, "x").unwrap()
}

fn walk(seed: u64, n: usize) -> Vec<f64> {
    mc::random_walk(&mut mc::stream(seed, 0), n)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn unit_root_statistics_are_affine_invariant(seed in 0u64..10_000, a in 0.01f64..100.0, b in -50.0f64..50.0) {
        let x = walk(seed, 60);
        let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        for det in [DeterministicSpec::Constant, DeterministicSpec::ConstantAndTrend] {
            let r1 = stattests::adf_test(&level(x.clone()), 4, det).unwrap();
            let r2 = stattests::adf_test(&level(y.clone()), 4, det).unwrap();
            prop_assert_eq!(&r1.settings["lag"], &r2.settings["lag"]);
            prop_assert!(close(r1.value("tau").unwrap(), r2.value("tau").unwrap(), 1e-7));
            let p1 = stattests::pp_test(&level(x.clone()), det, Bandwidth::Automatic).unwrap();
            let p2 = stattests::pp_test(&level(y.clone()), det, Bandwidth::Automatic).unwrap();
            for k in ["z_rho", "z_t"] {
                prop_assert!(close(p1.value(k).unwrap(), p2.value(k).unwrap(), 1e-7));
            }
        }
    }

    #[test]
    fn johansen_is_symmetric_and_scale_free(seed in 0u64..10_000, a in 0.1f64..10.0, b in 0.1f64..10.0) {
        let x = walk(seed, 80);
        let noise = mc::normals(&mut mc::stream(seed, 1), 80, 1.0);
        let y: Vec<f64> = x.iter().zip(&noise).map(|(u, e)| u + e).collect();
        let xa: Vec<f64> = x.iter().map(|v| a * v).collect();
        let yb: Vec<f64> = y.iter().map(|v| b * v).collect();
        for det in [DeterministicSpec::None, DeterministicSpec::Constant] {
            let r = stattests::johansen_trace(&level(x.clone()), &level(y.clone()), 2, det).unwrap();
            let s = stattests::johansen_trace(&level(y.clone()), &level(x.clone()), 2, det).unwrap();
            let t = stattests::johansen_trace(&level(xa.clone()), &level(yb.clone()), 2, det).unwrap();
            for k in ["trace_r0", "trace_r1", "eigenvalue_1", "eigenvalue_2"] {
                prop_assert!(close(r.value(k).unwrap(), s.value(k).unwrap(), 1e-8), "{}", k);
                prop_assert!(close(r.value(k).unwrap(), t.value(k).unwrap(), 1e-7), "{}", k);
            }
            prop_assert_eq!(r.rank, s.rank);
        }
    }

    #[test]
    fn cadf_residual_tests_are_shift_invariant(seed in 0u64..10_000, c in -10.0f64..10.0) {
        let x = walk(seed, 50);
        let noise = mc::normals(&mut mc::stream(seed, 1), 50, 0.5);
        let p: Vec<f64> = x.iter().zip(&noise).map(|(u, e)| u + e).collect();
        let shifted: Vec<f64> = p.iter().map(|v| v + c).collect();
        let cum = |v: Vec<f64>| AnnualSeries::new(1960, v, Unit::Cumulative, "c").unwrap();
        let r1 = stattests::engle_granger_cadf(&cum(p), &cum(x.clone())).unwrap();
        let r2 = stattests::engle_granger_cadf(&cum(shifted), &cum(x)).unwrap();
        for k in ["adf", "pp_z_t", "pp_z_rho"] {
            prop_assert!(close(r1.value(k).unwrap(), r2.value(k).unwrap(), 1e-8), "{}", k);
        }
    }
}

// Independent Johansen computation: explicit OLS residuals through normal
// equations and Gauss-Jordan elimination, eigenvalues of the 2x2 matrix
// S11^-1 S10 S00^-1 S01 from its trace and determinant.

fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let n = a.len();
    for c in 0..n {
        let p = (c..n)
            .max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))
            .unwrap();
        a.swap(c, p);
        b.swap(c, p);
        let d = a[c][c];
        for j in 0..n {
            a[c][j] /= d;
        }
        for j in 0..b[c].len() {
            b[c][j] /= d;
        }
        for i in 0..n {
            if i != c {
                let f = a[i][c];
                for j in 0..n {
                    a[i][j] -= f * a[c][j];
                }
                for j in 0..b[i].len() {
                    b[i][j] -= f * b[c][j];
                }
            }
        }
    }
    b
}

/// Residuals of each column of `y` regressed on the columns of `z`.
fn residuals(y: &[Vec<f64>], z: &[Vec<f64>]) -> Vec<Vec<f64>> {
    if z.is_empty() || z[0].is_empty() {
        return y.to_vec();
    }
    let (t, k, m) = (y.len(), z[0].len(), y[0].len());
    let mut zz = vec![vec![0.0; k]; k];
    let mut zy = vec![vec![0.0; m]; k];
    for r in 0..t {
        for i in 0..k {
            for j in 0..k {
                zz[i][j] += z[r][i] * z[r][j];
            }
            for j in 0..m {
                zy[i][j] += z[r][i] * y[r][j];
            }
        }
    }
    let b = solve(zz, zy);
    (0..t)
        .map(|r| {
            (0..m)
                .map(|j| y[r][j] - (0..k).map(|i| z[r][i] * b[i][j]).sum::<f64>())
                .collect()
        })
        .collect()
}

fn moment(a: &[Vec<f64>], b: &[Vec<f64>]) -> [[f64; 2]; 2] {
    let t = a.len() as f64;
    let mut s = [[0.0; 2]; 2];
    for r in 0..a.len() {
        for i in 0..2 {
            for j in 0..2 {
                s[i][j] += a[r][i] * b[r][j] / t;
            }
        }
    }
    s
}

fn mul(a: [[f64; 2]; 2], b: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

fn inv(a: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let d = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    [[a[1][1] / d, -a[0][1] / d], [-a[1][0] / d, a[0][0] / d]]
}

/// (trace_r0, trace_r1, eigenvalue_1, eigenvalue_2) for VAR order `k`.
fn johansen_oracle(y1: &[f64], y2: &[f64], k: usize, constant: bool) -> [f64; 4] {
    let n = y1.len();
    let dy: Vec<[f64; 2]> = (1..n)
        .map(|t| [y1[t] - y1[t - 1], y2[t] - y2[t - 1]])
        .collect();
    let mut r0 = Vec::new();
    let mut r1 = Vec::new();
    let mut z = Vec::new();
    for t in (k - 1)..dy.len() {
        r0.push(vec![dy[t][0], dy[t][1]]);
        r1.push(vec![y1[t], y2[t]]);
        let mut row = Vec::new();
        for i in 1..k {
            row.extend([dy[t - i][0], dy[t - i][1]]);
        }
        if constant {
            row.push(1.0);
        }
        z.push(row);
    }
    let (e0, e1) = (residuals(&r0, &z), residuals(&r1, &z));
    let (s00, s11, s01) = (moment(&e0, &e0), moment(&e1, &e1), moment(&e0, &e1));
    let s10 = [[s01[0][0], s01[1][0]], [s01[0][1], s01[1][1]]];
    let m = mul(inv(s11), mul(s10, mul(inv(s00), s01)));
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = (tr * tr - 4.0 * det).max(0.0).sqrt();
    let (l1, l2) = ((tr + disc) / 2.0, (tr - disc) / 2.0);
    let t = e0.len() as f64;
    [
        -t * ((1.0 - l1).ln() + (1.0 - l2).ln()),
        -t * (1.0 - l2).ln(),
        l1,
        l2,
    ]
}

/// Cointegrated pair of length 100 from a deterministic recursion.
fn dense_pair() -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0];
    let mut y = vec![0.3];
    for t in 1..100 {
        let e1 = ((t * 7919) % 101) as f64 / 101.0 - 0.5;
        let e2 = ((t * 104_729) % 97) as f64 / 97.0 - 0.5;
        let xt = x[t - 1] + e1;
        let yt = y[t - 1] + e1 - 0.4 * (y[t - 1] - x[t - 1]) + 0.5 * e2;
        x.push(xt);
        y.push(yt);
    }
    (x, y)
}

#[test]
fn johansen_matches_dense_oracle() {
    let (x, y) = dense_pair();
    for (k, det) in [
        (1, DeterministicSpec::None),
        (2, DeterministicSpec::None),
        (2, DeterministicSpec::Constant),
        (4, DeterministicSpec::Constant),
    ] {
        let o = johansen_oracle(&x, &y, k, det == DeterministicSpec::Constant);
        let r = stattests::johansen_trace(&level(x.clone()), &level(y.clone()), k, det).unwrap();
        let got = [
            r.value("trace_r0").unwrap(),
            r.value("trace_r1").unwrap(),
            r.value("eigenvalue_1").unwrap(),
            r.value("eigenvalue_2").unwrap(),
        ];
        for (a, b) in got.iter().zip(o) {
            assert!(close(*a, b, 1e-9), "k={k} {det:?}: {got:?} vs {o:?}");
        }
    }
}

#[test]
fn johansen_oracle_frozen_values() {
    let (x, y) = dense_pair();
    let o = johansen_oracle(&x, &y, 2, true);
    let frozen = FROZEN_K2_CONSTANT;
    for (a, b) in o.iter().zip(frozen) {
        assert!(close(*a, b, 1e-9), "{o:?}");
    }
    let r =
        stattests::johansen_trace(&level(x), &level(y), 2, DeterministicSpec::Constant).unwrap();
    // Both statistics exceed their 5% points (15.4943, 3.8415).
    assert_eq!(r.rank, Some(2));
}

const FROZEN_K2_CONSTANT: [f64; 4] = [
    44.625918391954386,
    9.568014878970894,
    0.3007407435581847,
    0.09301811806959101,
];

#[test]
fn adf_rejects_stationary_and_keeps_random_walk() {
    let ar: Vec<f64> = {
        let e = mc::normals(&mut mc::stream(3, 0), 200, 1.0);
        let mut v = 0.0;
        e.iter()
            .map(|x| {
                v = 0.3 * v + x;
                v
            })
            .collect()
    };
    let r = stattests::adf_test(&level(ar), 4, DeterministicSpec::Constant).unwrap();
    assert!(r.stat("tau").unwrap().rejects_at(0.01));
    let w = stattests::adf_test(&level(walk(3, 200)), 4, DeterministicSpec::Constant).unwrap();
    assert!(!w.stat("tau").unwrap().rejects_at(0.01));
}
