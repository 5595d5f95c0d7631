use proptest::prelude::*;

use phillips_lf::series::{self, AnnualSeries, Unit};

fn rates() -> impl Strategy<Value = (i32, Vec<f64>)> {
    (1900i32..2000, prop::collection::vec(-0.2f64..0.2, 2..60))
}

fn rate(start: i32, v: Vec<f64>) -> AnnualSeries {
    AnnualSeries::new(start, v, Unit::RatePerYear, "r").unwrap()
}

proptest! {
    #[test]
    fn diff_undoes_cumulate((start, v) in rates(), base in -5.0f64..5.0) {
        let x = rate(start, v.clone());
        let c = series::cumulate(&x, base);
        prop_assert_eq!(c.start_year(), start);
        prop_assert!((c.values()[0] - base - v[0]).abs() < 1e-12);
        let d = c.diff().unwrap();
        prop_assert_eq!(d.start_year(), start + 1);
        for (a, b) in d.values().iter().zip(&v[1..]) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn log_change_inverts_exponentiated_cumulation((start, v) in rates(), level0 in 0.1f64..1e6) {
        let mut acc = level0.ln();
        let mut levels = vec![level0];
        for r in &v {
            acc += r;
            levels.push(acc.exp());
        }
        let lv = AnnualSeries::new(start, levels, Unit::Level, "lv").unwrap();
        let r = series::log_change_rate(&lv).unwrap();
        prop_assert_eq!(r.start_year(), start + 1);
        prop_assert_eq!(r.unit(), Unit::RatePerYear);
        for (a, b) in r.values().iter().zip(&v) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn centered_ma_support_and_mean((start, v) in rates(), half in 0usize..4) {
        let w = 2 * half + 1;
        prop_assume!(w <= v.len());
        let x = rate(start, v.clone());
        let m = series::centered_ma(&x, w).unwrap();
        prop_assert_eq!(m.start_year(), start + half as i32);
        prop_assert_eq!(m.len(), v.len() - w + 1);
        for (i, val) in m.values().iter().enumerate() {
            let direct: f64 = v[i..i + w].iter().sum::<f64>() / w as f64;
            prop_assert!((val - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn shift_reindexes((start, v) in rates(), lag in -10i32..10) {
        let x = rate(start, v);
        let s = series::shift(&x, lag);
        for y in x.years() {
            prop_assert_eq!(s.get(y + lag), x.get(y));
        }
        let back = series::shift(&s, -lag);
        prop_assert_eq!(back.values(), x.values());
    }

    #[test]
    fn align_truncates_to_common_support(
        (a0, av) in rates(),
        (b0, bv) in rates(),
    ) {
        let (a, b) = (rate(a0, av), rate(b0, bv));
        match series::align(&[&a, &b]) {
            Ok(al) => {
                prop_assert_eq!(al[0].start_year(), al[1].start_year());
                prop_assert_eq!(al[0].len(), al[1].len());
                prop_assert_eq!(al[0].start_year(), a.start_year().max(b.start_year()));
                for y in al[0].years() {
                    prop_assert_eq!(al[0].get(y), a.get(y));
                    prop_assert_eq!(al[1].get(y), b.get(y));
                }
            }
            Err(_) => prop_assert!(a.end_year() < b.start_year() || b.end_year() < a.start_year()),
        }
    }

    #[test]
    fn spike_repair_touches_only_flagged_years((start, v) in rates(), spike in 1.0f64..5.0, at in 1usize..50) {
        prop_assume!(v.len() >= 5 && at < v.len() - 1);
        let mut w = v.clone();
        w[at] += spike;
        let x = rate(start, w.clone());
        let spec = series::SpikeRepairSpec::ExplicitYears { years: vec![start + at as i32] };
        let r = series::repair_spikes(&x, &spec).unwrap();
        for (i, (a, b)) in r.values().iter().zip(&w).enumerate() {
            if i == at {
                prop_assert!((a - 0.5 * (w[i - 1] + w[i + 1])).abs() < 1e-12);
            } else {
                prop_assert_eq!(a, b);
            }
        }
    }
}
