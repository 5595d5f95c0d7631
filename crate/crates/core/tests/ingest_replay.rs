use std::path::Path;

use phillips_lf::ingest::{self, ColumnSpec, DatasetConfig, IngestError};
use phillips_lf::Unit;

fn france() -> DatasetConfig {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/france/france.toml");
    DatasetConfig::load(p).unwrap()
}

#[test]
fn prepared_series_replay_from_raw() {
    let cfg = france();
    let reg = ingest::load_dataset(&cfg).unwrap();
    assert_eq!(reg.len(), cfg.series.len());
    for rec in reg.records() {
        let again = ingest::replay(&rec.raw, &rec.transforms).unwrap();
        assert_eq!(again, rec.prepared, "{}", rec.name);
    }
    let l = reg.prepared("l_oecd").unwrap();
    assert_eq!(l.unit(), Unit::RatePerYear);
    assert_eq!(
        l.start_year(),
        reg.get("l_oecd").unwrap().raw.start_year() + 1
    );
}

#[test]
fn loading_is_deterministic() {
    let cfg = france();
    let a = ingest::load_dataset(&cfg).unwrap();
    let b = ingest::load_dataset(&cfg).unwrap();
    let fa: Vec<String> = a.records().map(|r| r.fingerprint()).collect();
    let fb: Vec<String> = b.records().map(|r| r.fingerprint()).collect();
    assert_eq!(fa, fb);
    let all: Vec<_> = a.records().map(|r| &r.prepared).collect();
    assert_eq!(ingest::fingerprint(&all).len(), 64);
}

fn parse(text: &str) -> Result<phillips_lf::AnnualSeries, IngestError> {
    ingest::parse_csv_series(text, &ColumnSpec::default(), Unit::RatePerYear, "t")
}

#[test]
fn csv_errors_name_the_row() {
    let cases = [
        ("year,value\n2000,0.1\n2001,abc\n", "row 2"),
        ("2000,0.1\n2000,0.2\n", "row 2: duplicate year 2000"),
        ("2000,0.1\n2001,0.2\n1999,0.3\n", "row 3"),
        ("2000,0.1\n2002,0.2\n", "row 2: gap"),
        ("2000,0.1\n20x1,0.2\n", "row 2"),
        ("2000,0.1\n2001,NaN\n", "row 2"),
        ("2000\n", "row 1"),
    ];
    for (text, want) in cases {
        let e = parse(text).unwrap_err().to_string();
        assert!(e.contains(want), "{text:?}: {e}");
    }
    assert!(matches!(parse("year,value\n"), Err(IngestError::NoRows)));
    assert!(matches!(parse(""), Err(IngestError::NoRows)));
}

#[test]
fn header_and_blank_lines_are_tolerated() {
    let s = parse("Year,Value\n\n2000, 0.1\n2001,0.2\n\n").unwrap();
    assert_eq!((s.start_year(), s.values()), (2000, &[0.1, 0.2][..]));
}

#[test]
fn config_rejects_unknown_keys_and_series() {
    let bad = "model_window = { first_year = 1970, last_year = 2012 }\n\
               break_window = { first_year = 1986, last_year = 2003 }\n\
               colour = 1\n";
    assert!(DatasetConfig::from_toml_str(bad, ".").is_err());
    let dangling = "model_window = { first_year = 1970, last_year = 2012 }\n\
                    break_window = { first_year = 1986, last_year = 2003 }\n\
                    [series.a]\npath = \"a.csv\"\nunit = \"rate_per_year\"\n\
                    [models.m]\ndependent = \"a\"\npredictors = [{ series = \"b\" }]\n";
    let e = DatasetConfig::from_toml_str(dangling, ".")
        .unwrap_err()
        .to_string();
    assert!(e.contains("unknown series `b`"), "{e}");
}
