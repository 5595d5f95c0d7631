//! Local CSV ingestion, the dataset config file, and the named registry of
//! prepared series.
//!
//! Config files are TOML. Unknown keys are rejected. Paths are resolved
//! relative to the directory holding the config file.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bem::ModelConfig;
use crate::series::{self, AnnualSeries, SeriesError, SpikeRepairSpec, Unit};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("row {row}: {msg}")]
    Parse { row: usize, msg: String },
    #[error("row {row}: duplicate year {year}")]
    DuplicateYear { row: usize, year: i32 },
    #[error("row {row}: year {year} not increasing (previous {prev})")]
    NotIncreasing { row: usize, year: i32, prev: i32 },
    #[error("row {row}: gap between {prev} and {year}")]
    Gap { row: usize, year: i32, prev: i32 },
    #[error("column {0} not found in header")]
    MissingColumn(String),
    #[error("file has no data rows")]
    NoRows,
    #[error("config: {0}")]
    Config(String),
    #[error("series `{name}`: {source}")]
    Series {
        name: String,
        #[source]
        source: Box<IngestError>,
    },
    #[error(transparent)]
    Transform(#[from] SeriesError),
}

/// Column selector: zero-based position or header name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Column {
    Index(usize),
    Name(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnSpec {
    pub year: Column,
    pub value: Column,
}

impl Default for ColumnSpec {
    fn default() -> Self {
        Self {
            year: Column::Index(0),
            value: Column::Index(1),
        }
    }
}

/// Reads a `year,value` CSV. A header row is optional; it is detected by a
/// non-integer first cell in the year column. Row numbers in errors count
/// data rows from 1.
pub fn read_csv_series(
    path: impl AsRef<Path>,
    columns: &ColumnSpec,
    unit: Unit,
    label: &str,
) -> Result<AnnualSeries, IngestError> {
    let path = path.as_ref();
    let mut buf = String::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_string(&mut buf))
        .map_err(|source| IngestError::Io {
            path: path.display().to_string(),
            source,
        })?;
    parse_csv_series(&buf, columns, unit, label)
}

pub fn parse_csv_series(
    text: &str,
    columns: &ColumnSpec,
    unit: Unit,
    label: &str,
) -> Result<AnnualSeries, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| IngestError::Parse {
            row: i + 1,
            msg: e.to_string(),
        })?;
        if rec.iter().all(|c| c.is_empty()) {
            continue;
        }
        records.push(rec);
    }
    if records.is_empty() {
        return Err(IngestError::NoRows);
    }

    let header_like = |rec: &csv::StringRecord| -> bool {
        let idx = match &columns.year {
            Column::Index(i) => *i,
            Column::Name(_) => 0,
        };
        rec.get(idx).is_none_or(|c| c.parse::<i64>().is_err())
    };
    let has_header = header_like(&records[0]);
    let resolve = |col: &Column| -> Result<usize, IngestError> {
        match col {
            Column::Index(i) => Ok(*i),
            Column::Name(name) => {
                if !has_header {
                    return Err(IngestError::MissingColumn(name.clone()));
                }
                records[0]
                    .iter()
                    .position(|h| h.eq_ignore_ascii_case(name))
                    .ok_or_else(|| IngestError::MissingColumn(name.clone()))
            }
        }
    };
    let yi = resolve(&columns.year)?;
    let vi = resolve(&columns.value)?;

    let data = if has_header {
        &records[1..]
    } else {
        &records[..]
    };
    if data.is_empty() {
        return Err(IngestError::NoRows);
    }
    let mut start = 0;
    let mut prev: Option<i32> = None;
    let mut values = Vec::with_capacity(data.len());
    for (i, rec) in data.iter().enumerate() {
        let row = i + 1;
        let cell = |j: usize| {
            rec.get(j).ok_or_else(|| IngestError::Parse {
                row,
                msg: format!("missing column {j}"),
            })
        };
        let ycell = cell(yi)?;
        let year: i32 = ycell.parse().map_err(|_| IngestError::Parse {
            row,
            msg: format!("year `{ycell}` is not an integer"),
        })?;
        let vcell = cell(vi)?;
        let value: f64 = vcell
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| IngestError::Parse {
                row,
                msg: format!("value `{vcell}` is not a number"),
            })?;
        match prev {
            None => start = year,
            Some(p) if year == p => return Err(IngestError::DuplicateYear { row, year }),
            Some(p) if year < p => return Err(IngestError::NotIncreasing { row, year, prev: p }),
            Some(p) if year > p + 1 => return Err(IngestError::Gap { row, year, prev: p }),
            Some(_) => {}
        }
        prev = Some(year);
        values.push(value);
    }
    Ok(AnnualSeries::new(start, values, unit, label)?)
}

/// One preparation step applied to a raw series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum Transform {
    LogChangeRate,
    CenteredMa { window: usize },
    RepairSpikes { spec: SpikeRepairSpec },
    Shift { lag: i32 },
}

impl Transform {
    pub fn apply(&self, x: &AnnualSeries) -> Result<AnnualSeries, SeriesError> {
        match self {
            Transform::LogChangeRate => series::log_change_rate(x),
            Transform::CenteredMa { window } => series::centered_ma(x, *window),
            Transform::RepairSpikes { spec } => series::repair_spikes(x, spec),
            Transform::Shift { lag } => Ok(series::shift(x, *lag)),
        }
    }
}

/// Applies a chain in order.
pub fn replay(raw: &AnnualSeries, chain: &[Transform]) -> Result<AnnualSeries, SeriesError> {
    chain.iter().try_fold(raw.clone(), |acc, t| t.apply(&acc))
}

/// Static unit check of a chain: the only unit change allowed is
/// level -> rate through `log_change_rate`.
pub fn check_chain(unit: Unit, chain: &[Transform]) -> Result<Unit, String> {
    let mut u = unit;
    for t in chain {
        if let Transform::LogChangeRate = t {
            if u != Unit::Level {
                return Err(format!("log_change_rate needs a level series, found {u:?}"));
            }
            u = Unit::RatePerYear;
        }
    }
    Ok(u)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct YearWindow {
    pub first_year: i32,
    pub last_year: i32,
}

impl YearWindow {
    pub fn contains(&self, other: &YearWindow) -> bool {
        other.first_year >= self.first_year && other.last_year <= self.last_year
    }
}

fn default_break_window() -> YearWindow {
    YearWindow {
        first_year: 1986,
        last_year: 2003,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesEntry {
    pub path: PathBuf,
    #[serde(default)]
    pub source: String,
    pub unit: Unit,
    #[serde(default)]
    pub columns: ColumnSpec,
    #[serde(default)]
    pub transforms: Vec<Transform>,
    /// Free-text provenance note carried into reports.
    #[serde(default)]
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub model_window: YearWindow,
    #[serde(default = "default_break_window")]
    pub break_window: YearWindow,
    #[serde(default)]
    pub series: BTreeMap<String, SeriesEntry>,
    #[serde(default)]
    pub models: BTreeMap<String, ModelConfig>,
    /// Directory that relative series paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl DatasetConfig {
    pub fn from_toml_str(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self, IngestError> {
        let mut cfg: DatasetConfig =
            toml::from_str(text).map_err(|e| IngestError::Config(e.to_string()))?;
        cfg.base_dir = base_dir.into();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, IngestError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| IngestError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml_str(&text, base)
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        let mw = self.model_window;
        if mw.first_year > mw.last_year {
            return Err(IngestError::Config("model_window is empty".into()));
        }
        if !mw.contains(&self.break_window)
            || self.break_window.first_year > self.break_window.last_year
        {
            return Err(IngestError::Config(format!(
                "break_window {}..={} must lie inside model_window {}..={}",
                self.break_window.first_year,
                self.break_window.last_year,
                mw.first_year,
                mw.last_year
            )));
        }
        for (name, e) in &self.series {
            check_chain(e.unit, &e.transforms)
                .map_err(|m| IngestError::Config(format!("series `{name}`: {m}")))?;
        }
        for (name, m) in &self.models {
            m.validate(&self.series)
                .map_err(|msg| IngestError::Config(format!("model `{name}`: {msg}")))?;
        }
        Ok(())
    }

    pub fn resolve_path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesRecord {
    pub name: String,
    pub source: String,
    pub raw: AnnualSeries,
    pub prepared: AnnualSeries,
    pub transforms: Vec<Transform>,
}

impl SeriesRecord {
    pub fn fingerprint(&self) -> String {
        fingerprint(&[&self.raw])
    }
}

/// SHA-256 over the support and IEEE bit patterns of the given series.
pub fn fingerprint(xs: &[&AnnualSeries]) -> String {
    let mut h = Sha256::new();
    for s in xs {
        h.update(s.start_year().to_le_bytes());
        h.update((s.len() as u64).to_le_bytes());
        for v in s.values() {
            h.update(v.to_bits().to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

/// Named, immutable set of prepared series.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Registry {
    records: BTreeMap<String, SeriesRecord>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, rec: SeriesRecord) {
        self.records.insert(rec.name.clone(), rec);
    }

    /// Registers an already prepared series (no transform chain).
    pub fn insert_series(&mut self, name: &str, s: AnnualSeries) {
        self.insert(SeriesRecord {
            name: name.to_string(),
            source: String::new(),
            raw: s.clone(),
            prepared: s,
            transforms: Vec::new(),
        });
    }

    pub fn get(&self, name: &str) -> Option<&SeriesRecord> {
        self.records.get(name)
    }

    pub fn prepared(&self, name: &str) -> Option<&AnnualSeries> {
        self.records.get(name).map(|r| &r.prepared)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.records.keys().map(String::as_str)
    }

    pub fn records(&self) -> impl Iterator<Item = &SeriesRecord> {
        self.records.values()
    }
}

/// Reads and prepares every configured series.
pub fn load_dataset(config: &DatasetConfig) -> Result<Registry, IngestError> {
    let mut reg = Registry::new();
    for (name, entry) in &config.series {
        let wrap = |e: IngestError| IngestError::Series {
            name: name.clone(),
            source: Box::new(e),
        };
        let label = if entry.source.is_empty() {
            name.clone()
        } else {
            format!("{name}, {}", entry.source)
        };
        let raw = read_csv_series(
            config.resolve_path(&entry.path),
            &entry.columns,
            entry.unit,
            &label,
        )
        .map_err(wrap)?;
        let prepared = replay(&raw, &entry.transforms).map_err(|e| wrap(e.into()))?;
        reg.insert(SeriesRecord {
            name: name.clone(),
            source: entry.source.clone(),
            raw,
            prepared,
            transforms: entry.transforms.clone(),
        });
    }
    Ok(reg)
}
