//! Sea-ice field ingestion, nearest-centroid aggregation and calibration.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::geo::{haversine, GeoPoint};
use crate::hexgrid::{CellId, CorridorGrid};

#[derive(Debug, thiserror::Error)]
pub enum EnvError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("schema: missing column {0:?}")]
    MissingColumn(String),
    #[error("{count} unparseable row(s); first: {first}")]
    Rows { count: usize, first: RowIssue },
    #[error("csv: {0}")]
    Csv(String),
    #[error("calibration needs at least one populated cell")]
    EmptyFeatures,
    #[error("calibration dump: {0}")]
    Dump(String),
}

/// Problem with one data row; `row` is 1-based and excludes the header.
#[derive(Debug, Clone, PartialEq)]
pub struct RowIssue {
    pub row: usize,
    pub message: String,
}

impl fmt::Display for RowIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "row {}: {}", self.row, self.message)
    }
}

/// The six sea-ice variables carried per sample and per cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Field {
    Thickness,
    Age,
    Concentration,
    Snow,
    DriftU,
    DriftV,
}

impl Field {
    pub const ALL: [Field; 6] = [
        Field::Thickness,
        Field::Age,
        Field::Concentration,
        Field::Snow,
        Field::DriftU,
        Field::DriftV,
    ];

    pub fn column(self) -> &'static str {
        match self {
            Field::Thickness => "sithick",
            Field::Age => "siage",
            Field::Concentration => "siconc",
            Field::Snow => "sisnthick",
            Field::DriftU => "usi",
            Field::DriftV => "vsi",
        }
    }

    /// Position of the field in value arrays.
    pub fn index(self) -> usize {
        self as usize
    }

    fn check(self, v: f64) -> Result<(), String> {
        if !v.is_finite() {
            return Err(format!("{} is not finite", self.column()));
        }
        let ok = match self {
            Field::Thickness | Field::Age | Field::Snow => v >= 0.0,
            Field::Concentration => (0.0..=1.0).contains(&v),
            Field::DriftU | Field::DriftV => true,
        };
        if ok {
            Ok(())
        } else {
            let bound = match self {
                Field::Concentration => "[0, 1]",
                _ => ">= 0",
            };
            Err(format!("{} = {v} violates bound {bound}", self.column()))
        }
    }
}

/// One gridded observation. `None` marks a missing value.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvSample {
    pub point: GeoPoint,
    pub time: NaiveDate,
    pub values: [Option<f64>; 6],
}

impl EnvSample {
    pub fn get(&self, f: Field) -> Option<f64> {
        self.values[f.index()]
    }
}

/// Column names and missing-value token of the tabular input.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvSchema {
    pub lat: String,
    pub lon: String,
    pub time: String,
    pub fields: [String; 6],
    pub missing: String,
}

impl Default for EnvSchema {
    fn default() -> Self {
        Self {
            lat: "lat".into(),
            lon: "lon".into(),
            time: "time".into(),
            fields: Field::ALL.map(|f| f.column().to_string()),
            missing: "NA".into(),
        }
    }
}

/// Samples that passed validation plus the rows rejected for bound violations.
#[derive(Debug, Clone, Default)]
pub struct LoadedSamples {
    pub samples: Vec<EnvSample>,
    pub rejected: Vec<RowIssue>,
}

pub fn load_samples(path: &Path, schema: &EnvSchema) -> Result<LoadedSamples, EnvError> {
    let file = std::fs::File::open(path)?;
    read_samples(file, schema)
}

/// Parses the environmental CSV. Out-of-bounds rows are rejected with a
/// diagnostic and loading continues; rows that do not parse at all fail the
/// whole load with a count of offending rows.
pub fn read_samples<R: Read>(reader: R, schema: &EnvSchema) -> Result<LoadedSamples, EnvError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| EnvError::Csv(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| EnvError::MissingColumn(name.to_string()))
    };
    let (ilat, ilon, itime) = (col(&schema.lat)?, col(&schema.lon)?, col(&schema.time)?);
    let mut ifields = [0usize; 6];
    for (k, name) in schema.fields.iter().enumerate() {
        ifields[k] = col(name)?;
    }

    let mut out = LoadedSamples::default();
    let mut unparseable = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 1;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                unparseable.push(RowIssue { row, message: e.to_string() });
                continue;
            }
        };
        match parse_row(&rec, schema, ilat, ilon, itime, &ifields) {
            Ok(Ok(sample)) => out.samples.push(sample),
            Ok(Err(message)) => out.rejected.push(RowIssue { row, message }),
            Err(message) => unparseable.push(RowIssue { row, message }),
        }
    }
    if let Some(first) = unparseable.first().cloned() {
        return Err(EnvError::Rows {
            count: unparseable.len(),
            first,
        });
    }
    for issue in &out.rejected {
        log::warn!("rejected {issue}");
    }
    Ok(out)
}

/// Outer error: the row does not parse. Inner error: it parses but breaks a bound.
fn parse_row(
    rec: &csv::StringRecord,
    schema: &EnvSchema,
    ilat: usize,
    ilon: usize,
    itime: usize,
    ifields: &[usize; 6],
) -> Result<Result<EnvSample, String>, String> {
    let get = |i: usize| rec.get(i).ok_or_else(|| format!("missing field {i}"));
    let num = |i: usize, name: &str| -> Result<Option<f64>, String> {
        let s = get(i)?;
        if s == schema.missing || s.is_empty() {
            return Ok(None);
        }
        s.parse::<f64>().map(Some).map_err(|_| format!("{name}: cannot parse {s:?}"))
    };
    let lat = num(ilat, "lat")?.ok_or("lat is missing")?;
    let lon = num(ilon, "lon")?.ok_or("lon is missing")?;
    let time_s = get(itime)?;
    let time = NaiveDate::parse_from_str(time_s.get(..10).unwrap_or(time_s), "%Y-%m-%d")
        .map_err(|_| format!("time: cannot parse {time_s:?}"))?;
    let mut values = [None; 6];
    for (k, f) in Field::ALL.iter().enumerate() {
        values[k] = num(ifields[k], f.column())?;
    }
    if !(-180.0..=360.0).contains(&lon) {
        return Ok(Err(format!("lon = {lon} outside [-180, 360]")));
    }
    let point = match GeoPoint::new(lat, lon) {
        Ok(p) => p,
        Err(e) => return Ok(Err(e.to_string())),
    };
    for (k, f) in Field::ALL.iter().enumerate() {
        if let Some(v) = values[k] {
            if let Err(m) = f.check(v) {
                return Ok(Err(m));
            }
        }
    }
    Ok(Ok(EnvSample { point, time, values }))
}

/// Per-cell means of the samples assigned to it on one day.
#[derive(Debug, Clone, PartialEq)]
pub struct CellFeatures {
    pub cell: CellId,
    pub time: NaiveDate,
    /// Mean per field over non-missing samples; `None` if every sample lacked it.
    pub values: [Option<f64>; 6],
    pub sample_count: u32,
    /// Non-missing samples per field.
    pub field_counts: [u32; 6],
}

impl CellFeatures {
    pub fn get(&self, f: Field) -> Option<f64> {
        self.values[f.index()]
    }

    pub fn thickness(&self) -> Option<f64> {
        self.get(Field::Thickness)
    }
    pub fn age(&self) -> Option<f64> {
        self.get(Field::Age)
    }
    pub fn concentration(&self) -> Option<f64> {
        self.get(Field::Concentration)
    }
    pub fn snow(&self) -> Option<f64> {
        self.get(Field::Snow)
    }

    /// Drift speed in m/s when both components are known.
    pub fn drift_speed(&self) -> Option<f64> {
        Some(self.get(Field::DriftU)?.hypot(self.get(Field::DriftV)?))
    }
}

/// Nearest ocean cell by haversine distance; ties go to the smaller id.
pub fn nearest_centroid(grid: &CorridorGrid, p: GeoPoint) -> Option<CellId> {
    grid.nearest_cell(p).map(|(id, _)| id)
}

/// Assigns every sample of day `time` to its nearest cell centroid and averages.
/// Cells without samples are absent from the output. Output is sorted by cell.
pub fn map_to_cells(samples: &[EnvSample], grid: &CorridorGrid, time: NaiveDate) -> Vec<CellFeatures> {
    let centroids: Vec<(CellId, GeoPoint)> = grid.cells.values().map(|c| (c.id, c.centroid)).collect();
    if centroids.is_empty() {
        return Vec::new();
    }
    let assigned: Vec<(usize, &EnvSample)> = samples
        .par_iter()
        .filter(|s| s.time == time)
        .map(|s| {
            let mut best = (0usize, f64::INFINITY);
            for (k, &(_, c)) in centroids.iter().enumerate() {
                let d = haversine(s.point, c);
                if d < best.1 {
                    best = (k, d);
                }
            }
            (best.0, s)
        })
        .collect();

    // values are summed in sorted order so the means do not depend on input order
    let mut acc: BTreeMap<usize, ([Vec<f64>; 6], u32)> = BTreeMap::new();
    for (k, s) in assigned {
        let entry = acc.entry(k).or_default();
        entry.1 += 1;
        for (i, v) in s.values.iter().enumerate() {
            if let Some(v) = v {
                entry.0[i].push(*v);
            }
        }
    }
    acc.into_iter()
        .map(|(k, (mut fields, n))| {
            let mut values = [None; 6];
            let mut counts = [0u32; 6];
            for i in 0..6 {
                fields[i].sort_by(f64::total_cmp);
                counts[i] = fields[i].len() as u32;
                if counts[i] > 0 {
                    values[i] = Some(fields[i].iter().sum::<f64>() / counts[i] as f64);
                }
            }
            CellFeatures {
                cell: centroids[k].0,
                time,
                values,
                sample_count: n,
                field_counts: counts,
            }
        })
        .collect()
}

/// How warning thresholds are derived from the corridor distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CalibrationPolicy {
    /// Thickness, age and snow warn at the `upper` quantile, concentration at `lower`.
    Percentile { upper: f64, lower: f64 },
    /// Operator-supplied thresholds.
    Fixed {
        warn_thick: f64,
        warn_age: f64,
        warn_conc: f64,
        warn_snow: f64,
    },
}

impl Default for CalibrationPolicy {
    fn default() -> Self {
        CalibrationPolicy::Percentile { upper: 0.75, lower: 0.25 }
    }
}

/// Warning thresholds and observed bounds for the four hazard fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub warn_thick: f64,
    pub warn_age: f64,
    pub warn_conc: f64,
    pub warn_snow: f64,
    pub thick_max: f64,
    pub age_max: f64,
    pub conc_min: f64,
    pub snow_max: f64,
}

/// Linear-interpolated quantile of a sorted slice (the common "linear" method).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

pub fn calibrate(features: &[CellFeatures], policy: &CalibrationPolicy) -> Result<Calibration, EnvError> {
    if features.is_empty() {
        return Err(EnvError::EmptyFeatures);
    }
    let column = |f: Field| {
        let mut v: Vec<f64> = features.iter().filter_map(|c| c.get(f)).collect();
        v.sort_by(f64::total_cmp);
        if v.is_empty() {
            log::warn!("no observations of {} in the corridor", f.column());
        }
        v
    };
    let (thick, age, conc, snow) = (
        column(Field::Thickness),
        column(Field::Age),
        column(Field::Concentration),
        column(Field::Snow),
    );
    let max = |v: &[f64]| v.last().copied().unwrap_or(0.0);
    let min = |v: &[f64]| v.first().copied().unwrap_or(0.0);
    let (warn_thick, warn_age, warn_conc, warn_snow) = match *policy {
        CalibrationPolicy::Percentile { upper, lower } => {
            let qv = |v: &[f64], q| if v.is_empty() { 0.0 } else { quantile(v, q) };
            (qv(&thick, upper), qv(&age, upper), qv(&conc, lower), qv(&snow, upper))
        }
        CalibrationPolicy::Fixed {
            warn_thick,
            warn_age,
            warn_conc,
            warn_snow,
        } => (warn_thick, warn_age, warn_conc, warn_snow),
    };
    let cal = Calibration {
        warn_thick,
        warn_age,
        warn_conc,
        warn_snow,
        thick_max: max(&thick),
        age_max: max(&age),
        conc_min: min(&conc),
        snow_max: max(&snow),
    };
    for (name, degenerate) in cal.degenerate_fields() {
        if degenerate {
            log::warn!("{name}: observed bound equals warning threshold; its penalty is fixed at 0");
        }
    }
    Ok(cal)
}

impl Calibration {
    /// `(field, degenerate)` for the four hazard fields; a degenerate field has
    /// a non-positive span between threshold and bound.
    pub fn degenerate_fields(&self) -> [(&'static str, bool); 4] {
        [
            ("sithick", self.thick_max - self.warn_thick <= 0.0),
            ("siage", self.age_max - self.warn_age <= 0.0),
            ("siconc", self.warn_conc - self.conc_min <= 0.0),
            ("sisnthick", self.snow_max - self.warn_snow <= 0.0),
        ]
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("calibration serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self, EnvError> {
        toml::from_str(text).map_err(|e| EnvError::Dump(e.to_string()))
    }

    /// Short content hash of the canonical dump, recorded in every model.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// Writes samples in the default input layout, `NA` for missing values.
pub fn write_samples<W: std::io::Write>(samples: &[EnvSample], w: W) -> Result<(), EnvError> {
    let schema = EnvSchema::default();
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec![schema.lat.clone(), schema.lon.clone(), schema.time.clone()];
    header.extend(schema.fields.iter().cloned());
    wtr.write_record(&header).map_err(|e| EnvError::Csv(e.to_string()))?;
    for s in samples {
        let mut rec = vec![s.point.lat.to_string(), s.point.lon.to_string(), s.time.to_string()];
        rec.extend(s.values.iter().map(|v| v.map_or_else(|| schema.missing.clone(), |x| x.to_string())));
        wtr.write_record(&rec).map_err(|e| EnvError::Csv(e.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}

/// Writes cell features as CSV: `cell_id,time,sample_count,sithick,...`.
pub fn write_features<W: std::io::Write>(features: &[CellFeatures], w: W) -> Result<(), EnvError> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["cell_id".to_string(), "time".into(), "sample_count".into()];
    header.extend(Field::ALL.iter().map(|f| f.column().to_string()));
    wtr.write_record(&header).map_err(|e| EnvError::Csv(e.to_string()))?;
    for f in features {
        let mut rec = vec![f.cell.to_string(), f.time.to_string(), f.sample_count.to_string()];
        rec.extend(f.values.iter().map(|v| v.map_or_else(|| "NA".to_string(), |x| x.to_string())));
        wtr.write_record(&rec).map_err(|e| EnvError::Csv(e.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}
