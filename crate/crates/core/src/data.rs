//! Station data: CSV ingestion, gridding and gap handling, U/V targets,
//! scaling, windowing and a seeded synthetic generator.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::ops::Range;
use std::path::Path;

use chrono::{DateTime, NaiveDateTime};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::circular::{from_uv, is_valid_direction, to_uv, wrap_degrees, UvPair, WindSample};
use crate::error::{Error, Result};
use crate::neural::Tensor2;

pub const GRID_SECONDS: i64 = 600;
/// Longest run of missing grid slots that is filled by interpolation.
pub const MAX_FILLED_GAP: usize = 3;

/// One station observation; any field may be missing.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MeteoRecord {
    pub timestamp: i64,
    pub pressure: Option<f64>,
    pub temperature: Option<f64>,
    pub humidity: Option<f64>,
    pub precipitation: Option<f64>,
    pub wind_speed_2min: Option<f64>,
    pub wind_dir_2min: Option<f64>,
    pub wind_speed_10min: Option<f64>,
    pub wind_dir_10min: Option<f64>,
}

impl MeteoRecord {
    fn raw(&self) -> [Option<f64>; RAW] {
        [
            self.pressure,
            self.temperature,
            self.humidity,
            self.precipitation,
            self.wind_speed_2min,
            self.wind_dir_2min,
            self.wind_speed_10min,
            self.wind_dir_10min,
        ]
    }
}

/// Column names and timestamp format of a station CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsvSchema {
    pub timestamp: String,
    /// chrono format string, interpreted as UTC.
    pub timestamp_format: String,
    pub pressure: String,
    pub temperature: String,
    pub humidity: String,
    pub precipitation: String,
    pub wind_speed_2min: String,
    pub wind_dir_2min: String,
    pub wind_speed_10min: String,
    pub wind_dir_10min: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            timestamp: "timestamp".into(),
            timestamp_format: "%Y-%m-%d %H:%M".into(),
            pressure: "pressure".into(),
            temperature: "temperature".into(),
            humidity: "humidity".into(),
            precipitation: "precipitation".into(),
            wind_speed_2min: "wind_speed_2min".into(),
            wind_dir_2min: "wind_dir_2min".into(),
            wind_speed_10min: "wind_speed_10min".into(),
            wind_dir_10min: "wind_dir_10min".into(),
        }
    }
}

impl CsvSchema {
    fn value_columns(&self) -> [&str; RAW] {
        [
            &self.pressure,
            &self.temperature,
            &self.humidity,
            &self.precipitation,
            &self.wind_speed_2min,
            &self.wind_dir_2min,
            &self.wind_speed_10min,
            &self.wind_dir_10min,
        ]
    }
}

/// Per-column tallies of cells that could not be used.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParseReport {
    pub rows: usize,
    /// Cells that were empty.
    pub empty: BTreeMap<String, usize>,
    /// Cells that did not parse as numbers.
    pub unparseable: BTreeMap<String, usize>,
    /// Cells outside the physical range of their field.
    pub out_of_range: BTreeMap<String, usize>,
}

impl ParseReport {
    pub fn warnings(&self) -> usize {
        self.unparseable.values().sum::<usize>() + self.out_of_range.values().sum::<usize>()
    }
}

impl fmt::Display for ParseReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "rows: {}", self.rows)?;
        writeln!(f, "warnings: {}", self.warnings())?;
        let mut names: Vec<&String> = self
            .empty
            .keys()
            .chain(self.unparseable.keys())
            .chain(self.out_of_range.keys())
            .collect();
        names.sort();
        names.dedup();
        for name in names {
            let get = |m: &BTreeMap<String, usize>| m.get(name).copied().unwrap_or(0);
            writeln!(
                f,
                "{name}: {} empty, {} unparseable, {} out of range",
                get(&self.empty),
                get(&self.unparseable),
                get(&self.out_of_range)
            )?;
        }
        Ok(())
    }
}

fn field_is_valid(index: usize, value: f64) -> bool {
    if !value.is_finite() {
        return false;
    }
    match index {
        2 => (0.0..=100.0).contains(&value),
        3 | 4 | 6 => value >= 0.0,
        5 | 7 => is_valid_direction(value),
        _ => true,
    }
}

pub fn parse_timestamp(text: &str, format: &str) -> Option<i64> {
    NaiveDateTime::parse_from_str(text.trim(), format)
        .ok()
        .map(|t| t.and_utc().timestamp())
}

pub fn format_timestamp(epoch: i64, format: &str) -> String {
    DateTime::from_timestamp(epoch, 0)
        .map(|t| t.format(format).to_string())
        .unwrap_or_else(|| epoch.to_string())
}

/// Read a station CSV. Lines starting with `#` are ignored.
pub fn parse_csv(path: &Path, schema: &CsvSchema) -> Result<(Vec<MeteoRecord>, ParseReport)> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::MissingColumn {
            path: path.to_path_buf(),
            column: name.to_string(),
        })
    };
    let ts_col = find(&schema.timestamp)?;
    let names = schema.value_columns();
    let cols = names.iter().map(|n| find(n)).collect::<Result<Vec<_>>>()?;

    let mut report = ParseReport::default();
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let ts_text = row.get(ts_col).unwrap_or("");
        let timestamp = parse_timestamp(ts_text, &schema.timestamp_format).ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            message: format!("line {line}: timestamp `{ts_text}` does not match `{}`", schema.timestamp_format),
        })?;
        let mut raw = [None; RAW];
        for (i, (&col, name)) in cols.iter().zip(names).enumerate() {
            let cell = row.get(col).unwrap_or("");
            if cell.is_empty() {
                *report.empty.entry(name.to_string()).or_default() += 1;
                continue;
            }
            match cell.parse::<f64>() {
                Ok(v) if field_is_valid(i, v) => raw[i] = Some(v),
                Ok(_) => *report.out_of_range.entry(name.to_string()).or_default() += 1,
                Err(_) => *report.unparseable.entry(name.to_string()).or_default() += 1,
            }
        }
        records.push(MeteoRecord {
            timestamp,
            pressure: raw[0],
            temperature: raw[1],
            humidity: raw[2],
            precipitation: raw[3],
            wind_speed_2min: raw[4],
            wind_dir_2min: raw[5],
            wind_speed_10min: raw[6],
            wind_dir_10min: raw[7],
        });
    }
    if records.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            message: "no data rows".into(),
        });
    }
    report.rows = records.len();
    Ok((records, report))
}

const RAW: usize = 8;
/// Column groups that are present or missing together: four scalars, then
/// the (speed, direction) pairs of the 2-minute and 10-minute wind.
const GROUPS: [&[usize]; 6] = [&[0], &[1], &[2], &[3], &[4, 5], &[6, 7]];

/// Columns of a [`FrameSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Column {
    Pressure,
    Temperature,
    Humidity,
    Precipitation,
    Speed2,
    Dir2,
    Speed10,
    Dir10,
    U2,
    V2,
    U10,
    V10,
}

impl Column {
    pub const ALL: [Column; 12] = [
        Column::Pressure,
        Column::Temperature,
        Column::Humidity,
        Column::Precipitation,
        Column::Speed2,
        Column::Dir2,
        Column::Speed10,
        Column::Dir10,
        Column::U2,
        Column::V2,
        Column::U10,
        Column::V10,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Column::Pressure => "pressure",
            Column::Temperature => "temperature",
            Column::Humidity => "humidity",
            Column::Precipitation => "precipitation",
            Column::Speed2 => "speed2",
            Column::Dir2 => "dir2",
            Column::Speed10 => "speed10",
            Column::Dir10 => "dir10",
            Column::U2 => "u2",
            Column::V2 => "v2",
            Column::U10 => "u10",
            Column::V10 => "v10",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// Model input features in channel order; the first two are the targets.
pub const FEATURES: [Column; 8] = [
    Column::U2,
    Column::V2,
    Column::U10,
    Column::V10,
    Column::Pressure,
    Column::Temperature,
    Column::Humidity,
    Column::Precipitation,
];

/// Gap-free series on the 10-minute grid. Rows are split into contiguous
/// segments; the boundary between two segments is a stitched-out gap.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSet {
    pub timestamps: Vec<i64>,
    pub segments: Vec<Range<usize>>,
    columns: Vec<Vec<f64>>,
    /// `observed[c][i]` is false where the value was imputed.
    observed: Vec<Vec<bool>>,
}

impl FrameSet {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn column(&self, c: Column) -> &[f64] {
        &self.columns[c.index()]
    }

    pub fn observed(&self, c: Column) -> &[bool] {
        &self.observed[c.index()]
    }

    pub fn imputed_count(&self) -> usize {
        self.observed[..RAW].iter().flatten().filter(|o| !**o).count()
    }

    /// Grid slots between the first and last row that were dropped.
    pub fn stitched_slots(&self) -> usize {
        match (self.timestamps.first(), self.timestamps.last()) {
            (Some(a), Some(b)) => ((b - a) / GRID_SECONDS) as usize + 1 - self.len(),
            _ => 0,
        }
    }

    /// The eight model features, channel-major.
    pub fn feature_matrix(&self) -> Vec<Vec<f64>> {
        FEATURES.iter().map(|c| self.column(*c).to_vec()).collect()
    }

    pub fn to_records(&self) -> Vec<MeteoRecord> {
        (0..self.len())
            .map(|i| {
                let v = |c: Column| Some(self.columns[c.index()][i]);
                MeteoRecord {
                    timestamp: self.timestamps[i],
                    pressure: v(Column::Pressure),
                    temperature: v(Column::Temperature),
                    humidity: v(Column::Humidity),
                    precipitation: v(Column::Precipitation),
                    wind_speed_2min: v(Column::Speed2),
                    wind_dir_2min: v(Column::Dir2),
                    wind_speed_10min: v(Column::Speed10),
                    wind_dir_10min: v(Column::Dir10),
                }
            })
            .collect()
    }

    /// Hex digest over timestamps and every column.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.timestamps {
            h.update(t.to_le_bytes());
        }
        for s in &self.segments {
            h.update((s.start as u64).to_le_bytes());
            h.update((s.end as u64).to_le_bytes());
        }
        for col in &self.columns {
            for v in col {
                h.update(v.to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Write in the station CSV dialect described by `schema`, preceded by
    /// `# ` comment lines.
    pub fn write_csv<W: Write>(&self, out: W, schema: &CsvSchema, comments: &[String]) -> Result<()> {
        let mut out = out;
        for c in comments {
            writeln!(out, "# {c}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![schema.timestamp.as_str()];
        header.extend(schema.value_columns());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut row = vec![format_timestamp(self.timestamps[i], &schema.timestamp_format)];
            row.extend(self.columns[..RAW].iter().map(|col| col[i].to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Copy)]
struct Slot {
    values: [Option<f64>; RAW],
    observed: [bool; RAW],
}

impl Slot {
    fn group_present(&self, g: usize) -> bool {
        GROUPS[g].iter().all(|&c| self.values[c].is_some())
    }
}

fn snap(ts: i64) -> i64 {
    (ts + GRID_SECONDS / 2).div_euclid(GRID_SECONDS) * GRID_SECONDS
}

fn grid(mut rows: Vec<(i64, Slot)>) -> Result<FrameSet> {
    if rows.is_empty() {
        return Err(Error::Empty("record list"));
    }
    // stable sort keeps the first record of duplicate slots
    rows.sort_by_key(|r| r.0);
    rows.dedup_by_key(|r| r.0);
    let t0 = rows[0].0;
    let n = ((rows[rows.len() - 1].0 - t0) / GRID_SECONDS) as usize + 1;
    if n > 50_000_000 {
        return Err(Error::InvalidArgument(format!("{n} grid slots; timestamps span too far")));
    }
    let mut slots: Vec<Option<Slot>> = vec![None; n];
    for (t, s) in rows {
        slots[((t - t0) / GRID_SECONDS) as usize] = Some(s);
    }
    let present = |i: usize, g: usize| slots[i].is_some_and(|s| s.group_present(g));
    if !(0..n).any(|i| present(i, 4)) {
        return Err(Error::InvalidArgument("2-minute wind (the target) is missing everywhere".into()));
    }

    let mut keep = vec![true; n];
    for g in 0..GROUPS.len() {
        let mut i = 0;
        while i < n {
            if present(i, g) {
                i += 1;
                continue;
            }
            let start = i;
            while i < n && !present(i, g) {
                i += 1;
            }
            if i - start > MAX_FILLED_GAP {
                keep[start..i].iter_mut().for_each(|k| *k = false);
            }
        }
    }
    let complete = |i: usize| (0..GROUPS.len()).all(|g| present(i, g));
    let mut ranges = Vec::new();
    let mut i = 0;
    while i < n {
        if !keep[i] {
            i += 1;
            continue;
        }
        let mut start = i;
        while i < n && keep[i] {
            i += 1;
        }
        let mut end = i;
        while start < end && !complete(start) {
            start += 1;
        }
        while end > start && !complete(end - 1) {
            end -= 1;
        }
        if start < end {
            ranges.push(start..end);
        }
    }
    if ranges.is_empty() {
        return Err(Error::InvalidArgument("no complete rows remain after gap removal".into()));
    }

    let mut timestamps = Vec::new();
    let mut segments = Vec::new();
    let mut columns = vec![Vec::new(); Column::ALL.len()];
    let mut observed = vec![Vec::new(); Column::ALL.len()];
    for range in ranges {
        let seg_start = timestamps.len();
        for g in 0..GROUPS.len() {
            fill_group(&mut slots, range.clone(), g);
        }
        for i in range {
            let s = slots[i].expect("interior slots are filled");
            timestamps.push(t0 + i as i64 * GRID_SECONDS);
            for c in 0..RAW {
                columns[c].push(s.values[c].expect("filled"));
                observed[c].push(s.observed[c]);
            }
        }
        segments.push(seg_start..timestamps.len());
    }
    for c in RAW..Column::ALL.len() {
        columns[c] = vec![0.0; timestamps.len()];
        let src = if c < Column::U10.index() { 4 } else { 6 };
        observed[c] = observed[src].clone();
    }
    Ok(derive_targets(FrameSet {
        timestamps,
        segments,
        columns,
        observed,
    }))
}

/// Interpolate the interior missing runs of group `g` inside `range`.
fn fill_group(slots: &mut [Option<Slot>], range: Range<usize>, g: usize) {
    let cols = GROUPS[g];
    let present = |s: &Option<Slot>| s.is_some_and(|s| s.group_present(g));
    let mut last = range.start;
    for i in range.clone() {
        if !present(&slots[i]) {
            continue;
        }
        if i > last + 1 {
            let a = slots[last].expect("present");
            let b = slots[i].expect("present");
            let span = (i - last) as f64;
            for k in last + 1..i {
                let f = (k - last) as f64 / span;
                let slot = slots[k].get_or_insert(Slot {
                    values: [None; RAW],
                    observed: [false; RAW],
                });
                if cols.len() == 1 {
                    let c = cols[0];
                    let (x, y) = (a.values[c].expect("present"), b.values[c].expect("present"));
                    slot.values[c] = Some(x + f * (y - x));
                } else {
                    let uv = |s: &Slot| {
                        WindSample {
                            speed: s.values[cols[0]].expect("present"),
                            direction: s.values[cols[1]].expect("present"),
                        }
                        .to_uv()
                    };
                    let (p, q) = (uv(&a), uv(&b));
                    let r = from_uv(UvPair::new(p.u + f * (q.u - p.u), p.v + f * (q.v - p.v)));
                    slot.values[cols[0]] = Some(r.sample.speed);
                    slot.values[cols[1]] = Some(r.sample.direction);
                }
                for &c in cols {
                    slot.observed[c] = false;
                }
            }
        }
        last = i;
    }
}

/// Snap records to the 10-minute grid, fill short gaps and stitch out long
/// ones. Wind is interpolated in U/V space.
pub fn clean_and_grid(records: &[MeteoRecord]) -> Result<FrameSet> {
    let rows = records
        .iter()
        .map(|r| {
            let values = r.raw();
            (
                snap(r.timestamp),
                Slot {
                    values,
                    observed: values.map(|v| v.is_some()),
                },
            )
        })
        .collect();
    grid(rows)
}

/// Re-grid an existing frame, keeping its imputation mask.
pub fn clean_frame(frame: &FrameSet) -> Result<FrameSet> {
    let rows = (0..frame.len())
        .map(|i| {
            let mut values = [None; RAW];
            let mut observed = [false; RAW];
            for c in 0..RAW {
                values[c] = Some(frame.columns[c][i]);
                observed[c] = frame.observed[c][i];
            }
            (frame.timestamps[i], Slot { values, observed })
        })
        .collect();
    grid(rows)
}

/// Recompute u2/v2 and u10/v10 from the speed and direction columns.
pub fn derive_targets(mut frame: FrameSet) -> FrameSet {
    for (s, d, u, v) in [
        (Column::Speed2, Column::Dir2, Column::U2, Column::V2),
        (Column::Speed10, Column::Dir10, Column::U10, Column::V10),
    ] {
        let uv: Vec<UvPair> = frame.columns[s.index()]
            .iter()
            .zip(&frame.columns[d.index()])
            .map(|(&speed, &direction)| to_uv(&WindSample { speed, direction }))
            .collect();
        frame.columns[u.index()] = uv.iter().map(|p| p.u).collect();
        frame.columns[v.index()] = uv.iter().map(|p| p.v).collect();
    }
    frame
}

/// Per-channel z-score normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Constant channels are left unscaled.
    pub passthrough: Vec<bool>,
}

impl Scaler {
    pub fn identity(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            std: vec![1.0; channels],
            passthrough: vec![true; channels],
        }
    }

    /// Fit on the given channel slices (population standard deviation).
    pub fn fit(channels: &[&[f64]]) -> Result<Self> {
        let mut s = Self::identity(channels.len());
        for (c, x) in channels.iter().enumerate() {
            if x.is_empty() {
                return Err(Error::Empty("scaler fitting range"));
            }
            let n = x.len() as f64;
            let mean = x.iter().sum::<f64>() / n;
            let std = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            if !(std.is_finite() && mean.is_finite()) {
                return Err(Error::NonFinite(format!("scaler channel {c}")));
            }
            if std > 1e-12 * (1.0 + mean.abs()) {
                s.mean[c] = mean;
                s.std[c] = std;
                s.passthrough[c] = false;
            }
        }
        Ok(s)
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    pub fn apply_value(&self, channel: usize, x: f64) -> f64 {
        (x - self.mean[channel]) / self.std[channel]
    }

    pub fn invert_value(&self, channel: usize, z: f64) -> f64 {
        z * self.std[channel] + self.mean[channel]
    }

    pub fn apply(&self, channels: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        self.check(channels.len())?;
        Ok(channels
            .iter()
            .enumerate()
            .map(|(c, x)| x.iter().map(|v| self.apply_value(c, *v)).collect())
            .collect())
    }

    pub fn invert(&self, channels: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        self.check(channels.len())?;
        Ok(channels
            .iter()
            .enumerate()
            .map(|(c, x)| x.iter().map(|v| self.invert_value(c, *v)).collect())
            .collect())
    }

    fn check(&self, n: usize) -> Result<()> {
        if n != self.channels() {
            return Err(Error::LengthMismatch {
                what: "scaler channels",
                left: self.channels(),
                right: n,
            });
        }
        Ok(())
    }
}

/// Fit the scaler of the eight model features on `train_rows`.
pub fn fit_scaler(frame: &FrameSet, train_rows: Range<usize>) -> Result<Scaler> {
    if train_rows.is_empty() || train_rows.end > frame.len() {
        return Err(Error::InvalidArgument(format!(
            "training rows {train_rows:?} invalid for {} rows",
            frame.len()
        )));
    }
    let cols: Vec<&[f64]> = FEATURES.iter().map(|c| &frame.column(*c)[train_rows.clone()]).collect();
    Scaler::fit(&cols)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// Chronological train/validation/test fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.7,
            val: 0.15,
            test: 0.15,
        }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|p| !(0.0..=1.0).contains(p)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "split fractions {parts:?} must be in [0, 1] and sum to 1"
            )));
        }
        Ok(())
    }

    /// Row ranges of the three splits over `n` rows.
    pub fn ranges(&self, n: usize) -> [Range<usize>; 3] {
        let a = ((n as f64 * self.train).floor() as usize).min(n);
        let b = ((n as f64 * (self.train + self.val)).floor() as usize).clamp(a, n);
        [0..a, a..b, b..n]
    }
}

/// A window starts at `start`: inputs are rows `start..start+L`, targets the
/// `H` rows after that.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub start: usize,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowSet {
    pub input_length: usize,
    pub horizon: usize,
    pub windows: Vec<Window>,
    pub split_rows: [Range<usize>; 3],
}

impl WindowSet {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &Window> + '_ {
        self.windows.iter().filter(move |w| w.split == split)
    }

    pub fn count(&self, split: Split) -> usize {
        self.split(split).count()
    }

    /// `[channels × L]` input of a window taken from channel-major series.
    pub fn input(&self, channels: &[Vec<f64>], w: &Window) -> Result<Tensor2> {
        let l = self.input_length;
        let data = channels.iter().flat_map(|c| &c[w.start..w.start + l]).copied().collect();
        Tensor2::from_vec(channels.len(), l, data)
    }

    /// `[targets × H]` future values of a window.
    pub fn target(&self, channels: &[Vec<f64>], w: &Window) -> Result<Tensor2> {
        let (l, h) = (self.input_length, self.horizon);
        let data = channels
            .iter()
            .flat_map(|c| &c[w.start + l..w.start + l + h])
            .copied()
            .collect();
        Tensor2::from_vec(channels.len(), h, data)
    }
}

/// Stride-1 windows that lie entirely inside one segment and one split.
pub fn make_windows(frame: &FrameSet, input_length: usize, horizon: usize, splits: SplitFractions) -> Result<WindowSet> {
    splits.validate()?;
    if input_length == 0 || horizon == 0 {
        return Err(Error::InvalidArgument("input length and horizon must be ≥ 1".into()));
    }
    let span = input_length + horizon;
    let split_rows = splits.ranges(frame.len());
    let mut windows = Vec::new();
    for (split, rows) in Split::ALL.into_iter().zip(&split_rows) {
        for seg in &frame.segments {
            let lo = seg.start.max(rows.start);
            let hi = seg.end.min(rows.end);
            if hi >= lo + span {
                windows.extend((lo..=hi - span).map(|start| Window { start, split }));
            }
        }
    }
    if windows.is_empty() {
        return Err(Error::SignalTooShort {
            what: "windowing (no segment fits input length plus horizon)",
            len: frame.segments.iter().map(|s| s.len()).max().unwrap_or(0),
            min: span,
        });
    }
    Ok(WindowSet {
        input_length,
        horizon,
        windows,
        split_rows,
    })
}

/// Parameters of the synthetic wind regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegimeSpec {
    /// Mean direction, degrees.
    pub base_direction: f64,
    /// Slow sinusoidal drift of the mean direction.
    pub drift_amplitude: f64,
    pub drift_period: f64,
    /// Linear drift, degrees per step.
    pub drift_rate: f64,
    pub diurnal_amplitude: f64,
    /// Steps per day.
    pub diurnal_period: f64,
    /// AR(1) coefficient and stationary standard deviation of direction noise.
    pub noise_phi: f64,
    pub noise_sigma: f64,
    pub mean_speed: f64,
    pub speed_phi: f64,
    /// Stationary standard deviation of log-speed.
    pub speed_sigma: f64,
    /// Smoothing factor of the exponential average giving the 10-minute wind.
    pub ten_min_alpha: f64,
    pub start_timestamp: i64,
}

impl Default for RegimeSpec {
    fn default() -> Self {
        Self {
            base_direction: 352.0,
            drift_amplitude: 15.0,
            drift_period: 4000.0,
            drift_rate: 0.0,
            diurnal_amplitude: 40.0,
            diurnal_period: 144.0,
            noise_phi: 0.1,
            noise_sigma: 8.0,
            mean_speed: 4.0,
            speed_phi: 0.9,
            speed_sigma: 0.1,
            ten_min_alpha: 0.3,
            start_timestamp: 1_577_836_800,
        }
    }
}

pub const MIN_SYNTH_STEPS: usize = 170;

impl RegimeSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("synthetic regime: {m}")));
        let values = [
            self.base_direction,
            self.drift_amplitude,
            self.drift_period,
            self.drift_rate,
            self.diurnal_amplitude,
            self.diurnal_period,
            self.noise_phi,
            self.noise_sigma,
            self.mean_speed,
            self.speed_phi,
            self.speed_sigma,
            self.ten_min_alpha,
        ];
        if values.iter().any(|v| !v.is_finite()) {
            return bad("parameters must be finite");
        }
        if self.drift_period <= 0.0 || self.diurnal_period <= 0.0 {
            return bad("periods must be positive");
        }
        if self.noise_phi.abs() >= 1.0 || self.speed_phi.abs() >= 1.0 {
            return bad("AR coefficients must lie in (-1, 1)");
        }
        if self.noise_sigma < 0.0 || self.speed_sigma < 0.0 {
            return bad("noise levels must be non-negative");
        }
        if self.mean_speed <= 0.0 {
            return bad("mean speed must be positive");
        }
        if !(self.ten_min_alpha > 0.0 && self.ten_min_alpha <= 1.0) {
            return bad("10-minute smoothing factor must lie in (0, 1]");
        }
        Ok(())
    }

    /// Direction without noise at step `t`, before wrapping.
    pub fn deterministic_direction(&self, t: usize) -> f64 {
        let t = t as f64;
        let tau = std::f64::consts::TAU;
        self.base_direction
            + self.drift_amplitude * (tau * t / self.drift_period).sin()
            + self.drift_rate * t
            + self.diurnal_amplitude * (tau * t / self.diurnal_period).sin()
    }
}

struct Ar1 {
    phi: f64,
    innovation: Normal<f64>,
    state: f64,
}

impl Ar1 {
    fn new(phi: f64, sigma: f64, rng: &mut ChaCha8Rng) -> Self {
        let innovation = Normal::new(0.0, sigma * (1.0 - phi * phi).sqrt()).expect("finite non-negative sigma");
        let stationary = Normal::new(0.0, sigma).expect("finite non-negative sigma");
        Self {
            phi,
            innovation,
            state: stationary.sample(rng),
        }
    }

    fn next(&mut self, rng: &mut ChaCha8Rng) -> f64 {
        let x = self.state;
        self.state = self.phi * self.state + self.innovation.sample(rng);
        x
    }
}

/// Seeded synthetic station series with a direction that keeps crossing
/// north.
pub fn synth_wind(seed: u64, n_steps: usize, spec: &RegimeSpec) -> Result<FrameSet> {
    spec.validate()?;
    if n_steps < MIN_SYNTH_STEPS {
        return Err(Error::SignalTooShort {
            what: "synthetic series",
            len: n_steps,
            min: MIN_SYNTH_STEPS,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dir_noise = Ar1::new(spec.noise_phi, spec.noise_sigma, &mut rng);
    let mut log_speed = Ar1::new(spec.speed_phi, spec.speed_sigma, &mut rng);
    let mut temp_noise = Ar1::new(0.99, 0.8, &mut rng);
    let mut pressure_noise = Ar1::new(0.995, 4.0, &mut rng);
    let mut humidity_noise = Ar1::new(0.99, 4.0, &mut rng);
    let mut rain_driver = Ar1::new(0.99, 1.0, &mut rng);
    let tau = std::f64::consts::TAU;

    let mut columns = vec![Vec::with_capacity(n_steps); Column::ALL.len()];
    let mut smooth: Option<UvPair> = None;
    for t in 0..n_steps {
        let phase = tau * t as f64 / spec.diurnal_period;
        let direction = wrap_degrees(spec.deterministic_direction(t) + dir_noise.next(&mut rng));
        let speed = spec.mean_speed * log_speed.next(&mut rng).exp();
        let temperature = 15.0 + 6.0 * (phase - 1.2).sin() + temp_noise.next(&mut rng);
        let pressure = 1013.0 + pressure_noise.next(&mut rng) - 0.8 * (2.0 * phase).cos();
        let humidity = (65.0 - 2.5 * (temperature - 15.0) + humidity_noise.next(&mut rng)).clamp(0.0, 100.0);
        let precipitation = (rain_driver.next(&mut rng) - 1.5).max(0.0) * 0.4;

        let uv = to_uv(&WindSample { speed, direction });
        let ema = match smooth {
            None => uv,
            Some(p) => UvPair::new(
                p.u + spec.ten_min_alpha * (uv.u - p.u),
                p.v + spec.ten_min_alpha * (uv.v - p.v),
            ),
        };
        smooth = Some(ema);
        let ten = from_uv(ema).sample;

        let row = [
            pressure,
            temperature,
            humidity,
            precipitation,
            speed,
            direction,
            ten.speed,
            ten.direction,
        ];
        for (c, v) in row.into_iter().enumerate() {
            columns[c].push(v);
        }
    }
    for c in RAW..Column::ALL.len() {
        columns[c] = vec![0.0; n_steps];
    }
    Ok(derive_targets(FrameSet {
        timestamps: (0..n_steps)
            .map(|t| spec.start_timestamp + t as i64 * GRID_SECONDS)
            .collect(),
        segments: vec![0..n_steps],
        columns,
        observed: vec![vec![true; n_steps]; Column::ALL.len()],
    }))
}

/// Number of wraps across north between consecutive samples.
pub fn north_crossings(directions: &[f64]) -> usize {
    directions.windows(2).filter(|w| (w[1] - w[0]).abs() > 180.0).count()
}
