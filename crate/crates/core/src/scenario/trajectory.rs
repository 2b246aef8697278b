//! Uniformly sampled multi-channel trajectories, their CSV form, and
//! trajectory comparison.

use std::fs;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

/// One recorded scalar series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Channel {
    pub name: String,
    pub values: Vec<f64>,
}

/// Channels sharing one time base.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub channels: Vec<Channel>,
}

impl Trajectory {
    pub fn new(names: impl IntoIterator<Item = String>) -> Self {
        Self {
            times: Vec::new(),
            channels: names
                .into_iter()
                .map(|name| Channel {
                    name,
                    values: Vec::new(),
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        self.channels.iter().find(|c| c.name == name).map(|c| c.values.as_slice())
    }

    pub fn channel_names(&self) -> impl Iterator<Item = &str> {
        self.channels.iter().map(|c| c.name.as_str())
    }

    /// Appends one sample; `values` must have one entry per channel.
    pub fn push(&mut self, t: f64, values: &[f64]) {
        assert_eq!(values.len(), self.channels.len(), "sample width mismatch");
        self.times.push(t);
        for (c, v) in self.channels.iter_mut().zip(values) {
            c.values.push(*v);
        }
    }

    /// Linear interpolation of channel `index` at `t`; `t` must lie within
    /// the sampled span.
    pub fn interpolate(&self, index: usize, t: f64) -> f64 {
        let values = &self.channels[index].values;
        let i = self.times.partition_point(|&x| x < t);
        if i < self.times.len() && self.times[i] == t {
            return values[i];
        }
        if i == 0 {
            return values[0];
        }
        if i == self.times.len() {
            return values[i - 1];
        }
        let (t0, t1) = (self.times[i - 1], self.times[i]);
        let w = (t - t0) / (t1 - t0);
        values[i - 1] + w * (values[i] - values[i - 1])
    }

    /// Per-sample mean of several trajectories with identical channels and
    /// time bases.
    pub fn average(runs: &[Trajectory]) -> Result<Trajectory, CompareError> {
        let first = runs.first().ok_or(CompareError::Empty)?;
        for r in &runs[1..] {
            if !same_channels(first, r) {
                return Err(CompareError::ChannelMismatch);
            }
            if !same_time_base(first, r) {
                return Err(CompareError::TimeBaseMismatch);
            }
        }
        let n = runs.len() as f64;
        let mut out = Trajectory::new(first.channel_names().map(str::to_owned));
        out.times = first.times.clone();
        for (ci, c) in out.channels.iter_mut().enumerate() {
            c.values = (0..first.len())
                .map(|i| runs.iter().map(|r| r.channels[ci].values[i]).sum::<f64>() / n)
                .collect();
        }
        Ok(out)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum CompareError {
    #[error("trajectories have different channels")]
    ChannelMismatch,
    #[error("trajectories do not overlap in time")]
    DisjointTimeSpans,
    #[error("trajectories have different time bases")]
    TimeBaseMismatch,
    #[error("trajectory has no samples")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelStats {
    pub name: String,
    pub rmse: f64,
    pub max_abs: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    /// Root mean square error pooled over every channel and sample.
    pub rmse: f64,
    pub max_abs: f64,
    pub per_channel: Vec<ChannelStats>,
}

const TIME_EPS: f64 = 1e-12;

fn same_channels(a: &Trajectory, b: &Trajectory) -> bool {
    a.channels.len() == b.channels.len() && a.channel_names().zip(b.channel_names()).all(|(x, y)| x == y)
}

fn same_time_base(a: &Trajectory, b: &Trajectory) -> bool {
    a.len() == b.len() && a.times.iter().zip(&b.times).all(|(x, y)| (x - y).abs() <= TIME_EPS)
}

/// RMSE and max-abs difference per channel and pooled.
///
/// When the time bases differ, both trajectories are linearly interpolated
/// onto the union of their sample times inside the common span.
pub fn compare(a: &Trajectory, b: &Trajectory) -> Result<Comparison, CompareError> {
    let mut names_a: Vec<&str> = a.channel_names().collect();
    let mut names_b: Vec<&str> = b.channel_names().collect();
    names_a.sort_unstable();
    names_b.sort_unstable();
    if names_a != names_b {
        return Err(CompareError::ChannelMismatch);
    }
    if a.is_empty() || b.is_empty() {
        return Err(CompareError::Empty);
    }

    let direct = same_time_base(a, b);
    let grid: Vec<f64> = if direct {
        a.times.clone()
    } else {
        let lo = a.times[0].max(b.times[0]);
        let hi = a.times[a.len() - 1].min(b.times[b.len() - 1]);
        if lo > hi {
            return Err(CompareError::DisjointTimeSpans);
        }
        let mut g: Vec<f64> = a
            .times
            .iter()
            .chain(&b.times)
            .copied()
            .filter(|t| *t >= lo && *t <= hi)
            .collect();
        g.sort_by(f64::total_cmp);
        g.dedup_by(|x, y| (*x - *y).abs() <= TIME_EPS);
        g
    };

    let mut per_channel = Vec::with_capacity(a.channels.len());
    let mut total_sq = 0.0;
    let mut total_n = 0usize;
    let mut max_abs = 0.0f64;
    for (ia, ca) in a.channels.iter().enumerate() {
        let ib = b.channels.iter().position(|c| c.name == ca.name).expect("channel sets match");
        let mut sq = 0.0;
        let mut worst = 0.0f64;
        for (k, &t) in grid.iter().enumerate() {
            let (va, vb) = if direct {
                (ca.values[k], b.channels[ib].values[k])
            } else {
                (a.interpolate(ia, t), b.interpolate(ib, t))
            };
            let d = va - vb;
            sq += d * d;
            worst = worst.max(d.abs());
        }
        total_sq += sq;
        total_n += grid.len();
        max_abs = max_abs.max(worst);
        per_channel.push(ChannelStats {
            name: ca.name.clone(),
            rmse: (sq / grid.len() as f64).sqrt(),
            max_abs: worst,
            samples: grid.len(),
        });
    }
    let rmse = if total_n == 0 { 0.0 } else { (total_sq / total_n as f64).sqrt() };
    Ok(Comparison {
        rmse,
        max_abs,
        per_channel,
    })
}

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("malformed CSV: {0}")]
    MalformedCsv(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn malformed(e: impl std::fmt::Display) -> CsvError {
    CsvError::MalformedCsv(e.to_string())
}

/// CSV text: header `t,<channel>…`, one row per sample. Floats use the
/// shortest representation that parses back to the same value.
pub fn to_csv_string(t: &Trajectory) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header = std::iter::once("t").chain(t.channel_names());
    w.write_record(header).expect("in-memory write");
    let mut row = Vec::with_capacity(t.channels.len() + 1);
    for i in 0..t.len() {
        row.clear();
        row.push(format!("{:?}", t.times[i]));
        row.extend(t.channels.iter().map(|c| format!("{:?}", c.values[i])));
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 output")
}

pub fn from_csv_str(text: &str) -> Result<Trajectory, CsvError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let headers = r.headers().map_err(malformed)?.clone();
    let mut fields = headers.iter();
    if fields.next() != Some("t") {
        return Err(CsvError::MalformedCsv("first column must be `t`".into()));
    }
    let mut traj = Trajectory::new(fields.map(str::to_owned));
    let mut seen = std::collections::BTreeSet::new();
    if !traj.channel_names().all(|n| seen.insert(n.to_owned())) {
        return Err(CsvError::MalformedCsv("duplicate channel name".into()));
    }
    let mut values = Vec::with_capacity(traj.channels.len());
    for (line, record) in r.records().enumerate() {
        let record = record.map_err(malformed)?;
        if record.len() != headers.len() {
            return Err(CsvError::MalformedCsv(format!("row {} has {} fields", line + 1, record.len())));
        }
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CsvError::MalformedCsv(format!("row {}: bad number `{s}`", line + 1)))
        };
        let t = parse(&record[0])?;
        if let Some(&last) = traj.times.last() {
            if !(t > last) {
                return Err(CsvError::MalformedCsv(format!("row {}: time not increasing", line + 1)));
            }
        }
        values.clear();
        for s in record.iter().skip(1) {
            values.push(parse(s)?);
        }
        traj.push(t, &values);
    }
    Ok(traj)
}

pub fn export_csv(t: &Trajectory, path: impl AsRef<Path>) -> Result<(), CsvError> {
    let path = path.as_ref();
    fs::write(path, to_csv_string(t)).map_err(|source| CsvError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn import_csv(path: impl AsRef<Path>) -> Result<Trajectory, CsvError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| CsvError::Io {
        path: path.display().to_string(),
        source,
    })?;
    from_csv_str(&text)
}
