//! Sparse functional datasets: one curve per subject, observed at a few
//! irregular time points, with an optional binary class label.
//!
//! The interchange format is long CSV (one row per observation) with header
//! `id,time,value[,label]`.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// One subject's irregular observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseCurve {
    pub id: String,
    /// Strictly ascending time points.
    pub times: Vec<f64>,
    /// Observed values, same length as `times`.
    pub values: Vec<f64>,
    /// Binary class label, if known.
    pub label: Option<u8>,
}

impl SparseCurve {
    pub fn new(
        id: impl Into<String>,
        times: Vec<f64>,
        values: Vec<f64>,
        label: Option<u8>,
    ) -> Result<Self> {
        let id = id.into();
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::InvalidCurve {
                id,
                message: format!(
                    "times ({}) and values ({}) must be equal length >= 1",
                    times.len(),
                    values.len()
                ),
            });
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidCurve {
                id,
                message: "times must be strictly ascending".into(),
            });
        }
        if times.iter().chain(values.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidCurve {
                id,
                message: "times and values must be finite".into(),
            });
        }
        if let Some(l) = label {
            if l > 1 {
                return Err(Error::InvalidCurve {
                    id,
                    message: format!("label must be 0 or 1, got {l}"),
                });
            }
        }
        Ok(SparseCurve {
            id,
            times,
            values,
            label,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// A collection of sparse curves over a common closed domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalDataset {
    pub curves: Vec<SparseCurve>,
    /// Closed interval `[t_min, t_max]` containing every observation time.
    pub domain: (f64, f64),
}

impl FunctionalDataset {
    pub fn new(curves: Vec<SparseCurve>, domain: (f64, f64)) -> Result<Self> {
        if curves.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if !(domain.0 < domain.1) || !domain.0.is_finite() || !domain.1.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "domain [{}, {}] is not a valid interval",
                domain.0, domain.1
            )));
        }
        for c in &curves {
            if c.times[0] < domain.0 || *c.times.last().unwrap() > domain.1 {
                return Err(Error::InvalidCurve {
                    id: c.id.clone(),
                    message: format!("times outside domain [{}, {}]", domain.0, domain.1),
                });
            }
        }
        Ok(FunctionalDataset { curves, domain })
    }

    /// Domain inferred from the observed time range.
    pub fn with_inferred_domain(curves: Vec<SparseCurve>) -> Result<Self> {
        if curves.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let lo = curves
            .iter()
            .map(|c| c.times[0])
            .fold(f64::INFINITY, f64::min);
        let hi = curves
            .iter()
            .map(|c| *c.times.last().unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        // A degenerate single-time dataset still needs a nonempty interval.
        let (lo, hi) = if lo < hi { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
        Self::new(curves, (lo, hi))
    }

    pub fn len(&self) -> usize {
        self.curves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }

    /// Total observation count pooled over curves.
    pub fn n_obs(&self) -> usize {
        self.curves.iter().map(|c| c.len()).sum()
    }

    /// Errors unless every curve carries a label.
    pub fn require_labels(&self) -> Result<()> {
        for c in &self.curves {
            if c.label.is_none() {
                return Err(Error::MissingLabel(c.id.clone()));
            }
        }
        Ok(())
    }

    pub fn labels(&self) -> Result<Vec<u8>> {
        self.require_labels()?;
        Ok(self.curves.iter().map(|c| c.label.unwrap()).collect())
    }
}

/// Column names used to read a long CSV file.
#[derive(Debug, Clone)]
pub struct LongCsvSchema {
    pub id: String,
    pub time: String,
    pub value: String,
    pub label: String,
}

impl Default for LongCsvSchema {
    fn default() -> Self {
        LongCsvSchema {
            id: "id".into(),
            time: "time".into(),
            value: "value".into(),
            label: "label".into(),
        }
    }
}

/// Read a long CSV (one row per observation) into a dataset.
///
/// Rows are grouped by id in first-appearance order and sorted by time within
/// each curve. The label column is optional; when present it must contain 0,
/// 1 or the empty string. The domain defaults to the observed time range.
pub fn load_long_csv(path: impl AsRef<Path>, schema: &LongCsvSchema) -> Result<FunctionalDataset> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => {
            Error::io(path, std::io::Error::new(std::io::ErrorKind::Other, e))
        }
        _ => Error::CsvParse {
            row: 0,
            message: e.to_string(),
        },
    })?;

    let headers = reader
        .headers()
        .map_err(|e| Error::CsvParse {
            row: 0,
            message: e.to_string(),
        })?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let id_col = col(&schema.id).ok_or_else(|| Error::CsvSchema(schema.id.clone()))?;
    let time_col = col(&schema.time).ok_or_else(|| Error::CsvSchema(schema.time.clone()))?;
    let value_col = col(&schema.value).ok_or_else(|| Error::CsvSchema(schema.value.clone()))?;
    let label_col = col(&schema.label);

    let mut order: Vec<String> = Vec::new();
    let mut by_id: HashMap<String, (Vec<f64>, Vec<f64>, Option<u8>)> = HashMap::new();

    for (i, record) in reader.records().enumerate() {
        let row = i + 2; // 1-based, after the header line
        let record = record.map_err(|e| Error::CsvParse {
            row,
            message: e.to_string(),
        })?;
        let field = |idx: usize| record.get(idx).unwrap_or("");
        let id = field(id_col).to_string();
        let time: f64 = field(time_col).parse().map_err(|_| Error::CsvParse {
            row,
            message: format!("non-numeric time `{}`", field(time_col)),
        })?;
        let value: f64 = field(value_col).parse().map_err(|_| Error::CsvParse {
            row,
            message: format!("non-numeric value `{}`", field(value_col)),
        })?;
        let label = match label_col {
            Some(idx) => {
                let raw = field(idx).trim();
                if raw.is_empty() {
                    None
                } else {
                    match raw {
                        "0" => Some(0),
                        "1" => Some(1),
                        other => {
                            return Err(Error::CsvParse {
                                row,
                                message: format!("label must be 0 or 1, got `{other}`"),
                            })
                        }
                    }
                }
            }
            None => None,
        };

        let entry = by_id.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            (Vec::new(), Vec::new(), None)
        });
        if entry.0.iter().any(|&t| t == time) {
            return Err(Error::DuplicateObservation { id, time });
        }
        entry.0.push(time);
        entry.1.push(value);
        if label.is_some() {
            entry.2 = label;
        }
    }

    if order.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let mut curves = Vec::with_capacity(order.len());
    for id in order {
        let (times, values, label) = by_id.remove(&id).unwrap();
        let mut pairs: Vec<(f64, f64)> = times.into_iter().zip(values).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (times, values): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        curves.push(SparseCurve::new(id, times, values, label)?);
    }
    FunctionalDataset::with_inferred_domain(curves)
}

/// Write a dataset as long CSV. The label column is emitted only when at
/// least one curve is labeled; unlabeled curves then get an empty field.
pub fn write_long_csv(dataset: &FunctionalDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| Error::io(path, e))?,
    );
    write_long_csv_to(dataset, &mut out).map_err(|e| Error::io(path, e))
}

pub fn write_long_csv_to(dataset: &FunctionalDataset, out: &mut impl Write) -> std::io::Result<()> {
    let any_label = dataset.curves.iter().any(|c| c.label.is_some());
    if any_label {
        writeln!(out, "id,time,value,label")?;
    } else {
        writeln!(out, "id,time,value")?;
    }
    for c in &dataset.curves {
        for (t, v) in c.times.iter().zip(&c.values) {
            if any_label {
                let label = c.label.map(|l| l.to_string()).unwrap_or_default();
                writeln!(out, "{},{},{},{}", c.id, t, v, label)?;
            } else {
                writeln!(out, "{},{},{}", c.id, t, v)?;
            }
        }
    }
    out.flush()
}

/// Randomly thin each curve to between `lo` and `hi` observations.
///
/// Kept time points are sampled without replacement from the curve's own
/// times; their order is preserved. Deterministic given the seed.
pub fn sparsify(
    dataset: &FunctionalDataset,
    n_obs_range: (usize, usize),
    seed: u64,
) -> Result<FunctionalDataset> {
    let (lo, hi) = n_obs_range;
    if lo < 1 || lo > hi {
        return Err(Error::InvalidConfig(format!(
            "invalid observation range [{lo}, {hi}]"
        )));
    }
    for c in &dataset.curves {
        if c.len() < hi {
            return Err(Error::InsufficientObservations {
                id: c.id.clone(),
                have: c.len(),
                need: hi,
            });
        }
    }

    let mut rng = seed::rng(seed, &[]);
    let mut curves = Vec::with_capacity(dataset.len());
    for c in &dataset.curves {
        let n_keep = rng.random_range(lo..=hi);
        let mut idx: Vec<usize> = (0..c.len()).collect();
        idx.shuffle(&mut rng);
        idx.truncate(n_keep);
        idx.sort_unstable();
        let times: Vec<f64> = idx.iter().map(|&j| c.times[j]).collect();
        let values: Vec<f64> = idx.iter().map(|&j| c.values[j]).collect();
        curves.push(SparseCurve::new(c.id.clone(), times, values, c.label)?);
    }
    FunctionalDataset::new(curves, dataset.domain)
}

/// How to partition a labeled dataset into train and test sets.
#[derive(Debug, Clone, Copy)]
pub struct SplitSpec {
    /// Fraction of curves assigned to the training set, in (0, 1).
    pub train_fraction: f64,
    pub seed: u64,
}

/// Partition a fully labeled dataset into disjoint train and test sets.
///
/// The training set has exactly `round(train_fraction * n)` curves. The split
/// is stratified by class: per-class counts are allocated by largest
/// remainder, and every class with at least two curves is represented on
/// both sides. Deterministic given the seed.
pub fn split(
    dataset: &FunctionalDataset,
    spec: &SplitSpec,
) -> Result<(FunctionalDataset, FunctionalDataset)> {
    dataset.require_labels()?;
    let n = dataset.len();
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train_fraction {} outside (0, 1)",
            spec.train_fraction
        )));
    }
    let n_train = (spec.train_fraction * n as f64).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::InvalidConfig(format!(
            "train_fraction {} leaves one side empty for n={n}",
            spec.train_fraction
        )));
    }

    // Class member lists in dataset order.
    let mut class_members: Vec<(u8, Vec<usize>)> = Vec::new();
    for (i, c) in dataset.curves.iter().enumerate() {
        let l = c.label.unwrap();
        match class_members.iter_mut().find(|(cl, _)| *cl == l) {
            Some((_, v)) => v.push(i),
            None => class_members.push((l, vec![i])),
        }
    }
    class_members.sort_by_key(|(l, _)| *l);

    // Largest-remainder allocation of n_train across classes.
    let mut alloc: Vec<usize> = Vec::with_capacity(class_members.len());
    let mut remainders: Vec<(f64, usize)> = Vec::with_capacity(class_members.len());
    let mut total = 0usize;
    for (k, (_, members)) in class_members.iter().enumerate() {
        let exact = spec.train_fraction * members.len() as f64;
        let base = exact.floor() as usize;
        alloc.push(base);
        remainders.push((exact - base as f64, k));
        total += base;
    }
    remainders.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut leftover = n_train.saturating_sub(total);
    for &(_, k) in &remainders {
        if leftover == 0 {
            break;
        }
        if alloc[k] < class_members[k].1.len() {
            alloc[k] += 1;
            leftover -= 1;
        }
    }
    // Keep every class with >= 2 members on both sides of the split.
    for (k, (_, members)) in class_members.iter().enumerate() {
        let m = members.len();
        if m >= 2 {
            if alloc[k] == 0 {
                alloc[k] = 1;
            } else if alloc[k] == m {
                alloc[k] = m - 1;
            }
        }
    }
    // Rebalance to hit n_train exactly after the clamping above.
    let mut assigned: usize = alloc.iter().sum();
    while assigned != n_train {
        let grow = assigned < n_train;
        let mut adjusted = false;
        for (k, (_, members)) in class_members.iter().enumerate() {
            let m = members.len();
            let (room_hi, room_lo) = if m >= 2 { (m - 1, 1) } else { (m, 0) };
            if grow && alloc[k] < room_hi {
                alloc[k] += 1;
                assigned += 1;
                adjusted = true;
                break;
            }
            if !grow && alloc[k] > room_lo {
                alloc[k] -= 1;
                assigned -= 1;
                adjusted = true;
                break;
            }
        }
        if !adjusted {
            return Err(Error::InvalidConfig(format!(
                "cannot stratify split: n_train={n_train} infeasible for class sizes {:?}",
                class_members.iter().map(|(_, m)| m.len()).collect::<Vec<_>>()
            )));
        }
    }

    let mut rng = seed::rng(spec.seed, &[]);
    let mut in_train = vec![false; n];
    for (k, (_, members)) in class_members.iter().enumerate() {
        let mut shuffled = members.clone();
        shuffled.shuffle(&mut rng);
        for &i in shuffled.iter().take(alloc[k]) {
            in_train[i] = true;
        }
    }

    let mut train = Vec::with_capacity(n_train);
    let mut test = Vec::with_capacity(n - n_train);
    for (i, c) in dataset.curves.iter().enumerate() {
        if in_train[i] {
            train.push(c.clone());
        } else {
            test.push(c.clone());
        }
    }
    Ok((
        FunctionalDataset::new(train, dataset.domain)?,
        FunctionalDataset::new(test, dataset.domain)?,
    ))
}
