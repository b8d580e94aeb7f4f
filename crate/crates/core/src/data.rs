//! Labeled feature matrices: CSV ingestion and export, min–max scaling,
//! train/test splits and the Gaussian-blob generator.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::nn::Matrix;
use crate::rng::seeded;

/// A labeled feature matrix. Labels are contiguous class ids `0..n_classes`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Vec<usize>,
    /// `class_names[c]` is the original label text of class id `c`.
    pub class_names: Vec<String>,
    pub feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<usize>, class_names: Vec<String>) -> Result<Self> {
        let feature_names = (0..features.cols()).map(|j| format!("f{j}")).collect();
        Self::with_feature_names(features, labels, class_names, feature_names)
    }

    pub fn with_feature_names(
        features: Matrix,
        labels: Vec<usize>,
        class_names: Vec<String>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        if labels.len() != features.rows() {
            return Err(invalid(format!(
                "{} labels for {} feature rows",
                labels.len(),
                features.rows()
            )));
        }
        if feature_names.len() != features.cols() {
            return Err(invalid(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                features.cols()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&c| c >= class_names.len()) {
            return Err(invalid(format!(
                "label {bad} outside [0, {})",
                class_names.len()
            )));
        }
        Ok(Self {
            features,
            labels,
            class_names,
            feature_names,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &c in &self.labels {
            counts[c] += 1;
        }
        counts
    }

    /// Rows at `idx`, keeping the class table.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
            feature_names: self.feature_names.clone(),
        }
    }

    /// Same labels, new features (e.g. a learned representation).
    pub fn with_features(&self, features: Matrix, prefix: &str) -> Result<Dataset> {
        let names = (0..features.cols()).map(|j| format!("{prefix}{j}")).collect();
        Dataset::with_feature_names(features, self.labels.clone(), self.class_names.clone(), names)
    }

    /// Re-indexes labels against another class table, matching by name.
    /// Needed when a test file was parsed separately and may lack some classes.
    pub fn align_classes(&self, class_names: &[String]) -> Result<Dataset> {
        let lookup: BTreeMap<&str, usize> = class_names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();
        let mut remap = Vec::with_capacity(self.n_classes());
        for name in &self.class_names {
            match lookup.get(name.as_str()) {
                Some(&id) => remap.push(id),
                None => return Err(invalid(format!("label {name:?} does not occur in the reference classes"))),
            }
        }
        Dataset::with_feature_names(
            self.features.clone(),
            self.labels.iter().map(|&c| remap[c]).collect(),
            class_names.to_vec(),
            self.feature_names.clone(),
        )
    }

    /// Writes `feature..., label` rows with a header; labels use their original text.
    pub fn write_csv(&self, path: impl AsRef<Path>, label_header: &str) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
        let mut header: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        header.push(label_header);
        w.write_record(&header).map_err(|e| csv_io(path, e))?;
        let mut record = Vec::with_capacity(self.dim() + 1);
        for (row, &c) in self.features.iter_rows().zip(&self.labels) {
            record.clear();
            record.extend(row.iter().map(|v| format_float(*v)));
            record.push(self.class_names[c].clone());
            w.write_record(&record).map_err(|e| csv_io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v:?}")
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e.to_string()))
}

/// Which column carries the class label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LabelColumn {
    Name(String),
    Index(usize),
    Last,
}

impl From<&str> for LabelColumn {
    /// Numeric text selects by index, anything else by header name.
    fn from(s: &str) -> Self {
        match s.parse::<usize>() {
            Ok(i) => LabelColumn::Index(i),
            Err(_) => LabelColumn::Name(s.to_string()),
        }
    }
}

/// Reads a comma-separated file of numeric features plus one label column.
///
/// Labels are mapped to contiguous ids: numerically ordered when every label
/// is an integer, lexicographically otherwise.
pub fn load_csv(path: impl AsRef<Path>, label_column: &LabelColumn, has_header: bool) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, label_column, has_header)
}

pub fn read_csv<R: std::io::Read>(reader: R, label_column: &LabelColumn, has_header: bool) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();

    let parse_err = |row: usize, message: String| Error::Parse { row, message };

    let mut header: Option<Vec<String>> = None;
    if has_header {
        match records.next() {
            None => return Err(parse_err(0, "file is empty".into())),
            Some(r) => {
                let r = r.map_err(|e| parse_err(1, e.to_string()))?;
                header = Some(r.iter().map(str::to_string).collect());
            }
        }
    }

    let mut width: Option<usize> = header.as_ref().map(Vec::len);
    let mut label_idx: Option<usize> = None;
    let mut data = Vec::new();
    let mut raw_labels = Vec::new();
    let mut line = usize::from(has_header);

    for rec in records {
        line += 1;
        let rec = rec.map_err(|e| parse_err(line, e.to_string()))?;
        if rec.len() == 1 && rec.get(0) == Some("") {
            continue;
        }
        let w = *width.get_or_insert(rec.len());
        if rec.len() != w {
            return Err(parse_err(
                line,
                format!("expected {w} fields, found {}", rec.len()),
            ));
        }
        let li = match label_idx {
            Some(i) => i,
            None => {
                let at = if header.is_some() { 1 } else { line };
                let i = resolve_label_column(label_column, header.as_deref(), w)
                    .map_err(|m| parse_err(at, m))?;
                label_idx = Some(i);
                i
            }
        };
        for (j, field) in rec.iter().enumerate() {
            if j == li {
                raw_labels.push(field.to_string());
            } else {
                let v: f64 = field.parse().map_err(|_| {
                    parse_err(line, format!("column {j}: non-numeric feature {field:?}"))
                })?;
                if !v.is_finite() {
                    return Err(parse_err(line, format!("column {j}: non-finite value {field:?}")));
                }
                data.push(v);
            }
        }
    }

    let (Some(w), Some(li)) = (width, label_idx) else {
        return Err(parse_err(line, "no data rows".into()));
    };
    let n = raw_labels.len();
    let features = Matrix::from_vec(n, w - 1, data)?;
    let (labels, class_names) = map_labels(&raw_labels);
    let feature_names = match header {
        Some(h) => h
            .into_iter()
            .enumerate()
            .filter(|&(j, _)| j != li)
            .map(|(_, s)| s)
            .collect(),
        None => (0..w - 1).map(|j| format!("f{j}")).collect(),
    };
    Dataset::with_feature_names(features, labels, class_names, feature_names)
}

fn resolve_label_column(col: &LabelColumn, header: Option<&[String]>, width: usize) -> std::result::Result<usize, String> {
    let idx = match col {
        LabelColumn::Last => width.checked_sub(1).ok_or("empty row")?,
        LabelColumn::Index(i) => *i,
        LabelColumn::Name(name) => match header {
            Some(h) => h
                .iter()
                .position(|s| s == name)
                .ok_or_else(|| format!("label column {name:?} not found in header"))?,
            None => return Err(format!("label column {name:?} given by name but file has no header")),
        },
    };
    if idx >= width {
        return Err(format!("label column {idx} out of range for {width} fields"));
    }
    if width < 2 {
        return Err("need at least one feature column besides the label".into());
    }
    Ok(idx)
}

/// Maps raw label strings to contiguous ids; returns `(labels, class_names)`.
pub fn map_labels(raw: &[String]) -> (Vec<usize>, Vec<String>) {
    let all_int = raw.iter().all(|s| s.parse::<i64>().is_ok());
    let mut names: Vec<&String> = raw.iter().collect();
    names.sort_unstable();
    names.dedup();
    if all_int {
        names.sort_by_key(|s| s.parse::<i64>().expect("checked"));
    }
    let ids: BTreeMap<&str, usize> = names
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let labels = raw.iter().map(|s| ids[s.as_str()]).collect();
    (labels, names.into_iter().cloned().collect())
}

/// Per-feature min and max, fitted on training data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl NormStats {
    pub fn dim(&self) -> usize {
        self.min.len()
    }

    /// Scales `features` in place. Constant features map to 0; values outside
    /// the fitted range are not clipped.
    pub fn apply_matrix(&self, features: &mut Matrix) -> Result<()> {
        if features.cols() != self.dim() {
            return Err(invalid(format!(
                "normalizer fitted on {} features, data has {}",
                self.dim(),
                features.cols()
            )));
        }
        for i in 0..features.rows() {
            for (j, v) in features.row_mut(i).iter_mut().enumerate() {
                let range = self.max[j] - self.min[j];
                *v = if range > 0.0 { (*v - self.min[j]) / range } else { 0.0 };
            }
        }
        Ok(())
    }
}

pub fn fit_normalizer(train: &Dataset) -> Result<NormStats> {
    if train.is_empty() {
        return Err(invalid("cannot fit a normalizer on an empty dataset"));
    }
    let d = train.dim();
    let mut min = vec![f64::INFINITY; d];
    let mut max = vec![f64::NEG_INFINITY; d];
    for row in train.features.iter_rows() {
        for j in 0..d {
            min[j] = min[j].min(row[j]);
            max[j] = max[j].max(row[j]);
        }
    }
    Ok(NormStats { min, max })
}

pub fn apply_normalizer(stats: &NormStats, data: &Dataset) -> Result<Dataset> {
    let mut out = data.clone();
    stats.apply_matrix(&mut out.features)?;
    Ok(out)
}

/// Index partition produced by [`split_indices`]; both halves ascending.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn split_indices(data: &Dataset, train_fraction: f64, seed: u64, stratified: bool) -> Result<SplitIndices> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(invalid(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let mut rng = seeded(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    if stratified {
        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); data.n_classes()];
        for (i, &c) in data.labels.iter().enumerate() {
            by_class[c].push(i);
        }
        for (c, mut idx) in by_class.into_iter().enumerate() {
            if idx.is_empty() {
                continue;
            }
            if idx.len() < 2 {
                return Err(invalid(format!(
                    "class {c} ({}) has fewer than 2 samples; cannot stratify",
                    data.class_names[c]
                )));
            }
            idx.shuffle(&mut rng);
            let k = ((idx.len() as f64 * train_fraction).round() as usize).clamp(1, idx.len() - 1);
            train.extend_from_slice(&idx[..k]);
            test.extend_from_slice(&idx[k..]);
        }
    } else {
        let mut idx: Vec<usize> = (0..data.len()).collect();
        idx.shuffle(&mut rng);
        let k = (data.len() as f64 * train_fraction).round() as usize;
        train.extend_from_slice(&idx[..k]);
        test.extend_from_slice(&idx[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitIndices { train, test })
}

pub fn split(data: &Dataset, train_fraction: f64, seed: u64, stratified: bool) -> Result<(Dataset, Dataset)> {
    let s = split_indices(data, train_fraction, seed, stratified)?;
    Ok((data.subset(&s.train), data.subset(&s.test)))
}

/// Isotropic Gaussian blobs with centers drawn uniformly in a box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    pub n_classes: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub d: usize,
    pub std: f64,
    pub center_box: (f64, f64),
    pub seed: u64,
}

impl BlobSpec {
    /// Three mixed classes, 3500/1500 samples, 10 features, std 0.2, box (0, 1).
    pub fn simulation(seed: u64) -> Self {
        Self {
            n_classes: 3,
            n_train: 3500,
            n_test: 1500,
            d: 10,
            std: 0.2,
            center_box: (0.0, 1.0),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(invalid("blobs need at least 2 classes"));
        }
        if !(self.std > 0.0 && self.std.is_finite()) {
            return Err(invalid(format!("blob std must be positive, got {}", self.std)));
        }
        if !(self.center_box.0 < self.center_box.1) {
            return Err(invalid(format!(
                "center box low {} must be below high {}",
                self.center_box.0, self.center_box.1
            )));
        }
        if self.d == 0 {
            return Err(invalid("blobs need at least one feature"));
        }
        Ok(())
    }
}

/// Class sizes for `n` samples over `k` classes: `n / k` each, remainder
/// handed out one by one starting at class 0.
pub fn allocate(n: usize, k: usize) -> Vec<usize> {
    (0..k).map(|c| n / k + usize::from(c < n % k)).collect()
}

pub fn make_blobs(spec: &BlobSpec) -> Result<(Dataset, Dataset)> {
    spec.validate()?;
    let mut rng = seeded(spec.seed);
    let (lo, hi) = spec.center_box;
    let centers: Vec<Vec<f64>> = (0..spec.n_classes)
        .map(|_| (0..spec.d).map(|_| rng.random_range(lo..hi)).collect())
        .collect();
    let names: Vec<String> = (0..spec.n_classes).map(|c| c.to_string()).collect();

    let mut draw = |n: usize| -> Result<Dataset> {
        let mut labels = Vec::with_capacity(n);
        for (c, count) in allocate(n, spec.n_classes).into_iter().enumerate() {
            labels.extend(std::iter::repeat_n(c, count));
        }
        labels.shuffle(&mut rng);
        let mut data = Vec::with_capacity(n * spec.d);
        for &c in &labels {
            for &m in &centers[c] {
                let e: f64 = rng.sample(StandardNormal);
                data.push(m + spec.std * e);
            }
        }
        Dataset::new(Matrix::from_vec(n, spec.d, data)?, labels, names.clone())
    };
    let train = draw(spec.n_train)?;
    let test = draw(spec.n_test)?;
    Ok((train, test))
}
