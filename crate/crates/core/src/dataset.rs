//! Classification datasets with features min-max normalized to `[0, 1]`,
//! plus the 16-point toy tasks whose labelings need a depth-2 tree.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ibmdp::Observation;
use crate::trees::DecisionTree;

/// Per-column range used for normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnRange {
    pub min: f64,
    pub max: f64,
}

impl ColumnRange {
    pub fn normalize(&self, x: f64) -> f64 {
        if self.max > self.min {
            (x - self.min) / (self.max - self.min)
        } else {
            0.5
        }
    }
}

/// Which column of a delimited file holds the class label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    Name(String),
    Index(usize),
    Last,
}

impl LabelColumn {
    /// Parses a selector: a plain integer is a column index, anything else
    /// a header name.
    pub fn parse(s: &str) -> Self {
        match s.parse::<usize>() {
            Ok(i) => LabelColumn::Index(i),
            Err(_) => LabelColumn::Name(s.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    feature_count: usize,
    class_count: usize,
    feature_names: Option<Vec<String>>,
    class_names: Option<Vec<String>>,
    ranges: Option<Vec<ColumnRange>>,
}

/// Result of counting the points inside an observation.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMasses {
    pub count: usize,
    /// Sums to 1 when `count > 0`, all zeros otherwise.
    pub fractions: Vec<f64>,
}

impl Dataset {
    /// Builds a dataset from already-normalized rows.
    pub fn new(rows: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        let feature_count = rows.first().map_or(0, Vec::len);
        let class_count = labels.iter().max().map_or(0, |&m| m + 1);
        let mut features = Vec::with_capacity(rows.len() * feature_count);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != feature_count {
                return Err(Error::InvalidDataset(format!(
                    "row {i} has {} features, expected {feature_count}",
                    row.len()
                )));
            }
            features.extend_from_slice(row);
        }
        let data = Dataset {
            features,
            labels,
            feature_count,
            class_count,
            feature_names: None,
            class_names: None,
            ranges: None,
        };
        data.validate()?;
        Ok(data)
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.feature_count {
            return Err(Error::DimensionMismatch {
                expected: self.feature_count,
                got: names.len(),
            });
        }
        self.feature_names = Some(names);
        Ok(self)
    }

    pub fn with_class_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.class_count {
            return Err(Error::DimensionMismatch {
                expected: self.class_count,
                got: names.len(),
            });
        }
        self.class_names = Some(names);
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        if self.labels.is_empty() {
            return Err(Error::InvalidDataset("dataset is empty".into()));
        }
        if self.feature_count == 0 {
            return Err(Error::InvalidDataset("dataset has no feature columns".into()));
        }
        if self.labels.len() * self.feature_count != self.features.len() {
            return Err(Error::InvalidDataset(
                "feature matrix and labels disagree in length".into(),
            ));
        }
        if let Some(x) = self.features.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(Error::InvalidDataset(format!("feature value {x} outside [0, 1]")));
        }
        let mut seen = vec![false; self.class_count];
        for &l in &self.labels {
            seen[l] = true;
        }
        if self.class_count < 2 {
            return Err(Error::InvalidDataset("need at least two distinct labels".into()));
        }
        if let Some(c) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidDataset(format!("class {c} has no examples")));
        }
        Ok(())
    }

    /// Reads a delimited file with a header row. The delimiter is detected
    /// from the header among comma, semicolon and tab.
    pub fn load(path: impl AsRef<Path>, label: &LabelColumn) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(BufReader::new(file), label)
    }

    pub fn from_reader<R: Read>(reader: R, label: &LabelColumn) -> Result<Self> {
        let mut reader = BufReader::new(reader);
        let mut header = String::new();
        reader
            .read_line(&mut header)
            .map_err(|e| Error::Parse(format!("cannot read header: {e}")))?;
        if header.trim().is_empty() {
            return Err(Error::InvalidDataset("dataset is empty".into()));
        }
        let delimiter = sniff_delimiter(&header);
        let mut csv = csv::ReaderBuilder::new()
            .delimiter(delimiter)
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(header.as_bytes().chain(reader));

        let headers: Vec<String> = csv.headers()?.iter().map(str::to_string).collect();
        let label_idx = match label {
            LabelColumn::Index(i) if *i < headers.len() => *i,
            LabelColumn::Last => headers.len() - 1,
            LabelColumn::Name(name) => headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Parse(format!("no column named {name:?}")))?,
            LabelColumn::Index(i) => {
                return Err(Error::Parse(format!(
                    "label column {i} out of range ({} columns)",
                    headers.len()
                )))
            }
        };

        let mut raw: Vec<Vec<f64>> = Vec::new();
        let mut class_names: Vec<String> = Vec::new();
        let mut labels = Vec::new();
        for (line, record) in csv.records().enumerate() {
            let record = record?;
            let mut row = Vec::with_capacity(headers.len() - 1);
            for (j, cell) in record.iter().enumerate() {
                if j == label_idx {
                    let id = match class_names.iter().position(|c| c == cell) {
                        Some(id) => id,
                        None => {
                            class_names.push(cell.to_string());
                            class_names.len() - 1
                        }
                    };
                    labels.push(id);
                } else {
                    let x: f64 = cell.parse().map_err(|_| {
                        Error::Parse(format!(
                            "row {}: column {:?} is not numeric: {cell:?}",
                            line + 2,
                            headers[j]
                        ))
                    })?;
                    if !x.is_finite() {
                        return Err(Error::Parse(format!("row {}: non-finite value {cell:?}", line + 2)));
                    }
                    row.push(x);
                }
            }
            raw.push(row);
        }
        if raw.is_empty() {
            return Err(Error::InvalidDataset("dataset is empty".into()));
        }
        if class_names.len() < 2 {
            return Err(Error::InvalidDataset("need at least two distinct labels".into()));
        }

        let d = headers.len() - 1;
        let ranges: Vec<ColumnRange> = (0..d)
            .map(|j| {
                raw.iter().fold(
                    ColumnRange {
                        min: f64::INFINITY,
                        max: f64::NEG_INFINITY,
                    },
                    |r, row| ColumnRange {
                        min: r.min.min(row[j]),
                        max: r.max.max(row[j]),
                    },
                )
            })
            .collect();
        let rows = raw
            .into_iter()
            .map(|row| row.iter().zip(&ranges).map(|(&x, r)| r.normalize(x)).collect())
            .collect();
        let feature_names = headers
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != label_idx)
            .map(|(_, h)| h.clone())
            .collect();
        let mut data = Dataset::new(rows, labels)?
            .with_feature_names(feature_names)?
            .with_class_names(class_names)?;
        data.ranges = Some(ranges);
        Ok(data)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_count(&self) -> usize {
        self.feature_count
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.feature_count..(i + 1) * self.feature_count]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks_exact(self.feature_count)
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    pub fn class_names(&self) -> Option<&[String]> {
        self.class_names.as_deref()
    }

    /// Per-column ranges seen before normalization (files only).
    pub fn ranges(&self) -> Option<&[ColumnRange]> {
        self.ranges.as_deref()
    }

    pub fn class_counts_of(&self, members: &[u32]) -> Vec<usize> {
        let mut counts = vec![0; self.class_count];
        for &i in members {
            counts[self.labels[i as usize]] += 1;
        }
        counts
    }

    /// Counts the points inside `observation` and their class fractions.
    pub fn class_masses(&self, observation: &Observation) -> Result<ClassMasses> {
        if observation.feature_count() != self.feature_count {
            return Err(Error::DimensionMismatch {
                expected: self.feature_count,
                got: observation.feature_count(),
            });
        }
        let mut counts = vec![0usize; self.class_count];
        for (row, &label) in self.rows().zip(&self.labels) {
            if observation.contains(row) {
                counts[label] += 1;
            }
        }
        let count: usize = counts.iter().sum();
        let fractions = counts
            .iter()
            .map(|&c| if count == 0 { 0.0 } else { c as f64 / count as f64 })
            .collect();
        Ok(ClassMasses { count, fractions })
    }

    /// Writes the normalized dataset as comma-separated text with a header.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = match &self.feature_names {
            Some(names) => names.clone(),
            None => (0..self.feature_count).map(|k| format!("x{k}")).collect(),
        };
        header.push("label".into());
        w.write_record(&header)?;
        for (row, &label) in self.rows().zip(&self.labels) {
            let mut record: Vec<String> = row.iter().map(|x| x.to_string()).collect();
            record.push(self.class_name(label));
            w.write_record(&record)?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn class_name(&self, class: usize) -> String {
        match &self.class_names {
            Some(names) => names[class].clone(),
            None => class.to_string(),
        }
    }

    /// Normalization parameters as `{column: {min, max}}`.
    pub fn normalization_json(&self) -> Result<String> {
        let mut map = BTreeMap::new();
        if let Some(ranges) = &self.ranges {
            for (k, r) in ranges.iter().enumerate() {
                let name = self
                    .feature_names
                    .as_ref()
                    .map_or_else(|| format!("x{k}"), |n| n[k].clone());
                map.insert(name, *r);
            }
        }
        Ok(serde_json::to_string_pretty(&map)?)
    }
}

fn sniff_delimiter(header: &str) -> u8 {
    b",;\t"
        .iter()
        .copied()
        .max_by_key(|&d| (header.bytes().filter(|&b| b == d).count(), d == b','))
        .unwrap_or(b',')
}

/// Grid coordinates shared by every toy task.
pub const TOY_GRID: [f64; 4] = [0.125, 0.375, 0.625, 0.875];

/// Number of toy tasks.
pub const TOY_TASK_COUNT: usize = 7;

/// Leaf labels `(low-low, low-high, high-low, high-high)` tried for each
/// generating tree; every pattern needs all four leaves.
const TOY_LEAF_PATTERNS: [[usize; 4]; 4] = [[0, 1, 1, 0], [1, 0, 0, 1], [0, 1, 0, 1], [1, 0, 1, 0]];

/// Generating tree of a toy task: root splits `root_feature` at 0.5, each
/// child splits either the same feature (at 0.25 / 0.75) or the other one
/// (at 0.5).
pub fn toy_generating_tree(index: usize) -> Result<DecisionTree> {
    toy_catalogue()
        .into_iter()
        .nth(index)
        .map(|(tree, _)| tree)
        .ok_or_else(|| Error::InvalidConfig(format!("toy task index {index} outside 0..{TOY_TASK_COUNT}")))
}

/// One of the seven 16-point toy tasks on `TOY_GRID²`.
///
/// Task 0 is the XOR checkerboard (class 1 iff `(x0 <= 0.5) xor (x1 <= 0.5)`).
pub fn toy_task(index: usize) -> Result<Dataset> {
    toy_catalogue()
        .into_iter()
        .nth(index)
        .map(|(_, data)| data)
        .ok_or_else(|| Error::InvalidConfig(format!("toy task index {index} outside 0..{TOY_TASK_COUNT}")))
}

fn toy_points() -> Vec<Vec<f64>> {
    TOY_GRID
        .iter()
        .flat_map(|&a| TOY_GRID.iter().map(move |&b| vec![a, b]))
        .collect()
}

fn toy_catalogue() -> Vec<(DecisionTree, Dataset)> {
    let points = toy_points();
    let mut seen: Vec<Vec<usize>> = Vec::new();
    let mut out = Vec::new();
    for pattern in TOY_LEAF_PATTERNS {
        for root in 0..2usize {
            for low_same in [false, true] {
                for high_same in [false, true] {
                    let child = |same: bool, at: f64, l: usize, h: usize| {
                        let (f, t) = if same { (root, at) } else { (1 - root, 0.5) };
                        DecisionTree::split(f, t, DecisionTree::leaf(l), DecisionTree::leaf(h))
                    };
                    let tree = DecisionTree::split(
                        root,
                        0.5,
                        child(low_same, 0.25, pattern[0], pattern[1]),
                        child(high_same, 0.75, pattern[2], pattern[3]),
                    );
                    let labels: Vec<usize> = points.iter().map(|p| tree.classify(p).expect("2-d point")).collect();
                    if seen.contains(&labels) || best_shallow_accuracy(&points, &labels) >= 1.0 {
                        continue;
                    }
                    seen.push(labels.clone());
                    let data = Dataset::new(points.clone(), labels).expect("toy data is valid");
                    out.push((tree, data));
                    if out.len() == TOY_TASK_COUNT {
                        return out;
                    }
                }
            }
        }
    }
    unreachable!("the pattern table yields at least {TOY_TASK_COUNT} toy tasks")
}

/// Best accuracy of any tree of depth <= 1 with thresholds in
/// `{0.25, 0.5, 0.75}`.
pub(crate) fn best_shallow_accuracy(points: &[Vec<f64>], labels: &[usize]) -> f64 {
    let n = labels.len() as f64;
    let classes = labels.iter().max().map_or(1, |m| m + 1);
    let count =
        |pred: &dyn Fn(&[f64]) -> usize| points.iter().zip(labels).filter(|(p, &l)| pred(p) == l).count() as f64 / n;
    let mut best: f64 = 0.0;
    for c in 0..classes {
        best = best.max(count(&|_| c));
    }
    for f in 0..points[0].len() {
        for t in [0.25, 0.5, 0.75] {
            for lo in 0..classes {
                for hi in 0..classes {
                    best = best.max(count(&|p| if p[f] <= t { lo } else { hi }));
                }
            }
        }
    }
    best
}
