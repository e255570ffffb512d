//! Labelled feature matrices, z-scoring and on-disk formats.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{ResotError, Result};

/// Column name holding the class label in feature CSVs.
pub const LABEL_COLUMN: &str = "label";

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Array2<f64>,
    y: Vec<usize>,
    feature_names: Vec<String>,
    classes: usize,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Vec<usize>, feature_names: Vec<String>, classes: usize) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(ResotError::DimensionMismatch { expected: x.nrows(), actual: y.len() });
        }
        if x.ncols() != feature_names.len() {
            return Err(ResotError::DimensionMismatch { expected: x.ncols(), actual: feature_names.len() });
        }
        if classes < 2 {
            return Err(ResotError::InvalidArgument(format!("need at least 2 classes, got {classes}")));
        }
        if let Some(&label) = y.iter().find(|&&l| l >= classes) {
            return Err(ResotError::LabelOutOfRange { label, classes });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(ResotError::NonFinite("feature matrix".into()));
        }
        Ok(Self { x: x.as_standard_layout().into_owned(), y, feature_names, classes })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn features(&self) -> usize {
        self.x.ncols()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn y(&self) -> &[usize] {
        &self.y
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn row(&self, n: usize) -> &[f64] {
        let d = self.x.ncols();
        &self.x.as_slice().expect("standard layout")[n * d..(n + 1) * d]
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select(Axis(0), indices),
            y: indices.iter().map(|&i| self.y[i]).collect(),
            feature_names: self.feature_names.clone(),
            classes: self.classes,
        }
    }

    pub fn range(&self, start: usize, end: usize) -> Dataset {
        self.subset(&(start..end).collect::<Vec<_>>())
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        self.y.iter().for_each(|&l| counts[l] += 1);
        counts
    }

    pub fn map_x(&self, f: impl FnOnce(&Array2<f64>) -> Array2<f64>) -> Result<Dataset> {
        Dataset::new(f(&self.x), self.y.clone(), self.feature_names.clone(), self.classes)
    }
}

/// Per-column z-scoring, `(x - mean) / (sd + floor)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub const DEFAULT_FLOOR: f64 = 0.1;

    pub fn fit(x: &Array2<f64>, floor: f64) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(ResotError::EmptyBatch);
        }
        let mean: Array1<f64> = x.mean_axis(Axis(0)).expect("nonempty");
        let sd = x.std_axis(Axis(0), 0.0);
        Ok(Self { mean: mean.to_vec(), scale: sd.iter().map(|s| s + floor).collect() })
    }

    pub fn identity(features: usize) -> Self {
        Self { mean: vec![0.0; features], scale: vec![1.0; features] }
    }

    pub fn transform(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.mean.len() {
            return Err(ResotError::DimensionMismatch { expected: self.mean.len(), actual: x.ncols() });
        }
        let mut out = x.to_owned();
        for mut row in out.rows_mut() {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }

    pub fn transform_dataset(&self, ds: &Dataset) -> Result<Dataset> {
        let x = self.transform(ds.x())?;
        Dataset::new(x, ds.y().to_vec(), ds.feature_names().to_vec(), ds.classes())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain numbers serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| ResotError::Parse(e.to_string()))
    }
}

/// Reads a feature CSV: one column per feature plus a `label` column.
/// Without a label column every label is 0 and `classes` must be given.
pub fn read_csv<R: Read>(reader: R, classes: Option<usize>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let label_col = header.iter().position(|h| h == LABEL_COLUMN);
    let feature_names: Vec<String> =
        header.iter().enumerate().filter(|(i, _)| Some(*i) != label_col).map(|(_, h)| h.clone()).collect();
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(ResotError::Parse(format!("row {}: {} fields, expected {}", row + 1, rec.len(), header.len())));
        }
        for (i, field) in rec.iter().enumerate() {
            if Some(i) == label_col {
                let l: usize =
                    field.parse().map_err(|_| ResotError::Parse(format!("row {}: bad label `{field}`", row + 1)))?;
                labels.push(l);
            } else {
                let v: f64 =
                    field.parse().map_err(|_| ResotError::Parse(format!("row {}: `{field}` is not a number", row + 1)))?;
                values.push(v);
            }
        }
        if label_col.is_none() {
            labels.push(0);
        }
    }
    let n = labels.len();
    let x = Array2::from_shape_vec((n, feature_names.len()), values).map_err(|e| ResotError::Parse(e.to_string()))?;
    let inferred = labels.iter().max().map_or(2, |m| (m + 1).max(2));
    Dataset::new(x, labels, feature_names, classes.unwrap_or(inferred).max(inferred))
}

pub fn write_csv<W: Write>(writer: W, ds: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = ds.feature_names().to_vec();
    header.push(LABEL_COLUMN.into());
    w.write_record(&header)?;
    for n in 0..ds.len() {
        let mut rec: Vec<String> = ds.row(n).iter().map(|v| v.to_string()).collect();
        rec.push(ds.y()[n].to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv_path(path: &Path, classes: Option<usize>) -> Result<Dataset> {
    read_csv(std::io::BufReader::new(std::fs::File::open(path)?), classes)
}

fn read_idx<R: Read>(mut reader: R, magic: u32) -> Result<(Vec<usize>, Vec<u8>)> {
    let mut head = [0u8; 4];
    reader.read_exact(&mut head).map_err(|_| ResotError::Truncated("IDX header"))?;
    if u32::from_be_bytes(head) != magic {
        return Err(ResotError::BadMagic);
    }
    let dims = (magic & 0xFF) as usize;
    let mut shape = Vec::with_capacity(dims);
    for _ in 0..dims {
        reader.read_exact(&mut head).map_err(|_| ResotError::Truncated("IDX shape"))?;
        shape.push(u32::from_be_bytes(head) as usize);
    }
    let mut data = Vec::new();
    reader.read_to_end(&mut data)?;
    if data.len() != shape.iter().product::<usize>() {
        return Err(ResotError::Truncated("IDX payload"));
    }
    Ok((shape, data))
}

/// Loads a gzipped IDX image/label pair (the MNIST distribution format).
/// Pixels are scaled to `[0, 1]` and named `px<index>`.
pub fn load_idx_gz(images: &Path, labels: &Path) -> Result<Dataset> {
    let open = |p: &Path| -> Result<_> { Ok(flate2::read::GzDecoder::new(std::io::BufReader::new(std::fs::File::open(p)?))) };
    let (ishape, pixels) = read_idx(open(images)?, 0x0803)?;
    let (lshape, labels) = read_idx(open(labels)?, 0x0801)?;
    if ishape[0] != lshape[0] {
        return Err(ResotError::DimensionMismatch { expected: ishape[0], actual: lshape[0] });
    }
    let d = ishape[1..].iter().product();
    let x = Array2::from_shape_vec((ishape[0], d), pixels.into_iter().map(|p| p as f64 / 255.0).collect())
        .expect("shape checked");
    let y: Vec<usize> = labels.into_iter().map(usize::from).collect();
    let classes = y.iter().max().map_or(2, |m| m + 1);
    Dataset::new(x, y, (0..d).map(|j| format!("px{j}")).collect(), classes)
}
