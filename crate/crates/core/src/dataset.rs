//! Labeled numeric datasets: delimited-text and image-plane ingestion,
//! feature selection, and stratified train/test partitioning.
//!
//! Class labels in input files may be any integers (the Landsat benchmark
//! uses `{1,2,3,4,5,7}`). On load they are remapped to dense indices
//! `0..c-1` in ascending order of the raw label; the original values stay
//! available through [`Dataset::raw_labels`].

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::seeded_rng;

/// One labeled observation. `y` is the dense class index in `0..c`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: usize,
}

/// Row-major pixel grid shape for datasets loaded from image planes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ImageLayout {
    pub width: usize,
    pub height: usize,
}

/// Field separator for delimited text files.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Delimiter {
    /// Comma if the first non-empty line contains one, whitespace otherwise.
    #[default]
    Auto,
    Comma,
    Whitespace,
}

/// Encoding of an image plane file.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PlaneFormat {
    /// Raw 8-bit if the file is exactly `width * height` bytes,
    /// whitespace-separated text otherwise.
    #[default]
    Auto,
    U8,
    Text,
}

/// Per-class training-set sizes for [`Dataset::stratified_partition`],
/// indexed by dense class.
#[derive(Clone, Debug)]
pub struct PartitionSpec {
    pub train_counts: Vec<usize>,
    pub seed: u64,
}

/// An in-memory labeled dataset.
///
/// Invariants: every sample has exactly `p` features, every label is
/// `< c`, and `raw_labels` has one entry per dense class. A dataset may be
/// empty (for example the test side of a partition that consumed every
/// sample), in which case `p`, `c`, and `raw_labels` still describe the
/// parent schema.
#[derive(Clone, Debug)]
pub struct Dataset {
    samples: Vec<Sample>,
    p: usize,
    c: usize,
    raw_labels: Vec<i64>,
    layout: Option<ImageLayout>,
}

impl Dataset {
    /// Builds a dataset from parallel feature/label vectors. Raw labels are
    /// taken to equal the dense indices.
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<usize>, c: usize) -> Result<Self> {
        let raw = (0..c as i64).collect();
        Self::with_raw_labels(features, labels, c, raw, None)
    }

    fn with_raw_labels(
        features: Vec<Vec<f64>>,
        labels: Vec<usize>,
        c: usize,
        raw_labels: Vec<i64>,
        layout: Option<ImageLayout>,
    ) -> Result<Self> {
        if c == 0 {
            return Err(Error::invalid("dataset must declare at least one class"));
        }
        if raw_labels.len() != c {
            return Err(Error::invalid(format!(
                "raw label table has {} entries for {} classes",
                raw_labels.len(),
                c
            )));
        }
        if features.len() != labels.len() {
            return Err(Error::invalid(format!(
                "{} feature vectors but {} labels",
                features.len(),
                labels.len()
            )));
        }
        let p = features.first().map_or(0, Vec::len);
        for (i, f) in features.iter().enumerate() {
            if f.len() != p {
                return Err(Error::invalid(format!(
                    "sample {} has {} features, expected {p}",
                    i,
                    f.len()
                )));
            }
            if !f.iter().all(|v| v.is_finite()) {
                return Err(Error::invalid(format!("sample {i} has a non-finite feature")));
            }
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
            return Err(Error::invalid(format!("label {bad} out of range for {c} classes")));
        }
        let samples = features
            .into_iter()
            .zip(labels)
            .map(|(x, y)| Sample { x, y })
            .collect();
        Ok(Dataset { samples, p, c, raw_labels, layout })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Feature dimensionality.
    pub fn p(&self) -> usize {
        self.p
    }

    /// Number of classes.
    pub fn c(&self) -> usize {
        self.c
    }

    /// Original label value for each dense class index.
    pub fn raw_labels(&self) -> &[i64] {
        &self.raw_labels
    }

    pub fn layout(&self) -> Option<ImageLayout> {
        self.layout
    }

    /// Per-class sample counts, indexed by dense class. All zeros when empty.
    pub fn class_histogram(&self) -> Vec<usize> {
        let mut h = vec![0usize; self.c];
        for s in &self.samples {
            h[s.y] += 1;
        }
        h
    }

    /// `(min, max)` of every feature over all samples.
    pub fn feature_ranges(&self) -> Result<Vec<(f64, f64)>> {
        if self.samples.is_empty() {
            return Err(Error::invalid("empty dataset has no feature ranges"));
        }
        let mut ranges = vec![(f64::INFINITY, f64::NEG_INFINITY); self.p];
        for s in &self.samples {
            for (r, &v) in ranges.iter_mut().zip(&s.x) {
                r.0 = r.0.min(v);
                r.1 = r.1.max(v);
            }
        }
        Ok(ranges)
    }

    /// Projects every sample onto the given feature columns, in the order
    /// listed. Indices must be unique and in range.
    pub fn select_features(&self, indices: &[usize]) -> Result<Dataset> {
        if indices.is_empty() {
            return Err(Error::invalid("feature selection must keep at least one column"));
        }
        for (pos, &i) in indices.iter().enumerate() {
            if i >= self.p {
                return Err(Error::invalid(format!(
                    "feature index {i} out of range (dataset has {} features)",
                    self.p
                )));
            }
            if indices[..pos].contains(&i) {
                return Err(Error::invalid(format!("feature index {i} listed twice")));
            }
        }
        let samples = self
            .samples
            .iter()
            .map(|s| Sample { x: indices.iter().map(|&i| s.x[i]).collect(), y: s.y })
            .collect();
        Ok(Dataset {
            samples,
            p: indices.len(),
            c: self.c,
            raw_labels: self.raw_labels.clone(),
            layout: self.layout,
        })
    }

    /// Splits into `(train, test)` by drawing, per class, the requested
    /// number of samples uniformly at random (seeded); everything not drawn
    /// goes to the test side. Fails, naming the class by its raw label, if a
    /// class has fewer samples than requested.
    pub fn stratified_partition(&self, spec: &PartitionSpec) -> Result<(Dataset, Dataset)> {
        if spec.train_counts.len() != self.c {
            return Err(Error::invalid(format!(
                "partition lists {} class counts, dataset has {} classes",
                spec.train_counts.len(),
                self.c
            )));
        }
        let hist = self.class_histogram();
        for (k, (&want, &have)) in spec.train_counts.iter().zip(&hist).enumerate() {
            if want > have {
                return Err(Error::invalid(format!(
                    "class {} has {have} samples, cannot draw {want} for training",
                    self.raw_labels[k]
                )));
            }
        }

        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); self.c];
        for (i, s) in self.samples.iter().enumerate() {
            by_class[s.y].push(i);
        }
        let mut rng = seeded_rng(spec.seed);
        let mut train_idx = Vec::new();
        let mut test_idx = Vec::new();
        for (k, idx) in by_class.iter_mut().enumerate() {
            idx.shuffle(&mut rng);
            let (tr, te) = idx.split_at(spec.train_counts[k]);
            train_idx.extend_from_slice(tr);
            test_idx.extend_from_slice(te);
        }

        let subset = |idx: &[usize]| Dataset {
            samples: idx.iter().map(|&i| self.samples[i].clone()).collect(),
            p: self.p,
            c: self.c,
            raw_labels: self.raw_labels.clone(),
            layout: None,
        };
        Ok((subset(&train_idx), subset(&test_idx)))
    }
}

/// Remaps arbitrary integer labels to dense `0..c-1` indices, ascending.
fn densify_labels(raw: Vec<i64>) -> (Vec<usize>, Vec<i64>) {
    let mut table: Vec<i64> = raw.clone();
    table.sort_unstable();
    table.dedup();
    let dense = raw
        .into_iter()
        .map(|v| table.binary_search(&v).expect("label present in table"))
        .collect();
    (dense, table)
}

fn resolve_delimiter(text: &str, delimiter: Delimiter) -> Delimiter {
    match delimiter {
        Delimiter::Auto => {
            let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
            if first.contains(',') {
                Delimiter::Comma
            } else {
                Delimiter::Whitespace
            }
        }
        d => d,
    }
}

fn split_line(line: &str, delimiter: Delimiter) -> Vec<&str> {
    match delimiter {
        Delimiter::Comma => line.split(',').map(str::trim).collect(),
        _ => line.split_whitespace().collect(),
    }
}

/// Parses a label token, accepting integers and integral floats ("7", "7.0").
fn parse_label(tok: &str) -> Option<i64> {
    if let Ok(v) = tok.parse::<i64>() {
        return Some(v);
    }
    let f: f64 = tok.parse().ok()?;
    (f.fract() == 0.0 && f.abs() < 2f64.powi(53)).then_some(f as i64)
}

/// Loads a headerless delimited text file of numeric rows. The label lives
/// in `label_column` (default: last column); every other column is a
/// feature. Rows must be rectangular.
pub fn load_dataset(
    path: impl AsRef<Path>,
    delimiter: Delimiter,
    label_column: Option<usize>,
) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let delim = resolve_delimiter(&text, delimiter);

    let mut features = Vec::new();
    let mut raw = Vec::new();
    let mut width: Option<usize> = None;
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let toks = split_line(line, delim);
        let w = *width.get_or_insert(toks.len());
        if toks.len() != w {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected {w} fields, found {}", toks.len()),
            ));
        }
        if w < 2 {
            return Err(Error::parse(path, lineno, "need at least one feature and a label"));
        }
        let label_col = label_column.unwrap_or(w - 1);
        if label_col >= w {
            return Err(Error::parse(
                path,
                lineno,
                format!("label column {label_col} out of range for {w} fields"),
            ));
        }
        let label = parse_label(toks[label_col]).ok_or_else(|| {
            Error::parse(path, lineno, format!("label '{}' is not an integer", toks[label_col]))
        })?;
        let mut x = Vec::with_capacity(w - 1);
        for (i, tok) in toks.iter().enumerate() {
            if i == label_col {
                continue;
            }
            let v: f64 = tok.parse().map_err(|_| {
                Error::parse(path, lineno, format!("field {} ('{tok}') is not numeric", i + 1))
            })?;
            if !v.is_finite() {
                return Err(Error::parse(path, lineno, format!("field {} is not finite", i + 1)));
            }
            x.push(v);
        }
        features.push(x);
        raw.push(label);
    }
    if features.is_empty() {
        return Err(Error::invalid(format!("{}: no data rows", path.display())));
    }
    let (labels, table) = densify_labels(raw);
    Dataset::with_raw_labels(features, labels, table.len(), table, None)
}

/// Loads a delimited text file where every column is a feature (no labels).
/// Returns the feature matrix and its width.
pub fn load_unlabeled(path: impl AsRef<Path>, delimiter: Delimiter) -> Result<(Vec<Vec<f64>>, usize)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let delim = resolve_delimiter(&text, delimiter);

    let mut rows = Vec::new();
    let mut width: Option<usize> = None;
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let toks = split_line(line, delim);
        let w = *width.get_or_insert(toks.len());
        if toks.len() != w {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected {w} fields, found {}", toks.len()),
            ));
        }
        let mut x = Vec::with_capacity(w);
        for (i, tok) in toks.iter().enumerate() {
            let v: f64 = tok.parse().map_err(|_| {
                Error::parse(path, lineno, format!("field {} ('{tok}') is not numeric", i + 1))
            })?;
            if !v.is_finite() {
                return Err(Error::parse(path, lineno, format!("field {} is not finite", i + 1)));
            }
            x.push(v);
        }
        rows.push(x);
    }
    if rows.is_empty() {
        return Err(Error::invalid(format!("{}: no data rows", path.display())));
    }
    let p = rows[0].len();
    Ok((rows, p))
}

/// Reads one image plane as `width * height` row-major values.
fn load_plane(path: &Path, layout: ImageLayout, format: PlaneFormat) -> Result<Vec<f64>> {
    let n = layout.width * layout.height;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let format = match format {
        PlaneFormat::Auto => {
            if bytes.len() == n {
                PlaneFormat::U8
            } else {
                PlaneFormat::Text
            }
        }
        f => f,
    };
    match format {
        PlaneFormat::U8 => {
            if bytes.len() != n {
                return Err(Error::invalid(format!(
                    "{}: raw plane is {} bytes, layout {}x{} needs {n}",
                    path.display(),
                    bytes.len(),
                    layout.width,
                    layout.height
                )));
            }
            Ok(bytes.into_iter().map(f64::from).collect())
        }
        _ => {
            let text = String::from_utf8(bytes)
                .map_err(|_| Error::invalid(format!("{}: text plane is not UTF-8", path.display())))?;
            let mut vals = Vec::with_capacity(n);
            for tok in text.split_whitespace() {
                let v: f64 = tok.parse().map_err(|_| {
                    Error::invalid(format!("{}: value '{tok}' is not numeric", path.display()))
                })?;
                vals.push(v);
            }
            if vals.len() != n {
                return Err(Error::invalid(format!(
                    "{}: text plane has {} values, layout {}x{} needs {n}",
                    path.display(),
                    vals.len(),
                    layout.width,
                    layout.height
                )));
            }
            Ok(vals)
        }
    }
}

/// Reads per-band image planes into unlabeled feature rows, one per pixel
/// in row-major order; features follow the band path order.
pub fn load_feature_planes(
    band_paths: &[PathBuf],
    layout: ImageLayout,
    format: PlaneFormat,
) -> Result<Vec<Vec<f64>>> {
    if band_paths.is_empty() {
        return Err(Error::invalid("image classification needs at least one band plane"));
    }
    if layout.width == 0 || layout.height == 0 {
        return Err(Error::invalid("image layout must have positive width and height"));
    }
    let bands: Vec<Vec<f64>> = band_paths
        .iter()
        .map(|p| load_plane(p, layout, format))
        .collect::<Result<_>>()?;
    let n = layout.width * layout.height;
    Ok((0..n).map(|i| bands.iter().map(|b| b[i]).collect()).collect())
}

/// Assembles a dataset from per-band image planes plus a label plane of the
/// same shape. Pixel `(row, col)` becomes one sample whose features are that
/// pixel's value in each band, in the order the band paths are given.
pub fn load_image_planes(
    band_paths: &[PathBuf],
    label_path: impl AsRef<Path>,
    layout: ImageLayout,
    format: PlaneFormat,
) -> Result<Dataset> {
    if band_paths.is_empty() {
        return Err(Error::invalid("image dataset needs at least one band plane"));
    }
    if layout.width == 0 || layout.height == 0 {
        return Err(Error::invalid("image layout must have positive width and height"));
    }
    let n = layout.width * layout.height;
    let bands: Vec<Vec<f64>> = band_paths
        .iter()
        .map(|p| load_plane(p, layout, format))
        .collect::<Result<_>>()?;

    let label_path = label_path.as_ref();
    let label_vals = load_plane(label_path, layout, format)?;
    let mut raw = Vec::with_capacity(n);
    for (i, &v) in label_vals.iter().enumerate() {
        if v.fract() != 0.0 {
            return Err(Error::invalid(format!(
                "{}: pixel {i} has non-integer label {v}",
                label_path.display()
            )));
        }
        raw.push(v as i64);
    }

    let features = (0..n)
        .map(|i| bands.iter().map(|b| b[i]).collect())
        .collect();
    let (labels, table) = densify_labels(raw);
    Dataset::with_raw_labels(features, labels, table.len(), table, Some(layout))
}
