//! Binary PGM (P5) rendering of classified images.
//!
//! Each pixel's predicted class maps to an evenly spaced gray level; gray 0
//! is reserved for outliers. A text legend is written next to the image.

use std::fs;
use std::path::Path;

use crate::dataset::ImageLayout;
use crate::error::{Error, Result};
use crate::inference::{Classification, Prediction};

/// Gray level for each class: evenly spaced over `(0, 255]`, brightest for
/// the highest class, never colliding with the outlier level 0.
pub fn class_gray_levels(c: usize) -> Result<Vec<u8>> {
    if c == 0 || c > 255 {
        return Err(Error::invalid(format!("cannot map {c} classes onto 8-bit gray levels")));
    }
    Ok((0..c).map(|k| (((k + 1) * 255) / c) as u8).collect())
}

/// Writes `results` as a P5 image of the given layout plus a
/// `<stem>.legend.txt` sidecar mapping gray levels to classes. When the
/// dataset carried raw labels, pass them so the legend can show both.
pub fn write_classified_pgm(
    path: impl AsRef<Path>,
    results: &[Classification],
    layout: ImageLayout,
    c: usize,
    raw_labels: Option<&[i64]>,
) -> Result<()> {
    let path = path.as_ref();
    let n = layout.width * layout.height;
    if n == 0 {
        return Err(Error::invalid("image layout must have positive width and height"));
    }
    if results.len() != n {
        return Err(Error::invalid(format!(
            "{} classifications for a {}x{} map ({n} pixels)",
            results.len(),
            layout.width,
            layout.height
        )));
    }
    let levels = class_gray_levels(c)?;

    let mut out = format!("P5\n{} {}\n255\n", layout.width, layout.height).into_bytes();
    out.reserve(n);
    for r in results {
        out.push(match r.prediction {
            Prediction::Outlier => 0,
            Prediction::Class(k) => {
                *levels.get(k).ok_or_else(|| {
                    Error::invalid(format!("prediction class {k} out of range for {c} classes"))
                })?
            }
        });
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))?;

    let mut legend = String::from("gray\tclass\n0\toutlier\n");
    for (k, &level) in levels.iter().enumerate() {
        match raw_labels.and_then(|t| t.get(k)) {
            Some(raw) => legend.push_str(&format!("{level}\tclass {k} (label {raw})\n")),
            None => legend.push_str(&format!("{level}\tclass {k}\n")),
        }
    }
    let legend_path = path.with_extension("legend.txt");
    fs::write(&legend_path, legend).map_err(|e| Error::io(&legend_path, e))
}
