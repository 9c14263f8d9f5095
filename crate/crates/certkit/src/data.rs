//! Labeled samples and dataset I/O.
//!
//! Dataset files are CSV with header `label,f0,f1,...,f{n-1}`; features are
//! decimals in `[0,1]`, one sample per row.

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::path::Path;

/// One classified input: features in `[0,1]^n`, label in `[0, num_classes)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub x: Vec<f64>,
    pub y: usize,
}

impl LabeledSample {
    pub fn new(x: Vec<f64>, y: usize, num_classes: usize) -> Result<Self> {
        if let Some(v) = x.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidParameter(format!(
                "feature {v} outside [0,1]"
            )));
        }
        if y >= num_classes {
            return Err(Error::InvalidParameter(format!(
                "label {y} >= num_classes {num_classes}"
            )));
        }
        Ok(LabeledSample { x, y })
    }
}

/// Load a dataset, validating every feature against `[0,1]` and every label
/// against `num_classes`. Errors carry the offending file line (1-based,
/// counting the header).
pub fn load_dataset(path: impl AsRef<Path>, num_classes: usize) -> Result<Vec<LabeledSample>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| map_csv_open(path, e))?;
    let n_features = reader
        .headers()
        .map_err(|e| Error::DatasetFormat {
            line: 1,
            reason: e.to_string(),
        })?
        .len()
        .saturating_sub(1);
    if n_features == 0 {
        return Err(Error::DatasetFormat {
            line: 1,
            reason: "header must be label,f0,...".into(),
        });
    }
    let mut samples = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2; // header is line 1
        let record = record.map_err(|e| Error::DatasetFormat {
            line,
            reason: e.to_string(),
        })?;
        if record.len() != n_features + 1 {
            return Err(Error::DatasetFormat {
                line,
                reason: format!("expected {} fields, found {}", n_features + 1, record.len()),
            });
        }
        let y: usize = record[0].trim().parse().map_err(|_| Error::DatasetFormat {
            line,
            reason: format!("label `{}` is not a class index", &record[0]),
        })?;
        if y >= num_classes {
            return Err(Error::DatasetFormat {
                line,
                reason: format!("label {y} out of range [0, {num_classes})"),
            });
        }
        let mut x = Vec::with_capacity(n_features);
        for field in record.iter().skip(1) {
            let v: f64 = field.trim().parse().map_err(|_| Error::DatasetFormat {
                line,
                reason: format!("feature `{field}` is not a number"),
            })?;
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::DatasetFormat {
                    line,
                    reason: format!("feature {v} outside [0,1]"),
                });
            }
            x.push(v);
        }
        samples.push(LabeledSample { x, y });
    }
    Ok(samples)
}

/// Write a dataset in the CSV format that [`load_dataset`] reads.
pub fn save_dataset(path: impl AsRef<Path>, samples: &[LabeledSample]) -> Result<()> {
    let path = path.as_ref();
    let n = samples.first().map_or(0, |s| s.x.len());
    let mut writer = csv::Writer::from_path(path).map_err(|e| map_csv_open(path, e))?;
    let mut header = vec!["label".to_string()];
    header.extend((0..n).map(|i| format!("f{i}")));
    writer
        .write_record(&header)
        .and_then(|_| {
            for s in samples {
                let mut row = vec![s.y.to_string()];
                row.extend(s.x.iter().map(|v| v.to_string()));
                writer.write_record(&row)?;
            }
            writer.flush().map_err(csv::Error::from)
        })
        .map_err(|e| Error::DatasetFormat {
            line: 0,
            reason: e.to_string(),
        })
}

fn map_csv_open(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io {
            path: path.display().to_string(),
            source: io,
        },
        other => Error::DatasetFormat {
            line: 0,
            reason: format!("{other:?}"),
        },
    }
}

/// Two-class 2-D checkerboard with a controlled gap around both midlines:
/// each axis splits into a low cell and a high cell separated by `gap`, and
/// the label is the XOR of the cell indicators. Samples sit at least `gap/2`
/// from every decision line, so a perfectly robust model certifies the whole
/// set at radii below that; the nonlinear boundary is what separates
/// interval-trained models from standard ones.
pub fn xor_gap_dataset(samples_per_cell: usize, gap: f64, seed: u64) -> Vec<LabeledSample> {
    let mut rng = rng_from_seed(derive_seed(seed, 0x6741_7002));
    let mut out = Vec::with_capacity(samples_per_cell * 4);
    let side = |bit: usize, r: &mut ChaCha8Rng| -> f64 {
        if bit == 0 {
            r.gen_range(0.02..(0.5 - gap / 2.0))
        } else {
            r.gen_range((0.5 + gap / 2.0)..0.98)
        }
    };
    for cell in 0..4usize {
        let (b0, b1) = (cell & 1, cell >> 1);
        for _ in 0..samples_per_cell {
            let x = vec![side(b0, &mut rng), side(b1, &mut rng)];
            out.push(LabeledSample { x, y: b0 ^ b1 });
        }
    }
    out
}

/// Two-class 2-D dataset with a controlled horizontal gap between the classes:
/// class 0 has `x[0]` in `[0.5 - gap/2 - band, 0.5 - gap/2]`, class 1 mirrors
/// it on the right, and `x[1]` is uniform. Used by the robust-training suites,
/// where the achievable certified radius is known from the gap.
pub fn gap_dataset(samples_per_class: usize, gap: f64, band: f64, seed: u64) -> Vec<LabeledSample> {
    let mut rng = rng_from_seed(derive_seed(seed, 0x6741_7001));
    let mut out = Vec::with_capacity(samples_per_class * 2);
    for i in 0..samples_per_class * 2 {
        let y = i % 2;
        let lo = if y == 0 {
            0.5 - gap / 2.0 - band
        } else {
            0.5 + gap / 2.0
        };
        let x0 = rng.gen_range(lo..(lo + band));
        let x1 = rng.gen_range(0.05..0.95);
        out.push(LabeledSample { x: vec![x0, x1], y });
    }
    out
}
