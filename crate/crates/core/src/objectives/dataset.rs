use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{FzooError, Result};
use crate::perturbation::derive_seed;

/// In-memory labelled table, features stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    features: Vec<f64>,
    n_samples: usize,
    n_features: usize,
    labels: Vec<f64>,
    feature_names: Vec<String>,
    label_name: String,
    source: String,
}

impl Dataset {
    pub fn new(
        features: Vec<f64>,
        n_features: usize,
        labels: Vec<f64>,
        source: impl Into<String>,
    ) -> Result<Self> {
        let names = (0..n_features).map(|i| format!("x{i}")).collect();
        Self::with_names(features, labels, names, "label".into(), source.into())
    }

    fn with_names(
        features: Vec<f64>,
        labels: Vec<f64>,
        feature_names: Vec<String>,
        label_name: String,
        source: String,
    ) -> Result<Self> {
        let n_features = feature_names.len();
        if n_features == 0 || labels.is_empty() {
            return Err(FzooError::InvalidDimension(
                "dataset needs at least one feature and one sample".into(),
            ));
        }
        if features.len() != labels.len() * n_features {
            return Err(FzooError::invalid(format!(
                "{} labels but {} feature values for {n_features} features",
                labels.len(),
                features.len()
            )));
        }
        if features.iter().chain(&labels).any(|v| !v.is_finite()) {
            return Err(FzooError::invalid("dataset contains missing or non-finite values"));
        }
        Ok(Dataset {
            n_samples: labels.len(),
            features,
            n_features,
            labels,
            feature_names,
            label_name,
            source,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn require_binary(&self) -> Result<()> {
        match self.labels.iter().position(|&y| y != 0.0 && y != 1.0) {
            Some(i) => Err(FzooError::invalid(format!(
                "label {} at row {i} is not binary",
                self.labels[i]
            ))),
            None => Ok(()),
        }
    }

    /// Checks labels are class indices below `classes`.
    pub fn require_classes(&self, classes: usize) -> Result<()> {
        match self
            .labels
            .iter()
            .position(|&y| y < 0.0 || y.fract() != 0.0 || y >= classes as f64)
        {
            Some(i) => Err(FzooError::invalid(format!(
                "label {} at row {i} is not a class index below {classes}",
                self.labels[i]
            ))),
            None => Ok(()),
        }
    }

    pub fn check_batch(&self, batch: &BatchSpec) -> Result<()> {
        if batch.indices.is_empty() {
            return Err(FzooError::invalid("empty batch"));
        }
        let mut seen = HashSet::with_capacity(batch.indices.len());
        for &i in &batch.indices {
            if i >= self.n_samples {
                return Err(FzooError::invalid(format!(
                    "batch index {i} out of range for {} samples",
                    self.n_samples
                )));
            }
            if !seen.insert(i) {
                return Err(FzooError::invalid(format!("duplicate batch index {i}")));
            }
        }
        Ok(())
    }

    /// Linearly separable binary set: labels are `[w·x > 0]` for a hidden
    /// Gaussian `w`, with points inside a margin of `0.1·‖w‖` rejected.
    pub fn linearly_separable(n_samples: usize, n_features: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, 0x5345_50]));
        let w: Vec<f64> = (0..n_features).map(|_| rng.sample(StandardNormal)).collect();
        let margin = 0.1 * w.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut features = Vec::with_capacity(n_samples * n_features);
        let mut labels = Vec::with_capacity(n_samples);
        while labels.len() < n_samples {
            let x: Vec<f64> = (0..n_features).map(|_| rng.sample(StandardNormal)).collect();
            let score: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum();
            if score.abs() < margin {
                continue;
            }
            features.extend(x);
            labels.push(if score > 0.0 { 1.0 } else { 0.0 });
        }
        Self::new(features, n_features, labels, format!("generator:linearly_separable:{seed}"))
    }

    /// Binary labels drawn from a logistic model with hidden Gaussian weights.
    pub fn logistic(n_samples: usize, n_features: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, 0x4c4f_47]));
        let w: Vec<f64> = (0..n_features).map(|_| rng.sample(StandardNormal)).collect();
        let mut features = Vec::with_capacity(n_samples * n_features);
        let mut labels = Vec::with_capacity(n_samples);
        for _ in 0..n_samples {
            let x: Vec<f64> = (0..n_features)
                .map(|_| rng.sample::<f64, _>(StandardNormal) / (n_features as f64).sqrt())
                .collect();
            let z: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum();
            let p = 1.0 / (1.0 + (-3.0 * z).exp());
            labels.push(if rng.gen::<f64>() < p { 1.0 } else { 0.0 });
            features.extend(x);
        }
        Self::new(features, n_features, labels, format!("generator:logistic:{seed}"))
    }
}

/// Row indices of one mini-batch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchSpec {
    pub indices: Vec<usize>,
    pub epoch: u64,
    pub rng_seed: u64,
}

impl BatchSpec {
    /// The batch used by objectives that do not read data.
    pub fn none() -> Self {
        BatchSpec {
            indices: Vec::new(),
            epoch: 0,
            rng_seed: 0,
        }
    }

    pub fn full(n_samples: usize) -> Self {
        BatchSpec {
            indices: (0..n_samples).collect(),
            epoch: 0,
            rng_seed: 0,
        }
    }
}

/// Batch number `step` of a shuffled-epoch sampler.
///
/// Each epoch is a permutation of the rows seeded by `(run_seed, epoch)`,
/// cut into `⌊n/batch_size⌋` consecutive batches; the remainder is dropped.
/// The result depends only on the arguments.
pub fn sample_batch(
    n_samples: usize,
    batch_size: usize,
    run_seed: u64,
    step: u64,
) -> Result<BatchSpec> {
    if batch_size == 0 || batch_size > n_samples {
        return Err(FzooError::invalid(format!(
            "batch size {batch_size} must be in 1..={n_samples}"
        )));
    }
    let per_epoch = (n_samples / batch_size) as u64;
    let epoch = step / per_epoch;
    let position = (step % per_epoch) as usize;
    let shuffle_seed = derive_seed(&[run_seed, epoch, 0x5348_5546]);
    let mut order: Vec<usize> = (0..n_samples).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle_seed));
    Ok(BatchSpec {
        indices: order[position * batch_size..(position + 1) * batch_size].to_vec(),
        epoch,
        rng_seed: shuffle_seed,
    })
}

/// Reads a headered numeric CSV; `label_column` names the label column.
pub fn load_csv(path: impl AsRef<Path>, label_column: &str) -> Result<Dataset> {
    let path = path.as_ref();
    let parse_err = |row: usize, column: Option<String>, message: String| FzooError::Parse {
        path: path.to_path_buf(),
        row,
        column,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| parse_err(0, None, e.to_string()))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| parse_err(0, None, e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    let label_idx = header.iter().position(|h| h == label_column).ok_or_else(|| {
        parse_err(
            0,
            Some(label_column.to_owned()),
            "label column missing from header".into(),
        )
    })?;

    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| parse_err(row, None, e.to_string()))?;
        if record.len() != header.len() {
            return Err(parse_err(
                row,
                None,
                format!("expected {} fields, found {}", header.len(), record.len()),
            ));
        }
        for (c, cell) in record.iter().enumerate() {
            let value: f64 = cell
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| {
                    parse_err(row, Some(header[c].clone()), format!("'{cell}' is not a finite number"))
                })?;
            if c == label_idx {
                labels.push(value);
            } else {
                features.push(value);
            }
        }
    }
    let feature_names = header
        .iter()
        .enumerate()
        .filter(|(c, _)| *c != label_idx)
        .map(|(_, h)| h.clone())
        .collect();
    Dataset::with_names(
        features,
        labels,
        feature_names,
        label_column.to_owned(),
        path.display().to_string(),
    )
}

/// Writes the dataset as CSV with the label as the last column.
pub fn write_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref()).map_err(std::io::Error::from)?;
    let mut header = dataset.feature_names.clone();
    header.push(dataset.label_name.clone());
    writer.write_record(&header).map_err(std::io::Error::from)?;
    for i in 0..dataset.n_samples {
        let mut record: Vec<String> = dataset.row(i).iter().map(|v| v.to_string()).collect();
        record.push(dataset.labels[i].to_string());
        writer.write_record(&record).map_err(std::io::Error::from)?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_small_file() {
        let f = write("a,b,y\n1,2,0\n3,4.5,1\n-1,0,1\n");
        let d = load_csv(f.path(), "y").unwrap();
        assert_eq!(d.n_samples(), 3);
        assert_eq!(d.n_features(), 2);
        assert_eq!(d.row(1), &[3.0, 4.5]);
        assert_eq!(d.labels(), &[0.0, 1.0, 1.0]);
    }

    #[test]
    fn label_column_can_be_first() {
        let f = write("y,a\n1,2\n0,3\n");
        let d = load_csv(f.path(), "y").unwrap();
        assert_eq!(d.features(), &[2.0, 3.0]);
        assert_eq!(d.labels(), &[1.0, 0.0]);
    }

    #[test]
    fn non_numeric_cell_cites_row() {
        let f = write("a,b,y\n1,2,0\n3,oops,1\n");
        let err = load_csv(f.path(), "y").unwrap_err();
        match &err {
            FzooError::Parse { row, column, .. } => {
                assert_eq!(*row, 2);
                assert_eq!(column.as_deref(), Some("b"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains("row 2"));
    }

    #[test]
    fn ragged_and_missing_label_rejected() {
        let f = write("a,b,y\n1,2,0\n3,1\n");
        assert!(matches!(
            load_csv(f.path(), "y"),
            Err(FzooError::Parse { row: 2, .. })
        ));
        let f = write("a,b\n1,2\n");
        assert!(matches!(load_csv(f.path(), "y"), Err(FzooError::Parse { row: 0, .. })));
        let f = write("a,y\n,1\n");
        assert!(load_csv(f.path(), "y").is_err());
    }

    #[test]
    fn csv_round_trip() {
        let d = Dataset::logistic(25, 4, 9).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_csv(&d, f.path()).unwrap();
        let back = load_csv(f.path(), "label").unwrap();
        assert_eq!(back.features(), d.features());
        assert_eq!(back.labels(), d.labels());
    }

    #[test]
    fn full_epoch_batch_is_permutation() {
        let b = sample_batch(10, 10, 3, 0).unwrap();
        let mut idx = b.indices.clone();
        idx.sort_unstable();
        assert_eq!(idx, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn batches_deterministic_and_disjoint_within_epoch() {
        assert_eq!(sample_batch(50, 8, 1, 4).unwrap(), sample_batch(50, 8, 1, 4).unwrap());
        let a: HashSet<_> = sample_batch(50, 8, 1, 0).unwrap().indices.into_iter().collect();
        let b: HashSet<_> = sample_batch(50, 8, 1, 1).unwrap().indices.into_iter().collect();
        assert!(a.is_disjoint(&b));
        // 6 batches per epoch; step 6 starts epoch 1
        assert_eq!(sample_batch(50, 8, 1, 6).unwrap().epoch, 1);
        assert!(sample_batch(5, 6, 1, 0).is_err());
        assert!(sample_batch(5, 0, 1, 0).is_err());
    }

    #[test]
    fn batch_validation() {
        let d = Dataset::logistic(5, 2, 0).unwrap();
        assert!(d.check_batch(&BatchSpec::full(5)).is_ok());
        assert!(d.check_batch(&BatchSpec::full(6)).is_err());
        let dup = BatchSpec {
            indices: vec![1, 1],
            ..BatchSpec::none()
        };
        assert!(d.check_batch(&dup).is_err());
        assert!(d.check_batch(&BatchSpec::none()).is_err());
    }

    #[test]
    fn separable_generator_is_binary() {
        let d = Dataset::linearly_separable(40, 3, 2).unwrap();
        d.require_binary().unwrap();
        d.require_classes(2).unwrap();
        assert!(d.labels().contains(&0.0) && d.labels().contains(&1.0));
    }
}
