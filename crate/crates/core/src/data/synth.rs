use rand::Rng;
use rand_distr::StandardNormal;

use super::Dataset;
use crate::error::{Error, Result};
use crate::seed;

/// Class centres drawn uniformly on the unit sphere. Sharing one set of
/// centres lets a train and a test set come from the same distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct BlobCenters {
    dim: usize,
    centers: Vec<Vec<f64>>,
}

impl BlobCenters {
    pub fn new(class_count: usize, dim: usize, seed: u64) -> Result<Self> {
        if class_count < 2 {
            return Err(Error::Config(format!("need at least 2 classes, got {class_count}")));
        }
        if dim == 0 {
            return Err(Error::Config("blob dimension must be positive".into()));
        }
        let mut rng = seed::rng(seed);
        let centers = (0..class_count)
            .map(|_| loop {
                let v: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 1e-12 {
                    break v.into_iter().map(|x| x / norm).collect();
                }
            })
            .collect();
        Ok(BlobCenters { dim, centers })
    }

    pub fn class_count(&self) -> usize {
        self.centers.len()
    }

    pub fn center(&self, class: usize) -> &[f64] {
        &self.centers[class]
    }

    /// `per_class` isotropic Gaussian draws around each centre, classes in
    /// ascending order.
    pub fn sample(&self, per_class: usize, spread: f64, seed: u64) -> Result<Dataset> {
        if per_class == 0 {
            return Err(Error::Config("need at least one example per class".into()));
        }
        if !(spread >= 0.0 && spread.is_finite()) {
            return Err(Error::Config(format!("spread must be nonnegative, got {spread}")));
        }
        let mut rng = seed::rng(seed);
        let n = per_class * self.centers.len();
        let mut features = Vec::with_capacity(n * self.dim);
        let mut labels = Vec::with_capacity(n);
        for (class, center) in self.centers.iter().enumerate() {
            for _ in 0..per_class {
                features.extend(
                    center
                        .iter()
                        .map(|c| c + spread * rng.sample::<f64, _>(StandardNormal)),
                );
                labels.push(class);
            }
        }
        Dataset::new(features, labels, self.dim, self.centers.len())
    }
}

/// Gaussian blobs: `class_count` centres on the unit sphere with exactly
/// `per_class` examples each.
pub fn synth_blobs(class_count: usize, dim: usize, per_class: usize, spread: f64, seed: u64) -> Result<Dataset> {
    let centers = BlobCenters::new(class_count, dim, seed::derive(seed, seed::STREAM_SYNTH_TRAIN, 0, 0))?;
    centers.sample(per_class, spread, seed::derive(seed, seed::STREAM_SYNTH_TRAIN, 1, 0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{evaluate, init_model, train_local, EpochSeed, LearnerSpec, SgdConfig};

    #[test]
    fn counts_are_balanced() {
        let d = synth_blobs(10, 5, 60, 0.3, 1).unwrap();
        assert_eq!(d.len(), 600);
        for c in 0..10 {
            assert_eq!(d.labels().iter().filter(|&&l| l == c).count(), 60);
        }
    }

    #[test]
    fn centers_lie_on_unit_sphere() {
        let b = BlobCenters::new(4, 7, 3).unwrap();
        for c in 0..4 {
            let norm: f64 = b.center(c).iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn same_seed_same_data() {
        assert_eq!(synth_blobs(3, 4, 5, 0.5, 9).unwrap(), synth_blobs(3, 4, 5, 0.5, 9).unwrap());
        assert_ne!(synth_blobs(3, 4, 5, 0.5, 9).unwrap(), synth_blobs(3, 4, 5, 0.5, 10).unwrap());
    }

    #[test]
    fn zero_spread_is_separable() {
        let d = synth_blobs(4, 6, 10, 0.0, 2).unwrap();
        for i in 0..d.len() {
            assert_eq!(d.feature(i), d.feature(d.label(i) * 10));
        }
        let spec = LearnerSpec::softmax_regression(6, 4);
        let cfg = SgdConfig { learning_rate: 0.5, batch_size: 5, local_epochs: 20 };
        let all: Vec<usize> = (0..d.len()).collect();
        let w = train_local(&init_model(&spec, 0), &d, &all, &cfg, &spec, EpochSeed { master: 0, client: 0, first_epoch: 0 }).unwrap();
        assert_eq!(evaluate(&w, &d, &spec).unwrap().accuracy, 1.0);
    }

    #[test]
    fn rejects_degenerate_requests() {
        assert!(synth_blobs(1, 3, 5, 0.1, 0).is_err());
        assert!(synth_blobs(3, 3, 0, 0.1, 0).is_err());
        assert!(synth_blobs(3, 3, 2, -0.1, 0).is_err());
    }
}
