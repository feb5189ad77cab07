//! Training and test images as `count x n` pixel matrices.

use std::path::Path;

use crate::autonet::Matrix;
use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::rng::{streams, Rng};

use super::config::{DatasetSource, ExperimentConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub shape: (usize, usize, usize),
    pub bit_depth: u32,
    pub train: Matrix,
    pub test: Matrix,
}

impl Dataset {
    pub fn image_len(&self) -> usize {
        self.shape.0 * self.shape.1 * self.shape.2
    }

    pub fn max_value(&self) -> f64 {
        ((1u32 << self.bit_depth) - 1) as f64
    }

    pub fn test_image(&self, i: usize) -> ImageTensor {
        ImageTensor::new(
            self.shape.0,
            self.shape.1,
            self.shape.2,
            self.bit_depth,
            self.test.row(i).to_vec(),
        )
        .expect("dataset pixels are validated")
    }

    /// Loads whatever the config describes. Failures are configuration
    /// errors, raised before any training starts.
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        let ds = match cfg.dataset {
            DatasetSource::Synthetic => synthetic(
                (cfg.image_height, cfg.image_width, cfg.image_channels),
                cfg.train_size,
                cfg.test_size,
                cfg.data_seed,
            ),
            DatasetSource::Directory => {
                let dir = cfg.dataset_dir.as_deref().expect("validated");
                from_directory(dir, cfg.train_size, cfg.test_size).map_err(|e| match e {
                    Error::Config(_) => e,
                    other => Error::config(format!("dataset {}: {other}", dir.display())),
                })?
            }
        };
        if ds.shape != (cfg.image_height, cfg.image_width, cfg.image_channels) {
            return Err(Error::config(format!(
                "dataset images are {:?} but the config says {}x{}x{}",
                ds.shape, cfg.image_height, cfg.image_width, cfg.image_channels
            )));
        }
        Ok(ds)
    }
}

/// Low-rank correlated Gaussian images squashed to (0, 1).
///
/// Each image is `logistic(A f)` with `f ~ N(0, I_r)`, `r = max(1, n/8)`
/// and a fixed `n x r` loading matrix `A` drawn once per `data_seed` with
/// entries `N(0, 2/r)` (pre-activations have variance 2).
pub fn synthetic(
    shape: (usize, usize, usize),
    train: usize,
    test: usize,
    data_seed: u64,
) -> Dataset {
    let n = shape.0 * shape.1 * shape.2;
    let rank = (n / 8).max(1);
    let root = Rng::new(data_seed, streams::DATA);
    let mut rng = root.substream(0);
    let scale = (2.0 / rank as f64).sqrt();
    let loadings = Matrix::from_fn(rank, n, |_, _| rng.gaussian() * scale);
    let make = |count: usize, sub: u64| {
        let mut rng = root.substream(sub);
        let factors = Matrix::from_fn(count, rank, |_, _| rng.gaussian());
        factors.matmul(&loadings).map(|v| 1.0 / (1.0 + (-v).exp()))
    };
    Dataset {
        shape,
        bit_depth: 8,
        train: make(train, 1),
        test: make(test, 2),
    }
}

/// Reads `*.pgm` / `*.ppm` files in name order; the first `train` go to
/// the training split and the next `test` to the test split.
pub fn from_directory(dir: &Path, train: usize, test: usize) -> Result<Dataset> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::config(format!("cannot list {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension()
                    .and_then(|x| x.to_str())
                    .map(|x| x.to_ascii_lowercase())
                    .as_deref(),
                Some("pgm") | Some("ppm")
            )
        })
        .collect();
    files.sort();
    if files.len() < train + test {
        return Err(Error::config(format!(
            "{} holds {} images, need {}",
            dir.display(),
            files.len(),
            train + test
        )));
    }
    let mut shape = None;
    let mut bit_depth = 0;
    let mut rows = Vec::new();
    for path in &files[..train + test] {
        let img = ImageTensor::load_pnm(path)?;
        match shape {
            None => {
                shape = Some(img.shape());
                bit_depth = img.bit_depth();
            }
            Some(s) if s != img.shape() => {
                return Err(Error::config(format!(
                    "{} is {:?}, expected {:?}",
                    path.display(),
                    img.shape(),
                    s
                )));
            }
            _ => {}
        }
        bit_depth = bit_depth.max(img.bit_depth());
        rows.push(img);
    }
    let shape = shape.expect("at least one image");
    let n = shape.0 * shape.1 * shape.2;
    let stack = |imgs: &[ImageTensor]| {
        Matrix::from_vec(
            imgs.len(),
            n,
            imgs.iter()
                .flat_map(|i| i.pixels().iter().copied())
                .collect(),
        )
    };
    Ok(Dataset {
        shape,
        bit_depth,
        train: stack(&rows[..train]),
        test: stack(&rows[train..]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_is_deterministic_and_in_range() {
        let a = synthetic((8, 8, 1), 32, 8, 5);
        let b = synthetic((8, 8, 1), 32, 8, 5);
        assert_eq!(a, b);
        assert!(a.train.data().iter().all(|&v| v > 0.0 && v < 1.0));
        assert_eq!(a.train.shape(), (32, 64));
        assert_eq!(a.test.shape(), (8, 64));
        assert_ne!(a.train, synthetic((8, 8, 1), 32, 8, 6).train);
    }

    #[test]
    fn synthetic_pixels_are_correlated() {
        let d = synthetic((8, 8, 1), 2000, 1, 1);
        // Some pixel pair should be strongly correlated under a rank-8 model.
        let col = |c: usize| -> Vec<f64> { (0..2000).map(|r| d.train.get(r, c)).collect() };
        let corr = |a: &[f64], b: &[f64]| {
            let ma = a.iter().sum::<f64>() / a.len() as f64;
            let mb = b.iter().sum::<f64>() / b.len() as f64;
            let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
            for (x, y) in a.iter().zip(b) {
                sab += (x - ma) * (y - mb);
                saa += (x - ma) * (x - ma);
                sbb += (y - mb) * (y - mb);
            }
            sab / (saa * sbb).sqrt()
        };
        let c0 = col(0);
        let best = (1..64)
            .map(|c| corr(&c0, &col(c)).abs())
            .fold(0.0, f64::max);
        assert!(best > 0.5, "{best}");
    }

    #[test]
    fn directory_ingestion() {
        let dir = tempfile::tempdir().unwrap();
        for i in 0..5u8 {
            let img = ImageTensor::new(2, 2, 1, 8, vec![i as f64 / 255.0; 4]).unwrap();
            img.save_pnm(&dir.path().join(format!("img{i}.pgm")))
                .unwrap();
        }
        std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
        let ds = from_directory(dir.path(), 3, 2).unwrap();
        assert_eq!(ds.shape, (2, 2, 1));
        assert_eq!(ds.train.rows(), 3);
        assert!((ds.test.get(1, 0) - 4.0 / 255.0).abs() < 1e-12);
        assert!(matches!(
            from_directory(dir.path(), 5, 1),
            Err(Error::Config(_))
        ));
        let odd = ImageTensor::new(1, 4, 1, 8, vec![0.0; 4]).unwrap();
        odd.save_pnm(&dir.path().join("img00.pgm")).unwrap();
        assert!(matches!(
            from_directory(dir.path(), 3, 2),
            Err(Error::Config(_))
        ));
    }
}
