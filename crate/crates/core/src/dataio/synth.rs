use serde::{Deserialize, Serialize};

use super::{FeatureDataset, Prng};
use crate::error::{Error, Result};

const MAX_MEAN_ATTEMPTS: usize = 1000;
const MAX_MEAN_COSINE: f64 = 0.5;

/// Gaussian clusters around well-separated random directions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    /// Norm of every class mean.
    pub separation: f64,
    /// Per-coordinate standard deviation around the mean.
    pub sigma: f64,
    pub seed: u64,
}

fn unit_normal(rng: &mut Prng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Class `k` has mean `separation * u_k`, where the unit vectors `u_k` are
/// redrawn until every pairwise dot product is below 0.5. Samples are the
/// mean plus `sigma` times a standard normal vector.
pub fn synth_gaussian(cfg: &SynthConfig) -> Result<FeatureDataset> {
    if cfg.classes == 0 || cfg.per_class == 0 || cfg.dim == 0 {
        return Err(Error::InvalidConfig("classes, per-class and dim must be positive".into()));
    }
    if !(cfg.separation.is_finite() && cfg.separation > 0.0) {
        return Err(Error::InvalidConfig(format!("separation must be positive, got {}", cfg.separation)));
    }
    if !(cfg.sigma.is_finite() && cfg.sigma >= 0.0) {
        return Err(Error::InvalidConfig(format!("sigma must be non-negative, got {}", cfg.sigma)));
    }
    let mut rng = Prng::derive(cfg.seed, "synth");
    let mut directions: Vec<Vec<f64>> = Vec::with_capacity(cfg.classes);
    for k in 0..cfg.classes {
        let mut attempts = 0;
        let u = loop {
            if attempts == MAX_MEAN_ATTEMPTS {
                return Err(Error::InvalidConfig(format!(
                    "could not place class {k} mean with pairwise cosine below {MAX_MEAN_COSINE} \
                     after {MAX_MEAN_ATTEMPTS} attempts (dim {} too small for {} classes?)",
                    cfg.dim, cfg.classes
                )));
            }
            attempts += 1;
            let u = unit_normal(&mut rng, cfg.dim);
            let ok = directions.iter().all(|w| u.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() < MAX_MEAN_COSINE);
            if ok {
                break u;
            }
        };
        directions.push(u);
    }
    let mut ds = FeatureDataset::new(cfg.dim);
    for (k, u) in directions.iter().enumerate() {
        let label = format!("class-{k}");
        for i in 0..cfg.per_class {
            let features = u.iter().map(|&m| cfg.separation * m + cfg.sigma * rng.normal()).collect();
            ds.push(format!("c{k}-{i}"), &label, features)?;
        }
    }
    Ok(ds)
}
