//! FCert and the two baseline few-shot predictors.
//!
//! All predictors return an episode class index in `0..C`, breaking ties
//! toward the lowest index.

use crate::distance::{compute_distance, cosine_similarity};
use crate::error::{Error, Result};
use crate::robust::{class_distances, indexed_class_distances, robust_score};
use crate::scalar::{self, Real};
use crate::types::{Episode, FeatureVector, FewShotConfig, RobustScores};

/// Floor applied to the cosine weights of the weighted variant.
pub const WEIGHT_FLOOR: f64 = 1e-6;

/// Robust distances of `query` to every class of `episode`.
pub fn fcert_scores<S: Real>(
    episode: &Episode<S>,
    query: &FeatureVector<S>,
    cfg: &FewShotConfig,
) -> Result<RobustScores<S>> {
    let d = class_distances(episode, query, cfg)?;
    robust_score(&d, cfg)
}

/// FCert: the class with the smallest trimmed-mean distance.
pub fn fcert_predict<S: Real>(episode: &Episode<S>, query: &FeatureVector<S>, cfg: &FewShotConfig) -> Result<usize> {
    Ok(fcert_scores(episode, query, cfg)?.argmin())
}

/// Weighted-average variant of FCert.
///
/// Inside the trimmed window each distance is weighted by the cosine
/// similarity between the query and the support vector that produced it,
/// clamped to `[WEIGHT_FLOOR, 1]`.
pub fn fcert_predict_weighted<S: Real>(
    episode: &Episode<S>,
    query: &FeatureVector<S>,
    cfg: &FewShotConfig,
) -> Result<usize> {
    let rows = indexed_class_distances(episode, query, cfg)?;
    let floor = S::from(WEIGHT_FLOOR).expect("weight floor representable");
    let mut scores = Vec::with_capacity(rows.len());
    for (c, row) in rows.iter().enumerate() {
        let window = &row[cfg.trim()..cfg.shots() - cfg.trim()];
        let mut weights = Vec::with_capacity(window.len());
        for &(_, i) in window {
            let sim = cosine_similarity(query, &episode.class_support(c)[i])?;
            weights.push(sim.max(floor));
        }
        let distances: Vec<S> = window.iter().map(|&(d, _)| d).collect();
        scores.push(weighted_mean(&distances, &weights));
    }
    Ok(scalar::argmin_first(&scores))
}

pub(crate) fn weighted_mean<S: Real>(values: &[S], weights: &[S]) -> S {
    let (num, den) = values.iter().zip(weights).fold((S::zero(), S::zero()), |(n, d), (&v, &w)| (n + w * v, d + w));
    num / den
}

/// Mean support vector of every class.
pub fn prototypes<S: Real>(episode: &Episode<S>) -> Vec<FeatureVector<S>> {
    let k = scalar::count::<S>(episode.shots());
    episode
        .support()
        .iter()
        .map(|class| {
            let mut sum = vec![S::zero(); episode.dim()];
            for x in class {
                for (acc, &v) in sum.iter_mut().zip(x.as_slice()) {
                    *acc = *acc + v;
                }
            }
            FeatureVector::from_raw(sum.into_iter().map(|v| v / k).collect())
        })
        .collect()
}

/// ProtoNet: nearest class prototype under `cfg.metric()`.
pub fn protonet_predict<S: Real>(episode: &Episode<S>, query: &FeatureVector<S>, cfg: &FewShotConfig) -> Result<usize> {
    episode.check(cfg, query)?;
    let dists =
        prototypes(episode).iter().map(|p| compute_distance(query, p, cfg.metric())).collect::<Result<Vec<_>>>()?;
    Ok(scalar::argmin_first(&dists))
}

/// k-NN majority vote over the `k` nearest support samples.
///
/// Distance ties are broken by (class, support index); vote ties by the
/// lowest class index.
pub fn knn_predict<S: Real>(
    episode: &Episode<S>,
    query: &FeatureVector<S>,
    k: usize,
    cfg: &FewShotConfig,
) -> Result<usize> {
    episode.check(cfg, query)?;
    let total = episode.ways() * episode.shots();
    if k == 0 || k > total {
        return Err(Error::NeighborCount { k, max: total });
    }
    let mut all = Vec::with_capacity(total);
    for (c, class) in episode.support().iter().enumerate() {
        for x in class {
            all.push((compute_distance(query, x, cfg.metric())?, c));
        }
    }
    // stable: entries are pushed in (class, index) order
    all.sort_by(|a, b| scalar::cmp(&a.0, &b.0));
    let mut votes = vec![0usize; episode.ways()];
    for &(_, c) in &all[..k] {
        votes[c] += 1;
    }
    let mut best = 0;
    for c in 1..votes.len() {
        if votes[c] > votes[best] {
            best = c;
        }
    }
    Ok(best)
}
