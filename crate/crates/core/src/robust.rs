//! Per-class distance sequences and the trimmed-mean robust distance.

use crate::distance::compute_distance;
use crate::error::{Error, Result};
use crate::scalar::{self, Real, Scalar};
use crate::types::{ClassDistances, Episode, FeatureVector, FewShotConfig, RobustScores};

/// Distances from `query` to every support vector, sorted ascending per class.
///
/// Equal distances keep their support order, so the result does not depend
/// on sort implementation details.
pub fn class_distances<S: Real>(
    episode: &Episode<S>,
    query: &FeatureVector<S>,
    cfg: &FewShotConfig,
) -> Result<ClassDistances<S>> {
    let rows = indexed_class_distances(episode, query, cfg)?
        .into_iter()
        .map(|row| row.into_iter().map(|(d, _)| d).collect())
        .collect();
    ClassDistances::from_sorted(rows)
}

/// Like [`class_distances`] but keeps the support index behind each entry.
pub(crate) fn indexed_class_distances<S: Real>(
    episode: &Episode<S>,
    query: &FeatureVector<S>,
    cfg: &FewShotConfig,
) -> Result<Vec<Vec<(S, usize)>>> {
    episode.check(cfg, query)?;
    episode
        .support()
        .iter()
        .map(|class| {
            let mut row = class
                .iter()
                .enumerate()
                .map(|(i, x)| Ok((compute_distance(query, x, cfg.metric())?, i)))
                .collect::<Result<Vec<_>>>()?;
            row.sort_by(|a, b| scalar::cmp(&a.0, &b.0).then(a.1.cmp(&b.1)));
            Ok(row)
        })
        .collect()
}

/// Mean of `len` consecutive entries of a sorted row starting at `start`,
/// summed in ascending order.
///
/// Every window statistic in the crate (robust score, both attack bounds)
/// goes through here, so a bound and the score of the attack that attains it
/// are computed by bit-identical arithmetic.
pub(crate) fn window_mean<S: Scalar>(row: &[S], start: usize, len: usize) -> S {
    let sum = row[start..start + len].iter().fold(S::zero(), |acc, &v| acc + v);
    sum / scalar::count(len)
}

/// Trimmed mean of one sorted row: drop `trim` values from each end.
pub fn trimmed_mean<S: Scalar>(sorted: &[S], trim: usize) -> Result<S> {
    let k = sorted.len();
    if k == 0 || 2 * trim >= k {
        return Err(Error::InvalidConfig(format!("trim {trim} leaves no distances out of {k}")));
    }
    Ok(window_mean(sorted, trim, k - 2 * trim))
}

/// Robust distance of every class.
pub fn robust_score<S: Scalar>(d: &ClassDistances<S>, cfg: &FewShotConfig) -> Result<RobustScores<S>> {
    check_shape(d, cfg)?;
    robust_scores_with_trim(d, cfg.trim())
}

pub(crate) fn robust_scores_with_trim<S: Scalar>(d: &ClassDistances<S>, trim: usize) -> Result<RobustScores<S>> {
    d.rows().iter().map(|row| trimmed_mean(row, trim)).collect::<Result<_>>().map(RobustScores)
}

pub(crate) fn check_shape<S: Scalar>(d: &ClassDistances<S>, cfg: &FewShotConfig) -> Result<()> {
    if d.classes() != cfg.ways() || d.shots() != cfg.shots() {
        return Err(Error::MalformedDistances(format!(
            "distances cover {} classes x {} shots, configuration expects {} x {}",
            d.classes(),
            d.shots(),
            cfg.ways(),
            cfg.shots()
        )));
    }
    Ok(())
}
