//! Domain types shared by the predictors, the certifier and the attacks.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{self, Real, Scalar};

/// Embedding produced by a feature extractor. Never empty, never NaN/inf.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector<S>(Vec<S>);

impl<S: Real> FeatureVector<S> {
    pub fn new(values: Vec<S>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyVector);
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(pos));
        }
        Ok(FeatureVector(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[S] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<S> {
        self.0
    }

    pub fn scaled(&self, factor: S) -> Self {
        FeatureVector(self.0.iter().map(|&v| v * factor).collect())
    }

    pub fn norm_squared(&self) -> S {
        self.0.iter().fold(S::zero(), |acc, &v| acc + v * v)
    }

    pub(crate) fn from_raw(values: Vec<S>) -> Self {
        debug_assert!(!values.is_empty());
        FeatureVector(values)
    }
}

/// Distance between two embeddings.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceMetric {
    #[default]
    SquaredL2,
    L2,
    Cosine,
}

impl fmt::Display for DistanceMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DistanceMetric::SquaredL2 => "sq-l2",
            DistanceMetric::L2 => "l2",
            DistanceMetric::Cosine => "cosine",
        })
    }
}

impl FromStr for DistanceMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sq-l2" => Ok(DistanceMetric::SquaredL2),
            "l2" => Ok(DistanceMetric::L2),
            "cosine" => Ok(DistanceMetric::Cosine),
            other => Err(Error::InvalidConfig(format!("unknown metric '{other}' (expected sq-l2, l2 or cosine)"))),
        }
    }
}

/// C-way-K-shot task shape plus the trimming parameter K'.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotConfig {
    ways: usize,
    shots: usize,
    trim: usize,
    metric: DistanceMetric,
}

impl FewShotConfig {
    /// Validates `ways >= 2`, `shots >= 1` and `trim <= (shots - 1) / 2`.
    pub fn new(ways: usize, shots: usize, trim: usize, metric: DistanceMetric) -> Result<Self> {
        if ways < 2 {
            return Err(Error::InvalidConfig(format!("ways must be at least 2, got {ways}")));
        }
        if shots == 0 {
            return Err(Error::InvalidConfig("shots must be at least 1".into()));
        }
        let max_trim = Self::max_trim(shots);
        if trim > max_trim {
            return Err(Error::InvalidConfig(format!(
                "kprime {trim} exceeds floor((K-1)/2) = {max_trim} for K = {shots}"
            )));
        }
        Ok(FewShotConfig { ways, shots, trim, metric })
    }

    /// Uses the largest admissible trim, floor((K-1)/2).
    pub fn with_default_trim(ways: usize, shots: usize, metric: DistanceMetric) -> Result<Self> {
        Self::new(ways, shots, Self::max_trim(shots.max(1)), metric)
    }

    pub fn max_trim(shots: usize) -> usize {
        shots.saturating_sub(1) / 2
    }

    pub fn ways(&self) -> usize {
        self.ways
    }

    pub fn shots(&self) -> usize {
        self.shots
    }

    pub fn trim(&self) -> usize {
        self.trim
    }

    pub fn metric(&self) -> DistanceMetric {
        self.metric
    }

    /// Number of distances kept after trimming, K - 2K'.
    pub fn window(&self) -> usize {
        self.shots - 2 * self.trim
    }
}

/// One few-shot task. Episode classes are indexed `0..C`; `class_map` maps
/// them back to dataset class ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode<S> {
    class_map: Vec<usize>,
    support: Vec<Vec<FeatureVector<S>>>,
    queries: Vec<(FeatureVector<S>, usize)>,
}

impl<S: Real> Episode<S> {
    pub fn new(
        class_map: Vec<usize>,
        support: Vec<Vec<FeatureVector<S>>>,
        queries: Vec<(FeatureVector<S>, usize)>,
    ) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::MalformedEpisode("no classes".into()));
        }
        if class_map.len() != support.len() {
            return Err(Error::MalformedEpisode(format!(
                "class map has {} entries for {} classes",
                class_map.len(),
                support.len()
            )));
        }
        let shots = support[0].len();
        if shots == 0 {
            return Err(Error::MalformedEpisode("class 0 has no support samples".into()));
        }
        let dim = support[0][0].dim();
        for (c, class) in support.iter().enumerate() {
            if class.len() != shots {
                return Err(Error::MalformedEpisode(format!(
                    "class {c} has {} support samples, expected {shots}",
                    class.len()
                )));
            }
            if let Some(v) = class.iter().find(|v| v.dim() != dim) {
                return Err(Error::DimensionMismatch { left: dim, right: v.dim() });
            }
        }
        for (q, (v, label)) in queries.iter().enumerate() {
            if v.dim() != dim {
                return Err(Error::DimensionMismatch { left: dim, right: v.dim() });
            }
            if *label >= support.len() {
                return Err(Error::MalformedEpisode(format!(
                    "query {q} has label {label} but the episode has {} classes",
                    support.len()
                )));
            }
        }
        Ok(Episode { class_map, support, queries })
    }

    /// Episode whose class map is the identity.
    pub fn from_support(support: Vec<Vec<FeatureVector<S>>>, queries: Vec<(FeatureVector<S>, usize)>) -> Result<Self> {
        let map = (0..support.len()).collect();
        Self::new(map, support, queries)
    }

    pub fn ways(&self) -> usize {
        self.support.len()
    }

    pub fn shots(&self) -> usize {
        self.support[0].len()
    }

    pub fn dim(&self) -> usize {
        self.support[0][0].dim()
    }

    pub fn class_map(&self) -> &[usize] {
        &self.class_map
    }

    pub fn support(&self) -> &[Vec<FeatureVector<S>>] {
        &self.support
    }

    pub fn class_support(&self, class: usize) -> &[FeatureVector<S>] {
        &self.support[class]
    }

    pub fn queries(&self) -> &[(FeatureVector<S>, usize)] {
        &self.queries
    }

    /// Checks that the episode shape matches `cfg` and that `query` has the
    /// right dimension.
    pub fn check(&self, cfg: &FewShotConfig, query: &FeatureVector<S>) -> Result<()> {
        if self.ways() != cfg.ways() || self.shots() != cfg.shots() {
            return Err(Error::MalformedEpisode(format!(
                "episode is {}-way-{}-shot but the configuration expects {}-way-{}-shot",
                self.ways(),
                self.shots(),
                cfg.ways(),
                cfg.shots()
            )));
        }
        if query.dim() != self.dim() {
            return Err(Error::DimensionMismatch { left: self.dim(), right: query.dim() });
        }
        Ok(())
    }

    /// Replaces one support vector. Used by the attacks; shape is preserved.
    pub(crate) fn replace_support(&mut self, class: usize, index: usize, v: FeatureVector<S>) {
        debug_assert_eq!(v.dim(), self.dim());
        self.support[class][index] = v;
    }

    pub fn map_features(&self, f: impl Fn(&FeatureVector<S>) -> FeatureVector<S>) -> Self {
        Episode {
            class_map: self.class_map.clone(),
            support: self.support.iter().map(|c| c.iter().map(&f).collect()).collect(),
            queries: self.queries.iter().map(|(v, l)| (f(v), *l)).collect(),
        }
    }
}

/// Per-class query-to-support distances, each row sorted ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDistances<S> {
    rows: Vec<Vec<S>>,
}

impl<S: Scalar> ClassDistances<S> {
    /// Accepts rows that are already sorted; rejects anything else.
    pub fn from_sorted(rows: Vec<Vec<S>>) -> Result<Self> {
        Self::validate(&rows)?;
        for (c, row) in rows.iter().enumerate() {
            if row.windows(2).any(|w| w[1] < w[0]) {
                return Err(Error::MalformedDistances(format!("class {c} is not sorted")));
            }
        }
        Ok(ClassDistances { rows })
    }

    /// Sorts each row (stable, so equal distances keep support order).
    pub fn from_unsorted(mut rows: Vec<Vec<S>>) -> Result<Self> {
        Self::validate(&rows)?;
        for row in &mut rows {
            row.sort_by(scalar::cmp);
        }
        Ok(ClassDistances { rows })
    }

    fn validate(rows: &[Vec<S>]) -> Result<()> {
        let Some(first) = rows.first() else {
            return Err(Error::MalformedDistances("no classes".into()));
        };
        if first.is_empty() {
            return Err(Error::MalformedDistances("empty distance row".into()));
        }
        for (c, row) in rows.iter().enumerate() {
            if row.len() != first.len() {
                return Err(Error::MalformedDistances(format!(
                    "class {c} has {} distances, expected {}",
                    row.len(),
                    first.len()
                )));
            }
            if row.iter().any(|v| matches!(v.partial_cmp(&S::zero()), None | Some(std::cmp::Ordering::Less))) {
                return Err(Error::MalformedDistances(format!("class {c} has a negative or undefined distance")));
            }
        }
        Ok(())
    }

    pub fn classes(&self) -> usize {
        self.rows.len()
    }

    pub fn shots(&self) -> usize {
        self.rows[0].len()
    }

    pub fn row(&self, class: usize) -> &[S] {
        &self.rows[class]
    }

    pub fn rows(&self) -> &[Vec<S>] {
        &self.rows
    }

    pub(crate) fn row_mut(&mut self, class: usize) -> &mut Vec<S> {
        &mut self.rows[class]
    }
}

/// Trimmed-mean robust distance for each class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustScores<S>(pub Vec<S>);

impl<S: Scalar> RobustScores<S> {
    /// Class with the smallest robust distance, lowest index on ties.
    pub fn argmin(&self) -> usize {
        scalar::argmin_first(&self.0)
    }

    pub fn as_slice(&self) -> &[S] {
        &self.0
    }
}
