//! Episode sampling, certified and empirical accuracy, benchmark reports.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::{attack, AttackSpec, Strategy, DEFAULT_FAR_SCALE};
use crate::certify::{certify, AttackModel, QueryCertificate};
use crate::dataio::{FeatureDataset, Prng};
use crate::error::{Error, Result};
use crate::predict::{fcert_predict, fcert_predict_weighted, knn_predict, protonet_predict};
use crate::robust::{class_distances, robust_score};
use crate::types::{DistanceMetric, Episode, FeatureVector, FewShotConfig};

/// Few-shot predictors that can be evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "fcert")]
    FCert,
    #[serde(rename = "fcert-weighted")]
    FCertWeighted,
    #[serde(rename = "protonet")]
    ProtoNet,
    #[serde(rename = "knn")]
    Knn,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::FCert, Method::FCertWeighted, Method::ProtoNet, Method::Knn];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::FCert => "fcert",
            Method::FCertWeighted => "fcert-weighted",
            Method::ProtoNet => "protonet",
            Method::Knn => "knn",
        }
    }

    /// Only FCert carries a certificate.
    pub fn certifies(&self) -> bool {
        matches!(self, Method::FCert)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| {
            Error::InvalidConfig(format!("unknown method '{s}' (expected fcert, fcert-weighted, protonet or knn)"))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub batches: usize,
    pub ways: usize,
    pub shots: usize,
    pub queries_per_class: usize,
    pub trim: usize,
    pub metric: DistanceMetric,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub attack_models: Vec<AttackModel>,
    pub strategy: Strategy,
    /// Neighbour count of the k-NN baseline.
    pub knn_k: usize,
    pub far_scale: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            batches: 20,
            ways: 5,
            shots: 5,
            queries_per_class: 1,
            trim: FewShotConfig::max_trim(5),
            metric: DistanceMetric::SquaredL2,
            seed: 0,
            methods: Method::ALL.to_vec(),
            attack_models: AttackModel::ALL.to_vec(),
            strategy: Strategy::FarPoint,
            knn_k: 5,
            far_scale: DEFAULT_FAR_SCALE,
        }
    }
}

impl EvalConfig {
    pub fn few_shot(&self) -> Result<FewShotConfig> {
        FewShotConfig::new(self.ways, self.shots, self.trim, self.metric)
    }

    pub fn validate(&self) -> Result<FewShotConfig> {
        let fs = self.few_shot()?;
        if self.batches == 0 {
            return Err(Error::InvalidConfig("batches must be at least 1".into()));
        }
        if self.queries_per_class == 0 {
            return Err(Error::InvalidConfig("queries per class must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig("no methods selected".into()));
        }
        if self.attack_models.is_empty() {
            return Err(Error::InvalidConfig("no attack models selected".into()));
        }
        if self.methods.contains(&Method::Knn) && (self.knn_k == 0 || self.knn_k > self.ways * self.shots) {
            return Err(Error::NeighborCount { k: self.knn_k, max: self.ways * self.shots });
        }
        Ok(fs)
    }
}

/// Draws `cfg.batches` episodes.
///
/// Per episode: `C` classes uniformly without replacement, then `K` supports
/// and `queries_per_class` queries per class, all distinct, uniformly
/// without replacement. Everything comes from one stream derived from
/// `(cfg.seed, "episodes")`.
pub fn sample_episodes(dataset: &FeatureDataset, cfg: &EvalConfig) -> Result<Vec<Episode<f64>>> {
    let fs = cfg.few_shot()?;
    let need = fs.shots() + cfg.queries_per_class;
    if dataset.class_count() < fs.ways() {
        return Err(Error::InsufficientData(format!(
            "dataset has {} classes, a {}-way episode needs {}",
            dataset.class_count(),
            fs.ways(),
            fs.ways()
        )));
    }
    let members = dataset.members();
    for (c, m) in members.iter().enumerate() {
        if m.len() < need {
            return Err(Error::InsufficientData(format!(
                "class '{}' has {} samples, needs {} ({} supports + {} queries)",
                dataset.labels()[c],
                m.len(),
                need,
                fs.shots(),
                cfg.queries_per_class
            )));
        }
    }
    let mut rng = Prng::derive(cfg.seed, "episodes");
    let feature = |i: usize| FeatureVector::new(dataset.samples()[i].features.clone());
    (0..cfg.batches)
        .map(|_| {
            let classes = rng.sample_indices(dataset.class_count(), fs.ways());
            let mut support = Vec::with_capacity(fs.ways());
            let mut queries = Vec::new();
            for (ec, &dc) in classes.iter().enumerate() {
                let picks = rng.sample_indices(members[dc].len(), need);
                let chosen: Vec<usize> = picks.iter().map(|&p| members[dc][p]).collect();
                support.push(chosen[..fs.shots()].iter().map(|&i| feature(i)).collect::<Result<Vec<_>>>()?);
                for &i in &chosen[fs.shots()..] {
                    queries.push((feature(i)?, ec));
                }
            }
            Episode::new(classes, support, queries)
        })
        .collect()
}

/// Fraction of records that are correct and certified for at least `budget`.
pub fn certified_accuracy(records: &[QueryCertificate], budget: usize) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::EmptyRecords);
    }
    let hits = records.iter().filter(|r| r.correct && r.certified_size >= budget).count();
    Ok(hits as f64 / records.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodPrediction {
    pub method: Method,
    pub predicted: usize,
    pub correct: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelCertificate {
    pub attack_model: AttackModel,
    pub certified_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmpiricalOutcome {
    pub method: Method,
    pub attack_model: AttackModel,
    pub budget: usize,
    pub predicted: usize,
    pub correct: bool,
}

/// Everything measured for one query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub episode: usize,
    pub query: usize,
    pub label: usize,
    pub clean: Vec<MethodPrediction>,
    /// FCert certificates, one per attack model (empty if FCert is not run).
    pub certified: Vec<ModelCertificate>,
    pub empirical: Vec<EmpiricalOutcome>,
}

impl QueryRecord {
    pub fn fcert(&self) -> Option<&MethodPrediction> {
        self.clean.iter().find(|p| p.method == Method::FCert)
    }

    pub fn certificate(&self, model: AttackModel) -> Option<QueryCertificate> {
        let fcert = self.fcert()?;
        let cert = self.certified.iter().find(|c| c.attack_model == model)?;
        Some(QueryCertificate {
            query: self.query,
            label: self.label,
            predicted: fcert.predicted,
            correct: fcert.correct,
            certified_size: cert.certified_size,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub method: Method,
    pub attack_model: AttackModel,
    pub budget: usize,
    /// Present for certifying methods only.
    pub certified_accuracy: Option<f64>,
    pub empirical_accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodAccuracy {
    pub method: Method,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: EvalConfig,
    pub seed: u64,
    pub episodes: usize,
    pub queries: usize,
    pub clean_accuracy: Vec<MethodAccuracy>,
    pub curves: Vec<CurvePoint>,
    pub records: Vec<QueryRecord>,
}

impl EvalReport {
    pub fn curve(&self, method: Method, model: AttackModel) -> impl Iterator<Item = &CurvePoint> {
        self.curves.iter().filter(move |p| p.method == method && p.attack_model == model)
    }
}

/// Clean prediction of `method` for one query.
pub fn predict_with(
    method: Method,
    episode: &Episode<f64>,
    query: &FeatureVector<f64>,
    fs: &FewShotConfig,
    knn_k: usize,
) -> Result<usize> {
    match method {
        Method::FCert => fcert_predict(episode, query, fs),
        Method::FCertWeighted => fcert_predict_weighted(episode, query, fs),
        Method::ProtoNet => protonet_predict(episode, query, fs),
        Method::Knn => knn_predict(episode, query, knn_k, fs),
    }
}

/// Seed of the attack run against one (episode, query, model, budget).
pub fn attack_seed(root: u64, episode: usize, query: usize, model: AttackModel, budget: usize) -> u64 {
    Prng::derive(root, &format!("attack/{episode}/{query}/{model}/{budget}")).next_u64()
}

/// Clean predictions, certificates and attacked predictions for every query
/// of one episode.
pub fn evaluate_episode(
    index: usize,
    episode: &Episode<f64>,
    cfg: &EvalConfig,
    diameter: Option<f64>,
) -> Result<Vec<QueryRecord>> {
    let fs = cfg.validate()?;
    let mut out = Vec::with_capacity(episode.queries().len());
    for (q, (x, label)) in episode.queries().iter().enumerate() {
        let mut clean = Vec::with_capacity(cfg.methods.len());
        for &method in &cfg.methods {
            let predicted = predict_with(method, episode, x, &fs, cfg.knn_k)?;
            clean.push(MethodPrediction { method, predicted, correct: predicted == *label });
        }
        let mut certified = Vec::new();
        if cfg.methods.contains(&Method::FCert) {
            let d = class_distances(episode, x, &fs)?;
            let predicted = robust_score(&d, &fs)?.argmin();
            for &model in &cfg.attack_models {
                let cert = certify(&d, predicted, &fs, model)?;
                certified.push(ModelCertificate { attack_model: model, certified_size: cert.certified_size });
            }
        }
        let mut empirical = Vec::new();
        for &model in &cfg.attack_models {
            for budget in 0..=fs.trim() {
                let mut spec =
                    AttackSpec::new(model, budget, cfg.strategy, attack_seed(cfg.seed, index, q, model, budget))
                        .with_metric(fs.metric());
                spec.far_scale = cfg.far_scale;
                spec.diameter = diameter;
                let poisoned = attack(episode, x, *label, &spec)?;
                for &method in &cfg.methods {
                    let predicted = predict_with(method, &poisoned, x, &fs, cfg.knn_k)?;
                    empirical.push(EmpiricalOutcome {
                        method,
                        attack_model: model,
                        budget,
                        predicted,
                        correct: predicted == *label,
                    });
                }
            }
        }
        out.push(QueryRecord { episode: index, query: q, label: *label, clean, certified, empirical });
    }
    Ok(out)
}

/// Aggregates per-query records into a report. Records are keyed by
/// (episode, query), so the order they arrive in does not matter.
pub fn assemble_report(cfg: &EvalConfig, mut records: Vec<QueryRecord>) -> Result<EvalReport> {
    let fs = cfg.validate()?;
    if records.is_empty() {
        return Err(Error::EmptyRecords);
    }
    records.sort_by_key(|r| (r.episode, r.query));
    let n = records.len();
    let frac = |hits: usize| hits as f64 / n as f64;

    let clean_accuracy = cfg
        .methods
        .iter()
        .map(|&method| {
            let hits = records.iter().filter(|r| r.clean.iter().any(|p| p.method == method && p.correct)).count();
            MethodAccuracy { method, accuracy: frac(hits) }
        })
        .collect();

    let mut curves = Vec::new();
    for &method in &cfg.methods {
        for &model in &cfg.attack_models {
            let certs: Vec<QueryCertificate> = if method.certifies() {
                records.iter().filter_map(|r| r.certificate(model)).collect()
            } else {
                Vec::new()
            };
            for budget in 0..=fs.trim() {
                let hits = records
                    .iter()
                    .filter(|r| {
                        r.empirical
                            .iter()
                            .any(|e| e.method == method && e.attack_model == model && e.budget == budget && e.correct)
                    })
                    .count();
                let certified_accuracy =
                    if method.certifies() { Some(certified_accuracy(&certs, budget)?) } else { None };
                curves.push(CurvePoint {
                    method,
                    attack_model: model,
                    budget,
                    certified_accuracy,
                    empirical_accuracy: frac(hits),
                });
            }
        }
    }
    let episodes = records.iter().map(|r| r.episode).max().map_or(0, |m| m + 1);
    Ok(EvalReport { config: cfg.clone(), seed: cfg.seed, episodes, queries: n, clean_accuracy, curves, records })
}

/// Samples episodes from `dataset` and evaluates them in parallel.
pub fn run_benchmark(dataset: &FeatureDataset, cfg: &EvalConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let episodes = sample_episodes(dataset, cfg)?;
    let diameter = Some(dataset.diameter_bound());
    let per_episode = episodes
        .par_iter()
        .enumerate()
        .map(|(i, ep)| evaluate_episode(i, ep, cfg, diameter))
        .collect::<Result<Vec<_>>>()?;
    assemble_report(cfg, per_episode.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cert(correct: bool, size: usize) -> QueryCertificate {
        QueryCertificate { query: 0, label: 0, predicted: 0, correct, certified_size: size }
    }

    #[test]
    fn certified_accuracy_counts_by_hand() {
        let recs: Vec<_> = [
            (true, 0),
            (true, 1),
            (true, 2),
            (false, 2),
            (true, 2),
            (false, 0),
            (true, 1),
            (true, 0),
            (false, 1),
            (true, 2),
        ]
        .into_iter()
        .map(|(c, s)| cert(c, s))
        .collect();
        assert_eq!(certified_accuracy(&recs, 0).unwrap(), 0.7);
        assert_eq!(certified_accuracy(&recs, 1).unwrap(), 0.5);
        assert_eq!(certified_accuracy(&recs, 2).unwrap(), 0.3);
        assert_eq!(certified_accuracy(&recs, 3).unwrap(), 0.0);
        assert_eq!(certified_accuracy(&[], 0), Err(Error::EmptyRecords));
    }

    #[test]
    fn all_certified_gives_one() {
        let recs = vec![cert(true, 2); 4];
        for t in 0..=2 {
            assert_eq!(certified_accuracy(&recs, t).unwrap(), 1.0);
        }
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.as_str()));
        }
    }

    #[test]
    fn defaults() {
        let cfg = EvalConfig::default();
        assert_eq!((cfg.batches, cfg.ways, cfg.shots, cfg.trim), (20, 5, 5, 2));
        assert_eq!(cfg.metric, DistanceMetric::SquaredL2);
    }
}
