//! Feature-space poisoning attacks.
//!
//! The episode-level attacks replace support features directly: a poisoned
//! sample aimed at a rival class is an exact copy of the query feature (a
//! perfect feature collision), and the true class is degraded according to
//! [`Strategy`]. [`attack_tightness`] works on sorted distances and realises
//! the certification bounds exactly.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::certify::{group_step, individual_step, AttackModel};
use crate::dataio::Prng;
use crate::distance::compute_distance;
use crate::error::{Error, Result};
use crate::predict::prototypes;
use crate::robust::{class_distances, robust_scores_with_trim};
use crate::scalar::{self, Real, Scalar};
use crate::types::{ClassDistances, DistanceMetric, Episode, FeatureVector, FewShotConfig};

pub const DEFAULT_FAR_SCALE: f64 = 1e3;

/// What happens to the poisoned samples of the query's true class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Only the rival classes are poisoned; the true class is left alone.
    Collision,
    /// True-class samples are overwritten with clean features of another class.
    CrossClass,
    /// True-class samples are moved to a single point far from the query.
    FarPoint,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Collision => "collision",
            Strategy::CrossClass => "cross-class",
            Strategy::FarPoint => "far-point",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "collision" => Ok(Strategy::Collision),
            "cross-class" => Ok(Strategy::CrossClass),
            "far-point" => Ok(Strategy::FarPoint),
            other => Err(Error::InvalidConfig(format!(
                "unknown strategy '{other}' (expected collision, cross-class or far-point)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub model: AttackModel,
    pub budget: usize,
    pub strategy: Strategy,
    pub rng_seed: u64,
    /// Far points sit `far_scale * diameter` away from the query.
    pub far_scale: f64,
    /// Dataset diameter; the episode's own diameter is used when absent.
    pub diameter: Option<f64>,
    /// Metric used to find the closest rival prototype (Group attack).
    pub metric: DistanceMetric,
}

impl AttackSpec {
    pub fn new(model: AttackModel, budget: usize, strategy: Strategy, rng_seed: u64) -> Self {
        AttackSpec {
            model,
            budget,
            strategy,
            rng_seed,
            far_scale: DEFAULT_FAR_SCALE,
            diameter: None,
            metric: DistanceMetric::SquaredL2,
        }
    }

    pub fn with_diameter(mut self, diameter: f64) -> Self {
        self.diameter = Some(diameter);
        self
    }

    pub fn with_metric(mut self, metric: DistanceMetric) -> Self {
        self.metric = metric;
        self
    }
}

fn check_attack_args<S: Real>(
    episode: &Episode<S>,
    query: &FeatureVector<S>,
    label: usize,
    budget: usize,
) -> Result<()> {
    if budget > episode.shots() {
        return Err(Error::BudgetTooLarge { budget, limit: episode.shots() });
    }
    if label >= episode.ways() {
        return Err(Error::MalformedEpisode(format!("label {label} out of range for {} classes", episode.ways())));
    }
    if query.dim() != episode.dim() {
        return Err(Error::DimensionMismatch { left: episode.dim(), right: query.dim() });
    }
    Ok(())
}

/// Applies the attack selected by `spec.model`.
pub fn attack<S: Real>(
    episode: &Episode<S>,
    query: &FeatureVector<S>,
    label: usize,
    spec: &AttackSpec,
) -> Result<Episode<S>> {
    match spec.model {
        AttackModel::Individual => attack_individual(episode, query, label, spec),
        AttackModel::Group => attack_group(episode, query, label, spec),
    }
}

/// Poisons `spec.budget` samples in every class.
///
/// Rival classes get copies of the query feature. The true class `label` is
/// handled by `spec.strategy`. Samples are chosen uniformly without
/// replacement from a stream seeded by `spec.rng_seed`; classes are visited
/// in index order.
pub fn attack_individual<S: Real>(
    episode: &Episode<S>,
    query: &FeatureVector<S>,
    label: usize,
    spec: &AttackSpec,
) -> Result<Episode<S>> {
    check_attack_args(episode, query, label, spec.budget)?;
    let mut rng = Prng::new(spec.rng_seed);
    let mut poisoned = episode.clone();
    let shots = episode.shots();
    let far = match spec.strategy {
        Strategy::FarPoint => Some(far_point(episode, query, spec)),
        _ => None,
    };
    for c in 0..episode.ways() {
        let victims = rng.sample_indices(shots, spec.budget);
        if c != label {
            for &i in &victims {
                poisoned.replace_support(c, i, query.clone());
            }
            continue;
        }
        match spec.strategy {
            Strategy::Collision => {}
            Strategy::CrossClass => {
                let others: Vec<usize> = (0..episode.ways()).filter(|&o| o != label).collect();
                let source = others[rng.below(others.len() as u64) as usize];
                let picks = rng.sample_indices(shots, spec.budget);
                for (&i, &j) in victims.iter().zip(&picks) {
                    poisoned.replace_support(c, i, episode.class_support(source)[j].clone());
                }
            }
            Strategy::FarPoint => {
                let far = far.as_ref().expect("far point computed");
                for &i in &victims {
                    poisoned.replace_support(c, i, far.clone());
                }
            }
        }
    }
    Ok(poisoned)
}

/// Spends the whole budget on the rival class whose prototype is closest to
/// the query, replacing sampled supports with the query feature.
pub fn attack_group<S: Real>(
    episode: &Episode<S>,
    query: &FeatureVector<S>,
    label: usize,
    spec: &AttackSpec,
) -> Result<Episode<S>> {
    check_attack_args(episode, query, label, spec.budget)?;
    let target = closest_rival_prototype(episode, query, label, spec.metric)?;
    let mut rng = Prng::new(spec.rng_seed);
    let mut poisoned = episode.clone();
    for i in rng.sample_indices(episode.shots(), spec.budget) {
        poisoned.replace_support(target, i, query.clone());
    }
    Ok(poisoned)
}

/// Rival class (not `label`) whose prototype is nearest to `query`.
pub fn closest_rival_prototype<S: Real>(
    episode: &Episode<S>,
    query: &FeatureVector<S>,
    label: usize,
    metric: DistanceMetric,
) -> Result<usize> {
    let protos = prototypes(episode);
    let mut best: Option<(usize, S)> = None;
    for (c, p) in protos.iter().enumerate().filter(|&(c, _)| c != label) {
        let d = compute_distance(query, p, metric)?;
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((c, d));
        }
    }
    best.map(|(c, _)| c).ok_or_else(|| Error::MalformedEpisode("no rival class".into()))
}

/// Largest pairwise Euclidean distance among support vectors and queries.
pub fn episode_diameter<S: Real>(episode: &Episode<S>, extra: &FeatureVector<S>) -> S {
    let mut points: Vec<&FeatureVector<S>> = episode.support().iter().flatten().collect();
    points.extend(episode.queries().iter().map(|(v, _)| v));
    points.push(extra);
    let mut best = S::zero();
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let d = compute_distance(points[i], points[j], DistanceMetric::L2).unwrap_or(S::zero());
            best = best.max(d);
        }
    }
    best
}

/// `query + M u`, with `u` the first standard basis direction that is not
/// parallel to the query, orthogonalised against it.
fn far_point<S: Real>(episode: &Episode<S>, query: &FeatureVector<S>, spec: &AttackSpec) -> FeatureVector<S> {
    let diameter = match spec.diameter {
        Some(d) => S::from(d).unwrap_or(S::one()),
        None => episode_diameter(episode, query),
    };
    let diameter = if diameter > S::zero() { diameter } else { S::one() };
    let magnitude = S::from(spec.far_scale).expect("far scale representable") * diameter;
    let direction = far_direction(query.as_slice());
    let values = query.as_slice().iter().zip(&direction).map(|(&q, &u)| q + magnitude * u).collect();
    FeatureVector::from_raw(values)
}

fn far_direction<S: Real>(q: &[S]) -> Vec<S> {
    let dim = q.len();
    let norm_sq = q.iter().fold(S::zero(), |a, &v| a + v * v);
    let basis = |i: usize| (0..dim).map(|j| if j == i { S::one() } else { S::zero() }).collect::<Vec<S>>();
    if norm_sq == S::zero() {
        return basis(0);
    }
    let tiny = S::from(1e-12).unwrap_or(S::epsilon());
    for i in 0..dim {
        let coef = q[i] / norm_sq;
        let v: Vec<S> = (0..dim).map(|j| if j == i { S::one() } else { S::zero() } - coef * q[j]).collect();
        let n = v.iter().fold(S::zero(), |a, &x| a + x * x).sqrt();
        if n > tiny {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
    basis(0)
}

/// Distance-level attack that attains the certification bounds.
///
/// In `predicted`'s row, sorted positions `K'+1 ..= K'+t_pred` (1-based) are
/// raised to the row maximum; in `target`'s row the `t_target` largest
/// distances are lowered to the row minimum. Rows are re-sorted.
pub fn attack_tightness<S: Scalar>(
    d: &ClassDistances<S>,
    predicted: usize,
    target: usize,
    budgets: (usize, usize),
    trim: usize,
) -> Result<ClassDistances<S>> {
    let (t_pred, t_target) = budgets;
    for b in [t_pred, t_target] {
        if b > trim {
            return Err(Error::BudgetTooLarge { budget: b, limit: trim });
        }
    }
    if predicted >= d.classes() || target >= d.classes() || predicted == target {
        return Err(Error::InvalidConfig(format!(
            "need two distinct classes below {}, got {predicted} and {target}",
            d.classes()
        )));
    }
    if 2 * trim >= d.shots() {
        return Err(Error::InvalidConfig(format!("trim {trim} leaves no distances out of {}", d.shots())));
    }
    let mut out = d.clone();
    let k = d.shots();

    let row = out.row_mut(predicted);
    let top = row[k - 1];
    for v in &mut row[trim..trim + t_pred] {
        *v = top;
    }
    row.sort_by(scalar::cmp);

    let row = out.row_mut(target);
    let bottom = row[0];
    for v in &mut row[k - t_target..] {
        *v = bottom;
    }
    row.sort_by(scalar::cmp);
    Ok(out)
}

/// Runs the bound-attaining attack at budget `budget` and reports whether
/// `predicted` loses its strict argmin (a flip or a tie).
///
/// Individual: both `predicted` and the rival with the smallest lower bound
/// receive `budget`. Group: the binding split from the certification trace.
pub fn flip_check_distances<S: Scalar>(
    d: &ClassDistances<S>,
    predicted: usize,
    trim: usize,
    model: AttackModel,
    budget: usize,
) -> Result<bool> {
    if budget > trim {
        return Err(Error::BudgetTooLarge { budget, limit: trim });
    }
    if d.classes() < 2 || predicted >= d.classes() {
        return Err(Error::InvalidConfig("flip check needs a valid predicted class and a rival".into()));
    }
    if 2 * trim >= d.shots() {
        return Err(Error::InvalidConfig(format!("trim {trim} leaves no distances out of {}", d.shots())));
    }
    let (rival, split) = match model {
        AttackModel::Individual => {
            let step = individual_step(d, predicted, budget, trim);
            (step.rival, (budget, budget))
        }
        AttackModel::Group => {
            let step = group_step(d, predicted, budget, trim);
            (step.rival, (step.predicted_budget, budget - step.predicted_budget))
        }
    };
    let attacked = attack_tightness(d, predicted, rival, split, trim)?;
    let scores = robust_scores_with_trim(&attacked, trim)?;
    let own = scores.0[predicted];
    Ok(scores.0.iter().enumerate().any(|(c, &s)| c != predicted && s <= own))
}

/// [`flip_check_distances`] for a query of an episode, with the prediction
/// taken from FCert on the clean episode.
pub fn empirical_flip_check<S: Real>(
    episode: &Episode<S>,
    query: &FeatureVector<S>,
    cfg: &FewShotConfig,
    model: AttackModel,
    budget: usize,
) -> Result<bool> {
    let d = class_distances(episode, query, cfg)?;
    let predicted = robust_scores_with_trim(&d, cfg.trim())?.argmin();
    flip_check_distances(&d, predicted, cfg.trim(), model, budget)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certify::{certify, lower_bound, upper_bound};
    use crate::predict::fcert_predict;
    use crate::robust::trimmed_mean;

    fn fv(v: &[f64]) -> FeatureVector<f64> {
        FeatureVector::new(v.to_vec()).unwrap()
    }

    fn two_class_episode() -> (Episode<f64>, FeatureVector<f64>) {
        let a: Vec<_> = (0..5).map(|i| fv(&[i as f64 * 0.1, 0.0])).collect();
        let b: Vec<_> = (0..5).map(|i| fv(&[5.0 + i as f64 * 0.1, 1.0])).collect();
        (Episode::from_support(vec![a, b], vec![]).unwrap(), fv(&[0.2, 0.1]))
    }

    #[test]
    fn zero_budget_is_identity() {
        let (ep, q) = two_class_episode();
        for strategy in [Strategy::Collision, Strategy::CrossClass, Strategy::FarPoint] {
            let spec = AttackSpec::new(AttackModel::Individual, 0, strategy, 9);
            assert_eq!(attack(&ep, &q, 0, &spec).unwrap(), ep);
            let spec = AttackSpec::new(AttackModel::Group, 0, strategy, 9);
            assert_eq!(attack(&ep, &q, 0, &spec).unwrap(), ep);
        }
    }

    #[test]
    fn rivals_receive_exact_collisions() {
        let (ep, q) = two_class_episode();
        let spec = AttackSpec::new(AttackModel::Individual, 3, Strategy::FarPoint, 1);
        let p = attack_individual(&ep, &q, 0, &spec).unwrap();
        assert_eq!(p.class_support(1).iter().filter(|v| **v == q).count(), 3);
        assert_eq!(p.ways(), 2);
        assert_eq!(p.shots(), 5);
        // far points are identical and far away
        let far: Vec<_> = p.class_support(0).iter().filter(|v| !ep.class_support(0).contains(v)).collect();
        assert_eq!(far.len(), 3);
        assert!(compute_distance(far[0], &q, DistanceMetric::L2).unwrap() > 1000.0);
    }

    #[test]
    fn full_cross_class_attack_misclassifies() {
        let (ep, q) = two_class_episode();
        let cfg = FewShotConfig::new(2, 5, 2, DistanceMetric::SquaredL2).unwrap();
        assert_eq!(fcert_predict(&ep, &q, &cfg).unwrap(), 0);
        let spec = AttackSpec::new(AttackModel::Individual, 5, Strategy::CrossClass, 4);
        let p = attack_individual(&ep, &q, 0, &spec).unwrap();
        assert!(p.class_support(0).iter().all(|v| ep.class_support(1).contains(v)));
        assert_eq!(fcert_predict(&p, &q, &cfg).unwrap(), 1);
    }

    #[test]
    fn budget_above_shots_is_rejected() {
        let (ep, q) = two_class_episode();
        let spec = AttackSpec::new(AttackModel::Group, 6, Strategy::Collision, 0);
        assert_eq!(attack(&ep, &q, 0, &spec), Err(Error::BudgetTooLarge { budget: 6, limit: 5 }));
    }

    #[test]
    fn group_attack_targets_the_only_rival() {
        let (ep, q) = two_class_episode();
        let spec = AttackSpec::new(AttackModel::Group, 2, Strategy::Collision, 3);
        let p = attack_group(&ep, &q, 0, &spec).unwrap();
        assert_eq!(p.class_support(0), ep.class_support(0));
        assert_eq!(p.class_support(1).iter().filter(|v| **v == q).count(), 2);
    }

    #[test]
    fn far_direction_is_orthogonal_unit() {
        let u = far_direction(&[1.0, 0.0, 0.0]);
        assert_eq!(u, vec![0.0, 1.0, 0.0]);
        let q = [0.3, -1.2, 2.0];
        let u = far_direction(&q);
        let dot: f64 = u.iter().zip(&q).map(|(a, b)| a * b).sum();
        let norm: f64 = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(dot.abs() < 1e-12 && (norm - 1.0).abs() < 1e-12);
        assert_eq!(far_direction(&[0.0, 0.0]), vec![1.0, 0.0]);
    }

    #[test]
    fn tightness_attack_attains_bounds() {
        let d = ClassDistances::from_sorted(vec![vec![1.0, 2.0, 3.0, 4.0, 5.0], vec![10.0, 11.0, 12.0, 13.0, 14.0]])
            .unwrap();
        let p = attack_tightness(&d, 0, 1, (1, 0), 1).unwrap();
        assert_eq!(p.row(0), &[1.0, 3.0, 4.0, 5.0, 5.0]);
        assert_eq!(trimmed_mean(p.row(0), 1).unwrap(), 4.0);
        assert_eq!(trimmed_mean(p.row(0), 1).unwrap(), upper_bound(d.row(0), 1, 1).unwrap());

        let p = attack_tightness(&d, 0, 1, (0, 2), 2).unwrap();
        assert_eq!(p.row(1), &[10.0, 10.0, 10.0, 11.0, 12.0]);
        assert_eq!(trimmed_mean(p.row(1), 2).unwrap(), lower_bound(d.row(1), 2, 2).unwrap());

        assert_eq!(attack_tightness(&d, 0, 1, (0, 0), 2).unwrap(), d);
        assert!(attack_tightness(&d, 0, 1, (3, 0), 2).is_err());
        assert!(attack_tightness(&d, 0, 0, (1, 0), 2).is_err());
    }

    #[test]
    fn flip_check_matches_certificate_on_examples() {
        let d =
            ClassDistances::from_sorted(vec![vec![1.0, 2.0, 3.0, 4.0, 10.0], vec![5.0, 6.0, 7.0, 8.0, 9.0]]).unwrap();
        let cfg = FewShotConfig::new(2, 5, 2, DistanceMetric::SquaredL2).unwrap();
        let cert = certify(&d, 0, &cfg, AttackModel::Individual).unwrap();
        assert_eq!(cert.certified_size, 1);
        assert!(!flip_check_distances(&d, 0, 2, AttackModel::Individual, 1).unwrap());
        assert!(flip_check_distances(&d, 0, 2, AttackModel::Individual, 2).unwrap());
    }

    #[test]
    fn zero_gap_counts_as_flip_at_zero_budget() {
        let row = vec![1.0, 2.0, 3.0];
        let d = ClassDistances::from_sorted(vec![row.clone(), row]).unwrap();
        for model in AttackModel::ALL {
            assert!(flip_check_distances(&d, 0, 1, model, 0).unwrap());
        }
    }

    #[test]
    fn attacks_are_deterministic_in_the_seed() {
        let (ep, q) = two_class_episode();
        let spec = AttackSpec::new(AttackModel::Individual, 2, Strategy::CrossClass, 77);
        assert_eq!(attack(&ep, &q, 1, &spec).unwrap(), attack(&ep, &q, 1, &spec).unwrap());
    }
}
