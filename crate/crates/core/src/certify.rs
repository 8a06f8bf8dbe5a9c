//! Certified poisoning sizes.
//!
//! An attacker who replaces `t <= K'` support samples of one class can move
//! that class's sorted distance window up or down by at most `t` positions.
//! [`upper_bound`] and [`lower_bound`] are the robust distances of those two
//! extreme windows. The prediction `ŷ` survives a budget when the shifted-up
//! score of `ŷ` stays strictly below the shifted-down score of every rival.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predict::fcert_scores;
use crate::robust::{check_shape, class_distances, window_mean};
use crate::scalar::{self, Real, Scalar};
use crate::types::{ClassDistances, Episode, FewShotConfig};

/// How the attacker's budget `T` is counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackModel {
    /// Up to `T` poisoned samples in every class.
    Individual,
    /// Up to `T` poisoned samples in total.
    Group,
}

impl AttackModel {
    pub const ALL: [AttackModel; 2] = [AttackModel::Individual, AttackModel::Group];

    pub fn as_str(&self) -> &'static str {
        match self {
            AttackModel::Individual => "individual",
            AttackModel::Group => "group",
        }
    }
}

impl std::fmt::Display for AttackModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Largest achievable robust distance of a class after `budget` replacements.
pub fn upper_bound<S: Scalar>(sorted: &[S], budget: usize, trim: usize) -> Result<S> {
    check_bound_args(sorted.len(), budget, trim)?;
    Ok(window_mean(sorted, trim + budget, sorted.len() - 2 * trim))
}

/// Smallest achievable robust distance of a class after `budget` replacements.
pub fn lower_bound<S: Scalar>(sorted: &[S], budget: usize, trim: usize) -> Result<S> {
    check_bound_args(sorted.len(), budget, trim)?;
    Ok(window_mean(sorted, trim - budget, sorted.len() - 2 * trim))
}

fn check_bound_args(shots: usize, budget: usize, trim: usize) -> Result<()> {
    if shots == 0 || 2 * trim >= shots {
        return Err(Error::InvalidConfig(format!("trim {trim} leaves no distances out of {shots}")));
    }
    if budget > trim {
        return Err(Error::BudgetTooLarge { budget, limit: trim });
    }
    Ok(())
}

/// One row of an Individual-attack trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndividualStep<S> {
    pub budget: usize,
    /// Upper bound for the predicted class.
    pub upper: S,
    /// Smallest lower bound among the other classes, and the class attaining it.
    pub lower: S,
    pub rival: usize,
    pub holds: bool,
}

/// One row of a Group-attack trace: the binding rival class and budget split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStep<S> {
    pub budget: usize,
    pub rival: usize,
    /// Samples spent on the predicted class; the rest go to `rival`.
    pub predicted_budget: usize,
    pub upper: S,
    pub lower: S,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", content = "steps", rename_all = "lowercase")]
pub enum CertTrace<S> {
    Individual(Vec<IndividualStep<S>>),
    Group(Vec<GroupStep<S>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertResult<S> {
    pub predicted: usize,
    pub certified_size: usize,
    /// The prediction is not a strict argmin even without poisoning.
    pub tied_at_zero: bool,
    /// Bound evaluations for every budget in `0..=K'`.
    pub trace: CertTrace<S>,
}

/// Search used to find the largest certified budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Search {
    /// Bisection with `mid = ceil((low + high) / 2)` over `[0, K']`.
    Binary,
    Linear,
}

pub(crate) fn individual_step<S: Scalar>(
    d: &ClassDistances<S>,
    predicted: usize,
    budget: usize,
    trim: usize,
) -> IndividualStep<S> {
    let upper = window_mean(d.row(predicted), trim + budget, d.shots() - 2 * trim);
    let mut rival = None;
    let mut lower = upper;
    for c in (0..d.classes()).filter(|&c| c != predicted) {
        let lb = window_mean(d.row(c), trim - budget, d.shots() - 2 * trim);
        if rival.is_none() || lb < lower {
            rival = Some(c);
            lower = lb;
        }
    }
    IndividualStep { budget, upper, lower, rival: rival.unwrap_or(predicted), holds: upper < lower }
}

/// Worst budget split for `budget`: the first violating (rival, split) pair
/// in enumeration order, otherwise the pair with the smallest margin.
pub(crate) fn group_step<S: Scalar>(
    d: &ClassDistances<S>,
    predicted: usize,
    budget: usize,
    trim: usize,
) -> GroupStep<S> {
    let width = d.shots() - 2 * trim;
    let mut worst: Option<GroupStep<S>> = None;
    for c in (0..d.classes()).filter(|&c| c != predicted) {
        for own in 0..=budget {
            let upper = window_mean(d.row(predicted), trim + own, width);
            let lower = window_mean(d.row(c), trim - (budget - own), width);
            let step = GroupStep { budget, rival: c, predicted_budget: own, upper, lower, holds: upper < lower };
            if !step.holds {
                return step;
            }
            let tighter = match &worst {
                None => true,
                Some(w) => step.lower - step.upper < w.lower - w.upper,
            };
            if tighter {
                worst = Some(step);
            }
        }
    }
    worst.expect("at least two classes")
}

fn check_certify_args<S: Scalar>(d: &ClassDistances<S>, predicted: usize, cfg: &FewShotConfig) -> Result<()> {
    check_shape(d, cfg)?;
    if predicted >= d.classes() {
        return Err(Error::InvalidConfig(format!(
            "predicted class {predicted} out of range for {} classes",
            d.classes()
        )));
    }
    Ok(())
}

/// Largest `t` in `[0, trim]` with `holds(t)`, assuming `holds` is monotone
/// (true then false) and `holds(0)` is true.
fn search_largest(trim: usize, search: Search, holds: impl Fn(usize) -> bool) -> usize {
    match search {
        Search::Binary => {
            let (mut low, mut high) = (0, trim);
            while low != high {
                let mid = (low + high).div_ceil(2);
                if holds(mid) {
                    low = mid;
                } else {
                    high = mid - 1;
                }
            }
            low
        }
        Search::Linear => (1..=trim).take_while(|&t| holds(t)).last().unwrap_or(0),
    }
}

/// Certified poisoning size against the Individual attack.
pub fn certify_individual<S: Scalar>(
    d: &ClassDistances<S>,
    predicted: usize,
    cfg: &FewShotConfig,
) -> Result<CertResult<S>> {
    certify_with(d, predicted, cfg, AttackModel::Individual, Search::Binary)
}

/// Certified poisoning size against the Group attack.
pub fn certify_group<S: Scalar>(d: &ClassDistances<S>, predicted: usize, cfg: &FewShotConfig) -> Result<CertResult<S>> {
    certify_with(d, predicted, cfg, AttackModel::Group, Search::Binary)
}

pub fn certify<S: Scalar>(
    d: &ClassDistances<S>,
    predicted: usize,
    cfg: &FewShotConfig,
    model: AttackModel,
) -> Result<CertResult<S>> {
    certify_with(d, predicted, cfg, model, Search::Binary)
}

/// [`certify`] with an explicit search strategy.
pub fn certify_with<S: Scalar>(
    d: &ClassDistances<S>,
    predicted: usize,
    cfg: &FewShotConfig,
    model: AttackModel,
    search: Search,
) -> Result<CertResult<S>> {
    check_certify_args(d, predicted, cfg)?;
    let trim = cfg.trim();
    let (trace, holds): (CertTrace<S>, Vec<bool>) = match model {
        AttackModel::Individual => {
            let steps: Vec<_> = (0..=trim).map(|t| individual_step(d, predicted, t, trim)).collect();
            let holds = steps.iter().map(|s| s.holds).collect();
            (CertTrace::Individual(steps), holds)
        }
        AttackModel::Group => {
            let steps: Vec<_> = (0..=trim).map(|t| group_step(d, predicted, t, trim)).collect();
            let holds = steps.iter().map(|s| s.holds).collect();
            (CertTrace::Group(steps), holds)
        }
    };
    let tied_at_zero = !holds[0];
    let certified_size = if tied_at_zero { 0 } else { search_largest(trim, search, |t| holds[t]) };
    Ok(CertResult { predicted, certified_size, tied_at_zero, trace })
}

/// Certificate for one query of an episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryCertificate {
    pub query: usize,
    pub label: usize,
    pub predicted: usize,
    pub correct: bool,
    pub certified_size: usize,
}

/// FCert prediction and certified size for every query of `episode`.
pub fn certification_curve<S: Real>(
    episode: &Episode<S>,
    cfg: &FewShotConfig,
    model: AttackModel,
) -> Result<Vec<QueryCertificate>> {
    episode
        .queries()
        .iter()
        .enumerate()
        .map(|(q, (x, label))| {
            let d = class_distances(episode, x, cfg)?;
            let predicted = fcert_scores(episode, x, cfg)?.argmin();
            let cert = certify(&d, predicted, cfg, model)?;
            Ok(QueryCertificate {
                query: q,
                label: *label,
                predicted,
                correct: predicted == *label,
                certified_size: cert.certified_size,
            })
        })
        .collect()
}

/// Prediction of FCert straight from distances.
pub fn predict_from_distances<S: Scalar>(d: &ClassDistances<S>, trim: usize) -> Result<usize> {
    let scores = d.rows().iter().map(|r| crate::robust::trimmed_mean(r, trim)).collect::<Result<Vec<_>>>()?;
    Ok(scalar::argmin_first(&scores))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::DistanceMetric;

    fn cfg(ways: usize, shots: usize, trim: usize) -> FewShotConfig {
        FewShotConfig::new(ways, shots, trim, DistanceMetric::SquaredL2).unwrap()
    }

    const ONE_TO_FIVE: [f64; 5] = [1.0, 2.0, 3.0, 4.0, 5.0];

    #[test]
    fn upper_bound_example_with_one_poisoned_sample() {
        assert_eq!(upper_bound(&ONE_TO_FIVE, 1, 1).unwrap(), 4.0);
        assert_eq!(upper_bound(&ONE_TO_FIVE, 2, 2).unwrap(), 5.0);
        assert_eq!(upper_bound(&ONE_TO_FIVE, 0, 1).unwrap(), 3.0);
    }

    #[test]
    fn lower_bound_values() {
        assert_eq!(lower_bound(&ONE_TO_FIVE, 1, 1).unwrap(), 2.0);
        assert_eq!(lower_bound(&ONE_TO_FIVE, 2, 2).unwrap(), 1.0);
        assert_eq!(lower_bound(&ONE_TO_FIVE, 0, 2).unwrap(), 3.0);
    }

    #[test]
    fn budget_beyond_trim_is_rejected() {
        assert_eq!(upper_bound(&ONE_TO_FIVE, 2, 1), Err(Error::BudgetTooLarge { budget: 2, limit: 1 }));
        assert_eq!(lower_bound(&ONE_TO_FIVE, 3, 2), Err(Error::BudgetTooLarge { budget: 3, limit: 2 }));
    }

    #[test]
    fn individual_examples() {
        let d = ClassDistances::from_sorted(vec![ONE_TO_FIVE.to_vec(), vec![10.0, 11.0, 12.0, 13.0, 14.0]]).unwrap();
        let r = certify_individual(&d, 0, &cfg(2, 5, 2)).unwrap();
        assert_eq!(r.certified_size, 2);
        assert!(!r.tied_at_zero);
        let CertTrace::Individual(steps) = &r.trace else { panic!() };
        assert_eq!((steps[1].upper, steps[1].lower), (4.0, 11.0));
        assert_eq!((steps[2].upper, steps[2].lower), (5.0, 10.0));

        let d =
            ClassDistances::from_sorted(vec![vec![1.0, 2.0, 3.0, 4.0, 10.0], vec![5.0, 6.0, 7.0, 8.0, 9.0]]).unwrap();
        assert_eq!(certify_individual(&d, 0, &cfg(2, 5, 2)).unwrap().certified_size, 1);
    }

    #[test]
    fn ties_certify_nothing() {
        let d = ClassDistances::from_sorted(vec![ONE_TO_FIVE.to_vec(), ONE_TO_FIVE.to_vec()]).unwrap();
        for model in AttackModel::ALL {
            let r = certify(&d, 0, &cfg(2, 5, 2), model).unwrap();
            assert_eq!(r.certified_size, 0);
            assert!(r.tied_at_zero);
        }
    }

    #[test]
    fn group_example_and_splits() {
        let d = ClassDistances::from_sorted(vec![ONE_TO_FIVE.to_vec(), vec![10.0, 11.0, 12.0, 13.0, 14.0]]).unwrap();
        let r = certify_group(&d, 0, &cfg(2, 5, 2)).unwrap();
        assert_eq!(r.certified_size, 2);
        let CertTrace::Group(steps) = &r.trace else { panic!() };
        // tightest split at T = 2 is (2, 0): 5 < 12, (1, 1): 4 < 11, (0, 2): 3 < 10 all have margin 7
        assert!(steps[2].holds);
        assert_eq!(steps[2].lower - steps[2].upper, 7.0);
    }

    #[test]
    fn zero_trim_certifies_nothing_beyond_zero() {
        let d = ClassDistances::from_sorted(vec![vec![1.0, 2.0], vec![10.0, 11.0]]).unwrap();
        for model in AttackModel::ALL {
            let r = certify(&d, 0, &cfg(2, 2, 0), model).unwrap();
            assert_eq!(r.certified_size, 0);
            assert!(!r.tied_at_zero);
        }
    }

    #[test]
    fn binary_and_linear_search_agree() {
        let d = ClassDistances::from_sorted(vec![
            vec![1.0, 2.0, 3.0, 4.0, 6.0, 7.0, 8.0],
            vec![3.5, 5.0, 6.0, 6.5, 7.0, 8.0, 9.0],
            vec![4.0, 4.0, 9.0, 9.0, 9.5, 10.0, 12.0],
        ])
        .unwrap();
        for model in AttackModel::ALL {
            let a = certify_with(&d, 0, &cfg(3, 7, 3), model, Search::Binary).unwrap();
            let b = certify_with(&d, 0, &cfg(3, 7, 3), model, Search::Linear).unwrap();
            assert_eq!(a.certified_size, b.certified_size);
        }
    }

    #[test]
    fn exact_rationals() {
        use num_rational::Ratio;
        let r = |n: i64, d: i64| Ratio::new(n, d);
        let row = vec![r(1, 3), r(1, 2), r(2, 3), r(5, 6), r(1, 1)];
        assert_eq!(upper_bound(&row, 1, 1).unwrap(), r(5, 6));
        assert_eq!(lower_bound(&row, 1, 1).unwrap(), r(1, 2));
    }
}
