//! Exhaustive-search oracles for the certification bounds.
//!
//! Nothing here calls into the analytic code paths. The extrema of a class's
//! robust distance under `t` replacements are found by trying every set of
//! at most `t` positions and every assignment of candidate values to them;
//! certified sizes are then found by composing those per-class extrema over
//! every admissible split of the attacker's budget.
//!
//! The default candidate set is `{0} ∪ {d_i} ∪ {d_K + 1}`: replacing a
//! distance by anything at or beyond either end of the row is equivalent to
//! using the end point, and any interior value sorts between two existing
//! distances.

use serde::{Deserialize, Serialize};

use crate::certify::AttackModel;
use crate::error::{Error, Result};
use crate::scalar::{self, Scalar};
use crate::types::ClassDistances;

/// Replacement values the oracle may assign to a poisoned distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CandidateRule {
    /// `{0} ∪ {d_i} ∪ {d_K + 1}`.
    Extremes,
    /// `n` evenly spaced values covering `[0, d_K + 1]`.
    Grid(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub max_k: usize,
    pub max_classes: usize,
    pub candidates: CandidateRule,
    pub tolerance: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { max_k: 8, max_classes: 4, candidates: CandidateRule::Extremes, tolerance: 1e-9 }
    }
}

pub fn candidate_values<S: Scalar>(row: &[S], rule: CandidateRule) -> Vec<S> {
    let top = row.iter().copied().fold(S::zero(), |m, v| if v > m { v } else { m }) + S::one();
    let mut values = match rule {
        CandidateRule::Extremes => {
            let mut v = vec![S::zero()];
            v.extend_from_slice(row);
            v.push(top);
            v
        }
        CandidateRule::Grid(n) => {
            let steps = scalar::count::<S>(n.max(2) - 1);
            (0..n.max(2)).map(|i| top * scalar::count::<S>(i) / steps).collect()
        }
    };
    values.sort_by(scalar::cmp);
    values.dedup_by(|a, b| a == b);
    values
}

fn mean_of_middle<S: Scalar>(values: &mut [S], trim: usize) -> S {
    values.sort_by(scalar::cmp);
    let kept = &values[trim..values.len() - trim];
    let mut sum = S::zero();
    for &v in kept {
        sum = sum + v;
    }
    sum / scalar::count(kept.len())
}

/// Calls `visit` with every `size`-subset of `0..n` in lexicographic order.
fn for_each_subset(n: usize, size: usize, mut visit: impl FnMut(&[usize])) {
    if size > n {
        return;
    }
    let mut idx: Vec<usize> = (0..size).collect();
    loop {
        visit(&idx);
        // rightmost position that can still move right
        let mut i = size;
        while i > 0 && idx[i - 1] == n - size + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return;
        }
        idx[i - 1] += 1;
        for j in i..size {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn check_row<S: Scalar>(row: &[S], trim: usize, cfg: &OracleConfig) -> Result<()> {
    if row.len() > cfg.max_k {
        return Err(Error::OracleLimit(format!("K = {} exceeds max_k = {}", row.len(), cfg.max_k)));
    }
    if row.is_empty() || 2 * trim >= row.len() {
        return Err(Error::InvalidConfig(format!("trim {trim} leaves no distances out of {}", row.len())));
    }
    Ok(())
}

/// Exact (max, min) robust distance reachable with exactly `s` changed
/// positions, for every `s` in `0..=max_budget`.
fn extrema_by_exact_budget<S: Scalar>(row: &[S], max_budget: usize, trim: usize, cfg: &OracleConfig) -> Vec<(S, S)> {
    let k = row.len();
    let cands = candidate_values(row, cfg.candidates);
    let m = cands.len();
    let mut scratch = row.to_vec();
    let mut out = Vec::with_capacity(max_budget + 1);
    for size in 0..=max_budget.min(k) {
        let mut best: Option<(S, S)> = None;
        for_each_subset(k, size, |positions| {
            // mixed-radix counter over candidate assignments
            let mut digits = vec![0usize; size];
            loop {
                scratch.copy_from_slice(row);
                for (p, &pos) in positions.iter().enumerate() {
                    scratch[pos] = cands[digits[p]];
                }
                let r = mean_of_middle(&mut scratch, trim);
                best = Some(match best {
                    None => (r, r),
                    Some((hi, lo)) => (if r > hi { r } else { hi }, if r < lo { r } else { lo }),
                });
                let mut p = 0;
                while p < size {
                    digits[p] += 1;
                    if digits[p] < m {
                        break;
                    }
                    digits[p] = 0;
                    p += 1;
                }
                if p == size {
                    break;
                }
            }
        });
        out.push(best.expect("at least one assignment"));
    }
    out
}

/// (max, min) robust distance reachable with at most `t` changes, for every
/// `t` in `0..=max_budget`.
fn extrema_by_budget<S: Scalar>(row: &[S], max_budget: usize, trim: usize, cfg: &OracleConfig) -> Vec<(S, S)> {
    let exact = extrema_by_exact_budget(row, max_budget, trim, cfg);
    let mut acc: Vec<(S, S)> = Vec::with_capacity(exact.len());
    for (hi, lo) in exact {
        acc.push(match acc.last() {
            None => (hi, lo),
            Some(&(phi, plo)) => (if hi > phi { hi } else { phi }, if lo < plo { lo } else { plo }),
        });
    }
    acc
}

/// Largest and smallest robust distance an attacker can force by changing at
/// most `budget` of the distances in `row`.
pub fn oracle_bound_extrema<S: Scalar>(row: &[S], budget: usize, trim: usize, cfg: &OracleConfig) -> Result<(S, S)> {
    check_row(row, trim, cfg)?;
    if budget > trim {
        return Err(Error::BudgetTooLarge { budget, limit: trim });
    }
    Ok(extrema_by_budget(row, budget, trim, cfg)[budget])
}

/// Smallest total budget at which some enumerated attack makes `predicted`
/// lose its strict argmin, or `None` if nothing within `0..=trim` does.
pub fn oracle_first_flip<S: Scalar>(
    d: &ClassDistances<S>,
    predicted: usize,
    trim: usize,
    cfg: &OracleConfig,
    model: AttackModel,
) -> Result<Option<usize>> {
    if d.classes() > cfg.max_classes {
        return Err(Error::OracleLimit(format!("{} classes exceed max_classes = {}", d.classes(), cfg.max_classes)));
    }
    if d.classes() < 2 || predicted >= d.classes() {
        return Err(Error::InvalidConfig("oracle needs a valid predicted class and a rival".into()));
    }
    for row in d.rows() {
        check_row(row, trim, cfg)?;
    }
    let ext: Vec<Vec<(S, S)>> = d.rows().iter().map(|r| extrema_by_budget(r, trim, trim, cfg)).collect();
    let flips = |budget: usize| -> bool {
        match model {
            AttackModel::Individual => {
                let hi = ext[predicted][budget].0;
                (0..d.classes()).any(|c| c != predicted && ext[c][budget].1 <= hi)
            }
            AttackModel::Group => {
                let mut split = vec![0usize; d.classes()];
                group_split_flips(&ext, predicted, &mut split, 0, budget)
            }
        }
    };
    Ok((0..=trim).find(|&t| flips(t)))
}

/// Tries every distribution of at most `remaining` samples over classes
/// `class..`.
fn group_split_flips<S: Scalar>(
    ext: &[Vec<(S, S)>],
    predicted: usize,
    split: &mut Vec<usize>,
    class: usize,
    remaining: usize,
) -> bool {
    if class == ext.len() {
        let hi = ext[predicted][split[predicted]].0;
        return (0..ext.len()).any(|c| c != predicted && ext[c][split[c]].1 <= hi);
    }
    for b in 0..=remaining {
        split[class] = b;
        if group_split_flips(ext, predicted, split, class + 1, remaining - b) {
            split[class] = 0;
            return true;
        }
    }
    split[class] = 0;
    false
}

/// Certified size by exhaustive search: one less than the smallest flipping
/// budget (never below zero), or `trim` if no budget up to `trim` flips.
pub fn oracle_certified_size<S: Scalar>(
    d: &ClassDistances<S>,
    predicted: usize,
    trim: usize,
    cfg: &OracleConfig,
    model: AttackModel,
) -> Result<usize> {
    Ok(match oracle_first_flip(d, predicted, trim, cfg, model)? {
        Some(t) => t.saturating_sub(1),
        None => trim,
    })
}
