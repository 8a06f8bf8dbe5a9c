//! Randomised comparison of the analytic certifier against the oracle.

use std::fmt;

use crate::certify::{certify, lower_bound, upper_bound, AttackModel};
use crate::dataio::Prng;
use crate::error::Result;
use crate::oracle::{oracle_bound_extrema, oracle_certified_size, OracleConfig};
use crate::robust::robust_scores_with_trim;
use crate::types::{ClassDistances, DistanceMetric, FewShotConfig};

/// A sorted distance table with its trim level.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub distances: ClassDistances<f64>,
    pub trim: usize,
}

impl Instance {
    pub fn predicted(&self) -> usize {
        robust_scores_with_trim(&self.distances, self.trim).expect("valid instance").argmin()
    }
}

/// Draws 2 to `max_classes` classes with 3 to `max_k` shots each and a trim
/// level in `0..=floor((K-1)/2)`. Half the instances use small integer
/// distances so that exact ties between scores are common.
pub fn random_instance(rng: &mut Prng, max_k: usize, max_classes: usize) -> Instance {
    let classes = 2 + rng.below((max_classes.max(2) - 1) as u64) as usize;
    let k = 3 + rng.below((max_k.max(3) - 2) as u64) as usize;
    let trim = rng.below(((k - 1) / 2 + 1) as u64) as usize;
    let integral = rng.below(2) == 0;
    let rows = (0..classes)
        .map(|_| (0..k).map(|_| if integral { rng.below(7) as f64 } else { 10.0 * rng.next_open01() }).collect())
        .collect();
    Instance { distances: ClassDistances::from_unsorted(rows).expect("non-negative rows"), trim }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Disagreement {
    Bound { class: usize, budget: usize, upper: (f64, f64), lower: (f64, f64) },
    Certificate { model: AttackModel, analytic: usize, oracle: usize },
}

impl fmt::Display for Disagreement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Disagreement::Bound { class, budget, upper, lower } => write!(
                f,
                "class {class}, T={budget}: upper {} vs oracle {}, lower {} vs oracle {}",
                upper.0, upper.1, lower.0, lower.1
            ),
            Disagreement::Certificate { model, analytic, oracle } => {
                write!(f, "{model} certified size {analytic} vs oracle {oracle}")
            }
        }
    }
}

/// Every bound and certificate of `inst` compared against the oracle.
pub fn compare(inst: &Instance, cfg: &OracleConfig) -> Result<Vec<Disagreement>> {
    let d = &inst.distances;
    let trim = inst.trim;
    let mut out = Vec::new();
    for (class, row) in d.rows().iter().enumerate() {
        for budget in 0..=trim {
            let upper = upper_bound(row, budget, trim)?;
            let lower = lower_bound(row, budget, trim)?;
            let (max, min) = oracle_bound_extrema(row, budget, trim, cfg)?;
            if (upper - max).abs() > cfg.tolerance || (lower - min).abs() > cfg.tolerance {
                out.push(Disagreement::Bound { class, budget, upper: (upper, max), lower: (lower, min) });
            }
        }
    }
    let predicted = inst.predicted();
    let fs = FewShotConfig::new(d.classes(), d.shots(), trim, DistanceMetric::SquaredL2)?;
    for model in AttackModel::ALL {
        let analytic = certify(d, predicted, &fs, model)?.certified_size;
        let oracle = oracle_certified_size(d, predicted, trim, cfg, model)?;
        if analytic != oracle {
            out.push(Disagreement::Certificate { model, analytic, oracle });
        }
    }
    Ok(out)
}
