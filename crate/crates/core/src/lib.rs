//! Certified few-shot classification under support-set poisoning.
//!
//! A query is scored against each class by a trimmed mean of its sorted
//! distances to that class's support samples; the class with the smallest
//! score wins. Because trimming discards the `K'` smallest and largest
//! distances, an attacker who replaces a few support samples can only slide
//! the kept window, which yields a closed-form certified poisoning size.
//!
//! ```
//! use fcert::{certify, AttackModel, ClassDistances, DistanceMetric, FewShotConfig};
//!
//! let d = ClassDistances::from_sorted(vec![
//!     vec![1.0, 2.0, 3.0, 4.0, 5.0],
//!     vec![10.0, 11.0, 12.0, 13.0, 14.0],
//! ])
//! .unwrap();
//! let cfg = FewShotConfig::new(2, 5, 2, DistanceMetric::SquaredL2).unwrap();
//! let cert = certify(&d, 0, &cfg, AttackModel::Individual).unwrap();
//! assert_eq!(cert.certified_size, 2);
//! ```

pub mod agreement;
pub mod attack;
pub mod certify;
pub mod dataio;
pub mod distance;
pub mod error;
pub mod eval;
pub mod oracle;
pub mod predict;
pub mod robust;
pub mod scalar;
pub mod types;

pub use attack::{
    attack, attack_group, attack_individual, attack_tightness, empirical_flip_check, flip_check_distances, AttackSpec,
    Strategy,
};
pub use certify::{
    certification_curve, certify, certify_group, certify_individual, certify_with, lower_bound, predict_from_distances,
    upper_bound, AttackModel, CertResult, CertTrace, QueryCertificate, Search,
};
pub use distance::{compute_distance, cosine_similarity};
pub use error::{Error, Result};
pub use eval::{certified_accuracy, run_benchmark, sample_episodes, EvalConfig, EvalReport, Method};
pub use oracle::{oracle_bound_extrema, oracle_certified_size, oracle_first_flip, CandidateRule, OracleConfig};
pub use predict::{fcert_predict, fcert_predict_weighted, fcert_scores, knn_predict, protonet_predict};
pub use robust::{class_distances, robust_score, trimmed_mean};
pub use scalar::{Real, Scalar};
pub use types::{ClassDistances, DistanceMetric, Episode, FeatureVector, FewShotConfig, RobustScores};

pub type Episode64 = Episode<f64>;
pub type Episode32 = Episode<f32>;
pub type FeatureVector64 = FeatureVector<f64>;
pub type FeatureVector32 = FeatureVector<f32>;
pub type ClassDistances64 = ClassDistances<f64>;
pub type ClassDistances32 = ClassDistances<f32>;
pub type CertResult64 = CertResult<f64>;
pub type CertResult32 = CertResult<f32>;
