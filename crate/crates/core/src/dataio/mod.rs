//! Dataset interchange, report serialisation, the portable PRNG and the
//! synthetic feature generator.

mod dataset;
mod prng;
mod report;
mod synth;

pub use dataset::{load_dataset, parse_jsonl, save_dataset, FeatureDataset, Sample};
pub use prng::Prng;
pub use report::{report_to_csv, report_to_json, save_report, ReportFormat, CSV_HEADER};
pub use synth::{synth_gaussian, SynthConfig};
