//! JSON Lines feature datasets.
//!
//! ```text
//! {"_meta":{"dim":3}}
//! {"id":"a","label":"cat","features":[0.1,0.2,0.3]}
//! {"id":"b","label":"dog","features":[0.4,0.5,0.6]}
//! ```
//!
//! The header line is optional. Labels are interned to class ids in order of
//! first appearance.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub class: usize,
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDataset {
    dim: usize,
    labels: Vec<String>,
    samples: Vec<Sample>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct Record<'a> {
    #[serde(borrow)]
    id: std::borrow::Cow<'a, str>,
    #[serde(borrow)]
    label: std::borrow::Cow<'a, str>,
    features: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    dim: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    #[serde(rename = "_meta")]
    meta: Meta,
}

impl FeatureDataset {
    pub fn new(dim: usize) -> Self {
        FeatureDataset { dim, labels: Vec::new(), samples: Vec::new(), index: HashMap::new() }
    }

    /// Adds a sample, interning its label.
    pub fn push(&mut self, id: impl Into<String>, label: &str, features: Vec<f64>) -> Result<()> {
        let id = id.into();
        if label.is_empty() {
            return Err(Error::InvalidConfig(format!("sample '{id}' has an empty label")));
        }
        if features.len() != self.dim {
            return Err(Error::InvalidConfig(format!(
                "sample '{id}' has dimension {}, expected {}",
                features.len(),
                self.dim
            )));
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(format!("sample '{id}' has a non-finite value at position {pos}")));
        }
        let class = match self.index.get(label) {
            Some(&c) => c,
            None => {
                self.labels.push(label.to_string());
                self.index.insert(label.to_string(), self.labels.len() - 1);
                self.labels.len() - 1
            }
        };
        self.samples.push(Sample { id, class, features });
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.labels.len()
    }

    /// Sample indices of every class, in file order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.labels.len()];
        for (i, s) in self.samples.iter().enumerate() {
            out[s.class].push(i);
        }
        out
    }

    /// Twice the largest distance from the centroid: an upper bound on the
    /// diameter that is within a factor of two of it.
    pub fn diameter_bound(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let n = self.samples.len() as f64;
        let mut centroid = vec![0.0; self.dim];
        for s in &self.samples {
            for (c, v) in centroid.iter_mut().zip(&s.features) {
                *c += v;
            }
        }
        centroid.iter_mut().for_each(|c| *c /= n);
        let radius = self
            .samples
            .iter()
            .map(|s| s.features.iter().zip(&centroid).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        2.0 * radius
    }

    /// Canonical JSON Lines form: header, then one record per sample.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let header = Header { meta: Meta { dim: self.dim } };
        writeln!(out, "{}", serde_json::to_string(&header)?)?;
        for s in &self.samples {
            let rec = Record {
                id: s.id.as_str().into(),
                label: self.labels[s.class].as_str().into(),
                features: s.features.clone(),
            };
            writeln!(out, "{}", serde_json::to_string(&rec)?)?;
        }
        Ok(())
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }
}

/// Parses a JSON Lines dataset. Blank lines are skipped; line numbers in
/// errors are 1-based.
pub fn parse_jsonl<R: BufRead>(reader: R) -> Result<FeatureDataset> {
    let mut dataset: Option<FeatureDataset> = None;
    let mut declared: Option<usize> = None;
    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line.map_err(|e| Error::Parse { line: line_no, message: e.to_string() })?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Parse { line: line_no, message: e.to_string() })?;
        if value.get("_meta").is_some() {
            if dataset.is_some() || declared.is_some() {
                return Err(Error::Parse { line: line_no, message: "header must be the first record".into() });
            }
            let header: Header = serde_json::from_value(value)
                .map_err(|e| Error::Parse { line: line_no, message: format!("bad header: {e}") })?;
            declared = Some(header.meta.dim);
            continue;
        }
        let rec: Record =
            serde_json::from_str(text).map_err(|e| Error::Parse { line: line_no, message: e.to_string() })?;
        if rec.features.is_empty() {
            return Err(Error::Parse { line: line_no, message: format!("id '{}': empty feature vector", rec.id) });
        }
        let ds = dataset.get_or_insert_with(|| FeatureDataset::new(declared.unwrap_or(rec.features.len())));
        if rec.features.len() != ds.dim {
            return Err(Error::Parse {
                line: line_no,
                message: format!("id '{}': dimension {} does not match {}", rec.id, rec.features.len(), ds.dim),
            });
        }
        if let Some(pos) = rec.features.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parse {
                line: line_no,
                message: format!("id '{}': non-finite value at position {pos}", rec.id),
            });
        }
        if rec.label.is_empty() {
            return Err(Error::Parse { line: line_no, message: format!("id '{}': empty label", rec.id) });
        }
        ds.push(rec.id.into_owned(), &rec.label, rec.features)
            .map_err(|e| Error::Parse { line: line_no, message: e.to_string() })?;
    }
    dataset.ok_or(Error::Parse { line: 0, message: "dataset contains no samples".into() })
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<FeatureDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_jsonl(BufReader::new(file)).map_err(|e| match e {
        Error::Parse { line, message } => Error::Parse { line, message: format!("{}: {message}", path.display()) },
        other => other,
    })
}

pub fn save_dataset(dataset: &FeatureDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    dataset.write_jsonl(&mut out).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<FeatureDataset> {
        parse_jsonl(text.as_bytes())
    }

    #[test]
    fn two_valid_lines() {
        let ds = parse(
            "{\"id\":\"a\",\"label\":\"x\",\"features\":[1,2,3]}\n{\"id\":\"b\",\"label\":\"y\",\"features\":[4,5,6.5]}\n",
        )
        .unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.dim(), 3);
        assert_eq!(ds.labels(), &["x".to_string(), "y".to_string()]);
        assert_eq!(ds.samples()[1].features, vec![4.0, 5.0, 6.5]);
    }

    #[test]
    fn mixed_dimensions_name_the_line() {
        let err = parse(
            "{\"id\":\"a\",\"label\":\"x\",\"features\":[1,2,3]}\n{\"id\":\"b\",\"label\":\"x\",\"features\":[1,2,3,4]}\n",
        )
        .unwrap_err();
        match err {
            Error::Parse { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("'b'"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn header_dimension_is_enforced() {
        let err = parse("{\"_meta\":{\"dim\":2}}\n{\"id\":\"a\",\"label\":\"x\",\"features\":[1,2,3]}\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn malformed_inputs_are_errors() {
        for (text, line) in [
            ("not json\n", 1),
            ("{\"id\":\"a\",\"features\":[1]}\n", 1),
            ("{\"id\":\"a\",\"label\":\"\",\"features\":[1]}\n", 1),
            ("{\"id\":\"a\",\"label\":\"x\",\"features\":[]}\n", 1),
            ("{\"id\":\"a\",\"label\":\"x\",\"features\":[1e999]}\n", 1),
            ("{\"id\":\"a\",\"label\":\"x\",\"features\":[\"1\"]}\n", 1),
            ("\n{\"id\":\"a\",\"label\":\"x\",\"features\":[1]}\n{\"_meta\":{\"dim\":1}}\n", 3),
            ("", 0),
        ] {
            match parse(text) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?} gave {other:?}"),
            }
        }
    }

    #[test]
    fn canonical_reserialisation_is_stable() {
        let mut ds = FeatureDataset::new(2);
        ds.push("a", "x", vec![0.1, -2.5e-8]).unwrap();
        ds.push("b", "y", vec![1.0 / 3.0, 1e300]).unwrap();
        let text = ds.to_jsonl_string();
        let back = parse(&text).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.to_jsonl_string(), text);
    }
}
