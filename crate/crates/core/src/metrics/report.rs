use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ESTIMATOR_VERSION;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct MetricParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub normalization: String,
}

/// Machine-readable record of one computed metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: String,
    pub unit: String,
    pub estimator_version: String,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw_value: Option<f64>,
    /// Dataset id to content checksum.
    pub inputs: BTreeMap<String, String>,
    pub params: MetricParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<serde_json::Value>,
}

impl MetricReport {
    pub fn new(metric: &str, unit: &str, value: f64, normalization: &str) -> Self {
        Self {
            metric: metric.to_owned(),
            unit: unit.to_owned(),
            estimator_version: ESTIMATOR_VERSION.to_owned(),
            value,
            raw_value: None,
            inputs: BTreeMap::new(),
            params: MetricParams {
                alpha: None,
                normalization: normalization.to_owned(),
            },
            detail: None,
        }
    }

    pub fn with_input(mut self, id: &str, checksum: &str) -> Self {
        self.inputs.insert(id.to_owned(), checksum.to_owned());
        self
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("report serializes");
        out.push(b'\n');
        out
    }

    pub fn write(&self, path: &Path) -> Result<(), crate::corpus::CorpusError> {
        crate::corpus::write_file(path, &self.to_json())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_shape() {
        let mut r = MetricReport::new("kl_divergence", "word", 0.049, "1-exp(-kl)").with_input("na", "abc");
        r.raw_value = Some(0.05);
        r.params.alpha = Some(0.5);
        let v: serde_json::Value = serde_json::from_slice(&r.to_json()).unwrap();
        let keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        assert_eq!(keys, ["metric", "unit", "estimator_version", "value", "raw_value", "inputs", "params"]);
        assert_eq!(v["params"]["alpha"], 0.5);
        assert_eq!(v["inputs"]["na"], "abc");
    }
}
