use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DistillError;

const BUNDLED_PRINCIPLES: &str = include_str!("../../assets/principles.json");
const PLACEHOLDER_EXEMPLARS: &str = include_str!("../../assets/exemplars.placeholder.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Principle {
    pub name: String,
    pub definition: String,
}

/// Ordered organisational principles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrinciplesDoc {
    principles: Vec<Principle>,
}

impl PrinciplesDoc {
    pub fn new(principles: Vec<Principle>) -> Result<Self, DistillError> {
        if principles.is_empty() {
            return Err(DistillError::Input("principles list is empty".into()));
        }
        if let Some(p) = principles
            .iter()
            .find(|p| p.name.trim().is_empty() || p.definition.trim().is_empty())
        {
            return Err(DistillError::Input(format!(
                "principle {:?} has an empty name or definition",
                p.name
            )));
        }
        Ok(Self { principles })
    }

    /// The seven bundled AI principles.
    pub fn bundled() -> Self {
        let list: Vec<Principle> =
            serde_json::from_str(BUNDLED_PRINCIPLES).expect("bundled principles are valid JSON");
        Self::new(list).expect("bundled principles are non-empty")
    }

    pub fn load(path: &Path) -> Result<Self, DistillError> {
        let text = fs::read_to_string(path)
            .map_err(|e| DistillError::Input(format!("cannot read {}: {e}", path.display())))?;
        let list: Vec<Principle> = serde_json::from_str(&text)
            .map_err(|e| DistillError::Input(format!("bad principles file {}: {e}", path.display())))?;
        Self::new(list)
    }

    pub fn principles(&self) -> &[Principle] {
        &self.principles
    }

    /// One `Name: definition` line per principle.
    pub fn rendered(&self) -> String {
        self.principles
            .iter()
            .map(|p| format!("{}: {}", p.name, p.definition))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Two reviewed question/answer pairs shown to the rewriting model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExemplarPair {
    pub q1: String,
    pub a1: String,
    pub q2: String,
    pub a2: String,
}

impl ExemplarPair {
    pub fn validate(&self) -> Result<(), DistillError> {
        for (field, value) in [("q1", &self.q1), ("a1", &self.a1), ("q2", &self.q2), ("a2", &self.a2)] {
            if value.trim().is_empty() {
                return Err(DistillError::Input(format!("exemplar field {field} is empty")));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, DistillError> {
        let text = fs::read_to_string(path)
            .map_err(|e| DistillError::Input(format!("cannot read {}: {e}", path.display())))?;
        let ex: Self = serde_json::from_str(&text)
            .map_err(|e| DistillError::Input(format!("bad exemplars file {}: {e}", path.display())))?;
        ex.validate()?;
        Ok(ex)
    }

    /// Synthetic pairs for smoke tests. Not human-reviewed.
    pub fn placeholder() -> Self {
        serde_json::from_str(PLACEHOLDER_EXEMPLARS).expect("bundled exemplars are valid JSON")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_has_seven_principles() {
        let doc = PrinciplesDoc::bundled();
        let names: Vec<_> = doc.principles().iter().map(|p| p.name.as_str()).collect();
        assert_eq!(
            names,
            [
                "Serving Audiences",
                "Accuracy",
                "Openness and Transparency",
                "Protecting Data",
                "Mitigating Bias",
                "Respect for Creators' Rights",
                "Experimentation and Evaluation",
            ]
        );
        assert_eq!(doc.rendered(), PrinciplesDoc::bundled().rendered());
        assert_eq!(doc.rendered().lines().count(), 7);
    }

    #[test]
    fn user_supplied_counts_allowed() {
        let doc = PrinciplesDoc::new(vec![Principle {
            name: "Only".into(),
            definition: "One rule.".into(),
        }])
        .unwrap();
        assert_eq!(doc.rendered(), "Only: One rule.");
        assert!(PrinciplesDoc::new(vec![]).is_err());
    }

    #[test]
    fn placeholder_exemplars_valid() {
        ExemplarPair::placeholder().validate().unwrap();
    }
}
