use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskId {
    ArcChallenge,
    BbqLiteJson,
    #[serde(rename = "truthfulqa_mc2")]
    TruthfulqaMc2,
}

impl TaskId {
    pub const ALL: [TaskId; 3] = [TaskId::ArcChallenge, TaskId::BbqLiteJson, TaskId::TruthfulqaMc2];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskId::ArcChallenge => "arc_challenge",
            TaskId::BbqLiteJson => "bbq_lite_json",
            TaskId::TruthfulqaMc2 => "truthfulqa_mc2",
        }
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "arc_challenge" | "arc" => Ok(TaskId::ArcChallenge),
            "bbq_lite_json" | "bbq_lite" | "bbq" => Ok(TaskId::BbqLiteJson),
            "truthfulqa_mc2" | "truthfulqa" => Ok(TaskId::TruthfulqaMc2),
            _ => Err(format!(
                "unknown task {s:?} (arc_challenge|bbq_lite_json|truthfulqa_mc2)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gold {
    Index(usize),
    TrueFalse {
        true_answers: Vec<String>,
        false_answers: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkItem {
    pub task_id: TaskId,
    pub id: String,
    pub question: String,
    pub choices: Vec<String>,
    pub gold: Gold,
    #[serde(default)]
    pub category: String,
}

impl BenchmarkItem {
    pub fn validate(&self) -> Result<(), String> {
        if self.question.trim().is_empty() {
            return Err("empty question".into());
        }
        match (&self.gold, self.task_id) {
            (Gold::Index(g), TaskId::ArcChallenge | TaskId::BbqLiteJson) => {
                if self.choices.len() < 2 {
                    return Err(format!("{} choices, need at least 2", self.choices.len()));
                }
                if *g >= self.choices.len() {
                    return Err(format!("gold index {g} out of range for {} choices", self.choices.len()));
                }
                Ok(())
            }
            (Gold::TrueFalse { true_answers, false_answers }, TaskId::TruthfulqaMc2) => {
                if true_answers.is_empty() || false_answers.is_empty() {
                    return Err("truthfulqa item needs both true and false answers".into());
                }
                Ok(())
            }
            _ => Err(format!("gold kind does not match task {}", self.task_id)),
        }
    }

    pub fn gold_index(&self) -> Option<usize> {
        match self.gold {
            Gold::Index(i) => Some(i),
            Gold::TrueFalse { .. } => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arc(choices: &[&str], gold: usize) -> BenchmarkItem {
        BenchmarkItem {
            task_id: TaskId::ArcChallenge,
            id: "x".into(),
            question: "q?".into(),
            choices: choices.iter().map(|s| s.to_string()).collect(),
            gold: Gold::Index(gold),
            category: String::new(),
        }
    }

    #[test]
    fn validation() {
        assert!(arc(&["a", "b"], 1).validate().is_ok());
        assert!(arc(&["a", "b"], 2).validate().is_err());
        assert!(arc(&["a"], 0).validate().is_err());
        let mut t = arc(&["a", "b"], 0);
        t.task_id = TaskId::TruthfulqaMc2;
        assert!(t.validate().is_err());
        t.gold = Gold::TrueFalse { true_answers: vec!["a".into()], false_answers: vec![] };
        assert!(t.validate().is_err());
    }

    #[test]
    fn task_ids_round_trip() {
        for t in TaskId::ALL {
            assert_eq!(t.as_str().parse::<TaskId>().unwrap(), t);
            assert_eq!(serde_json::to_value(t).unwrap(), t.as_str());
        }
        assert_eq!("arc-challenge".parse::<TaskId>().unwrap(), TaskId::ArcChallenge);
    }
}
