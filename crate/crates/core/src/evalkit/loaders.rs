use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;

use super::task::{BenchmarkItem, Gold, TaskId};
use super::EvalError;

/// BBQ categories kept when loading a bbq_lite_json directory.
pub const BBQ_CATEGORIES: [&str; 6] = [
    "age",
    "nationality",
    "race_ethnicity",
    "gender_identity",
    "sexual_orientation",
    "physical_appearance",
];

/// One raw record and where it came from.
struct RawRecord {
    file: PathBuf,
    index: usize,
    value: Value,
}

fn malformed(file: &Path, index: usize, reason: impl Into<String>) -> EvalError {
    EvalError::Schema {
        path: file.to_path_buf(),
        record: index,
        reason: reason.into(),
    }
}

/// Reads a JSON array, a JSON object wrapping records (`rows`, `examples`)
/// or JSONL.
fn read_records(file: &Path) -> Result<Vec<RawRecord>, EvalError> {
    let text = fs::read_to_string(file).map_err(|e| EvalError::Io {
        path: file.to_path_buf(),
        message: e.to_string(),
    })?;
    let trimmed = text.trim_start();
    let whole: Option<Value> = if trimmed.starts_with('[') || trimmed.starts_with('{') {
        serde_json::from_str(trimmed).ok()
    } else {
        None
    };
    let values: Vec<Value> = match whole {
        Some(Value::Array(items)) => items,
        Some(Value::Object(mut obj)) if obj.contains_key("rows") || obj.contains_key("examples") => {
            let key = if obj.contains_key("rows") { "rows" } else { "examples" };
            match obj.remove(key) {
                Some(Value::Array(items)) => items
                    .into_iter()
                    .map(|v| match v {
                        Value::Object(mut o) if o.contains_key("row") && o.contains_key("row_idx") => {
                            o.remove("row").unwrap_or(Value::Null)
                        }
                        other => other,
                    })
                    .collect(),
                _ => return Err(malformed(file, 0, format!("{key:?} is not an array"))),
            }
        }
        Some(single @ Value::Object(_)) => vec![single],
        _ => {
            let mut out = Vec::new();
            for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                let v = serde_json::from_str(line)
                    .map_err(|e| malformed(file, out.len(), format!("line {}: {e}", i + 1)))?;
                out.push(v);
            }
            out
        }
    };
    Ok(values
        .into_iter()
        .enumerate()
        .map(|(index, value)| RawRecord {
            file: file.to_path_buf(),
            index,
            value,
        })
        .collect())
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), EvalError> {
    let entries = fs::read_dir(dir).map_err(|e| EvalError::Io {
        path: dir.to_path_buf(),
        message: e.to_string(),
    })?;
    for entry in entries {
        let path = entry
            .map_err(|e| EvalError::Io {
                path: dir.to_path_buf(),
                message: e.to_string(),
            })?
            .path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else if matches!(path.extension().and_then(|e| e.to_str()), Some("json" | "jsonl")) {
            out.push(path);
        }
    }
    Ok(())
}

/// Task files under `path`, sorted; a plain file is returned as is.
fn task_files(path: &Path) -> Result<Vec<PathBuf>, EvalError> {
    if !path.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files = Vec::new();
    collect_files(path, &mut files)?;
    files.sort();
    Ok(files)
}

fn str_field<'a>(v: &'a Value, key: &str) -> Option<&'a str> {
    v.get(key).and_then(Value::as_str)
}

fn string_list(v: Option<&Value>) -> Option<Vec<String>> {
    v?.as_array()?
        .iter()
        .map(|x| x.as_str().map(str::to_owned))
        .collect()
}

fn label_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.trim().to_owned()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn parse_arc(r: &RawRecord) -> Result<BenchmarkItem, String> {
    let v = &r.value;
    let (question, choices_v) = match v.get("question") {
        Some(Value::Object(q)) => (
            q.get("stem").and_then(Value::as_str).ok_or("question.stem missing")?,
            q.get("choices").ok_or("question.choices missing")?,
        ),
        Some(Value::String(q)) => (q.as_str(), v.get("choices").ok_or("choices missing")?),
        _ => return Err("question missing".into()),
    };
    let (texts, labels): (Vec<String>, Vec<String>) = match choices_v {
        Value::Array(items) => items
            .iter()
            .map(|c| {
                Some((
                    c.get("text")?.as_str()?.to_owned(),
                    label_string(c.get("label")?)?,
                ))
            })
            .collect::<Option<Vec<_>>>()
            .ok_or("choices entries need text and label")?
            .into_iter()
            .unzip(),
        Value::Object(_) => {
            let texts = string_list(choices_v.get("text")).ok_or("choices.text missing")?;
            let labels: Vec<String> = choices_v
                .get("label")
                .and_then(Value::as_array)
                .ok_or("choices.label missing")?
                .iter()
                .map(label_string)
                .collect::<Option<_>>()
                .ok_or("choices.label entries must be strings")?;
            if texts.len() != labels.len() {
                return Err("choices.text and choices.label differ in length".into());
            }
            (texts, labels)
        }
        _ => return Err("choices has unexpected shape".into()),
    };
    let key = v.get("answerKey").and_then(label_string).ok_or("answerKey missing")?;
    let gold = labels
        .iter()
        .position(|l| *l == key)
        .ok_or_else(|| format!("answerKey {key:?} not among labels {labels:?}"))?;
    Ok(BenchmarkItem {
        task_id: TaskId::ArcChallenge,
        id: str_field(v, "id").map(str::to_owned).unwrap_or_else(|| r.index.to_string()),
        question: question.to_owned(),
        choices: texts,
        gold: Gold::Index(gold),
        category: String::new(),
    })
}

/// Splits a target set into (true, false) answers.
fn truthfulqa_targets(t: &Value) -> Result<(Vec<String>, Vec<String>, Vec<String>), String> {
    let pairs: Vec<(String, bool)> = match t {
        Value::Object(o) if o.contains_key("choices") => {
            let choices = string_list(o.get("choices")).ok_or("targets.choices missing")?;
            let labels: Vec<i64> = o
                .get("labels")
                .and_then(Value::as_array)
                .ok_or("targets.labels missing")?
                .iter()
                .map(Value::as_i64)
                .collect::<Option<_>>()
                .ok_or("targets.labels must be integers")?;
            if choices.len() != labels.len() {
                return Err("targets.choices and targets.labels differ in length".into());
            }
            choices.into_iter().zip(labels.into_iter().map(|l| l == 1)).collect()
        }
        Value::Object(o) => o
            .iter()
            .map(|(k, v)| v.as_f64().map(|s| (k.clone(), s == 1.0)))
            .collect::<Option<_>>()
            .ok_or("target scores must be numbers")?,
        _ => return Err("targets have unexpected shape".into()),
    };
    let all = pairs.iter().map(|p| p.0.clone()).collect();
    let (t, f): (Vec<_>, Vec<_>) = pairs.into_iter().partition(|p| p.1);
    Ok((all, t.into_iter().map(|p| p.0).collect(), f.into_iter().map(|p| p.0).collect()))
}

fn parse_truthfulqa(r: &RawRecord) -> Result<BenchmarkItem, String> {
    let v = &r.value;
    let question = str_field(v, "question").ok_or("question missing")?;
    let (choices, true_answers, false_answers) = if let Some(t) = v.get("mc2_targets") {
        truthfulqa_targets(t)?
    } else {
        let t = string_list(v.get("correct_answers")).ok_or("mc2_targets or correct_answers missing")?;
        let f = string_list(v.get("incorrect_answers")).ok_or("incorrect_answers missing")?;
        (t.iter().chain(&f).cloned().collect(), t, f)
    };
    let item = BenchmarkItem {
        task_id: TaskId::TruthfulqaMc2,
        id: r.index.to_string(),
        question: question.to_owned(),
        choices,
        gold: Gold::TrueFalse {
            true_answers,
            false_answers,
        },
        category: str_field(v, "category").unwrap_or_default().to_owned(),
    };
    item.validate()?;
    Ok(item)
}

/// Category from the first path component naming a BBQ category.
fn bbq_category(file: &Path) -> Option<&'static str> {
    file.components().rev().find_map(|c| {
        let name = c.as_os_str().to_str()?;
        BBQ_CATEGORIES
            .iter()
            .copied()
            .filter(|cat| name.starts_with(cat))
            .max_by_key(|cat| cat.len())
    })
}

fn parse_bbq(r: &RawRecord, category: &str) -> Result<BenchmarkItem, String> {
    let v = &r.value;
    let (question, choices, scores): (String, Vec<String>, Vec<f64>) =
        if let Some(ts) = v.get("target_scores").and_then(Value::as_object) {
            let question = str_field(v, "input").ok_or("input missing")?;
            let scores = ts
                .values()
                .map(Value::as_f64)
                .collect::<Option<_>>()
                .ok_or("target_scores must be numbers")?;
            (question.to_owned(), ts.keys().cloned().collect(), scores)
        } else {
            let question = str_field(v, "inputs").ok_or("input or inputs missing")?;
            let choices = string_list(v.get("multiple_choice_targets")).ok_or("multiple_choice_targets missing")?;
            let scores = v
                .get("multiple_choice_scores")
                .and_then(Value::as_array)
                .ok_or("multiple_choice_scores missing")?
                .iter()
                .map(Value::as_f64)
                .collect::<Option<_>>()
                .ok_or("multiple_choice_scores must be numbers")?;
            (question.to_owned(), choices, scores)
        };
    if choices.len() != scores.len() {
        return Err("choices and scores differ in length".into());
    }
    let golds: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] == 1.0).collect();
    let [gold] = golds[..] else {
        return Err(format!("expected exactly one correct target, found {}", golds.len()));
    };
    Ok(BenchmarkItem {
        task_id: TaskId::BbqLiteJson,
        id: format!("{category}/{}", r.index),
        question,
        choices,
        gold: Gold::Index(gold),
        category: category.to_owned(),
    })
}

/// Loads and validates a benchmark from a file or a directory of task files.
pub fn load_task(task: TaskId, path: &Path) -> Result<Vec<BenchmarkItem>, EvalError> {
    let from_dir = path.is_dir();
    let mut files = task_files(path)?;
    if task == TaskId::BbqLiteJson && from_dir {
        files.retain(|f| bbq_category(f).is_some());
    }
    let mut items = Vec::new();
    for file in &files {
        let category = match task {
            TaskId::BbqLiteJson => Some(bbq_category(file).unwrap_or_else(|| {
                file.file_stem().and_then(|s| s.to_str()).unwrap_or("unknown")
            })),
            _ => None,
        };
        for r in read_records(file)? {
            let parsed = match task {
                TaskId::ArcChallenge => parse_arc(&r),
                TaskId::TruthfulqaMc2 => parse_truthfulqa(&r),
                TaskId::BbqLiteJson => parse_bbq(&r, category.unwrap_or_default()),
            }
            .and_then(|item| item.validate().map(|_| item));
            items.push(parsed.map_err(|reason| malformed(&r.file, r.index, reason))?);
        }
    }
    if items.is_empty() {
        return Err(EvalError::Input(format!("no {task} items found under {}", path.display())));
    }
    log::info!("loaded {} {task} items from {} file(s)", items.len(), files.len());
    Ok(items)
}
