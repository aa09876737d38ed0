//! Domain types shared by every module, plus JSONL dataset parsing.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Blank marker inside cloze contexts.
pub const BLANK: &str = "____";

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("label space must not be empty")]
    EmptyLabelSpace,
    #[error("duplicate label id {0:?}")]
    DuplicateLabel(String),
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("score vector has {got} entries, label space has {expected}")]
    ScoreLength { expected: usize, got: usize },
    #[error("score vector contains a non-finite value at position {0}")]
    NonFiniteScore(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Label {
    pub id: String,
    pub display_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verbalizer: Option<String>,
}

/// Ordered, non-empty label set. Its order is the canonical alignment for
/// every [`ScoreVector`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSpace {
    labels: Vec<Label>,
    index: HashMap<String, usize>,
}

impl LabelSpace {
    pub fn new(labels: Vec<Label>) -> Result<Self, ModelError> {
        if labels.is_empty() {
            return Err(ModelError::EmptyLabelSpace);
        }
        let mut index = HashMap::with_capacity(labels.len());
        for (i, label) in labels.iter().enumerate() {
            if index.insert(label.id.clone(), i).is_some() {
                return Err(ModelError::DuplicateLabel(label.id.clone()));
            }
        }
        Ok(Self { labels, index })
    }

    /// Label space whose display names equal the ids.
    pub fn from_ids<S: AsRef<str>>(ids: &[S]) -> Result<Self, ModelError> {
        Self::new(
            ids.iter()
                .map(|id| Label {
                    id: id.as_ref().to_string(),
                    display_name: id.as_ref().to_string(),
                    verbalizer: None,
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn get(&self, index: usize) -> Option<&Label> {
        self.labels.get(index)
    }

    pub fn id(&self, index: usize) -> &str {
        &self.labels[index].id
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn require(&self, id: &str) -> Result<usize, ModelError> {
        self.index_of(id).ok_or_else(|| ModelError::UnknownLabel(id.to_string()))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.labels.iter().map(|l| l.id.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextExample {
    pub id: String,
    pub text: String,
    #[serde(rename = "label")]
    pub gold_label: Option<String>,
}

/// A pool example as it appears in a retrieved list, optionally annotated
/// with the zero-shot prediction and scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demonstration {
    pub example: TextExample,
    pub gold_label: String,
    pub retrieval_rank: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zero_shot_prediction: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zero_shot_scores: Option<ScoreVector>,
}

impl Demonstration {
    /// Unannotated demonstration built from a labelled pool example.
    pub fn from_example(example: TextExample, retrieval_rank: usize) -> Option<Self> {
        let gold_label = example.gold_label.clone()?;
        Some(Self {
            example,
            gold_label,
            retrieval_rank,
            zero_shot_prediction: None,
            zero_shot_scores: None,
        })
    }
}

/// Per-label log-scores aligned with a [`LabelSpace`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScoreVector(Vec<f64>);

impl ScoreVector {
    pub fn new(scores: Vec<f64>) -> Result<Self, ModelError> {
        if let Some(pos) = scores.iter().position(|s| !s.is_finite()) {
            return Err(ModelError::NonFiniteScore(pos));
        }
        Ok(Self(scores))
    }

    pub fn aligned(scores: Vec<f64>, space: &LabelSpace) -> Result<Self, ModelError> {
        if scores.len() != space.len() {
            return Err(ModelError::ScoreLength { expected: space.len(), got: scores.len() });
        }
        Self::new(scores)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the maximum score; ties go to the lower index.
    pub fn argmax(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, &s) in self.0.iter().enumerate() {
            match best {
                Some(b) if self.0[b] >= s => {}
                _ => best = Some(i),
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordForm {
    pub headword: String,
    pub inflected: String,
}

/// One distractor candidate for a cloze question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClozeInstance {
    pub id: String,
    pub context: String,
    #[serde(default)]
    pub long_context: Option<String>,
    pub correct: WordForm,
    pub distractor: WordForm,
    pub label: bool,
}

impl ClozeInstance {
    /// Key shared by all candidates of the same question (same context and
    /// correct answer).
    pub fn question_key(&self) -> String {
        let mut h = crate::hash::Fnv1a64::new();
        h.update(self.context.as_bytes()).update(&[0]).update(self.correct.inflected.as_bytes());
        crate::hash::hex64(h.finish())
    }
}

/// Strips leading/trailing whitespace and replaces non-breaking spaces with
/// ordinary spaces. Interior text is left as is.
pub fn normalize_surface(raw: &str) -> String {
    raw.replace('\u{00A0}', " ").trim().to_string()
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: unknown label {label:?}")]
    UnknownLabel { line: usize, label: String },
    #[error("line {line}: duplicate id {id:?}")]
    DuplicateId { line: usize, id: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schema {
    Classification,
    Cloze,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    Classification(Vec<TextExample>),
    Cloze(Vec<ClozeInstance>),
}

impl Dataset {
    pub fn len(&self) -> usize {
        match self {
            Dataset::Classification(v) => v.len(),
            Dataset::Cloze(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Parses a JSONL dataset. Classification records are checked against
/// `space` when one is given.
pub fn parse_dataset(
    path: &Path,
    schema: Schema,
    space: Option<&LabelSpace>,
) -> Result<Dataset, DatasetError> {
    let raw = fs::read_to_string(path)
        .map_err(|source| DatasetError::Io { path: path.display().to_string(), source })?;
    match schema {
        Schema::Classification => parse_classification_str(&raw, space).map(Dataset::Classification),
        Schema::Cloze => parse_cloze_str(&raw).map(Dataset::Cloze),
    }
}

pub fn parse_classification(path: &Path, space: Option<&LabelSpace>) -> Result<Vec<TextExample>, DatasetError> {
    match parse_dataset(path, Schema::Classification, space)? {
        Dataset::Classification(v) => Ok(v),
        Dataset::Cloze(_) => unreachable!(),
    }
}

pub fn parse_cloze(path: &Path) -> Result<Vec<ClozeInstance>, DatasetError> {
    match parse_dataset(path, Schema::Cloze, None)? {
        Dataset::Cloze(v) => Ok(v),
        Dataset::Classification(_) => unreachable!(),
    }
}

fn records<'a>(raw: &'a str) -> impl Iterator<Item = (usize, &'a str)> {
    raw.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassificationRecord {
    id: String,
    text: String,
    #[serde(default)]
    label: Option<String>,
}

pub fn parse_classification_str(raw: &str, space: Option<&LabelSpace>) -> Result<Vec<TextExample>, DatasetError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (line, text) in records(raw) {
        let rec: ClassificationRecord = serde_json::from_str(text)
            .map_err(|e| DatasetError::Malformed { line, message: e.to_string() })?;
        if let (Some(space), Some(label)) = (space, rec.label.as_deref()) {
            if !space.contains(label) {
                return Err(DatasetError::UnknownLabel { line, label: label.to_string() });
            }
        }
        if !seen.insert(rec.id.clone()) {
            return Err(DatasetError::DuplicateId { line, id: rec.id });
        }
        out.push(TextExample { id: rec.id, text: rec.text, gold_label: rec.label });
    }
    Ok(out)
}

pub fn parse_cloze_str(raw: &str) -> Result<Vec<ClozeInstance>, DatasetError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (line, text) in records(raw) {
        let mut rec: ClozeInstance = serde_json::from_str(text)
            .map_err(|e| DatasetError::Malformed { line, message: e.to_string() })?;
        let blanks = rec.context.matches(BLANK).count();
        if blanks != 1 {
            return Err(DatasetError::Malformed {
                line,
                message: format!("context must contain exactly one {BLANK:?} marker, found {blanks}"),
            });
        }
        for form in [&mut rec.correct, &mut rec.distractor] {
            form.headword = normalize_surface(&form.headword);
            form.inflected = normalize_surface(&form.inflected);
            if form.headword.is_empty() || form.inflected.is_empty() {
                return Err(DatasetError::Malformed { line, message: "empty word form".into() });
            }
        }
        if !seen.insert(rec.id.clone()) {
            return Err(DatasetError::DuplicateId { line, id: rec.id });
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_classification_jsonl<W: Write>(mut w: W, examples: &[TextExample]) -> io::Result<()> {
    for ex in examples {
        serde_json::to_writer(&mut w, ex)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_cloze_jsonl<W: Write>(mut w: W, instances: &[ClozeInstance]) -> io::Result<()> {
    for inst in instances {
        serde_json::to_writer(&mut w, inst)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn agnews() -> LabelSpace {
        LabelSpace::from_ids(&["World", "Sports", "Business", "Sci/Tech"]).unwrap()
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_surface("  beer "), "beer");
        assert_eq!(normalize_surface("South\u{00A0}Pole"), "South Pole");
        assert_eq!(normalize_surface("come ed"), "come ed");
    }

    #[test]
    fn label_space_rejects_duplicates_and_empty() {
        assert!(matches!(LabelSpace::from_ids::<&str>(&[]), Err(ModelError::EmptyLabelSpace)));
        assert!(matches!(LabelSpace::from_ids(&["a", "a"]), Err(ModelError::DuplicateLabel(_))));
    }

    #[test]
    fn score_vector_validation() {
        let space = agnews();
        assert!(ScoreVector::aligned(vec![0.0; 3], &space).is_err());
        assert!(ScoreVector::new(vec![0.0, f64::NAN]).is_err());
        let sv = ScoreVector::new(vec![-1.0, -0.2, -0.2]).unwrap();
        assert_eq!(sv.argmax(), Some(1));
    }

    #[test]
    fn parses_valid_classification_lines() {
        let raw = r#"{"id":"1","text":"a","label":"World"}
{"id":"2","text":"b","label":"Sports"}
{"id":"3","text":"c","label":null}
"#;
        let out = parse_classification_str(raw, Some(&agnews())).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(out[2].gold_label, None);
    }

    #[test]
    fn missing_text_reports_line() {
        let raw = "{\"id\":\"1\",\"text\":\"a\",\"label\":\"World\"}\n{\"id\":\"2\",\"label\":\"World\"}\n";
        match parse_classification_str(raw, Some(&agnews())) {
            Err(DatasetError::Malformed { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_label_is_named() {
        let raw = r#"{"id":"1","text":"a","label":"Sportz"}"#;
        match parse_classification_str(raw, Some(&agnews())) {
            Err(DatasetError::UnknownLabel { label, .. }) => assert_eq!(label, "Sportz"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cloze_normalizes_forms_and_checks_blank() {
        let raw = r#"{"id":"q1-1","context":"The bank will ____ its customers.","long_context":null,"correct":{"headword":"notify","inflected":"notify"},"distractor":{"headword":" South Pole ","inflected":"South Pole"},"label":false}"#;
        let out = parse_cloze_str(raw).unwrap();
        assert_eq!(out[0].distractor.headword, "South Pole");
        let bad = raw.replace("____", "");
        assert!(matches!(parse_cloze_str(&bad), Err(DatasetError::Malformed { line: 1, .. })));
    }

    #[test]
    fn parse_dataset_reads_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        fs::write(&path, "{\"id\":\"1\",\"text\":\"a\",\"label\":\"World\"}\n").unwrap();
        let ds = parse_dataset(&path, Schema::Classification, Some(&agnews())).unwrap();
        assert_eq!(ds.len(), 1);
        assert!(matches!(
            parse_dataset(&dir.path().join("missing"), Schema::Cloze, None),
            Err(DatasetError::Io { .. })
        ));
    }

    fn arb_text() -> impl Strategy<Value = String> {
        "[ -~\u{00e9}\u{4e2d}]{0,20}"
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(s in "[ \u{00A0}a-z\t]{0,20}") {
            let once = normalize_surface(&s);
            prop_assert_eq!(normalize_surface(&once), once);
        }

        #[test]
        fn classification_roundtrip(texts in proptest::collection::vec((arb_text(), proptest::option::of(0usize..4)), 0..10)) {
            let space = agnews();
            let examples: Vec<TextExample> = texts.iter().enumerate().map(|(i, (t, l))| TextExample {
                id: format!("ex{i}"),
                text: t.clone(),
                gold_label: l.map(|l| space.id(l).to_string()),
            }).collect();
            let mut buf = Vec::new();
            write_classification_jsonl(&mut buf, &examples).unwrap();
            let back = parse_classification_str(std::str::from_utf8(&buf).unwrap(), Some(&space)).unwrap();
            prop_assert_eq!(back, examples);
        }
    }
}
