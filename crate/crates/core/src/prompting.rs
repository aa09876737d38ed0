//! Pattern rendering, verbalizers, zero-shot mask-fill classification and
//! in-context prompt assembly.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fixtures;
use crate::gateway::{Gateway, GatewayError, MaskFillRequest, ScoreRequest, MASK};
use crate::model::{Demonstration, LabelSpace, ModelError, ScoreVector, TextExample};

/// Text slot in pattern templates.
pub const TEXT_SLOT: &str = "{x}";

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("pattern {id}: template must contain {TEXT_SLOT} and {MASK} exactly once")]
    InvalidTemplate { id: String },
    #[error("unknown pattern {0:?}")]
    UnknownPattern(String),
    #[error("unknown pattern kind {0:?}")]
    UnknownKind(String),
    #[error("verbalizer has no token for label {0:?}")]
    MissingVerbalizer(String),
    #[error("verbalizer token {0:?} is used for more than one label")]
    DuplicateToken(String),
    #[error("verbalizer maps label {0:?} which is not in the label space")]
    ExtraLabel(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PatternKind {
    Qa,
    Prompt,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pattern {
    /// Pattern table the pattern belongs to (`agnews`, `sentiment`).
    pub family: String,
    pub id: String,
    pub kind: PatternKind,
    pub template: String,
}

impl Pattern {
    pub fn new(family: &str, id: &str, kind: PatternKind, template: &str) -> Result<Self, PromptError> {
        if template.matches(TEXT_SLOT).count() != 1 || template.matches(MASK).count() != 1 {
            return Err(PromptError::InvalidTemplate { id: id.to_string() });
        }
        Ok(Self { family: family.into(), id: id.into(), kind, template: template.into() })
    }

    /// `family/id`, e.g. `agnews/prompt-9`.
    pub fn qualified_id(&self) -> String {
        format!("{}/{}", self.family, self.id)
    }
}

/// Every pattern in the shipped table.
pub fn fixture_patterns() -> Result<Vec<Pattern>, PromptError> {
    fixtures::PATTERNS_TSV
        .lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|line| {
            let cols: Vec<&str> = line.splitn(4, '\t').collect();
            let kind = match cols[2] {
                "qa" => PatternKind::Qa,
                "prompt" => PatternKind::Prompt,
                other => return Err(PromptError::UnknownKind(other.into())),
            };
            Pattern::new(cols[0], cols[1], kind, cols[3])
        })
        .collect()
}

/// Looks up `family/id`.
pub fn find_pattern(qualified_id: &str) -> Result<Pattern, PromptError> {
    fixture_patterns()?
        .into_iter()
        .find(|p| p.qualified_id() == qualified_id)
        .ok_or_else(|| PromptError::UnknownPattern(qualified_id.into()))
}

/// Substitutes `x` into the text slot. Nothing else is rewritten.
pub fn render_pattern(p: &Pattern, x: &str) -> String {
    let (before, after) = p.template.split_once(TEXT_SLOT).expect("validated template");
    let mut out = String::with_capacity(p.template.len() + x.len());
    out.push_str(before);
    out.push_str(x);
    out.push_str(after);
    out
}

/// Single-token verbalizers aligned with a label space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verbalizer {
    tokens: Vec<String>,
}

impl Verbalizer {
    pub fn new(mapping: &[(String, String)], space: &LabelSpace) -> Result<Self, PromptError> {
        for (label, _) in mapping {
            if !space.contains(label) {
                return Err(PromptError::ExtraLabel(label.clone()));
            }
        }
        let mut tokens = Vec::with_capacity(space.len());
        for id in space.ids() {
            let tok = mapping
                .iter()
                .find(|(l, _)| l == id)
                .map(|(_, t)| t.clone())
                .ok_or_else(|| PromptError::MissingVerbalizer(id.into()))?;
            if tokens.contains(&tok) {
                return Err(PromptError::DuplicateToken(tok));
            }
            tokens.push(tok);
        }
        Ok(Self { tokens })
    }

    /// Verbalizer from the label space's own verbalizer slots.
    pub fn from_space(space: &LabelSpace) -> Result<Self, PromptError> {
        let mapping: Vec<(String, String)> = space
            .labels()
            .iter()
            .filter_map(|l| l.verbalizer.clone().map(|v| (l.id.clone(), v)))
            .collect();
        Self::new(&mapping, space)
    }

    pub fn fixture(dataset: &str, space: &LabelSpace) -> Result<Self, PromptError> {
        Self::new(&fixtures::verbalizer_rows(dataset), space)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: String,
    pub index: usize,
    pub scores: ScoreVector,
}

impl Prediction {
    pub fn from_scores(scores: Vec<f64>, space: &LabelSpace) -> Result<Self, ModelError> {
        let scores = ScoreVector::aligned(scores, space)?;
        let index = scores.argmax().expect("non-empty label space");
        Ok(Self { label: space.id(index).to_string(), index, scores })
    }
}

/// Mask-fill classification restricted to the verbalizer tokens.
pub fn zero_shot_classify(
    x: &TextExample,
    p: &Pattern,
    v: &Verbalizer,
    space: &LabelSpace,
    gateway: &Gateway,
) -> Result<Prediction, PromptError> {
    let req = MaskFillRequest { text_with_mask: render_pattern(p, &x.text), candidates: v.tokens().to_vec() };
    let scores = gateway.mask_fill_scores(&req)?;
    Ok(Prediction::from_scores(scores, space)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptBundle {
    pub task_definition: String,
    pub demonstrations: Vec<Demonstration>,
    pub test_text: String,
}

impl PromptBundle {
    pub fn zero_shot(task_definition: &str, test_text: &str) -> Self {
        Self { task_definition: task_definition.into(), demonstrations: Vec::new(), test_text: test_text.into() }
    }
}

/// Renders the instruction prompt. Demonstration answers use the label's
/// display name from `space` (falling back to the id).
pub fn assemble_icl_prompt(b: &PromptBundle, space: &LabelSpace) -> String {
    let mut out = String::new();
    out.push_str(&b.task_definition);
    out.push_str("\n\n");
    if !b.demonstrations.is_empty() {
        out.push_str("Some examples are:\n");
        for d in &b.demonstrations {
            let answer = space
                .index_of(&d.gold_label)
                .map(|i| space.labels()[i].display_name.as_str())
                .unwrap_or(&d.gold_label);
            out.push_str("input: ");
            out.push_str(&d.example.text);
            out.push_str("\nanswer: ");
            out.push_str(answer);
            out.push_str("\n\n");
        }
    }
    out.push_str("Thus given the following input:\ninput: ");
    out.push_str(&b.test_text);
    out.push_str("\nanswer:");
    out
}

/// Scores every label display name as a completion of the assembled prompt.
pub fn classify_with_prompt(b: &PromptBundle, space: &LabelSpace, gateway: &Gateway) -> Result<Prediction, PromptError> {
    let req = ScoreRequest {
        prompt: assemble_icl_prompt(b, space),
        candidates: space.labels().iter().map(|l| l.display_name.clone()).collect(),
    };
    let scores = gateway.score_completions(&req)?;
    Ok(Prediction::from_scores(scores, space)?)
}
