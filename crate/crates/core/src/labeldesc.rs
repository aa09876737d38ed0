//! LabelDesc data: tiny balanced sets of label terms, definitions and
//! template sentences used instead of labelled task text.
//!
//! Recipe files hold one JSON object per label. Topic recipes carry `terms`
//! (the label term first, then related terms), `dict_definitions` and
//! `wiki_leads`; a label yields one example per entry, six in total (four
//! terms plus one of each definition, or two of each for two-keyword labels).
//! Sentiment recipes carry exactly five `sentiment_terms`, each used bare and
//! in the four sentence templates.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fixtures;
use crate::model::TextExample;

/// Sentence templates for sentiment labels. `{t}` is the term; `{A}` resolves
/// to "A" or "An".
pub const SENTIMENT_TEMPLATES: [&str; 4] = ["It was {t}.", "{A} {t} experience.", "Just {t}.", "Overall, it was {t}."];

pub const TOPIC_EXAMPLES_PER_LABEL: usize = 6;
pub const SENTIMENT_TERMS_PER_LABEL: usize = 5;

pub const FIVE_WAY_SENTIMENT: [&str; 5] = ["Very Negative", "Negative", "Neutral", "Positive", "Very Positive"];

#[derive(Debug, Error)]
pub enum RecipeError {
    #[error("recipe for {label:?}: {message}")]
    Invalid { label: String, message: String },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("label {0:?} is not a five-way sentiment label")]
    UnexpectedLabel(String),
    #[error("unknown Yahoo label {0:?}")]
    UnknownSourceLabel(String),
    #[error("no fixture recipes for {0:?}")]
    UnknownDataset(String),
    #[error("recipes produce unbalanced data: {0}")]
    Unbalanced(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelDescRecipe {
    pub label: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub terms: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dict_definitions: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub wiki_leads: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentiment_terms: Option<Vec<String>>,
}

impl LabelDescRecipe {
    pub fn is_sentiment(&self) -> bool {
        self.sentiment_terms.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Term,
    Dict,
    Wiki,
    Template,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelDescExample {
    pub example: TextExample,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LabelDescSet {
    pub examples: Vec<LabelDescExample>,
}

impl LabelDescSet {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// `(label, count)` in first-appearance order.
    pub fn label_counts(&self) -> Vec<(String, usize)> {
        let mut out: Vec<(String, usize)> = Vec::new();
        for ex in &self.examples {
            let label = ex.example.gold_label.as_deref().unwrap_or_default();
            match out.iter_mut().find(|(l, _)| l == label) {
                Some((_, c)) => *c += 1,
                None => out.push((label.to_string(), 1)),
            }
        }
        out
    }

    pub fn is_balanced(&self) -> bool {
        let counts = self.label_counts();
        counts.windows(2).all(|w| w[0].1 == w[1].1)
    }

    pub fn text_examples(&self) -> Vec<TextExample> {
        self.examples.iter().map(|e| e.example.clone()).collect()
    }
}

fn invalid(label: &str, message: impl Into<String>) -> RecipeError {
    RecipeError::Invalid { label: label.to_string(), message: message.into() }
}

fn example(label: &str, k: usize, text: &str, provenance: Provenance) -> LabelDescExample {
    LabelDescExample {
        example: TextExample { id: format!("{label}#{k}"), text: text.to_string(), gold_label: Some(label.to_string()) },
        provenance,
    }
}

/// Six examples: each term, then each dictionary definition, then each
/// Wikipedia lead sentence.
pub fn build_topic_labeldesc(recipe: &LabelDescRecipe) -> Result<Vec<LabelDescExample>, RecipeError> {
    let (t, d, w) = (recipe.terms.len(), recipe.dict_definitions.len(), recipe.wiki_leads.len());
    match (t, d, w) {
        (4, 1, 1) | (2, 2, 2) => {}
        (0, ..) => return Err(invalid(&recipe.label, "missing terms")),
        (_, 0, _) => return Err(invalid(&recipe.label, "missing dictionary definition")),
        (_, _, 0) => return Err(invalid(&recipe.label, "missing Wikipedia lead")),
        _ => {
            return Err(invalid(
                &recipe.label,
                format!("expected 4 terms + 1 + 1 definitions or 2 + 2 + 2, got {t} + {d} + {w}"),
            ))
        }
    }
    let entries = recipe
        .terms
        .iter()
        .map(|s| (s, Provenance::Term))
        .chain(recipe.dict_definitions.iter().map(|s| (s, Provenance::Dict)))
        .chain(recipe.wiki_leads.iter().map(|s| (s, Provenance::Wiki)));
    let mut out = Vec::with_capacity(TOPIC_EXAMPLES_PER_LABEL);
    for (k, (text, prov)) in entries.enumerate() {
        if text.trim().is_empty() {
            return Err(invalid(&recipe.label, "empty entry"));
        }
        out.push(example(&recipe.label, k, text, prov));
    }
    Ok(out)
}

/// "An" before a vowel-initial term, else "A".
pub fn indefinite_article(term: &str) -> &'static str {
    match term.chars().next().map(|c| c.to_ascii_lowercase()) {
        Some('a' | 'e' | 'i' | 'o' | 'u') => "An",
        _ => "A",
    }
}

pub fn fill_template(template: &str, term: &str) -> String {
    template.replace("{A}", indefinite_article(term)).replace("{t}", term)
}

/// 25 examples: the five bare terms, then each term in the four templates.
pub fn build_sentiment_labeldesc(recipe: &LabelDescRecipe) -> Result<Vec<LabelDescExample>, RecipeError> {
    let terms = recipe
        .sentiment_terms
        .as_ref()
        .ok_or_else(|| invalid(&recipe.label, "missing sentiment_terms"))?;
    if terms.len() != SENTIMENT_TERMS_PER_LABEL {
        return Err(invalid(&recipe.label, format!("expected 5 sentiment terms, got {}", terms.len())));
    }
    let mut out = Vec::with_capacity(25);
    for term in terms {
        out.push(example(&recipe.label, out.len(), term, Provenance::Term));
    }
    for term in terms {
        for tpl in SENTIMENT_TEMPLATES {
            out.push(example(&recipe.label, out.len(), &fill_template(tpl, term), Provenance::Template));
        }
    }
    Ok(out)
}

pub fn build_labeldesc(recipe: &LabelDescRecipe) -> Result<Vec<LabelDescExample>, RecipeError> {
    if recipe.is_sentiment() {
        build_sentiment_labeldesc(recipe)
    } else {
        build_topic_labeldesc(recipe)
    }
}

pub fn parse_recipes(raw: &str) -> Result<Vec<LabelDescRecipe>, RecipeError> {
    raw.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| RecipeError::Malformed { line: i + 1, message: e.to_string() }))
        .collect()
}

/// Builds every label's examples, in recipe order, and checks balance.
pub fn build_set(recipes: &[LabelDescRecipe]) -> Result<LabelDescSet, RecipeError> {
    let mut set = LabelDescSet::default();
    for r in recipes {
        set.examples.extend(build_labeldesc(r)?);
    }
    if !set.is_balanced() {
        return Err(RecipeError::Unbalanced(format!("{:?}", set.label_counts())));
    }
    Ok(set)
}

/// Fixture sets: `agnews`, `yahoo`, `dbpedia`, `20ng`, `sentiment5` and
/// `sentiment2` (the binary collapse of `sentiment5`).
pub fn build_fixture(dataset: &str) -> Result<LabelDescSet, RecipeError> {
    if dataset == "sentiment2" {
        return collapse_to_binary(&build_fixture("sentiment5")?);
    }
    let raw = fixtures::labeldesc_recipes(dataset).ok_or_else(|| RecipeError::UnknownDataset(dataset.into()))?;
    build_set(&parse_recipes(raw)?)
}

pub fn fixture_datasets() -> [&'static str; 6] {
    ["20ng", "agnews", "yahoo", "dbpedia", "sentiment5", "sentiment2"]
}

/// Merges the two positive and the two negative labels and drops neutral.
/// Texts and provenance are kept as is; ids are renumbered per label.
pub fn collapse_to_binary(five_way: &LabelDescSet) -> Result<LabelDescSet, RecipeError> {
    let mut counters: HashMap<&str, usize> = HashMap::new();
    let mut out = LabelDescSet::default();
    for ex in &five_way.examples {
        let label = ex.example.gold_label.as_deref().unwrap_or_default();
        let target = match label {
            "Very Positive" | "Positive" => "Positive",
            "Very Negative" | "Negative" => "Negative",
            "Neutral" => continue,
            other => return Err(RecipeError::UnexpectedLabel(other.into())),
        };
        let k = counters.entry(target).or_default();
        out.examples.push(LabelDescExample {
            example: TextExample {
                id: format!("{target}#{k}"),
                text: ex.example.text.clone(),
                gold_label: Some(target.to_string()),
            },
            provenance: ex.provenance,
        });
        *k += 1;
    }
    Ok(out)
}

/// Yahoo Answers label to its AGNews counterpart; `None` means the record is
/// dropped.
pub fn map_domain_labels(src_label: &str) -> Result<Option<&'static str>, RecipeError> {
    Ok(match src_label {
        "Politics & Government" | "Society & Culture" => Some("World"),
        "Sports" => Some("Sports"),
        "Business & Finance" => Some("Business"),
        "Science & Mathematics" | "Computers & Internet" => Some("Sci/Tech"),
        "Health" | "Education & Reference" | "Entertainment & Music" | "Family & Relationships" => None,
        other => return Err(RecipeError::UnknownSourceLabel(other.into())),
    })
}

/// Relabels Yahoo examples into the AGNews space, removing unmapped ones.
pub fn map_yahoo_to_agnews(examples: &[TextExample]) -> Result<Vec<TextExample>, RecipeError> {
    let mut out = Vec::new();
    for ex in examples {
        let Some(src) = ex.gold_label.as_deref() else { continue };
        if let Some(dst) = map_domain_labels(src)? {
            out.push(TextExample { gold_label: Some(dst.to_string()), ..ex.clone() });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(set: &LabelDescSet, label: &str) -> Vec<String> {
        set.examples
            .iter()
            .filter(|e| e.example.gold_label.as_deref() == Some(label))
            .map(|e| e.example.text.clone())
            .collect()
    }

    #[test]
    fn agnews_business_terms() {
        let set = build_fixture("agnews").unwrap();
        let business = texts(&set, "Business");
        assert_eq!(&business[..4], ["business", "finance", "money", "trade"]);
        assert_eq!(business[4], "the purchase and sale of goods in an attempt to make a profit.");
        assert!(business[5].starts_with("Business is the activity"));
    }

    #[test]
    fn fixture_sizes() {
        for (ds, n) in [("agnews", 24), ("20ng", 24), ("yahoo", 60), ("dbpedia", 84), ("sentiment5", 125), ("sentiment2", 100)] {
            let set = build_fixture(ds).unwrap();
            assert_eq!(set.len(), n, "{ds}");
            assert!(set.is_balanced(), "{ds}");
        }
    }

    #[test]
    fn world_recipe_is_kept_verbatim() {
        let set = build_fixture("agnews").unwrap();
        assert_eq!(texts(&set, "World")[4], "humankind; the human race; humanity");
    }

    #[test]
    fn sentiment_templates() {
        let set = build_fixture("sentiment5").unwrap();
        let vp = texts(&set, "Very Positive");
        assert!(vp.contains(&"It was great.".to_string()));
        let vn = texts(&set, "Very Negative");
        assert!(vn.contains(&"An awful experience.".to_string()));
        assert!(vn.contains(&"A terrible experience.".to_string()));
        assert!(vn.contains(&"Overall, it was dreadful.".to_string()));
        assert_eq!(vn.len(), 25);
    }

    #[test]
    fn article_rule() {
        assert_eq!(indefinite_article("awful"), "An");
        assert_eq!(indefinite_article("Outstanding"), "An");
        assert_eq!(indefinite_article("great"), "A");
        assert_eq!(fill_template("{A} {t} experience.", "excellent"), "An excellent experience.");
    }

    #[test]
    fn recipe_errors() {
        let mut r = LabelDescRecipe {
            label: "X".into(),
            terms: vec!["a".into(), "b".into(), "c".into(), "d".into()],
            dict_definitions: vec![],
            wiki_leads: vec!["w".into()],
            sentiment_terms: None,
        };
        assert!(build_topic_labeldesc(&r).is_err());
        r.dict_definitions.push("d".into());
        assert_eq!(build_topic_labeldesc(&r).unwrap().len(), 6);
        let s = LabelDescRecipe { sentiment_terms: Some(vec!["a".into(); 4]), ..r };
        assert!(build_sentiment_labeldesc(&s).is_err());
    }

    #[test]
    fn binary_collapse() {
        let five = build_fixture("sentiment5").unwrap();
        let two = collapse_to_binary(&five).unwrap();
        assert_eq!(two.label_counts(), vec![("Negative".to_string(), 50), ("Positive".to_string(), 50)]);
        let pos = texts(&two, "Positive");
        assert!(pos.contains(&"great".to_string()));
        assert!(!two.examples.iter().any(|e| e.example.text == "It was okay."));
        // Every output text exists in the input with a matching provenance tag.
        for ex in &two.examples {
            assert!(five.examples.iter().any(|f| f.example.text == ex.example.text && f.provenance == ex.provenance));
        }
        let bare: Vec<String> = two
            .examples
            .iter()
            .filter(|e| e.provenance == Provenance::Term && e.example.gold_label.as_deref() == Some("Negative"))
            .map(|e| e.example.text.clone())
            .collect();
        assert_eq!(
            bare,
            ["awful", "terrible", "horrendous", "horrible", "dreadful", "bad", "unpleasant", "unsatisfying", "lousy", "subpar"]
        );
    }

    #[test]
    fn collapse_rejects_foreign_labels() {
        let set = build_fixture("agnews").unwrap();
        assert!(matches!(collapse_to_binary(&set), Err(RecipeError::UnexpectedLabel(_))));
    }

    #[test]
    fn yahoo_mapping() {
        assert_eq!(map_domain_labels("Politics & Government").unwrap(), Some("World"));
        assert_eq!(map_domain_labels("Sports").unwrap(), Some("Sports"));
        assert_eq!(map_domain_labels("Entertainment & Music").unwrap(), None);
        assert!(map_domain_labels("Cooking").is_err());
        let space = fixtures::dataset_label_space("yahoo").unwrap().unwrap();
        let mapped: Vec<_> = space.ids().filter(|l| map_domain_labels(l).unwrap().is_some()).collect();
        assert_eq!(mapped.len(), 6);
    }
}
