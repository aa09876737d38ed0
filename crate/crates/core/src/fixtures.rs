//! Fixture tables compiled into the crate: patterns, verbalizers, ICL label
//! spaces, task definitions and LabelDesc recipes.
//!
//! Task definitions are stored with whitespace collapsed to single spaces.

use crate::hash::{fnv1a64, hex64};
use crate::model::{Label, LabelSpace, ModelError};

pub const PATTERNS_TSV: &str = include_str!("../fixtures/patterns.tsv");
pub const VERBALIZERS_TSV: &str = include_str!("../fixtures/verbalizers.tsv");
pub const ICL_LABEL_SPACES_TSV: &str = include_str!("../fixtures/icl_label_spaces.tsv");

const TASK_DEFS: &[(&str, &str)] = &[
    ("edos", include_str!("../fixtures/task_defs/edos.txt")),
    ("sst", include_str!("../fixtures/task_defs/sst.txt")),
    ("goemotions", include_str!("../fixtures/task_defs/goemotions.txt")),
];

const LABELDESC_RECIPES: &[(&str, &str)] = &[
    ("20ng", include_str!("../fixtures/labeldesc/20ng.jsonl")),
    ("agnews", include_str!("../fixtures/labeldesc/agnews.jsonl")),
    ("yahoo", include_str!("../fixtures/labeldesc/yahoo.jsonl")),
    ("dbpedia", include_str!("../fixtures/labeldesc/dbpedia.jsonl")),
    ("sentiment5", include_str!("../fixtures/labeldesc/sentiment5.jsonl")),
];

fn tsv_rows(raw: &str) -> impl Iterator<Item = Vec<&str>> {
    raw.lines().skip(1).filter(|l| !l.is_empty()).map(|l| l.split('\t').collect())
}

pub fn task_definition(task: &str) -> Option<&'static str> {
    TASK_DEFS.iter().find(|(t, _)| *t == task).map(|(_, d)| d.trim_end_matches('\n'))
}

pub fn icl_tasks() -> impl Iterator<Item = &'static str> {
    TASK_DEFS.iter().map(|(t, _)| *t)
}

/// Label space of an ICL task (`edos`, `sst`, `goemotions`).
pub fn icl_label_space(task: &str) -> Option<Result<LabelSpace, ModelError>> {
    let labels: Vec<Label> = tsv_rows(ICL_LABEL_SPACES_TSV)
        .filter(|r| r[0] == task)
        .map(|r| Label { id: r[1].to_string(), display_name: r[2].to_string(), verbalizer: None })
        .collect();
    (!labels.is_empty()).then(|| LabelSpace::new(labels))
}

/// `(label, token)` rows for a mask-fill dataset, in table order.
pub fn verbalizer_rows(dataset: &str) -> Vec<(String, String)> {
    tsv_rows(VERBALIZERS_TSV)
        .filter(|r| r[0] == dataset)
        .map(|r| (r[1].to_string(), r[2].to_string()))
        .collect()
}

pub fn verbalizer_datasets() -> Vec<&'static str> {
    let mut out: Vec<&str> = Vec::new();
    for r in tsv_rows(VERBALIZERS_TSV) {
        if !out.contains(&r[0]) {
            out.push(r[0]);
        }
    }
    out
}

/// Label space of a mask-fill dataset with verbalizer slots filled.
pub fn dataset_label_space(dataset: &str) -> Option<Result<LabelSpace, ModelError>> {
    let rows = verbalizer_rows(dataset);
    (!rows.is_empty()).then(|| {
        LabelSpace::new(
            rows.into_iter()
                .map(|(id, tok)| Label { display_name: id.clone(), id, verbalizer: Some(tok) })
                .collect(),
        )
    })
}

/// Any fixture label space: ICL tasks first, then mask-fill datasets.
pub fn label_space(name: &str) -> Option<Result<LabelSpace, ModelError>> {
    icl_label_space(name).or_else(|| dataset_label_space(name))
}

pub fn labeldesc_recipes(dataset: &str) -> Option<&'static str> {
    LABELDESC_RECIPES.iter().find(|(d, _)| *d == dataset).map(|(_, r)| *r)
}

/// Digest of every fixture file, for run manifests.
pub fn fixture_digests() -> Vec<(String, String)> {
    let mut out = vec![
        ("patterns.tsv".to_string(), hex64(fnv1a64(PATTERNS_TSV.as_bytes()))),
        ("verbalizers.tsv".to_string(), hex64(fnv1a64(VERBALIZERS_TSV.as_bytes()))),
        ("icl_label_spaces.tsv".to_string(), hex64(fnv1a64(ICL_LABEL_SPACES_TSV.as_bytes()))),
    ];
    for (t, d) in TASK_DEFS {
        out.push((format!("task_defs/{t}.txt"), hex64(fnv1a64(d.as_bytes()))));
    }
    for (n, r) in LABELDESC_RECIPES {
        out.push((format!("labeldesc/{n}.jsonl"), hex64(fnv1a64(r.as_bytes()))));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn icl_spaces_have_expected_sizes() {
        assert_eq!(icl_label_space("edos").unwrap().unwrap().len(), 4);
        assert_eq!(icl_label_space("sst").unwrap().unwrap().len(), 5);
        assert_eq!(icl_label_space("goemotions").unwrap().unwrap().len(), 27);
        assert!(icl_label_space("nope").is_none());
    }

    #[test]
    fn task_definitions_name_every_display_label() {
        for task in icl_tasks() {
            let def = task_definition(task).unwrap();
            assert!(!def.contains("  ") && !def.ends_with('\n'));
            for label in icl_label_space(task).unwrap().unwrap().labels() {
                assert!(def.contains(&label.display_name), "{task}: {}", label.display_name);
            }
        }
    }

    #[test]
    fn dataset_spaces_carry_verbalizers() {
        let space = dataset_label_space("agnews").unwrap().unwrap();
        assert_eq!(space.ids().collect::<Vec<_>>(), ["World", "Sports", "Business", "Sci/Tech"]);
        assert_eq!(space.get(3).unwrap().verbalizer.as_deref(), Some("Tech"));
        assert_eq!(dataset_label_space("dbpedia").unwrap().unwrap().len(), 14);
        assert_eq!(dataset_label_space("yahoo").unwrap().unwrap().len(), 10);
    }
}
