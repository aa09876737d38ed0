use promptlab_core::labeldesc::{build_fixture, fixture_datasets, Provenance};
use serde::Serialize;

use crate::error::CliError;
use crate::runtime::{write_jsonl, Context};

#[derive(Debug, Serialize)]
struct Row<'a> {
    id: &'a str,
    text: &'a str,
    label: &'a str,
    provenance: Provenance,
}

pub fn run(ctx: &Context, dataset: Option<&str>) -> Result<String, CliError> {
    let cfg = &ctx.cfg;
    let ds = dataset
        .or(cfg.dataset.as_deref())
        .or(cfg.task.as_deref())
        .ok_or_else(|| CliError::config("labeldesc-build needs --dataset, \"dataset\" or \"task\""))?;
    if !fixture_datasets().contains(&ds) {
        return Err(CliError::config(format!(
            "no LabelDesc recipes for {ds:?}; known: {}",
            fixture_datasets().join(", ")
        )));
    }
    let set = build_fixture(ds).map_err(CliError::config)?;
    let rows: Vec<Row> = set
        .examples
        .iter()
        .map(|e| Row {
            id: &e.example.id,
            text: &e.example.text,
            label: e.example.gold_label.as_deref().unwrap_or_default(),
            provenance: e.provenance,
        })
        .collect();
    let path = ctx.out_dir()?.join(format!("labeldesc-{ds}.jsonl"));
    write_jsonl(&path, &rows)?;
    Ok(format!("labeldesc-build: {ds}: {} examples over {} labels -> {}", rows.len(), set.label_counts().len(), path.display()))
}
