//! Loading single-aspect source datasets into [`LabeledSentence`] lists.

use std::collections::BTreeMap;
use std::path::Path;

use mctg_core::rng::SeededRng;
use mctg_core::text::clean_text;
use mctg_core::{record_id, AspectRegistry, LabeledSentence, Provenance};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::{DatasetFormat, DatasetSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipEntry {
    /// 1-based data row (header excluded; blank JSONL lines not counted).
    pub row: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestOutput {
    pub records: Vec<LabeledSentence>,
    pub skipped: Vec<SkipEntry>,
    pub rows: usize,
}

/// One raw row: field name -> value as text.
type Row = BTreeMap<String, String>;

fn read_delimited(path: &Path, delimiter: u8) -> Result<Vec<Row>> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        rows.push(headers.iter().zip(record.iter()).map(|(h, v)| (h.to_string(), v.to_string())).collect());
    }
    Ok(rows)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        kind => Error::Parse { path: path.to_path_buf(), line, message: format!("{kind:?}") },
    }
}

fn read_jsonl(path: &Path) -> Result<Vec<Row>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let text = text.strip_prefix('\u{feff}').unwrap_or(&text);
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse = |message: String| Error::Parse { path: path.to_path_buf(), line: i + 1, message };
        let value: Value = serde_json::from_str(line).map_err(|e| parse(e.to_string()))?;
        let Value::Object(map) = value else {
            return Err(parse("expected a JSON object".into()));
        };
        let row = map
            .into_iter()
            .map(|(k, v)| {
                let s = match v {
                    Value::String(s) => s,
                    Value::Null => String::new(),
                    other => other.to_string(),
                };
                (k, s)
            })
            .collect();
        rows.push(row);
    }
    Ok(rows)
}

fn raw_label(spec: &DatasetSpec, row: &Row, index: usize) -> Result<String> {
    let err = |message: String| Error::Ingest { dataset: spec.name.clone(), row: index, message };
    let field = |name: &str| row.get(name).ok_or_else(|| err(format!("missing field `{name}`")));
    if let Some(name) = &spec.label_field {
        return Ok(field(name)?.trim().to_string());
    }
    let mut any = false;
    for name in &spec.label_fields {
        let raw = field(name)?.trim();
        let value: f64 = raw.parse().map_err(|_| err(format!("field `{name}` is not numeric: `{raw}`")))?;
        any |= value != 0.0;
    }
    Ok(if any { "1" } else { "0" }.to_string())
}

/// Loads one dataset. `path` is the resolved location of `spec.path`.
///
/// Every row maps to an original record unless its cleaned text is empty, in
/// which case it is listed in `skipped`. With a `sample_cap` below the number
/// of usable rows, a seeded sample without replacement is kept. Output is
/// sorted by id.
pub fn load_dataset(spec: &DatasetSpec, path: &Path, registry: &AspectRegistry, seed: u64) -> Result<IngestOutput> {
    let aspect = registry.require(&spec.aspect_id)?;
    let rows = match spec.format {
        DatasetFormat::Csv => read_delimited(path, b',')?,
        DatasetFormat::Tsv => read_delimited(path, b'\t')?,
        DatasetFormat::Jsonl => read_jsonl(path)?,
    };
    let mut records = Vec::with_capacity(rows.len());
    let mut skipped = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        let index = i + 1;
        let label = raw_label(spec, row, index)?;
        let label_index = *spec.label_mapping.get(&label).ok_or_else(|| Error::Ingest {
            dataset: spec.name.clone(),
            row: index,
            message: format!("label `{label}` is not in label_mapping"),
        })?;
        let attribute = aspect.attribute(label_index).ok_or_else(|| {
            Error::Config(format!("dataset `{}` maps `{label}` to unknown attribute {label_index}", spec.name))
        })?;
        let raw_text = row.get(&spec.text_field).ok_or_else(|| Error::Ingest {
            dataset: spec.name.clone(),
            row: index,
            message: format!("missing field `{}`", spec.text_field),
        })?;
        let text = clean_text(raw_text);
        if text.is_empty() {
            skipped.push(SkipEntry { row: index, reason: "empty text after cleaning".into() });
            continue;
        }
        let mut meta = BTreeMap::new();
        meta.insert("row".to_string(), index.to_string());
        records.push(LabeledSentence {
            id: record_id(&[&spec.name, &index.to_string()]),
            text,
            aspect_id: aspect.id.clone(),
            label_index,
            label_text: attribute.name.clone(),
            provenance: Provenance::Original,
            source_dataset: spec.name.clone(),
            meta,
        });
    }
    if let Some(cap) = spec.sample_cap {
        if cap < records.len() {
            let mut rng = SeededRng::derive(seed, &format!("ingest/{}", spec.name));
            let picked = rng.sample_indices(records.len(), cap);
            let mut all: Vec<Option<LabeledSentence>> = records.into_iter().map(Some).collect();
            records = picked.into_iter().filter_map(|i| all[i].take()).collect();
        }
    }
    records.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(IngestOutput { records, skipped, rows: rows.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use mctg_core::{AspectDef, AttributeDef};
    use std::io::Write;

    fn registry() -> AspectRegistry {
        let mk = |id: &str, names: &[&str]| AspectDef {
            id: id.into(),
            display_name: id.into(),
            description: None,
            attributes: names.iter().map(|n| AttributeDef { name: (*n).into(), aliases: vec![], description: None }).collect(),
            rewrite_target: false,
        };
        AspectRegistry::new(&[mk("sentiment", &["positive", "negative"]), mk("detox", &["non-toxic", "toxic"])]).unwrap()
    }

    fn spec(format: DatasetFormat, cap: Option<usize>) -> DatasetSpec {
        DatasetSpec {
            name: "toy".into(),
            path: "unused".into(),
            format,
            text_field: "review".into(),
            label_field: Some("sentiment".into()),
            label_fields: vec![],
            aspect_id: "sentiment".into(),
            label_mapping: [("pos".to_string(), 1), ("neg".to_string(), 2)].into_iter().collect(),
            sample_cap: cap,
        }
    }

    fn file(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn csv_row_maps_to_original_record() {
        let f = file("review,sentiment\n\"Great film!\",pos\n\"Dull,\nslow\",neg\n");
        let out = load_dataset(&spec(DatasetFormat::Csv, None), f.path(), &registry(), 1).unwrap();
        assert_eq!(out.records.len(), 2);
        let great = out.records.iter().find(|r| r.text == "Great film!").unwrap();
        assert_eq!(great.label_index, 1);
        assert_eq!(great.provenance, Provenance::Original);
        assert!(out.records.iter().any(|r| r.text == "Dull, slow"));
    }

    #[test]
    fn unmappable_label_names_the_row() {
        let f = file("review,sentiment\nok,pos\nmeh,neutral\n");
        let err = load_dataset(&spec(DatasetFormat::Csv, None), f.path(), &registry(), 1).unwrap_err();
        assert!(matches!(err, Error::Ingest { row: 2, .. }), "{err}");
    }

    #[test]
    fn empty_text_is_skipped_and_counted() {
        let f = file("review\tsentiment\n \t pos\nfine\tneg\n");
        let out = load_dataset(&spec(DatasetFormat::Tsv, None), f.path(), &registry(), 1).unwrap();
        assert_eq!(out.records.len() + out.skipped.len(), out.rows);
        assert_eq!(out.skipped, vec![SkipEntry { row: 1, reason: "empty text after cleaning".into() }]);
    }

    #[test]
    fn sample_cap_is_seeded_and_sorted() {
        let body: String = (0..100).map(|i| format!("{{\"review\": \"sentence {i}\", \"sentiment\": \"pos\"}}\n")).collect();
        let f = file(&body);
        let a = load_dataset(&spec(DatasetFormat::Jsonl, Some(30)), f.path(), &registry(), 5).unwrap();
        let b = load_dataset(&spec(DatasetFormat::Jsonl, Some(30)), f.path(), &registry(), 5).unwrap();
        assert_eq!(a.records.len(), 30);
        assert_eq!(a, b);
        assert!(a.records.windows(2).all(|w| w[0].id < w[1].id));
        let c = load_dataset(&spec(DatasetFormat::Jsonl, Some(30)), f.path(), &registry(), 6).unwrap();
        assert_ne!(a.records, c.records);
    }

    #[test]
    fn cap_equal_to_size_keeps_everything() {
        let body: String = (0..10).map(|i| format!("{{\"review\": \"s {i}\", \"sentiment\": \"neg\"}}\n")).collect();
        let f = file(&body);
        let out = load_dataset(&spec(DatasetFormat::Jsonl, Some(10)), f.path(), &registry(), 99).unwrap();
        assert_eq!(out.records.len(), 10);
    }

    #[test]
    fn multi_label_columns_collapse() {
        let mut s = spec(DatasetFormat::Csv, None);
        s.aspect_id = "detox".into();
        s.text_field = "comment_text".into();
        s.label_field = None;
        s.label_fields = vec!["toxic".into(), "insult".into()];
        s.label_mapping = [("0".to_string(), 1), ("1".to_string(), 2)].into_iter().collect();
        let f = file("comment_text,toxic,insult\nhello,0,0\nyou fool,0,1\n");
        let out = load_dataset(&s, f.path(), &registry(), 1).unwrap();
        let fool = out.records.iter().find(|r| r.text == "you fool").unwrap();
        assert_eq!((fool.label_index, fool.label_text.as_str()), (2, "toxic"));
        let hello = out.records.iter().find(|r| r.text == "hello").unwrap();
        assert_eq!(hello.label_index, 1);
    }
}
