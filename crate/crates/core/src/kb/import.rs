//! Import formats: catalog JSON, STRIPS schema JSON and the JSON-lines
//! sequence record file.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ActionRecord, ActionSequenceRecord, Catalog, ClassId, KbError, Result, StatePredicate};
use crate::strips::StateTemplateCatalog;

/// Action catalog shipped with the crate: 157 daily-activity classes in 22
/// topics, each with a pre-normalized phrase.
pub const REFERENCE_CATALOG_JSON: &str = include_str!("../../data/charades_catalog.json");
/// Hand-authored precondition/add/delete sets for [`REFERENCE_CATALOG_JSON`].
pub const REFERENCE_SCHEMAS_JSON: &str = include_str!("../../data/charades_schemas.json");

/// The shipped catalog with its STRIPS schemas applied.
pub fn reference_catalog() -> Catalog {
    let mut catalog: Catalog =
        serde_json::from_str(REFERENCE_CATALOG_JSON).expect("shipped catalog parses");
    let schemas = parse_schema_file(REFERENCE_SCHEMAS_JSON, &StateTemplateCatalog::shipped())
        .expect("shipped schemas parse");
    catalog.apply_schemas(schemas).expect("shipped schemas match the catalog");
    catalog
}

/// Reads a catalog JSON file (`{"n_topics": .., "classes": [..]}`).
pub fn read_catalog_file(path: impl AsRef<Path>) -> Result<Catalog> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|source| KbError::IoFailure { path: path.display().to_string(), source })?;
    serde_json::from_str(&text).map_err(|e| KbError::MalformedRecord { line: e.line(), reason: e.to_string() })
}

#[derive(Serialize, Deserialize)]
struct SchemaRecord {
    class_id: ClassId,
    #[serde(default)]
    action: String,
    #[serde(default)]
    precondition: Vec<String>,
    #[serde(default)]
    delete: Vec<String>,
    #[serde(default)]
    add: Vec<String>,
    #[serde(default)]
    args: Vec<String>,
}

/// Parsed STRIPS sets of one action class.
#[derive(Clone, Debug, PartialEq)]
pub struct SchemaEntry {
    pub class_id: ClassId,
    pub pre: BTreeSet<StatePredicate>,
    pub add: BTreeSet<StatePredicate>,
    pub del: BTreeSet<StatePredicate>,
}

/// Parses a schema file: a JSON array of records with `class_id`,
/// `precondition`, `delete` and `add` lists of predicates written as
/// `Template(arg, ...)`.
pub fn parse_schema_file(text: &str, templates: &StateTemplateCatalog) -> Result<Vec<SchemaEntry>> {
    let records: Vec<SchemaRecord> = serde_json::from_str(text)
        .map_err(|e| KbError::MalformedRecord { line: e.line(), reason: e.to_string() })?;
    let parse_all = |items: &[String]| -> Result<BTreeSet<StatePredicate>> {
        items
            .iter()
            .map(|s| templates.parse(s).map_err(|e| KbError::BadPredicate(e.to_string())))
            .collect()
    };
    records
        .iter()
        .map(|r| {
            Ok(SchemaEntry {
                class_id: r.class_id,
                pre: parse_all(&r.precondition)?,
                add: parse_all(&r.add)?,
                del: parse_all(&r.delete)?,
            })
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct SequenceLine {
    seq_id: String,
    #[serde(default)]
    intent_future: String,
    #[serde(default)]
    intent_present: String,
    #[serde(default)]
    intent_embedding: Vec<f64>,
    actions: Vec<(ClassId, f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    feature_ref: Option<String>,
}

impl From<SequenceLine> for ActionSequenceRecord {
    fn from(line: SequenceLine) -> Self {
        ActionSequenceRecord {
            seq_id: line.seq_id,
            actions: line.actions.into_iter().map(|(c, s, e)| ActionRecord::new(c, s, e)).collect(),
            intent_future: line.intent_future,
            intent_present: line.intent_present,
            intent_embedding: line.intent_embedding,
            feature_ref: line.feature_ref,
        }
    }
}

impl From<&ActionSequenceRecord> for SequenceLine {
    fn from(rec: &ActionSequenceRecord) -> Self {
        SequenceLine {
            seq_id: rec.seq_id.clone(),
            intent_future: rec.intent_future.clone(),
            intent_present: rec.intent_present.clone(),
            intent_embedding: rec.intent_embedding.clone(),
            actions: rec.actions.iter().map(|a| (a.class_id, a.t_start, a.t_end)).collect(),
            feature_ref: rec.feature_ref.clone(),
        }
    }
}

/// Reads one sequence record per line; blank lines are skipped.
pub fn read_sequence_records(reader: impl std::io::Read) -> Result<Vec<ActionSequenceRecord>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|source| KbError::IoFailure { path: "<sequence records>".into(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: SequenceLine = serde_json::from_str(&line)
            .map_err(|e| KbError::MalformedRecord { line: i + 1, reason: e.to_string() })?;
        out.push(parsed.into());
    }
    Ok(out)
}

pub fn write_sequence_records(mut writer: impl Write, records: &[ActionSequenceRecord]) -> std::io::Result<()> {
    for rec in records {
        let line = serde_json::to_string(&SequenceLine::from(rec)).map_err(std::io::Error::other)?;
        writeln!(writer, "{line}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_catalog_shape() {
        let catalog = reference_catalog();
        assert_eq!(catalog.len(), 157);
        assert_eq!(catalog.n_topics(), 22);
        let topics: BTreeSet<u32> = catalog.classes().iter().map(|c| c.topic_id).collect();
        assert_eq!(topics.len(), 22);
        assert!(catalog.classes().iter().all(|c| !c.normalized_phrase.is_empty()));
    }

    #[test]
    fn refrigerator_schema() {
        let catalog = reference_catalog();
        let templates = StateTemplateCatalog::shipped();
        let close = catalog.classes().iter().find(|c| c.name == "Closing a refrigerator").unwrap();
        let open = templates.parse("isOpen(refrigerator)").unwrap();
        let closed = templates.parse("isClosed(refrigerator)").unwrap();
        assert_eq!(close.pre, BTreeSet::from([open.clone()]));
        assert_eq!(close.add, BTreeSet::from([closed]));
        assert_eq!(close.del, BTreeSet::from([open]));
    }

    #[test]
    fn sequence_lines_round_trip() {
        let text = r#"{"seq_id":"a","intent_future":"eat","actions":[[3,0.0,1.5],[4,1.5,2.0]],"intent_embedding":[0.5,0.25]}

{"seq_id":"b","actions":[[1,0.0,1.0]],"feature_ref":"vid-b"}
"#;
        let recs = read_sequence_records(text.as_bytes()).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].class_ids(), vec![3, 4]);
        assert_eq!(recs[1].feature_ref.as_deref(), Some("vid-b"));
        let mut buf = Vec::new();
        write_sequence_records(&mut buf, &recs).unwrap();
        assert_eq!(read_sequence_records(buf.as_slice()).unwrap(), recs);
    }

    #[test]
    fn malformed_line_reports_its_number() {
        let text = "{\"seq_id\":\"a\",\"actions\":[]}\nnot json\n";
        match read_sequence_records(text.as_bytes()) {
            Err(KbError::MalformedRecord { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}
