//! Scene-graph data model: parsing model replies, validation, and a
//! canonical text form.
//!
//! A scene graph is the structured perception evidence the pipeline works
//! with: objects carrying attributes, plus directed relations between
//! objects. Chat models emit it as JSON under a top-level `"Scene Graphs"`
//! key; [`parse_scene_graph`] recovers it from noisy replies and
//! [`canonicalize`] produces the byte-stable form used in prompts, traces,
//! and fixtures.

use indexmap::IndexMap;
use serde_json::Value;
use thiserror::Error;

/// One perceived object: a numeric id, a type name, and ordered attributes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SgObject {
    pub id: u64,
    pub type_name: String,
    pub attributes: IndexMap<String, String>,
}

impl SgObject {
    pub fn new(id: u64, type_name: impl Into<String>) -> Self {
        Self {
            id,
            type_name: type_name.into(),
            attributes: IndexMap::new(),
        }
    }

    pub fn with_attr(mut self, name: impl Into<String>, value: impl Into<String>) -> Self {
        self.attributes.insert(name.into(), value.into());
        self
    }
}

/// A directed relation between two object ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SgRelation {
    pub source: u64,
    pub target: u64,
    pub relation: String,
}

impl SgRelation {
    pub fn new(source: u64, target: u64, relation: impl Into<String>) -> Self {
        Self {
            source,
            target,
            relation: relation.into(),
        }
    }
}

/// A partial scene graph: objects plus relations, in the order the model
/// produced them.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SceneGraph {
    pub objects: Vec<SgObject>,
    pub relations: Vec<SgRelation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum FindingKind {
    DuplicateId,
    DanglingEndpoint,
    EmptyTypeName,
    EmptyPredicate,
}

impl FindingKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            FindingKind::DuplicateId => "duplicate id",
            FindingKind::DanglingEndpoint => "dangling endpoint",
            FindingKind::EmptyTypeName => "empty type name",
            FindingKind::EmptyPredicate => "empty predicate",
        }
    }
}

/// One violated invariant, locating the offending element by path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Finding {
    pub kind: FindingKind,
    pub location: String,
    pub message: String,
}

/// Result of [`validate_scene_graph`]: empty findings iff the graph is
/// well-formed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }

    /// One-line rendering, used as corrective context on retries.
    pub fn summary(&self) -> String {
        self.findings
            .iter()
            .map(|f| format!("{} at {}: {}", f.kind.as_str(), f.location, f.message))
            .collect::<Vec<_>>()
            .join("; ")
    }
}

#[derive(Debug, Error)]
pub enum SgError {
    #[error("no balanced JSON object found in reply")]
    NoJsonFound,
    #[error("scene graph schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("graph fails validation: {0}")]
    InvalidGraph(String),
    #[error("relation endpoint {0} not present in graph")]
    DanglingEndpoint(u64),
}

/// Extracts the first balanced top-level `{...}` block from `text`,
/// respecting JSON string literals and escapes. Models routinely wrap the
/// graph in prose or code fences; everything outside the block is ignored.
fn first_brace_block(text: &str) -> Option<&str> {
    let bytes = text.as_bytes();
    let start = text.find('{')?;
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_string {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_string = false;
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..=i]);
                }
            }
            _ => {}
        }
    }
    None
}

/// Attribute values are kept as strings; numeric or boolean JSON values are
/// stringified rather than interpreted.
fn value_to_attr_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        Value::Null => Some(String::new()),
        _ => None,
    }
}

fn parse_id(v: &Value, what: &str) -> Result<u64, SgError> {
    let id = v
        .as_u64()
        .filter(|&n| n > 0)
        .ok_or_else(|| SgError::SchemaMismatch(format!("{what} must be a positive integer")))?;
    Ok(id)
}

fn parse_object(v: &Value, index: usize) -> Result<SgObject, SgError> {
    let obj = v
        .as_object()
        .ok_or_else(|| SgError::SchemaMismatch(format!("objects[{index}] is not an object")))?;
    let id = parse_id(
        obj.get("id")
            .ok_or_else(|| SgError::SchemaMismatch(format!("objects[{index}] missing id")))?,
        &format!("objects[{index}].id"),
    )?;
    let type_name = obj
        .get("type")
        .and_then(Value::as_str)
        .ok_or_else(|| SgError::SchemaMismatch(format!("objects[{index}] missing type string")))?
        .to_string();
    let mut attributes = IndexMap::new();
    if let Some(attrs) = obj.get("attributes") {
        let map = attrs.as_object().ok_or_else(|| {
            SgError::SchemaMismatch(format!("objects[{index}].attributes is not a map"))
        })?;
        for (k, v) in map {
            let val = value_to_attr_string(v).ok_or_else(|| {
                SgError::SchemaMismatch(format!(
                    "objects[{index}].attributes.{k} is not a scalar value"
                ))
            })?;
            attributes.insert(k.clone(), val);
        }
    }
    Ok(SgObject {
        id,
        type_name,
        attributes,
    })
}

fn parse_relation(v: &Value, index: usize) -> Result<SgRelation, SgError> {
    let obj = v.as_object().ok_or_else(|| {
        SgError::SchemaMismatch(format!("relationships[{index}] is not an object"))
    })?;
    let source = parse_id(
        obj.get("source").ok_or_else(|| {
            SgError::SchemaMismatch(format!("relationships[{index}] missing source"))
        })?,
        &format!("relationships[{index}].source"),
    )?;
    let target = parse_id(
        obj.get("target").ok_or_else(|| {
            SgError::SchemaMismatch(format!("relationships[{index}] missing target"))
        })?,
        &format!("relationships[{index}].target"),
    )?;
    let relation = obj
        .get("relation")
        .and_then(Value::as_str)
        .ok_or_else(|| {
            SgError::SchemaMismatch(format!("relationships[{index}] missing relation string"))
        })?
        .to_string();
    Ok(SgRelation {
        source,
        target,
        relation,
    })
}

/// Parses a model reply into a [`SceneGraph`].
///
/// The first balanced top-level brace block is extracted and read against
/// the scene-graph schema: a `"Scene Graphs"` wrapper holding `objects`
/// (id, type, attributes) and `relationships` (source, target, relation).
/// A bare block with `objects`/`relationships` at the top level is also
/// accepted. Unknown keys are ignored.
pub fn parse_scene_graph(text: &str) -> Result<SceneGraph, SgError> {
    let block = first_brace_block(text).ok_or(SgError::NoJsonFound)?;
    let value: Value = serde_json::from_str(block)
        .map_err(|e| SgError::SchemaMismatch(format!("invalid JSON: {e}")))?;
    let root = value
        .as_object()
        .ok_or_else(|| SgError::SchemaMismatch("top level is not an object".into()))?;

    let body = root
        .iter()
        .find(|(k, _)| k.eq_ignore_ascii_case("scene graphs") || k.eq_ignore_ascii_case("scene graph"))
        .map(|(_, v)| v)
        .unwrap_or(&value);
    let body = body
        .as_object()
        .ok_or_else(|| SgError::SchemaMismatch("scene graph body is not an object".into()))?;

    let objects_v = body
        .get("objects")
        .and_then(Value::as_array)
        .ok_or_else(|| SgError::SchemaMismatch("missing objects array".into()))?;
    let relations_v = body
        .get("relationships")
        .and_then(Value::as_array)
        .ok_or_else(|| SgError::SchemaMismatch("missing relationships array".into()))?;

    let objects = objects_v
        .iter()
        .enumerate()
        .map(|(i, v)| parse_object(v, i))
        .collect::<Result<Vec<_>, _>>()?;
    let relations = relations_v
        .iter()
        .enumerate()
        .map(|(i, v)| parse_relation(v, i))
        .collect::<Result<Vec<_>, _>>()?;

    Ok(SceneGraph { objects, relations })
}

/// Reports every violated invariant: duplicate object ids, relation
/// endpoints that reference no object, empty type names, and empty
/// predicates. Findings are ordered by (kind, location); an empty report
/// means the graph is well-formed.
pub fn validate_scene_graph(sg: &SceneGraph) -> ValidationReport {
    let mut findings = Vec::new();
    let mut seen = std::collections::BTreeMap::new();
    for (i, obj) in sg.objects.iter().enumerate() {
        if let Some(first) = seen.insert(obj.id, i) {
            findings.push(Finding {
                kind: FindingKind::DuplicateId,
                location: format!("objects[{i}].id"),
                message: format!("id {} already used by objects[{first}]", obj.id),
            });
        }
        if obj.type_name.trim().is_empty() {
            findings.push(Finding {
                kind: FindingKind::EmptyTypeName,
                location: format!("objects[{i}].type"),
                message: format!("object {} has an empty type name", obj.id),
            });
        }
    }
    let ids: std::collections::BTreeSet<u64> = sg.objects.iter().map(|o| o.id).collect();
    for (i, rel) in sg.relations.iter().enumerate() {
        for (field, endpoint) in [("source", rel.source), ("target", rel.target)] {
            if !ids.contains(&endpoint) {
                findings.push(Finding {
                    kind: FindingKind::DanglingEndpoint,
                    location: format!("relationships[{i}].{field}"),
                    message: format!("endpoint {endpoint} references no object"),
                });
            }
        }
        if rel.relation.trim().is_empty() {
            findings.push(Finding {
                kind: FindingKind::EmptyPredicate,
                location: format!("relationships[{i}].relation"),
                message: "relation predicate is empty".into(),
            });
        }
    }
    findings.sort_by(|a, b| (a.kind, &a.location).cmp(&(b.kind, &b.location)));
    ValidationReport { findings }
}

impl SceneGraph {
    /// Sorted copy: objects by id, attribute keys lexicographically,
    /// relations by (source, target, relation). Two graphs are equal "under
    /// canonical ordering" when their canonical forms are equal.
    pub fn canonical_form(&self) -> SceneGraph {
        let mut objects = self.objects.clone();
        objects.sort_by_key(|o| o.id);
        for obj in &mut objects {
            obj.attributes.sort_keys();
        }
        let mut relations = self.relations.clone();
        relations.sort_by(|a, b| {
            (a.source, a.target, &a.relation).cmp(&(b.source, b.target, &b.relation))
        });
        SceneGraph { objects, relations }
    }

    pub fn object(&self, id: u64) -> Option<&SgObject> {
        self.objects.iter().find(|o| o.id == id)
    }
}

fn graph_to_value(sg: &SceneGraph) -> Value {
    let objects: Vec<Value> = sg
        .objects
        .iter()
        .map(|o| {
            let mut attrs = serde_json::Map::new();
            for (k, v) in &o.attributes {
                attrs.insert(k.clone(), Value::String(v.clone()));
            }
            let mut m = serde_json::Map::new();
            m.insert("id".into(), Value::from(o.id));
            m.insert("type".into(), Value::String(o.type_name.clone()));
            m.insert("attributes".into(), Value::Object(attrs));
            Value::Object(m)
        })
        .collect();
    let relations: Vec<Value> = sg
        .relations
        .iter()
        .map(|r| {
            let mut m = serde_json::Map::new();
            m.insert("source".into(), Value::from(r.source));
            m.insert("target".into(), Value::from(r.target));
            m.insert("relation".into(), Value::String(r.relation.clone()));
            Value::Object(m)
        })
        .collect();
    let mut body = serde_json::Map::new();
    body.insert("objects".into(), Value::Array(objects));
    body.insert("relationships".into(), Value::Array(relations));
    let mut root = serde_json::Map::new();
    root.insert("Scene Graphs".into(), Value::Object(body));
    Value::Object(root)
}

/// Serializes a valid graph to its canonical byte-stable text form.
/// Parsing the output reproduces the graph (under canonical ordering).
pub fn canonicalize(sg: &SceneGraph) -> Result<String, SgError> {
    let report = validate_scene_graph(sg);
    if !report.is_clean() {
        return Err(SgError::InvalidGraph(report.summary()));
    }
    let canonical = sg.canonical_form();
    Ok(serde_json::to_string_pretty(&graph_to_value(&canonical))
        .expect("scene graph serialization cannot fail"))
}

/// Lowercase `"<subject type> <relation> <object type>"` triplet text used
/// for similarity scoring against image regions.
pub fn relation_phrase(sg: &SceneGraph, rel: &SgRelation) -> Result<String, SgError> {
    relation_phrase_opts(sg, rel, false)
}

/// As [`relation_phrase`], optionally prefixing each endpoint's type with
/// its attribute values ("blue hat above person").
pub fn relation_phrase_opts(
    sg: &SceneGraph,
    rel: &SgRelation,
    include_attributes: bool,
) -> Result<String, SgError> {
    let subject = sg.object(rel.source).ok_or(SgError::DanglingEndpoint(rel.source))?;
    let object = sg.object(rel.target).ok_or(SgError::DanglingEndpoint(rel.target))?;
    let render = |o: &SgObject| {
        if include_attributes && !o.attributes.is_empty() {
            let values: Vec<&str> = o.attributes.values().map(String::as_str).collect();
            format!("{} {}", values.join(" "), o.type_name)
        } else {
            o.type_name.clone()
        }
    };
    Ok(format!("{} {} {}", render(subject), rel.relation, render(object)).to_lowercase())
}
