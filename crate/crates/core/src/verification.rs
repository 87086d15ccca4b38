//! Stage 2: filter the perceived scene graph against external tools.
//!
//! Objects are kept only when the detector grounds their type name;
//! attributes are kept when the unified "<value> <type>" phrase grounds
//! onto the owning object's box; relations are kept when the union region
//! of their endpoints scores high enough against the relation triplet
//! text. Filtering is monotone: verification never adds elements, and the
//! output graph never contains dangling endpoints.

use crate::backends::{BackendError, DetectBackend, ImageRef, SimilarityBackend};
use crate::sg_model::{self, SceneGraph, SgObject};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Axis-aligned box in pixel coordinates, min corner strictly before max.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BoundingBox {
    pub fn from_array(b: [f64; 4]) -> Self {
        Self {
            x_min: b[0],
            y_min: b[1],
            x_max: b[2],
            y_max: b[3],
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }

    pub fn intersection_over_union(&self, other: &BoundingBox) -> f64 {
        let ix = (self.x_max.min(other.x_max) - self.x_min.max(other.x_min)).max(0.0);
        let iy = (self.y_max.min(other.y_max) - self.y_min.max(other.y_min)).max(0.0);
        let inter = ix * iy;
        let union = self.area() + other.area() - inter;
        if union <= 0.0 { 0.0 } else { inter / union }
    }
}

/// Minimal box covering both inputs: componentwise min of mins, max of
/// maxes.
pub fn union_region(a: &BoundingBox, b: &BoundingBox) -> BoundingBox {
    BoundingBox {
        x_min: a.x_min.min(b.x_min),
        y_min: a.y_min.min(b.y_min),
        x_max: a.x_max.max(b.x_max),
        y_max: a.y_max.max(b.y_max),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementCategory {
    Object,
    Attribute,
    Relation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalReason {
    /// The detector produced no box for the object's type name.
    NotDetected,
    /// The unified attribute phrase did not ground onto the object's box.
    NotGrounded,
    /// The relation triplet scored below the similarity threshold.
    BelowSimilarity,
    /// An endpoint object (or owning object) was removed first.
    CascadeFromObject,
}

impl RemovalReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            RemovalReason::NotDetected => "not detected",
            RemovalReason::NotGrounded => "not grounded",
            RemovalReason::BelowSimilarity => "below similarity threshold",
            RemovalReason::CascadeFromObject => "cascade from removed object",
        }
    }
}

/// Kept-or-removed record for one graph element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementDecision {
    pub category: ElementCategory,
    /// Stable human-readable element label, e.g. `object 2 (cat)`.
    pub label: String,
    pub kept: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub reason: Option<RemovalReason>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub score: Option<f64>,
}

impl ElementDecision {
    fn kept(category: ElementCategory, label: String, score: Option<f64>) -> Self {
        Self { category, label, kept: true, reason: None, score }
    }

    fn removed(
        category: ElementCategory,
        label: String,
        reason: RemovalReason,
        score: Option<f64>,
    ) -> Self {
        Self { category, label, kept: false, reason: Some(reason), score }
    }

    /// One-line rendering used in stage traces.
    pub fn render(&self) -> String {
        let verdict = if self.kept { "kept" } else { "removed" };
        let mut line = format!("{verdict} {}", self.label);
        if let Some(reason) = self.reason {
            line.push_str(&format!(": {}", reason.as_str()));
        }
        if let Some(score) = self.score {
            line.push_str(&format!(" (score {score:.4})"));
        }
        line
    }
}

fn object_label(o: &SgObject) -> String {
    format!("object {} ({})", o.id, o.type_name.to_lowercase())
}

fn attribute_label(o: &SgObject, name: &str, value: &str) -> String {
    format!("attribute {name}={value} of object {} ({})", o.id, o.type_name.to_lowercase())
}

fn relation_label(r: &crate::sg_model::SgRelation) -> String {
    format!("relation {} -> {} ({})", r.source, r.target, r.relation)
}

/// Tool-verified scene graph: the surviving elements, the verdict for
/// every input element, and a box for each kept object.
#[derive(Debug, Clone)]
pub struct VerifiedSceneGraph {
    pub graph: SceneGraph,
    pub provenance: Vec<ElementDecision>,
    pub object_boxes: BTreeMap<u64, BoundingBox>,
}

/// Per-category removal tallies over one verification pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HallucinationStats {
    pub objects_total: u32,
    pub objects_removed: u32,
    pub attributes_total: u32,
    pub attributes_removed: u32,
    pub relations_total: u32,
    pub relations_removed: u32,
}

#[derive(Debug, Clone)]
pub struct VerifyConfig {
    pub object_threshold: f64,
    pub attribute_threshold: f64,
    pub relation_threshold: f64,
    /// Minimum IoU between an attribute grounding and its object's box.
    pub iou_floor: f64,
    /// Include attribute values in relation triplet phrases.
    pub relation_phrase_with_attributes: bool,
    /// Check elements on worker threads; results merge in input order
    /// either way.
    pub concurrent_elements: bool,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            object_threshold: 0.35,
            attribute_threshold: 0.30,
            relation_threshold: 0.30,
            iou_floor: 0.5,
            relation_phrase_with_attributes: false,
            concurrent_elements: false,
        }
    }
}

/// Applies `f` to each item, sequentially or on scoped threads, always
/// returning results in input order.
fn map_elements<T, R, F>(items: Vec<T>, concurrent: bool, f: F) -> Result<Vec<R>, BackendError>
where
    T: Send,
    R: Send,
    F: Fn(T) -> Result<R, BackendError> + Sync,
{
    if !concurrent || items.len() <= 1 {
        return items.into_iter().map(f).collect();
    }
    std::thread::scope(|scope| {
        let handles: Vec<_> = items
            .into_iter()
            .map(|item| scope.spawn(|| f(item)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("verification worker panicked"))
            .collect()
    })
}

/// Surviving graph, per-element decisions, and kept-object boxes from the
/// object pass.
pub type ObjectPass = (SceneGraph, Vec<ElementDecision>, BTreeMap<u64, BoundingBox>);

/// Keeps each object iff its type name grounds in the image; relations and
/// attributes of removed objects cascade out.
pub fn verify_objects(
    detect: &dyn DetectBackend,
    image: &ImageRef,
    sg: &SceneGraph,
    cfg: &VerifyConfig,
) -> Result<ObjectPass, BackendError> {
    let checks = map_elements(
        sg.objects.clone(),
        cfg.concurrent_elements,
        |object| {
            let hits = detect.detect_phrase(image, &object.type_name, cfg.object_threshold)?;
            Ok((object, hits.into_iter().next()))
        },
    )?;

    let mut decisions = Vec::new();
    let mut boxes = BTreeMap::new();
    let mut kept_objects = Vec::new();
    for (object, best) in checks {
        match best {
            Some(detection) => {
                decisions.push(ElementDecision::kept(
                    ElementCategory::Object,
                    object_label(&object),
                    Some(detection.confidence),
                ));
                boxes.insert(object.id, BoundingBox::from_array(detection.box_));
                kept_objects.push(object);
            }
            None => {
                decisions.push(ElementDecision::removed(
                    ElementCategory::Object,
                    object_label(&object),
                    RemovalReason::NotDetected,
                    None,
                ));
                for (name, value) in &object.attributes {
                    decisions.push(ElementDecision::removed(
                        ElementCategory::Attribute,
                        attribute_label(&object, name, value),
                        RemovalReason::CascadeFromObject,
                        None,
                    ));
                }
            }
        }
    }

    let kept_ids: std::collections::BTreeSet<u64> = kept_objects.iter().map(|o| o.id).collect();
    let mut kept_relations = Vec::new();
    for rel in &sg.relations {
        if kept_ids.contains(&rel.source) && kept_ids.contains(&rel.target) {
            kept_relations.push(rel.clone());
        } else {
            decisions.push(ElementDecision::removed(
                ElementCategory::Relation,
                relation_label(rel),
                RemovalReason::CascadeFromObject,
                None,
            ));
        }
    }

    Ok((
        SceneGraph { objects: kept_objects, relations: kept_relations },
        decisions,
        boxes,
    ))
}

/// Grounds each (object, attribute) pair as the unified phrase
/// `"<value> <type>"`; the attribute survives iff some detection overlaps
/// the object's own box at the IoU floor. Objects are never re-judged here.
pub fn verify_attributes(
    detect: &dyn DetectBackend,
    image: &ImageRef,
    sg: &SceneGraph,
    boxes: &BTreeMap<u64, BoundingBox>,
    cfg: &VerifyConfig,
) -> Result<(SceneGraph, Vec<ElementDecision>), BackendError> {
    let pairs: Vec<(SgObject, String, String)> = sg
        .objects
        .iter()
        .flat_map(|o| {
            o.attributes
                .iter()
                .map(|(k, v)| (o.clone(), k.clone(), v.clone()))
                .collect::<Vec<_>>()
        })
        .collect();

    let checks = map_elements(pairs, cfg.concurrent_elements, |(object, name, value)| {
        let phrase = format!("{value} {}", object.type_name);
        let hits = detect.detect_phrase(image, &phrase, cfg.attribute_threshold)?;
        let object_box = boxes.get(&object.id).copied();
        let grounded = object_box.and_then(|ob| {
            hits.iter()
                .find(|d| BoundingBox::from_array(d.box_).intersection_over_union(&ob) >= cfg.iou_floor)
                .map(|d| d.confidence)
        });
        let best_any = hits.first().map(|d| d.confidence);
        Ok((object, name, value, grounded, best_any))
    })?;

    let mut verdicts: BTreeMap<(u64, String), bool> = BTreeMap::new();
    let mut decisions = Vec::new();
    for (object, name, value, grounded, best_any) in checks {
        match grounded {
            Some(confidence) => {
                decisions.push(ElementDecision::kept(
                    ElementCategory::Attribute,
                    attribute_label(&object, &name, &value),
                    Some(confidence),
                ));
                verdicts.insert((object.id, name), true);
            }
            None => {
                decisions.push(ElementDecision::removed(
                    ElementCategory::Attribute,
                    attribute_label(&object, &name, &value),
                    RemovalReason::NotGrounded,
                    best_any,
                ));
                verdicts.insert((object.id, name), false);
            }
        }
    }

    let objects = sg
        .objects
        .iter()
        .map(|o| {
            let mut filtered = o.clone();
            filtered
                .attributes
                .retain(|name, _| *verdicts.get(&(o.id, name.clone())).unwrap_or(&true));
            filtered
        })
        .collect();

    Ok((SceneGraph { objects, relations: sg.relations.clone() }, decisions))
}

/// Scores each relation's triplet text against the union region of its
/// endpoint boxes; relations below the threshold are removed with their
/// score recorded. Endpoint objects are untouched.
pub fn verify_relations(
    similarity: &dyn SimilarityBackend,
    image: &ImageRef,
    sg: &SceneGraph,
    boxes: &BTreeMap<u64, BoundingBox>,
    cfg: &VerifyConfig,
) -> Result<(SceneGraph, Vec<ElementDecision>), BackendError> {
    let relations = sg.relations.clone();
    let graph_ref = &sg;
    let checks = map_elements(relations, cfg.concurrent_elements, |rel| {
        let phrase =
            sg_model::relation_phrase_opts(graph_ref, &rel, cfg.relation_phrase_with_attributes)
                .map_err(|e| BackendError::InvalidRequest(e.to_string()))?;
        let (src, tgt) = match (boxes.get(&rel.source), boxes.get(&rel.target)) {
            (Some(s), Some(t)) => (*s, *t),
            _ => {
                return Err(BackendError::InvalidRequest(format!(
                    "relation {} -> {} has an unboxed endpoint",
                    rel.source, rel.target
                )))
            }
        };
        let region = union_region(&src, &tgt);
        let score = similarity.score_similarity(image, &region.as_array(), &phrase)?;
        Ok((rel, score))
    })?;

    let mut decisions = Vec::new();
    let mut kept = Vec::new();
    for (rel, score) in checks {
        if score >= cfg.relation_threshold {
            decisions.push(ElementDecision::kept(
                ElementCategory::Relation,
                relation_label(&rel),
                Some(score),
            ));
            kept.push(rel);
        } else {
            decisions.push(ElementDecision::removed(
                ElementCategory::Relation,
                relation_label(&rel),
                RemovalReason::BelowSimilarity,
                Some(score),
            ));
        }
    }

    Ok((SceneGraph { objects: sg.objects.clone(), relations: kept }, decisions))
}

fn count_attributes(sg: &SceneGraph) -> u32 {
    sg.objects.iter().map(|o| o.attributes.len() as u32).sum()
}

/// The full stage-2 pass: objects, then attributes, then relations, with
/// removal tallies over the input graph.
pub fn verify_scene_graph(
    detect: &dyn DetectBackend,
    similarity: &dyn SimilarityBackend,
    image: &ImageRef,
    sg: &SceneGraph,
    cfg: &VerifyConfig,
) -> Result<(VerifiedSceneGraph, HallucinationStats), BackendError> {
    let (after_objects, object_decisions, boxes) = verify_objects(detect, image, sg, cfg)?;
    let (after_attributes, attribute_decisions) =
        verify_attributes(detect, image, &after_objects, &boxes, cfg)?;
    let (final_graph, relation_decisions) =
        verify_relations(similarity, image, &after_attributes, &boxes, cfg)?;

    let mut provenance = object_decisions;
    provenance.extend(attribute_decisions);
    provenance.extend(relation_decisions);

    let removed = |category: ElementCategory| {
        provenance
            .iter()
            .filter(|d| d.category == category && !d.kept)
            .count() as u32
    };
    let stats = HallucinationStats {
        objects_total: sg.objects.len() as u32,
        objects_removed: removed(ElementCategory::Object),
        attributes_total: count_attributes(sg),
        attributes_removed: removed(ElementCategory::Attribute),
        relations_total: sg.relations.len() as u32,
        relations_removed: removed(ElementCategory::Relation),
    };

    let object_boxes: BTreeMap<u64, BoundingBox> = final_graph
        .objects
        .iter()
        .map(|o| (o.id, boxes[&o.id]))
        .collect();

    Ok((
        VerifiedSceneGraph { graph: final_graph, provenance, object_boxes },
        stats,
    ))
}
