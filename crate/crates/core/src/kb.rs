//! Prior knowledge: vocabularies, state domains, and transition-based
//! action rules, loaded from a single JSON document.

use std::collections::{BTreeMap, BTreeSet};

use serde::Deserialize;
use thiserror::Error;

/// The reserved action meaning "nothing happened"; always index 0.
pub const NULL_ACTION: &str = "null";

#[derive(Debug, Error)]
pub enum KbError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unknown name: {0}")]
    Unknown(String),
}

type Result<T> = std::result::Result<T, KbError>;

#[derive(Debug, Clone)]
pub struct Vocabulary {
    pub objects: Vec<String>,
    pub attributes: Vec<String>,
    pub relationships: Vec<String>,
    pub actions: Vec<String>,
    object_index: BTreeMap<String, usize>,
    attribute_index: BTreeMap<String, usize>,
    relationship_index: BTreeMap<String, usize>,
    action_index: BTreeMap<String, usize>,
}

impl Vocabulary {
    pub fn object_index(&self, name: &str) -> Option<usize> {
        self.object_index.get(name).copied()
    }
    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.attribute_index.get(name).copied()
    }
    pub fn relationship_index(&self, name: &str) -> Option<usize> {
        self.relationship_index.get(name).copied()
    }
    pub fn action_index(&self, name: &str) -> Option<usize> {
        self.action_index.get(name).copied()
    }
}

#[derive(Debug, Clone)]
pub struct AttributeDomain {
    pub pair: [String; 2],
    pub objects: BTreeSet<String>,
}

#[derive(Debug, Clone)]
pub struct RelationshipDomain {
    pub pair: [String; 2],
    pub subjects: BTreeSet<String>,
    pub objects: BTreeSet<String>,
}

#[derive(Debug, Clone)]
pub struct AttributeRule {
    pub action: String,
    pub pre: String,
    pub eff: String,
    pub objects: BTreeSet<String>,
}

#[derive(Debug, Clone)]
pub struct RelationshipRule {
    pub action: String,
    pub pre: String,
    pub eff: String,
    pub subjects: BTreeSet<String>,
    pub objects: BTreeSet<String>,
}

#[derive(Debug, Clone)]
pub struct KnowledgeBase {
    pub vocabulary: Vocabulary,
    pub attribute_domains: Vec<AttributeDomain>,
    pub relationship_domains: Vec<RelationshipDomain>,
    pub attribute_rules: Vec<AttributeRule>,
    pub relationship_rules: Vec<RelationshipRule>,
}

/// An enumerated attribute transition with its action label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeTransition {
    pub object: String,
    pub pre: String,
    pub eff: String,
    pub action: String,
}

/// An enumerated relationship transition with its action label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationshipTransition {
    pub subject: String,
    pub object: String,
    pub pre: String,
    pub eff: String,
    pub action: String,
}

// Raw file schema; strict mode rejects unknown keys.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct KbFile {
    objects: Vec<String>,
    attributes: Vec<AttrDomainFile>,
    relationships: Vec<RelDomainFile>,
    actions: Vec<String>,
    attribute_rules: Vec<AttrRuleFile>,
    relationship_rules: Vec<RelRuleFile>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AttrDomainFile {
    pair: [String; 2],
    objects: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RelDomainFile {
    pair: [String; 2],
    subjects: Vec<String>,
    objects: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AttrRuleFile {
    action: String,
    pre: String,
    eff: String,
    objects: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RelRuleFile {
    action: String,
    pre: String,
    eff: String,
    subjects: Vec<String>,
    objects: Vec<String>,
}

fn unique_list(kind: &str, names: &[String]) -> Result<BTreeMap<String, usize>> {
    let mut index = BTreeMap::new();
    for (i, name) in names.iter().enumerate() {
        if index.insert(name.clone(), i).is_some() {
            return Err(KbError::Validation(format!(
                "duplicate {kind} name `{name}` at position {i}"
            )));
        }
    }
    Ok(index)
}

fn check_subset(
    kind: &str,
    names: &BTreeSet<String>,
    universe: &BTreeMap<String, usize>,
    context: &str,
) -> Result<()> {
    for name in names {
        if !universe.contains_key(name) {
            return Err(KbError::Validation(format!(
                "unknown {kind} `{name}` in {context}"
            )));
        }
    }
    Ok(())
}

/// Parses and validates a knowledge file.
pub fn load_knowledge_base(text: &str) -> Result<KnowledgeBase> {
    let file: KbFile = serde_json::from_str(text)
        .map_err(|e| KbError::Parse(format!("{e}")))?;

    let object_index = unique_list("object", &file.objects)?;
    let action_index = unique_list("action", &file.actions)?;
    match file.actions.first() {
        Some(a) if a == NULL_ACTION => {}
        _ => {
            return Err(KbError::Validation(format!(
                "action vocabulary must start with `{NULL_ACTION}`"
            )))
        }
    }

    // Attribute / relationship value vocabularies are the domain pairs in
    // file order; values must be globally unique so a value names its domain.
    let mut attributes = Vec::new();
    let mut attribute_domains = Vec::new();
    for (i, d) in file.attributes.iter().enumerate() {
        if d.pair[0] == d.pair[1] {
            return Err(KbError::Validation(format!(
                "attribute domain {i} repeats value `{}`",
                d.pair[0]
            )));
        }
        attributes.push(d.pair[0].clone());
        attributes.push(d.pair[1].clone());
        let objects: BTreeSet<String> = d.objects.iter().cloned().collect();
        if objects.len() != d.objects.len() {
            return Err(KbError::Validation(format!(
                "attribute domain {i} lists a duplicate object"
            )));
        }
        check_subset("object", &objects, &object_index, &format!("attribute domain {i}"))?;
        attribute_domains.push(AttributeDomain { pair: d.pair.clone(), objects });
    }
    let attribute_index = unique_list("attribute", &attributes)?;

    let mut relationships = Vec::new();
    let mut relationship_domains = Vec::new();
    for (i, d) in file.relationships.iter().enumerate() {
        if d.pair[0] == d.pair[1] {
            return Err(KbError::Validation(format!(
                "relationship domain {i} repeats value `{}`",
                d.pair[0]
            )));
        }
        relationships.push(d.pair[0].clone());
        relationships.push(d.pair[1].clone());
        let subjects: BTreeSet<String> = d.subjects.iter().cloned().collect();
        let objects: BTreeSet<String> = d.objects.iter().cloned().collect();
        let ctx = format!("relationship domain {i}");
        check_subset("object", &subjects, &object_index, &ctx)?;
        check_subset("object", &objects, &object_index, &ctx)?;
        relationship_domains.push(RelationshipDomain { pair: d.pair.clone(), subjects, objects });
    }
    let relationship_index = unique_list("relationship", &relationships)?;

    let vocabulary = Vocabulary {
        objects: file.objects,
        attributes,
        relationships,
        actions: file.actions,
        object_index,
        attribute_index,
        relationship_index,
        action_index,
    };

    let mut attribute_rules = Vec::new();
    for (i, r) in file.attribute_rules.iter().enumerate() {
        let ctx = format!("attribute rule {i} (`{}`)", r.action);
        if vocabulary.action_index(&r.action).is_none() {
            return Err(KbError::Validation(format!("unknown action in {ctx}")));
        }
        if r.pre == r.eff {
            return Err(KbError::Validation(format!(
                "{ctx}: precondition equals effect `{}`",
                r.pre
            )));
        }
        let objects: BTreeSet<String> = r.objects.iter().cloned().collect();
        let domain = attribute_domains
            .iter()
            .find(|d| d.pair.contains(&r.pre) && d.pair.contains(&r.eff))
            .ok_or_else(|| {
                KbError::Validation(format!(
                    "{ctx}: no attribute domain covers `{}` -> `{}`",
                    r.pre, r.eff
                ))
            })?;
        if !objects.is_subset(&domain.objects) {
            return Err(KbError::Validation(format!(
                "{ctx}: rule objects exceed the domain's applicable objects"
            )));
        }
        attribute_rules.push(AttributeRule {
            action: r.action.clone(),
            pre: r.pre.clone(),
            eff: r.eff.clone(),
            objects,
        });
    }

    let mut relationship_rules = Vec::new();
    for (i, r) in file.relationship_rules.iter().enumerate() {
        let ctx = format!("relationship rule {i} (`{}`)", r.action);
        if vocabulary.action_index(&r.action).is_none() {
            return Err(KbError::Validation(format!("unknown action in {ctx}")));
        }
        if r.pre == r.eff {
            return Err(KbError::Validation(format!(
                "{ctx}: precondition equals effect `{}`",
                r.pre
            )));
        }
        let subjects: BTreeSet<String> = r.subjects.iter().cloned().collect();
        let objects: BTreeSet<String> = r.objects.iter().cloned().collect();
        let domain = relationship_domains
            .iter()
            .find(|d| d.pair.contains(&r.pre) && d.pair.contains(&r.eff))
            .ok_or_else(|| {
                KbError::Validation(format!(
                    "{ctx}: no relationship domain covers `{}` -> `{}`",
                    r.pre, r.eff
                ))
            })?;
        if !subjects.is_subset(&domain.subjects) || !objects.is_subset(&domain.objects) {
            return Err(KbError::Validation(format!(
                "{ctx}: rule categories exceed the domain's applicable categories"
            )));
        }
        relationship_rules.push(RelationshipRule {
            action: r.action.clone(),
            pre: r.pre.clone(),
            eff: r.eff.clone(),
            subjects,
            objects,
        });
    }

    // Conflict check: the same (scope, pre, eff) triple must not map to two
    // different actions.
    for (i, a) in attribute_rules.iter().enumerate() {
        for (j, b) in attribute_rules.iter().enumerate().skip(i + 1) {
            if a.pre == b.pre
                && a.eff == b.eff
                && a.action != b.action
                && a.objects.intersection(&b.objects).next().is_some()
            {
                return Err(KbError::Validation(format!(
                    "conflicting attribute rules {i} (`{}`) and {j} (`{}`) \
                     for transition `{}` -> `{}`",
                    a.action, b.action, a.pre, a.eff
                )));
            }
        }
    }
    for (i, a) in relationship_rules.iter().enumerate() {
        for (j, b) in relationship_rules.iter().enumerate().skip(i + 1) {
            if a.pre == b.pre
                && a.eff == b.eff
                && a.action != b.action
                && a.subjects.intersection(&b.subjects).next().is_some()
                && a.objects.intersection(&b.objects).next().is_some()
            {
                return Err(KbError::Validation(format!(
                    "conflicting relationship rules {i} (`{}`) and {j} (`{}`) \
                     for transition `{}` -> `{}`",
                    a.action, b.action, a.pre, a.eff
                )));
            }
        }
    }

    Ok(KnowledgeBase {
        vocabulary,
        attribute_domains,
        relationship_domains,
        attribute_rules,
        relationship_rules,
    })
}

impl KnowledgeBase {
    /// (M, S, N, K)
    pub fn cardinalities(&self) -> (usize, usize, usize, usize) {
        (
            self.vocabulary.objects.len(),
            self.vocabulary.attributes.len(),
            self.vocabulary.relationships.len(),
            self.vocabulary.actions.len(),
        )
    }

    /// The attribute domain a value belongs to, if any.
    pub fn attribute_domain_of(&self, value: &str) -> Option<usize> {
        self.attribute_domains
            .iter()
            .position(|d| d.pair.iter().any(|v| v == value))
    }

    /// The relationship domain a value belongs to, if any.
    pub fn relationship_domain_of(&self, value: &str) -> Option<usize> {
        self.relationship_domains
            .iter()
            .position(|d| d.pair.iter().any(|v| v == value))
    }

    fn require_object(&self, name: &str) -> Result<()> {
        if self.vocabulary.object_index(name).is_none() {
            return Err(KbError::Unknown(format!("object category `{name}`")));
        }
        Ok(())
    }

    /// Explains an attribute transition on `object` as an action name.
    /// Identity transitions and unmatched transitions both yield `null`.
    pub fn lookup_attribute_action(&self, object: &str, pre: &str, eff: &str) -> Result<&str> {
        self.require_object(object)?;
        for v in [pre, eff] {
            if self.vocabulary.attribute_index(v).is_none() {
                return Err(KbError::Unknown(format!("attribute value `{v}`")));
            }
        }
        let domain = self
            .attribute_domains
            .iter()
            .find(|d| d.pair.contains(&pre.to_string()) && d.pair.contains(&eff.to_string()))
            .ok_or_else(|| {
                KbError::Domain(format!(
                    "attribute values `{pre}` and `{eff}` belong to different domains"
                ))
            })?;
        if !domain.objects.contains(object) {
            return Err(KbError::Domain(format!(
                "attribute pair ({}, {}) does not apply to `{object}`",
                domain.pair[0], domain.pair[1]
            )));
        }
        if pre == eff {
            return Ok(NULL_ACTION);
        }
        Ok(self
            .attribute_rules
            .iter()
            .find(|r| r.pre == pre && r.eff == eff && r.objects.contains(object))
            .map(|r| r.action.as_str())
            .unwrap_or(NULL_ACTION))
    }

    /// Explains a relationship transition on (`subject`, `object`) as an action.
    pub fn lookup_relationship_action(
        &self,
        subject: &str,
        object: &str,
        pre: &str,
        eff: &str,
    ) -> Result<&str> {
        self.require_object(subject)?;
        self.require_object(object)?;
        for v in [pre, eff] {
            if self.vocabulary.relationship_index(v).is_none() {
                return Err(KbError::Unknown(format!("relationship value `{v}`")));
            }
        }
        let domain = self
            .relationship_domains
            .iter()
            .find(|d| d.pair.contains(&pre.to_string()) && d.pair.contains(&eff.to_string()))
            .ok_or_else(|| {
                KbError::Domain(format!(
                    "relationship values `{pre}` and `{eff}` belong to different domains"
                ))
            })?;
        if !domain.subjects.contains(subject) || !domain.objects.contains(object) {
            return Err(KbError::Domain(format!(
                "relationship pair ({}, {}) does not apply to (`{subject}`, `{object}`)",
                domain.pair[0], domain.pair[1]
            )));
        }
        if pre == eff {
            return Ok(NULL_ACTION);
        }
        Ok(self
            .relationship_rules
            .iter()
            .find(|r| {
                r.pre == pre
                    && r.eff == eff
                    && r.subjects.contains(subject)
                    && r.objects.contains(object)
            })
            .map(|r| r.action.as_str())
            .unwrap_or(NULL_ACTION))
    }

    /// Every legal attribute transition (identity pairs included), labeled.
    pub fn enumerate_attribute_transitions(&self) -> Vec<AttributeTransition> {
        let mut out = Vec::new();
        for domain in &self.attribute_domains {
            for object in &domain.objects {
                for pre in &domain.pair {
                    for eff in &domain.pair {
                        let action = self
                            .lookup_attribute_action(object, pre, eff)
                            .expect("enumerated tuple must be in-domain");
                        out.push(AttributeTransition {
                            object: object.clone(),
                            pre: pre.clone(),
                            eff: eff.clone(),
                            action: action.to_string(),
                        });
                    }
                }
            }
        }
        out
    }

    /// Every legal relationship transition (identity pairs included), labeled.
    pub fn enumerate_relationship_transitions(&self) -> Vec<RelationshipTransition> {
        let mut out = Vec::new();
        for domain in &self.relationship_domains {
            for subject in &domain.subjects {
                for object in &domain.objects {
                    for pre in &domain.pair {
                        for eff in &domain.pair {
                            let action = self
                                .lookup_relationship_action(subject, object, pre, eff)
                                .expect("enumerated tuple must be in-domain");
                            out.push(RelationshipTransition {
                                subject: subject.clone(),
                                object: object.clone(),
                                pre: pre.clone(),
                                eff: eff.clone(),
                                action: action.to_string(),
                            });
                        }
                    }
                }
            }
        }
        out
    }
}
