//! Forestry policy ontology.
//!
//! Ten entity types and twelve stored relation types with domain/range
//! constraints. Three more labels (`isPublished`, `employ`, `isCited`) exist
//! only as inverses and are rewritten to their forward relation before
//! storage. `contain` is a stored relation in its own right and is also the
//! materialized inverse of `locate`, `belongTo` and `classifyTo`.
//!
//! Schemas are plain values: immutable once built, extended by producing a
//! new value with [`OntologySchema::extend`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const BUILTIN_TOML: &str = include_str!("../ontology/builtin.toml");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OntologyError {
    #[error("unknown entity type `{0}`")]
    UnknownEntityType(String),
    #[error("unknown relation type `{0}`")]
    UnknownRelationType(String),
    #[error("unknown relation label `{0}`")]
    UnknownRelationLabel(String),
    #[error("{0}")]
    SignatureViolation(SignatureViolation),
    #[error("conflicting definition for `{0}`")]
    ConflictingDefinition(String),
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("cannot parse schema: {0}")]
    Parse(String),
    #[error("cannot read schema file {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityTypeDef {
    pub code: String,
    pub display_name: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationTypeDef {
    pub code: String,
    pub display_name: String,
    pub domain: BTreeSet<String>,
    pub range: BTreeSet<String>,
    /// Label of the reverse direction. May name another stored relation
    /// (`contain`), the relation itself (symmetric `relevant`), or a label
    /// that exists only as an inverse (`isPublished`).
    pub inverse_code: Option<String>,
    pub inverse_display_name: Option<String>,
    pub is_symmetric: bool,
    pub is_deontic: bool,
}

impl RelationTypeDef {
    /// Label of the derived edge stored alongside every triple of this
    /// relation, if any. Symmetric relations never materialize.
    pub fn materialized_inverse(&self) -> Option<&str> {
        if self.is_symmetric {
            return None;
        }
        self.inverse_code.as_deref()
    }
}

/// Which side of a relation signature rejected a type pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolatedSide {
    Domain,
    Range,
    Both,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignatureViolation {
    pub head_type: String,
    pub relation: String,
    pub tail_type: String,
    pub side: ViolatedSide,
}

impl fmt::Display for SignatureViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match self.side {
            ViolatedSide::Domain => "head type outside domain",
            ViolatedSide::Range => "tail type outside range",
            ViolatedSide::Both => "head type outside domain and tail type outside range",
        };
        write!(f, "signature violation ({}, {}, {}): {}", self.head_type, self.relation, self.tail_type, what)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SignatureVerdict {
    Valid,
    Violation(SignatureViolation),
}

impl SignatureVerdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, SignatureVerdict::Valid)
    }

    pub fn into_result(self) -> Result<(), OntologyError> {
        match self {
            SignatureVerdict::Valid => Ok(()),
            SignatureVerdict::Violation(v) => Err(OntologyError::SignatureViolation(v)),
        }
    }
}

/// How a relation label maps onto stored relations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResolvedLabel<'a> {
    Forward(&'a RelationTypeDef),
    /// The label is the inverse of this forward relation.
    Inverse(&'a RelationTypeDef),
}

impl<'a> ResolvedLabel<'a> {
    pub fn relation(&self) -> &'a RelationTypeDef {
        match *self {
            ResolvedLabel::Forward(r) | ResolvedLabel::Inverse(r) => r,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Head,
    Tail,
}

/// A relation label rewritten into its stored forward direction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizedRelation {
    /// Which original argument ends up as the stored head.
    pub head_role: Role,
    pub head_type: String,
    pub relation: String,
    pub tail_type: String,
    pub tail_role: Role,
}

impl NormalizedRelation {
    pub fn swapped(&self) -> bool {
        self.head_role == Role::Tail
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OntologySchema {
    pub version: String,
    pub entity_types: BTreeMap<String, EntityTypeDef>,
    pub relation_types: BTreeMap<String, RelationTypeDef>,
}

/// The forestry policy schema shipped with the crate.
pub fn builtin_schema() -> OntologySchema {
    OntologySchema::from_toml_str(BUILTIN_TOML).expect("embedded builtin ontology is valid")
}

/// Source text of the embedded builtin schema file.
pub fn builtin_schema_toml() -> &'static str {
    BUILTIN_TOML
}

pub fn is_identifier(code: &str) -> bool {
    let mut chars = code.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl OntologySchema {
    pub fn empty(version: impl Into<String>) -> Self {
        OntologySchema { version: version.into(), entity_types: BTreeMap::new(), relation_types: BTreeMap::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.entity_types.is_empty() && self.relation_types.is_empty()
    }

    pub fn from_toml_str(text: &str) -> Result<Self, OntologyError> {
        let file: SchemaFile = toml::from_str(text).map_err(|e| OntologyError::Parse(e.to_string()))?;
        let schema = file.into_schema();
        schema.check_invariants()?;
        Ok(schema)
    }

    pub fn load(path: &Path) -> Result<Self, OntologyError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| OntologyError::Io { path: path.display().to_string(), message: e.to_string() })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&SchemaFile::from_schema(self)).expect("schema serializes to toml")
    }

    pub fn entity_type(&self, code: &str) -> Option<&EntityTypeDef> {
        self.entity_types.get(code)
    }

    pub fn relation(&self, code: &str) -> Option<&RelationTypeDef> {
        self.relation_types.get(code)
    }

    /// Resolves any relation label, forward or inverse.
    pub fn resolve_label(&self, label: &str) -> Option<ResolvedLabel<'_>> {
        if let Some(rel) = self.relation_types.get(label) {
            return Some(ResolvedLabel::Forward(rel));
        }
        self.relation_types.values().find(|r| r.inverse_code.as_deref() == Some(label)).map(ResolvedLabel::Inverse)
    }

    /// Every relation label (stored codes plus inverse-only labels), sorted.
    pub fn relation_labels(&self) -> Vec<String> {
        let mut labels: BTreeSet<String> = self.relation_types.keys().cloned().collect();
        for rel in self.relation_types.values() {
            if let Some(inv) = &rel.inverse_code {
                labels.insert(inv.clone());
            }
        }
        labels.into_iter().collect()
    }

    pub fn label_display_name<'a>(&'a self, label: &'a str) -> Option<&'a str> {
        match self.resolve_label(label)? {
            ResolvedLabel::Forward(r) => Some(&r.display_name),
            ResolvedLabel::Inverse(r) => Some(r.inverse_display_name.as_deref().unwrap_or(label)),
        }
    }

    /// Legal (head types, tail types) for a label as written, i.e. with the
    /// sides swapped for inverse labels.
    pub fn label_signature(&self, label: &str) -> Option<(&BTreeSet<String>, &BTreeSet<String>)> {
        match self.resolve_label(label)? {
            ResolvedLabel::Forward(r) => Some((&r.domain, &r.range)),
            ResolvedLabel::Inverse(r) => Some((&r.range, &r.domain)),
        }
    }

    pub fn validate_signature(
        &self,
        head_type: &str,
        relation: &str,
        tail_type: &str,
    ) -> Result<SignatureVerdict, OntologyError> {
        if !self.entity_types.contains_key(head_type) {
            return Err(OntologyError::UnknownEntityType(head_type.to_string()));
        }
        if !self.entity_types.contains_key(tail_type) {
            return Err(OntologyError::UnknownEntityType(tail_type.to_string()));
        }
        let rel = self
            .relation_types
            .get(relation)
            .ok_or_else(|| OntologyError::UnknownRelationType(relation.to_string()))?;
        let head_ok = rel.domain.contains(head_type);
        let tail_ok = rel.range.contains(tail_type);
        let side = match (head_ok, tail_ok) {
            (true, true) => return Ok(SignatureVerdict::Valid),
            (false, true) => ViolatedSide::Domain,
            (true, false) => ViolatedSide::Range,
            (false, false) => ViolatedSide::Both,
        };
        Ok(SignatureVerdict::Violation(SignatureViolation {
            head_type: head_type.to_string(),
            relation: relation.to_string(),
            tail_type: tail_type.to_string(),
            side,
        }))
    }

    /// Rewrites an inverse label into its forward relation with the argument
    /// roles swapped, then validates the resulting signature.
    pub fn normalize_relation(
        &self,
        head_type: &str,
        label: &str,
        tail_type: &str,
    ) -> Result<NormalizedRelation, OntologyError> {
        let resolved =
            self.resolve_label(label).ok_or_else(|| OntologyError::UnknownRelationLabel(label.to_string()))?;
        let normalized = match resolved {
            ResolvedLabel::Forward(rel) => NormalizedRelation {
                head_role: Role::Head,
                head_type: head_type.to_string(),
                relation: rel.code.clone(),
                tail_type: tail_type.to_string(),
                tail_role: Role::Tail,
            },
            ResolvedLabel::Inverse(rel) => NormalizedRelation {
                head_role: Role::Tail,
                head_type: tail_type.to_string(),
                relation: rel.code.clone(),
                tail_type: head_type.to_string(),
                tail_role: Role::Head,
            },
        };
        self.validate_signature(&normalized.head_type, &normalized.relation, &normalized.tail_type)?.into_result()?;
        Ok(normalized)
    }

    /// Merges `extension` into `self`. Identical re-declarations are
    /// accepted; differing ones fail with `ConflictingDefinition`.
    pub fn extend(&self, extension: &OntologySchema) -> Result<OntologySchema, OntologyError> {
        if extension.is_empty() {
            return Ok(self.clone());
        }
        let mut merged = self.clone();
        for (code, def) in &extension.entity_types {
            match merged.entity_types.get(code) {
                Some(existing) if existing != def => return Err(OntologyError::ConflictingDefinition(code.clone())),
                Some(_) => {}
                None => {
                    merged.entity_types.insert(code.clone(), def.clone());
                }
            }
        }
        for (code, def) in &extension.relation_types {
            match merged.relation_types.get(code) {
                Some(existing) if existing != def => return Err(OntologyError::ConflictingDefinition(code.clone())),
                Some(_) => {}
                None => {
                    merged.relation_types.insert(code.clone(), def.clone());
                }
            }
        }
        if !extension.version.is_empty() && extension.version != self.version {
            merged.version = format!("{}+{}", self.version, extension.version);
        }
        merged.check_invariants()?;
        Ok(merged)
    }

    pub fn check_invariants(&self) -> Result<(), OntologyError> {
        let invalid = |msg: String| Err(OntologyError::InvalidSchema(msg));
        for (code, def) in &self.entity_types {
            if code != &def.code {
                return invalid(format!("entity type key `{code}` holds `{}`", def.code));
            }
            if !is_identifier(code) {
                return invalid(format!("entity type code `{code}` is not an identifier"));
            }
        }
        // inverse-only label -> forward codes naming it
        let mut inverse_owners: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for (code, rel) in &self.relation_types {
            if code != &rel.code {
                return invalid(format!("relation key `{code}` holds `{}`", rel.code));
            }
            if !is_identifier(code) {
                return invalid(format!("relation code `{code}` is not an identifier"));
            }
            if rel.domain.is_empty() || rel.range.is_empty() {
                return invalid(format!("relation `{code}` has an empty domain or range"));
            }
            for t in rel.domain.iter().chain(rel.range.iter()) {
                if !self.entity_types.contains_key(t) {
                    return invalid(format!("relation `{code}` references undeclared type `{t}`"));
                }
            }
            if rel.is_symmetric {
                if rel.domain != rel.range {
                    return invalid(format!("symmetric relation `{code}` has domain != range"));
                }
                if rel.inverse_code.as_deref().is_some_and(|inv| inv != code) {
                    return invalid(format!("symmetric relation `{code}` names a distinct inverse"));
                }
            }
            let Some(inv) = rel.inverse_code.as_deref() else { continue };
            if !is_identifier(inv) {
                return invalid(format!("inverse label `{inv}` of `{code}` is not an identifier"));
            }
            if inv == code {
                if !rel.is_symmetric {
                    return invalid(format!("relation `{code}` is its own inverse but not symmetric"));
                }
                continue;
            }
            match self.relation_types.get(inv) {
                Some(target) => {
                    // materialized reverse edges must themselves validate
                    if !rel.range.is_subset(&target.domain) || !rel.domain.is_subset(&target.range) {
                        return invalid(format!("inverse `{inv}` of `{code}` cannot hold the reversed signature"));
                    }
                }
                None => inverse_owners.entry(inv).or_default().push(code),
            }
        }
        for (label, owners) in inverse_owners {
            if owners.len() > 1 {
                return invalid(format!("inverse label `{label}` is claimed by {}", owners.join(", ")));
            }
            if self.entity_types.contains_key(label) {
                return invalid(format!("inverse label `{label}` collides with an entity type"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SchemaFile {
    version: String,
    #[serde(default)]
    entity_types: BTreeMap<String, EntityEntry>,
    #[serde(default)]
    relation_types: BTreeMap<String, RelationEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntityEntry {
    display_name: String,
    #[serde(default)]
    description: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RelationEntry {
    display_name: String,
    domain: BTreeSet<String>,
    range: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    inverse_code: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    inverse_display_name: Option<String>,
    #[serde(default, skip_serializing_if = "is_false")]
    is_symmetric: bool,
    #[serde(default, skip_serializing_if = "is_false")]
    is_deontic: bool,
}

fn is_false(b: &bool) -> bool {
    !*b
}

impl SchemaFile {
    fn into_schema(self) -> OntologySchema {
        OntologySchema {
            version: self.version,
            entity_types: self
                .entity_types
                .into_iter()
                .map(|(code, e)| {
                    let def =
                        EntityTypeDef { code: code.clone(), display_name: e.display_name, description: e.description };
                    (code, def)
                })
                .collect(),
            relation_types: self
                .relation_types
                .into_iter()
                .map(|(code, r)| {
                    let def = RelationTypeDef {
                        code: code.clone(),
                        display_name: r.display_name,
                        domain: r.domain,
                        range: r.range,
                        inverse_code: r.inverse_code,
                        inverse_display_name: r.inverse_display_name,
                        is_symmetric: r.is_symmetric,
                        is_deontic: r.is_deontic,
                    };
                    (code, def)
                })
                .collect(),
        }
    }

    fn from_schema(schema: &OntologySchema) -> Self {
        SchemaFile {
            version: schema.version.clone(),
            entity_types: schema
                .entity_types
                .iter()
                .map(|(code, e)| {
                    let entry =
                        EntityEntry { display_name: e.display_name.clone(), description: e.description.clone() };
                    (code.clone(), entry)
                })
                .collect(),
            relation_types: schema
                .relation_types
                .iter()
                .map(|(code, r)| {
                    let entry = RelationEntry {
                        display_name: r.display_name.clone(),
                        domain: r.domain.clone(),
                        range: r.range.clone(),
                        inverse_code: r.inverse_code.clone(),
                        inverse_display_name: r.inverse_display_name.clone(),
                        is_symmetric: r.is_symmetric,
                        is_deontic: r.is_deontic,
                    };
                    (code.clone(), entry)
                })
                .collect(),
        }
    }
}
