//! Tag predicates and first-match-wins classification rules.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{MappingMethod, Protection};

pub type Tags = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TagOp {
    Equals(String),
    /// Key present with a different value. An absent key does not match.
    NotEquals(String),
    Exists,
    OneOf(Vec<String>),
}

/// A single test against a tag map. In TOML: `{ key = "highway", equals =
/// "cycleway" }`, `{ key = "bridge", exists = true }`, `{ key = "bicycle",
/// not_equals = "no" }` or `{ key = "cycleway", one_of = ["lane", "track"] }`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PredicateSpec", into = "PredicateSpec")]
pub struct Predicate {
    pub key: String,
    pub op: TagOp,
}

impl Predicate {
    pub fn equals(key: &str, value: &str) -> Self {
        Predicate {
            key: key.into(),
            op: TagOp::Equals(value.into()),
        }
    }

    pub fn not_equals(key: &str, value: &str) -> Self {
        Predicate {
            key: key.into(),
            op: TagOp::NotEquals(value.into()),
        }
    }

    pub fn exists(key: &str) -> Self {
        Predicate {
            key: key.into(),
            op: TagOp::Exists,
        }
    }

    pub fn one_of(key: &str, values: &[&str]) -> Self {
        Predicate {
            key: key.into(),
            op: TagOp::OneOf(values.iter().map(|v| v.to_string()).collect()),
        }
    }

    pub fn matches(&self, tags: &Tags) -> bool {
        let Some(value) = tags.get(&self.key) else {
            return false;
        };
        match &self.op {
            TagOp::Equals(v) => value == v,
            TagOp::NotEquals(v) => value != v,
            TagOp::Exists => true,
            TagOp::OneOf(vs) => vs.iter().any(|v| v == value),
        }
    }

    /// Evaluates against the union of several tag maps.
    pub fn matches_any(&self, maps: &[Tags]) -> bool {
        maps.iter().any(|m| self.matches(m))
    }

    fn validate(&self) -> Result<()> {
        if self.key.trim().is_empty() {
            return Err(Error::Config("tag predicate with empty key".into()));
        }
        if let TagOp::OneOf(vs) = &self.op {
            if vs.is_empty() {
                return Err(Error::Config(format!(
                    "predicate on '{}' has an empty one_of list",
                    self.key
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PredicateSpec {
    key: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    equals: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    not_equals: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    exists: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    one_of: Option<Vec<String>>,
}

impl TryFrom<PredicateSpec> for Predicate {
    type Error = String;

    fn try_from(spec: PredicateSpec) -> Result<Self, String> {
        let mut ops = Vec::new();
        if let Some(v) = spec.equals {
            ops.push(TagOp::Equals(v));
        }
        if let Some(v) = spec.not_equals {
            ops.push(TagOp::NotEquals(v));
        }
        match spec.exists {
            Some(true) => ops.push(TagOp::Exists),
            Some(false) => {
                return Err(format!(
                    "predicate on '{}': exists = false is not supported",
                    spec.key
                ))
            }
            None => {}
        }
        if let Some(vs) = spec.one_of {
            ops.push(TagOp::OneOf(vs));
        }
        if ops.len() != 1 {
            return Err(format!(
                "predicate on '{}' needs exactly one of equals, not_equals, exists, one_of",
                spec.key
            ));
        }
        Ok(Predicate {
            key: spec.key,
            op: ops.pop().unwrap(),
        })
    }
}

impl From<Predicate> for PredicateSpec {
    fn from(p: Predicate) -> Self {
        let mut spec = PredicateSpec {
            key: p.key,
            ..Default::default()
        };
        match p.op {
            TagOp::Equals(v) => spec.equals = Some(v),
            TagOp::NotEquals(v) => spec.not_equals = Some(v),
            TagOp::Exists => spec.exists = Some(true),
            TagOp::OneOf(vs) => spec.one_of = Some(vs),
        }
        spec
    }
}

/// Conjunction of predicates. Empty matches everything.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AllOf(pub Vec<Predicate>);

impl AllOf {
    pub fn matches(&self, tags: &Tags) -> bool {
        self.0.iter().all(|p| p.matches(tags))
    }

    fn validate(&self) -> Result<()> {
        self.0.iter().try_for_each(Predicate::validate)
    }
}

/// Disjunction of conjunctions. Empty matches nothing.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AnyOf(pub Vec<AllOf>);

impl AnyOf {
    pub fn matches(&self, tags: &Tags) -> bool {
        self.0.iter().any(|c| c.matches(tags))
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        self.0.iter().try_for_each(AllOf::validate)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule<T> {
    #[serde(default)]
    pub when: Vec<Predicate>,
    pub then: T,
}

impl<T> Rule<T> {
    pub fn new(when: Vec<Predicate>, then: T) -> Self {
        Rule { when, then }
    }

    pub fn default_rule(then: T) -> Self {
        Rule {
            when: Vec::new(),
            then,
        }
    }

    pub fn matches(&self, tags: &Tags) -> bool {
        self.when.iter().all(|p| p.matches(tags))
    }
}

/// Value of the first rule whose predicates all hold.
pub fn first_match<'a, T>(rules: &'a [Rule<T>], tags: &Tags) -> Option<&'a T> {
    rules.iter().find(|r| r.matches(tags)).map(|r| &r.then)
}

fn validate_rules<T>(name: &str, rules: &[Rule<T>]) -> Result<()> {
    match rules.last() {
        None => return Err(Error::Config(format!("{name} rules are empty"))),
        Some(last) if !last.when.is_empty() => {
            return Err(Error::Config(format!(
                "{name} rules must end with a default rule (empty `when`)"
            )))
        }
        _ => {}
    }
    rules
        .iter()
        .flat_map(|r| r.when.iter())
        .try_for_each(Predicate::validate)
}

/// Decides which features count as bicycle infrastructure and how each is
/// classified.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassificationRuleset {
    /// A feature is included if any conjunction holds. An empty list
    /// includes every feature.
    #[serde(default)]
    pub include: AnyOf,
    pub protection: Vec<Rule<Protection>>,
    pub bidirectional: Vec<Rule<bool>>,
    pub mapping_method: Vec<Rule<MappingMethod>>,
    /// Any matching predicate marks the feature as bridge or tunnel.
    #[serde(default)]
    pub grade_separated: Vec<Predicate>,
}

impl ClassificationRuleset {
    pub fn validate(&self) -> Result<()> {
        self.include.validate()?;
        validate_rules("protection", &self.protection)?;
        validate_rules("bidirectional", &self.bidirectional)?;
        validate_rules("mapping_method", &self.mapping_method)?;
        self.grade_separated
            .iter()
            .try_for_each(Predicate::validate)
    }

    pub fn includes(&self, tags: &Tags) -> bool {
        self.include.is_empty() || self.include.matches(tags)
    }

    /// Illustrative ruleset for OSM bicycle infrastructure. Users are
    /// expected to adapt it to local tagging practice.
    pub fn osm_default() -> Self {
        let p = Predicate::equals;
        let lanes = &["lane", "track", "opposite_lane", "opposite_track", "shared_busway"];
        ClassificationRuleset {
            include: AnyOf(vec![
                AllOf(vec![p("highway", "cycleway")]),
                AllOf(vec![Predicate::one_of("cycleway", lanes)]),
                AllOf(vec![Predicate::one_of("cycleway:left", lanes)]),
                AllOf(vec![Predicate::one_of("cycleway:right", lanes)]),
                AllOf(vec![Predicate::one_of("cycleway:both", lanes)]),
                AllOf(vec![p("highway", "path"), p("bicycle", "designated")]),
                AllOf(vec![p("highway", "footway"), p("bicycle", "designated")]),
                AllOf(vec![p("highway", "track"), p("bicycle", "designated")]),
            ]),
            protection: vec![
                Rule::new(vec![p("highway", "cycleway")], Protection::Protected),
                Rule::new(vec![p("highway", "path")], Protection::Protected),
                Rule::new(vec![p("highway", "footway")], Protection::Protected),
                Rule::new(vec![p("highway", "track")], Protection::Protected),
                Rule::new(
                    vec![Predicate::one_of("cycleway", &["track", "opposite_track"])],
                    Protection::Protected,
                ),
                Rule::new(vec![p("cycleway:both", "track")], Protection::Protected),
                Rule::new(vec![p("cycleway:left", "track")], Protection::Protected),
                Rule::new(vec![p("cycleway:right", "track")], Protection::Protected),
                Rule::default_rule(Protection::Unprotected),
            ],
            bidirectional: vec![
                Rule::new(vec![p("oneway:bicycle", "yes")], false),
                Rule::new(vec![p("highway", "cycleway"), p("oneway", "yes")], false),
                Rule::new(vec![p("oneway:bicycle", "no")], true),
                Rule::new(vec![p("highway", "cycleway")], true),
                Rule::new(vec![p("highway", "path")], true),
                Rule::new(vec![p("highway", "footway")], true),
                Rule::new(vec![p("highway", "track")], true),
                Rule::default_rule(false),
            ],
            mapping_method: vec![
                Rule::new(
                    vec![Predicate::one_of(
                        "highway",
                        &["cycleway", "path", "footway", "track"],
                    )],
                    MappingMethod::TrueGeometry,
                ),
                Rule::default_rule(MappingMethod::Centerline),
            ],
            grade_separated: vec![
                Predicate::not_equals("bridge", "no"),
                Predicate::not_equals("tunnel", "no"),
            ],
        }
    }

    /// Ruleset for reference data whose attributes were mapped onto the
    /// field names `protection`, `bidirectional` and `bridge`/`tunnel`.
    pub fn reference_default() -> Self {
        let yes = &["yes", "true", "1"];
        ClassificationRuleset {
            include: AnyOf::default(),
            protection: vec![
                Rule::new(
                    vec![Predicate::one_of("protection", &["protected", "yes", "true", "1"])],
                    Protection::Protected,
                ),
                Rule::default_rule(Protection::Unprotected),
            ],
            bidirectional: vec![
                Rule::new(vec![Predicate::one_of("bidirectional", yes)], true),
                Rule::default_rule(false),
            ],
            mapping_method: vec![Rule::default_rule(MappingMethod::TrueGeometry)],
            grade_separated: vec![
                Predicate::one_of("bridge", yes),
                Predicate::one_of("tunnel", yes),
            ],
        }
    }
}

/// Condition under which a centerline-mapped edge stands for infrastructure
/// on both sides of the street. Defaults to the common OSM encodings.
pub fn default_centerline_both_sides() -> AnyOf {
    let two_sided = &["lane", "track", "shared_busway", "opposite_lane", "opposite_track"];
    AnyOf(vec![
        AllOf(vec![Predicate::one_of("cycleway", two_sided)]),
        AllOf(vec![Predicate::one_of("cycleway:both", two_sided)]),
        AllOf(vec![
            Predicate::one_of("cycleway:left", two_sided),
            Predicate::one_of("cycleway:right", two_sided),
        ]),
    ])
}
