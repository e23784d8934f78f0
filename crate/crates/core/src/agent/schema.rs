use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

/// Declarative description of the structured answer a provider must produce.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DecisionSchema {
    pub fields: Vec<FieldSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(flatten)]
    pub ty: FieldType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choices: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub constraints: Vec<FieldConstraint>,
    #[serde(default = "required_default")]
    pub required: bool,
}

fn required_default() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum FieldType {
    Text,
    Number,
    Boolean,
    Choice,
    ListOfChoice,
    ListOf { fields: Vec<FieldSpec> },
    Object { fields: Vec<FieldSpec> },
}

/// Predicates checked on top of the type rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FieldConstraint {
    /// Text must not be blank; lists must have at least one item.
    NonEmpty,
    Range {
        #[serde(default)]
        min: Option<f64>,
        #[serde(default)]
        max: Option<f64>,
    },
    Integer,
    MemberOf { values: Vec<String> },
    /// Lowercase identifier: `[a-z_][a-z0-9_]*`.
    Identifier,
    /// Text that parses as a number.
    Numeric,
    /// List items (or the `key` field of object items) are pairwise distinct.
    Unique {
        #[serde(default)]
        key: Option<String>,
    },
    /// Applies `then` only when the sibling text field `field` equals `equals`.
    When {
        field: String,
        equals: String,
        then: Box<FieldConstraint>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FieldError {
    pub field_path: String,
    pub message: String,
}

/// Outcome of [`validate`]; empty iff the value conforms.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub errors: Vec<FieldError>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.errors.push(FieldError {
            field_path: path.into(),
            message: message.into(),
        });
    }

    pub fn paths(&self) -> BTreeSet<String> {
        self.errors.iter().map(|e| e.field_path.clone()).collect()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.errors.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{}: {}", e.field_path, e.message)?;
        }
        Ok(())
    }
}

/// A value tree produced by a provider for some [`DecisionSchema`].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DecisionValue(pub Value);

impl DecisionValue {
    pub fn get(&self, name: &str) -> Option<&Value> {
        self.0.get(name)
    }

    pub fn str(&self, name: &str) -> Option<&str> {
        self.get(name).and_then(Value::as_str)
    }

    pub fn f64(&self, name: &str) -> Option<f64> {
        self.get(name).and_then(Value::as_f64)
    }

    pub fn bool(&self, name: &str) -> Option<bool> {
        self.get(name).and_then(Value::as_bool)
    }

    pub fn strings(&self, name: &str) -> Vec<String> {
        self.get(name)
            .and_then(Value::as_array)
            .map(|a| {
                a.iter()
                    .filter_map(|v| v.as_str().map(str::to_string))
                    .collect()
            })
            .unwrap_or_default()
    }
}

impl FieldSpec {
    fn base(name: &str, description: &str, ty: FieldType) -> Self {
        FieldSpec {
            name: name.to_string(),
            description: description.to_string(),
            ty,
            choices: None,
            constraints: Vec::new(),
            required: true,
        }
    }

    pub fn text(name: &str, description: &str) -> Self {
        Self::base(name, description, FieldType::Text)
    }

    pub fn number(name: &str, description: &str) -> Self {
        Self::base(name, description, FieldType::Number)
    }

    pub fn boolean(name: &str, description: &str) -> Self {
        Self::base(name, description, FieldType::Boolean)
    }

    pub fn choice<S: AsRef<str>>(name: &str, description: &str, choices: &[S]) -> Self {
        let mut f = Self::base(name, description, FieldType::Choice);
        f.choices = Some(choices.iter().map(|c| c.as_ref().to_string()).collect());
        f
    }

    pub fn list_of_choice<S: AsRef<str>>(name: &str, description: &str, choices: &[S]) -> Self {
        let mut f = Self::base(name, description, FieldType::ListOfChoice);
        f.choices = Some(choices.iter().map(|c| c.as_ref().to_string()).collect());
        f
    }

    pub fn list_of(name: &str, description: &str, fields: Vec<FieldSpec>) -> Self {
        Self::base(name, description, FieldType::ListOf { fields })
    }

    pub fn object(name: &str, description: &str, fields: Vec<FieldSpec>) -> Self {
        Self::base(name, description, FieldType::Object { fields })
    }

    pub fn with(mut self, c: FieldConstraint) -> Self {
        self.constraints.push(c);
        self
    }

    pub fn optional(mut self) -> Self {
        self.required = false;
        self
    }

    fn subfields(&self) -> Option<&[FieldSpec]> {
        match &self.ty {
            FieldType::ListOf { fields } | FieldType::Object { fields } => Some(fields),
            _ => None,
        }
    }
}

/// Structural problems with a schema itself (duplicate names, empty choice lists).
pub fn check_schema(fields: &[FieldSpec]) -> Vec<String> {
    let mut problems = Vec::new();
    let mut seen = HashSet::new();
    for f in fields {
        if !seen.insert(f.name.as_str()) {
            problems.push(format!("duplicate field name `{}`", f.name));
        }
        if matches!(f.ty, FieldType::Choice | FieldType::ListOfChoice)
            && f.choices.as_ref().is_none_or(Vec::is_empty)
        {
            problems.push(format!("choice field `{}` has no choices", f.name));
        }
        if let Some(sub) = f.subfields() {
            problems.extend(check_schema(sub));
        }
    }
    problems
}

impl DecisionSchema {
    pub fn new(fields: Vec<FieldSpec>) -> Self {
        DecisionSchema { fields }
    }

    pub fn field_names(&self) -> Vec<&str> {
        self.fields.iter().map(|f| f.name.as_str()).collect()
    }

    /// Keeps only the fields named by `paths`. A path naming a list or scalar
    /// field keeps it whole; a path into an object keeps just that branch.
    pub fn restrict(&self, paths: &BTreeSet<String>) -> DecisionSchema {
        DecisionSchema {
            fields: restrict_fields(&self.fields, paths, ""),
        }
    }

    /// JSON Schema rendering used in provider prompts.
    pub fn to_json_schema(&self) -> Value {
        object_schema(&self.fields)
    }
}

fn restrict_fields(fields: &[FieldSpec], paths: &BTreeSet<String>, prefix: &str) -> Vec<FieldSpec> {
    let mut out = Vec::new();
    for f in fields {
        let path = join(prefix, &f.name);
        if paths.contains(&path) {
            out.push(f.clone());
            continue;
        }
        if let FieldType::Object { fields: sub } = &f.ty {
            let nested = format!("{path}.");
            if paths.iter().any(|p| p.starts_with(&nested)) {
                let mut g = f.clone();
                g.ty = FieldType::Object {
                    fields: restrict_fields(sub, paths, &path),
                };
                out.push(g);
            }
        }
    }
    out
}

/// Collapses item-level error paths (`actions.2.target`) to the list field
/// (`actions`), since list items are re-asked as a whole.
pub fn refinement_paths(schema: &DecisionSchema, report: &ValidationReport) -> BTreeSet<String> {
    report
        .errors
        .iter()
        .map(|e| truncate_at_list(&schema.fields, &e.field_path))
        .collect()
}

fn truncate_at_list(fields: &[FieldSpec], path: &str) -> String {
    let mut out: Vec<&str> = Vec::new();
    let mut level = fields;
    for seg in path.split('.') {
        out.push(seg);
        match level.iter().find(|f| f.name == seg) {
            Some(f) => match &f.ty {
                FieldType::Object { fields } => level = fields,
                _ => break,
            },
            None => break,
        }
    }
    out.join(".")
}

fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

fn object_schema(fields: &[FieldSpec]) -> Value {
    let mut props = Map::new();
    let mut required = Vec::new();
    for f in fields {
        props.insert(f.name.clone(), field_schema(f));
        if f.required {
            required.push(Value::String(f.name.clone()));
        }
    }
    json!({"type": "object", "properties": props, "required": required})
}

fn field_schema(f: &FieldSpec) -> Value {
    let mut s = match &f.ty {
        FieldType::Text => json!({"type": "string"}),
        FieldType::Number => json!({"type": "number"}),
        FieldType::Boolean => json!({"type": "boolean"}),
        FieldType::Choice => json!({"type": "string", "enum": f.choices.clone().unwrap_or_default()}),
        FieldType::ListOfChoice => json!({
            "type": "array",
            "items": {"type": "string", "enum": f.choices.clone().unwrap_or_default()}
        }),
        FieldType::ListOf { fields } => json!({"type": "array", "items": object_schema(fields)}),
        FieldType::Object { fields } => object_schema(fields),
    };
    let mut desc = f.description.clone();
    for c in &f.constraints {
        if !desc.is_empty() {
            desc.push(' ');
        }
        desc.push_str(&format!("[{}]", describe(c)));
    }
    if !desc.is_empty() {
        s["description"] = Value::String(desc);
    }
    s
}

fn describe(c: &FieldConstraint) -> String {
    match c {
        FieldConstraint::NonEmpty => "must not be empty".into(),
        FieldConstraint::Range { min, max } => match (min, max) {
            (Some(a), Some(b)) => format!("between {a} and {b}"),
            (Some(a), None) => format!("at least {a}"),
            (None, Some(b)) => format!("at most {b}"),
            (None, None) => "any number".into(),
        },
        FieldConstraint::Integer => "whole number".into(),
        FieldConstraint::MemberOf { values } => format!("one of: {}", values.join(", ")),
        FieldConstraint::Identifier => "lowercase identifier".into(),
        FieldConstraint::Numeric => "a number written as text".into(),
        FieldConstraint::Unique { key: Some(k) } => format!("`{k}` values must be distinct"),
        FieldConstraint::Unique { key: None } => "items must be distinct".into(),
        FieldConstraint::When {
            field,
            equals,
            then,
        } => format!("if {field} is \"{equals}\": {}", describe(then)),
    }
}

/// Checks `value` against `schema`, reporting every violating field path.
pub fn validate(value: &DecisionValue, schema: &DecisionSchema) -> ValidationReport {
    let mut report = ValidationReport::default();
    match &value.0 {
        Value::Object(map) => check_object(map, &schema.fields, "", &mut report),
        _ => {
            for f in schema.fields.iter().filter(|f| f.required) {
                report.push(f.name.clone(), "missing required field");
            }
        }
    }
    report
}

fn check_object(map: &Map<String, Value>, fields: &[FieldSpec], prefix: &str, report: &mut ValidationReport) {
    for f in fields {
        let path = join(prefix, &f.name);
        match map.get(&f.name) {
            None | Some(Value::Null) => {
                if f.required {
                    report.push(path, "missing required field");
                }
            }
            Some(v) => check_field(v, f, map, &path, report),
        }
    }
}

fn check_field(v: &Value, f: &FieldSpec, siblings: &Map<String, Value>, path: &str, report: &mut ValidationReport) {
    let before = report.errors.len();
    match &f.ty {
        FieldType::Text => {
            if !v.is_string() {
                report.push(path, "expected text");
            }
        }
        FieldType::Number => {
            if !v.is_number() {
                report.push(path, "expected a number");
            }
        }
        FieldType::Boolean => {
            if !v.is_boolean() {
                report.push(path, "expected true or false");
            }
        }
        FieldType::Choice => match v.as_str() {
            Some(s) if in_choices(f, s) => {}
            Some(s) => report.push(path, format!("`{s}` is not one of: {}", choices_text(f))),
            None => report.push(path, format!("expected one of: {}", choices_text(f))),
        },
        FieldType::ListOfChoice => match v.as_array() {
            Some(items) => {
                let bad: Vec<String> = items
                    .iter()
                    .filter(|i| !i.as_str().is_some_and(|s| in_choices(f, s)))
                    .map(|i| i.to_string())
                    .collect();
                if !bad.is_empty() {
                    report.push(
                        path,
                        format!("{} not among: {}", bad.join(", "), choices_text(f)),
                    );
                }
            }
            None => report.push(path, "expected a list"),
        },
        FieldType::ListOf { fields } => match v.as_array() {
            Some(items) => {
                for (i, item) in items.iter().enumerate() {
                    let ipath = format!("{path}.{i}");
                    match item.as_object() {
                        Some(m) => check_object(m, fields, &ipath, report),
                        None => report.push(ipath, "expected an object"),
                    }
                }
            }
            None => report.push(path, "expected a list"),
        },
        FieldType::Object { fields } => match v.as_object() {
            Some(m) => check_object(m, fields, path, report),
            None => report.push(path, "expected an object"),
        },
    }
    // type errors make constraint messages noise
    if report.errors.len() > before {
        return;
    }
    for c in &f.constraints {
        if let Some(msg) = check_constraint(c, v, siblings) {
            report.push(path, msg);
        }
    }
}

fn in_choices(f: &FieldSpec, s: &str) -> bool {
    f.choices.as_ref().is_some_and(|c| c.iter().any(|x| x == s))
}

fn choices_text(f: &FieldSpec) -> String {
    f.choices.clone().unwrap_or_default().join(", ")
}

fn check_constraint(c: &FieldConstraint, v: &Value, siblings: &Map<String, Value>) -> Option<String> {
    match c {
        FieldConstraint::NonEmpty => {
            let empty = match v {
                Value::String(s) => s.trim().is_empty(),
                Value::Array(a) => a.is_empty(),
                _ => false,
            };
            empty.then(|| "must not be empty".to_string())
        }
        FieldConstraint::Range { min, max } => {
            let x = v.as_f64()?;
            if min.is_some_and(|m| x < m) || max.is_some_and(|m| x > m) {
                Some(format!("{x} out of range ({})", describe(c)))
            } else {
                None
            }
        }
        FieldConstraint::Integer => {
            let x = v.as_f64()?;
            (x.fract() != 0.0).then(|| format!("{x} is not a whole number"))
        }
        FieldConstraint::MemberOf { values } => {
            let s = v.as_str()?;
            (!values.iter().any(|x| x == s))
                .then(|| format!("`{s}` is not one of: {}", values.join(", ")))
        }
        FieldConstraint::Identifier => {
            let s = v.as_str()?;
            (!is_identifier(s)).then(|| format!("`{s}` is not a lowercase identifier"))
        }
        FieldConstraint::Numeric => {
            let s = v.as_str()?;
            s.trim()
                .parse::<f64>()
                .is_err()
                .then(|| format!("`{s}` is not a number"))
        }
        FieldConstraint::Unique { key } => {
            let items = v.as_array()?;
            let mut seen = BTreeMap::new();
            for item in items {
                let k = match key {
                    Some(k) => item.get(k).cloned().unwrap_or(Value::Null),
                    None => item.clone(),
                };
                *seen.entry(k.to_string()).or_insert(0usize) += 1;
            }
            let dups: Vec<_> = seen.into_iter().filter(|(_, n)| *n > 1).map(|(k, _)| k).collect();
            (!dups.is_empty()).then(|| format!("duplicate entries: {}", dups.join(", ")))
        }
        FieldConstraint::When {
            field,
            equals,
            then,
        } => {
            let active = siblings.get(field).and_then(Value::as_str) == Some(equals.as_str());
            if active {
                check_constraint(then, v, siblings)
            } else {
                None
            }
        }
    }
}

pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase() || c == '_')
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

/// Overlays `patch` onto `base`: objects merge key by key, everything else is replaced.
pub fn merge(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, p) => *b = p.clone(),
    }
}
