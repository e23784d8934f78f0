//! Structured decisions from a pluggable provider, with iterative refinement
//! of only the fields that failed validation.

mod provider;
mod schema;

pub use provider::{
    AttemptKind, DecisionProvider, ProviderError, ProviderRequest, ProviderSpec, ScriptedProvider,
    WireProvider, API_KEY_ENV, DEFAULT_WIRE_MODEL,
};
pub use schema::{
    check_schema, is_identifier, merge, refinement_paths, validate, DecisionSchema,
    DecisionValue, FieldConstraint, FieldError, FieldSpec, FieldType, ValidationReport,
};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub const DEFAULT_MAX_ATTEMPTS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRequest {
    /// Task framing, guidance and in-context examples.
    pub context: String,
    pub schema: DecisionSchema,
    pub max_attempts: usize,
}

impl DecisionRequest {
    pub fn new(context: impl Into<String>, schema: DecisionSchema) -> Self {
        DecisionRequest {
            context: context.into(),
            schema,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
        }
    }

    pub fn with_max_attempts(mut self, n: usize) -> Self {
        self.max_attempts = n;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("refinement exhausted after {calls} provider calls:\n{report}")]
    RefinementExhausted {
        report: ValidationReport,
        calls: usize,
    },
    #[error("invalid decision request: {0}")]
    InvalidRequest(String),
}

/// What happened while reaching a decision.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DecisionTrace {
    pub calls: usize,
    /// Report after each provider call, in order.
    pub reports: Vec<ValidationReport>,
}

const SYSTEM_PREAMBLE: &str = "You are the decision agent of a data query system. \
Reply with exactly one JSON object that conforms to the JSON schema below. \
Use only the listed fields and allowed values.";

fn system_prompt(schema: &DecisionSchema) -> String {
    format!(
        "{SYSTEM_PREAMBLE}\n\nJSON schema:\n{}",
        serde_json::to_string_pretty(&schema.to_json_schema()).expect("schema renders")
    )
}

/// Pulls the first parseable top-level JSON object out of free text.
pub fn extract_json_object(text: &str) -> Option<Value> {
    for (i, _) in text.match_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&text[i..]).into_iter::<Value>();
        if let Some(Ok(v @ Value::Object(_))) = stream.next() {
            return Some(v);
        }
    }
    None
}

fn unparseable(schema: &DecisionSchema) -> ValidationReport {
    let mut r = ValidationReport::default();
    for f in &schema.fields {
        r.push(f.name.clone(), "no JSON object found in the response");
    }
    r
}

fn error_lines(report: &ValidationReport) -> String {
    report
        .errors
        .iter()
        .map(|e| format!("- {}: {}", e.field_path, e.message))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Asks `provider` for a value that satisfies `request.schema`.
pub fn decide(
    provider: &dyn DecisionProvider,
    request: &DecisionRequest,
) -> Result<DecisionValue, AgentError> {
    decide_traced(provider, request).map(|(v, _)| v)
}

/// [`decide`], also returning the per-call validation history.
///
/// One initial call against the full schema, then up to `max_attempts - 1`
/// refinement calls that each re-ask only the failing fields and merge the
/// answer into the running value, then one last full-schema retry that shows
/// the provider its previous raw output.
pub fn decide_traced(
    provider: &dyn DecisionProvider,
    request: &DecisionRequest,
) -> Result<(DecisionValue, DecisionTrace), AgentError> {
    if request.max_attempts == 0 {
        return Err(AgentError::InvalidRequest("max_attempts must be at least 1".into()));
    }
    let problems = check_schema(&request.schema.fields);
    if !problems.is_empty() {
        return Err(AgentError::InvalidRequest(problems.join("; ")));
    }
    let schema = &request.schema;
    let mut trace = DecisionTrace::default();

    let first = ProviderRequest {
        kind: AttemptKind::Initial,
        system: system_prompt(schema),
        prompt: request.context.clone(),
        schema: schema.clone(),
    };
    let mut raw = provider.complete(&first)?;
    trace.calls += 1;
    let mut current = extract_json_object(&raw).unwrap_or(Value::Object(Default::default()));
    let mut report = match extract_json_object(&raw) {
        Some(_) => validate(&DecisionValue(current.clone()), schema),
        None => unparseable(schema),
    };
    trace.reports.push(report.clone());

    for _ in 1..request.max_attempts {
        if report.is_valid() {
            return Ok((DecisionValue(current), trace));
        }
        let sub = schema.restrict(&refinement_paths(schema, &report));
        let prompt = format!(
            "{}\n\nYour previous answer had these problems:\n{}\n\n\
             Return a JSON object with corrected values for these fields only: {}.",
            request.context,
            error_lines(&report),
            sub.field_names().join(", ")
        );
        let call = ProviderRequest {
            kind: AttemptKind::Refinement,
            system: system_prompt(&sub),
            prompt,
            schema: sub,
        };
        raw = provider.complete(&call)?;
        trace.calls += 1;
        if let Some(patch) = extract_json_object(&raw) {
            merge(&mut current, &patch);
            report = validate(&DecisionValue(current.clone()), schema);
        }
        // an unparseable refinement leaves the previous report standing
        trace.reports.push(report.clone());
    }
    if report.is_valid() {
        return Ok((DecisionValue(current), trace));
    }

    let prompt = format!(
        "{}\n\nYour previous output could not be used:\n{}\n\nProblems:\n{}\n\n\
         Return the complete JSON object again.",
        request.context,
        raw,
        error_lines(&report)
    );
    let last = ProviderRequest {
        kind: AttemptKind::FinalRetry,
        system: system_prompt(schema),
        prompt,
        schema: schema.clone(),
    };
    raw = provider.complete(&last)?;
    trace.calls += 1;
    if let Some(v) = extract_json_object(&raw) {
        let r = validate(&DecisionValue(v.clone()), schema);
        trace.reports.push(r.clone());
        if r.is_valid() {
            return Ok((DecisionValue(v), trace));
        }
        report = r;
    } else {
        report = unparseable(schema);
        trace.reports.push(report.clone());
    }
    Err(AgentError::RefinementExhausted {
        report,
        calls: trace.calls,
    })
}
