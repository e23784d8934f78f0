use std::collections::{BTreeSet, HashSet};

use thiserror::Error;

use crate::agent::{is_identifier, ValidationReport};
use crate::roadgraph::{AttrValue, Edge};
use crate::scalar::Scalar;

use super::{
    Action, ComparatorKind, Constraint, ConstraintAction, DriverSpec, DriverState, Operand, OperationKind,
    Source, Term,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ActionFault {
    #[error("action `{action}`: value {value} is not numeric")]
    NonNumeric { action: String, value: String },
    #[error("action `{action}`: division by zero")]
    DivisionByZero { action: String },
    #[error("action `{action}`: unknown driver attribute `{target}`")]
    UnknownTarget { action: String, target: String },
    #[error("action `{action}`: unknown operation `{operation}`")]
    UnknownOperation { action: String, operation: String },
    #[error("action `{action}`: unknown operand source `{given}`")]
    UnknownSource { action: String, given: String },
    #[error("action `{action}`: objective became NaN")]
    NotANumber { action: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Copy)]
pub enum Verdict {
    Pass,
    Skip,
}

/// Which constraints triggered on one edge, with notes on any that could not
/// be evaluated.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConstraintCheck {
    pub triggered: Vec<usize>,
    pub diagnostics: Vec<String>,
}

impl ConstraintCheck {
    pub fn verdict(&self) -> Verdict {
        if self.triggered.is_empty() {
            Verdict::Pass
        } else {
            Verdict::Skip
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Resolved<S> {
    Num(S),
    Text(String),
    Missing,
}

fn from_attr<S: Scalar>(v: Option<AttrValue<S>>) -> Resolved<S> {
    match v {
        Some(AttrValue::Number(n)) => Resolved::Num(n),
        Some(AttrValue::Text(t)) => Resolved::Text(t),
        None => Resolved::Missing,
    }
}

fn resolve<S: Scalar>(t: &Term<S>, state: &DriverState<S>, edge: &Edge<S>) -> Result<Resolved<S>, String> {
    Ok(match t {
        Term::Number(n) => Resolved::Num(*n),
        Term::Text(s) => Resolved::Text(s.clone()),
        Term::Operand(Operand { source, attribute }) => match source {
            Source::Edge => from_attr(edge.attribute(attribute)),
            Source::Driver => state.get(attribute).map_or(Resolved::Missing, Resolved::Num),
            Source::Unknown(s) => return Err(s.clone()),
        },
    })
}

/// Applies one action to a copy of `state`. Missing edge attributes read as 0.
pub fn apply_action<S: Scalar>(
    state: &DriverState<S>,
    a: &Action<S>,
    edge: &Edge<S>,
) -> Result<DriverState<S>, ActionFault> {
    let mut next = state.clone();
    apply_in_place(&mut next, a, edge)?;
    Ok(next)
}

fn apply_in_place<S: Scalar>(state: &mut DriverState<S>, a: &Action<S>, edge: &Edge<S>) -> Result<(), ActionFault> {
    let Some(op) = a.operation.kind() else {
        return Err(ActionFault::UnknownOperation {
            action: a.name.clone(),
            operation: String::from(a.operation.clone()),
        });
    };
    let Some(&current) = state.values.get(&a.target) else {
        return Err(ActionFault::UnknownTarget {
            action: a.name.clone(),
            target: a.target.clone(),
        });
    };
    if op == OperationKind::None {
        return Ok(());
    }
    let value = match resolve(&a.value, state, edge) {
        Ok(Resolved::Num(n)) => n,
        Ok(Resolved::Missing) => S::zero(),
        Ok(Resolved::Text(t)) => {
            return Err(ActionFault::NonNumeric {
                action: a.name.clone(),
                value: format!("{t:?}"),
            })
        }
        Err(given) => {
            return Err(ActionFault::UnknownSource {
                action: a.name.clone(),
                given,
            })
        }
    };
    let updated = match op {
        OperationKind::Add => current + value,
        OperationKind::Subtract => current - value,
        OperationKind::Multiply => current * value,
        OperationKind::Divide if value == S::zero() => {
            return Err(ActionFault::DivisionByZero { action: a.name.clone() })
        }
        OperationKind::Divide => current / value,
        OperationKind::Set => value,
        OperationKind::None => current,
    };
    if updated.is_nan() {
        return Err(ActionFault::NotANumber { action: a.name.clone() });
    }
    state.values.insert(a.target.clone(), updated);
    Ok(())
}

/// Applies every action in order, starting from `state`.
pub fn apply_actions<S: Scalar>(
    state: &DriverState<S>,
    actions: &[Action<S>],
    edge: &Edge<S>,
) -> Result<DriverState<S>, ActionFault> {
    let mut next = state.clone();
    for a in actions {
        apply_in_place(&mut next, a, edge)?;
    }
    Ok(next)
}

fn texts_equal(a: &str, b: &str) -> bool {
    a.trim().to_lowercase() == b.trim().to_lowercase()
}

/// Evaluates each constraint's comparison; a true comparison triggers it.
///
/// A missing edge attribute reads as `"None"` when compared with text and as
/// 0 otherwise. Ordering operators need two numbers and `=`/`≠` need two
/// values of the same kind; anything else does not trigger and is noted.
pub fn check_constraints<S: Scalar>(
    state: &DriverState<S>,
    edge: &Edge<S>,
    constraints: &[Constraint<S>],
) -> ConstraintCheck {
    let mut out = ConstraintCheck::default();
    for (i, c) in constraints.iter().enumerate() {
        let Some(op) = c.operator.kind() else {
            out.diagnostics.push(format!("constraint `{}`: unknown operator", c.name));
            continue;
        };
        let (a, b) = match (resolve(&c.operand1, state, edge), resolve(&c.operand2, state, edge)) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(s), _) | (_, Err(s)) => {
                out.diagnostics
                    .push(format!("constraint `{}`: unknown operand source `{s}`", c.name));
                continue;
            }
        };
        let fill = |x: Resolved<S>, other: &Resolved<S>| match (x, other) {
            (Resolved::Missing, Resolved::Text(_)) => Resolved::Text("None".into()),
            (Resolved::Missing, _) => Resolved::Num(S::zero()),
            (x, _) => x,
        };
        let a2 = fill(a, &b);
        let b2 = fill(b, &a2);
        let fired = match (op, &a2, &b2) {
            (ComparatorKind::Gt, Resolved::Num(x), Resolved::Num(y)) => Some(x > y),
            (ComparatorKind::Ge, Resolved::Num(x), Resolved::Num(y)) => Some(x >= y),
            (ComparatorKind::Lt, Resolved::Num(x), Resolved::Num(y)) => Some(x < y),
            (ComparatorKind::Le, Resolved::Num(x), Resolved::Num(y)) => Some(x <= y),
            (ComparatorKind::Eq, Resolved::Num(x), Resolved::Num(y)) => Some(x == y),
            (ComparatorKind::Ne, Resolved::Num(x), Resolved::Num(y)) => Some(x != y),
            (ComparatorKind::Eq, Resolved::Text(x), Resolved::Text(y)) => Some(texts_equal(x, y)),
            (ComparatorKind::Ne, Resolved::Text(x), Resolved::Text(y)) => Some(!texts_equal(x, y)),
            _ => None,
        };
        match fired {
            Some(true) => out.triggered.push(i),
            Some(false) => {}
            None => out.diagnostics.push(format!(
                "constraint `{}`: cannot compare {a2:?} with {b2:?}",
                c.name
            )),
        }
    }
    out
}

pub fn evaluate_constraints<S: Scalar>(
    state: &DriverState<S>,
    edge: &Edge<S>,
    constraints: &[Constraint<S>],
) -> Verdict {
    check_constraints(state, edge, constraints).verdict()
}

fn check_operand(
    report: &mut ValidationReport,
    path: &str,
    o: &Operand,
    spec: &DriverSpec,
    edge_attributes: &BTreeSet<String>,
) {
    match &o.source {
        Source::Edge if !edge_attributes.contains(&o.attribute) => report.push(
            format!("{path}.attribute"),
            format!("edge has no attribute `{}`", o.attribute),
        ),
        Source::Driver if !spec.has_attribute(&o.attribute) => report.push(
            format!("{path}.attribute"),
            format!("driver has no attribute `{}`", o.attribute),
        ),
        Source::Unknown(s) => report.push(
            format!("{path}.source"),
            format!("source `{s}` must be either `edge` or `driver`"),
        ),
        _ => {}
    }
}

/// Structural checks on a route model against the attributes edges offer.
pub fn validate_model<S: Scalar>(
    spec: &DriverSpec,
    actions: &[Action<S>],
    constraints: &[Constraint<S>],
    edge_attributes: &BTreeSet<String>,
) -> ValidationReport {
    let mut r = ValidationReport::default();
    if spec.attributes.is_empty() {
        r.push("driver.attributes", "driver needs at least one attribute");
    }
    let mut seen = HashSet::new();
    for (i, a) in spec.attributes.iter().enumerate() {
        if !is_identifier(&a.name) {
            r.push(
                format!("driver.attributes.{i}.name"),
                format!("`{}` is not a lowercase identifier", a.name),
            );
        }
        if !seen.insert(a.name.as_str()) {
            r.push(format!("driver.attributes.{i}.name"), format!("duplicate attribute `{}`", a.name));
        }
    }
    if !spec.has_attribute(&spec.objective) {
        r.push(
            "driver.objective",
            format!("objective `{}` must be one of the driver attributes", spec.objective),
        );
    }

    for (i, a) in actions.iter().enumerate() {
        let path = format!("actions.{i}");
        if !spec.has_attribute(&a.target) {
            r.push(format!("{path}.target"), format!("`{}` is not a driver attribute", a.target));
        }
        match a.operation.kind() {
            None => r.push(
                format!("{path}.operation"),
                format!("operation must be one of {}", super::Operation::NAMES.join(", ")),
            ),
            Some(OperationKind::None) => {}
            Some(_) => match &a.value {
                Term::Operand(o) => check_operand(&mut r, &format!("{path}.value"), o, spec, edge_attributes),
                Term::Text(t) => r.push(format!("{path}.value"), format!("value {t:?} is not numeric")),
                Term::Number(_) => {}
            },
        }
    }

    for (i, c) in constraints.iter().enumerate() {
        let path = format!("constraints.{i}");
        let op = c.operator.kind();
        if op.is_none() {
            r.push(
                format!("{path}.operator"),
                format!("operator must be one of {}", super::Comparator::SYMBOLS.join(" ")),
            );
        }
        match &c.operand1 {
            Term::Operand(o) => check_operand(&mut r, &format!("{path}.operand1"), o, spec, edge_attributes),
            _ => r.push(
                format!("{path}.operand1"),
                "operand1 must reference an edge or driver attribute",
            ),
        }
        match &c.operand2 {
            Term::Operand(o) => check_operand(&mut r, &format!("{path}.operand2"), o, spec, edge_attributes),
            Term::Text(t)
                if matches!(
                    op,
                    Some(ComparatorKind::Gt | ComparatorKind::Ge | ComparatorKind::Lt | ComparatorKind::Le)
                ) =>
            {
                r.push(format!("{path}.operand2"), format!("ordering needs a number, got {t:?}"))
            }
            _ => {}
        }
        if let ConstraintAction::Unknown(s) = &c.action {
            r.push(format!("{path}.action"), format!("constraint action must be skip_edge, got `{s}`"));
        }
    }
    r
}
