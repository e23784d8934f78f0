use std::collections::BTreeSet;

use crate::agent::{AgentError, DecisionSchema, FieldConstraint, FieldSpec};
use crate::catalog::{Catalog, CatalogNode, NodeKind, Relation};

use super::{Decider, Proposal, ProposalOption, Session, Stage};

fn option(n: &CatalogNode, group: Option<&str>) -> ProposalOption {
    ProposalOption {
        id: n.id.clone(),
        name: n.name.clone(),
        description: n.description.clone(),
        group: group.map(str::to_string),
    }
}

fn option_lines(options: &[ProposalOption]) -> String {
    options
        .iter()
        .map(|o| format!("- {}: {}. {}", o.id, o.name, o.description))
        .collect::<Vec<_>>()
        .join("\n")
}

fn names(catalog: &Catalog, ids: &[String]) -> String {
    ids.iter()
        .filter_map(|id| catalog.node(id))
        .map(|n| n.name.as_str())
        .collect::<Vec<_>>()
        .join(", ")
}

/// Asks for a non-empty, duplicate-free subset of `options` under `field`.
fn choose(
    d: &mut Decider<'_>,
    label: &str,
    field: &str,
    context: String,
    options: &[ProposalOption],
) -> Result<(Vec<String>, String), AgentError> {
    if options.is_empty() {
        return Ok((Vec::new(), String::new()));
    }
    let ids: Vec<&str> = options.iter().map(|o| o.id.as_str()).collect();
    let schema = DecisionSchema::new(vec![
        FieldSpec::list_of_choice(field, "Ids of the chosen options.", &ids)
            .with(FieldConstraint::NonEmpty)
            .with(FieldConstraint::Unique { key: None }),
        FieldSpec::text("rationale", "One or two sentences on why.").optional(),
    ]);
    let prompt = format!("{context}\n\nOptions:\n{}", option_lines(options));
    let v = d.decide(label, prompt, schema)?;
    Ok((v.strings(field), v.str("rationale").unwrap_or_default().to_string()))
}

fn proposal(stage: Stage, options: Vec<ProposalOption>, selected: Vec<String>, rationale: String) -> Proposal {
    let mut p = Proposal {
        stage,
        options,
        selected: Vec::new(),
        rationale,
    };
    p.selected = p.canonical(&selected);
    p
}

pub(super) fn propose(catalog: &Catalog, d: &mut Decider<'_>, s: &Session) -> Result<Proposal, AgentError> {
    let q = &s.query;
    match s.stage {
        Stage::Classify => {
            let tts: Vec<_> = catalog
                .nodes_by_kind(NodeKind::TaskType)
                .into_iter()
                .map(|n| option(n, Some("TaskType")))
                .collect();
            let objs: Vec<_> = catalog
                .nodes_by_kind(NodeKind::Objective)
                .into_iter()
                .map(|n| option(n, Some("Objective")))
                .collect();
            let (mut sel, r1) = choose(
                d,
                "task_types",
                "task_types",
                format!(
                    "Query: {q}\n\nClassify the query into one or more task types. \
                     Most queries need only one."
                ),
                &tts,
            )?;
            let (objectives, r2) = choose(
                d,
                "objectives",
                "objectives",
                format!(
                    "Query: {q}\n\nTask types: {}\n\nWhich objectives does the query pursue?",
                    names(catalog, &sel)
                ),
                &objs,
            )?;
            sel.extend(objectives);
            let rationale = [r1, r2].into_iter().filter(|r| !r.is_empty()).collect::<Vec<_>>().join(" ");
            Ok(proposal(s.stage, tts.into_iter().chain(objs).collect(), sel, rationale))
        }
        Stage::SelectSources => {
            let task_types: BTreeSet<&str> = s
                .selection(Stage::Classify)
                .iter()
                .map(String::as_str)
                .filter(|id| catalog.node(id).is_some_and(|n| n.kind == NodeKind::TaskType))
                .collect();
            let mut offered: Vec<&CatalogNode> = Vec::new();
            for tt in &task_types {
                offered.extend(catalog.children(tt, Relation::Serves).unwrap_or_default());
            }
            let forced: Vec<&CatalogNode> = catalog
                .nodes_by_kind(NodeKind::DataSource)
                .into_iter()
                .filter(|n| n.always_include_for.iter().any(|t| task_types.contains(t.as_str())))
                .collect();
            offered.extend(forced.iter().copied());
            offered.sort_by(|a, b| a.id.cmp(&b.id));
            offered.dedup_by(|a, b| a.id == b.id);
            let options: Vec<_> = offered.iter().map(|n| option(n, None)).collect();
            let (mut sel, mut rationale) = choose(
                d,
                "sources",
                "sources",
                format!(
                    "Query: {q}\n\nTask types: {}\n\nChoose the data sources needed to answer the query.",
                    names(catalog, s.selection(Stage::Classify))
                ),
                &options,
            )?;
            let added: Vec<String> = forced
                .iter()
                .filter(|n| !sel.contains(&n.id))
                .map(|n| n.id.clone())
                .collect();
            if !added.is_empty() {
                if !rationale.is_empty() {
                    rationale.push(' ');
                }
                rationale.push_str(&format!("Always included for these task types: {}.", added.join(", ")));
                sel.extend(added);
            }
            Ok(proposal(s.stage, options, sel, rationale))
        }
        Stage::SelectResources => {
            let mut options = Vec::new();
            for src in s.selection(Stage::SelectSources) {
                for r in catalog.children(src, Relation::Contains).unwrap_or_default() {
                    options.push(option(r, Some(src)));
                }
            }
            let (sel, rationale) = choose(
                d,
                "resources",
                "resources",
                format!(
                    "Query: {q}\n\nData sources: {}\n\nChoose the resources to use.",
                    names(catalog, s.selection(Stage::SelectSources))
                ),
                &options,
            )?;
            Ok(proposal(s.stage, options, sel, rationale))
        }
        Stage::SelectAttributes => {
            let mut resources: Vec<&String> = s.selection(Stage::SelectResources).iter().collect();
            resources.sort();
            let mut options = Vec::new();
            let mut sel = Vec::new();
            let mut notes = Vec::new();
            for res in resources {
                let own: Vec<_> = catalog
                    .children(res, Relation::Contains)
                    .unwrap_or_default()
                    .into_iter()
                    .map(|a| option(a, Some(res)))
                    .collect();
                let res_name = catalog.node(res).map_or(res.as_str(), |n| n.name.as_str());
                let (chosen, rationale) = choose(
                    d,
                    &format!("attributes:{res}"),
                    "attributes",
                    format!("Query: {q}\n\nChoose the attributes of resource `{res_name}` that are relevant."),
                    &own,
                )?;
                if !rationale.is_empty() {
                    notes.push(format!("{res}: {rationale}"));
                }
                sel.extend(chosen);
                options.extend(own);
            }
            Ok(proposal(s.stage, options, sel, notes.join(" ")))
        }
        Stage::SelectInterfaces => {
            let formats: BTreeSet<_> = s
                .selection(Stage::SelectSources)
                .iter()
                .filter_map(|id| catalog.effective_format(id))
                .collect();
            let options: Vec<_> = catalog
                .nodes_by_kind(NodeKind::Interface)
                .into_iter()
                .filter(|i| {
                    catalog
                        .interface_formats(&i.id)
                        .is_ok_and(|f| !f.is_disjoint(&formats))
                })
                .map(|n| option(n, None))
                .collect();
            let (sel, rationale) = choose(
                d,
                "interfaces",
                "interfaces",
                format!(
                    "Query: {q}\n\nObjectives and task types: {}\nResources: {}\n\n\
                     Choose the interfaces to run, listed in the order they should run. \
                     Use every interface the query needs.",
                    names(catalog, s.selection(Stage::Classify)),
                    names(catalog, s.selection(Stage::SelectResources)),
                ),
                &options,
            )?;
            Ok(proposal(s.stage, options, sel, rationale))
        }
        Stage::Execute | Stage::Done | Stage::Failed => unreachable!("no proposal at {}", s.stage),
    }
}
