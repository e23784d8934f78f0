use std::path::PathBuf;

use serde_json::json;

use super::*;
use crate::agent::{AttemptKind, ScriptedProvider};
use crate::catalog::load_catalog;
use crate::ingest::{Cell, StubVisualAnswerer};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn data() -> DataContext {
    let root = fixtures();
    DataContext::new(root.join("data"), Gazetteer::load(root.join("gazetteer.json")).unwrap())
        .with_vqa(Arc::new(StubVisualAnswerer::load(root.join("vqa.json")).unwrap()))
}

fn env_with(provider: ScriptedProvider) -> (Environment, Arc<ScriptedProvider>) {
    let provider = Arc::new(provider);
    let catalog = Arc::new(load_catalog(fixtures().join("catalog.json")).unwrap());
    (Environment::new(catalog, provider.clone(), data()), provider)
}

fn scripted(responses: Vec<serde_json::Value>) -> (Environment, Arc<ScriptedProvider>) {
    env_with(ScriptedProvider::new(responses.iter().map(|v| v.to_string())))
}

fn livestock() -> (Environment, Arc<ScriptedProvider>) {
    env_with(ScriptedProvider::from_file(fixtures().join("scripted/livestock.json")).unwrap())
}

const LIVESTOCK: &str = "I am transporting livestock with a truck from Toronto to Ottawa. \
What do I have to check. I also want to avoid ice on the roads";

#[test]
fn open_session_starts_at_classify() {
    let (env, _) = livestock();
    let s = env.open_session("fastest route Toronto→Ottawa avoiding ice", Mode::Automatic).unwrap();
    assert_eq!(s.stage, Stage::Classify);
    assert!(s.selections.is_empty());
    assert!(s.pending.is_none());
}

#[test]
fn empty_query_rejected() {
    let (env, _) = livestock();
    assert!(matches!(env.open_session("  ", Mode::Automatic), Err(PipelineError::EmptyQuery)));
}

#[test]
fn sessions_get_distinct_ids() {
    let (env, _) = livestock();
    let a = env.open_session("q", Mode::Automatic).unwrap();
    let b = env.open_session("q", Mode::Automatic).unwrap();
    assert_ne!(a.id, b.id);
}

#[test]
fn stage_order() {
    assert_eq!(Stage::Classify.next(), Some(Stage::SelectSources));
    assert_eq!(Stage::Execute.next(), Some(Stage::Done));
    assert_eq!(Stage::Done.next(), None);
    assert_eq!(Stage::Failed.next(), None);
}

#[test]
fn livestock_runs_to_a_route_without_ice() {
    let (env, provider) = livestock();
    let s = env.run(LIVESTOCK).unwrap();
    assert_eq!(s.stage, Stage::Done);
    let classify = s.selection(Stage::Classify);
    for id in ["task.route_planning", "task.information_retrieval", "objective.safety"] {
        assert!(classify.iter().any(|c| c == id), "{id} missing from {classify:?}");
    }
    // nrn is offered and added because route planning was chosen
    assert!(s.selection(Stage::SelectSources).contains(&"nrn".to_string()));
    assert_eq!(
        s.selection(Stage::SelectInterfaces),
        ["interface.internal_documents", "interface.route_planning"]
    );
    let r = s.result.as_ref().unwrap();
    assert_eq!(r.kind, ResultKind::Route);
    let edges: Vec<String> = serde_json::from_value(r.payload["route"]["edges"].clone()).unwrap();
    assert!(!edges.is_empty());
    assert!(edges.iter().all(|e| !e.starts_with("seg000002")), "route crosses the icy segment: {edges:?}");
    assert!(r.text.contains("36 hours"));
    // the driver decision needed one refinement
    assert_eq!(provider.call_count(), 13);
    assert_eq!(provider.calls()[11].kind, AttemptKind::Refinement);
    assert_eq!(provider.calls()[11].schema.field_names(), ["attributes"]);
}

#[test]
fn livestock_logs_identical_across_runs() {
    let logs: Vec<String> = (0..3).map(|_| livestock().0.run(LIVESTOCK).unwrap().log_lines()).collect();
    assert_eq!(logs[0], logs[1]);
    assert_eq!(logs[1], logs[2]);
}

#[test]
fn provenance_cites_committed_resources() {
    let (env, _) = livestock();
    let s = env.run(LIVESTOCK).unwrap();
    let r = s.result.unwrap();
    assert!(!r.provenance.is_empty());
    for p in &r.provenance {
        assert!(s.selections[&Stage::SelectSources].contains(&p.source), "{p:?}");
        assert!(s.selections[&Stage::SelectResources].contains(&p.resource), "{p:?}");
    }
}

#[test]
fn control_mode_pends_then_commits() {
    let (env, _) = livestock();
    let mut s = env.open_session(LIVESTOCK, Mode::Control).unwrap();
    env.advance(&mut s, None).unwrap();
    assert_eq!(s.stage, Stage::Classify);
    let p = s.pending.clone().unwrap();
    assert_eq!(p.options.len(), 12);
    env.advance(&mut s, Some(vec!["objective.time".into(), "task.route_planning".into()])).unwrap();
    assert_eq!(s.stage, Stage::SelectSources);
    assert!(s.pending.is_none());
    // committed in option order, not the order given
    assert_eq!(s.selection(Stage::Classify), ["task.route_planning", "objective.time"]);
}

#[test]
fn control_mode_accept_matches_automatic() {
    let (env, _) = livestock();
    let auto = env.run(LIVESTOCK).unwrap();
    let (env, _) = livestock();
    let mut s = env.open_session(LIVESTOCK, Mode::Control).unwrap();
    while !s.stage.is_terminal() {
        env.advance(&mut s, None).unwrap();
    }
    assert_eq!(s.selections, auto.selections);
    assert_eq!(s.result, auto.result);
}

#[test]
fn override_outside_options_rejected() {
    let (env, _) = livestock();
    let mut s = env.open_session(LIVESTOCK, Mode::Control).unwrap();
    env.advance(&mut s, None).unwrap();
    let before = s.clone();
    let err = env.advance(&mut s, Some(vec!["task.route_planning".into(), "nrn".into()])).unwrap_err();
    assert!(matches!(err, PipelineError::InvalidOverride(m) if m.contains("nrn")));
    assert_eq!(s, before);
}

#[test]
fn override_in_automatic_mode_rejected() {
    let (env, _) = livestock();
    let mut s = env.open_session(LIVESTOCK, Mode::Automatic).unwrap();
    let err = env.advance(&mut s, Some(vec!["task.route_planning".into()])).unwrap_err();
    assert!(matches!(err, PipelineError::InvalidOverride(_)));
    assert_eq!(s.stage, Stage::Classify);
}

#[test]
fn advancing_a_finished_session_is_an_order_violation() {
    let (env, _) = livestock();
    let mut s = env.run(LIVESTOCK).unwrap();
    assert!(matches!(
        env.advance(&mut s, None),
        Err(PipelineError::StageOrderViolation { stage: Stage::Done, .. })
    ));
}

#[test]
fn request_id_replay_is_a_noop() {
    let (env, provider) = livestock();
    let mut s = env.open_session(LIVESTOCK, Mode::Control).unwrap();
    assert!(env.advance_request(&mut s, Some("r1"), Some(Stage::Classify), None).unwrap());
    let after = s.clone();
    assert!(!env.advance_request(&mut s, Some("r1"), Some(Stage::Classify), None).unwrap());
    assert_eq!(s, after);
    assert_eq!(provider.call_count(), 2);
    assert!(matches!(
        env.advance_request(&mut s, Some("r2"), Some(Stage::SelectSources), None),
        Err(PipelineError::StageOrderViolation { .. })
    ));
}

#[test]
fn no_interface_selected_fails_the_session() {
    let (env, _) = scripted(vec![]);
    let mut s = env.open_session("anything", Mode::Automatic).unwrap();
    s.stage = Stage::Execute;
    let err = env.advance(&mut s, None).unwrap_err();
    assert!(matches!(&err, PipelineError::InterfaceError { cause, .. } if cause == "no interface selected"));
    assert_eq!(s.stage, Stage::Failed);
}

#[test]
fn exhausted_agent_fails_the_session() {
    let (env, _) = env_with(ScriptedProvider::new(["nonsense"; 3]));
    let env = env.with_max_attempts(2);
    let mut s = env.open_session("anything", Mode::Automatic).unwrap();
    let err = env.advance(&mut s, None).unwrap_err();
    assert!(matches!(
        err,
        PipelineError::AgentFailure {
            stage: Stage::Classify,
            error: AgentError::RefinementExhausted { calls: 3, .. }
        }
    ));
    assert_eq!(s.stage, Stage::Failed);
    assert!(matches!(s.log.last().unwrap().event, LogEvent::Advanced { to: Stage::Failed }));
}

#[test]
fn information_retrieval_alone_gives_a_table() {
    let (env, _) = scripted(vec![
        json!({"task_types": ["task.information_retrieval"]}),
        json!({"objectives": ["objective.safety"]}),
        json!({"sources": ["on511"]}),
        json!({"resources": ["on511.events"]}),
        json!({"attributes": ["on511.events.type", "on511.events.severity"]}),
        json!({"interfaces": ["interface.information_retrieval"]}),
        json!({"spatial": "no", "location": "toronto", "radius_km": 10}),
        json!({"table": "events", "filters": [{"column": "severity", "op": "=", "value": "high"}],
               "project": ["type"], "aggregate": "none"}),
    ]);
    let s = env.run("Which severe incidents are there?").unwrap();
    let r = s.result.unwrap();
    assert_eq!(r.kind, ResultKind::Table);
    let t = &r.outputs[0].tables[0];
    assert_eq!(t.len(), 2);
    assert_eq!(t.cell(0, "type"), Some(&Cell::text("collision")));
    assert_eq!(t.cell(1, "type"), Some(&Cell::text("closure")));
}

#[test]
fn spatial_filter_and_camera_questions() {
    let (env, provider) = scripted(vec![
        json!({"task_types": ["task.information_retrieval"]}),
        json!({"objectives": ["objective.time"]}),
        json!({"sources": ["on511"]}),
        json!({"resources": ["on511.cameras"]}),
        json!({"attributes": ["on511.cameras.road_name", "on511.cameras.image"]}),
        json!({"interfaces": ["interface.information_retrieval"]}),
        json!({"spatial": "yes", "location": "kingston", "radius_km": 80}),
        json!({"question": "Is a traffic jam visible?"}),
        json!({"table": "cameras", "filters": [], "project": ["image", "vqa_answer"], "aggregate": "none",
               "sort_column": "image"}),
    ]);
    let s = env.run("Is there a traffic jam near Kingston?").unwrap();
    let t = &s.result.unwrap().outputs[0].tables[0];
    // Belleville is about 97 km from Kingston, Brockville 47 and Kaladar 75
    assert_eq!(t.len(), 2);
    assert_eq!(t.cell(0, "image"), Some(&Cell::text("cam_401_brockville.jpg")));
    assert_eq!(t.cell(0, "vqa_answer"), Some(&Cell::text("no")));
    assert_eq!(t.cell(1, "vqa_answer"), Some(&Cell::text("yes, slow traffic behind a snowplow")));
    assert!(provider.calls()[7].prompt.contains("camera images"));
}

#[test]
fn law_then_route_planning_threads_the_rule() {
    let (env, provider) = scripted(vec![
        json!({"task_types": ["task.requirement_determination", "task.route_planning"]}),
        json!({"objectives": ["objective.regulations"]}),
        json!({"sources": ["canlii"]}),
        json!({"resources": ["canlii.federal_regulations", "nrn.road_segment"]}),
        json!({"attributes": ["nrn.road_segment.nid", "nrn.road_segment.direction", "nrn.road_segment.speed_kmh"]}),
        json!({"interfaces": ["interface.law", "interface.route_planning"]}),
        json!({"search": "hours driving day commercial driver"}),
        json!({"answer": "A commercial driver must not drive more than 13 hours in a day [hours_of_service]."}),
        json!({"origin": "toronto", "destination": "ottawa"}),
        json!({"attributes": [{"name": "driving_h"}]}),
        json!({"objective": "driving_h",
               "actions": [{"name": "drive", "target": "driving_h", "operation": "add",
                            "value_source": "edge", "value": "travel_time_h"}],
               "constraints": [{"name": "hours_of_service", "operand1_source": "driver", "operand1": "driving_h",
                                "operator": ">", "operand2_source": "literal", "operand2": "13"}]}),
    ]);
    let s = env.run("How do I drive a truck from Toronto to Ottawa legally?").unwrap();
    assert_eq!(s.nodes_committed(), 10);
    let r = s.result.unwrap();
    assert_eq!(r.kind, ResultKind::Route);
    assert_eq!(r.payload["model"]["constraints"][0]["name"], "hours_of_service");
    assert!(r.outputs[0].text.contains("13 hours"));
    // the law answer is in the route planner's prompt
    assert!(provider.calls()[10].prompt.contains("13 hours in a day"));
    // only the linked source was searched
    assert_eq!(
        r.outputs[0].provenance,
        [Provenance {
            source: "canlii".into(),
            resource: "canlii.federal_regulations".into()
        }]
    );
}

#[test]
fn route_monitoring_reports_findings() {
    let (env, _) = scripted(vec![
        json!({"task_types": ["task.supervision_monitoring"]}),
        json!({"objectives": ["objective.safety"]}),
        json!({"sources": ["nrn", "on511"]}),
        json!({"resources": ["nrn.road_segment", "on511.events"]}),
        json!({"attributes": ["nrn.road_segment.nid", "nrn.road_segment.direction", "nrn.road_segment.speed_kmh"]}),
        json!({"attributes": ["on511.events.type", "on511.events.severity"]}),
        json!({"interfaces": ["interface.route_monitoring"]}),
        json!({"origin": "toronto", "destination": "ottawa", "routes": 3}),
    ]);
    let s = env.run("Any problems between Toronto and Ottawa?").unwrap();
    let r = s.result.unwrap();
    assert_eq!(r.kind, ResultKind::Findings);
    let lines = r.payload["features"].as_array().unwrap();
    assert_eq!(lines.len(), 3);
    // 401 route: collision and stalled vehicle; both Highway 7 routes: the closure
    let findings = &r.outputs[0].tables[0];
    assert_eq!(findings.len(), 4);
}

#[test]
fn log_stages_never_go_back() {
    let (env, _) = livestock();
    let s = env.run(LIVESTOCK).unwrap();
    let rank = |st: Stage| Stage::ORDER.iter().position(|x| *x == st).unwrap_or(usize::MAX);
    assert!(s.log.windows(2).all(|w| rank(w[0].stage) <= rank(w[1].stage)));
}

#[test]
fn session_round_trips_through_json() {
    let (env, _) = livestock();
    let s = env.run(LIVESTOCK).unwrap();
    let back: Session = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
    assert_eq!(back, s);
}

impl Session {
    fn nodes_committed(&self) -> usize {
        self.selections
            .iter()
            .filter(|(st, _)| **st != Stage::SelectInterfaces)
            .map(|(_, v)| v.len())
            .sum()
    }
}
