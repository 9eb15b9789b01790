use roomsim_core::model::FurnitureKind;
use roomsim_core::presets::{self, event_script, evaluation_events};
use roomsim_core::world::ScenarioError;
use roomsim_core::{parse_scenario, FurnitureId, World};

fn bundled(name: &str) -> String {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name);
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn evaluation_scene_contents() {
    let w = World::from_scenario(parse_scenario(&bundled("evaluation.json")).unwrap()).unwrap();
    assert_eq!(w.robots.len(), 2);
    assert_eq!(w.furniture.len(), 2);
    assert_eq!(w.scene.objects.len(), 4);
    assert!(w.scene.objects.iter().all(|o| o.kind == FurnitureKind::Chair && o.touchable));
    assert_eq!(w.clock.tick, 0);
}

#[test]
fn empty_scene_has_one_idle_robot() {
    let w = roomsim_core::load_scenario(&bundled("empty.json")).unwrap();
    assert_eq!(w.robots.len(), 1);
    assert!(w.furniture.is_empty());
    assert!(w.robots[0].task.is_none());
}

#[test]
fn stacked_chairs_are_an_initial_collision() {
    let mut s = presets::evaluation();
    let mut twin = s.furniture_instances[0].clone();
    twin.id = FurnitureId::new("chair_twin");
    s.furniture_instances.push(twin);
    assert!(matches!(World::from_scenario(s), Err(ScenarioError::InitialCollision(..))));
}

#[test]
fn duplicate_and_dangling_ids_are_rejected() {
    let mut s = presets::evaluation();
    s.furniture_instances[1].id = s.furniture_instances[0].id.clone();
    assert!(matches!(World::from_scenario(s), Err(ScenarioError::DuplicateId(_))));

    let mut s = presets::evaluation();
    s.furniture_instances[0].spec = roomsim_core::model::SpecId::new("sofa");
    assert!(matches!(World::from_scenario(s), Err(ScenarioError::UnknownSpec { .. })));
}

#[test]
fn malformed_documents_are_schema_errors() {
    assert!(matches!(parse_scenario("{}"), Err(ScenarioError::Schema(_))));
    assert!(matches!(parse_scenario("not json"), Err(ScenarioError::Schema(_))));
    let extra = bundled("empty.json").replacen('{', "{\"bogus\": 1,", 1);
    assert!(matches!(parse_scenario(&extra), Err(ScenarioError::Schema(_))));
}

#[test]
fn bundled_event_script_matches_the_generator() {
    assert_eq!(bundled("evaluation.events.jsonl"), event_script(&evaluation_events()));
}

#[test]
fn random_scenarios_are_reproducible() {
    assert_eq!(presets::random_safety(5).furniture_instances, presets::random_safety(5).furniture_instances);
    assert_ne!(presets::random_safety(5).robots, presets::random_safety(6).robots);
}
