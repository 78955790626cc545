use std::collections::BTreeSet;

use geonav::scenario::{parse_scenario_file, shipped_dir, shipped_scenario, ScenarioFile};
use serde_json::Value;

fn schema() -> Value {
    serde_json::from_str(&std::fs::read_to_string(shipped_dir().join("scenarios/scenario.schema.json")).unwrap()).unwrap()
}

fn keys(v: &Value) -> BTreeSet<String> {
    v.as_object().unwrap().keys().cloned().collect()
}

const FULL: &str = r#"{
    "start": {"lon": 152, "lat": 33},
    "destination": {"lon": 158, "lat": 28},
    "storm": {"path": "s.csv", "grid": {"lon_min": 145, "lon_max": 165, "lat_min": 27, "lat_max": 34, "cell_deg": 1, "bin_s": 3600}}
}"#;

#[test]
fn schema_properties_match_config_types() {
    let s = schema();
    let props = &s["properties"];
    let full = serde_json::to_value(parse_scenario_file(FULL).unwrap()).unwrap();
    assert_eq!(keys(props), keys(&full));
    for nested in ["controller", "ins", "fusion"] {
        assert_eq!(keys(&props[nested]["properties"]), keys(&full[nested]), "{nested}");
    }
    assert_eq!(keys(&props["storm"]["properties"]), keys(&full["storm"]));
    assert_eq!(keys(&props["storm"]["properties"]["grid"]["properties"]), keys(&full["storm"]["grid"]));
    assert_eq!(keys(&props["controller"]["properties"]["bounds"]["properties"]), keys(&full["controller"]["bounds"]));
    assert_eq!(keys(&s["$defs"]["position"]["properties"]), keys(&full["start"]));
}

#[test]
fn schema_defaults_match_parser_defaults() {
    let s = schema();
    let props = &s["properties"];
    let f: ScenarioFile = parse_scenario_file(FULL).unwrap();
    let full = serde_json::to_value(&f).unwrap();
    for key in ["date", "epsilon_km", "max_iterations", "noise_deg", "probe_leg_km", "probe_headings_deg", "gradient_rule", "termination"] {
        let want = &props[key]["default"];
        assert_eq!(
            want.as_f64().map(Value::from).unwrap_or(want.clone()),
            full[key].as_f64().map(Value::from).unwrap_or(full[key].clone()),
            "{key}"
        );
    }
    for (section, key) in
        [("fusion", "sigma"), ("fusion", "trigger"), ("fusion", "variants"), ("controller", "horizon"), ("controller", "cruise_speed_kmh")]
    {
        let want = &props[section]["properties"][key]["default"];
        let got = &full[section][key];
        assert_eq!(
            want.as_f64().map(Value::from).unwrap_or(want.clone()),
            got.as_f64().map(Value::from).unwrap_or(got.clone()),
            "{section}.{key}"
        );
    }
}

#[test]
fn shipped_scenarios_load() {
    for name in ["pacific_clean.json", "pacific_long_storm.json", "pacific_short_storm.json"] {
        let sc = shipped_scenario(name).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!((sc.start.lon, sc.start.lat), (152.0, 33.0));
        assert_eq!((sc.destination.lon, sc.destination.lat), (158.0, 28.0));
        assert_eq!(sc.controller.horizon, 2);
        assert_eq!(sc.controller.r_weight, [[10.0, 0.0], [0.0, 10.0]]);
    }
    assert!(shipped_scenario("pacific_clean.json").unwrap().storm.is_none());
    assert!(shipped_scenario("pacific_long_storm.json").unwrap().storm.is_some());
}

#[test]
fn nested_unknown_key_named() {
    let text = r#"{"start": {"lon": 1, "lat": 1}, "destination": {"lon": 2, "lat": 2}, "controller": {"horizn": 3}}"#;
    let e = parse_scenario_file(text).unwrap_err();
    assert!(e.to_string().contains("horizn"), "{e}");
}
