use graphflow_core::io::{
    certificate_to_csv, parse_measure, ray_to_csv, to_json, trajectory_from_csv, trajectory_to_csv, SolveSummary,
    SCHEMA_VERSION,
};
use graphflow_core::suite::two_state_chain;
use graphflow_core::{
    certificate_from_primal, distance_d, distance_w, integrate_ray, load_chain, save_chain, GeodesicState, MarkovChain,
    RayOptions, SolveOptions,
};

const TWO_STATE_JSON: &str = r#"{"states": ["x", "y"], "K": [[0.8, 0.2], [0.4, 0.6]], "p": [1.0, 1.0]}"#;

#[test]
fn trajectory_csv_round_trip() {
    let c = two_state_chain();
    let r = distance_w(&[0.9, 0.3], &[0.4, 1.2], &c, 16, &SolveOptions::default()).unwrap();
    let text = trajectory_to_csv(&r.trajectory, &c).unwrap();
    let back = trajectory_from_csv(&text, &c).unwrap();
    assert_eq!(back.mu, r.trajectory.mu);
    assert_eq!(back.h, r.trajectory.h);
    assert_eq!(back.v, r.trajectory.v);
    assert_eq!(back.psi, r.trajectory.psi);
    assert_eq!(trajectory_to_csv(&back, &c).unwrap(), text);
}

#[test]
fn trajectory_csv_layout() {
    let c = load_chain::<f64>(TWO_STATE_JSON).unwrap();
    let r = distance_w(&[0.6, 0.8], &[1.1, 1.3], &c, 4, &SolveOptions::default()).unwrap();
    let text = trajectory_to_csv(&r.trajectory, &c).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "kind,t,mu_x,mu_y,h,speed,V_x_y,V_y_x,psi_x,psi_y");
    assert_eq!(text.lines().count(), 1 + 5 + 4);
    assert!(text.lines().nth(1).unwrap().starts_with("node,0,0.6,0.8"));
}

#[test]
fn corrupted_trajectory_is_rejected() {
    let c = two_state_chain();
    let r = distance_w(&[0.9, 0.3], &[0.4, 1.2], &c, 8, &SolveOptions::default()).unwrap();
    let text = trajectory_to_csv(&r.trajectory, &c).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let mut cells: Vec<String> = lines[3].split(',').map(str::to_string).collect();
    cells[2] = "5".into();
    lines[3] = cells.join(",");
    assert!(trajectory_from_csv(&(lines.join("\n") + "\n"), &c).is_err());
    assert!(trajectory_from_csv("kind,t\nnode,0\n", &c).is_err());
}

#[test]
fn measure_formats() {
    let c = load_chain::<f64>(TWO_STATE_JSON).unwrap();
    assert_eq!(parse_measure("0.6,0.8", &c).unwrap(), vec![0.6, 0.8]);
    assert_eq!(parse_measure(" [0.6, 0.8] ", &c).unwrap(), vec![0.6, 0.8]);
    assert_eq!(parse_measure(r#"{"y": 0.8, "x": 0.6}"#, &c).unwrap(), vec![0.6, 0.8]);
    assert!(parse_measure("0.6", &c).is_err());
    assert!(parse_measure("0.6,-1", &c).is_err());
    assert!(parse_measure(r#"{"x": 0.6, "z": 0.8}"#, &c).is_err());
    assert!(parse_measure("0.6,abc", &c).is_err());
}

#[test]
fn chain_document_round_trip() {
    let c = load_chain::<f64>(TWO_STATE_JSON).unwrap();
    let text = save_chain(&c).unwrap();
    let back: MarkovChain<f64> = load_chain(&text).unwrap();
    assert_eq!(back, c);
}

#[test]
fn summary_json_is_versioned_and_deterministic() {
    let c = two_state_chain();
    let r = distance_d(&[0.6, 0.8], &[1.1, 1.3], &c, 16, &SolveOptions::default()).unwrap();
    let a = to_json(&SolveSummary::new(&r)).unwrap();
    let r2 = distance_d(&[0.6, 0.8], &[1.1, 1.3], &c, 16, &SolveOptions::default()).unwrap();
    assert_eq!(a, to_json(&SolveSummary::new(&r2)).unwrap());
    let v: serde_json::Value = serde_json::from_str(&a).unwrap();
    assert_eq!(v["schema_version"], SCHEMA_VERSION);
    assert_eq!(v["metric"], "D");
    assert!(v["shift"]["h0"].as_f64().is_some());
}

#[test]
fn certificate_and_ray_csv_headers() {
    let c = load_chain::<f64>(TWO_STATE_JSON).unwrap();
    let r = distance_w(&[0.6, 0.8], &[1.1, 1.3], &c, 8, &SolveOptions::default()).unwrap();
    let cert = certificate_from_primal(&r, &c).unwrap();
    let text = certificate_to_csv(&cert, &c).unwrap();
    assert_eq!(text.lines().next().unwrap(), "t,phi_x,phi_y");
    assert_eq!(text.lines().count(), 10);

    let init = GeodesicState::from_potential(vec![0.6, 0.8], 0.3, &[0.0, 0.5], &c);
    let ray = integrate_ray(&init, &c, &RayOptions::default());
    let text = ray_to_csv(&ray, &c).unwrap();
    assert_eq!(text.lines().next().unwrap(), "t,mu_x,mu_y,h,speed,gradpsi_x_y");
    assert_eq!(text.lines().count(), ray.samples.len() + 1);
}
