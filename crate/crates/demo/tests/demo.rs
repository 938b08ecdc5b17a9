use fsor_demo::{fsor_json, green_but_far_json, solve_json};
use serde_json::Value;

fn parse(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn tight_budget_leaves_remote_renewables_green_but_far() {
    let v = parse(green_but_far_json(5.0).unwrap());
    let far: Vec<&str> = v["green_but_far"].as_array().unwrap().iter().map(|s| s.as_str().unwrap()).collect();
    assert!(!far.is_empty());
    assert!(far.iter().all(|id| id.starts_with("renew")), "{far:?}");
    // A continental budget reaches everything that is eligible.
    let v = parse(green_but_far_json(40.0).unwrap());
    assert!(v["green_but_far"].as_array().unwrap().is_empty());
    assert!(green_but_far_json(0.0).is_err());
}

#[test]
fn lowering_the_ceiling_ends_in_a_certificate() {
    let v = parse(solve_json(0.5, 450.0).unwrap());
    assert_eq!(v["status"], "Optimal");
    let v = parse(solve_json(0.5, 40.0).unwrap());
    assert_eq!(v["status"], "Infeasible");
    assert!(!v["diagnosis"].as_array().unwrap().is_empty());
    assert!(solve_json(1.5, 450.0).is_err());
}

#[test]
fn permit_cut_shrinks_the_region() {
    let wide = parse(fsor_json(2.0).unwrap());
    let narrow = parse(fsor_json(0.2).unwrap());
    assert_eq!(wide["subsets"], 64);
    assert!(narrow["members"].as_u64() < wide["members"].as_u64());
}
