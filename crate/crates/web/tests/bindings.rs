use serde_json::Value;
use wcl_web::{count_json, kappa_json, s_alpha_json};

const CIRCLE: &str = r#"{"s":2,"F":[[1,0],[0,1]],"t":25}"#;

#[test]
fn kappa_primes_mod_6() {
    let v: Value = serde_json::from_str(&kappa_json("primes", 6).unwrap()).unwrap();
    assert_eq!(v["kappa"][5], "1/2");
    assert_eq!(v["kappa"][0], "0/1");
}

#[test]
fn s_alpha_at_zero_is_the_mass() {
    let v: Value = serde_json::from_str(&s_alpha_json(CIRCLE, "primes", 30.0, 0.0).unwrap()).unwrap();
    let a = v["cumulative"].as_f64().unwrap();
    assert!((v["re"].as_f64().unwrap() - a * a).abs() < 1e-9);
}

#[test]
fn count_matches_hand_enumeration() {
    // 3² + 4² and 4² + 3²; the zero coordinates carry weight 0.
    let v: Value = serde_json::from_str(&count_json(CIRCLE, "unit", 5).unwrap()).unwrap();
    assert_eq!(v["value"].as_f64(), Some(2.0));
}

#[test]
fn errors_are_messages() {
    assert!(count_json(r#"{"s":2,"F":[[1,2],[3,1]],"t":0}"#, "unit", 5)
        .unwrap_err()
        .contains("symmetric"));
    assert!(kappa_json("custom:x.json", 3).is_err());
}
