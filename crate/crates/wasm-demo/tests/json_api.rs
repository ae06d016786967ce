use eivreg_wasm_demo::{minimax_json, sensitivity_json, simulate_fit_json};
use serde_json::Value;

#[test]
fn simulate_fit_returns_every_estimator() {
    let req = r#"{"dgp": {"n": 100, "p": 8, "sigma": 0.128, "sigma_star": 0.45, "rho": 0.25,
        "theta_star": [1, 1, 1, 0, 0, 0, 0, 0], "seed": 2, "epsilon": 0.05},
        "estimators": ["conic", "comp_mu", "dantzig_x", "dantzig_z"]}"#;
    let v: Value = serde_json::from_str(&simulate_fit_json(req).unwrap()).unwrap();
    let fits = v["fits"].as_array().unwrap();
    assert_eq!(fits.len(), 4);
    for f in fits {
        assert!(f["failure"].is_null(), "{f}");
        assert_eq!(f["theta_hat"].as_array().unwrap().len(), 8);
    }
    let err = |i: usize| fits[i]["error"].as_f64().unwrap();
    assert!(err(2) < err(3), "the oracle design beats the naive fit");
}

#[test]
fn identity_sensitivity() {
    let req = r#"{"p": 10, "rho": 0, "s": 2, "u": 2, "q": "inf"}"#;
    let v: Value = serde_json::from_str(&sensitivity_json(req).unwrap()).unwrap();
    assert!((v["value"]["value"].as_f64().unwrap() - 1.0).abs() < 1e-8);
    assert!(sensitivity_json(r#"{"p": 4, "rho": 1.5, "s": 1, "u": 1, "q": "1"}"#).is_err());
}

#[test]
fn minimax_small_instance() {
    let req = r#"{"p": 17, "s": 2, "n": 50, "R": 1, "sigma": 0.5, "sigma_star": 0.3}"#;
    let v: Value = serde_json::from_str(&minimax_json(req).unwrap()).unwrap();
    assert_eq!(v["family"]["omega_bars"].as_array().unwrap().len(), 17);
    assert!(v["report"]["max_kl"].as_f64().unwrap() > 0.0);
}

#[test]
fn malformed_requests_are_errors() {
    assert!(simulate_fit_json("{}").is_err());
    assert!(minimax_json(r#"{"p": 100, "s": 2, "n": 50, "R": 1, "sigma": 0.5, "sigma_star": 0.3}"#).is_err());
}
