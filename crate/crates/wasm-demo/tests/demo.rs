use lbirl_wasm_demo::{draw_indices, preference_of, run_simulation};

#[test]
fn preference_matches_closed_form() {
    let p = preference_of(0.0, 3f64.ln());
    assert!((p.prob - 0.75).abs() < 1e-12);
    assert!((p.loss + 0.75f64.ln()).abs() < 1e-12);
}

#[test]
fn tcs_draw_shares_indices_and_contiguous_is_consecutive() {
    let t = draw_indices("tcs", 48, 10, 3).unwrap();
    assert_eq!(t.a, t.b);
    assert_eq!(t.a.len(), 10);
    let c = draw_indices("contiguous", 48, 10, 3).unwrap();
    assert!(c.a.windows(2).all(|w| w[1] == w[0] + 1));
    assert!(c.b.windows(2).all(|w| w[1] == w[0] + 1));
    assert!(draw_indices("tcs", 5, 6, 0).is_err());
    assert!(draw_indices("other", 5, 2, 0).is_err());
}

#[test]
fn short_simulation_is_deterministic() {
    let a = run_simulation(1, "adaptive", 3, 7).unwrap();
    let b = run_simulation(1, "adaptive", 3, 7).unwrap();
    assert_eq!(a.hours.len(), 3);
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert!(a
        .hours
        .iter()
        .all(|h| h.ip.len() == 4 && h.ip.iter().all(|x| h.t_min <= *x)));
    assert!(run_simulation(1, "oracle", 3, 7).is_err());
    assert!(run_simulation(1, "fixed", 0, 7).is_err());
}
