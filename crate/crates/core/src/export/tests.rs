use super::*;
use crate::mixture::erfc;
use crate::network::{load_weights, save_weights, NetworkShape, Normalization};

fn iv_norm() -> Normalization {
    Normalization {
        min: vec![0.0, 14.0, 0.0],
        max: vec![3.0, 33.0, 1.0],
        target_offset: 0.0165,
        target_scale: 1e-3,
    }
}

fn bundle(hidden: Vec<usize>, k: usize, seed: u64) -> ExportBundle {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = MdnNetwork::new(NetworkShape::new(3, hidden, k), iv_norm(), &mut rng).unwrap();
    let rule = VMidRule::new(vec![14.0, 23.5, 33.0], vec![7e-3, 11.75e-3, 16.5e-3]).unwrap();
    ExportBundle::new(net, QuantilePolicy::default(), rule, "htron_mdn").unwrap()
}

#[test]
fn literal_count_matches_parameter_count() {
    let b = bundle(vec![5, 4], 3, 1);
    let text = emit_veriloga(&b).unwrap();
    let lits = weight_literals(&text).unwrap();
    let hidden = (3 + 1) * 5 + (5 + 1) * 4;
    let heads = 3 * 3 * (4 + 1);
    assert_eq!(lits.len(), hidden + heads);
    assert_eq!(lits.len(), b.network.param_count());
}

#[test]
fn literals_round_trip_bit_exactly_through_weight_file() {
    let b = bundle(vec![6, 3], 2, 2);
    let text = emit_veriloga(&b).unwrap();
    let reloaded = load_weights(&save_weights(&b.network).unwrap()).unwrap();
    let expected = emission_order(&reloaded);
    let found = weight_literals(&text).unwrap();
    assert_eq!(found.len(), expected.len());
    for (a, e) in found.iter().zip(&expected) {
        assert_eq!(a.to_bits(), e.to_bits());
    }
}

#[test]
fn emission_is_deterministic_and_parses() {
    let b = bundle(vec![4, 4], 2, 3);
    let a = emit_veriloga(&b).unwrap();
    assert_eq!(a, emit_veriloga(&b.clone()).unwrap());
    let m = parse_module(&a).unwrap();
    assert_eq!(m.name, "htron_mdn");
    assert_eq!(m.ports, vec!["gate", "chp", "chn"]);
    for p in ["seed", "q_mode", "clip_low", "clip_high"] {
        assert!(m.parameters.iter().any(|x| x.name == p), "{p}");
    }
    for f in ["mdn_erfc", "mdn_relu", "mdn_elu1", "mdn_vmid", "mdn_vl"] {
        assert!(m.function(f).is_some(), "{f}");
    }
}

#[test]
fn embedded_erfc_tracks_native() {
    let m = parse_module(&emit_veriloga(&bundle(vec![2], 1, 0)).unwrap()).unwrap();
    let mut it = Interpreter::new(&m);
    let mut x = -7.0;
    while x < 30.0 {
        let native = erfc(x);
        let emitted = it.call("mdn_erfc", &[x]).unwrap();
        let tol = 8.0 * f64::EPSILON * native.abs().max(f64::MIN_POSITIVE) + 1e-300;
        assert!((native - emitted).abs() <= tol, "x={x}: {native} vs {emitted}");
        x += 0.013;
    }
}

#[test]
fn random_points_agree_within_tolerance() {
    for seed in 0..3 {
        let b = bundle(vec![8, 6], 3, 10 + seed);
        let text = emit_veriloga(&b).unwrap();
        let r = check_equivalence(&b, &text, 40, seed).unwrap();
        assert!(r.max_deviation <= EQUIVALENCE_TOLERANCE, "{r:?}");
    }
}

#[test]
fn median_of_single_component_is_its_mean() {
    let mut b = bundle(vec![3], 1, 4);
    let text = emit_veriloga(&b).unwrap();
    let inputs = [1.2, 20.0, 0.0];
    let mean = b.network.predict(&inputs).unwrap().means()[0];
    let emitted = reference_interpret(&text, inputs, 0.5).unwrap();
    let native = native_vl(&b.network, inputs, 0.5).unwrap();
    assert!((emitted - mean).abs() < 1e-12, "{emitted} vs {mean}");
    assert!((native - mean).abs() < 1e-12);
    b.module_name = "2bad".into();
    assert!(emit_veriloga(&b).is_err());
}

#[test]
fn tampered_literal_is_detected() {
    let b = bundle(vec![4, 4], 2, 5);
    let text = emit_veriloga(&b).unwrap();
    let begin = text.find(WEIGHTS_BEGIN).unwrap();
    let line_start = begin + text[begin..].find('\n').unwrap() + 1;
    let line_end = line_start + text[line_start..].find('\n').unwrap();
    let line = &text[line_start..line_end];
    // bump the first fractional digit of the first weight on the first weight line
    let w_start = line.find("+ (").unwrap() + 3;
    let w_end = w_start + line[w_start..].find(' ').unwrap();
    let pos = w_start + line[w_start..w_end].find('.').unwrap() + 1;
    let mut tampered = line.to_string();
    let d = line.as_bytes()[pos];
    tampered.replace_range(pos..pos + 1, if d == b'9' { "8" } else { "9" });
    let tampered_text = format!("{}{}{}", &text[..line_start], tampered, &text[line_end..]);
    assert_ne!(weight_literals(&tampered_text).unwrap(), weight_literals(&text).unwrap());
    let r = check_equivalence(&b, &tampered_text, 50, 1).unwrap();
    assert!(r.max_deviation > EQUIVALENCE_TOLERANCE, "{r:?}");
}

#[test]
fn unroll_limits_enforced() {
    let mut b = bundle(vec![4, 4], 2, 6);
    b.limits = UnrollLimits {
        max_components: 1,
        max_layer_width: 3,
        max_hidden_layers: 1,
    };
    let err = emit_veriloga(&b).unwrap_err().to_string();
    assert!(err.contains("K = 2"), "{err}");
    assert!(err.contains("width 4"), "{err}");
    assert!(err.contains("2 hidden layers"), "{err}");
}

#[test]
fn switching_model_not_exportable() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let norm = Normalization::identity(2);
    let net = MdnNetwork::new(NetworkShape::new(2, vec![3], 2), norm, &mut rng).unwrap();
    let rule = VMidRule::constant(0.01).unwrap();
    assert!(ExportBundle::new(net, QuantilePolicy::default(), rule, "m").is_err());
}

#[test]
fn vmid_function_matches_rule() {
    let b = bundle(vec![2], 1, 7);
    let m = parse_module(&emit_veriloga(&b).unwrap()).unwrap();
    let mut it = Interpreter::new(&m);
    for i_b in [0.0, 14.0, 15.3, 23.5, 27.0, 33.0, 40.0] {
        assert_eq!(it.call("mdn_vmid", &[i_b]).unwrap(), b.v_mid_rule.at(i_b));
    }
}
