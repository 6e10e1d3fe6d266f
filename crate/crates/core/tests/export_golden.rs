use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stochastic_mdn::device::VMidRule;
use stochastic_mdn::export::{check_equivalence, emit_veriloga, ExportBundle, EQUIVALENCE_TOLERANCE};
use stochastic_mdn::network::{MdnNetwork, NetworkShape, Normalization};
use stochastic_mdn::sampling::QuantilePolicy;

const GOLDEN: &str = "tests/golden/htron_2x4_k2.va";

fn golden_bundle() -> ExportBundle {
    let norm = Normalization {
        min: vec![0.0, 14.0, 0.0],
        max: vec![3.0, 33.0, 1.0],
        target_offset: 0.0165,
        target_scale: 1e-4,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let net = MdnNetwork::new(NetworkShape::new(3, vec![4, 4], 2), norm, &mut rng).unwrap();
    let rule = VMidRule::new(vec![14.0, 23.5, 33.0], vec![7e-3, 11.75e-3, 16.5e-3]).unwrap();
    let mut b = ExportBundle::new(net, QuantilePolicy::default(), rule, "htron_2x4_k2").unwrap();
    b.seed = 17;
    b
}

/// Set `MDN_UPDATE_GOLDEN=1` to regenerate the reference file.
#[test]
fn emission_matches_golden_file() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(GOLDEN);
    let text = emit_veriloga(&golden_bundle()).unwrap();
    if std::env::var_os("MDN_UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, &text).unwrap();
    }
    let golden = std::fs::read_to_string(&path).expect("golden file missing; run with MDN_UPDATE_GOLDEN=1");
    if golden != text {
        let line = golden
            .lines()
            .zip(text.lines())
            .position(|(a, b)| a != b)
            .map_or(golden.lines().count().min(text.lines().count()), |i| i);
        panic!("emitted text differs from {GOLDEN} at line {}", line + 1);
    }
}

#[test]
fn emission_is_stable_across_runs() {
    let a = emit_veriloga(&golden_bundle()).unwrap();
    let b = emit_veriloga(&golden_bundle()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn golden_file_is_equivalent_to_native() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(GOLDEN);
    let golden = std::fs::read_to_string(path).unwrap();
    let r = check_equivalence(&golden_bundle(), &golden, 100, 3).unwrap();
    assert!(r.max_deviation <= EQUIVALENCE_TOLERANCE, "{r:?}");
}
