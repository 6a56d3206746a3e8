//! The shipped configurations and the config round trip.

use std::path::PathBuf;

use neass_lab::config::{parse_config, serialize_config, strip_comments, ExperimentConfig};
use proptest::prelude::*;

fn shipped() -> Vec<(PathBuf, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut out: Vec<_> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "cfg"))
        .map(|p| {
            let text = std::fs::read_to_string(&p).unwrap();
            (p, text)
        })
        .collect();
    out.sort();
    out
}

#[test]
fn shipped_configs_are_canonical_modulo_comments() {
    let all = shipped();
    assert!(all.len() >= 3);
    for (path, text) in all {
        let cfg = parse_config(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(serialize_config(&cfg), strip_comments(&text), "{}", path.display());
    }
}

fn base() -> ExperimentConfig {
    parse_config(&shipped().into_iter().find(|(p, _)| p.ends_with("r1.cfg")).unwrap().1).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn parse_serialize_parse_is_identity(
        eps in prop::collection::vec(1e-6f64..=1.0, 1..6),
        n in prop::collection::vec(1usize..6, 1..4),
        mu in -5.0f64..5.0,
        seed in any::<u32>(),
        amp in -3.0f64..3.0,
        time in prop::option::of(1e-3f64..50.0),
    ) {
        let mut cfg = base();
        cfg.sweep.epsilon = eps;
        cfg.sweep.n = n;
        cfg.sweep.time = time;
        cfg.model.mu = Some(mu);
        cfg.seed = Some(seed as u64);
        cfg.model.hopping[0].amp = amp;
        let text = serialize_config(&cfg);
        let back = parse_config(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(serialize_config(&back), text);
    }
}
