//! Replays the checked-in fuzz corpus through the same checks the fuzz
//! targets run, so the seeds stay valid on stable toolchains.

use std::fs;
use std::path::PathBuf;

use signalq::netmodel::load_scenario;
use signalq::{PolicyWeights, QNetwork, RunReport};

fn corpus(target: &str) -> Vec<(PathBuf, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut files: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    assert!(!files.is_empty(), "empty corpus for {target}");
    files
        .into_iter()
        .map(|p| {
            let text = fs::read_to_string(&p).unwrap();
            (p, text)
        })
        .collect()
}

#[test]
fn scenario_seeds() {
    let mut loaded = 0;
    for (path, text) in corpus("scenario_parse") {
        if let Ok(s) = load_scenario(&text) {
            assert_eq!(load_scenario(&s.to_json()).unwrap(), s, "{}", path.display());
            loaded += 1;
        }
    }
    assert!(loaded >= 2);
}

#[test]
fn weights_seeds() {
    let (mut nets, mut bundles) = (0, 0);
    for (path, text) in corpus("weights_parse") {
        if let Ok(net) = QNetwork::deserialize(&text) {
            assert_eq!(QNetwork::deserialize(&net.serialize()).unwrap(), net, "{}", path.display());
            nets += 1;
        }
        if let Ok(w) = PolicyWeights::from_json(&text) {
            w.networks().unwrap();
            bundles += 1;
        }
    }
    assert!(nets >= 1 && bundles >= 1);
}

#[test]
fn report_seeds() {
    for (path, text) in corpus("report_parse") {
        let r = RunReport::from_json(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(RunReport::from_json(&r.to_json()).unwrap(), r);
    }
}

#[test]
fn mangled_seeds_do_not_panic() {
    for target in ["scenario_parse", "weights_parse", "report_parse"] {
        for (_, text) in corpus(target) {
            let bytes = text.as_bytes();
            for cut in (0..bytes.len()).step_by(bytes.len() / 50 + 1) {
                let t = String::from_utf8_lossy(&bytes[..cut]);
                let _ = load_scenario(&t);
                let _ = QNetwork::deserialize(&t);
                let _ = PolicyWeights::from_json(&t);
                let _ = RunReport::from_json(&t);
            }
        }
    }
}
