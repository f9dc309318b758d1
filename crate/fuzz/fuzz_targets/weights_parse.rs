#![no_main]
use libfuzzer_sys::fuzz_target;
use signalq::{PolicyWeights, QNetwork};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(net) = QNetwork::deserialize(text) {
        assert_eq!(QNetwork::deserialize(&net.serialize()).unwrap(), net);
    }
    if let Ok(w) = PolicyWeights::from_json(text) {
        // every network in an accepted bundle must be usable
        w.networks().unwrap();
    }
});
