#![no_main]
use libfuzzer_sys::fuzz_target;
use signalq::RunReport;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(r) = RunReport::from_json(text) {
        assert_eq!(RunReport::from_json(&r.to_json()).unwrap(), r);
    }
});
