#![no_main]
use libfuzzer_sys::fuzz_target;
use signalq::netmodel::load_scenario;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(s) = load_scenario(text) {
        let again = load_scenario(&s.to_json()).expect("a loaded scenario reloads");
        assert_eq!(s, again);
    }
});
