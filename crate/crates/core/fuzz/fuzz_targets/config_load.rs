#![no_main]

use libfuzzer_sys::fuzz_target;
use synthscope::io::{load_config, Registry};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(config) = load_config(text) {
        // canonical text is a fixed point and always builds
        let canonical = config.to_json_string();
        let again = load_config(&canonical).expect("canonical config reloads");
        assert_eq!(again.to_json_string(), canonical);
        again.build(&Registry::standard()).expect("validated config builds");
    }
});
