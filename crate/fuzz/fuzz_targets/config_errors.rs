#![no_main]

use libfuzzer_sys::fuzz_target;
use spherefield_cli::config::parse_config;

fuzz_target!(|data: &[u8]| {
    let text = String::from_utf8_lossy(data);
    let first = parse_config(&text);
    let second = parse_config(&text);
    assert_eq!(first, second);
    if let Err(e) = first {
        assert!(!e.0.is_empty());
        let _ = e.to_string();
        let _ = serde_json::to_string(&e.0).unwrap();
    }
});
