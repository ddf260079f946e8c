#![no_main]

use libfuzzer_sys::fuzz_target;
use spherefield_cli::config::parse_config;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = parse_config(text) {
        assert!(cfg.dim == 1 || cfg.dim == 2);
        assert!(cfg.samples >= 2);
        assert!(cfg.schedule.validate().is_ok());
        let _ = cfg.functionals_or_family();
        let _ = serde_json::to_string(&cfg).unwrap();
    }
});
