use std::fs;
use std::path::Path;

use spherefield_cli::config::parse_config;

#[test]
fn corpus_seeds_parse_without_panicking() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus");
    let mut ok = 0;
    let mut rejected = 0;
    for target in ["parse_config", "config_errors"] {
        for entry in fs::read_dir(root.join(target)).unwrap() {
            let text = fs::read_to_string(entry.unwrap().path()).unwrap();
            match parse_config(&text) {
                Ok(_) => ok += 1,
                Err(e) => {
                    assert!(!e.0.is_empty());
                    rejected += 1;
                }
            }
        }
    }
    assert!(ok >= 4, "{ok}");
    assert!(rejected >= 3, "{rejected}");
}
