#![no_main]

use std::path::Path;

use artl::config::RunConfig;
use artl::experiment::config_hash;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = RunConfig::parse(text, Path::new("fuzz.conf")) {
        assert!(!cfg.seeds.is_empty());
        assert!(cfg.trainer.validate().is_ok());
        assert_eq!(config_hash(&cfg).len(), 16);
    }
});
