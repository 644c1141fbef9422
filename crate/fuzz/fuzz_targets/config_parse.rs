#![no_main]

use bbf_core::config::AgentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(config) = AgentConfig::parse(text) {
        let again = AgentConfig::parse(&config.to_kv().to_text()).expect("rendered config parses");
        assert_eq!(config, again);
    }
});
