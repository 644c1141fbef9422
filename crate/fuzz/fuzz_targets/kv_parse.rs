#![no_main]

use bbf_core::kv::KvMap;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(map) = KvMap::parse(text) {
        let again = KvMap::parse(&map.to_text()).expect("rendered map parses");
        assert_eq!(map, again);
    }
});
