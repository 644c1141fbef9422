#![no_main]

use bbf_autodiff::checkpoint::Container;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(c) = Container::decode(data) {
        let bytes = c.encode().expect("decoded container re-encodes");
        let again = Container::decode(&bytes).expect("re-encoded container decodes");
        let names: Vec<&str> = c.names().collect();
        assert_eq!(names, again.names().collect::<Vec<_>>());
        for name in names {
            assert_eq!(c.get(name), again.get(name));
        }
    }
});
