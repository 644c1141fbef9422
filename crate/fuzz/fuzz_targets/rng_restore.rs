#![no_main]

use bbf_core::rng::{restore, save};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(rng) = restore(text) {
        let again = restore(&save(&rng)).expect("saved state restores");
        assert_eq!(save(&rng), save(&again));
    }
});
