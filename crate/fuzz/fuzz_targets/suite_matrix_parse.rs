#![no_main]

use bbf_core::trainer::SuiteMatrix;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(matrix) = SuiteMatrix::parse(text) {
        let _ = matrix.jobs();
    }
});
