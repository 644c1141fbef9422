#![no_main]

use bbf_core::trainer::{read_metrics, read_scores};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    let _ = read_scores(text);
    let _ = read_metrics(text);
});
