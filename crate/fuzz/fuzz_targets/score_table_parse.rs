#![no_main]

use bbf_metrics::io::{final_run_scores, parse_references, parse_scores, GameTable};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(table) = GameTable::parse(text) {
        for column in table.columns.clone() {
            let _ = table.matrix(&column);
        }
    }
    if let Ok(records) = parse_scores(text) {
        let _ = final_run_scores(&records);
    }
    let _ = parse_references(text);
});
