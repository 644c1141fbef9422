#![no_main]

use bbf_autodiff::checkpoint::{decode_params, encode_params};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(set) = decode_params::<f64>(data) {
        let bytes = encode_params(&set).expect("decoded set re-encodes");
        let again = decode_params::<f64>(&bytes).expect("re-encoded set decodes");
        assert_eq!(set.len(), again.len());
        for ((na, a), (nb, b)) in set.iter().zip(again.iter()) {
            assert_eq!(na, nb);
            assert_eq!(a.shape(), b.shape());
            let same = a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits());
            assert!(same, "values of `{na}` changed");
        }
    }
    let _ = decode_params::<f32>(data);
});
