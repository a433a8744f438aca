#![no_main]

use affine_levy::simulate::ShortRatePaths;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(p) = ShortRatePaths::from_binary(data) {
        // compare encodings, decoded values may be NaN
        let bytes = p.to_binary();
        let again = ShortRatePaths::from_binary(&bytes).expect("re-encoded paths decode");
        assert_eq!(again.to_binary(), bytes);
    }
});
