#![no_main]

use affine_levy_cli::expr::eval;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(v) = eval(text) {
        assert!(v.is_finite());
    }
});
