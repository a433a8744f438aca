#![no_main]

use affine_levy_cli::Scenario;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(sc) = Scenario::parse(text, &[]) {
        // accepted scenarios normalize to a fixed point
        let again = Scenario::from_value(sc.normalized()).expect("normalized form parses");
        assert_eq!(sc, again);
        let _ = sc.plan();
    }
});
