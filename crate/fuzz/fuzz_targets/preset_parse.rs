#![no_main]

use libfuzzer_sys::fuzz_target;
use pulseforge::presets::{PresetLibrary, Variant};
use pulseforge::pulsegen::validate_coefficients;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(lib) = PresetLibrary::parse(text) else {
        return;
    };
    for name in lib.gate_names() {
        let gate = lib.gate(name).expect("listed gate resolves");
        assert!(gate.gamma.is_finite() && gate.phi.is_finite() && gate.theta.is_finite());
        for v in [Variant::Optimized, Variant::Verbatim, Variant::Baseline] {
            if let Ok(c) = lib.coefficients(name, v) {
                assert!(c.flat().iter().all(|x| x.is_finite()));
                let _ = validate_coefficients(&c, 0.5);
            }
        }
    }
});
