#![no_main]

use libfuzzer_sys::fuzz_target;
use pulseforge::presets::PresetLibrary;
use pulseforge_cli::parse_config;

// Input: config text, optionally followed by "\n---\n" and one override per line.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let (body, overrides) = match text.split_once("\n---\n") {
        Some((b, o)) => (b, o.lines().map(str::to_owned).collect::<Vec<_>>()),
        None => (text, Vec::new()),
    };
    let Ok(cfg) = parse_config(body, &overrides) else {
        return;
    };
    // A config that parses must yield usable derived values.
    cfg.params().expect("validated params");
    cfg.labeled_inputs().expect("validated inputs");
    let _ = cfg.policy();
    let _ = cfg.variant();
    let lib = PresetLibrary::builtin();
    let _ = cfg.gate(&lib);
    if cfg.coefficients_file.is_none() {
        let _ = cfg.coefficients(&lib);
    }
});
