#![no_main]
use kamred::potential::PotentialSpec;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(pot) = PotentialSpec::from_json(s) {
        for x in [0.0, 0.5, 1.0, 3.0] {
            let _ = pot.eval(x, 2);
        }
    }
});
