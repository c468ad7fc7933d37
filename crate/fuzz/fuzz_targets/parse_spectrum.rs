#![no_main]

use libfuzzer_sys::fuzz_target;
use semiselftest::{design::validate_spectrum, io, Tolerances};

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(lambdas) = io::parse_spectrum(text) {
            let _ = validate_spectrum(&lambdas, lambdas.len(), &Tolerances::default());
        }
    }
});
