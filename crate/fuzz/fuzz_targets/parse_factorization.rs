#![no_main]

use libfuzzer_sys::fuzz_target;
use semiselftest::{io, Tolerances};

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let tol = Tolerances::default();
        if let Ok(value) = io::parse_factorization(text, &tol) {
            let again = io::to_json(&io::FactorizationDoc::from(&value));
            assert_eq!(io::parse_factorization(&again, &tol).unwrap(), value);
        }
    }
});
