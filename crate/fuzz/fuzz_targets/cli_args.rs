#![no_main]

use libfuzzer_sys::fuzz_target;
use semiselftest::cli::RunConfig;

// Arguments are NUL-separated. Only parsing is exercised; nothing runs.
fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let args = std::iter::once("semiselftest").chain(text.split('\0'));
        let _ = RunConfig::from_args(args, None);
    }
});
