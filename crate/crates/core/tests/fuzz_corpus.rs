//! Replays the fuzz corpus, plus cheap mutations of each seed, through the
//! same entry points the fuzz targets use. Runs on stable without libFuzzer.

use std::fs;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semiselftest::cli::RunConfig;
use semiselftest::design::validate_spectrum;
use semiselftest::io::{self, CorrelationDoc, FactorizationDoc, ProtocolSpecDoc};
use semiselftest::Tolerances;

const MUTATIONS_PER_SEED: usize = 200;

fn corpus(target: &str) -> Vec<Vec<u8>> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut files: Vec<PathBuf> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    assert!(!files.is_empty(), "no seeds for {target}");
    files.into_iter().map(|f| fs::read(f).unwrap()).collect()
}

const INTERESTING: &[&[u8]] = &[b"0", b"-1", b"1e308", b"-0.0", b"[]", b"{}", b"null", b"\"", b",", b"]", b"99999999999999999999"];

fn mutate(rng: &mut ChaCha8Rng, seed: &[u8]) -> Vec<u8> {
    let mut v = seed.to_vec();
    for _ in 0..rng.gen_range(1..=4) {
        if v.is_empty() {
            v.push(rng.gen());
            continue;
        }
        let at = rng.gen_range(0..v.len());
        match rng.gen_range(0..5) {
            0 => v[at] ^= 1 << rng.gen_range(0..8),
            1 => v.truncate(at),
            2 => {
                v.remove(at);
            }
            3 => {
                let token = INTERESTING[rng.gen_range(0..INTERESTING.len())];
                v.splice(at..at, token.iter().copied());
            }
            _ => v[at] = b"0123456789.-e,[]{}\":"[rng.gen_range(0..19)],
        }
    }
    v
}

fn replay(target: &str, mut check: impl FnMut(&str)) {
    let mut rng = ChaCha8Rng::seed_from_u64(target.len() as u64);
    for seed in corpus(target) {
        if let Ok(text) = std::str::from_utf8(&seed) {
            check(text);
        }
        for _ in 0..MUTATIONS_PER_SEED {
            if let Ok(text) = std::str::from_utf8(&mutate(&mut rng, &seed)) {
                check(text);
            }
        }
    }
}

#[test]
fn correlation() {
    let tol = Tolerances::default();
    replay("parse_correlation", |text| {
        if let Ok(value) = io::parse_correlation(text, &tol) {
            let again = io::to_json(&CorrelationDoc::from(&value));
            assert_eq!(io::parse_correlation(&again, &tol).unwrap(), value);
        }
    });
}

#[test]
fn protocol_spec() {
    let tol = Tolerances::default();
    replay("parse_protocol_spec", |text| {
        if let Ok(value) = io::parse_protocol_spec(text, &tol) {
            let again = io::to_json(&ProtocolSpecDoc::from(&value));
            assert_eq!(io::parse_protocol_spec(&again, &tol).unwrap(), value);
        }
    });
}

#[test]
fn factorization() {
    let tol = Tolerances::default();
    replay("parse_factorization", |text| {
        if let Ok(value) = io::parse_factorization(text, &tol) {
            let again = io::to_json(&FactorizationDoc::from(&value));
            assert_eq!(io::parse_factorization(&again, &tol).unwrap(), value);
        }
    });
}

#[test]
fn report() {
    replay("parse_report", |text| {
        let _ = io::parse_report(text);
    });
}

#[test]
fn spectrum() {
    replay("parse_spectrum", |text| {
        if let Ok(lambdas) = io::parse_spectrum(text) {
            let _ = validate_spectrum(&lambdas, lambdas.len(), &Tolerances::default());
        }
    });
}

#[test]
fn cli_args() {
    replay("cli_args", |text| {
        let args = std::iter::once("semiselftest").chain(text.split('\0'));
        let _ = RunConfig::from_args(args, None);
    });
}

#[test]
fn seeds_are_accepted_where_expected() {
    let tol = Tolerances::default();
    let ok = |target: &str| {
        corpus(target)
            .iter()
            .filter(|s| {
                let text = std::str::from_utf8(s).unwrap();
                match target {
                    "parse_correlation" => io::parse_correlation(text, &tol).is_ok(),
                    "parse_protocol_spec" => io::parse_protocol_spec(text, &tol).is_ok(),
                    "parse_factorization" => io::parse_factorization(text, &tol).is_ok(),
                    _ => unreachable!(),
                }
            })
            .count()
    };
    // generated documents parse; the hand-written malformed ones do not
    assert_eq!(ok("parse_correlation"), 3);
    assert_eq!(ok("parse_protocol_spec"), 3);
    assert_eq!(ok("parse_factorization"), 2);
}
