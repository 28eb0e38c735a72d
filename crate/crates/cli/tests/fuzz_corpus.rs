//! Replays the checked-in fuzz corpus, plus seeded mutations of it, through
//! the same entry points the fuzz targets drive.

use std::path::{Path, PathBuf};

use hcsim::config::ScenarioConfig;
use hcsim_core::io::{decode_hcf1, encode_hcf1};
use hcsim_core::measurement::MeasurementScenario;
use hcsim_core::MeasurementRecord;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn corpus(target: &str) -> Vec<(PathBuf, Vec<u8>)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            let bytes = std::fs::read(&p).unwrap();
            (p, bytes)
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "empty corpus for {target}");
    out
}

fn mutants(seed: &[u8], count: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<u8>> {
    (0..count)
        .map(|_| {
            let mut m = seed.to_vec();
            match rng.gen_range(0..4) {
                0 if !m.is_empty() => {
                    let i = rng.gen_range(0..m.len());
                    m[i] ^= 1 << rng.gen_range(0..8);
                }
                1 if !m.is_empty() => m.truncate(rng.gen_range(0..m.len())),
                2 => {
                    let i = rng.gen_range(0..=m.len());
                    m.insert(i, rng.gen());
                }
                _ if !m.is_empty() => {
                    let i = rng.gen_range(0..m.len());
                    m[i] = rng.gen();
                }
                _ => {}
            }
            m
        })
        .collect()
}

fn hcf1(data: &[u8]) {
    if let Ok((field, alpha)) = decode_hcf1(data) {
        assert_eq!(encode_hcf1(&field, alpha), data);
    }
}

fn config(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = ScenarioConfig::from_toml(text) {
        let _ = cfg.resolve();
    }
}

fn record(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(rec) = MeasurementRecord::from_json(text) {
        let again = rec.to_json().unwrap();
        assert_eq!(MeasurementRecord::from_json(&again).unwrap(), rec);
    }
}

fn scenario(data: &[u8]) {
    let Ok(s) = serde_json::from_slice::<MeasurementScenario>(data) else {
        return;
    };
    if let Ok(p) = s.default_params(1.0) {
        let _ = s.validate(&p);
    }
}

fn replay(target: &str, run: fn(&[u8]), count: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for (_, seed) in corpus(target) {
        run(&seed);
        for m in mutants(&seed, count, &mut rng) {
            run(&m);
        }
    }
}

#[test]
fn corpus_seeds_are_valid_inputs() {
    let (field, alpha) = decode_hcf1(
        &corpus("hcf1_decode")
            .into_iter()
            .find(|(p, _)| p.ends_with("free_1d_32.hcf1"))
            .unwrap()
            .1,
    )
    .unwrap();
    assert_eq!(alpha, 1.0);
    assert_eq!(field.grid().points(), &[32]);
    for (p, bytes) in corpus("config_parse") {
        let cfg = ScenarioConfig::from_toml(std::str::from_utf8(&bytes).unwrap()).unwrap();
        cfg.resolve()
            .unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    }
    for (_, bytes) in corpus("record_json") {
        MeasurementRecord::from_json(std::str::from_utf8(&bytes).unwrap()).unwrap();
    }
    for (_, bytes) in corpus("scenario_json") {
        let s: MeasurementScenario = serde_json::from_slice(&bytes).unwrap();
        s.validate(&s.default_params(1.0).unwrap()).unwrap();
    }
}

#[test]
fn hcf1_mutants() {
    replay("hcf1_decode", hcf1, 2000);
}

#[test]
fn config_mutants() {
    replay("config_parse", config, 300);
}

#[test]
fn record_mutants() {
    replay("record_json", record, 2000);
}

#[test]
fn scenario_mutants() {
    replay("scenario_json", scenario, 300);
}
