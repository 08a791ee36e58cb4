use std::path::Path;

use cheeger_core::checks::load_fixtures;
use cheeger_core::oracle::brute_force_hn;
use cheeger_core::{measure_set, GridDomain, OracleFixture};

fn fixtures() -> Vec<(std::path::PathBuf, OracleFixture)> {
    let fx = load_fixtures(Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures"))).unwrap();
    assert!(fx.len() >= 8, "fixture directory incomplete");
    fx
}

/// Labels every mask pixel with 0 (unused) or a set index and keeps the best
/// labelling; a different enumeration from the subset-pair search.
fn naive_hn(dom: &GridDomain, n: usize) -> f64 {
    let pixels: Vec<usize> = (0..dom.len()).filter(|&k| dom.inside(k)).collect();
    let base = n + 1;
    let total = base.pow(pixels.len() as u32);
    let mut best = f64::INFINITY;
    for code in 0..total {
        let mut sets = vec![vec![false; dom.len()]; n];
        let mut c = code;
        for &k in &pixels {
            let label = c % base;
            c /= base;
            if label > 0 {
                sets[label - 1][k] = true;
            }
        }
        if sets.iter().any(|s| !s.contains(&true)) {
            continue;
        }
        let value: f64 = sets.iter().map(|s| measure_set(dom, s).unwrap().ratio()).sum();
        best = best.min(value);
    }
    best
}

fn mirrored(rows: &[String]) -> Vec<String> {
    rows.iter().map(|r| r.chars().rev().collect()).collect()
}

fn flipped(rows: &[String]) -> Vec<String> {
    rows.iter().rev().cloned().collect()
}

#[test]
fn fixtures_reproduce_bit_for_bit() {
    for (path, fx) in fixtures() {
        assert!(fx.reproduces().unwrap(), "{}", path.display());
    }
}

#[test]
fn fixture_sets_are_disjoint_and_achieve_the_value() {
    for (path, fx) in fixtures() {
        let dom = fx.domain().unwrap();
        assert_eq!(fx.masks.len(), fx.n, "{}", path.display());
        let sets: Vec<Vec<bool>> = fx.masks.iter().map(|m| GridDomain::from_rows(m, fx.h).unwrap().mask().to_vec()).collect();
        for k in 0..dom.len() {
            assert!(sets.iter().filter(|s| s[k]).count() <= 1);
        }
        let value: f64 = sets.iter().map(|s| measure_set(&dom, s).unwrap().ratio()).sum();
        assert!((value - fx.value).abs() < 1e-12, "{}: {value} vs {}", path.display(), fx.value);
    }
}

#[test]
fn naive_enumeration_agrees() {
    let mut compared = 0;
    for (path, fx) in fixtures() {
        let dom = fx.domain().unwrap();
        if dom.pixel_count() > 10 {
            continue;
        }
        let naive = naive_hn(&dom, fx.n);
        assert!((naive - fx.value).abs() < 1e-12, "{}: {naive} vs {}", path.display(), fx.value);
        compared += 1;
    }
    assert!(compared >= 5);
}

#[test]
fn value_is_invariant_under_reflections() {
    for (path, fx) in fixtures() {
        for rows in [mirrored(&fx.mask), flipped(&fx.mask)] {
            let dom = GridDomain::from_rows(&rows, fx.h).unwrap();
            let v = brute_force_hn(&dom, fx.n).unwrap().value;
            assert!((v - fx.value).abs() < 1e-12, "{}: {v} vs {}", path.display(), fx.value);
        }
    }
}

#[test]
fn value_scales_inversely_with_pixel_size() {
    let fx = OracleFixture::load(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/dumbbell.json")).unwrap();
    let half = OracleFixture::compute(fx.mask.clone(), 0.5, fx.n).unwrap();
    assert!((half.value - 2.0 * fx.value).abs() < 1e-12);
    assert_eq!(half.masks, fx.masks);
}

#[test]
fn corrupted_fixture_names_its_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.json"), "{\"mask\": [\"11\"").unwrap();
    let err = load_fixtures(dir.path()).unwrap_err().to_string();
    assert!(err.contains("bad.json"), "{err}");
}
