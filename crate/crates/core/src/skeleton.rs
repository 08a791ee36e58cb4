//! Pointwise constraints: projection onto the skeleton Σ (at most one
//! positive component per pixel), unit-L¹ normalization, and the split of a
//! signed function into its positive and negative parts.

use crate::error::{Error, Result};
use crate::grid::{MultiField, ScalarField};

/// Pointwise Euclidean projection onto Σ: clamp at zero, keep the largest
/// component (lowest index on ties), zero the others.
pub fn project_sigma(u: &MultiField) -> MultiField {
    let dom = u.domain();
    let n = u.n();
    let len = dom.len();
    let mut out: Vec<Vec<f64>> = vec![vec![0.0; len]; n];
    for k in 0..len {
        let mut best = 0usize;
        let mut best_val = u.component(0).values()[k];
        for i in 1..n {
            let v = u.component(i).values()[k];
            if v > best_val {
                best = i;
                best_val = v;
            }
        }
        if best_val > 0.0 {
            out[best][k] = best_val;
        }
    }
    MultiField::new(out.into_iter().map(|v| ScalarField::masked(dom, v)).collect())
        .expect("components share the input domain")
}

/// Scales each component to unit discrete L¹ norm.
pub fn normalize_l1(u: &MultiField) -> Result<MultiField> {
    let mut comps = Vec::with_capacity(u.n());
    for (i, c) in u.components().iter().enumerate() {
        let norm = c.l1_norm();
        if norm <= 0.0 {
            return Err(Error::CollapsedChamber(i));
        }
        comps.push(c.scaled(1.0 / norm));
    }
    MultiField::new(comps)
}

/// `v ↦ (v⁺, v⁻)`.
pub fn split_signed(v: &ScalarField) -> Result<MultiField> {
    let pos = v.map(|x| x.max(0.0));
    let neg = v.map(|x| (-x).max(0.0));
    if pos.is_zero() || neg.is_zero() {
        return Err(Error::NoSignChange);
    }
    MultiField::new(vec![pos, neg])
}

/// `(u¹, u²) ↦ u¹ − u²` for skeleton-valued pairs.
pub fn merge_signed(u: &MultiField) -> Result<ScalarField> {
    if u.n() != 2 {
        return Err(Error::InvalidParameter(format!("signed merge needs N = 2, got {}", u.n())));
    }
    let (a, b) = (u.component(0).values(), u.component(1).values());
    if a.iter().chain(b).any(|&x| x < 0.0) || a.iter().zip(b).any(|(&x, &y)| x > 0.0 && y > 0.0) {
        return Err(Error::OverlappingSupports);
    }
    let v = a.iter().zip(b).map(|(x, y)| x - y).collect();
    Ok(ScalarField::masked(u.domain(), v))
}

/// Largest value of the second-largest positive component over all pixels;
/// zero iff `u` is skeleton-valued.
pub fn skeleton_violation(u: &MultiField) -> f64 {
    let len = u.domain().len();
    let mut worst = 0.0f64;
    for k in 0..len {
        let (mut first, mut second) = (0.0f64, 0.0f64);
        for c in u.components() {
            let v = c.values()[k];
            if v > first {
                second = first;
                first = v;
            } else if v > second {
                second = v;
            }
        }
        worst = worst.max(second);
    }
    worst
}

/// Euclidean projection of `values[idx]` (for `idx` in `support`) onto
/// `{w ≥ 0, Σ w = mass}`: `w = max(v − λ, 0)` with λ found by Michelot's
/// active-set iteration, started from `guess` (`-∞` for a cold start).
/// Entries outside `support` are left untouched. Returns λ.
///
/// Each step is a Newton step on the convex decreasing map
/// `λ ↦ Σ max(v − λ, 0) − mass`, so it never overshoots and the active set
/// only shrinks after the first step; the result does not depend on `guess`.
pub(crate) fn shift_to_mass(values: &mut [f64], support: &[u32], mass: f64, guess: f64) -> f64 {
    debug_assert!(!support.is_empty());
    let mut lambda = guess;
    let mut count = usize::MAX;
    loop {
        let (mut s, mut c) = (0.0, 0usize);
        for &k in support {
            let v = values[k as usize];
            if v > lambda {
                s += v;
                c += 1;
            }
        }
        if c == 0 {
            // guess above every value
            lambda = f64::NEG_INFINITY;
            continue;
        }
        if c == count {
            break;
        }
        count = c;
        lambda = (s - mass) / c as f64;
    }
    for &k in support {
        let v = &mut values[k as usize];
        *v = (*v - lambda).max(0.0);
    }
    lambda
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridDomain;
    use crate::tvops::{energy_star, tv};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn one_pixel_pair(a: f64, b: f64) -> MultiField {
        let d = Arc::new(GridDomain::from_rows(&["1"], 1.0).unwrap());
        let k = d.index(2, 2);
        let mut x = vec![0.0; d.len()];
        let mut y = vec![0.0; d.len()];
        x[k] = a;
        y[k] = b;
        MultiField::new(vec![ScalarField::new(&d, x).unwrap(), ScalarField::new(&d, y).unwrap()]).unwrap()
    }

    fn at_center(u: &MultiField) -> (f64, f64) {
        let k = u.domain().index(2, 2);
        (u.component(0).values()[k], u.component(1).values()[k])
    }

    #[test]
    fn projection_examples() {
        assert_eq!(at_center(&project_sigma(&one_pixel_pair(3.0, 1.0))), (3.0, 0.0));
        assert_eq!(at_center(&project_sigma(&one_pixel_pair(-2.0, -5.0))), (0.0, 0.0));
        assert_eq!(at_center(&project_sigma(&one_pixel_pair(2.0, 2.0))), (2.0, 0.0));
        assert_eq!(at_center(&project_sigma(&one_pixel_pair(-1.0, 0.5))), (0.0, 0.5));
    }

    fn rect_domain() -> Arc<GridDomain> {
        Arc::new(GridDomain::from_rows(&["11110011", "11110011", "00000011"], 0.5).unwrap())
    }

    fn two_blocks(d: &Arc<GridDomain>) -> (Vec<bool>, Vec<bool>) {
        let mut a = vec![false; d.len()];
        let mut b = vec![false; d.len()];
        for j in 0..d.ny() {
            for i in 0..d.nx() {
                let k = d.index(i, j);
                if d.mask()[k] {
                    if i < 6 {
                        a[k] = true;
                    } else {
                        b[k] = true;
                    }
                }
            }
        }
        (a, b)
    }

    #[test]
    fn normalize_indicators() {
        let d = rect_domain();
        let (a, b) = two_blocks(&d);
        let u = MultiField::new(vec![ScalarField::indicator(&d, &a), ScalarField::indicator(&d, &b)]).unwrap();
        let n = normalize_l1(&u).unwrap();
        let h2 = 0.25;
        for (c, set) in n.components().iter().zip([&a, &b]) {
            let vol = set.iter().filter(|&&s| s).count() as f64 * h2;
            for (k, &s) in set.iter().enumerate() {
                let want = if s { 1.0 / vol } else { 0.0 };
                assert!((c.values()[k] - want).abs() < 1e-14);
            }
        }
        let again = normalize_l1(&n).unwrap();
        for (x, y) in again.components().iter().zip(n.components()) {
            for (p, q) in x.values().iter().zip(y.values()) {
                assert!((p - q).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn normalize_rejects_collapsed_component() {
        let d = rect_domain();
        let (a, _) = two_blocks(&d);
        let u = MultiField::new(vec![ScalarField::indicator(&d, &a), ScalarField::zeros(&d)]).unwrap();
        assert!(matches!(normalize_l1(&u), Err(Error::CollapsedChamber(1))));
    }

    #[test]
    fn split_and_merge() {
        let d = rect_domain();
        let (a, b) = two_blocks(&d);
        let ia = ScalarField::indicator(&d, &a);
        let ib = ScalarField::indicator(&d, &b);
        let v = ScalarField::masked(&d, ia.values().iter().zip(ib.values()).map(|(x, y)| x - y).collect());
        let u = split_signed(&v).unwrap();
        assert_eq!(u.component(0), &ia);
        assert_eq!(u.component(1), &ib);
        assert_eq!(merge_signed(&u).unwrap(), v);
        assert!(matches!(split_signed(&ia), Err(Error::NoSignChange)));
    }

    #[test]
    fn merge_rejects_overlap() {
        let u = one_pixel_pair(1.0, 1.0);
        assert!(matches!(merge_signed(&u), Err(Error::OverlappingSupports)));
    }

    #[test]
    fn separated_supports_have_equal_energies() {
        // blocks two pixels apart (columns 4-5 are outside the chambers)
        let d = rect_domain();
        let (a, b) = two_blocks(&d);
        let a: Vec<bool> = a.iter().enumerate().map(|(k, &s)| s && k % d.nx() < 6).collect();
        let u = normalize_l1(
            &MultiField::new(vec![ScalarField::indicator(&d, &a), ScalarField::indicator(&d, &b)]).unwrap(),
        )
        .unwrap();
        let v = merge_signed(&u).unwrap();
        let e = energy_star(&split_signed(&v).unwrap());
        assert!((e - tv(&v)).abs() <= 1e-12 * e);
    }

    #[test]
    fn shift_to_mass_projects_onto_simplex() {
        let mut v = vec![0.5, -1.0, 2.0, 0.1, 9.0];
        let lambda = shift_to_mass(&mut v, &[0, 1, 2, 3], 1.0, f64::NEG_INFINITY);
        assert_eq!(lambda, 1.0);
        assert_eq!(v, vec![0.0, 0.0, 1.0, 0.0, 9.0]);
        let mut w = vec![0.0, 0.0];
        shift_to_mass(&mut w, &[0, 1], 4.0, f64::NEG_INFINITY);
        assert_eq!(w, vec![2.0, 2.0]);
    }

    #[test]
    fn shift_to_mass_ignores_the_guess() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let base: Vec<f64> = (0..200).map(|_| rng.gen_range(-1.0..3.0)).collect();
        let support: Vec<u32> = (0..200).filter(|k| k % 3 != 0).collect();
        let mut cold = base.clone();
        let l0 = shift_to_mass(&mut cold, &support, 25.0, f64::NEG_INFINITY);
        for guess in [-5.0, 0.0, l0, 0.9 * l0, 1.1 * l0, 2.9, 10.0] {
            let mut warm = base.clone();
            let l = shift_to_mass(&mut warm, &support, 25.0, guess);
            assert_eq!(l.to_bits(), l0.to_bits());
            assert_eq!(warm, cold);
        }
    }

    proptest! {
        #[test]
        fn projection_is_idempotent_and_nonexpansive(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = Arc::new(GridDomain::from_rows(&["1111", "1111", "1111"], 1.0).unwrap());
            let n = 3;
            let rand_field = |rng: &mut ChaCha8Rng| {
                MultiField::new((0..n).map(|_| {
                    ScalarField::masked(&d, (0..d.len()).map(|_| rng.gen_range(-2.0..2.0)).collect())
                }).collect()).unwrap()
            };
            let x = rand_field(&mut rng);
            let y = rand_field(&mut rng);
            let px = project_sigma(&x);
            prop_assert_eq!(&project_sigma(&px), &px);
            prop_assert_eq!(skeleton_violation(&px), 0.0);
            let py = project_sigma(&y);
            // Σ is not convex, so nonexpansiveness holds only between points
            // whose dominant axes agree; sample those pixels.
            for k in 0..d.len() {
                let arg = |u: &MultiField| (0..n).fold(0, |b, i| {
                    if u.component(i).values()[k] > u.component(b).values()[k] { i } else { b }
                });
                if arg(&x) != arg(&y) {
                    continue;
                }
                let dist = |a: &MultiField, b: &MultiField| (0..n)
                    .map(|i| (a.component(i).values()[k] - b.component(i).values()[k]).powi(2))
                    .sum::<f64>().sqrt();
                prop_assert!(dist(&px, &py) <= dist(&x, &y) + 1e-12);
            }
        }

        #[test]
        fn split_merge_round_trip(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = Arc::new(GridDomain::from_rows(&["11111", "11111"], 0.5).unwrap());
            let x = MultiField::new((0..2).map(|_| {
                ScalarField::masked(&d, (0..d.len()).map(|_| rng.gen_range(-1.0..1.0)).collect())
            }).collect()).unwrap();
            let u = project_sigma(&x);
            prop_assume!(!u.component(0).is_zero() && !u.component(1).is_zero());
            let v = merge_signed(&u).unwrap();
            prop_assert_eq!(split_signed(&v).unwrap(), u);
        }

        #[test]
        fn signed_constraints_are_equivalent(seed in any::<u64>()) {
            // ‖v⁺‖ = ‖v⁻‖ = 1  ⇔  ∫|v| = 2 and ∫v = 0
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = Arc::new(GridDomain::from_rows(&["111111", "111111"], 0.5).unwrap());
            let raw = ScalarField::masked(&d, (0..d.len()).map(|_| rng.gen_range(-1.0..1.0)).collect());
            prop_assume!(split_signed(&raw).is_ok());
            let parts = normalize_l1(&split_signed(&raw).unwrap()).unwrap();
            let v = merge_signed(&parts).unwrap();
            prop_assert!((v.l1_norm() - 2.0).abs() < 1e-12);
            prop_assert!(v.integral().abs() < 1e-12);
            let back = split_signed(&v).unwrap();
            prop_assert!((back.component(0).l1_norm() - 1.0).abs() < 1e-12);
            prop_assert!((back.component(1).l1_norm() - 1.0).abs() < 1e-12);
        }
    }
}
