//! Ground truth: analytic Cheeger constants of discs and squares, and an
//! exhaustive search over pixel sets of tiny domains.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extract::measure_set;
use crate::grid::{GridDomain, PAD};

/// Largest mask handled by [`brute_force_hn`].
pub const MAX_ORACLE_PIXELS: usize = 16;

/// Cheeger constant of a disc of radius `r`: the disc itself, `2/r`.
pub fn analytic_disc(r: f64) -> f64 {
    2.0 / r
}

/// Cheeger constant of a square and the corner radius of its Cheeger set
/// (the square with corners rounded by quarter circles of radius `1/h₁`).
pub fn analytic_square(side: f64) -> (f64, f64) {
    let pi = std::f64::consts::PI;
    let h1 = (4.0 - pi) / (2.0 - pi.sqrt());
    (h1 / side, side / h1)
}

/// Exhaustive optimum of `Σ Per(Eᵢ)/|Eᵢ|` over disjoint nonempty pixel sets.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub value: f64,
    pub masks: Vec<Vec<bool>>,
}

pub fn brute_force_hn(dom: &GridDomain, n: usize) -> Result<OracleResult> {
    let pixels: Vec<usize> = (0..dom.len()).filter(|&k| dom.inside(k)).collect();
    let m = pixels.len();
    if m > MAX_ORACLE_PIXELS {
        return Err(Error::OracleLimit(m));
    }
    if !(1..=2).contains(&n) {
        return Err(Error::InvalidParameter(format!("oracle supports N = 1 or 2, got {n}")));
    }
    if m < n {
        return Err(Error::DomainTooSmall(n));
    }
    let full = (1u32 << m) - 1;
    let to_mask = |s: u32| {
        let mut set = vec![false; dom.len()];
        for (b, &k) in pixels.iter().enumerate() {
            if s >> b & 1 == 1 {
                set[k] = true;
            }
        }
        set
    };
    let ratios: Vec<f64> = (0..=full)
        .into_par_iter()
        .map(|s| if s == 0 { f64::INFINITY } else { measure_set(dom, &to_mask(s)).map(|x| x.ratio()).unwrap() })
        .collect();

    // Minimum with ties broken by the smallest (first, second) subset code,
    // so the result does not depend on evaluation order.
    let better = |a: (f64, u32, u32), b: (f64, u32, u32)| if (b.0, b.1, b.2) < (a.0, a.1, a.2) { b } else { a };
    let best = if n == 1 {
        (1..=full).map(|s| (ratios[s as usize], s, 0)).fold((f64::INFINITY, 0, 0), better)
    } else {
        (1..=full)
            .into_par_iter()
            .map(|a| {
                let rest = full & !a;
                let mut acc = (f64::INFINITY, 0, 0);
                let mut b = rest;
                while b > 0 {
                    if b > a {
                        acc = better(acc, (ratios[a as usize] + ratios[b as usize], a, b));
                    }
                    b = (b - 1) & rest;
                }
                acc
            })
            .reduce(|| (f64::INFINITY, 0, 0), better)
    };
    let masks = if n == 1 { vec![to_mask(best.1)] } else { vec![to_mask(best.1), to_mask(best.2)] };
    Ok(OracleResult { value: best.0, masks })
}

/// Regression record of a brute-force optimum. `mask` and `masks` are rows
/// of `'1'`/`'0'`, top row first. `value` and `masks` may be omitted from a
/// file that has not been computed yet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleFixture {
    pub mask: Vec<String>,
    pub h: f64,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(default)]
    pub value: f64,
    #[serde(default)]
    pub masks: Vec<Vec<String>>,
}

impl OracleFixture {
    pub fn domain(&self) -> Result<GridDomain> {
        GridDomain::from_rows(&self.mask, self.h)
    }

    /// Runs the oracle on `mask` and records the result.
    pub fn compute(mask: Vec<String>, h: f64, n: usize) -> Result<Self> {
        let mut fx = Self { mask, h, n, value: 0.0, masks: Vec::new() };
        let dom = fx.domain()?;
        let res = brute_force_hn(&dom, n)?;
        fx.value = res.value;
        fx.masks = res.masks.iter().map(|m| fx.rows_of(&dom, m)).collect();
        Ok(fx)
    }

    fn rows_of(&self, dom: &GridDomain, set: &[bool]) -> Vec<String> {
        let height = self.mask.len();
        let width = self.mask[0].chars().count();
        (0..height)
            .map(|r| {
                let j = PAD + height - 1 - r;
                (0..width).map(|c| if set[dom.index(PAD + c, j)] { '1' } else { '0' }).collect()
            })
            .collect()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        serde_json::from_str(&text).map_err(|source| Error::Json { path: path.to_path_buf(), source })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("fixture serializes") + "\n";
        std::fs::write(path, text).map_err(|source| Error::Io { path: path.to_path_buf(), source })
    }

    /// Recomputes the optimum and compares it bit for bit.
    pub fn reproduces(&self) -> Result<bool> {
        let again = Self::compute(self.mask.clone(), self.h, self.n)?;
        Ok(again.value.to_bits() == self.value.to_bits() && again.masks == self.masks)
    }
}

/// Corner radius of a set inscribed in the bounding box of its domain: the
/// distance `d` from each box corner to the set's boundary (nearest pixel
/// center minus half a pixel) gives `r = d / (√2 − 1)`; the four corners are
/// averaged.
pub fn corner_radius(dom: &GridDomain, set: &[bool]) -> Result<f64> {
    let h = dom.h();
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut members = Vec::new();
    for j in 0..dom.ny() {
        for i in 0..dom.nx() {
            let k = dom.index(i, j);
            let (x, y) = dom.center(i, j);
            if dom.inside(k) {
                x0 = x0.min(x - 0.5 * h);
                y0 = y0.min(y - 0.5 * h);
                x1 = x1.max(x + 0.5 * h);
                y1 = y1.max(y + 0.5 * h);
            }
            if set[k] {
                members.push((x, y));
            }
        }
    }
    if members.is_empty() {
        return Err(Error::EmptySet);
    }
    let corners = [(x0, y0), (x1, y0), (x0, y1), (x1, y1)];
    let total: f64 = corners
        .iter()
        .map(|&(cx, cy)| {
            let d = members.iter().map(|&(x, y)| ((x - cx).powi(2) + (y - cy).powi(2)).sqrt()).fold(f64::INFINITY, f64::min);
            (d - 0.5 * h) / (2f64.sqrt() - 1.0)
        })
        .sum();
    Ok(total / 4.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extract::measure_set;
    use crate::grid::{make_square, ScalarField};

    #[test]
    fn disc_constants() {
        assert_eq!(analytic_disc(1.0), 2.0);
        assert_eq!(analytic_disc(2.0), 1.0);
        assert!((analytic_disc(3.0 * 0.7) - analytic_disc(0.7) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn square_constants() {
        let (h1, r) = analytic_square(1.0);
        assert!((h1 - 3.7724).abs() < 1e-4, "{h1}");
        assert!((r - 0.2651).abs() < 1e-4, "{r}");
        // stationarity: (4 − π) r² − 4 r + 1 = 0, Per/Area = 1/r
        let pi = std::f64::consts::PI;
        assert!(((4.0 - pi) * r * r - 4.0 * r + 1.0).abs() < 1e-14);
        let per = 4.0 - (8.0 - 2.0 * pi) * r;
        let area = 1.0 - (4.0 - pi) * r * r;
        assert!((per / area - h1).abs() < 1e-12);
        let (h2, r2) = analytic_square(2.0);
        assert!((h2 - h1 / 2.0).abs() < 1e-15 && (r2 - 2.0 * r).abs() < 1e-15);
        assert!((h2 - 1.8862).abs() < 1e-4);
    }

    #[test]
    fn rasterized_rounded_square_matches_h1() {
        let h = 1.0 / 512.0;
        let (h1, r) = analytic_square(1.0);
        let dom = make_square(1.0, h).unwrap().shared();
        let inside = |x: f64, y: f64| {
            let cx = x.clamp(r, 1.0 - r);
            let cy = y.clamp(r, 1.0 - r);
            (x - cx).powi(2) + (y - cy).powi(2) <= r * r
        };
        let f = ScalarField::from_fn(&dom, |x, y| if inside(x, y) { 1.0 } else { 0.0 });
        let m = measure_set(&dom, &f.superlevel(0.5)).unwrap();
        assert!((m.ratio() - h1).abs() / h1 < 0.01, "{}", m.ratio());
        let rc = corner_radius(&dom, &f.superlevel(0.5)).unwrap();
        assert!((rc - r).abs() / r < 0.02, "{rc}");
    }

    #[test]
    fn two_by_two_block() {
        let d = GridDomain::from_rows(&["11", "11"], 1.0).unwrap();
        let res = brute_force_hn(&d, 1).unwrap();
        assert_eq!(res.value, 2.0);
        assert_eq!(res.masks[0], d.mask());
    }

    #[test]
    fn pair_value_dominates_single() {
        let d = GridDomain::from_rows(&["111", "110"], 1.0).unwrap();
        let one = brute_force_hn(&d, 1).unwrap();
        let two = brute_force_hn(&d, 2).unwrap();
        assert!(two.value >= one.value);
        assert!(two.masks[0].iter().zip(&two.masks[1]).all(|(&a, &b)| !(a && b)));
    }

    #[test]
    fn oracle_limits() {
        let rows = vec!["11111".to_string(); 4];
        let d = GridDomain::from_rows(&rows, 1.0).unwrap();
        assert!(matches!(brute_force_hn(&d, 1), Err(Error::OracleLimit(20))));
        let d = GridDomain::from_rows(&["11"], 1.0).unwrap();
        assert!(brute_force_hn(&d, 3).is_err());
    }

    #[test]
    fn fixture_round_trip() {
        let fx = OracleFixture::compute(vec!["1111".into()], 1.0, 2).unwrap();
        let text = serde_json::to_string(&fx).unwrap();
        let back: OracleFixture = serde_json::from_str(&text).unwrap();
        assert_eq!(back, fx);
        assert!(back.reproduces().unwrap());
        // A value whose shortest decimal form needs exact parsing.
        let fx = OracleFixture::compute(vec!["010".into(), "111".into(), "010".into()], 1.0, 1).unwrap();
        let back: OracleFixture = serde_json::from_str(&serde_json::to_string(&fx).unwrap()).unwrap();
        assert_eq!(back.value.to_bits(), fx.value.to_bits());
    }
}
