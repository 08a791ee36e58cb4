//! Level-set extraction of clusters from minimizers, ratio diagnostics and
//! the eigenvalue bounds built on them.

mod measure;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use measure::{boundary_loops, measure_set, BoundaryLoop, SetMeasure};

use crate::error::{Error, Result};
use crate::grid::{GridDomain, MultiField, ScalarField};

/// Threshold grid used by [`ThresholdStrategy::BestRatio`] and for the
/// per-chamber profile diagnostics.
pub const PROFILE_THRESHOLDS: usize = 64;

/// Default relative ratio gap under which [`eigen_bounds`] grants the
/// equal-ratio certificate. The certificate is numerical, not rigorous.
pub const CERTIFICATE_TOL: f64 = 0.05;

/// Ratios `Per({f > t}) / |{f > t}|` at midpoint thresholds of `(0, max f)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioProfile {
    /// `(t, ratio)` pairs, empty level sets skipped.
    pub samples: Vec<(f64, f64)>,
    /// Mean ratio over `t ∈ [0.1, 0.9]·max f`.
    pub mean: f64,
    /// Coefficient of variation over the same range.
    pub cv: f64,
}

pub fn ratio_profile(f: &ScalarField, n_thresholds: usize) -> Result<RatioProfile> {
    if n_thresholds == 0 {
        return Err(Error::InvalidParameter("need at least one threshold".into()));
    }
    let top = f.max();
    if f.is_zero() || top <= 0.0 {
        return Err(Error::ZeroField);
    }
    let dom = f.domain();
    let dt = top / n_thresholds as f64;
    let mut samples = Vec::with_capacity(n_thresholds);
    for k in 0..n_thresholds {
        let t = (k as f64 + 0.5) * dt;
        match measure_set(dom, &f.superlevel(t)) {
            Ok(m) => samples.push((t, m.ratio())),
            Err(Error::EmptySet) => {}
            Err(e) => return Err(e),
        }
    }
    let window: Vec<f64> =
        samples.iter().filter(|(t, _)| *t >= 0.1 * top && *t <= 0.9 * top).map(|&(_, r)| r).collect();
    if window.is_empty() {
        return Err(Error::EmptyLevelRange("no threshold inside [0.1, 0.9]·max".into()));
    }
    let mean = window.iter().sum::<f64>() / window.len() as f64;
    let var = window.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / window.len() as f64;
    Ok(RatioProfile { samples, mean, cv: var.sqrt() / mean })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdStrategy {
    /// Ratio-minimizing midpoint threshold on a 64-point grid.
    BestRatio,
    /// `t = max uⁱ / 2`.
    MedianT,
    /// One threshold per component.
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chamber {
    pub mask: Vec<bool>,
    pub perimeter: f64,
    pub volume: f64,
    pub ratio: f64,
    pub threshold: f64,
    /// Mean and CV of the component's ratio profile.
    pub profile_mean: f64,
    pub profile_cv: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResult {
    pub domain: Arc<GridDomain>,
    pub chambers: Vec<Chamber>,
    pub total_ratio_sum: f64,
}

impl ClusterResult {
    pub fn n(&self) -> usize {
        self.chambers.len()
    }

    pub fn ratios(&self) -> Vec<f64> {
        self.chambers.iter().map(|c| c.ratio).collect()
    }

    pub fn thresholds(&self) -> Vec<f64> {
        self.chambers.iter().map(|c| c.threshold).collect()
    }
}

/// Chambers `Eᵢ = {uⁱ > tᵢ}`.
pub fn extract_cluster(u: &MultiField, strategy: &ThresholdStrategy) -> Result<ClusterResult> {
    if let ThresholdStrategy::Fixed(ts) = strategy {
        if ts.len() != u.n() {
            return Err(Error::InvalidParameter(format!("{} thresholds for {} components", ts.len(), u.n())));
        }
    }
    let dom = u.domain();
    let mut chambers = Vec::with_capacity(u.n());
    for (i, c) in u.components().iter().enumerate() {
        let top = c.max();
        if top <= 0.0 {
            return Err(Error::DegenerateComponent(i));
        }
        let profile = ratio_profile(c, PROFILE_THRESHOLDS).ok();
        let t = match strategy {
            ThresholdStrategy::BestRatio => {
                let samples = profile.as_ref().map(|p| p.samples.as_slice()).unwrap_or(&[]);
                let best = samples.iter().fold(None::<(f64, f64)>, |acc, &(t, r)| match acc {
                    Some((_, br)) if br <= r => acc,
                    _ => Some((t, r)),
                });
                best.ok_or(Error::DegenerateComponent(i))?.0
            }
            ThresholdStrategy::MedianT => 0.5 * top,
            ThresholdStrategy::Fixed(ts) => ts[i],
        };
        let mask = c.superlevel(t);
        let m = match measure_set(dom, &mask) {
            Err(Error::EmptySet) => return Err(Error::DegenerateComponent(i)),
            other => other?,
        };
        chambers.push(Chamber {
            mask,
            perimeter: m.perimeter,
            volume: m.volume,
            ratio: m.ratio(),
            threshold: t,
            profile_mean: profile.as_ref().map_or(f64::NAN, |p| p.mean),
            profile_cv: profile.as_ref().map_or(f64::NAN, |p| p.cv),
        });
    }
    for a in 0..chambers.len() {
        for b in a + 1..chambers.len() {
            if chambers[a].mask.iter().zip(&chambers[b].mask).any(|(&x, &y)| x && y) {
                return Err(Error::OverlappingSupports);
            }
        }
    }
    let total_ratio_sum = chambers.iter().map(|c| c.ratio).sum();
    Ok(ClusterResult { domain: Arc::clone(dom), chambers, total_ratio_sum })
}

/// `(𝟙_{E₁}/|E₁|, …, 𝟙_{E_N}/|E_N|)`.
pub fn indicator_lift(c: &ClusterResult) -> MultiField {
    let comps = c
        .chambers
        .iter()
        .map(|ch| ScalarField::indicator(&c.domain, &ch.mask).scaled(1.0 / ch.volume))
        .collect();
    MultiField::new(comps).expect("chambers share one domain")
}

/// `max(ratio₁, ratio₂)`, an upper bound on h₂.
pub fn eval_h2(c: &ClusterResult) -> Result<f64> {
    if c.n() != 2 {
        return Err(Error::InvalidParameter(format!("h2 needs N = 2, got {}", c.n())));
    }
    Ok(c.chambers[0].ratio.max(c.chambers[1].ratio))
}

/// Bounds on the second variational eigenvalue of the 1-Laplacian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenBounds {
    /// `M₂ / 2`.
    pub lower: f64,
    /// Numerical equal-ratio certificate.
    pub certificate: bool,
    /// `H₂ / 2` when the certificate fires.
    pub certified_value: Option<f64>,
    /// `max(ratio₁, ratio₂)`.
    pub h2_upper: f64,
    /// `true` when the ratios differ: `M₂/2` is then only a strict lower
    /// bound.
    pub strict_gap: bool,
}

pub fn eigen_bounds(m2_value: f64, c: &ClusterResult, tol: f64) -> Result<EigenBounds> {
    let h2_upper = eval_h2(c)?;
    if !(tol >= 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be nonnegative, got {tol}")));
    }
    let (r1, r2) = (c.chambers[0].ratio, c.chambers[1].ratio);
    let certificate = (r1 - r2).abs() <= tol * h2_upper;
    Ok(EigenBounds {
        lower: 0.5 * m2_value,
        certificate,
        certified_value: certificate.then(|| 0.5 * c.total_ratio_sum),
        h2_upper,
        strict_gap: !certificate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_square, GridDomain};
    use crate::tvops::energy_star;

    fn rect_sets(d: &GridDomain) -> (Vec<bool>, Vec<bool>) {
        // left block columns [2, 6), right block columns [8, 10)
        let mut a = vec![false; d.len()];
        let mut b = vec![false; d.len()];
        for j in 0..d.ny() {
            for i in 0..d.nx() {
                let k = d.index(i, j);
                if d.mask()[k] {
                    if i < 6 {
                        a[k] = true;
                    } else if i >= 8 {
                        b[k] = true;
                    }
                }
            }
        }
        (a, b)
    }

    fn two_rects() -> (Arc<GridDomain>, MultiField) {
        let d = Arc::new(GridDomain::from_rows(&["11110011", "11110011", "11110011"], 0.25).unwrap());
        let (a, b) = rect_sets(&d);
        let u = crate::skeleton::normalize_l1(
            &MultiField::new(vec![ScalarField::indicator(&d, &a), ScalarField::indicator(&d, &b)]).unwrap(),
        )
        .unwrap();
        (d, u)
    }

    #[test]
    fn scaled_indicator_has_flat_profile() {
        let (_, u) = two_rects();
        let p = ratio_profile(u.component(0), 40).unwrap();
        let want = (2.0 * 0.25 * 7.0) / (0.0625 * 12.0);
        assert_eq!(p.samples.len(), 40);
        for &(_, r) in &p.samples {
            assert!((r - want).abs() < 1e-12);
        }
        assert!(p.cv < 1e-12);
    }

    #[test]
    fn ramp_profile_is_not_flat() {
        let d = make_square(1.0, 1.0 / 64.0).unwrap().shared();
        let ramp = ScalarField::from_fn(&d, |x, _| x.clamp(0.0, 1.0));
        let p = ratio_profile(&ramp, 64).unwrap();
        assert!(p.cv > 0.2, "{}", p.cv);
    }

    #[test]
    fn zero_field_profile_is_an_error() {
        let (d, _) = two_rects();
        assert!(matches!(ratio_profile(&ScalarField::zeros(&d), 10), Err(Error::ZeroField)));
    }

    #[test]
    fn extracts_rectangles_and_lifts_back() {
        let (d, u) = two_rects();
        let (a, b) = rect_sets(&d);
        for strategy in [
            ThresholdStrategy::BestRatio,
            ThresholdStrategy::MedianT,
            ThresholdStrategy::Fixed(vec![0.01, 0.5]),
        ] {
            let c = extract_cluster(&u, &strategy).unwrap();
            assert_eq!(c.chambers[0].mask, a);
            assert_eq!(c.chambers[1].mask, b);
            let sum: f64 = c.ratios().iter().sum();
            assert!((c.total_ratio_sum - sum).abs() <= 1e-12 * sum);
            let lifted = indicator_lift(&c);
            // TV of a pixel rectangle is short by (2 − √2)h at one corner.
            let corner: f64 = c.chambers.iter().map(|ch| (2.0 - 2f64.sqrt()) * 0.25 / ch.volume).sum();
            assert!((energy_star(&lifted) + corner - c.total_ratio_sum).abs() < 1e-12);
            let again = extract_cluster(&lifted, &ThresholdStrategy::BestRatio).unwrap();
            assert_eq!(again.chambers[0].mask, a);
            assert_eq!(again.chambers[1].mask, b);
        }
    }

    #[test]
    fn threshold_above_support_is_degenerate() {
        let (_, u) = two_rects();
        let r = extract_cluster(&u, &ThresholdStrategy::Fixed(vec![0.1, 100.0]));
        assert!(matches!(r, Err(Error::DegenerateComponent(1))));
    }

    fn cluster_with_ratios(r1: f64, r2: f64) -> ClusterResult {
        let (_, u) = two_rects();
        let mut c = extract_cluster(&u, &ThresholdStrategy::MedianT).unwrap();
        c.chambers[0].ratio = r1;
        c.chambers[1].ratio = r2;
        c.total_ratio_sum = r1 + r2;
        c
    }

    #[test]
    fn h2_and_bounds() {
        assert_eq!(eval_h2(&cluster_with_ratios(4.0, 6.0)).unwrap(), 6.0);
        let eq = cluster_with_ratios(5.0, 5.0);
        assert_eq!(eval_h2(&eq).unwrap(), eq.total_ratio_sum / 2.0);
        let b = eigen_bounds(9.0, &eq, 0.0).unwrap();
        assert!(b.certificate && !b.strict_gap);
        assert_eq!(b.lower, 4.5);
        assert_eq!(b.certified_value, Some(5.0));
        let neq = cluster_with_ratios(4.0, 6.0);
        let b = eigen_bounds(9.0, &neq, 0.05).unwrap();
        assert!(!b.certificate && b.strict_gap && b.certified_value.is_none());
        assert!(eval_h2(&neq).unwrap() > neq.total_ratio_sum / 2.0);
    }
}
