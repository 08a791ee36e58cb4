//! The `report.json` record of one solve.

use serde::{Deserialize, Serialize};

use cheeger_core::{ClusterResult, EigenBounds, GridDomain, SolverConfig, SolverReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainInfo {
    /// The `--domain` argument as given.
    pub source: String,
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
    pub pixels: usize,
    pub area: f64,
}

impl DomainInfo {
    pub fn new(source: &str, dom: &GridDomain) -> Self {
        Self {
            source: source.to_string(),
            h: dom.h(),
            nx: dom.nx(),
            ny: dom.ny(),
            pixels: dom.pixel_count(),
            area: dom.area(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChamberInfo {
    pub perimeter: f64,
    pub volume: f64,
    pub ratio: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub domain: DomainInfo,
    pub n: usize,
    pub signed: bool,
    /// Minimized energy: `Λ_N`, or `M₂` for signed runs.
    pub energy: f64,
    pub lambda_n_estimate: f64,
    /// Sum of the chamber ratios.
    pub h_n_estimate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m2_estimate: Option<f64>,
    pub chambers: Vec<ChamberInfo>,
    /// Present for two chambers. The certificate is numerical, not rigorous.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eigen_bounds: Option<EigenBounds>,
    pub config: SolverConfig,
    pub solver: SolverReport,
}

impl Report {
    pub fn new(
        domain: DomainInfo,
        signed: bool,
        cluster: &ClusterResult,
        eigen_bounds: Option<EigenBounds>,
        config: SolverConfig,
        solver: SolverReport,
    ) -> Self {
        let chambers = cluster
            .chambers
            .iter()
            .map(|c| ChamberInfo { perimeter: c.perimeter, volume: c.volume, ratio: c.ratio, threshold: c.threshold })
            .collect();
        Self {
            domain,
            n: cluster.n(),
            signed,
            energy: solver.energy,
            lambda_n_estimate: solver.energy,
            h_n_estimate: cluster.total_ratio_sum,
            m2_estimate: signed.then_some(solver.energy),
            chambers,
            eigen_bounds,
            config,
            solver,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use cheeger_core::{eigen_bounds, extract_cluster, make_rectangle, solve_lambda_n, ThresholdStrategy};

    #[test]
    fn round_trips_byte_for_byte() {
        let dom = make_rectangle(2.0, 1.0, 1.0 / 8.0).unwrap().shared();
        let mut cfg = SolverConfig::for_domain(&dom);
        cfg.restarts = 1;
        cfg.max_iter = 300;
        let (u, solver) = solve_lambda_n(&dom, 2, &cfg).unwrap();
        let cluster = extract_cluster(&u, &ThresholdStrategy::BestRatio).unwrap();
        let bounds = eigen_bounds(solver.energy, &cluster, 0.05).unwrap();
        let report = Report::new(DomainInfo::new("rect", &dom), false, &cluster, Some(bounds), cfg, solver);
        let text = report.to_json();
        let back: Report = serde_json::from_str(&text).unwrap();
        assert_eq!(back, report);
        assert_eq!(back.to_json(), text);
        assert!(!text.contains("m2_estimate"));
    }
}
