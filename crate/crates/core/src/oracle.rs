//! Brute-force checks of the closed forms by direct numerical integration.
//!
//! The only thing shared with the closed-form path is
//! [`oscillator_fns`](crate::specfun::oscillator_fns), used to build the
//! joint density on the quadrature nodes. Everything else (Gauss-Legendre
//! nodes, raw Hermite polynomials, quadrant sums) lives here and does not
//! touch the coupling table or the Gamma-function identities.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{joint_probabilities, CouplingTable, EngineError, JointProbabilities};
use crate::specfun::{half_range_overlap, oscillator_fns};
use crate::states::CorrelatedState;

/// Tolerance on the closed-form vs quadrature probabilities.
pub const PROBABILITY_TOLERANCE: f64 = 1e-8;
/// Tolerance on the total integrated density.
pub const MASS_TOLERANCE: f64 = 1e-6;
/// Relative tolerance on the half-range overlap integrals.
pub const OVERLAP_TOLERANCE: f64 = 1e-9;
/// Highest order used in the overlap and coupling-table checks.
pub const OVERLAP_MAX_ORDER: u32 = 15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error(
        "integrated density is {total}, off by more than {MASS_TOLERANCE}; increase resolution"
    )]
    ResolutionWarning {
        total: f64,
        probabilities: JointProbabilities,
    },
    #[error("invalid quadrature spec: {0}")]
    InvalidSpec(String),
}

/// Panel rule used along each axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "order")]
pub enum PanelRule {
    GaussLegendre(usize),
}

/// Tensor-product quadrature on `[-L, L]^2` split at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub half_width: f64,
    pub points_per_axis: usize,
    pub rule: PanelRule,
}

impl QuadratureSpec {
    /// `L = 8 + sqrt(2N)` with 400 points per axis and 8-point Gauss-Legendre panels.
    pub fn for_truncation(truncation: usize) -> Self {
        Self::with_points(truncation, 400)
    }

    pub fn with_points(truncation: usize, points_per_axis: usize) -> Self {
        Self {
            half_width: 8.0 + (2.0 * truncation as f64).sqrt(),
            points_per_axis,
            rule: PanelRule::GaussLegendre(8),
        }
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        if !(self.half_width > 0.0) || !self.half_width.is_finite() {
            return Err(OracleError::InvalidSpec(
                "half_width must be positive".into(),
            ));
        }
        if self.points_per_axis < 32 {
            return Err(OracleError::InvalidSpec(
                "points_per_axis must be >= 32".into(),
            ));
        }
        let PanelRule::GaussLegendre(order) = self.rule;
        if !(2..=64).contains(&order) {
            return Err(OracleError::InvalidSpec(
                "panel order must be in 2..=64".into(),
            ));
        }
        Ok(())
    }

    /// Nodes and weights on `[0, L]`; the negative half mirrors them.
    fn half_axis(&self) -> (Vec<f64>, Vec<f64>) {
        let PanelRule::GaussLegendre(order) = self.rule;
        let panels = (self.points_per_axis / (2 * order)).max(1);
        let (gx, gw) = gauss_legendre(order);
        let h = self.half_width / panels as f64;
        let mut nodes = Vec::with_capacity(panels * order);
        let mut weights = Vec::with_capacity(panels * order);
        for p in 0..panels {
            let mid = (p as f64 + 0.5) * h;
            for (x, w) in gx.iter().zip(&gw) {
                nodes.push(mid + 0.5 * h * x);
                weights.push(0.5 * h * w);
            }
        }
        (nodes, weights)
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` (Newton on `P_n`).
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let n = order;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Quadrant integrals of the joint density together with its total mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadrantIntegrals {
    pub probabilities: JointProbabilities,
    pub total: f64,
}

/// Integrates the joint density over the four sign quadrants.
pub fn quad_quadrants(
    state: &CorrelatedState,
    psi: f64,
    spec: &QuadratureSpec,
) -> Result<QuadrantIntegrals, OracleError> {
    spec.validate()?;
    let (nodes, weights) = spec.half_axis();
    let order = state.truncation() as u32;
    // u[i][n]: oscillator functions at +x_i; at -x_i they pick up (-1)^n
    let u: Vec<Vec<f64>> = nodes.iter().map(|&x| oscillator_fns(order, x)).collect();
    let c = state.coefficients();
    let phases: Vec<(f64, f64)> = (0..c.len())
        .map(|n| {
            let a = n as f64 * psi;
            (a.cos(), -a.sin())
        })
        .collect();

    // same-sign quadrants: both factors get (-1)^n so the products agree;
    // opposite-sign quadrants get (-1)^n once
    // rows are summed in index order so the result does not depend on threading
    let rows: Vec<(f64, f64)> = (0..nodes.len())
        .into_par_iter()
        .map(|i| {
            let mut same = 0.0;
            let mut opposite = 0.0;
            for j in 0..nodes.len() {
                let (mut re_s, mut im_s, mut re_o, mut im_o) = (0.0, 0.0, 0.0, 0.0);
                for n in 0..c.len() {
                    let w = c[n] * u[i][n] * u[j][n];
                    let (cr, ci) = phases[n];
                    re_s += w * cr;
                    im_s += w * ci;
                    let w_o = if n % 2 == 0 { w } else { -w };
                    re_o += w_o * cr;
                    im_o += w_o * ci;
                }
                let wij = weights[i] * weights[j];
                same += wij * (re_s * re_s + im_s * im_s);
                opposite += wij * (re_o * re_o + im_o * im_o);
            }
            (same, opposite)
        })
        .collect();
    let (same, opposite) = rows
        .iter()
        .fold((0.0, 0.0), |acc, r| (acc.0 + r.0, acc.1 + r.1));

    let probabilities = JointProbabilities {
        p11: same,
        p00: same,
        p10: opposite,
        p01: opposite,
    };
    Ok(QuadrantIntegrals {
        probabilities,
        total: probabilities.total(),
    })
}

/// Quadrature estimate of the binned probabilities; errors if the density
/// does not integrate to one within [`MASS_TOLERANCE`].
pub fn quad_joint_probabilities(
    state: &CorrelatedState,
    psi: f64,
    spec: &QuadratureSpec,
) -> Result<JointProbabilities, OracleError> {
    let q = quad_quadrants(state, psi, spec)?;
    if (q.total - 1.0).abs() > MASS_TOLERANCE {
        return Err(OracleError::ResolutionWarning {
            total: q.total,
            probabilities: q.probabilities,
        });
    }
    Ok(q.probabilities)
}

fn hermite_raw(n: u32, x: f64) -> f64 {
    let (mut a, mut b) = (1.0, 2.0 * x);
    if n == 0 {
        return a;
    }
    for k in 1..n {
        let c = 2.0 * x * b - 2.0 * k as f64 * a;
        a = b;
        b = c;
    }
    b
}

/// `int_0^L exp(-x^2) H_n(x) H_m(x) dx` with raw Hermite polynomials.
pub fn quad_half_range_overlap(n: u32, m: u32, spec: &QuadratureSpec) -> f64 {
    let (nodes, weights) = spec.half_axis();
    nodes
        .iter()
        .zip(&weights)
        .map(|(&x, &w)| w * (-x * x).exp() * hermite_raw(n, x) * hermite_raw(m, x))
        .sum()
}

/// Full-line norm `2^n n! sqrt(pi)` computed by direct product.
fn full_line_norm(n: u32) -> f64 {
    (1..=n).fold(PI.sqrt(), |acc, k| acc * 2.0 * k as f64)
}

/// Deviation of a quadrature overlap from the closed form: relative where the
/// closed form is nonzero, otherwise relative to `sqrt(norm_n norm_m)`.
pub fn overlap_deviation(n: u32, m: u32, spec: &QuadratureSpec) -> f64 {
    let q = quad_half_range_overlap(n, m, spec);
    let f = half_range_overlap(n, m);
    let scale = if f != 0.0 {
        f.abs()
    } else {
        (full_line_norm(n) * full_line_norm(m)).sqrt()
    };
    (q - f).abs() / scale
}

/// `2 (int_0^inf u_n u_m dx)^2`: the coupling weight from normalized
/// half-range overlaps.
pub fn quad_coupling(n: u32, m: u32, spec: &QuadratureSpec) -> f64 {
    let overlap =
        quad_half_range_overlap(n, m, spec) / (full_line_norm(n) * full_line_norm(m)).sqrt();
    2.0 * overlap * overlap
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// Where the largest deviation occurred.
    pub worst_case: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub passed: bool,
    pub truncation: usize,
    pub spec: QuadratureSpec,
    pub checks: Vec<CheckResult>,
}

impl VerificationReport {
    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

#[derive(Default)]
struct Worst {
    deviation: f64,
    at: String,
}

impl Worst {
    fn update(&mut self, deviation: f64, at: impl FnOnce() -> String) {
        // NaN counts as the worst possible deviation
        let worse = (deviation.is_nan() && !self.deviation.is_nan())
            || deviation > self.deviation
            || self.at.is_empty();
        if worse {
            self.deviation = deviation;
            self.at = at();
        }
    }

    fn into_check(self, name: &str, tolerance: f64) -> CheckResult {
        CheckResult {
            name: name.to_string(),
            passed: self.deviation <= tolerance,
            max_deviation: self.deviation,
            tolerance,
            worst_case: self.at,
        }
    }
}

/// States used by the default verification run.
pub fn default_states(truncation: usize) -> Vec<(String, CorrelatedState)> {
    vec![
        ("vacuum".into(), CorrelatedState::vacuum(truncation)),
        (
            "two_pair(1/sqrt2)".into(),
            CorrelatedState::two_pair(0.5f64.sqrt()).expect("valid c0"),
        ),
        (
            "circle(1.12)".into(),
            CorrelatedState::circle(1.12, truncation).expect("valid radius"),
        ),
        (
            "squeezed(0.5)".into(),
            CorrelatedState::squeezed(0.5, truncation).expect("valid squeezing"),
        ),
    ]
}

pub fn default_psi_grid() -> Vec<f64> {
    vec![0.0, PI / 8.0, PI / 4.0, PI / 2.0]
}

/// Runs every closed-form-versus-quadrature comparison.
///
/// Engine failures (e.g. a corrupted table pushing `P11` out of range) are
/// recorded as failed checks rather than aborting the run.
pub fn verify_all(
    table: &CouplingTable,
    psi_grid: &[f64],
    states: &[(String, CorrelatedState)],
    spec: &QuadratureSpec,
) -> Result<VerificationReport, OracleError> {
    spec.validate()?;
    let mut probs = Worst::default();
    let mut marginal = Worst::default();
    let mut mass = Worst::default();

    for (label, state) in states {
        for &psi in psi_grid {
            let q = quad_quadrants(state, psi, spec)?;
            let at = || format!("{label} at psi={psi:.6}");
            mass.update((q.total - 1.0).abs(), at);
            let qp = q.probabilities;
            marginal.update((qp.p11 + qp.p10 - 0.5).abs(), at);
            let dev = match joint_probabilities(state, table, psi) {
                Ok(cf) => [
                    (cf.p11 - qp.p11).abs(),
                    (cf.p00 - qp.p00).abs(),
                    (cf.p10 - qp.p10).abs(),
                    (cf.p01 - qp.p01).abs(),
                ]
                .into_iter()
                .fold(0.0, f64::max),
                Err(EngineError::ProbabilityOutOfRange { p11, .. }) => (p11 - qp.p11).abs(),
                Err(EngineError::TruncationMismatch { .. }) => f64::INFINITY,
            };
            probs.update(dev, at);
        }
    }

    let mut overlaps = Worst::default();
    for n in 0..=OVERLAP_MAX_ORDER {
        for m in 0..=n {
            overlaps.update(overlap_deviation(n, m, spec), || format!("n={n} m={m}"));
        }
    }

    let mut coupling = Worst::default();
    let table_order = (table.truncation() as u32).min(OVERLAP_MAX_ORDER);
    for n in 1..=table_order {
        for m in 0..n {
            let q = quad_coupling(n, m, spec);
            let g = table.get(n as usize, m as usize);
            // even gaps: the table holds exact zeros, quadrature leaves rounding noise
            let dev = if g == 0.0 && q < 1e-20 {
                0.0
            } else {
                (g - q).abs() / q.max(1e-300)
            };
            coupling.update(dev, || format!("G({n},{m})"));
        }
    }

    let checks = vec![
        probs.into_check("probabilities", PROBABILITY_TOLERANCE),
        marginal.into_check("marginal_p1", PROBABILITY_TOLERANCE),
        mass.into_check("density_normalization", MASS_TOLERANCE),
        overlaps.into_check("half_range_overlap", OVERLAP_TOLERANCE),
        coupling.into_check("coupling_table", OVERLAP_TOLERANCE),
    ];
    Ok(VerificationReport {
        passed: checks.iter().all(|c| c.passed),
        truncation: table.truncation(),
        spec: *spec,
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(8);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        // exact through degree 15
        let i14: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert!((i14 - 2.0 / 15.0).abs() < 1e-14);
        let odd: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(9)).sum();
        assert!(odd.abs() < 1e-15);
    }

    #[test]
    fn spec_validation() {
        let mut s = QuadratureSpec::for_truncation(10);
        assert!(s.validate().is_ok());
        s.points_per_axis = 16;
        assert!(s.validate().is_err());
        s.points_per_axis = 400;
        s.half_width = -1.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn vacuum_quadrants_are_quarters() {
        let spec = QuadratureSpec::for_truncation(10);
        let p = quad_joint_probabilities(&CorrelatedState::vacuum(10), 0.3, &spec).unwrap();
        for v in [p.p11, p.p00, p.p10, p.p01] {
            assert!((v - 0.25).abs() < 1e-10);
        }
    }

    #[test]
    fn two_pair_quadrature() {
        let spec = QuadratureSpec::for_truncation(1);
        let s = CorrelatedState::two_pair(0.5f64.sqrt()).unwrap();
        let p = quad_joint_probabilities(&s, 0.0, &spec).unwrap();
        assert!((p.p11 - (0.25 + 1.0 / (2.0 * PI))).abs() < 1e-10);
        assert!((p.p11 - 0.409_154_9).abs() < 1e-7);
    }

    #[test]
    fn coarse_grid_raises_resolution_warning() {
        let spec = QuadratureSpec {
            half_width: 1.0,
            points_per_axis: 32,
            rule: PanelRule::GaussLegendre(8),
        };
        let err = quad_joint_probabilities(&CorrelatedState::vacuum(2), 0.0, &spec).unwrap_err();
        assert!(matches!(err, OracleError::ResolutionWarning { .. }));
    }

    #[test]
    fn overlap_examples() {
        let spec = QuadratureSpec::with_points(20, 400);
        assert!((quad_half_range_overlap(1, 0, &spec) - 1.0).abs() < 1e-13);
        let f30 = PI * 8.0 / 3.0
            * (crate::specfun::f_coefficient(3, 0) - crate::specfun::f_coefficient(0, 3));
        let q30 = quad_half_range_overlap(3, 0, &spec);
        assert!(((q30 - f30) / f30).abs() < 1e-12);
        assert!(quad_half_range_overlap(4, 2, &spec).abs() < 1e-10);
    }

    #[test]
    fn overlaps_agree_up_to_order_20() {
        let spec = QuadratureSpec::with_points(20, 400);
        for n in 0..=20 {
            for m in 0..=n {
                let d = overlap_deviation(n, m, &spec);
                assert!(d <= OVERLAP_TOLERANCE, "n={n} m={m} deviation {d}");
            }
        }
    }

    #[test]
    fn probabilities_converge_with_resolution() {
        let s = CorrelatedState::circle(1.12, 10).unwrap();
        let a = quad_joint_probabilities(&s, 0.7, &QuadratureSpec::with_points(10, 400)).unwrap();
        let b = quad_joint_probabilities(&s, 0.7, &QuadratureSpec::with_points(10, 800)).unwrap();
        assert!((a.p11 - b.p11).abs() < 1e-9);
        assert!((a.p10 - b.p10).abs() < 1e-9);
    }

    #[test]
    fn default_verification_passes() {
        let table = CouplingTable::build(10);
        let report = verify_all(
            &table,
            &default_psi_grid(),
            &default_states(10),
            &QuadratureSpec::for_truncation(10),
        )
        .unwrap();
        assert!(report.passed, "{report:#?}");
    }

    #[test]
    fn corrupted_table_is_pinpointed() {
        let table = CouplingTable::build(10);
        let bad = table.with_entry(1, 0, table.get(1, 0) * 1.01);
        let report = verify_all(
            &bad,
            &default_psi_grid(),
            &default_states(10),
            &QuadratureSpec::for_truncation(10),
        )
        .unwrap();
        assert!(!report.passed);
        let coupling = report
            .checks
            .iter()
            .find(|c| c.name == "coupling_table")
            .unwrap();
        assert!(!coupling.passed);
        assert_eq!(coupling.worst_case, "G(1,0)");
        let probs = report
            .checks
            .iter()
            .find(|c| c.name == "probabilities")
            .unwrap();
        assert!(!probs.passed);
    }
}
