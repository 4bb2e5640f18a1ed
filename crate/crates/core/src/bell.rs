//! Clauser-Horne, spin and information-theoretic Bell functionals in their
//! factorized-angle form, plus the angle search and sweep helpers.
//!
//! With the settings chosen so that `psi = theta + phi = -theta' - phi' =
//! theta + phi'` and `3 psi = theta' + phi`, the three functionals reduce to
//!
//! ```text
//! B_ch   = (3 P11(psi) - P11(3 psi)) / (2 P1)        classical: |B_ch| <= 1
//! B_s    = |3 E(psi) - E(3 psi)|                      classical: B_s <= 2
//! B_info = 3 H(psi) - H(3 psi)                        classical: B_info >= 0
//! ```

use std::f64::consts::{PI, TAU};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{
    conditional_information, marginal_p1, CouplingTable, EngineError, Harmonics, LogBase,
};
use crate::states::CorrelatedState;

/// Number of coarse grid points on `[0, 2 pi)`; spacing is below 1e-3 rad.
pub const ANGLE_GRID_POINTS: usize = 6400;
/// Width of the bracket left after golden-section refinement.
pub const ANGLE_TOLERANCE: f64 = 1e-8;
/// Refined extrema closer than this in value are considered tied; the
/// smaller angle wins.
const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BellKind {
    ClauserHorne,
    Spin,
    InfoTheoretic,
}

impl BellKind {
    pub const ALL: [BellKind; 3] = [
        BellKind::ClauserHorne,
        BellKind::Spin,
        BellKind::InfoTheoretic,
    ];

    /// Local-realist bound on the functional.
    pub fn classical_bound(self) -> f64 {
        match self {
            BellKind::ClauserHorne => 1.0,
            BellKind::Spin => 2.0,
            BellKind::InfoTheoretic => 0.0,
        }
    }

    /// Signed distance past the classical bound; positive means violation.
    pub fn margin(self, value: f64) -> f64 {
        match self {
            BellKind::ClauserHorne => value.abs() - 1.0,
            BellKind::Spin => value - 2.0,
            BellKind::InfoTheoretic => -value,
        }
    }

    pub fn is_violated(self, value: f64) -> bool {
        self.margin(value) > 0.0
    }

    /// Violation as a percentage of the classical bound (CH and spin only).
    pub fn violation_percent(self, value: f64) -> Option<f64> {
        match self {
            BellKind::InfoTheoretic => None,
            _ => Some(100.0 * self.margin(value) / self.classical_bound()),
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            BellKind::ClauserHorne => "ch",
            BellKind::Spin => "spin",
            BellKind::InfoTheoretic => "info",
        }
    }

    /// Whether the search looks for a maximum (CH, spin) or a minimum (info).
    fn maximizes(self) -> bool {
        !matches!(self, BellKind::InfoTheoretic)
    }
}

impl std::fmt::Display for BellKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.short_name())
    }
}

impl std::str::FromStr for BellKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ch" | "clauser_horne" => Ok(BellKind::ClauserHorne),
            "spin" => Ok(BellKind::Spin),
            "info" | "info_theoretic" => Ok(BellKind::InfoTheoretic),
            other => Err(format!(
                "unknown Bell functional '{other}' (expected ch, spin or info)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BellResult {
    pub kind: BellKind,
    pub value: f64,
    pub psi: f64,
    pub violated: bool,
    pub margin: f64,
}

impl BellResult {
    pub fn new(kind: BellKind, value: f64, psi: f64) -> Self {
        Self {
            kind,
            value,
            psi,
            violated: kind.is_violated(value),
            margin: kind.margin(value),
        }
    }
}

/// Evaluates the functionals for one state; the coupling table is collapsed
/// once into a cosine series so each angle costs `O(N)`.
#[derive(Debug, Clone)]
pub struct BellEvaluator {
    harmonics: Harmonics,
    log_base: LogBase,
}

impl BellEvaluator {
    pub fn new(
        state: &CorrelatedState,
        table: &CouplingTable,
        log_base: LogBase,
    ) -> Result<Self, EngineError> {
        Ok(Self {
            harmonics: table.harmonics(state)?,
            log_base,
        })
    }

    pub fn b_ch(&self, psi: f64) -> Result<f64, EngineError> {
        let p = self.harmonics.joint_probabilities(psi)?.p11;
        let p3 = self.harmonics.joint_probabilities(3.0 * psi)?.p11;
        Ok((3.0 * p - p3) / (2.0 * marginal_p1()))
    }

    /// `3 E(psi) - E(3 psi)` before taking the absolute value.
    pub fn spin_signed(&self, psi: f64) -> Result<f64, EngineError> {
        let e = self.harmonics.joint_probabilities(psi)?.correlation();
        let e3 = self.harmonics.joint_probabilities(3.0 * psi)?.correlation();
        Ok(3.0 * e - e3)
    }

    pub fn b_spin(&self, psi: f64) -> Result<f64, EngineError> {
        Ok(self.spin_signed(psi)?.abs())
    }

    pub fn b_info(&self, psi: f64) -> Result<f64, EngineError> {
        let h = conditional_information(&self.harmonics.joint_probabilities(psi)?, self.log_base);
        let h3 = conditional_information(
            &self.harmonics.joint_probabilities(3.0 * psi)?,
            self.log_base,
        );
        Ok(3.0 * h - h3)
    }

    pub fn evaluate(&self, kind: BellKind, psi: f64) -> Result<f64, EngineError> {
        match kind {
            BellKind::ClauserHorne => self.b_ch(psi),
            BellKind::Spin => self.b_spin(psi),
            BellKind::InfoTheoretic => self.b_info(psi),
        }
    }

    /// Extremum over `psi in [0, 2 pi)`: maximum for CH and spin, minimum for
    /// the information functional.
    pub fn extremize(&self, kind: BellKind) -> Result<BellResult, EngineError> {
        let sign = if kind.maximizes() { 1.0 } else { -1.0 };
        let step = TAU / ANGLE_GRID_POINTS as f64;
        let score = |psi: f64| self.evaluate(kind, psi).map(|v| sign * v);

        let grid: Vec<f64> = (0..ANGLE_GRID_POINTS)
            .map(|i| score(i as f64 * step))
            .collect::<Result<_, _>>()?;

        // refine every local maximum of the periodic grid, then keep the best
        let mut best: Option<(f64, f64)> = None;
        for i in 0..ANGLE_GRID_POINTS {
            let left = grid[(i + ANGLE_GRID_POINTS - 1) % ANGLE_GRID_POINTS];
            let right = grid[(i + 1) % ANGLE_GRID_POINTS];
            if grid[i] < left || grid[i] < right {
                continue;
            }
            let center = i as f64 * step;
            let (psi, s) = golden_section_max(&score, center - step, center + step)?;
            let (psi, s) = if s > grid[i] {
                (psi, s)
            } else {
                (center, grid[i])
            };
            let psi = psi.rem_euclid(TAU);
            best = match best {
                None => Some((psi, s)),
                Some((bp, bs)) => {
                    if s > bs + TIE_TOLERANCE || ((s - bs).abs() <= TIE_TOLERANCE && psi < bp) {
                        Some((psi, s))
                    } else {
                        Some((bp, bs))
                    }
                }
            };
        }
        // a constant objective has every grid point as a local maximum, so
        // `best` is always set
        let (psi, s) = best.expect("grid has at least one local maximum");
        Ok(BellResult::new(kind, sign * s, psi))
    }

    pub fn sweep(&self, kind: BellKind, psi_grid: &[f64]) -> Result<Vec<(f64, f64)>, EngineError> {
        psi_grid
            .par_iter()
            .map(|&psi| self.evaluate(kind, psi).map(|v| (psi, v)))
            .collect()
    }
}

/// Maximizes a unimodal function on `[lo, hi]` by golden-section search.
fn golden_section_max<F>(f: &F, mut lo: f64, mut hi: f64) -> Result<(f64, f64), EngineError>
where
    F: Fn(f64) -> Result<f64, EngineError>,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - inv_phi * (hi - lo);
    let mut b = lo + inv_phi * (hi - lo);
    let mut fa = f(a)?;
    let mut fb = f(b)?;
    while hi - lo > ANGLE_TOLERANCE {
        if fa >= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - inv_phi * (hi - lo);
            fa = f(a)?;
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + inv_phi * (hi - lo);
            fb = f(b)?;
        }
    }
    let mid = 0.5 * (lo + hi);
    let fm = f(mid)?;
    Ok([(a, fa), (b, fb), (mid, fm)]
        .into_iter()
        .fold((mid, fm), |acc, p| if p.1 > acc.1 { p } else { acc }))
}

pub fn b_ch(state: &CorrelatedState, table: &CouplingTable, psi: f64) -> Result<f64, EngineError> {
    BellEvaluator::new(state, table, LogBase::Bits)?.b_ch(psi)
}

pub fn b_spin(
    state: &CorrelatedState,
    table: &CouplingTable,
    psi: f64,
) -> Result<f64, EngineError> {
    BellEvaluator::new(state, table, LogBase::Bits)?.b_spin(psi)
}

pub fn b_info(
    state: &CorrelatedState,
    table: &CouplingTable,
    psi: f64,
    log_base: LogBase,
) -> Result<f64, EngineError> {
    BellEvaluator::new(state, table, log_base)?.b_info(psi)
}

pub fn maximize_over_angle(
    state: &CorrelatedState,
    table: &CouplingTable,
    kind: BellKind,
    log_base: LogBase,
) -> Result<BellResult, EngineError> {
    BellEvaluator::new(state, table, log_base)?.extremize(kind)
}

pub fn psi_sweep(
    state: &CorrelatedState,
    table: &CouplingTable,
    kind: BellKind,
    psi_grid: &[f64],
    log_base: LogBase,
) -> Result<Vec<(f64, f64)>, EngineError> {
    BellEvaluator::new(state, table, log_base)?.sweep(kind, psi_grid)
}

/// Functional values on an `(r, psi)` grid for circle states, row-major in `r`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CircleGrid {
    pub kind: BellKind,
    pub r: Vec<f64>,
    pub psi: Vec<f64>,
    pub values: Vec<f64>,
}

impl CircleGrid {
    pub fn value(&self, r_index: usize, psi_index: usize) -> f64 {
        self.values[r_index * self.psi.len() + psi_index]
    }

    pub fn row(&self, r_index: usize) -> &[f64] {
        let w = self.psi.len();
        &self.values[r_index * w..(r_index + 1) * w]
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GridError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    State(#[from] crate::states::StateError),
}

/// Circle states use the table's truncation.
pub fn circle_grid(
    r_values: &[f64],
    psi_values: &[f64],
    table: &CouplingTable,
    kind: BellKind,
    log_base: LogBase,
) -> Result<CircleGrid, GridError> {
    let rows: Vec<Vec<f64>> = r_values
        .par_iter()
        .map(|&r| -> Result<Vec<f64>, GridError> {
            let state = CorrelatedState::circle(r, table.truncation())?;
            let eval = BellEvaluator::new(&state, table, log_base)?;
            Ok(psi_values
                .iter()
                .map(|&psi| eval.evaluate(kind, psi))
                .collect::<Result<_, _>>()?)
        })
        .collect::<Result<_, _>>()?;
    Ok(CircleGrid {
        kind,
        r: r_values.to_vec(),
        psi: psi_values.to_vec(),
        values: rows.into_iter().flatten().collect(),
    })
}

/// Inclusive arithmetic range; the point count is `floor((end - start)/step) + 1`.
pub fn stepped_range(start: f64, end: f64, step: f64) -> Option<Vec<f64>> {
    if !(step > 0.0) || !start.is_finite() || !end.is_finite() || end < start {
        return None;
    }
    // absorb rounding when (end - start) is an exact multiple of step
    let count = ((end - start) / step * (1.0 + 1e-12)).floor() as usize + 1;
    Some((0..count).map(|i| start + i as f64 * step).collect())
}

/// `1/2 + 2 sqrt(2) c0 c1 / pi`, the angle-optimal CH value of the two-pair state.
pub fn two_pair_ch_optimum(c0: f64, c1: f64) -> f64 {
    0.5 + 2.0 * 2f64.sqrt() * c0 * c1 / PI
}

/// `8 sqrt(2) c0 c1 / pi`, the angle-optimal spin value of the two-pair state.
pub fn two_pair_spin_optimum(c0: f64, c1: f64) -> f64 {
    8.0 * 2f64.sqrt() * c0 * c1 / PI
}
