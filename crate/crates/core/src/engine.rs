//! Closed-form binned homodyne statistics as functions of the angle sum
//! `psi = theta + phi`.
//!
//! Each quadrature outcome is binned as "1" for `x >= 0` and "0" otherwise.
//! For a state `sum_n c_n |n>|n>` with real `c_n` the joint probabilities are
//!
//! ```text
//! P11(psi) = P00(psi) = 1/4 + sum_{n>m} G(n,m) c_n c_m cos((n-m) psi)
//! P10(psi) = P01(psi) = 1/2 - P11(psi)
//! ```
//!
//! where `G(n,m)` is tabulated once per truncation in a [`CouplingTable`].

use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::specfun::{f_difference_signed, ln_factorial, oscillator_fns};
use crate::states::CorrelatedState;

/// Slack allowed on `P11` before it is reported as out of range.
pub const PROBABILITY_SLACK: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("P11({psi}) = {p11} lies outside [0, 1/2]")]
    ProbabilityOutOfRange { psi: f64, p11: f64 },
    #[error("state truncation {state} exceeds coupling table truncation {table}")]
    TruncationMismatch { state: usize, table: usize },
}

/// Weights `G(n,m)` of `c_n c_m cos((n-m) psi)` in the binned probabilities,
/// `G(n,m) = 2^(n+m+1) pi / (n! m! (n-m)^2) [F(n,m) - F(m,n)]^2` for `m < n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingTable {
    truncation: usize,
    // packed lower triangle, row n holds m = 0..n
    entries: Vec<f64>,
}

fn packed_index(n: usize, m: usize) -> usize {
    n * (n - 1) / 2 + m
}

impl CouplingTable {
    pub fn build(truncation: usize) -> Self {
        let mut entries = Vec::with_capacity(truncation * (truncation + 1) / 2);
        for n in 1..=truncation {
            for m in 0..n {
                entries.push(coupling_entry(n as u32, m as u32));
            }
        }
        Self {
            truncation,
            entries,
        }
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    /// `G(n,m)`, symmetric in its arguments; zero on the diagonal.
    pub fn get(&self, n: usize, m: usize) -> f64 {
        let (hi, lo) = if n >= m { (n, m) } else { (m, n) };
        if hi == lo {
            return 0.0;
        }
        assert!(
            hi <= self.truncation,
            "G({hi},{lo}) beyond truncation {}",
            self.truncation
        );
        self.entries[packed_index(hi, lo)]
    }

    /// Copy with one entry overwritten. Only meant for fault-injection checks
    /// of the verification suite.
    pub fn with_entry(&self, n: usize, m: usize, value: f64) -> Self {
        let (hi, lo) = if n >= m { (n, m) } else { (m, n) };
        assert!(hi != lo && hi <= self.truncation);
        let mut out = self.clone();
        out.entries[packed_index(hi, lo)] = value;
        out
    }

    /// Collapses the table against a state into the cosine series of `P11 - 1/4`.
    pub fn harmonics(&self, state: &CorrelatedState) -> Result<Harmonics, EngineError> {
        self.check(state)?;
        let c = state.coefficients();
        let mut amplitudes = vec![0.0; c.len()];
        for n in 1..c.len() {
            for m in 0..n {
                amplitudes[n - m] += self.entries[packed_index(n, m)] * c[n] * c[m];
            }
        }
        Ok(Harmonics { amplitudes })
    }

    fn check(&self, state: &CorrelatedState) -> Result<(), EngineError> {
        if state.truncation() > self.truncation {
            Err(EngineError::TruncationMismatch {
                state: state.truncation(),
                table: self.truncation,
            })
        } else {
            Ok(())
        }
    }
}

fn coupling_entry(n: u32, m: u32) -> f64 {
    let diff = f_difference_signed(n, m);
    if diff.is_zero() {
        return 0.0;
    }
    let gap = (n - m) as f64;
    let ln_g =
        (n + m + 1) as f64 * LN_2 + PI.ln() - ln_factorial(n) - ln_factorial(m) - 2.0 * gap.ln()
            + 2.0 * diff.ln_abs;
    ln_g.exp()
}

/// `P11(psi) - 1/4 = sum_k a_k cos(k psi)` for one state.
#[derive(Debug, Clone, PartialEq)]
pub struct Harmonics {
    // index k, entry 0 unused
    amplitudes: Vec<f64>,
}

impl Harmonics {
    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    /// Unchecked `P11(psi)`.
    pub fn p11(&self, psi: f64) -> f64 {
        // cos(k psi) by the Chebyshev recurrence
        let c1 = psi.cos();
        let (mut prev, mut cur) = (1.0, c1);
        let mut sum = 0.25;
        for a in self.amplitudes.iter().skip(1) {
            sum += a * cur;
            let next = 2.0 * c1 * cur - prev;
            prev = cur;
            cur = next;
        }
        sum
    }

    pub fn joint_probabilities(&self, psi: f64) -> Result<JointProbabilities, EngineError> {
        JointProbabilities::from_p11(self.p11(psi), psi)
    }
}

/// The four binned outcome probabilities at one angle sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointProbabilities {
    pub p11: f64,
    pub p00: f64,
    pub p10: f64,
    pub p01: f64,
}

impl JointProbabilities {
    fn from_p11(p11: f64, psi: f64) -> Result<Self, EngineError> {
        if !(-PROBABILITY_SLACK..=0.5 + PROBABILITY_SLACK).contains(&p11) {
            return Err(EngineError::ProbabilityOutOfRange { psi, p11 });
        }
        let p10 = 0.5 - p11;
        Ok(Self {
            p11,
            p00: p11,
            p10,
            p01: p10,
        })
    }

    pub fn uniform() -> Self {
        Self {
            p11: 0.25,
            p00: 0.25,
            p10: 0.25,
            p01: 0.25,
        }
    }

    pub fn total(&self) -> f64 {
        self.p11 + self.p00 + self.p10 + self.p01
    }

    /// Correlation of the dichotomic outcomes, `P11 + P00 - P10 - P01`.
    pub fn correlation(&self) -> f64 {
        self.p11 + self.p00 - self.p10 - self.p01
    }
}

pub fn joint_probabilities(
    state: &CorrelatedState,
    table: &CouplingTable,
    psi: f64,
) -> Result<JointProbabilities, EngineError> {
    table.harmonics(state)?.joint_probabilities(psi)
}

/// Single-mode probability of outcome "1"; independent of every angle.
pub fn marginal_p1() -> f64 {
    0.5
}

/// `E(psi) = 4 P11(psi) - 1`.
pub fn correlation_e(
    state: &CorrelatedState,
    table: &CouplingTable,
    psi: f64,
) -> Result<f64, EngineError> {
    let jp = joint_probabilities(state, table, psi)?;
    Ok(4.0 * jp.p11 - 1.0)
}

/// `E(psi)` summed directly over coefficient pairs with weight `4 G(n,m)`
/// (the `2^(n+m+3)` form), bypassing the harmonic collapse.
pub fn correlation_e_direct(
    state: &CorrelatedState,
    table: &CouplingTable,
    psi: f64,
) -> Result<f64, EngineError> {
    table.check(state)?;
    let c = state.coefficients();
    let mut sum = 0.0;
    for n in 1..c.len() {
        for m in 0..n {
            sum += 4.0 * table.get(n, m) * c[n] * c[m] * ((n - m) as f64 * psi).cos();
        }
    }
    Ok(sum)
}

/// Logarithm base for information quantities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogBase {
    #[default]
    Bits,
    Nats,
}

impl LogBase {
    pub fn ln_base(self) -> f64 {
        match self {
            LogBase::Bits => LN_2,
            LogBase::Nats => 1.0,
        }
    }
}

/// Conditional information `-sum_ab P(a,b) log(2 P(a,b))` with `0 log 0 = 0`.
pub fn conditional_information(jp: &JointProbabilities, base: LogBase) -> f64 {
    let term = |p: f64| if p > 0.0 { -p * (2.0 * p).ln() } else { 0.0 };
    (term(jp.p11) + term(jp.p00) + term(jp.p10) + term(jp.p01)) / base.ln_base()
}

/// Joint density of the two quadrature outcomes,
/// `|sum_n c_n exp(-i n psi) u_n(x1) u_n(x2)|^2` with `u_n` the oscillator functions.
pub fn joint_density(state: &CorrelatedState, x1: f64, x2: f64, psi: f64) -> f64 {
    let order = state.truncation() as u32;
    let u1 = oscillator_fns(order, x1);
    let u2 = oscillator_fns(order, x2);
    let (mut re, mut im) = (0.0, 0.0);
    for (n, c) in state.coefficients().iter().enumerate() {
        let w = c * u1[n] * u2[n];
        let phase = n as f64 * psi;
        re += w * phase.cos();
        im -= w * phase.sin();
    }
    re * re + im * im
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn two_pair_half() -> CorrelatedState {
        CorrelatedState::two_pair(0.5f64.sqrt()).unwrap()
    }

    #[test]
    fn coupling_examples() {
        let t = CouplingTable::build(10);
        assert_relative_eq!(t.get(1, 0), 1.0 / PI, max_relative = 1e-14);
        assert_eq!(t.get(2, 0), 0.0);
        assert_relative_eq!(t.get(2, 1), 1.0 / (2.0 * PI), max_relative = 1e-14);
        assert_eq!(t.get(0, 1), t.get(1, 0));
        assert_eq!(t.get(3, 3), 0.0);
    }

    #[test]
    fn coupling_structure_up_to_20() {
        let t = CouplingTable::build(20);
        for n in 1..=20 {
            for m in 0..n {
                let g = t.get(n, m);
                assert!(g >= 0.0);
                assert_eq!(g == 0.0, (n - m) % 2 == 0, "G({n},{m})");
            }
        }
        // G(n+1,n) approaches a common limit from both sides: even n from
        // above, odd n from below, every entry below G(1,0)
        let adj: Vec<f64> = (0..20).map(|n| t.get(n + 1, n)).collect();
        for n in 1..20 {
            assert!(adj[n] < adj[0]);
        }
        for n in (2..20).step_by(2) {
            assert!(adj[n] < adj[n - 2]);
        }
        for n in (3..20).step_by(2) {
            assert!(adj[n] > adj[n - 2]);
        }
        for n in 1..19 {
            assert!((adj[n + 1] - adj[n]).abs() < (adj[n] - adj[n - 1]).abs());
        }
    }

    #[test]
    fn vacuum_is_uniform() {
        let t = CouplingTable::build(10);
        let jp = joint_probabilities(&CorrelatedState::vacuum(10), &t, 1.3).unwrap();
        assert_eq!(jp, JointProbabilities::uniform());
        assert_eq!(
            correlation_e(&CorrelatedState::vacuum(10), &t, 0.2).unwrap(),
            0.0
        );
    }

    #[test]
    fn two_pair_probabilities() {
        let t = CouplingTable::build(1);
        let s = two_pair_half();
        let jp = joint_probabilities(&s, &t, 0.0).unwrap();
        assert_relative_eq!(jp.p11, 0.25 + 1.0 / (2.0 * PI), max_relative = 1e-14);
        assert_relative_eq!(jp.p11, 0.409_154_943_1, max_relative = 1e-10);
        let jp = joint_probabilities(&s, &t, PI / 2.0).unwrap();
        assert!((jp.p11 - 0.25).abs() < 1e-15);
        assert_relative_eq!(
            correlation_e(&s, &t, 0.0).unwrap(),
            2.0 / PI,
            max_relative = 1e-14
        );
    }

    #[test]
    fn truncation_mismatch_is_reported() {
        let t = CouplingTable::build(3);
        let s = CorrelatedState::circle(1.0, 5).unwrap();
        assert_eq!(
            joint_probabilities(&s, &t, 0.0),
            Err(EngineError::TruncationMismatch { state: 5, table: 3 })
        );
    }

    #[test]
    fn corrupted_table_trips_range_check() {
        let t = CouplingTable::build(1).with_entry(1, 0, 5.0);
        let err = joint_probabilities(&two_pair_half(), &t, 0.0).unwrap_err();
        assert!(matches!(err, EngineError::ProbabilityOutOfRange { .. }));
    }

    #[test]
    fn marginal_is_half() {
        assert_eq!(marginal_p1(), 0.5);
    }

    #[test]
    fn conditional_information_examples() {
        assert_relative_eq!(
            conditional_information(&JointProbabilities::uniform(), LogBase::Bits),
            1.0,
            max_relative = 1e-15
        );
        assert_relative_eq!(
            conditional_information(&JointProbabilities::uniform(), LogBase::Nats),
            LN_2,
            max_relative = 1e-15
        );
        let perfect = JointProbabilities {
            p11: 0.5,
            p00: 0.5,
            p10: 0.0,
            p01: 0.0,
        };
        assert_eq!(conditional_information(&perfect, LogBase::Bits), 0.0);
    }

    #[test]
    fn two_pair_entropy_closed_form() {
        // H(psi) = -1/2 log(1/4 - l^2) - l log((1 + 2l)/(1 - 2l)), l = 2 c0 c1 cos(psi)/pi
        let t = CouplingTable::build(1);
        for &c0 in &[0.2, 0.5, 0.5f64.sqrt(), 0.9] {
            let s = CorrelatedState::two_pair(c0).unwrap();
            let c1 = s.coefficients()[1];
            for &psi in &[0.0, 0.3, PI / 4.0, 2.0] {
                let l = 2.0 * c0 * c1 * psi.cos() / PI;
                let closed = (-0.5 * (0.25 - l * l).ln()
                    - l * ((1.0 + 2.0 * l) / (1.0 - 2.0 * l)).ln())
                    / LN_2;
                let jp = joint_probabilities(&s, &t, psi).unwrap();
                assert_relative_eq!(
                    conditional_information(&jp, LogBase::Bits),
                    closed,
                    max_relative = 1e-13
                );
            }
        }
    }

    #[test]
    fn density_examples() {
        assert_relative_eq!(
            joint_density(&CorrelatedState::vacuum(3), 0.0, 0.0, 0.7),
            1.0 / PI,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            joint_density(&two_pair_half(), 0.0, 0.0, 1.1),
            1.0 / (2.0 * PI),
            max_relative = 1e-14
        );
    }

    /// The textbook double sum over (n, m) with raw Hermite polynomials.
    fn density_double_sum(state: &CorrelatedState, x1: f64, x2: f64, psi: f64) -> f64 {
        fn hermite(n: usize, x: f64) -> f64 {
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
        let c = state.coefficients();
        let fact = |k: usize| (1..=k).map(|v| v as f64).product::<f64>();
        let mut sum = 0.0;
        for n in 0..c.len() {
            for m in 0..c.len() {
                let w = c[n] * c[m] * ((n as f64 - m as f64) * psi).cos()
                    / (2f64.powi((n + m) as i32) * fact(n) * fact(m) * PI);
                sum += w * [x1, x2]
                    .iter()
                    .map(|&x| (-x * x).exp() * hermite(n, x) * hermite(m, x))
                    .product::<f64>();
            }
        }
        sum
    }

    #[test]
    fn density_matches_double_sum() {
        let s = CorrelatedState::circle(1.12, 6).unwrap();
        for &(x1, x2, psi) in &[(0.3, -0.7, 0.4), (1.5, 1.1, 2.0), (-2.0, 0.1, -1.0)] {
            assert_relative_eq!(
                joint_density(&s, x1, x2, psi),
                density_double_sum(&s, x1, x2, psi),
                max_relative = 1e-12
            );
        }
    }

    fn arb_state() -> impl Strategy<Value = CorrelatedState> {
        proptest::collection::vec(-1.0f64..1.0, 2..12)
            .prop_filter_map("nonzero", |v| CorrelatedState::from_coefficients(&v).ok())
    }

    proptest! {
        #[test]
        fn probability_invariants(state in arb_state(), psi in -10.0f64..10.0) {
            let t = CouplingTable::build(11);
            let jp = joint_probabilities(&state, &t, psi).unwrap();
            prop_assert!((jp.total() - 1.0).abs() < 1e-12);
            prop_assert!((jp.p11 + jp.p10 - marginal_p1()).abs() < 1e-12);
            prop_assert_eq!(jp.p11, jp.p00);
            prop_assert_eq!(jp.p10, jp.p01);
            let even = joint_probabilities(&state, &t, -psi).unwrap();
            let shifted = joint_probabilities(&state, &t, psi + 2.0 * PI).unwrap();
            prop_assert!((even.p11 - jp.p11).abs() < 1e-12);
            prop_assert!((shifted.p11 - jp.p11).abs() < 1e-12);

            let e = correlation_e(&state, &t, psi).unwrap();
            prop_assert!((e - correlation_e_direct(&state, &t, psi).unwrap()).abs() < 1e-12);
            prop_assert!((e - jp.correlation()).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&e));

            let h = conditional_information(&jp, LogBase::Bits);
            prop_assert!((-1e-15..=2.0).contains(&h));
        }
    }
}
