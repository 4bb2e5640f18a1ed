//! Two-mode photon-number-correlated states `sum_n c_n |n>|n>` with real
//! amplitudes, and the families used throughout the crate.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Truncation used when a family is requested without an explicit one.
pub const DEFAULT_TRUNCATION: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("coefficient list is empty")]
    Empty,
    #[error("every coefficient is zero")]
    AllZero,
    #[error("coefficient {index} is not finite ({value})")]
    NonFinite { index: usize, value: f64 },
    #[error("invalid {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("truncation must be at least 1, got {0}")]
    Truncation(usize),
}

/// Unit-norm real coefficient vector `c_0..c_N`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelatedState {
    coefficients: Vec<f64>,
}

impl CorrelatedState {
    /// Normalizes `raw` to unit sum of squares.
    pub fn from_coefficients(raw: &[f64]) -> Result<Self, StateError> {
        if raw.is_empty() {
            return Err(StateError::Empty);
        }
        if let Some((index, &value)) = raw.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(StateError::NonFinite { index, value });
        }
        // scale first so huge or tiny inputs don't over/underflow the norm
        let scale = raw.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return Err(StateError::AllZero);
        }
        let norm = raw.iter().map(|v| (v / scale).powi(2)).sum::<f64>().sqrt() * scale;
        Ok(Self {
            coefficients: raw.iter().map(|v| v / norm).collect(),
        })
    }

    /// Vacuum `|0>|0>` embedded in a basis of the given truncation.
    pub fn vacuum(truncation: usize) -> Self {
        let mut coefficients = vec![0.0; truncation + 1];
        coefficients[0] = 1.0;
        Self { coefficients }
    }

    /// Circle (pair coherent) state, `c_n` proportional to `r^(2n)/n!`.
    pub fn circle(r: f64, truncation: usize) -> Result<Self, StateError> {
        check_truncation(truncation)?;
        if !r.is_finite() || r < 0.0 {
            return Err(StateError::InvalidParameter {
                name: "r",
                value: r,
                reason: "circle radius must be finite and nonnegative",
            });
        }
        let r2 = r * r;
        let mut raw = Vec::with_capacity(truncation + 1);
        let mut c = 1.0;
        for n in 0..=truncation {
            raw.push(c);
            c *= r2 / (n as f64 + 1.0);
        }
        Self::from_coefficients(&raw)
    }

    /// Parametric-amplifier (two-mode squeezed) state, `c_n` proportional to `tanh^n(s)`.
    pub fn squeezed(s: f64, truncation: usize) -> Result<Self, StateError> {
        check_truncation(truncation)?;
        if !s.is_finite() || s < 0.0 {
            return Err(StateError::InvalidParameter {
                name: "s",
                value: s,
                reason: "squeezing must be finite and nonnegative",
            });
        }
        let t = s.tanh();
        let raw: Vec<f64> = (0..=truncation).map(|n| t.powi(n as i32)).collect();
        Self::from_coefficients(&raw)
    }

    /// `c0 |0>|0> + sqrt(1 - c0^2) |1>|1>`.
    pub fn two_pair(c0: f64) -> Result<Self, StateError> {
        if !(0.0..=1.0).contains(&c0) {
            return Err(StateError::InvalidParameter {
                name: "c0",
                value: c0,
                reason: "must lie in [0, 1]",
            });
        }
        Ok(Self {
            coefficients: vec![c0, (1.0 - c0 * c0).max(0.0).sqrt()],
        })
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// Highest photon number `N` kept in the basis.
    pub fn truncation(&self) -> usize {
        self.coefficients.len() - 1
    }

    /// Per-mode mean photon number `sum_n n c_n^2`.
    pub fn mean_photon_number(&self) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .map(|(n, c)| n as f64 * c * c)
            .sum()
    }

    /// Copy padded with zeros (or cut, then renormalized) to `truncation`.
    pub fn with_truncation(&self, truncation: usize) -> Self {
        let mut raw = self.coefficients.clone();
        raw.resize(truncation + 1, 0.0);
        Self::from_coefficients(&raw).unwrap_or_else(|_| Self::vacuum(truncation))
    }
}

fn check_truncation(truncation: usize) -> Result<(), StateError> {
    if truncation < 1 {
        Err(StateError::Truncation(truncation))
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateFamily {
    Circle,
    Squeezed,
    TwoPair,
}

impl std::str::FromStr for StateFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "circle" => Ok(Self::Circle),
            "squeezed" => Ok(Self::Squeezed),
            "two_pair" | "two-pair" => Ok(Self::TwoPair),
            other => Err(format!(
                "unknown family '{other}' (expected circle, squeezed or two_pair)"
            )),
        }
    }
}

/// State-spec document accepted by the CLI:
/// `{"coefficients": [...]}` or `{"family": ..., "parameter": ..., "truncation": ...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StateSpec {
    Coefficients {
        coefficients: Vec<f64>,
    },
    Family {
        family: StateFamily,
        parameter: f64,
        #[serde(default = "default_truncation")]
        truncation: usize,
    },
}

fn default_truncation() -> usize {
    DEFAULT_TRUNCATION
}

impl StateSpec {
    pub fn build(&self) -> Result<CorrelatedState, StateError> {
        match *self {
            StateSpec::Coefficients { ref coefficients } => {
                CorrelatedState::from_coefficients(coefficients)
            }
            StateSpec::Family {
                family,
                parameter,
                truncation,
            } => match family {
                StateFamily::Circle => CorrelatedState::circle(parameter, truncation),
                StateFamily::Squeezed => CorrelatedState::squeezed(parameter, truncation),
                StateFamily::TwoPair => CorrelatedState::two_pair(parameter),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn norm_sq(s: &CorrelatedState) -> f64 {
        s.coefficients().iter().map(|c| c * c).sum()
    }

    #[test]
    fn circle_norm_tends_to_bessel() {
        // sum r^(4n)/(n!)^2 = I_0(2 r^2), so c_0 -> 1/sqrt(I_0(2 r^2))
        for r in [0.5, 1.12, 1.8] {
            let s = CorrelatedState::circle(r, 60).unwrap();
            let expected = 1.0 / crate::specfun::bessel_i0(2.0 * r * r).sqrt();
            assert_relative_eq!(s.coefficients()[0], expected, max_relative = 1e-12);
        }
    }

    #[test]
    fn from_coefficients_examples() {
        let vac = CorrelatedState::from_coefficients(&[1.0]).unwrap();
        assert_eq!(vac.coefficients(), &[1.0]);
        assert_eq!(vac.truncation(), 0);

        let s = CorrelatedState::from_coefficients(&[1.0, 1.0]).unwrap();
        assert_relative_eq!(s.coefficients()[0], 0.5f64.sqrt(), max_relative = 1e-15);
        assert_relative_eq!(s.coefficients()[1], 0.5f64.sqrt(), max_relative = 1e-15);

        let s = CorrelatedState::from_coefficients(&[3.0, 4.0]).unwrap();
        assert_relative_eq!(s.coefficients()[0], 0.6, max_relative = 1e-15);
        assert_relative_eq!(s.coefficients()[1], 0.8, max_relative = 1e-15);
    }

    #[test]
    fn from_coefficients_errors() {
        assert_eq!(
            CorrelatedState::from_coefficients(&[]),
            Err(StateError::Empty)
        );
        assert_eq!(
            CorrelatedState::from_coefficients(&[0.0, 0.0]),
            Err(StateError::AllZero)
        );
        assert!(matches!(
            CorrelatedState::from_coefficients(&[1.0, f64::NAN]),
            Err(StateError::NonFinite { index: 1, .. })
        ));
        assert!(matches!(
            CorrelatedState::from_coefficients(&[f64::INFINITY]),
            Err(StateError::NonFinite { index: 0, .. })
        ));
    }

    #[test]
    fn circle_matches_table_column() {
        let s = CorrelatedState::circle(1.12, 10).unwrap();
        let expected = [0.5495, 0.6893, 0.4323, 0.1808];
        for (c, e) in s.coefficients().iter().zip(expected) {
            assert!((c - e).abs() < 1e-4, "{c} vs {e}");
        }
    }

    #[test]
    fn circle_r1_is_inverse_factorials() {
        let s = CorrelatedState::circle(1.0, 10).unwrap();
        let mut fact = 1.0;
        let raw: Vec<f64> = (0..=10)
            .map(|n| {
                if n > 0 {
                    fact *= n as f64;
                }
                1.0 / fact
            })
            .collect();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        for (c, r) in s.coefficients().iter().zip(&raw) {
            assert_relative_eq!(*c, r / norm, max_relative = 1e-14);
        }
    }

    #[test]
    fn circle_small_r_tends_to_vacuum() {
        let s = CorrelatedState::circle(1e-6, 10).unwrap();
        assert!((s.coefficients()[0] - 1.0).abs() < 1e-11);
    }

    #[test]
    fn circle_coefficients_log_concave() {
        let r = 1.7;
        let s = CorrelatedState::circle(r, 20).unwrap();
        let c = s.coefficients();
        let mut last = f64::INFINITY;
        for n in 0..20 {
            assert!(c[n] > 0.0);
            let ratio = c[n + 1] / c[n];
            assert_relative_eq!(ratio, r * r / (n as f64 + 1.0), max_relative = 1e-13);
            assert!(ratio < last);
            last = ratio;
        }
    }

    #[test]
    fn squeezed_is_geometric() {
        let vac = CorrelatedState::squeezed(0.0, 5).unwrap();
        assert_eq!(vac.coefficients()[0], 1.0);

        let s = CorrelatedState::squeezed(0.5, 20).unwrap();
        let c = s.coefficients();
        for n in 0..20 {
            assert_relative_eq!(
                c[n + 1] / c[n],
                0.462_117_157_260_009_8,
                max_relative = 1e-13
            );
        }
    }

    #[test]
    fn squeezed_untruncated_norm_and_mean() {
        // raw tanh^n / cosh coefficients sum to one in the untruncated limit
        let s: f64 = 1.0;
        let raw_norm: f64 = (0..400)
            .map(|n| (s.tanh().powi(n) / s.cosh()).powi(2))
            .sum();
        assert_relative_eq!(raw_norm, 1.0, max_relative = 1e-13);

        let st = CorrelatedState::squeezed(0.5, 60).unwrap();
        assert_relative_eq!(
            st.mean_photon_number(),
            0.5f64.sinh().powi(2),
            max_relative = 1e-12
        );
    }

    #[test]
    fn two_pair_examples() {
        let s = CorrelatedState::two_pair(0.5f64.sqrt()).unwrap();
        assert_relative_eq!(s.coefficients()[1], 0.5f64.sqrt(), max_relative = 1e-15);
        assert_relative_eq!(s.mean_photon_number(), 0.5, max_relative = 1e-15);
        assert_eq!(
            CorrelatedState::two_pair(1.0).unwrap().coefficients(),
            &[1.0, 0.0]
        );
        let s = CorrelatedState::two_pair(0.6).unwrap();
        assert_relative_eq!(s.coefficients()[1], 0.8, max_relative = 1e-15);
        assert!(CorrelatedState::two_pair(1.1).is_err());
    }

    #[test]
    fn invalid_family_parameters() {
        assert!(CorrelatedState::circle(-1.0, 10).is_err());
        assert!(CorrelatedState::circle(1.0, 0).is_err());
        assert!(CorrelatedState::squeezed(f64::NAN, 10).is_err());
    }

    #[test]
    fn vacuum_mean_photon_number() {
        assert_eq!(CorrelatedState::vacuum(10).mean_photon_number(), 0.0);
    }

    #[test]
    fn state_spec_json_forms() {
        let spec: StateSpec = serde_json::from_str(r#"{"coefficients": [3, 4]}"#).unwrap();
        assert_eq!(spec.build().unwrap().coefficients(), &[0.6, 0.8]);

        let spec: StateSpec =
            serde_json::from_str(r#"{"family": "circle", "parameter": 1.12, "truncation": 10}"#)
                .unwrap();
        assert_eq!(
            spec.build().unwrap(),
            CorrelatedState::circle(1.12, 10).unwrap()
        );

        let spec: StateSpec =
            serde_json::from_str(r#"{"family": "two_pair", "parameter": 0.6}"#).unwrap();
        assert_eq!(spec.build().unwrap().truncation(), 1);

        assert!(serde_json::from_str::<StateSpec>(r#"{"family": "cat", "parameter": 1}"#).is_err());
    }

    proptest! {
        #[test]
        fn constructors_are_unit_norm(
            raw in proptest::collection::vec(-10.0f64..10.0, 1..15),
            r in 0.0f64..3.0,
            s in 0.0f64..3.0,
            n in 1usize..40,
        ) {
            if let Ok(st) = CorrelatedState::from_coefficients(&raw) {
                prop_assert!((norm_sq(&st) - 1.0).abs() < 1e-12);
            }
            prop_assert!((norm_sq(&CorrelatedState::circle(r, n).unwrap()) - 1.0).abs() < 1e-12);
            prop_assert!((norm_sq(&CorrelatedState::squeezed(s, n).unwrap()) - 1.0).abs() < 1e-12);
        }
    }
}
