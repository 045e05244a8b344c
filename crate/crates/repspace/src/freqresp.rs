//! Rational transfer functions with pure delays and their exact frequency
//! response.
//!
//! Coefficients are stored in ascending powers of `s`, so `num[0]` is the
//! constant term. A `delay` of `d` seconds multiplies the response by
//! `e^{-jωd}`; negative values are pure advances, legitimate in controller
//! algebra but rejected by the simulator.

use std::collections::BTreeMap;
use std::ops::Mul;

use num_complex::Complex64;
use thiserror::Error;

use crate::repcon::BiquadSection;

/// Absolute floor on `|den(jω)|` below which evaluation is reported as a pole
/// hit. Poles on the imaginary axis are fine anywhere else, so only an exact
/// hit counts.
pub const POLE_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FreqError {
    #[error("denominator evaluates to ~0 at omega = {omega} rad/s (pole at frequency)")]
    PoleAtFrequency { omega: f64 },
    #[error("non-finite frequency input: {omega}")]
    NonFiniteInput { omega: f64 },
    #[error("denominator must contain at least one nonzero coefficient")]
    EmptyDenominator,
    #[error("transfer-function coefficients and delay must be finite")]
    NonFiniteCoefficient,
    #[error("frequency grid must be strictly increasing and positive (index {index})")]
    InvalidGrid { index: usize },
    #[error("unknown controller kind `{kind}` (expected P, PD, PI, PID, Lag, Lead, FirstOrderFilter or SecondOrderFilter)")]
    UnknownKind { kind: String },
    #[error("controller kind `{kind}` is missing parameter `{name}`")]
    MissingParameter { kind: String, name: String },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },
}

/// Rational transfer function `num(s)/den(s) · e^{-delay·s}` with real
/// coefficients in ascending powers.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferFunction {
    num: Vec<f64>,
    den: Vec<f64>,
    delay: f64,
}

fn trim_trailing_zeros(mut v: Vec<f64>) -> Vec<f64> {
    while v.len() > 1 && *v.last().unwrap() == 0.0 {
        v.pop();
    }
    v
}

/// Multiply two polynomials in ascending-power form.
fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            out[i + j] += ai * bj;
        }
    }
    out
}

/// Horner evaluation of an ascending-power polynomial at a complex argument.
fn horner(coeffs: &[f64], s: Complex64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for &c in coeffs.iter().rev() {
        acc = acc * s + c;
    }
    acc
}

impl TransferFunction {
    /// Build a transfer function, trimming trailing zero coefficients so the
    /// leading denominator coefficient is nonzero.
    pub fn new(num: Vec<f64>, den: Vec<f64>, delay: f64) -> Result<Self, FreqError> {
        if num.iter().chain(den.iter()).any(|c| !c.is_finite()) || !delay.is_finite() {
            return Err(FreqError::NonFiniteCoefficient);
        }
        if den.iter().all(|&c| c == 0.0) {
            return Err(FreqError::EmptyDenominator);
        }
        let num = if num.is_empty() { vec![0.0] } else { num };
        Ok(Self {
            num: trim_trailing_zeros(num),
            den: trim_trailing_zeros(den),
            delay,
        })
    }

    /// Constant gain `k`.
    pub fn constant(k: f64) -> Self {
        Self::new(vec![k], vec![1.0], 0.0).unwrap()
    }

    /// Plant in factored resonant form: `gain · Π(s² + 2ζωs + ω²)` over the
    /// zero modes divided by the same product over the pole modes, with mode
    /// frequencies given in Hz.
    pub fn from_resonant_modes(
        gain: f64,
        zero_modes: &[(f64, f64)],
        pole_modes: &[(f64, f64)],
        delay: f64,
    ) -> Result<Self, FreqError> {
        let expand = |modes: &[(f64, f64)]| -> Vec<f64> {
            let mut p = vec![1.0];
            for &(f_hz, zeta) in modes {
                let w = 2.0 * std::f64::consts::PI * f_hz;
                p = poly_mul(&p, &[w * w, 2.0 * zeta * w, 1.0]);
            }
            p
        };
        let num: Vec<f64> = expand(zero_modes).iter().map(|c| c * gain).collect();
        Self::new(num, expand(pole_modes), delay)
    }

    pub fn num(&self) -> &[f64] {
        &self.num
    }

    pub fn den(&self) -> &[f64] {
        &self.den
    }

    pub fn delay(&self) -> f64 {
        self.delay
    }

    /// Degree of the numerator (trailing zeros already trimmed).
    pub fn num_degree(&self) -> usize {
        self.num.len() - 1
    }

    pub fn den_degree(&self) -> usize {
        self.den.len() - 1
    }
}

impl Mul for &TransferFunction {
    type Output = TransferFunction;

    // Delays add under multiplication of transfer functions.
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn mul(self, rhs: &TransferFunction) -> TransferFunction {
        TransferFunction::new(
            poly_mul(&self.num, &rhs.num),
            poly_mul(&self.den, &rhs.den),
            self.delay + rhs.delay,
        )
        .expect("product of valid transfer functions is valid")
    }
}

/// One point of a frequency-response sweep, with per-grid unwrapped phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodePoint {
    pub omega: f64,
    pub value: Complex64,
    pub magnitude: f64,
    /// Radians; unwrapped across the grid that produced this point.
    pub phase: f64,
}

/// Exact frequency response `num(jω)/den(jω)·e^{-jω·delay}`.
pub fn eval_tf(tf: &TransferFunction, omega: f64) -> Result<Complex64, FreqError> {
    if !omega.is_finite() {
        return Err(FreqError::NonFiniteInput { omega });
    }
    let s = Complex64::new(0.0, omega);
    let den = horner(&tf.den, s);
    if den.norm() < POLE_FLOOR {
        return Err(FreqError::PoleAtFrequency { omega });
    }
    let rot = Complex64::from_polar(1.0, -omega * tf.delay);
    Ok(horner(&tf.num, s) / den * rot)
}

/// Sweep a strictly increasing, positive frequency grid and unwrap the phase
/// across consecutive points.
pub fn bode_grid(tf: &TransferFunction, omegas: &[f64]) -> Result<Vec<BodePoint>, FreqError> {
    let mut out = Vec::with_capacity(omegas.len());
    let mut prev_phase: Option<f64> = None;
    for (index, &omega) in omegas.iter().enumerate() {
        if !(omega > 0.0) || (index > 0 && omega <= omegas[index - 1]) {
            return Err(FreqError::InvalidGrid { index });
        }
        let value = eval_tf(tf, omega)?;
        let raw = value.arg();
        let phase = match prev_phase {
            None => raw,
            Some(p) => {
                let mut d = raw - p;
                while d > std::f64::consts::PI {
                    d -= 2.0 * std::f64::consts::PI;
                }
                while d < -std::f64::consts::PI {
                    d += 2.0 * std::f64::consts::PI;
                }
                p + d
            }
        };
        prev_phase = Some(phase);
        out.push(BodePoint {
            omega,
            value,
            magnitude: value.norm(),
            phase,
        });
    }
    Ok(out)
}

fn need(kind: &str, params: &BTreeMap<String, f64>, name: &str) -> Result<f64, FreqError> {
    params
        .get(name)
        .copied()
        .ok_or(FreqError::MissingParameter {
            kind: kind.to_string(),
            name: name.to_string(),
        })
}

/// Build the biquad coefficient set of a standard controller type.
///
/// Coefficient patterns follow the usual second-order-section catalogue:
/// numerator `(n2, n1, n0)` over denominator `(d2, d1, d0)`. `Lead` requires
/// `0 < alpha < 1`, `Lag` requires `beta > 1`.
pub fn make_controller_tf(
    kind: &str,
    params: &BTreeMap<String, f64>,
) -> Result<BiquadSection, FreqError> {
    let p = |name: &str| need(kind, params, name);
    let section = match kind {
        "P" => BiquadSection::new(0.0, 0.0, p("K")?, 0.0, 0.0, 1.0),
        "PD" => {
            let k = p("K")?;
            BiquadSection::new(0.0, k * p("Td")?, k, 0.0, 0.0, 1.0)
        }
        "PI" => {
            let k = p("K")?;
            BiquadSection::new(0.0, k, k * p("Ti")?, 0.0, 1.0, 0.0)
        }
        "PID" => {
            let k = p("K")?;
            BiquadSection::new(k * p("Td")?, k, k * p("Ti")?, 0.0, 1.0, 0.0)
        }
        "Lag" => {
            let (k, t, beta) = (p("K")?, p("T")?, p("beta")?);
            if !(beta > 1.0) {
                return Err(FreqError::InvalidParameter {
                    name: "beta".to_string(),
                    reason: format!("Lag requires beta > 1, got {beta}"),
                });
            }
            BiquadSection::new(0.0, k * t, k, 0.0, beta * t, 1.0)
        }
        "Lead" => {
            let (k, t, alpha) = (p("K")?, p("T")?, p("alpha")?);
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(FreqError::InvalidParameter {
                    name: "alpha".to_string(),
                    reason: format!("Lead requires 0 < alpha < 1, got {alpha}"),
                });
            }
            BiquadSection::new(0.0, k * t, k, 0.0, alpha * t, 1.0)
        }
        "FirstOrderFilter" => BiquadSection::new(0.0, 0.0, p("K")?, 0.0, p("tau")?, 1.0),
        "SecondOrderFilter" => {
            let (k, zeta, w) = (p("K")?, p("zeta")?, p("omega")?);
            BiquadSection::new(0.0, 0.0, k * w * w, 1.0, 2.0 * zeta * w, w * w)
        }
        _ => {
            return Err(FreqError::UnknownKind {
                kind: kind.to_string(),
            })
        }
    };
    Ok(section)
}
