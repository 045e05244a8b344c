//! Repetitive-control loop algebra.
//!
//! The controller wraps a period-long positive-feedback delay `τ_d` around a
//! low-pass filter `q(s) = q_p(s)e^{τ_q s}` and feeds the loop forward through
//! a compensator `b(s) = b_p(s)e^{τ_b s}`. Both advances are absorbed into the
//! period delay when realized, so frequency-domain algebra may treat them as
//! plain unit-modulus rotations. Everything here is a pure function of its
//! inputs and safe to call concurrently.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::freqresp::{eval_tf, FreqError, TransferFunction};

/// Relative floor for near-singular denominators: a difference `a - b` counts
/// as zero when it is below `1e-14` of the larger operand. Keeps the checks
/// scale-independent (the example plant carries a 1e12 gain).
pub const REL_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RepconError {
    #[error("regenerative pole: |1 - q_p·e^{{(-τ_d+τ_q)jω}}| is ~0 at omega = {omega} rad/s")]
    RegenerativePole { omega: f64 },
    #[error("critical point: loop is on the stability boundary at omega = {omega} rad/s")]
    CriticalPoint { omega: f64 },
    #[error("invalid repetitive controller: {0}")]
    InvalidController(String),
    #[error("invalid weight schedule: {0}")]
    InvalidSchedule(String),
    #[error("frequency grid must be nonempty")]
    EmptyGrid,
    #[error(transparent)]
    Plant(#[from] FreqError),
}

/// Second-order rational section `(n2·s² + n1·s + n0)/(d2·s² + d1·s + d0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiquadSection {
    pub n2: f64,
    pub n1: f64,
    pub n0: f64,
    pub d2: f64,
    pub d1: f64,
    pub d0: f64,
}

/// One coefficient slot of a [`BiquadSection`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Slot {
    N2,
    N1,
    N0,
    D2,
    D1,
    D0,
}

impl Slot {
    pub const ALL: [Slot; 6] = [Slot::N2, Slot::N1, Slot::N0, Slot::D2, Slot::D1, Slot::D0];

    pub fn name(self) -> &'static str {
        match self {
            Slot::N2 => "n2",
            Slot::N1 => "n1",
            Slot::N0 => "n0",
            Slot::D2 => "d2",
            Slot::D1 => "d1",
            Slot::D0 => "d0",
        }
    }
}

impl BiquadSection {
    pub fn new(n2: f64, n1: f64, n0: f64, d2: f64, d1: f64, d0: f64) -> Self {
        Self {
            n2,
            n1,
            n0,
            d2,
            d1,
            d0,
        }
    }

    /// Static unity gain.
    pub fn unity() -> Self {
        Self::new(0.0, 0.0, 1.0, 0.0, 0.0, 1.0)
    }

    /// Identically zero section (numerator zero), used to disable a filter.
    pub fn zero() -> Self {
        Self::new(0.0, 0.0, 0.0, 0.0, 0.0, 1.0)
    }

    pub fn get(&self, slot: Slot) -> f64 {
        match slot {
            Slot::N2 => self.n2,
            Slot::N1 => self.n1,
            Slot::N0 => self.n0,
            Slot::D2 => self.d2,
            Slot::D1 => self.d1,
            Slot::D0 => self.d0,
        }
    }

    pub fn set(&mut self, slot: Slot, value: f64) {
        match slot {
            Slot::N2 => self.n2 = value,
            Slot::N1 => self.n1 = value,
            Slot::N0 => self.n0 = value,
            Slot::D2 => self.d2 = value,
            Slot::D1 => self.d1 = value,
            Slot::D0 => self.d0 = value,
        }
    }

    /// True when the denominator has at least one nonzero coefficient.
    pub fn is_evaluable(&self) -> bool {
        self.d2 != 0.0 || self.d1 != 0.0 || self.d0 != 0.0
    }

    /// Response at `jω`: `((n0 - n2ω²) + j·n1ω) / ((d0 - d2ω²) + j·d1ω)`.
    pub fn eval(&self, omega: f64) -> Complex64 {
        let w2 = omega * omega;
        let num = Complex64::new(self.n0 - self.n2 * w2, self.n1 * omega);
        let den = Complex64::new(self.d0 - self.d2 * w2, self.d1 * omega);
        num / den
    }

    pub fn to_transfer_function(&self) -> Result<TransferFunction, FreqError> {
        TransferFunction::new(
            vec![self.n0, self.n1, self.n2],
            vec![self.d0, self.d1, self.d2],
            0.0,
        )
    }
}

/// Product of a section chain at `jω`, optionally substituting one section.
///
/// Multiplication order is the section order; region rasterization and the
/// membership oracle both route through here so their floating-point results
/// are bit-identical.
pub fn filter_chain_value(
    sections: &[BiquadSection],
    substitute: Option<(usize, &BiquadSection)>,
    omega: f64,
) -> Complex64 {
    let mut acc = Complex64::new(1.0, 0.0);
    for (i, section) in sections.iter().enumerate() {
        let s = match substitute {
            Some((idx, repl)) if idx == i => repl,
            _ => section,
        };
        acc *= s.eval(omega);
    }
    acc
}

/// Repetitive controller: period delay `τ_d`, filter advances `τ_q`, `τ_b`,
/// and the biquad chains of `q_p(s)` and `b_p(s)` (empty `b_p` chain means
/// unity).
#[derive(Debug, Clone, PartialEq)]
pub struct RepetitiveController {
    pub tau_d: f64,
    pub tau_q: f64,
    pub tau_b: f64,
    pub qp_sections: Vec<BiquadSection>,
    pub bp_sections: Vec<BiquadSection>,
}

impl RepetitiveController {
    pub fn new(
        tau_d: f64,
        tau_q: f64,
        tau_b: f64,
        qp_sections: Vec<BiquadSection>,
        bp_sections: Vec<BiquadSection>,
    ) -> Result<Self, RepconError> {
        if !(tau_d > 0.0) {
            return Err(RepconError::InvalidController(format!(
                "tau_d must be positive, got {tau_d}"
            )));
        }
        if tau_q < 0.0 || tau_b < 0.0 {
            return Err(RepconError::InvalidController(
                "tau_q and tau_b must be nonnegative".to_string(),
            ));
        }
        if tau_q + tau_b >= tau_d {
            return Err(RepconError::InvalidController(format!(
                "realizability requires tau_d > tau_q + tau_b ({tau_d} <= {tau_q} + {tau_b}); \
                 the advances must be absorbable by the period delay"
            )));
        }
        if qp_sections.is_empty() {
            return Err(RepconError::InvalidController(
                "q_p needs at least one section".to_string(),
            ));
        }
        for (i, s) in qp_sections.iter().chain(bp_sections.iter()).enumerate() {
            if !s.is_evaluable() {
                return Err(RepconError::InvalidController(format!(
                    "section {i} has an identically zero denominator"
                )));
            }
        }
        Ok(Self {
            tau_d,
            tau_q,
            tau_b,
            qp_sections,
            bp_sections,
        })
    }

    /// `q_p(jω)` (rational part only).
    pub fn qp_value(&self, omega: f64) -> Complex64 {
        filter_chain_value(&self.qp_sections, None, omega)
    }

    /// `b_p(jω)` (rational part only; empty chain is unity).
    pub fn bp_value(&self, omega: f64) -> Complex64 {
        filter_chain_value(&self.bp_sections, None, omega)
    }

    /// Full `q(jω) = q_p(jω)·e^{jωτ_q}`.
    pub fn q_value(&self, omega: f64) -> Complex64 {
        self.qp_value(omega) * Complex64::from_polar(1.0, omega * self.tau_q)
    }

    /// Full `b(jω) = b_p(jω)·e^{jωτ_b}`.
    pub fn b_value(&self, omega: f64) -> Complex64 {
        self.bp_value(omega) * Complex64::from_polar(1.0, omega * self.tau_b)
    }
}

/// Frequency band a design constraint belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Band {
    /// Nominal performance (low frequencies, `W_T = 0`).
    NP,
    /// Robust performance (intermediate frequencies, both weights).
    RP,
    /// Robust stability (high frequencies, `W_S = 0`).
    RS,
    /// Regeneration-spectrum stability condition.
    STAB,
}

impl Band {
    pub fn name(self) -> &'static str {
        match self {
            Band::NP => "NP",
            Band::RP => "RP",
            Band::RS => "RS",
            Band::STAB => "STAB",
        }
    }
}

impl std::fmt::Display for Band {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One row of the design-frequency table: harmonic index, its frequency, and
/// the sensitivity weights there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightEntry {
    pub k: u32,
    /// `2πk/τ_d`, derived from `k`, never entered directly.
    pub omega: f64,
    pub ws: f64,
    pub wt: f64,
    pub band: Band,
}

/// Finite set of design frequencies with per-frequency weight magnitudes and
/// the stability margin for the regeneration test.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSchedule {
    pub entries: Vec<WeightEntry>,
    pub epsilon: f64,
}

impl WeightSchedule {
    /// Build from `(k, ws, wt, band)` rows; `ω = 2πk/τ_d` is derived here so
    /// the frequency set can never drift from the period.
    pub fn new(
        tau_d: f64,
        epsilon: f64,
        rows: &[(u32, f64, f64, Band)],
    ) -> Result<Self, RepconError> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(RepconError::InvalidSchedule(format!(
                "epsilon must lie in (0, 1), got {epsilon}"
            )));
        }
        let mut entries = Vec::with_capacity(rows.len());
        let mut prev_k = 0u32;
        for &(k, ws, wt, band) in rows {
            if k == 0 {
                return Err(RepconError::InvalidSchedule(
                    "harmonic index k must be >= 1".to_string(),
                ));
            }
            if k <= prev_k {
                return Err(RepconError::InvalidSchedule(format!(
                    "harmonic indices must be strictly increasing (k = {k} after {prev_k})"
                )));
            }
            if !(ws >= 0.0 && wt >= 0.0 && ws.is_finite() && wt.is_finite()) {
                return Err(RepconError::InvalidSchedule(format!(
                    "weights must be finite and nonnegative at k = {k}"
                )));
            }
            match band {
                Band::NP if wt != 0.0 => {
                    return Err(RepconError::InvalidSchedule(format!(
                        "NP band requires wt = 0 at k = {k}"
                    )))
                }
                Band::RS if ws != 0.0 => {
                    return Err(RepconError::InvalidSchedule(format!(
                        "RS band requires ws = 0 at k = {k}"
                    )))
                }
                Band::STAB => {
                    return Err(RepconError::InvalidSchedule(
                        "STAB is not a weight-table band".to_string(),
                    ))
                }
                _ => {}
            }
            entries.push(WeightEntry {
                k,
                omega: 2.0 * std::f64::consts::PI * k as f64 / tau_d,
                ws,
                wt,
                band,
            });
            prev_k = k;
        }
        Ok(Self { entries, epsilon })
    }
}

/// Everything about one frequency that does not depend on the tunable filter
/// coefficients: the plant response and the delay/advance rotations.
///
/// Loop sweeps over a parameter grid hold the context fixed and vary only the
/// `q_p`/`b_p` values, which keeps rasterization cheap and guarantees the
/// raster predicate and the membership oracle follow the same float path.
#[derive(Debug, Clone, Copy)]
pub struct FreqContext {
    pub omega: f64,
    /// `G(jω)`.
    pub plant: Complex64,
    /// `e^{(-τ_d+τ_q)jω}`, the regenerative-loop rotation.
    pub z_loop: Complex64,
    /// `e^{(-τ_d+τ_q+τ_b)jω}`, the forward-path rotation.
    pub e_total: Complex64,
    /// `e^{jωτ_q}`.
    pub e_q: Complex64,
    /// `e^{jωτ_b}`.
    pub e_b: Complex64,
}

impl FreqContext {
    pub fn new(
        plant: &TransferFunction,
        ctrl: &RepetitiveController,
        omega: f64,
    ) -> Result<Self, RepconError> {
        Ok(Self {
            omega,
            plant: eval_tf(plant, omega)?,
            z_loop: Complex64::from_polar(1.0, omega * (-ctrl.tau_d + ctrl.tau_q)),
            e_total: Complex64::from_polar(1.0, omega * (-ctrl.tau_d + ctrl.tau_q + ctrl.tau_b)),
            e_q: Complex64::from_polar(1.0, omega * ctrl.tau_q),
            e_b: Complex64::from_polar(1.0, omega * ctrl.tau_b),
        })
    }

    /// Loop gain `L = G·(1 + q_p·b_p·e^{(-τ_d+τ_q+τ_b)jω}/(1 - q_p·e^{(-τ_d+τ_q)jω}))`
    /// for given rational filter values.
    pub fn loop_gain(&self, qp: Complex64, bp: Complex64) -> Result<Complex64, RepconError> {
        let feedback = qp * self.z_loop;
        let den = Complex64::new(1.0, 0.0) - feedback;
        if den.norm() < REL_FLOOR * feedback.norm().max(1.0) {
            return Err(RepconError::RegenerativePole { omega: self.omega });
        }
        Ok(self.plant * (Complex64::new(1.0, 0.0) + qp * bp * self.e_total / den))
    }

    /// Sensitivity pair `(S, T) = (1/(1+L), L/(1+L))`.
    pub fn sensitivity_pair(
        &self,
        qp: Complex64,
        bp: Complex64,
    ) -> Result<(Complex64, Complex64), RepconError> {
        let l = self.loop_gain(qp, bp)?;
        let den = Complex64::new(1.0, 0.0) + l;
        if den.norm() < REL_FLOOR * l.norm().max(1.0) {
            return Err(RepconError::CriticalPoint { omega: self.omega });
        }
        Ok((den.inv(), l / den))
    }

    /// `|W_S|·|S| + |W_T|·|T|`; the design requires this to stay below one.
    pub fn robust_perf(
        &self,
        qp: Complex64,
        bp: Complex64,
        ws: f64,
        wt: f64,
    ) -> Result<f64, RepconError> {
        let (s, t) = self.sensitivity_pair(qp, bp)?;
        Ok(ws * s.norm() + wt * t.norm())
    }

    /// Regeneration spectrum `R(ω) = |q·(1 - b·G/(1+G))|` with the full
    /// (advance-carrying) filter values.
    pub fn regen(&self, qp: Complex64, bp: Complex64) -> Result<f64, RepconError> {
        let one = Complex64::new(1.0, 0.0);
        let den = one + self.plant;
        if den.norm() < REL_FLOOR * self.plant.norm().max(1.0) {
            return Err(RepconError::CriticalPoint { omega: self.omega });
        }
        let q = qp * self.e_q;
        let b = bp * self.e_b;
        Ok((q * (one - b * self.plant / den)).norm())
    }
}

/// Loop gain of the repetitive control system at `ω`.
pub fn loop_gain(
    plant: &TransferFunction,
    ctrl: &RepetitiveController,
    omega: f64,
) -> Result<Complex64, RepconError> {
    FreqContext::new(plant, ctrl, omega)?.loop_gain(ctrl.qp_value(omega), ctrl.bp_value(omega))
}

/// Sensitivity `S = 1/(1+L)`.
pub fn sensitivity(
    plant: &TransferFunction,
    ctrl: &RepetitiveController,
    omega: f64,
) -> Result<Complex64, RepconError> {
    let ctx = FreqContext::new(plant, ctrl, omega)?;
    Ok(ctx
        .sensitivity_pair(ctrl.qp_value(omega), ctrl.bp_value(omega))?
        .0)
}

/// Complementary sensitivity `T = L/(1+L)`.
pub fn comp_sensitivity(
    plant: &TransferFunction,
    ctrl: &RepetitiveController,
    omega: f64,
) -> Result<Complex64, RepconError> {
    let ctx = FreqContext::new(plant, ctrl, omega)?;
    Ok(ctx
        .sensitivity_pair(ctrl.qp_value(omega), ctrl.bp_value(omega))?
        .1)
}

/// Regeneration spectrum `R(ω)`.
pub fn regeneration_spectrum(
    plant: &TransferFunction,
    ctrl: &RepetitiveController,
    omega: f64,
) -> Result<f64, RepconError> {
    let ctx = FreqContext::new(plant, ctrl, omega)?;
    ctx.regen(ctrl.qp_value(omega), ctrl.bp_value(omega))
}

/// Outcome of sweeping `R(ω)` over a frequency grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegenCheck {
    pub pass: bool,
    pub worst_omega: f64,
    pub worst_value: f64,
    pub epsilon: f64,
}

/// Sufficient stability condition: `R(ω) < 1 - ε` over the whole grid.
/// Reports the argmax.
pub fn regen_stability_check(
    plant: &TransferFunction,
    ctrl: &RepetitiveController,
    omega_grid: &[f64],
    epsilon: f64,
) -> Result<RegenCheck, RepconError> {
    if omega_grid.is_empty() {
        return Err(RepconError::EmptyGrid);
    }
    let mut worst_omega = omega_grid[0];
    let mut worst_value = f64::NEG_INFINITY;
    for &omega in omega_grid {
        let r = regeneration_spectrum(plant, ctrl, omega)?;
        if r > worst_value {
            worst_value = r;
            worst_omega = omega;
        }
    }
    Ok(RegenCheck {
        pass: worst_value < 1.0 - epsilon,
        worst_omega,
        worst_value,
        epsilon,
    })
}

/// Robust-performance functional `|W_S|·|S(jω)| + |W_T|·|T(jω)|`.
pub fn robust_perf_value(
    plant: &TransferFunction,
    ctrl: &RepetitiveController,
    ws: f64,
    wt: f64,
    omega: f64,
) -> Result<f64, RepconError> {
    let ctx = FreqContext::new(plant, ctrl, omega)?;
    ctx.robust_perf(ctrl.qp_value(omega), ctrl.bp_value(omega), ws, wt)
}
