//! Time-domain closed-loop simulation of the repetitive control system.
//!
//! The modified structure is realized causally: the filter advances are
//! absorbed into the period delay, so the positive-feedback loop around the
//! `q_p` filter carries a delay of `τ_d - τ_q` seconds and the `b_p` path
//! reads an earlier tap of the same line at `τ_d - τ_q - τ_b`. All delay taps
//! are exact integer multiples of the step (the step is shrunk until they
//! are) — fractional-tap interpolation would add artificial damping to the
//! regenerative loop, which the stability analysis assumes away.
//!
//! Integration is fixed-step explicit 4th order for every state block; the
//! delayed signals enter the substeps through their stored samples (exact at
//! the step endpoints, averaged at the midpoint).
//!
//! A run is strictly sequential (stateful stepping); distinct runs share
//! nothing and may execute concurrently.

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::freqresp::TransferFunction;
use crate::repcon::{BiquadSection, RepetitiveController};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("transfer function is improper or carries a delay and cannot be realized")]
    ImproperTransferFunction,
    #[error("simulation diverged at t = {t} s (|output| exceeded 1e6x the reference amplitude)")]
    UnstableSimulation { t: f64, trace: SimulationTrace },
    #[error("trace does not span two full periods")]
    TraceTooShort,
    #[error("invalid time step: {0}")]
    BadTimeStep(String),
    #[error("duration must cover at least two periods of the exogenous signal")]
    DurationTooShort,
    #[error("delay tap configuration invalid: {0}")]
    BadTap(String),
    #[error("algebraic loop is singular (plant direct feedthrough of -1)")]
    AlgebraicLoop,
}

/// Minimal SISO state-space realization `x' = Ax + Bu`, `y = Cx + Du` with
/// its running state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceBlock {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub d: f64,
    pub state: Vec<f64>,
    n: usize,
}

impl StateSpaceBlock {
    pub fn order(&self) -> usize {
        self.n
    }

    pub fn reset(&mut self) {
        self.state.iter_mut().for_each(|x| *x = 0.0);
    }

    /// Output for the current state and input.
    fn output(&self, state: &[f64], u: f64) -> f64 {
        let mut y = self.d * u;
        for i in 0..self.n {
            y += self.c[i] * state[i];
        }
        y
    }

    /// `dx = Ax + Bu` into `out`.
    fn derivative(&self, state: &[f64], u: f64, out: &mut [f64]) {
        for i in 0..self.n {
            let mut acc = self.b[i] * u;
            let row = &self.a[i * self.n..(i + 1) * self.n];
            for (j, &aij) in row.iter().enumerate() {
                acc += aij * state[j];
            }
            out[i] = acc;
        }
    }

    /// Frequency response `C(jωI - A)^{-1}B + D` via complex Gaussian
    /// elimination, independent of the polynomial evaluator.
    pub fn freq_response(&self, omega: f64) -> Complex64 {
        let n = self.n;
        if n == 0 {
            return Complex64::new(self.d, 0.0);
        }
        let mut m = vec![Complex64::new(0.0, 0.0); n * n];
        let mut rhs: Vec<Complex64> = self.b.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        for i in 0..n {
            for j in 0..n {
                m[i * n + j] = Complex64::new(-self.a[i * n + j], if i == j { omega } else { 0.0 });
            }
        }
        for col in 0..n {
            let mut piv = col;
            for r in col + 1..n {
                if m[r * n + col].norm() > m[piv * n + col].norm() {
                    piv = r;
                }
            }
            if piv != col {
                for j in 0..n {
                    m.swap(col * n + j, piv * n + j);
                }
                rhs.swap(col, piv);
            }
            let diag = m[col * n + col];
            for r in col + 1..n {
                let f = m[r * n + col] / diag;
                for j in col..n {
                    let v = m[col * n + j];
                    m[r * n + j] -= f * v;
                }
                let v = rhs[col];
                rhs[r] -= f * v;
            }
        }
        for col in (0..n).rev() {
            let mut acc = rhs[col];
            for j in col + 1..n {
                acc -= m[col * n + j] * rhs[j];
            }
            rhs[col] = acc / m[col * n + col];
        }
        let mut y = Complex64::new(self.d, 0.0);
        for i in 0..n {
            y += self.c[i] * rhs[i];
        }
        y
    }
}

/// Controllable-canonical-form realization of a proper rational transfer
/// function. Pure delays (and advances) must be absorbed into delay taps
/// before realization.
pub fn realize(tf: &TransferFunction) -> Result<StateSpaceBlock, SimError> {
    if tf.delay() != 0.0 {
        return Err(SimError::ImproperTransferFunction);
    }
    let den = tf.den();
    let num = tf.num();
    let n = den.len() - 1;
    if num.len() > den.len() {
        return Err(SimError::ImproperTransferFunction);
    }
    let lead = den[n];
    let norm_den: Vec<f64> = den.iter().map(|&c| c / lead).collect();
    let mut norm_num = vec![0.0; n + 1];
    for (i, &c) in num.iter().enumerate() {
        norm_num[i] = c / lead;
    }
    let d = norm_num[n];
    let mut a = vec![0.0; n * n];
    for i in 0..n.saturating_sub(1) {
        a[i * n + i + 1] = 1.0;
    }
    for j in 0..n {
        a[(n.saturating_sub(1)) * n + j] = -norm_den[j];
    }
    let mut b = vec![0.0; n];
    if n > 0 {
        b[n - 1] = 1.0;
    }
    let c: Vec<f64> = (0..n).map(|i| norm_num[i] - d * norm_den[i]).collect();
    Ok(StateSpaceBlock {
        a,
        b,
        c,
        d,
        state: vec![0.0; n],
        n,
    })
}

/// Series composition: the output of `first` feeds `second`.
pub fn series(first: &StateSpaceBlock, second: &StateSpaceBlock) -> StateSpaceBlock {
    let (n1, n2) = (first.n, second.n);
    let n = n1 + n2;
    let mut a = vec![0.0; n * n];
    for i in 0..n1 {
        for j in 0..n1 {
            a[i * n + j] = first.a[i * n1 + j];
        }
    }
    for i in 0..n2 {
        for j in 0..n2 {
            a[(n1 + i) * n + (n1 + j)] = second.a[i * n2 + j];
        }
        for j in 0..n1 {
            a[(n1 + i) * n + j] = second.b[i] * first.c[j];
        }
    }
    let mut b = vec![0.0; n];
    b[..n1].copy_from_slice(&first.b);
    for i in 0..n2 {
        b[n1 + i] = second.b[i] * first.d;
    }
    let mut c = vec![0.0; n];
    for j in 0..n1 {
        c[j] = second.d * first.c[j];
    }
    c[n1..].copy_from_slice(&second.c);
    StateSpaceBlock {
        a,
        b,
        c,
        d: second.d * first.d,
        state: vec![0.0; n],
        n,
    }
}

/// Realize a product of biquad sections as one series block; an empty chain
/// is static unity gain.
pub fn realize_chain(sections: &[BiquadSection]) -> Result<StateSpaceBlock, SimError> {
    let mut acc = StateSpaceBlock {
        a: vec![],
        b: vec![],
        c: vec![],
        d: 1.0,
        state: vec![],
        n: 0,
    };
    for section in sections {
        let tf = section
            .to_transfer_function()
            .map_err(|_| SimError::ImproperTransferFunction)?;
        let block = realize(&tf)?;
        acc = series(&acc, &block);
    }
    Ok(acc)
}

/// Delay line with zero-filled history and integer-sample taps.
#[derive(Debug, Clone)]
pub struct DelayLine {
    buf: Vec<f64>,
    head: usize,
    pushes: usize,
    max_lag: usize,
}

impl DelayLine {
    /// `length_seconds` is the longest lag that will be read; every tap lag
    /// must be an integer multiple of `dt` within 1e-9 relative.
    pub fn new(dt: f64, length_seconds: f64, tap_lags: &[f64]) -> Result<Self, SimError> {
        let mut max_lag = 0usize;
        for &lag in tap_lags {
            if lag < 0.0 || lag > length_seconds * (1.0 + 1e-12) {
                return Err(SimError::BadTap(format!(
                    "tap lag {lag} outside [0, {length_seconds}]"
                )));
            }
            let samples = lag / dt;
            if (samples - samples.round()).abs() > 1e-9 * samples.max(1.0) {
                return Err(SimError::BadTap(format!(
                    "tap lag {lag} is not an integer multiple of dt = {dt}"
                )));
            }
            max_lag = max_lag.max(samples.round() as usize);
        }
        Ok(Self {
            buf: vec![0.0; max_lag + 2],
            head: 0,
            pushes: 0,
            max_lag,
        })
    }

    pub fn push(&mut self, v: f64) {
        self.buf[self.head] = v;
        self.head = (self.head + 1) % self.buf.len();
        self.pushes += 1;
    }

    /// Sample pushed `lag` pushes ago (0 = most recent); zero before start.
    pub fn read_lag(&self, lag: usize) -> f64 {
        debug_assert!(lag <= self.max_lag + 1);
        if lag >= self.pushes {
            return 0.0;
        }
        let idx = (self.head + self.buf.len() - 1 - lag) % self.buf.len();
        self.buf[idx]
    }
}

/// Exogenous reference signal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reference {
    Zero,
    Sine { amplitude: f64, omega: f64 },
    Triangle { amplitude: f64, period: f64 },
}

impl Reference {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            Reference::Zero => 0.0,
            Reference::Sine { amplitude, omega } => amplitude * (omega * t).sin(),
            Reference::Triangle { amplitude, period } => triangular_wave(amplitude, period, t),
        }
    }

    pub fn amplitude(&self) -> f64 {
        match *self {
            Reference::Zero => 0.0,
            Reference::Sine { amplitude, .. } | Reference::Triangle { amplitude, .. } => amplitude,
        }
    }
}

/// Odd-symmetric triangular wave: zero at `t = 0`, peak `+amplitude` at a
/// quarter period.
pub fn triangular_wave(amplitude: f64, period: f64, t: f64) -> f64 {
    debug_assert!(period > 0.0);
    let phase = (t / period).rem_euclid(1.0);
    let unit = if phase < 0.25 {
        4.0 * phase
    } else if phase < 0.75 {
        2.0 - 4.0 * phase
    } else {
        4.0 * phase - 4.0
    };
    amplitude * unit
}

/// Sampled closed-loop run: reference, plant output, tracking error and
/// controller output at `t = k·dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub dt: f64,
    pub reference: Vec<f64>,
    pub output: Vec<f64>,
    pub error: Vec<f64>,
    pub control: Vec<f64>,
}

impl SimulationTrace {
    pub fn len(&self) -> usize {
        self.reference.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reference.is_empty()
    }

    /// CSV with a fixed 17-significant-digit decimal format.
    pub fn to_csv(&self, config_hash: &str) -> String {
        let mut out = String::with_capacity(self.len() * 80 + 64);
        out.push_str(&format!("# config_hash {config_hash}\n"));
        out.push_str("t,reference,output,error,control\n");
        for k in 0..self.len() {
            out.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                k as f64 * self.dt,
                self.reference[k],
                self.output[k],
                self.error[k],
                self.control[k]
            ));
        }
        out
    }
}

/// Tracking-error statistics over one complete period window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeriodMetrics {
    pub index: usize,
    pub rms_error: f64,
    pub peak_error: f64,
}

/// Per-period RMS and peak tracking error over every complete period.
pub fn per_period_error_metrics(
    trace: &SimulationTrace,
    period: f64,
) -> Result<Vec<PeriodMetrics>, SimError> {
    let total = trace.len() as f64 * trace.dt;
    if !(period > 0.0) || total < 2.0 * period {
        return Err(SimError::TraceTooShort);
    }
    let periods = (total / period).floor() as usize;
    let mut out = Vec::with_capacity(periods);
    for p in 0..periods {
        let start = ((p as f64) * period / trace.dt).round() as usize;
        let end = (((p + 1) as f64) * period / trace.dt).round() as usize;
        let end = end.min(trace.len());
        if end <= start {
            break;
        }
        let window = &trace.error[start..end];
        let peak = window.iter().fold(0.0f64, |m, &e| m.max(e.abs()));
        let rms = (window.iter().map(|&e| e * e).sum::<f64>() / window.len() as f64).sqrt();
        out.push(PeriodMetrics {
            index: p,
            rms_error: rms,
            peak_error: peak,
        });
    }
    Ok(out)
}

/// Shrink `dt` until every required lag is an integer number of samples.
fn adjust_dt(dt_request: f64, lags: &[f64]) -> Result<f64, SimError> {
    if !(dt_request > 0.0) {
        return Err(SimError::BadTimeStep(format!(
            "dt must be positive, got {dt_request}"
        )));
    }
    let positive: Vec<f64> = lags.iter().copied().filter(|&l| l > 0.0).collect();
    if positive.is_empty() {
        return Ok(dt_request);
    }
    let base = positive[0];
    let divides = |dt: f64| {
        positive.iter().all(|&lag| {
            let s = lag / dt;
            (s - s.round()).abs() <= 1e-9 * s.max(1.0)
        })
    };
    let mut n = (base / dt_request - 1e-12).ceil().max(1.0) as u64;
    let n_limit = n * 10_000;
    while n <= n_limit {
        let dt = base / n as f64;
        if divides(dt) {
            return Ok(dt);
        }
        n += 1;
    }
    Err(SimError::BadTimeStep(format!(
        "no step <= {dt_request} makes all delay taps integer-sample ({positive:?})"
    )))
}

struct Rk4Scratch {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Scratch {
    fn new(n: usize) -> Self {
        Self {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }
}

/// Simulate the closed loop: plant under unity negative feedback, controller
/// output `u = e + b_p[w delayed by τ_d-τ_q-τ_b]` where `w` is the `q_p`
/// filter driven by `e + w delayed by τ_d-τ_q`.
///
/// Zero initial state, zero-filled delay history, fixed step. The requested
/// `dt` is shrunk so both tap lags (and the plant input delay, if any) are
/// integer sample counts. Diverging runs abort with the partial trace
/// attached.
pub fn simulate(
    plant: &TransferFunction,
    ctrl: &RepetitiveController,
    reference: &Reference,
    duration: f64,
    dt_request: f64,
) -> Result<SimulationTrace, SimError> {
    if duration < 2.0 * ctrl.tau_d {
        return Err(SimError::DurationTooShort);
    }
    if plant.delay() < 0.0 {
        // A pure advance is controller algebra, never a causal plant.
        return Err(SimError::ImproperTransferFunction);
    }
    let lag_loop = ctrl.tau_d - ctrl.tau_q;
    let lag_b = ctrl.tau_d - ctrl.tau_q - ctrl.tau_b;
    let dt = adjust_dt(dt_request, &[lag_loop, lag_b, plant.delay()])?;
    if dt < dt_request / 10_000.0 {
        return Err(SimError::BadTimeStep(format!(
            "adjusted step {dt} is pathologically small vs requested {dt_request}"
        )));
    }

    let rational_plant = TransferFunction::new(plant.num().to_vec(), plant.den().to_vec(), 0.0)
        .expect("valid by construction");
    let plant_block = realize(&rational_plant)?;
    let q_block = realize_chain(&ctrl.qp_sections)?;
    let b_block = realize_chain(&ctrl.bp_sections)?;
    if (1.0 + plant_block.d).abs() < 1e-12 {
        return Err(SimError::AlgebraicLoop);
    }

    let n_loop = (lag_loop / dt).round() as usize;
    let n_b = (lag_b / dt).round() as usize;
    let n_plant_delay = (plant.delay() / dt).round() as usize;
    let mut w_line = DelayLine::new(dt, lag_loop, &[lag_loop, lag_b])?;
    let mut u_line = (n_plant_delay > 0)
        .then(|| DelayLine::new(dt, plant.delay(), &[plant.delay()]))
        .transpose()?;

    let steps = (duration / dt).round() as usize;
    let mut trace = SimulationTrace {
        dt,
        reference: Vec::with_capacity(steps),
        output: Vec::with_capacity(steps),
        error: Vec::with_capacity(steps),
        control: Vec::with_capacity(steps),
    };

    let (np, nq, nb) = (plant_block.n, q_block.n, b_block.n);
    let mut xp = vec![0.0; np];
    let mut xq = vec![0.0; nq];
    let mut xb = vec![0.0; nb];
    let mut sp = Rk4Scratch::new(np);
    let mut sq = Rk4Scratch::new(nq);
    let mut sb = Rk4Scratch::new(nb);

    let amp = reference.amplitude();
    let blow_up = if amp > 0.0 { 1e6 * amp } else { f64::INFINITY };

    // Delayed-signal samples for the three RK4 substep positions: exact
    // stored samples at the endpoints, their average at the midpoint. After
    // the current w sample is pushed, "lag n" addresses time t - n·dt. Every
    // tap lag is at least one sample (the advances are strictly smaller than
    // the period delay), so n - 1 cannot underflow.
    let tap = |line: &DelayLine, n: usize, sigma: usize| -> f64 {
        debug_assert!(n >= 1);
        match sigma {
            0 => line.read_lag(n),
            1 => 0.5 * (line.read_lag(n) + line.read_lag(n - 1)),
            _ => line.read_lag(n - 1),
        }
    };

    for k in 0..steps {
        let t = k as f64 * dt;

        // Outputs at the step start; taps are read before this step's write.
        let r0 = reference.eval(t);
        let w_loop_t = pre_push_lag(&w_line, n_loop);
        let w_b_t = pre_push_lag(&w_line, n_b);
        let bb0 = b_block.output(&xb, w_b_t);
        let (y0, e0, u0) = if let Some(line) = &u_line {
            let u_del = pre_push_lag(line, n_plant_delay);
            let y = plant_block.output(&xp, u_del);
            let e = r0 - y;
            (y, e, e + bb0)
        } else {
            // y = (C·x + D·(r + bb)) / (1 + D) resolves the feedthrough loop.
            let y =
                (plant_block.output(&xp, 0.0) + plant_block.d * (r0 + bb0)) / (1.0 + plant_block.d);
            let e = r0 - y;
            (y, e, e + bb0)
        };
        let w0 = q_block.output(&xq, e0 + w_loop_t);
        w_line.push(w0);
        if let Some(line) = &mut u_line {
            line.push(u0);
        }

        trace.reference.push(r0);
        trace.output.push(y0);
        trace.error.push(e0);
        trace.control.push(u0);

        if y0.abs() > blow_up {
            return Err(SimError::UnstableSimulation { t, trace });
        }

        // One RK4 step of the combined block states.
        let derivs = |xp_: &[f64],
                      xq_: &[f64],
                      xb_: &[f64],
                      sigma: usize,
                      dp: &mut [f64],
                      dq: &mut [f64],
                      db: &mut [f64]| {
            let tt = t + 0.5 * dt * sigma as f64;
            let r = reference.eval(tt);
            let wl = tap(&w_line, n_loop, sigma);
            let wb = tap(&w_line, n_b, sigma);
            let bb = b_block.output(xb_, wb);
            let (e, u_plant) = if let Some(line) = &u_line {
                let u_del = tap(line, n_plant_delay, sigma);
                let y = plant_block.output(xp_, u_del);
                (r - y, u_del)
            } else {
                let y = (plant_block.output(xp_, 0.0) + plant_block.d * (r + bb))
                    / (1.0 + plant_block.d);
                (r - y, (r - y) + bb)
            };
            plant_block.derivative(xp_, u_plant, dp);
            q_block.derivative(xq_, e + wl, dq);
            b_block.derivative(xb_, wb, db);
        };

        derivs(&xp, &xq, &xb, 0, &mut sp.k1, &mut sq.k1, &mut sb.k1);
        half_step(&xp, &sp.k1, dt, &mut sp.tmp);
        half_step(&xq, &sq.k1, dt, &mut sq.tmp);
        half_step(&xb, &sb.k1, dt, &mut sb.tmp);
        derivs(
            &sp.tmp, &sq.tmp, &sb.tmp, 1, &mut sp.k2, &mut sq.k2, &mut sb.k2,
        );
        half_step(&xp, &sp.k2, dt, &mut sp.tmp);
        half_step(&xq, &sq.k2, dt, &mut sq.tmp);
        half_step(&xb, &sb.k2, dt, &mut sb.tmp);
        derivs(
            &sp.tmp, &sq.tmp, &sb.tmp, 1, &mut sp.k3, &mut sq.k3, &mut sb.k3,
        );
        full_step(&xp, &sp.k3, dt, &mut sp.tmp);
        full_step(&xq, &sq.k3, dt, &mut sq.tmp);
        full_step(&xb, &sb.k3, dt, &mut sb.tmp);
        derivs(
            &sp.tmp, &sq.tmp, &sb.tmp, 2, &mut sp.k4, &mut sq.k4, &mut sb.k4,
        );

        rk4_update(&mut xp, &sp, dt);
        rk4_update(&mut xq, &sq, dt);
        rk4_update(&mut xb, &sb, dt);
    }
    Ok(trace)
}

/// Lag read before the current sample has been pushed: lag n relative to the
/// upcoming push is lag n-1 relative to the last completed push.
fn pre_push_lag(line: &DelayLine, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        line.read_lag(n - 1)
    }
}

fn half_step(x: &[f64], k: &[f64], dt: f64, out: &mut [f64]) {
    for i in 0..x.len() {
        out[i] = x[i] + 0.5 * dt * k[i];
    }
}

fn full_step(x: &[f64], k: &[f64], dt: f64, out: &mut [f64]) {
    for i in 0..x.len() {
        out[i] = x[i] + dt * k[i];
    }
}

fn rk4_update(x: &mut [f64], s: &Rk4Scratch, dt: f64) {
    for i in 0..x.len() {
        x[i] += dt / 6.0 * (s.k1[i] + 2.0 * s.k2[i] + 2.0 * s.k3[i] + s.k4[i]);
    }
}
