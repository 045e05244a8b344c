//! Per-frequency point-condition solver.
//!
//! At one frequency with weights `(|W_S|, |W_T|)`, the robust-performance
//! boundary `|W_S| + |W_T||L| = |1+L|` is swept in the loop-gain plane: for
//! each phase `θ_L` the cosine rule gives a quadratic in `|L|`, every positive
//! root is mapped back through the loop equation to a filter target, and the
//! target is resolved into the two chosen controller coefficients. The result
//! is a closed curve in the parameter plane whose one side satisfies the
//! strict inequality.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::freqresp::{eval_tf, FreqError, TransferFunction};
use crate::repcon::{BiquadSection, RepconError, RepetitiveController, Slot, REL_FLOOR};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PointCondError {
    #[error("degenerate back-solve at omega = {omega} rad/s: {what}")]
    DegenerateBackSolve { omega: f64, what: &'static str },
    #[error("singular 2x2 coefficient system at omega = {omega} rad/s: {what}")]
    SingularSystem { omega: f64, what: &'static str },
    #[error("solved parameters fall outside the selection box")]
    NoSolution,
    #[error("no point-condition solutions at omega = {omega} rad/s")]
    EmptyCurve { omega: f64 },
    #[error("invalid parameter selection: {0}")]
    InvalidSelection(String),
    #[error(transparent)]
    Loop(#[from] RepconError),
    #[error(transparent)]
    Plant(#[from] FreqError),
}

/// Which repetitive-controller filter holds the two designed coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetFilter {
    Qp,
    Bp,
}

/// Root branch of the cosine-rule quadratic (sign in front of the square
/// root).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Branch {
    Plus,
    Minus,
}

/// Maximal `θ_L` range over which the quadratic has real solutions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaInterval {
    pub lo: f64,
    pub hi: f64,
}

/// One axis of the parameter-plane box; `log` requests logarithmic cell
/// spacing over it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisRange {
    pub lo: f64,
    pub hi: f64,
    #[serde(default)]
    pub log: bool,
}

/// Search rectangle in the plane of the two designed coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamBox {
    pub x: AxisRange,
    pub y: AxisRange,
}

impl ParamBox {
    pub fn contains(&self, p1: f64, p2: f64) -> bool {
        p1 >= self.x.lo && p1 <= self.x.hi && p2 >= self.y.lo && p2 <= self.y.hi
    }
}

/// Ties a third coefficient slot to one of the free slots (`mirror` always
/// copies `source`), e.g. `n0 ≡ d0` for unity-dc-gain low-pass structures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tie {
    pub mirror: Slot,
    pub source: Slot,
}

/// Names the two designed coefficients and where they live.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSelection {
    pub target: TargetFilter,
    pub section_index: usize,
    pub free: (Slot, Slot),
    pub tie: Option<Tie>,
    pub bounds: ParamBox,
}

impl ParameterSelection {
    pub fn validate(&self, ctrl: &RepetitiveController) -> Result<(), PointCondError> {
        if self.free.0 == self.free.1 {
            return Err(PointCondError::InvalidSelection(
                "the two free slots must be distinct".to_string(),
            ));
        }
        if let Some(tie) = self.tie {
            if tie.source != self.free.0 && tie.source != self.free.1 {
                return Err(PointCondError::InvalidSelection(
                    "tie source must be one of the free slots".to_string(),
                ));
            }
            if tie.mirror == self.free.0 || tie.mirror == self.free.1 {
                return Err(PointCondError::InvalidSelection(
                    "tie mirror must not be a free slot".to_string(),
                ));
            }
        }
        let sections = self.sections_of(ctrl);
        if self.section_index >= sections.len() {
            return Err(PointCondError::InvalidSelection(format!(
                "section index {} out of range ({} sections)",
                self.section_index,
                sections.len()
            )));
        }
        let b = &self.bounds;
        let positive_area = b.x.lo < b.x.hi && b.y.lo < b.y.hi;
        let log_ok = (!b.x.log || b.x.lo > 0.0) && (!b.y.log || b.y.lo > 0.0);
        if !positive_area || !log_ok {
            return Err(PointCondError::InvalidSelection(
                "selection box must have positive area (and positive bounds on log axes)"
                    .to_string(),
            ));
        }
        Ok(())
    }

    pub fn sections_of<'c>(&self, ctrl: &'c RepetitiveController) -> &'c [BiquadSection] {
        match self.target {
            TargetFilter::Qp => &ctrl.qp_sections,
            TargetFilter::Bp => &ctrl.bp_sections,
        }
    }

    /// Copy of `base` with the two free slots (and the tied mirror) set.
    pub fn apply_to_section(&self, base: &BiquadSection, p1: f64, p2: f64) -> BiquadSection {
        let mut section = *base;
        section.set(self.free.0, p1);
        section.set(self.free.1, p2);
        if let Some(tie) = self.tie {
            let v = section.get(tie.source);
            section.set(tie.mirror, v);
        }
        section
    }

    /// Controller with the designed coefficients set to `(p1, p2)`.
    pub fn instantiate(
        &self,
        template: &RepetitiveController,
        p1: f64,
        p2: f64,
    ) -> RepetitiveController {
        let mut ctrl = template.clone();
        let sections = match self.target {
            TargetFilter::Qp => &mut ctrl.qp_sections,
            TargetFilter::Bp => &mut ctrl.bp_sections,
        };
        sections[self.section_index] = self.apply_to_section(&sections[self.section_index], p1, p2);
        ctrl
    }
}

/// Discriminant of the cosine-rule quadratic: real solutions for `|L|` exist
/// iff this is nonnegative.
///
/// Expanding `(|W_S| + |W_T|x)² = x² + 1 + 2x·cosθ` gives the quarter
/// discriminant `cos²θ + ws² + wt² - 2·ws·wt·cosθ - 1`.
pub fn discriminant(ws: f64, wt: f64, theta: f64) -> f64 {
    let c = theta.cos();
    c * c + ws * ws + wt * wt - 2.0 * ws * wt * c - 1.0
}

/// Positive roots of the quadratic, labeled with the square-root branch they
/// came from. A double root (discriminant zero) appears on both branches.
pub fn solve_loop_magnitude_branches(ws: f64, wt: f64, theta: f64) -> Vec<(Branch, f64)> {
    let c = theta.cos();
    let a = 1.0 - wt * wt;
    let half_b = c - ws * wt;
    let cc = 1.0 - ws * ws;
    let mut out = Vec::with_capacity(2);
    if a.abs() < 1e-12 {
        // |W_T| = 1 degenerates to a linear equation.
        if half_b.abs() < 1e-300 {
            return out;
        }
        let x = -cc / (2.0 * half_b);
        if x > 0.0 {
            let branch = if half_b > 0.0 {
                Branch::Plus
            } else {
                Branch::Minus
            };
            out.push((branch, x));
        }
        return out;
    }
    let delta = discriminant(ws, wt, theta);
    if delta < 0.0 {
        return out;
    }
    let sq = delta.sqrt();
    // Evaluate the root that does not cancel, recover the other from the
    // product of roots c/a.
    let (x_plus, x_minus) = if half_b >= 0.0 {
        let xm = (-half_b - sq) / a;
        let xp = if xm != 0.0 {
            cc / (a * xm)
        } else {
            (-half_b + sq) / a
        };
        (xp, xm)
    } else {
        let xp = (-half_b + sq) / a;
        let xm = if xp != 0.0 {
            cc / (a * xp)
        } else {
            (-half_b - sq) / a
        };
        (xp, xm)
    };
    if x_plus > 0.0 {
        out.push((Branch::Plus, x_plus));
    }
    if x_minus > 0.0 {
        out.push((Branch::Minus, x_minus));
    }
    out
}

/// Positive admissible `|L|` values at `(ws, wt, θ)`; empty when none exist.
pub fn solve_loop_magnitude(ws: f64, wt: f64, theta: f64) -> Vec<f64> {
    solve_loop_magnitude_branches(ws, wt, theta)
        .into_iter()
        .map(|(_, x)| x)
        .collect()
}

fn bisect_boundary(ws: f64, wt: f64, mut neg: f64, mut pos: f64) -> f64 {
    while (pos - neg).abs() > 1e-10 {
        let mid = 0.5 * (neg + pos);
        if discriminant(ws, wt, mid) >= 0.0 {
            pos = mid;
        } else {
            neg = mid;
        }
    }
    pos
}

/// Intervals narrower than this are measure-zero touch points, not usable
/// arcs. The width also exceeds the rounding plateau of `cos²θ` near ±1
/// (about 1e-8 rad), which would otherwise leak phantom arcs through the
/// degenerate zero-weight case.
const MIN_ARC_WIDTH: f64 = 1e-7;

/// Maximal subintervals of `[0, 2π]` where the discriminant is nonnegative,
/// endpoints refined by bisection. Intervals that collapse to a point are
/// dropped.
pub fn active_theta_intervals(ws: f64, wt: f64, resolution: usize) -> Vec<ThetaInterval> {
    let n = resolution.max(16);
    let step = TWO_PI / n as f64;
    let theta_at = |i: usize| i as f64 * step;
    let active: Vec<bool> = (0..=n)
        .map(|i| discriminant(ws, wt, theta_at(i)) >= 0.0)
        .collect();
    let mut intervals = Vec::new();
    let mut run_start: Option<usize> = None;
    for i in 0..=n + 1 {
        let on = i <= n && active[i];
        match (run_start, on) {
            (None, true) => run_start = Some(i),
            (Some(s), false) => {
                let e = i - 1;
                let lo = if s == 0 {
                    0.0
                } else {
                    bisect_boundary(ws, wt, theta_at(s - 1), theta_at(s))
                };
                let hi = if e == n {
                    TWO_PI
                } else {
                    bisect_boundary(ws, wt, theta_at(e + 1), theta_at(e))
                };
                if hi - lo >= MIN_ARC_WIDTH {
                    intervals.push(ThetaInterval { lo, hi });
                }
                run_start = None;
            }
            _ => {}
        }
    }
    intervals
}

/// Filter target for a designed `q_p`: solve the loop equation for
/// `q_p(jω)` given the desired loop gain and the (known) compensator value
/// `b = b(jω)`.
///
/// `q_p = (L-G)/(L - G(1-b)) · e^{(τ_d-τ_q)jω}`.
pub fn backsolve_qp_target(
    l: Complex64,
    g: Complex64,
    b: Complex64,
    tau_d: f64,
    tau_q: f64,
    omega: f64,
) -> Result<Complex64, PointCondError> {
    let one = Complex64::new(1.0, 0.0);
    let reduced = g * (one - b);
    let den = l - reduced;
    if den.norm() < REL_FLOOR * l.norm().max(reduced.norm()) {
        return Err(PointCondError::DegenerateBackSolve {
            omega,
            what: "L - G(1-b) ~ 0",
        });
    }
    Ok((l - g) / den * Complex64::from_polar(1.0, (tau_d - tau_q) * omega))
}

/// Filter target for a designed `b_p`, given the (known) full low-pass value
/// `q = q(jω)`.
///
/// `b_p = ((L-G)/G) · (1 - q·e^{-jωτ_d})/(q·e^{-jωτ_d}) · e^{-jωτ_b}`; the
/// division by `G` makes the expression consistent with the loop equation,
/// which the round-trip tests certify.
pub fn backsolve_bp_target(
    l: Complex64,
    g: Complex64,
    q: Complex64,
    tau_d: f64,
    tau_b: f64,
    omega: f64,
) -> Result<Complex64, PointCondError> {
    if g.norm() < 1e-300 {
        return Err(PointCondError::DegenerateBackSolve {
            omega,
            what: "plant response ~ 0",
        });
    }
    let qz = q * Complex64::from_polar(1.0, -tau_d * omega);
    if qz.norm() < 1e-300 {
        return Err(PointCondError::DegenerateBackSolve {
            omega,
            what: "q(jω)e^{-jωτ_d} ~ 0",
        });
    }
    let one = Complex64::new(1.0, 0.0);
    Ok((l - g) / g * ((one - qz) / qz) * Complex64::from_polar(1.0, -tau_b * omega))
}

/// Basis factor of one coefficient slot in the linear equation
/// `N(jω) - t·D(jω) = 0`.
fn slot_basis(slot: Slot, t: Complex64, omega: f64) -> Complex64 {
    let w2 = omega * omega;
    match slot {
        Slot::N2 => Complex64::new(-w2, 0.0),
        Slot::N1 => Complex64::new(0.0, omega),
        Slot::N0 => Complex64::new(1.0, 0.0),
        Slot::D2 => t * w2,
        Slot::D1 => t * Complex64::new(0.0, -omega),
        Slot::D0 => -t,
    }
}

/// Solve the complex equation `section(jω) = target` for the two free
/// coefficients of the selected section, dividing the response of the other
/// sections out of the target first.
///
/// The equation is linear in the six coefficients, so with any tie applied it
/// reduces to a real 2x2 system. When `clip_to_box` is set, solutions outside
/// the selection bounds are reported as `NoSolution`.
pub fn solve_two_params(
    selection: &ParameterSelection,
    sections: &[BiquadSection],
    target: Complex64,
    omega: f64,
    clip_to_box: bool,
) -> Result<(f64, f64), PointCondError> {
    let idx = selection.section_index;
    if idx >= sections.len() {
        return Err(PointCondError::InvalidSelection(format!(
            "section index {idx} out of range"
        )));
    }
    let mut others = Complex64::new(1.0, 0.0);
    for (i, s) in sections.iter().enumerate() {
        if i != idx {
            others *= s.eval(omega);
        }
    }
    if !others.is_finite() || others.norm() < 1e-300 {
        return Err(PointCondError::SingularSystem {
            omega,
            what: "remaining sections have no invertible response",
        });
    }
    let t = target / others;

    let (f1, f2) = selection.free;
    let mut c1 = slot_basis(f1, t, omega);
    let mut c2 = slot_basis(f2, t, omega);
    if let Some(tie) = selection.tie {
        let mirrored = slot_basis(tie.mirror, t, omega);
        if tie.source == f1 {
            c1 += mirrored;
        } else {
            c2 += mirrored;
        }
    }
    let base = &sections[idx];
    let mut rhs = Complex64::new(0.0, 0.0);
    for slot in Slot::ALL {
        if slot == f1 || slot == f2 || selection.tie.map(|t| t.mirror) == Some(slot) {
            continue;
        }
        rhs -= base.get(slot) * slot_basis(slot, t, omega);
    }

    let det = c1.re * c2.im - c2.re * c1.im;
    let scale = c1.norm() * c2.norm();
    if det.abs() <= 1e-12 * scale.max(1e-300) {
        return Err(PointCondError::SingularSystem {
            omega,
            what: "free slots span a rank-deficient direction for this target",
        });
    }
    let p1 = (c2.im * rhs.re - c2.re * rhs.im) / det;
    let p2 = (c1.re * rhs.im - c1.im * rhs.re) / det;
    if !p1.is_finite() || !p2.is_finite() {
        return Err(PointCondError::SingularSystem {
            omega,
            what: "non-finite solution",
        });
    }

    // Residual guard against ill-conditioned solves.
    let solved = selection.apply_to_section(base, p1, p2);
    let w2 = omega * omega;
    let nval = Complex64::new(solved.n0 - solved.n2 * w2, solved.n1 * omega);
    let dval = Complex64::new(solved.d0 - solved.d2 * w2, solved.d1 * omega);
    let resid = (nval - t * dval).norm();
    if resid > 1e-9 * (nval.norm() + (t * dval).norm()) + 1e-300 {
        return Err(PointCondError::SingularSystem {
            omega,
            what: "residual too large (ill-conditioned system)",
        });
    }

    if clip_to_box && !selection.bounds.contains(p1, p2) {
        return Err(PointCondError::NoSolution);
    }
    Ok((p1, p2))
}

/// One solved boundary point: the phase sample, its branch, the loop gain
/// placed exactly on the robust-performance boundary, and the two solved
/// coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub theta: f64,
    pub branch: Branch,
    pub loop_gain: Complex64,
    pub p1: f64,
    pub p2: f64,
}

/// Full trace of a point-condition curve at one frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct TracedCurve {
    /// Emitted points ordered by (branch, θ).
    pub points: Vec<CurvePoint>,
    /// Closed polylines in the parameter plane, assembled from the branches
    /// of each active θ arc (plus branch forward, minus branch back).
    pub rings: Vec<Vec<[f64; 2]>>,
    /// Points dropped because a back-solve or coefficient solve failed.
    pub skipped: usize,
    pub intervals: Vec<ThetaInterval>,
}

struct ArcPoints {
    plus: Vec<CurvePoint>,
    minus: Vec<CurvePoint>,
    covers_full_circle: bool,
}

/// Sweep the active θ range at `(ws, wt, ω)` and map every admissible loop
/// gain to the two designed coefficients.
pub fn trace_point_condition_curve(
    plant: &TransferFunction,
    ctrl_template: &RepetitiveController,
    selection: &ParameterSelection,
    ws: f64,
    wt: f64,
    omega: f64,
    resolution: usize,
) -> Result<TracedCurve, PointCondError> {
    selection.validate(ctrl_template)?;
    let g = eval_tf(plant, omega)?;
    let fixed_other = match selection.target {
        TargetFilter::Qp => ctrl_template.b_value(omega),
        TargetFilter::Bp => ctrl_template.q_value(omega),
    };
    let sections = selection.sections_of(ctrl_template);

    let resolution = resolution.max(16);
    let step = TWO_PI / resolution as f64;
    let intervals = active_theta_intervals(ws, wt, resolution);

    let mut arcs = Vec::with_capacity(intervals.len());
    let mut skipped = 0usize;
    for itv in &intervals {
        let mut thetas = vec![itv.lo];
        let mut i = (itv.lo / step).floor() as usize + 1;
        while (i as f64) * step < itv.hi - 1e-12 {
            let th = i as f64 * step;
            if th > itv.lo + 1e-12 {
                thetas.push(th);
            }
            i += 1;
        }
        thetas.push(itv.hi);

        let mut plus = Vec::new();
        let mut minus = Vec::new();
        for &theta in &thetas {
            for (branch, x) in solve_loop_magnitude_branches(ws, wt, theta) {
                let l = Complex64::from_polar(x, theta);
                let solved = (match selection.target {
                    TargetFilter::Qp => backsolve_qp_target(
                        l,
                        g,
                        fixed_other,
                        ctrl_template.tau_d,
                        ctrl_template.tau_q,
                        omega,
                    ),
                    TargetFilter::Bp => backsolve_bp_target(
                        l,
                        g,
                        fixed_other,
                        ctrl_template.tau_d,
                        ctrl_template.tau_b,
                        omega,
                    ),
                })
                .and_then(|target| solve_two_params(selection, sections, target, omega, false));
                // Admission check: every emitted point must satisfy the
                // cosine-rule identity |W_S| + |W_T||L| = |1+L|. Rounding at
                // arc endpoints can fabricate roots that do not.
                let identity_ok = {
                    let rhs = (Complex64::new(1.0, 0.0) + l).norm();
                    (ws + wt * x - rhs).abs() <= 1e-9 * rhs.max(1.0)
                };
                match solved {
                    Ok((p1, p2)) if identity_ok => {
                        let point = CurvePoint {
                            theta,
                            branch,
                            loop_gain: l,
                            p1,
                            p2,
                        };
                        match branch {
                            Branch::Plus => plus.push(point),
                            Branch::Minus => minus.push(point),
                        }
                    }
                    _ => skipped += 1,
                }
            }
        }
        arcs.push(ArcPoints {
            plus,
            minus,
            covers_full_circle: itv.lo <= 1e-12 && itv.hi >= TWO_PI - 1e-12,
        });
    }

    // An active range touching both 0 and 2π is one arc across the seam.
    if arcs.len() >= 2
        && intervals.first().map(|i| i.lo <= 1e-12) == Some(true)
        && intervals.last().map(|i| i.hi >= TWO_PI - 1e-12) == Some(true)
    {
        let first = arcs.remove(0);
        let last = arcs.last_mut().unwrap();
        last.plus.extend(first.plus);
        last.minus.extend(first.minus);
    }

    let mut rings = Vec::new();
    for arc in &arcs {
        if arc.covers_full_circle {
            // Branches never merge; each closes on itself across the seam.
            for branch_pts in [&arc.plus, &arc.minus] {
                if branch_pts.len() >= 3 {
                    rings.push(branch_pts.iter().map(|p| [p.p1, p.p2]).collect());
                }
            }
        } else {
            let mut ring: Vec<[f64; 2]> = arc.plus.iter().map(|p| [p.p1, p.p2]).collect();
            ring.extend(arc.minus.iter().rev().map(|p| [p.p1, p.p2]));
            if ring.len() >= 3 {
                rings.push(ring);
            }
        }
    }

    let mut points = Vec::new();
    for arc in &arcs {
        points.extend(arc.plus.iter().copied());
    }
    for arc in &arcs {
        points.extend(arc.minus.iter().copied());
    }
    // Ring assembly may cross the 0/2π seam; the flat point list is sorted
    // strictly by (branch, θ).
    points.sort_by(|a, b| {
        a.branch
            .cmp(&b.branch)
            .then(a.theta.partial_cmp(&b.theta).unwrap())
    });
    if points.is_empty() {
        return Err(PointCondError::EmptyCurve { omega });
    }
    Ok(TracedCurve {
        points,
        rings,
        skipped,
        intervals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::repcon::robust_perf_value;
    use crate::testutil::{afm_controller, afm_plant, afm_selection, AFM_TAU_D};
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn discriminant_examples() {
        assert_abs_diff_eq!(discriminant(0.0, 0.0, PI), 0.0, epsilon = 1e-15);
        assert_relative_eq!(discriminant(0.5, 0.0, PI), 0.25, max_relative = 1e-15);
        // ws = 2, wt = 0: cos²θ + 3 > 0 everywhere.
        assert!(discriminant(2.0, 0.0, 1.234) > 0.0);
    }

    /// Sign of the discriminant agrees with the existence of real roots of
    /// the expanded quadratic found by an independent solver.
    #[test]
    fn discriminant_sign_matches_quadratic_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20_000 {
            let ws: f64 = rng.gen_range(0.0..10.0);
            let wt: f64 = rng.gen_range(0.0..2.0);
            let theta: f64 = rng.gen_range(0.0..2.0 * PI);
            let delta = discriminant(ws, wt, theta);
            if delta.abs() < 1e-9 {
                continue; // boundary: both verdicts legitimate under rounding
            }
            let c = theta.cos();
            let (a, b, cc) = (1.0 - wt * wt, 2.0 * (c - ws * wt), 1.0 - ws * ws);
            let has_real = if a.abs() < 1e-12 {
                b.abs() > 0.0
            } else {
                b * b - 4.0 * a * cc >= 0.0
            };
            assert_eq!(delta >= 0.0, has_real, "ws={ws} wt={wt} theta={theta}");
        }
    }

    #[test]
    fn loop_magnitude_examples() {
        let mut roots = solve_loop_magnitude(0.5, 0.0, PI);
        roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(roots.len(), 2);
        assert_relative_eq!(roots[0], 0.5, max_relative = 1e-12);
        assert_relative_eq!(roots[1], 1.5, max_relative = 1e-12);

        let mut roots = solve_loop_magnitude(0.0, 0.5, PI);
        roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_relative_eq!(roots[0], 2.0 / 3.0, max_relative = 1e-12);
        assert_relative_eq!(roots[1], 2.0, max_relative = 1e-12);
        // |W_T·L| = |1+L| on the real axis: 0.5·(2/3) = |1 - 2/3|.
        assert_relative_eq!(
            0.5 * roots[0],
            (1.0f64 - 2.0 / 3.0).abs(),
            max_relative = 1e-12
        );

        assert!(solve_loop_magnitude(0.0, 0.0, PI / 2.0).is_empty());
    }

    #[test]
    fn loop_magnitude_linear_when_wt_is_one() {
        // 2(cosπ - 0.5)x + (1 - 0.25) = 0 → x = 0.25.
        let roots = solve_loop_magnitude(0.5, 1.0, PI);
        assert_eq!(roots.len(), 1);
        assert_relative_eq!(roots[0], 0.25, max_relative = 1e-12);
        let x = roots[0];
        let lhs = 0.5 + 1.0 * x;
        let rhs = (x * x + 1.0 + 2.0 * x * PI.cos()).sqrt();
        assert_relative_eq!(lhs, rhs, max_relative = 1e-12);
    }

    /// Every root satisfies the cosine-rule equality.
    #[test]
    fn roots_satisfy_cosine_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20_000 {
            let ws: f64 = rng.gen_range(0.0..10.0);
            let wt: f64 = rng.gen_range(0.0..2.0);
            let theta: f64 = rng.gen_range(0.0..2.0 * PI);
            for x in solve_loop_magnitude(ws, wt, theta) {
                let l = Complex64::from_polar(x, theta);
                let lhs = ws + wt * x;
                let rhs = (Complex64::new(1.0, 0.0) + l).norm();
                assert!(
                    (lhs - rhs).abs() <= 1e-9 * rhs.max(1.0),
                    "ws={ws} wt={wt} θ={theta} x={x}"
                );
            }
        }
    }

    #[test]
    fn active_intervals_analytic_cases() {
        // ws = 0.5, wt = 0: Δ ≥ 0 ⇔ |cosθ| ≥ √3/2.
        let intervals = active_theta_intervals(0.5, 0.0, 4096);
        assert_eq!(intervals.len(), 3);
        let expect = [
            (0.0, PI / 6.0),
            (5.0 * PI / 6.0, 7.0 * PI / 6.0),
            (11.0 * PI / 6.0, 2.0 * PI),
        ];
        for (itv, (lo, hi)) in intervals.iter().zip(expect) {
            assert_abs_diff_eq!(itv.lo, lo, epsilon = 1e-8);
            assert_abs_diff_eq!(itv.hi, hi, epsilon = 1e-8);
        }
        // Measure-zero active set refines away.
        assert!(active_theta_intervals(0.0, 0.0, 2048).is_empty());
        // Δ > 0 everywhere.
        let full = active_theta_intervals(2.0, 0.0, 2048);
        assert_eq!(full.len(), 1);
        assert_abs_diff_eq!(full[0].lo, 0.0);
        assert_abs_diff_eq!(full[0].hi, 2.0 * PI, epsilon = 1e-12);
    }

    #[test]
    fn backsolve_qp_examples() {
        let one = Complex64::new(1.0, 0.0);
        // L = G: repetitive action unnecessary.
        let g = Complex64::new(0.3, -0.7);
        let q = backsolve_qp_target(g, g, one, 1e-3, 1e-4, 500.0).unwrap();
        assert_abs_diff_eq!(q.norm(), 0.0, epsilon = 1e-15);
        // G = 1, b = 1, L = 2, τ_d = τ_q: (2-1)/(2-0) = 0.5.
        let q = backsolve_qp_target(Complex64::new(2.0, 0.0), one, one, 1e-3, 1e-3, 500.0).unwrap();
        assert_relative_eq!(q.re, 0.5, max_relative = 1e-12);
        assert_abs_diff_eq!(q.im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn backsolve_bp_examples() {
        let one = Complex64::new(1.0, 0.0);
        let g = Complex64::new(-0.4, 0.9);
        let q = Complex64::new(0.8, 0.1);
        let b = backsolve_bp_target(g, g, q, 1e-3, 0.0, 500.0).unwrap();
        assert_abs_diff_eq!(b.norm(), 0.0, epsilon = 1e-15);
        // G = 1, q·e^{-jωτ_d} = 0.5, L = 2, τ_b = 0 → 1·(0.5/0.5) = 1.
        let omega = 700.0;
        let tau_d = 1e-3;
        let q_full = Complex64::new(0.5, 0.0) * Complex64::from_polar(1.0, tau_d * omega);
        let b =
            backsolve_bp_target(Complex64::new(2.0, 0.0), one, q_full, tau_d, 0.0, omega).unwrap();
        assert_relative_eq!(b.re, 1.0, max_relative = 1e-12);
        assert_abs_diff_eq!(b.im, 0.0, epsilon = 1e-12);
    }

    /// Back-solved targets substituted into the loop equation reproduce L.
    #[test]
    fn backsolve_round_trips_through_loop_equation() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let one = Complex64::new(1.0, 0.0);
        let mut done = 0;
        while done < 2000 {
            let g = Complex64::from_polar(rng.gen_range(0.1..10.0), rng.gen_range(0.0..2.0 * PI));
            let b = Complex64::from_polar(rng.gen_range(0.1..3.0), rng.gen_range(0.0..2.0 * PI));
            let l = Complex64::from_polar(rng.gen_range(0.1..10.0), rng.gen_range(0.0..2.0 * PI));
            let tau_d: f64 = rng.gen_range(1e-4..1e-2);
            let tau_q: f64 = rng.gen_range(0.0..tau_d / 4.0);
            let tau_b: f64 = rng.gen_range(0.0..tau_d / 4.0);
            let omega: f64 = rng.gen_range(1.0..1e5);

            // q_p designed, b known.
            if let Ok(qp) = backsolve_qp_target(l, g, b, tau_d, tau_q, omega) {
                let z = Complex64::from_polar(1.0, (-tau_d + tau_q) * omega);
                let den = one - qp * z;
                if den.norm() > 1e-6 {
                    let bp = b * Complex64::from_polar(1.0, -tau_b * omega);
                    let e_tot = Complex64::from_polar(1.0, (-tau_d + tau_q + tau_b) * omega);
                    let l_rec = g * (one + qp * bp * e_tot / den);
                    assert!(
                        (l_rec - l).norm() <= 1e-9 * l.norm(),
                        "q_p round trip failed: |Δ| = {}",
                        (l_rec - l).norm() / l.norm()
                    );
                    done += 1;
                }
            }

            // b_p designed, q known.
            let q = Complex64::from_polar(rng.gen_range(0.1..2.0), rng.gen_range(0.0..2.0 * PI));
            if let Ok(bp) = backsolve_bp_target(l, g, q, tau_d, tau_b, omega) {
                let qp = q * Complex64::from_polar(1.0, -tau_q * omega);
                let z = Complex64::from_polar(1.0, (-tau_d + tau_q) * omega);
                let den = one - qp * z;
                if den.norm() > 1e-6 {
                    let e_tot = Complex64::from_polar(1.0, (-tau_d + tau_q + tau_b) * omega);
                    let l_rec = g * (one + qp * bp * e_tot / den);
                    assert!(
                        (l_rec - l).norm() <= 1e-9 * l.norm(),
                        "b_p round trip failed: |Δ| = {}",
                        (l_rec - l).norm() / l.norm()
                    );
                }
            }
        }
    }

    #[test]
    fn two_param_solve_unity_dc_example() {
        let sel = afm_selection();
        let sections = [BiquadSection::new(0.0, 0.0, 1.0, 1.0, 1.0, 1.0)];
        // a0/( -1 + j·a1 + a0 ) = -j at ω = 1 → (a0, a1) = (1, 1).
        let (p1, p2) =
            solve_two_params(&sel, &sections, Complex64::new(0.0, -1.0), 1.0, false).unwrap();
        assert_relative_eq!(p1, 1.0, max_relative = 1e-12);
        assert_relative_eq!(p2, 1.0, max_relative = 1e-12);
        // Unity target is only achievable at dc.
        assert!(matches!(
            solve_two_params(&sel, &sections, Complex64::new(1.0, 0.0), 1.0, false),
            Err(PointCondError::SingularSystem { .. })
        ));
    }

    #[test]
    fn two_param_solve_recovers_forward_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let sel = ParameterSelection {
            target: TargetFilter::Qp,
            section_index: 0,
            free: (Slot::N0, Slot::D1),
            tie: None,
            bounds: ParamBox {
                x: AxisRange {
                    lo: -100.0,
                    hi: 100.0,
                    log: false,
                },
                y: AxisRange {
                    lo: -100.0,
                    hi: 100.0,
                    log: false,
                },
            },
        };
        for _ in 0..500 {
            let mut base = BiquadSection::new(
                rng.gen_range(0.5..2.0),
                rng.gen_range(0.5..2.0),
                0.0,
                rng.gen_range(0.5..2.0),
                0.0,
                rng.gen_range(0.5..2.0),
            );
            let p1 = rng.gen_range(-5.0..5.0);
            let p2 = rng.gen_range(0.5..5.0);
            base.set(Slot::N0, p1);
            base.set(Slot::D1, p2);
            let omega = rng.gen_range(0.1..10.0);
            let target = base.eval(omega);
            let (r1, r2) = solve_two_params(&sel, &[base], target, omega, false).unwrap();
            assert_relative_eq!(r1, p1, max_relative = 1e-9, epsilon = 1e-9);
            assert_relative_eq!(r2, p2, max_relative = 1e-9, epsilon = 1e-9);
        }
    }

    #[test]
    fn two_param_solve_divides_out_other_sections() {
        let sel = ParameterSelection {
            target: TargetFilter::Qp,
            section_index: 1,
            free: (Slot::N0, Slot::D1),
            tie: None,
            bounds: ParamBox {
                x: AxisRange {
                    lo: -100.0,
                    hi: 100.0,
                    log: false,
                },
                y: AxisRange {
                    lo: -100.0,
                    hi: 100.0,
                    log: false,
                },
            },
        };
        let first = BiquadSection::new(0.2, 0.3, 1.4, 0.0, 0.5, 1.0);
        let designed = BiquadSection::new(0.0, 1.0, 2.5, 1.0, 0.7, 3.0);
        let omega = 2.2;
        let target = first.eval(omega) * designed.eval(omega);
        let (p1, p2) = solve_two_params(&sel, &[first, designed], target, omega, false).unwrap();
        assert_relative_eq!(p1, 2.5, max_relative = 1e-9);
        assert_relative_eq!(p2, 0.7, max_relative = 1e-9);
    }

    #[test]
    fn box_clipping_reports_no_solution() {
        let mut sel = afm_selection();
        sel.bounds = ParamBox {
            x: AxisRange {
                lo: 10.0,
                hi: 20.0,
                log: false,
            },
            y: AxisRange {
                lo: 10.0,
                hi: 20.0,
                log: false,
            },
        };
        let sections = [BiquadSection::new(0.0, 0.0, 1.0, 1.0, 1.0, 1.0)];
        assert!(matches!(
            solve_two_params(&sel, &sections, Complex64::new(0.0, -1.0), 1.0, true),
            Err(PointCondError::NoSolution)
        ));
    }

    #[test]
    fn trace_with_zero_weights_is_empty() {
        let plant = afm_plant();
        let ctrl = afm_controller(3.5e10, 2.6e5);
        let sel = afm_selection();
        assert!(matches!(
            trace_point_condition_curve(&plant, &ctrl, &sel, 0.0, 0.0, 1000.0, 512),
            Err(PointCondError::EmptyCurve { .. })
        ));
    }

    /// The fundamental-frequency NP row of the scanner study yields a closed
    /// curve whose points sit exactly on the robust-performance boundary.
    #[test]
    fn afm_fundamental_row_traces_boundary_curve() {
        let plant = afm_plant();
        let ctrl = afm_controller(3.5e10, 2.6e5);
        let sel = afm_selection();
        let omega = 2.0 * PI / AFM_TAU_D;
        let curve =
            trace_point_condition_curve(&plant, &ctrl, &sel, 500.0, 0.0, omega, 512).unwrap();
        assert!(!curve.points.is_empty());
        assert!(!curve.rings.is_empty());
        // Boundary membership: robust_perf_value = 1 within 1e-6 at sampled
        // curve points, evaluated through the full loop equation.
        for point in curve.points.iter().step_by(37) {
            let inst = sel.instantiate(&ctrl, point.p1, point.p2);
            let v = robust_perf_value(&plant, &inst, 500.0, 0.0, omega).unwrap();
            assert!(
                (v - 1.0).abs() <= 1e-6,
                "boundary point off the unit level: {v} at θ = {}",
                point.theta
            );
        }
    }

    #[test]
    fn selection_validation_catches_mistakes() {
        let ctrl = afm_controller(1e9, 1e4);
        let mut sel = afm_selection();
        sel.free = (Slot::N0, Slot::N0);
        assert!(sel.validate(&ctrl).is_err());
        let mut sel = afm_selection();
        sel.tie = Some(Tie {
            mirror: Slot::D0,
            source: Slot::D2,
        });
        assert!(sel.validate(&ctrl).is_err());
        let mut sel = afm_selection();
        sel.section_index = 3;
        assert!(sel.validate(&ctrl).is_err());
        let mut sel = afm_selection();
        sel.bounds.x.hi = sel.bounds.x.lo;
        assert!(sel.validate(&ctrl).is_err());
    }
}
