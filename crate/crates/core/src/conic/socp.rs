use std::time::Instant;

use log::debug;

use super::{SolveReport, SolveStatus, SolverSettings};
use crate::linalg::{RMat, RVec};
use crate::{Error, Result};

/// Convex quadratic `x^T P x + q^T x` with `P` symmetric PSD.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadForm {
    pub p: RMat,
    pub q: RVec,
}

impl QuadForm {
    pub fn eval(&self, x: &RVec) -> f64 {
        x.dot(&(&self.p * x)) + self.q.dot(x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SocpConstraint {
    /// `a^T x >= b`
    LinearGe { a: RVec, b: f64 },
    /// `a^T x <= b`
    LinearLe { a: RVec, b: f64 },
    /// `sum_{i in indices} x_i^2 <= cap`
    GroupCap { indices: Vec<usize>, cap: f64 },
    /// `x^T P x + q^T x <= bound`
    Quadratic { form: QuadForm, bound: f64 },
}

/// minimize `sum_i x_i^2` subject to convex constraints, optionally `x >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SocpProgram {
    pub n: usize,
    pub nonneg: bool,
    pub constraints: Vec<SocpConstraint>,
}

impl SocpProgram {
    pub fn new(n: usize, nonneg: bool) -> Self {
        SocpProgram {
            n,
            nonneg,
            constraints: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidArgument("SOCP needs at least one variable".into()));
        }
        for c in &self.constraints {
            let len = match c {
                SocpConstraint::LinearGe { a, .. } | SocpConstraint::LinearLe { a, .. } => a.len(),
                SocpConstraint::GroupCap { indices, cap } => {
                    if indices.iter().any(|&i| i >= self.n) {
                        return Err(Error::InvalidArgument("group index out of range".into()));
                    }
                    if !(*cap >= 0.0) {
                        return Err(Error::InvalidArgument("group cap must be non-negative".into()));
                    }
                    self.n
                }
                SocpConstraint::Quadratic { form, .. } => {
                    if form.p.nrows() != self.n || form.p.ncols() != self.n {
                        return Err(Error::Dimension {
                            expected: self.n,
                            got: form.p.nrows(),
                        });
                    }
                    form.q.len()
                }
            };
            if len != self.n {
                return Err(Error::Dimension {
                    expected: self.n,
                    got: len,
                });
            }
        }
        Ok(())
    }

    /// Raw constraint values `f_i(x)` in the `f_i(x) <= 0` convention.
    pub fn constraint_values(&self, x: &RVec) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .constraints
            .iter()
            .map(|c| match c {
                SocpConstraint::LinearGe { a, b } => b - a.dot(x),
                SocpConstraint::LinearLe { a, b } => a.dot(x) - b,
                SocpConstraint::GroupCap { indices, cap } => {
                    indices.iter().map(|&i| x[i] * x[i]).sum::<f64>() - cap
                }
                SocpConstraint::Quadratic { form, bound } => form.eval(x) - bound,
            })
            .collect();
        if self.nonneg {
            out.extend(x.iter().map(|v| -v));
        }
        out
    }

    /// Largest relative violation of the constraints at `x`.
    pub fn max_violation(&self, x: &RVec) -> f64 {
        let scales = self.scales(x.norm() / (self.n as f64).sqrt());
        self.constraint_values(x)
            .iter()
            .zip(scales)
            .map(|(f, w)| (f / w).max(0.0))
            .fold(0.0, f64::max)
    }

    /// Normalization per constraint so that violations are comparable.
    fn scales(&self, xs: f64) -> Vec<f64> {
        let xs = xs.max(1e-12);
        let mut out: Vec<f64> = self
            .constraints
            .iter()
            .map(|c| match c {
                SocpConstraint::LinearGe { a, b } | SocpConstraint::LinearLe { a, b } => {
                    b.abs().max(a.norm() * xs)
                }
                SocpConstraint::GroupCap { cap, .. } => cap.max(xs * xs),
                SocpConstraint::Quadratic { form, bound } => {
                    bound.abs().max(form.p.norm() * xs * xs + form.q.norm() * xs)
                }
            })
            .map(|w: f64| if w > 0.0 { w } else { 1.0 })
            .collect();
        if self.nonneg {
            out.extend(std::iter::repeat_n(xs, self.n));
        }
        out
    }
}

/// Normalized constraint set `g_i(x) = f_i(x) / w_i <= 0`.
struct Barrier<'a> {
    prog: &'a SocpProgram,
    inv_w: Vec<f64>,
}

impl Barrier<'_> {
    fn values(&self, x: &RVec) -> Vec<f64> {
        self.prog
            .constraint_values(x)
            .into_iter()
            .zip(&self.inv_w)
            .map(|(f, w)| f * w)
            .collect()
    }

    fn count(&self) -> usize {
        self.inv_w.len()
    }

    /// Accumulate `sum_i c_i grad g_i` into `grad` and
    /// `sum_i (d_i grad g_i grad g_i^T + c_i hess g_i)` into `hess`.
    fn accumulate(&self, x: &RVec, coef_grad: &[f64], coef_outer: &[f64], grad: &mut RVec, hess: &mut RMat) {
        let n = self.prog.n;
        let mut gi = RVec::zeros(n);
        for (i, c) in self.prog.constraints.iter().enumerate() {
            let w = self.inv_w[i];
            let cg = coef_grad[i];
            let co = coef_outer[i];
            match c {
                SocpConstraint::LinearGe { a, .. } | SocpConstraint::LinearLe { a, .. } => {
                    let sign = if matches!(c, SocpConstraint::LinearGe { .. }) { -w } else { w };
                    gi.copy_from(a);
                    gi *= sign;
                    grad.axpy(cg, &gi, 1.0);
                    hess.ger(co, &gi, &gi, 1.0);
                }
                SocpConstraint::GroupCap { indices, .. } => {
                    for &a in indices {
                        grad[a] += cg * 2.0 * w * x[a];
                        hess[(a, a)] += cg * 2.0 * w;
                        for &b in indices {
                            hess[(a, b)] += co * 4.0 * w * w * x[a] * x[b];
                        }
                    }
                }
                SocpConstraint::Quadratic { form, .. } => {
                    gi = (&form.p * x) * (2.0 * w) + &form.q * w;
                    grad.axpy(cg, &gi, 1.0);
                    hess.ger(co, &gi, &gi, 1.0);
                    *hess += &form.p * (2.0 * w * cg);
                }
            }
        }
        if self.prog.nonneg {
            let off = self.prog.constraints.len();
            for j in 0..n {
                let w = self.inv_w[off + j];
                grad[j] -= coef_grad[off + j] * w;
                hess[(j, j)] += coef_outer[off + j] * w * w;
            }
        }
    }
}

fn solve_spd(h: &RMat, g: &RVec) -> Option<RVec> {
    if let Some(ch) = h.clone().cholesky() {
        return Some(ch.solve(g));
    }
    let n = h.nrows();
    let ridge = (h.trace().abs() / n as f64).max(1e-300);
    for k in [1e-14, 1e-12, 1e-10, 1e-8, 1e-6] {
        let mut hr = h.clone();
        for i in 0..n {
            hr[(i, i)] += k * ridge;
        }
        if let Some(ch) = hr.cholesky() {
            return Some(ch.solve(g));
        }
    }
    None
}

const MU: f64 = 20.0;
const NEWTON_TOL: f64 = 1e-10;
const MAX_NEWTON: usize = 80;
const MAX_OUTER: usize = 80;

/// Phase I: find `x` with every normalized constraint strictly negative.
/// Returns `Ok(Some(x))`, `Ok(None)` when infeasible, and the Newton step count.
fn phase_one(bar: &Barrier<'_>, x0: &RVec) -> (Option<RVec>, usize) {
    let n = bar.prog.n;
    let m = bar.count();
    let mut x = x0.clone();
    let g0 = bar.values(&x);
    let worst = g0.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if worst < 0.0 {
        return (Some(x), 0);
    }
    let mut s = worst + 1.0;
    let mut t = 1.0;
    let mut steps = 0;
    for _ in 0..MAX_OUTER {
        for _ in 0..MAX_NEWTON {
            let g = bar.values(&x);
            if s < 0.0 {
                return (Some(x), steps);
            }
            let slack: Vec<f64> = g.iter().map(|gi| s - gi).collect();
            // Objective t*s - sum log(s - g_i(x)).
            let cg: Vec<f64> = slack.iter().map(|d| 1.0 / d).collect();
            let co: Vec<f64> = slack.iter().map(|d| 1.0 / (d * d)).collect();
            let mut gx = RVec::zeros(n);
            let mut hx = RMat::zeros(n, n);
            bar.accumulate(&x, &cg, &co, &mut gx, &mut hx);
            // Extended system over (x, s); d/ds of -log(s - g) = -1/(s-g).
            let mut h = RMat::zeros(n + 1, n + 1);
            h.view_mut((0, 0), (n, n)).copy_from(&hx);
            // Cross terms: grad_x g_i * (-1) / slack^2, assembled via the
            // gradient of sum 1/slack^2 weighted; compute directly.
            let mut cross = RVec::zeros(n);
            let mut dummy = RMat::zeros(n, n);
            bar.accumulate(&x, &co, &vec![0.0; m], &mut cross, &mut dummy);
            for i in 0..n {
                h[(i, n)] = -cross[i];
                h[(n, i)] = -cross[i];
            }
            h[(n, n)] = co.iter().sum();
            let mut grad = RVec::zeros(n + 1);
            grad.rows_mut(0, n).copy_from(&gx);
            grad[n] = t - cg.iter().sum::<f64>();

            let Some(step) = solve_spd(&h, &(-&grad)) else {
                return (None, steps);
            };
            let dec = -grad.dot(&step);
            steps += 1;
            if dec / 2.0 <= NEWTON_TOL {
                break;
            }
            let f_of = |xx: &RVec, ss: f64| -> Option<f64> {
                let gv = bar.values(xx);
                let mut acc = t * ss;
                for gi in gv {
                    let d = ss - gi;
                    if d <= 0.0 {
                        return None;
                    }
                    acc -= d.ln();
                }
                Some(acc)
            };
            let f0 = f_of(&x, s).unwrap_or(f64::INFINITY);
            let dx = step.rows(0, n).into_owned();
            let ds = step[n];
            let mut alpha = 1.0;
            loop {
                let xn = &x + &dx * alpha;
                let sn = s + ds * alpha;
                if let Some(fv) = f_of(&xn, sn) {
                    if fv <= f0 - 0.01 * alpha * dec {
                        x = xn;
                        s = sn;
                        break;
                    }
                }
                alpha *= 0.5;
                if alpha < 1e-14 {
                    break;
                }
            }
            if alpha < 1e-14 {
                break;
            }
        }
        if s < 0.0 {
            return (Some(x), steps);
        }
        // Lower bound on the optimal max-violation.
        let gap = m as f64 / t;
        if s - gap > 0.0 || gap < 1e-12 {
            return (None, steps);
        }
        t *= MU;
    }
    (None, steps)
}

/// Solve a [`SocpProgram`]; `start` seeds phase I.
pub fn solve_socp(problem: &SocpProgram, start: Option<&RVec>, settings: &SolverSettings) -> Result<(RVec, SolveReport)> {
    problem.validate()?;
    let clock = Instant::now();
    let n = problem.n;

    let x0 = match start {
        Some(s) if s.len() == n => s.clone(),
        Some(s) => {
            return Err(Error::Dimension {
                expected: n,
                got: s.len(),
            })
        }
        None => RVec::zeros(n),
    };
    let cap_scale = problem
        .constraints
        .iter()
        .filter_map(|c| match c {
            SocpConstraint::GroupCap { cap, .. } => Some(cap.sqrt()),
            _ => None,
        })
        .fold(0.0, f64::max);
    let xs = (x0.norm() / (n as f64).sqrt()).max(cap_scale).max(1e-9);
    let inv_w: Vec<f64> = problem.scales(xs).iter().map(|w| 1.0 / w).collect();
    let bar = Barrier { prog: problem, inv_w };
    let m = bar.count();

    if m == 0 {
        let report = SolveReport {
            status: SolveStatus::Optimal,
            objective: 0.0,
            dual_bound: 0.0,
            primal_residual: 0.0,
            dual_residual: 0.0,
            iterations: 0,
            wall_time: clock.elapsed(),
        };
        return Ok((RVec::zeros(n), report));
    }

    // Nudge a zero start off the nonnegativity boundary.
    let mut seed = x0;
    if problem.nonneg {
        for v in seed.iter_mut() {
            if *v <= 0.0 {
                *v = 1e-3 * xs;
            }
        }
    }
    let (found, mut steps) = phase_one(&bar, &seed);
    let Some(mut x) = found else {
        debug!("SOCP phase I: infeasible after {steps} Newton steps");
        return Ok((seed, SolveReport::infeasible(steps, clock.elapsed())));
    };

    let f0 = |x: &RVec| x.norm_squared();
    let mut t = (m as f64 / f0(&x).max(xs * xs * 1e-6)).max(1e-300);
    let mut last_dec = f64::INFINITY;
    let mut status = SolveStatus::MaxIterations;
    for _ in 0..MAX_OUTER {
        for _ in 0..MAX_NEWTON {
            let g = bar.values(&x);
            let cg: Vec<f64> = g.iter().map(|gi| -1.0 / gi).collect();
            let co: Vec<f64> = g.iter().map(|gi| 1.0 / (gi * gi)).collect();
            let mut grad = &x * (2.0 * t);
            let mut hess = RMat::identity(n, n) * (2.0 * t);
            bar.accumulate(&x, &cg, &co, &mut grad, &mut hess);
            let Some(dx) = solve_spd(&hess, &(-&grad)) else {
                break;
            };
            let dec = -grad.dot(&dx);
            last_dec = dec;
            steps += 1;
            if dec / 2.0 <= NEWTON_TOL {
                break;
            }
            let phi = |xx: &RVec| -> Option<f64> {
                let mut acc = t * f0(xx);
                for gi in bar.values(xx) {
                    if gi >= 0.0 {
                        return None;
                    }
                    acc -= (-gi).ln();
                }
                Some(acc)
            };
            let cur = phi(&x).unwrap_or(f64::INFINITY);
            let mut alpha = 1.0;
            let mut moved = false;
            while alpha > 1e-14 {
                let xn = &x + &dx * alpha;
                if let Some(v) = phi(&xn) {
                    if v <= cur - 0.01 * alpha * dec {
                        x = xn;
                        moved = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !moved {
                break;
            }
        }
        let gap = m as f64 / t;
        if gap <= settings.tol * 1e-2 * f0(&x) + 1e-30 * xs * xs || gap <= 1e-14 * xs * xs {
            status = SolveStatus::Optimal;
            break;
        }
        t *= MU;
    }

    let objective = f0(&x);
    let report = SolveReport {
        status,
        objective,
        dual_bound: (objective - m as f64 / t).max(0.0),
        primal_residual: problem.max_violation(&x),
        dual_residual: last_dec.max(0.0),
        iterations: steps,
        wall_time: clock.elapsed(),
    };
    debug!(
        "SOCP: n={} m={} newton={} status={:?} obj={:.6e}",
        n, m, steps, report.status, objective
    );
    Ok((x, report))
}
