use std::time::{Duration, Instant};

use crate::conic::{solve_socp, QuadForm, SocpConstraint, SocpProgram, SolveReport, SolveStatus};
use crate::linalg::{embed, CMat, CVec, RMat, RVec, C64};
use crate::Result;

use super::{mrt_precoder, Method, PrecoderInput, PrecoderSolution, ScaSettings};

/// Result of a sequence of convex subproblems.
pub(crate) struct Successive {
    pub x: RVec,
    pub history: Vec<f64>,
    pub status: SolveStatus,
    pub newton_steps: usize,
    pub wall_time: Duration,
}

/// Solve `build(x)` from `init` until the objective settles.
///
/// An iterate is accepted only if it does not raise the objective; an
/// infeasible first subproblem is reported as infeasible.
pub(crate) fn successive(
    build: impl Fn(&RVec) -> SocpProgram,
    init: RVec,
    settings: &ScaSettings,
) -> Result<Successive> {
    let clock = Instant::now();
    let mut x = init;
    let mut history: Vec<f64> = Vec::new();
    let mut steps = 0;
    let mut status = SolveStatus::MaxIterations;
    for it in 0..settings.max_outer {
        let prog = build(&x);
        let (next, rep) = solve_socp(&prog, Some(&x), &settings.solver)?;
        steps += rep.iterations;
        if rep.status == SolveStatus::Infeasible {
            if it == 0 {
                status = SolveStatus::Infeasible;
            } else {
                // the previous iterate is feasible for this subproblem, so this
                // can only be numerical trouble at the boundary
                status = SolveStatus::Optimal;
            }
            break;
        }
        let f = next.norm_squared();
        if let Some(&prev) = history.last() {
            if f > prev {
                status = SolveStatus::Optimal;
                break;
            }
            x = next;
            history.push(f);
            if prev - f <= settings.tol * prev {
                status = SolveStatus::Optimal;
                break;
            }
        } else {
            x = next;
            history.push(f);
        }
    }
    Ok(Successive {
        x,
        history,
        status,
        newton_steps: steps,
        wall_time: clock.elapsed(),
    })
}

/// Block-diagonal `blocks` copies of `b`.
pub(crate) fn block_diag(b: &RMat, blocks: usize) -> RMat {
    let s = b.nrows();
    let mut out = RMat::zeros(s * blocks, s * blocks);
    for k in 0..blocks {
        out.view_mut((k * s, k * s), (s, s)).copy_from(b);
    }
    out
}

fn to_real(vs: &[CVec]) -> RVec {
    let d = vs[0].len();
    let mut x = RVec::zeros(2 * d * vs.len());
    for (k, v) in vs.iter().enumerate() {
        for i in 0..d {
            x[2 * d * k + i] = v[i].re;
            x[2 * d * k + d + i] = v[i].im;
        }
    }
    x
}

fn to_complex(x: &RVec, d: usize, k: usize) -> Vec<CVec> {
    (0..k)
        .map(|j| CVec::from_fn(d, |i, _| C64::new(x[2 * d * j + i], x[2 * d * j + d + i])))
        .collect()
}

/// Fixed parts of the SCA subproblem.
struct ScaModel<'a> {
    input: &'a PrecoderInput<'a>,
    d: usize,
    k: usize,
    proximity: Vec<(RMat, f64)>,
    /// Embedded PSD and negative parts of the volumetric matrix, and its bound.
    volumetric: Option<(RMat, RMat, f64)>,
}

impl<'a> ScaModel<'a> {
    fn new(input: &'a PrecoderInput<'a>) -> Self {
        let d = input.dim();
        let k = input.channels.len();
        // v^H conj(H) v = Tr(v v^H)^T H
        let real_form = |h: &CMat| block_diag(&embed(&h.map(|z| z.conj())), k);
        let mut proximity = Vec::new();
        let mut volumetric = None;
        if let Some(emf) = input.emf {
            for c in &emf.proximity {
                proximity.push((real_form(&c.matrix), c.bound));
            }
            if let Some(c) = &emf.volumetric {
                volumetric = Some((real_form(&c.positive), real_form(&c.negative), c.bound));
            }
        }
        ScaModel {
            input,
            d,
            k,
            proximity,
            volumetric,
        }
    }

    fn program(&self, xbar: &RVec) -> SocpProgram {
        let (d, k) = (self.d, self.k);
        let n = 2 * d * k;
        let mut prog = SocpProgram::new(n, false);
        let vbar = to_complex(xbar, d, k);
        for (h, &delta) in self.input.channels.iter().zip(self.input.deltas) {
            let mut a = RVec::zeros(n);
            let mut b = delta;
            for (j, vj) in vbar.iter().enumerate() {
                let s = h.dot(vj);
                b += s.norm_sqr();
                for i in 0..d {
                    let w = s.conj() * h[i];
                    a[2 * d * j + i] = 2.0 * w.re;
                    a[2 * d * j + d + i] = -2.0 * w.im;
                }
            }
            prog.constraints.push(SocpConstraint::LinearGe { a, b });
        }
        if let Some(p) = self.input.p_max {
            let m = self.input.antennas_per_pb;
            for pb in 0..self.input.pb_count() {
                let mut indices = Vec::with_capacity(2 * m * k);
                for j in 0..k {
                    for i in pb * m..(pb + 1) * m {
                        indices.push(2 * d * j + i);
                        indices.push(2 * d * j + d + i);
                    }
                }
                prog.constraints.push(SocpConstraint::GroupCap { indices, cap: p });
            }
        }
        for (p, bound) in &self.proximity {
            prog.constraints.push(SocpConstraint::Quadratic {
                form: QuadForm {
                    p: p.clone(),
                    q: RVec::zeros(n),
                },
                bound: *bound,
            });
        }
        if let Some((pos, neg, bound)) = &self.volumetric {
            // the concave part is replaced by its tangent at xbar
            let g = neg * xbar;
            prog.constraints.push(SocpConstraint::Quadratic {
                form: QuadForm {
                    p: pos.clone(),
                    q: &g * 2.0,
                },
                bound: bound + xbar.dot(&g),
            });
        }
        prog
    }
}

/// `K` precoders refined from the MRT design by successive convex approximation.
pub fn sca_precoder(input: &PrecoderInput, settings: &ScaSettings) -> Result<PrecoderSolution> {
    input.validate()?;
    let d = input.dim();
    let m = input.antennas_per_pb;
    let k = input.channels.len();
    if let Some(u) = input.cap_infeasible_ue() {
        return Ok(PrecoderSolution::infeasible(
            Method::Sca,
            d,
            m,
            SolveReport::infeasible(0, Duration::ZERO),
            Some(format!("per-PB caps: UE {u} cannot be served even with every PB at full power")),
        ));
    }
    let mrt = mrt_precoder(input, settings)?;
    let init = if mrt.status() != SolveStatus::Infeasible && mrt.precoders.len() == k {
        mrt.precoders.clone()
    } else {
        // conjugate beams sized for each UE alone, ignoring caps
        input
            .channels
            .iter()
            .zip(input.deltas)
            .map(|(h, &delta)| {
                let g = h.norm_squared();
                let s = if g > 0.0 { delta.sqrt() / g } else { 0.0 };
                h.map(|z| z.conj()) * C64::new(s, 0.0)
            })
            .collect()
    };
    let model = ScaModel::new(input);
    let run = successive(|x| model.program(x), to_real(&init), settings)?;
    let report = SolveReport {
        status: run.status,
        objective: run.history.last().copied().unwrap_or(f64::NAN),
        dual_bound: 0.0,
        primal_residual: 0.0,
        dual_residual: 0.0,
        iterations: run.newton_steps,
        wall_time: run.wall_time,
    };
    if run.status == SolveStatus::Infeasible {
        return Ok(PrecoderSolution::infeasible(
            Method::Sca,
            d,
            m,
            report,
            Some("no feasible point found from the initial precoders".into()),
        ));
    }
    let precoders = to_complex(&run.x, d, k);
    let mut sol = PrecoderSolution::from_precoders(Method::Sca, precoders, m, report);
    sol.report.primal_residual = true_violation(input, &sol);
    sol.history = run.history;
    Ok(sol)
}

/// Largest relative violation of the original (non-linearized) constraints.
pub(crate) fn true_violation(input: &PrecoderInput, sol: &PrecoderSolution) -> f64 {
    let mut worst: f64 = 0.0;
    for (h, &delta) in input.channels.iter().zip(input.deltas) {
        if delta > 0.0 {
            worst = worst.max((delta - sol.incident_power(h)) / delta);
        }
    }
    if let Some(p) = input.p_max {
        for q in &sol.pb_powers {
            worst = worst.max((q - p) / p);
        }
    }
    if let Some(emf) = input.emf {
        worst = worst.max(emf.max_violation(&sol.covariance));
    }
    worst.max(0.0)
}
