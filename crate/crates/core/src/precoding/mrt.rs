use std::time::Duration;

use crate::conic::{QuadForm, SocpConstraint, SocpProgram, SolveReport, SolveStatus};
use crate::linalg::{CMat, CVec, RMat, RVec, C64};
use crate::Result;

use super::sca::{successive, true_violation};
use super::single::{conjugate_beam, single_ue_allocation};
use super::{block_norms, Method, PrecoderInput, PrecoderSolution, ScaSettings};

/// Conjugate-beam model: UE `k'` is served by `v_k'n = conj(h_k'n)/||h_k'n|| * rho_k'n`.
/// Amplitudes are stored at index `k' N + n`.
struct MrtModel<'a> {
    input: &'a PrecoderInput<'a>,
    n_pb: usize,
    k: usize,
    /// `c[k'][k][n] = u_k'n^T h_kn` with `u_k'n` the unit beam direction.
    coupling: Vec<Vec<Vec<C64>>>,
    proximity: Vec<(RMat, f64)>,
    volumetric: Option<(RMat, RMat, f64)>,
}

impl<'a> MrtModel<'a> {
    fn new(input: &'a PrecoderInput<'a>) -> Self {
        let m = input.antennas_per_pb;
        let n_pb = input.pb_count();
        let k = input.channels.len();
        let dirs: Vec<CVec> = input
            .channels
            .iter()
            .map(|h| conjugate_beam(h, &block_norms(h, m), &vec![1.0; n_pb], m))
            .collect();
        let coupling = dirs
            .iter()
            .map(|u| {
                input
                    .channels
                    .iter()
                    .map(|h| {
                        (0..n_pb)
                            .map(|n| u.rows(n * m, m).iter().zip(h.rows(n * m, m).iter()).map(|(a, b)| a * b).sum())
                            .collect()
                    })
                    .collect()
            })
            .collect();
        // rho^T Re(Q^H conj(H) Q) rho = Tr(V^T H) for real amplitudes
        let amplitude_form = |h: &CMat| {
            let b = h.map(|z| z.conj());
            let mut out = RMat::zeros(k * n_pb, k * n_pb);
            for (j, u) in dirs.iter().enumerate() {
                for n1 in 0..n_pb {
                    let u1 = u.rows(n1 * m, m);
                    for n2 in 0..n_pb {
                        let u2 = u.rows(n2 * m, m);
                        let blk = b.view((n1 * m, n2 * m), (m, m));
                        let val = (u1.adjoint() * blk * u2)[(0, 0)].re;
                        out[(j * n_pb + n1, j * n_pb + n2)] = val;
                    }
                }
            }
            (&out + out.transpose()) * 0.5
        };
        let mut proximity = Vec::new();
        let mut volumetric = None;
        if let Some(emf) = input.emf {
            for c in &emf.proximity {
                proximity.push((amplitude_form(&c.matrix), c.bound));
            }
            if let Some(c) = &emf.volumetric {
                volumetric = Some((amplitude_form(&c.positive), amplitude_form(&c.negative), c.bound));
            }
        }
        MrtModel {
            input,
            n_pb,
            k,
            coupling,
            proximity,
            volumetric,
        }
    }

    fn program(&self, rbar: &RVec) -> SocpProgram {
        let (n_pb, k) = (self.n_pb, self.k);
        let n = n_pb * k;
        let mut prog = SocpProgram::new(n, true);
        for (ue, &delta) in self.input.deltas.iter().enumerate() {
            let mut a = RVec::zeros(n);
            let mut b = delta;
            for j in 0..k {
                let c = &self.coupling[j][ue];
                let s: C64 = (0..n_pb).map(|p| c[p] * rbar[j * n_pb + p]).sum();
                b += s.norm_sqr();
                for p in 0..n_pb {
                    a[j * n_pb + p] = 2.0 * (s.conj() * c[p]).re;
                }
            }
            prog.constraints.push(SocpConstraint::LinearGe { a, b });
        }
        if let Some(cap) = self.input.p_max {
            for p in 0..n_pb {
                prog.constraints.push(SocpConstraint::GroupCap {
                    indices: (0..k).map(|j| j * n_pb + p).collect(),
                    cap,
                });
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
            let g = neg * rbar;
            prog.constraints.push(SocpConstraint::Quadratic {
                form: QuadForm {
                    p: pos.clone(),
                    q: &g * 2.0,
                },
                bound: bound + rbar.dot(&g),
            });
        }
        prog
    }

    fn precoders(&self, rho: &RVec) -> Vec<CVec> {
        let m = self.input.antennas_per_pb;
        self.input
            .channels
            .iter()
            .enumerate()
            .map(|(j, h)| {
                let r: Vec<f64> = (0..self.n_pb).map(|p| rho[j * self.n_pb + p].max(0.0)).collect();
                conjugate_beam(h, &block_norms(h, m), &r, m)
            })
            .collect()
    }
}

/// Starting amplitudes: each UE served alone under a share of the cap.
fn initial_amplitudes(input: &PrecoderInput, cap: Option<f64>) -> Option<RVec> {
    let n_pb = input.pb_count();
    let k = input.channels.len();
    let mut rho = RVec::zeros(n_pb * k);
    for (j, &delta) in input.deltas.iter().enumerate() {
        let r = single_ue_allocation(&input.block_norms(j), delta, cap).ok()?;
        for (p, v) in r.into_iter().enumerate() {
            rho[j * n_pb + p] = v;
        }
    }
    Some(rho)
}

/// Conjugate beams with amplitudes optimized by successive convex approximation.
pub fn mrt_precoder(input: &PrecoderInput, settings: &ScaSettings) -> Result<PrecoderSolution> {
    input.validate()?;
    let d = input.dim();
    let m = input.antennas_per_pb;
    let k = input.channels.len();
    if let Some(u) = input.cap_infeasible_ue() {
        return Ok(PrecoderSolution::infeasible(
            Method::Mrt,
            d,
            m,
            SolveReport::infeasible(0, Duration::ZERO),
            Some(format!("per-PB caps: UE {u} cannot be served even with every PB at full power")),
        ));
    }
    let model = MrtModel::new(input);
    let caps: Vec<Option<f64>> = match input.p_max {
        Some(p) => vec![Some(p / k as f64), Some(p), None],
        None => vec![None],
    };
    let mut steps = 0;
    let mut time = Duration::ZERO;
    for cap in caps {
        let Some(init) = initial_amplitudes(input, cap) else {
            continue;
        };
        let run = successive(|r| model.program(r), init, settings)?;
        steps += run.newton_steps;
        time += run.wall_time;
        if run.status == SolveStatus::Infeasible {
            continue;
        }
        let report = SolveReport {
            status: run.status,
            objective: run.history.last().copied().unwrap_or(f64::NAN),
            dual_bound: 0.0,
            primal_residual: 0.0,
            dual_residual: 0.0,
            iterations: steps,
            wall_time: time,
        };
        let mut sol = PrecoderSolution::from_precoders(Method::Mrt, model.precoders(&run.x), m, report);
        sol.report.primal_residual = true_violation(input, &sol);
        sol.history = run.history;
        return Ok(sol);
    }
    Ok(PrecoderSolution::infeasible(
        Method::Mrt,
        d,
        m,
        SolveReport::infeasible(steps, time),
        Some("no feasible amplitudes found from any starting allocation".into()),
    ))
}
