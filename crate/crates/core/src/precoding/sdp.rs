use crate::conic::{solve_trace_sdp, DiagCap, SolveReport, SolveStatus, SolverSettings, TraceConstraint, TraceSdp};
use crate::linalg::{outer, CMat};
use crate::Result;

use super::{zero_report, Method, PrecoderInput, PrecoderSolution};

/// The covariance program for `input`.
pub fn build_sdp(input: &PrecoderInput) -> Result<TraceSdp> {
    input.validate()?;
    let d = input.dim();
    let m = input.antennas_per_pb;
    let mut sdp = TraceSdp::new(d);
    for (h, &delta) in input.channels.iter().zip(input.deltas) {
        sdp.ge.push(TraceConstraint::new(outer(h), delta));
    }
    if let Some(p) = input.p_max {
        for n in 0..input.pb_count() {
            sdp.diag_caps.push(DiagCap {
                indices: (n * m..(n + 1) * m).collect(),
                cap: p,
            });
        }
    }
    if let Some(emf) = input.emf {
        for c in &emf.proximity {
            sdp.le.push(TraceConstraint::new(c.matrix.clone(), c.bound));
        }
        if let Some(c) = &emf.volumetric {
            sdp.le.push(TraceConstraint::new(c.h_eff.clone(), c.bound));
        }
    }
    Ok(sdp)
}

/// Globally optimal covariance; precoders come from its eigenvectors.
pub fn sdp_precoder(input: &PrecoderInput, settings: &SolverSettings) -> Result<PrecoderSolution> {
    let sdp = build_sdp(input)?;
    let d = input.dim();
    let m = input.antennas_per_pb;
    if let Some(k) = input.cap_infeasible_ue() {
        return Ok(PrecoderSolution::infeasible(
            Method::Sdp,
            d,
            m,
            SolveReport::infeasible(0, Default::default()),
            Some(format!("per-PB caps: UE {k} cannot be served even with every PB at full power")),
        ));
    }
    if input.deltas.iter().all(|&x| x == 0.0) {
        return Ok(PrecoderSolution::from_covariance(Method::Sdp, CMat::zeros(d, d), m, zero_report()));
    }
    let (v, report) = solve_trace_sdp(&sdp, settings)?;
    if report.status == SolveStatus::Infeasible {
        let family = if input.emf.is_some_and(|e| !e.is_empty()) {
            "exposure constraints together with the requirements"
        } else {
            "requirements under the per-PB caps"
        };
        return Ok(PrecoderSolution::infeasible(Method::Sdp, d, m, report, Some(format!("infeasible: {family}"))));
    }
    Ok(PrecoderSolution::from_covariance(Method::Sdp, v, m, report))
}
