//! Minimum-power energy precoders.
//!
//! All designs minimize the total transmit power `Tr(V)` subject to incident
//! power requirements `Tr(V^T H_k) >= delta_k`, optional per-PB caps and
//! optional exposure constraints:
//!
//! * [`sdp_precoder`]: the covariance program solved directly;
//! * [`sca_precoder`]: `K` precoders refined by successive convex approximation;
//! * [`mrt_precoder`]: conjugate directions with only the amplitudes optimized;
//! * [`single_ue_precoder`]: the closed-form clip-and-redistribute allocation.

mod mrt;
mod sca;
mod sdp;
mod single;

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use mrt::mrt_precoder;
pub use sca::sca_precoder;
pub use sdp::sdp_precoder;
pub use single::{single_ue_allocation, single_ue_feasible, single_ue_precoder};

use crate::channel::{linear_to_db, ChannelStats};
use crate::conic::{SolveReport, SolveStatus, SolverSettings};
use crate::linalg::{hermitian_eig, outer, trace_re, trace_t_rank1, CMat, CVec, C64};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Sdp,
    Sca,
    Mrt,
    SingleUe,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Sdp => "sdp",
            Method::Sca => "sca",
            Method::Mrt => "mrt",
            Method::SingleUe => "single-ue",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sdp" => Ok(Method::Sdp),
            "sca" => Ok(Method::Sca),
            "mrt" => Ok(Method::Mrt),
            "single-ue" => Ok(Method::SingleUe),
            other => Err(Error::Parse(format!("unknown method '{other}'"))),
        }
    }
}

/// Outer-loop settings shared by the SCA and MRT designs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScaSettings {
    /// Stop when the relative objective change drops below this.
    pub tol: f64,
    pub max_outer: usize,
    pub solver: SolverSettings,
}

impl Default for ScaSettings {
    fn default() -> Self {
        ScaSettings {
            tol: 1e-5,
            max_outer: 30,
            solver: SolverSettings::default(),
        }
    }
}

/// Solver settings for every design.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct DesignSettings {
    /// Covariance program settings.
    pub sdp: SolverSettings,
    pub sca: ScaSettings,
}

/// Run the design selected by `method`.
pub fn design(method: Method, input: &PrecoderInput, settings: &DesignSettings) -> Result<PrecoderSolution> {
    match method {
        Method::Sdp => sdp_precoder(input, &settings.sdp),
        Method::Sca => sca_precoder(input, &settings.sca),
        Method::Mrt => mrt_precoder(input, &settings.sca),
        Method::SingleUe => single_ue_precoder(input),
    }
}

/// Channel estimates and requirements for one precoder design.
#[derive(Debug, Clone, Copy)]
pub struct PrecoderInput<'a> {
    /// Stacked estimates `h_k`, one per UE.
    pub channels: &'a [CVec],
    pub antennas_per_pb: usize,
    pub deltas: &'a [f64],
    /// Per-PB power cap; `None` disables the caps.
    pub p_max: Option<f64>,
    pub emf: Option<&'a crate::emf::EmfConstraintSet>,
}

impl PrecoderInput<'_> {
    pub fn dim(&self) -> usize {
        self.channels.first().map_or(0, |h| h.len())
    }

    pub fn pb_count(&self) -> usize {
        self.dim() / self.antennas_per_pb.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() {
            return Err(Error::InvalidArgument("no UEs to serve".into()));
        }
        if self.deltas.len() != self.channels.len() {
            return Err(Error::Dimension {
                expected: self.channels.len(),
                got: self.deltas.len(),
            });
        }
        let d = self.dim();
        if self.antennas_per_pb == 0 || d % self.antennas_per_pb != 0 {
            return Err(Error::InvalidArgument("channel length is not a multiple of M".into()));
        }
        if let Some(h) = self.channels.iter().find(|h| h.len() != d) {
            return Err(Error::Dimension { expected: d, got: h.len() });
        }
        if self.deltas.iter().any(|d| !(*d >= 0.0)) {
            return Err(Error::InvalidArgument("requirements must be non-negative".into()));
        }
        if let Some(p) = self.p_max {
            if !(p > 0.0) {
                return Err(Error::InvalidArgument("per-PB cap must be positive".into()));
            }
        }
        if let Some(emf) = self.emf {
            for c in &emf.proximity {
                if c.matrix.nrows() != d {
                    return Err(Error::Dimension { expected: d, got: c.matrix.nrows() });
                }
            }
            if let Some(c) = &emf.volumetric {
                if c.h_eff.nrows() != d {
                    return Err(Error::Dimension { expected: d, got: c.h_eff.nrows() });
                }
            }
        }
        Ok(())
    }

    /// Per-PB block norms of UE `k`.
    pub fn block_norms(&self, k: usize) -> Vec<f64> {
        block_norms(&self.channels[k], self.antennas_per_pb)
    }

    /// A UE whose requirement exceeds what all PBs at full cap can deliver.
    pub fn cap_infeasible_ue(&self) -> Option<usize> {
        let p = self.p_max?;
        (0..self.channels.len()).find(|&k| !single_ue_feasible(&self.block_norms(k), self.deltas[k], p))
    }
}

pub(crate) fn block_norms(h: &CVec, m: usize) -> Vec<f64> {
    h.as_slice()
        .chunks(m)
        .map(|c| c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
        .collect()
}

/// `Tr(V^T h h^H)`.
pub fn incident_power(v: &CMat, h: &CVec) -> Result<f64> {
    if v.nrows() != h.len() || v.ncols() != h.len() {
        return Err(Error::Dimension {
            expected: h.len(),
            got: v.nrows(),
        });
    }
    Ok(trace_t_rank1(v, h))
}

/// `sum_k' |v_k'^T h|^2`.
pub fn incident_power_vectors(precoders: &[CVec], h: &CVec) -> Result<f64> {
    let mut total = 0.0;
    for v in precoders {
        if v.len() != h.len() {
            return Err(Error::Dimension {
                expected: h.len(),
                got: v.len(),
            });
        }
        total += v.dot(h).norm_sqr();
    }
    Ok(total)
}

/// `delta_1 / sum_n Tr(R_1n)`: a lower bound on the mean uncapped power.
pub fn jensen_lower_bound(stats: &ChannelStats, k: usize, delta: f64) -> Result<f64> {
    if k >= stats.ue_count() {
        return Err(Error::InvalidArgument(format!("UE {k} out of range")));
    }
    let tr = stats.total_trace(k);
    if !(tr > 0.0) {
        return Err(Error::Degenerate("total channel covariance trace is zero".into()));
    }
    Ok(delta / tr)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderSolution {
    pub method: Method,
    pub covariance: CMat,
    pub precoders: Vec<CVec>,
    pub pb_powers: Vec<f64>,
    pub total_power: f64,
    pub report: SolveReport,
    /// Objective after each accepted outer iteration (SCA and MRT).
    pub history: Vec<f64>,
    /// Why the design failed, when it did.
    pub diagnosis: Option<String>,
}

impl PrecoderSolution {
    pub(crate) fn from_precoders(method: Method, precoders: Vec<CVec>, m: usize, report: SolveReport) -> Self {
        let d = precoders.first().map_or(0, |v| v.len());
        let mut covariance = CMat::zeros(d, d);
        for v in &precoders {
            covariance += outer(v);
        }
        let pb_powers = pb_powers(&covariance, m);
        let total_power = trace_re(&covariance);
        PrecoderSolution {
            method,
            covariance,
            precoders,
            pb_powers,
            total_power,
            report,
            history: Vec::new(),
            diagnosis: None,
        }
    }

    pub(crate) fn from_covariance(method: Method, covariance: CMat, m: usize, report: SolveReport) -> Self {
        let precoders = extract_precoders(&covariance);
        let pb_powers = pb_powers(&covariance, m);
        let total_power = trace_re(&covariance);
        PrecoderSolution {
            method,
            covariance,
            precoders,
            pb_powers,
            total_power,
            report,
            history: Vec::new(),
            diagnosis: None,
        }
    }

    pub(crate) fn infeasible(method: Method, d: usize, m: usize, report: SolveReport, diagnosis: Option<String>) -> Self {
        PrecoderSolution {
            method,
            covariance: CMat::zeros(d, d),
            precoders: Vec::new(),
            pb_powers: vec![0.0; d / m.max(1)],
            total_power: f64::NAN,
            report,
            history: Vec::new(),
            diagnosis,
        }
    }

    pub fn status(&self) -> SolveStatus {
        self.report.status
    }

    pub fn is_optimal(&self) -> bool {
        self.report.is_optimal()
    }

    /// Number of energy beams, i.e. the extracted rank.
    pub fn rank(&self) -> usize {
        self.precoders.len()
    }

    pub fn total_power_dbw(&self) -> f64 {
        linear_to_db(self.total_power)
    }

    pub fn incident_power(&self, h: &CVec) -> f64 {
        trace_t_rank1(&self.covariance, h)
    }

    /// Precoder rows `(k', n, m, re, im)` and a `key,value` summary.
    pub fn write_csv(&self, precoder_path: &Path, summary_path: &Path, m: usize) -> Result<()> {
        crate::channel::write_stacked_csv(&self.precoders, m, precoder_path)?;
        let mut w = csv::Writer::from_path(summary_path).map_err(|e| Error::csv(summary_path, e))?;
        let mut rows: Vec<(String, String)> = vec![
            ("method".into(), self.method.to_string()),
            ("status".into(), self.report.status.to_string()),
            ("total_power_w".into(), self.total_power.to_string()),
            ("total_power_dbw".into(), self.total_power_dbw().to_string()),
            ("iterations".into(), self.report.iterations.to_string()),
            ("rank".into(), self.rank().to_string()),
        ];
        for (n, p) in self.pb_powers.iter().enumerate() {
            rows.push((format!("pb_power_w_{n}"), p.to_string()));
        }
        w.write_record(["key", "value"]).map_err(|e| Error::csv(summary_path, e))?;
        for (k, v) in rows {
            w.write_record([k, v]).map_err(|e| Error::csv(summary_path, e))?;
        }
        w.flush().map_err(|e| Error::io(summary_path, e))
    }
}

/// Per-PB power `sum_m V_{nM+m, nM+m}`.
pub fn pb_powers(v: &CMat, m: usize) -> Vec<f64> {
    let n = v.nrows() / m.max(1);
    (0..n).map(|b| (0..m).map(|i| v[(b * m + i, b * m + i)].re).sum()).collect()
}

/// `sqrt(lambda_i) u_i` for eigenvalues above `1e-9 Tr(V)`, largest first.
pub fn extract_precoders(v: &CMat) -> Vec<CVec> {
    let tr = trace_re(v);
    if !(tr > 0.0) {
        return Vec::new();
    }
    let (vals, vecs) = hermitian_eig(v);
    (0..vals.len())
        .rev()
        .filter(|&i| vals[i] > 1e-9 * tr)
        .map(|i| vecs.column(i) * C64::new(vals[i].sqrt(), 0.0))
        .collect()
}

pub(crate) fn zero_report() -> SolveReport {
    SolveReport {
        status: SolveStatus::Optimal,
        objective: 0.0,
        dual_bound: 0.0,
        primal_residual: 0.0,
        dual_residual: 0.0,
        iterations: 0,
        wall_time: Duration::ZERO,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::frobenius;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_vec(d: usize, rng: &mut ChaCha8Rng) -> CVec {
        CVec::from_fn(d, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
    }

    #[test]
    fn scalar_incident_power() {
        let v = CVec::from_element(1, C64::new(2f64.sqrt(), 0.0));
        let h = CVec::from_element(1, C64::new(1.0, 0.0));
        assert!((incident_power_vectors(&[v.clone()], &h).unwrap() - 2.0).abs() < 1e-15);
        assert!((incident_power(&outer(&v), &h).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn vector_and_trace_forms_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let vs: Vec<CVec> = (0..3).map(|_| rand_vec(12, &mut rng)).collect();
            let h = rand_vec(12, &mut rng);
            let v = vs.iter().map(outer).fold(CMat::zeros(12, 12), |a, b| a + b);
            let a = incident_power_vectors(&vs, &h).unwrap();
            let b = incident_power(&v, &h).unwrap();
            assert!((a - b).abs() <= 1e-12 * a);
        }
        assert!(incident_power(&CMat::zeros(3, 3), &rand_vec(4, &mut rng)).is_err());
    }

    #[test]
    fn mrt_direction_gives_p_times_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = rand_vec(8, &mut rng);
        let p = 3.0;
        let v = h.map(|z| z.conj()) * C64::new((p / h.norm_squared()).sqrt(), 0.0);
        let got = incident_power_vectors(&[v], &h).unwrap();
        let want = p * h.norm_squared();
        assert!((got - want).abs() <= 1e-12 * want);
    }

    #[test]
    fn extraction_reassembles() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let vs: Vec<CVec> = (0..2).map(|_| rand_vec(6, &mut rng)).collect();
        let v = vs.iter().map(outer).fold(CMat::zeros(6, 6), |a, b| a + b);
        let sol = PrecoderSolution::from_covariance(Method::Sdp, v.clone(), 2, zero_report());
        assert_eq!(sol.rank(), 2);
        let back = sol.precoders.iter().map(outer).fold(CMat::zeros(6, 6), |a, b| a + b);
        assert!(frobenius(&(back - &v)) <= 1e-9 * trace_re(&v));
        assert!((sol.total_power - trace_re(&v)).abs() <= 1e-12 * sol.total_power);
        assert!((sol.pb_powers.iter().sum::<f64>() - sol.total_power).abs() <= 1e-12 * sol.total_power);
    }
}
