//! Rician channels between PB arrays and UEs, uplink pilots and LS estimates.
//!
//! Stacked vectors are PB-major: entry `n * M + m` is antenna `m` of PB `n`.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::geometry::{PbEntry, Point3, StripeLayout};
use crate::harvester::EhCurve;
use crate::linalg::{hermitian_eig, outer, trace_re, CMat, CVec, C64};
use crate::{Error, Result};

/// Angular spread of the local scattering model, degrees.
pub const DEFAULT_ANGULAR_SPREAD_DEG: f64 = 10.0;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

fn distance(a: &Point3, b: &Point3) -> Result<f64> {
    let d = (a - b).norm();
    if d == 0.0 {
        Err(Error::SingularDistance)
    } else {
        Ok(d)
    }
}

/// Indoor LOS path loss in dB for distance `d` m and frequency `f` GHz.
pub fn pathloss_los_db(d: f64, f: f64) -> f64 {
    -17.3 * d.log10() - 20.0 * f.log10() - 32.4
}

/// Indoor NLOS path loss in dB, never above the LOS value.
pub fn pathloss_nlos_db(d: f64, f: f64) -> f64 {
    let nlos = -38.3 * d.log10() - 24.9 * f.log10() - 17.3;
    nlos.min(pathloss_los_db(d, f))
}

pub fn pathloss_los(pb_pos: &Point3, ue_pos: &Point3, f: f64) -> Result<f64> {
    Ok(pathloss_los_db(distance(pb_pos, ue_pos)?, f))
}

pub fn pathloss_nlos(pb_pos: &Point3, ue_pos: &Point3, f: f64) -> Result<f64> {
    Ok(pathloss_nlos_db(distance(pb_pos, ue_pos)?, f))
}

/// Sine of the azimuth seen from the array, relative to its boresight.
/// A point straight below the array gets 0.
pub fn sin_theta(pb: &PbEntry, point: &Point3) -> f64 {
    let dxy = ((pb.reference.x - point.x).powi(2) + (pb.reference.y - point.y).powi(2)).sqrt();
    if dxy == 0.0 {
        return 0.0;
    }
    ((pb.axis.coord(&pb.reference) - pb.axis.coord(point)).abs() / dxy).min(1.0)
}

/// Geometric LOS channel from `pb` to `point`.
pub fn los_vector(pb: &PbEntry, point: &Point3, f_ghz: f64) -> Result<CVec> {
    let d = distance(&pb.reference, point)?;
    let lambda = crate::geometry::wavelength(f_ghz);
    let amp = db_to_linear(pathloss_los_db(d, f_ghz)).sqrt();
    let phi = 2.0 * PI * (d / lambda).fract();
    let st = sin_theta(pb, point);
    let m = pb.antennas.len();
    Ok(CVec::from_fn(m, |i, _| C64::from_polar(amp, phi - i as f64 * PI * st)))
}

/// Stacked LOS vector over all PBs of the layout.
pub fn stacked_los(layout: &StripeLayout, point: &Point3) -> Result<CVec> {
    let m = layout.antennas_per_pb;
    let mut out = CVec::zeros(layout.dim());
    for (n, pb) in layout.pbs.iter().enumerate() {
        out.rows_mut(n * m, m).copy_from(&los_vector(pb, point, layout.room.frequency_ghz)?);
    }
    Ok(out)
}

/// Gaussian local-scattering correlation for a half-wavelength array.
///
/// The phase ramp follows the LOS steering convention so the scattering
/// cluster is centred on the LOS azimuth.
pub fn scattering_covariance(beta_nlos: f64, sin_theta: f64, m: usize, spread_rad: f64) -> CMat {
    let cos_theta = (1.0 - sin_theta * sin_theta).max(0.0).sqrt();
    CMat::from_fn(m, m, |l, k| {
        let diff = l as f64 - k as f64;
        let phase = -PI * diff * sin_theta;
        let damp = (-(spread_rad * spread_rad) * (PI * diff * cos_theta).powi(2) / 2.0).exp();
        C64::from_polar(beta_nlos * damp, phase)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UeSpec {
    pub position: [f64; 3],
    /// Energy target per unit block, joules.
    pub energy_target: f64,
    pub pilot_index: usize,
    /// Uplink pilot power, watts.
    pub pilot_power: f64,
    /// Proximity radius for the exposure constraints, meters.
    pub proximity_radius: f64,
    #[serde(default)]
    pub eh_curve: EhCurve,
}

impl UeSpec {
    pub fn new(position: [f64; 3]) -> Self {
        UeSpec {
            position,
            energy_target: 1.0,
            pilot_index: 0,
            pilot_power: 0.01,
            proximity_radius: 0.02,
            eh_curve: EhCurve::default(),
        }
    }

    pub fn point(&self) -> Point3 {
        Point3::from(self.position)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.energy_target >= 0.0) {
            return Err(Error::InvalidArgument("energy target must be non-negative".into()));
        }
        if !(self.pilot_power >= 0.0) {
            return Err(Error::InvalidArgument("pilot power must be non-negative".into()));
        }
        if !(self.proximity_radius > 0.0) {
            return Err(Error::InvalidArgument("proximity radius must be positive".into()));
        }
        self.eh_curve.validate()
    }
}

/// First and second order statistics of one PB-UE link.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkStats {
    pub beta_los: f64,
    pub beta_nlos: f64,
    pub los: CVec,
    /// `E[h h^H]`, LOS outer product included.
    pub covariance: CMat,
    /// `F` with `F F^H = covariance - los los^H`.
    scatter_factor: CMat,
}

impl LinkStats {
    pub fn new(beta_los: f64, beta_nlos: f64, los: CVec, covariance: CMat) -> Result<Self> {
        let scatter = &covariance - outer(&los);
        let (vals, vecs) = hermitian_eig(&scatter);
        let tr = trace_re(&covariance).abs();
        let m = los.len();
        let mut factor = CMat::zeros(m, m);
        for (i, &lam) in vals.iter().enumerate() {
            if lam < -1e-10 * tr {
                return Err(Error::ModelInconsistency(format!(
                    "scattering covariance has eigenvalue {lam:.3e} (trace {tr:.3e})"
                )));
            }
            if lam > 0.0 {
                factor.set_column(i, &(vecs.column(i) * C64::new(lam.sqrt(), 0.0)));
            }
        }
        Ok(LinkStats {
            beta_los,
            beta_nlos,
            los,
            covariance,
            scatter_factor: factor,
        })
    }

    fn draw(&self, rng: &mut impl Rng) -> CVec {
        let m = self.los.len();
        let w = CVec::from_fn(m, |_, _| cn01(rng));
        &self.los + &self.scatter_factor * w
    }
}

/// Circularly-symmetric complex normal with unit variance.
pub fn cn01(rng: &mut impl Rng) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Link statistics indexed `[k][n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStats {
    pub antennas_per_pb: usize,
    pub links: Vec<Vec<LinkStats>>,
}

impl ChannelStats {
    pub fn compute(layout: &StripeLayout, ues: &[UeSpec], spread_deg: f64, with_nlos: bool) -> Result<Self> {
        let f = layout.room.frequency_ghz;
        let m = layout.antennas_per_pb;
        let spread = spread_deg.to_radians();
        let links = ues
            .iter()
            .map(|ue| {
                let p = ue.point();
                layout
                    .pbs
                    .iter()
                    .map(|pb| {
                        let d = distance(&pb.reference, &p)?;
                        let beta_los = db_to_linear(pathloss_los_db(d, f));
                        let beta_nlos = if with_nlos {
                            db_to_linear(pathloss_nlos_db(d, f))
                        } else {
                            0.0
                        };
                        let los = los_vector(pb, &p, f)?;
                        let cov = scattering_covariance(beta_nlos, sin_theta(pb, &p), m, spread) + outer(&los);
                        LinkStats::new(beta_los, beta_nlos, los, cov)
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ChannelStats {
            antennas_per_pb: m,
            links,
        })
    }

    pub fn ue_count(&self) -> usize {
        self.links.len()
    }

    pub fn pb_count(&self) -> usize {
        self.links.first().map_or(0, |l| l.len())
    }

    /// Stacked LOS mean of UE `k`.
    pub fn mean(&self, k: usize) -> CVec {
        crate::linalg::stack(&self.links[k].iter().map(|l| l.los.clone()).collect::<Vec<_>>())
    }

    /// `sum_n Tr(R_kn)`.
    pub fn total_trace(&self, k: usize) -> f64 {
        self.links[k].iter().map(|l| trace_re(&l.covariance)).sum()
    }
}

/// Stacked per-UE channel vectors with `M` antennas per PB.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub antennas_per_pb: usize,
    pub per_ue: Vec<CVec>,
}

impl ChannelRealization {
    pub fn block(&self, k: usize, n: usize) -> CVec {
        let m = self.antennas_per_pb;
        self.per_ue[k].rows(n * m, m).into_owned()
    }

    pub fn pb_count(&self) -> usize {
        self.per_ue.first().map_or(0, |h| h.len() / self.antennas_per_pb)
    }

    /// Rows `(k, n, m, re, im)`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_stacked_csv(&self.per_ue, self.antennas_per_pb, path)
    }
}

pub(crate) fn write_stacked_csv(vectors: &[CVec], m: usize, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(["k", "n", "m", "re", "im"]).map_err(|e| Error::csv(path, e))?;
    for (k, h) in vectors.iter().enumerate() {
        for (i, z) in h.iter().enumerate() {
            w.write_record([
                k.to_string(),
                (i / m).to_string(),
                (i % m).to_string(),
                z.re.to_string(),
                z.im.to_string(),
            ])
            .map_err(|e| Error::csv(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Draw `h_kn = mean + CN(0, R_kn - mean mean^H)` for every link.
pub fn draw_realization(stats: &ChannelStats, rng: &mut impl Rng) -> ChannelRealization {
    let per_ue = stats
        .links
        .iter()
        .map(|row| {
            let blocks: Vec<CVec> = row.iter().map(|l| l.draw(rng)).collect();
            crate::linalg::stack(&blocks)
        })
        .collect();
    ChannelRealization {
        antennas_per_pb: stats.antennas_per_pb,
        per_ue,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PilotConfig {
    /// Coherence block length in channel uses.
    pub tau: usize,
    pub tau_p: usize,
    /// Receiver noise power, watts.
    pub noise_power: f64,
}

impl PilotConfig {
    pub fn validate(&self, k: usize) -> Result<()> {
        if self.tau_p < k || self.tau_p > self.tau || self.tau_p == 0 {
            return Err(Error::InvalidArgument(format!(
                "need K <= tau_p <= tau, got K={k} tau_p={} tau={}",
                self.tau_p, self.tau
            )));
        }
        if !(self.noise_power >= 0.0) {
            return Err(Error::InvalidArgument("noise power must be non-negative".into()));
        }
        Ok(())
    }

    /// Pilot `i`: row `i` of the `tau_p`-point DFT, so `||psi||^2 = tau_p`.
    pub fn pilot(&self, i: usize) -> CVec {
        let tp = self.tau_p as f64;
        CVec::from_fn(self.tau_p, |t, _| C64::from_polar(1.0, -2.0 * PI * (i * t) as f64 / tp))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstimate {
    pub antennas_per_pb: usize,
    pub per_ue: Vec<CVec>,
    pub pilot_powers: Vec<f64>,
    pub tau_p: usize,
    pub noise_power: f64,
}

impl ChannelEstimate {
    /// Perfect CSI: the estimate equals the realization.
    pub fn exact(real: &ChannelRealization) -> Self {
        ChannelEstimate {
            antennas_per_pb: real.antennas_per_pb,
            per_ue: real.per_ue.clone(),
            pilot_powers: vec![f64::INFINITY; real.per_ue.len()],
            tau_p: 0,
            noise_power: 0.0,
        }
    }

    pub fn block(&self, k: usize, n: usize) -> CVec {
        let m = self.antennas_per_pb;
        self.per_ue[k].rows(n * m, m).into_owned()
    }

    pub fn pb_count(&self) -> usize {
        self.per_ue.first().map_or(0, |h| h.len() / self.antennas_per_pb)
    }

    pub fn dim(&self) -> usize {
        self.per_ue.first().map_or(0, |h| h.len())
    }

    /// Per-PB block norms `||h_kn||` of UE `k`.
    pub fn block_norms(&self, k: usize) -> Vec<f64> {
        let m = self.antennas_per_pb;
        self.per_ue[k].as_slice().chunks(m).map(|c| c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()).collect()
    }
}

/// Simulate the uplink pilot phase at every PB and correlate with each pilot.
pub fn ls_estimate(
    real: &ChannelRealization,
    pilots: &PilotConfig,
    ues: &[UeSpec],
    rng: &mut impl Rng,
) -> Result<ChannelEstimate> {
    let k = real.per_ue.len();
    if ues.len() != k {
        return Err(Error::Dimension {
            expected: k,
            got: ues.len(),
        });
    }
    pilots.validate(k)?;
    let mut used = vec![false; pilots.tau_p];
    for ue in ues {
        if ue.pilot_index >= pilots.tau_p {
            return Err(Error::InvalidArgument(format!(
                "pilot index {} not below tau_p = {}",
                ue.pilot_index, pilots.tau_p
            )));
        }
        if used[ue.pilot_index] {
            return Err(Error::InvalidArgument(format!("pilot {} assigned twice", ue.pilot_index)));
        }
        used[ue.pilot_index] = true;
        if ue.pilot_power == 0.0 {
            return Err(Error::DivisionByZero("pilot power of a served UE is zero".into()));
        }
    }
    let m = real.antennas_per_pb;
    let dim = real.per_ue.first().map_or(0, |h| h.len());
    let tp = pilots.tau_p;
    let psi: Vec<CVec> = ues.iter().map(|u| pilots.pilot(u.pilot_index)).collect();
    let sigma = pilots.noise_power.sqrt();

    // Y = sum_k sqrt(p_k) h_k psi_k^T + W over the stacked antennas.
    let mut y = CMat::zeros(dim, tp);
    for (kk, ue) in ues.iter().enumerate() {
        let amp = C64::new(ue.pilot_power.sqrt(), 0.0);
        y += (&real.per_ue[kk] * amp) * psi[kk].transpose();
    }
    if sigma > 0.0 {
        for z in y.iter_mut() {
            *z += cn01(rng) * sigma;
        }
    }
    let per_ue = ues
        .iter()
        .enumerate()
        .map(|(kk, ue)| {
            let conj = psi[kk].map(|z| z.conj());
            &y * conj / C64::new(ue.pilot_power.sqrt() * tp as f64, 0.0)
        })
        .collect();
    Ok(ChannelEstimate {
        antennas_per_pb: m,
        per_ue,
        pilot_powers: ues.iter().map(|u| u.pilot_power).collect(),
        tau_p: tp,
        noise_power: pilots.noise_power,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_layout, RoomGeometry};
    use crate::linalg::{is_hermitian, min_eigenvalue};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn layout(m: usize, n: usize) -> StripeLayout {
        build_layout(&RoomGeometry::new(24.0, 3.0, 2.5, 4.0).unwrap(), m, n, 0.1).unwrap()
    }

    #[test]
    fn pathloss_values() {
        let o = Point3::zeros();
        let at = |d: f64| Point3::new(d, 0.0, 0.0);
        assert!((pathloss_los(&o, &at(1.0), 1.0).unwrap() + 32.4).abs() < 1e-12);
        assert!((pathloss_los(&o, &at(3.0), 4.0).unwrap() + 52.695398).abs() < 1e-5);
        assert!((pathloss_los(&o, &at(3.0), 28.0).unwrap() + 69.597358).abs() < 1e-5);
        assert!((pathloss_los(&o, &at(10.0), 4.0).unwrap() + 61.741200).abs() < 1e-5);
        assert!((pathloss_nlos(&o, &at(3.0), 4.0).unwrap() + 52.695398).abs() < 1e-5);
        assert!((pathloss_nlos(&o, &at(10.0), 4.0).unwrap() + 70.591294).abs() < 1e-5);
        assert_eq!(pathloss_nlos(&o, &at(1.0), 1.0).unwrap(), -32.4);
        assert!(matches!(pathloss_los(&o, &o, 4.0), Err(Error::SingularDistance)));
    }

    #[test]
    fn los_vector_norm_and_symmetry() {
        let lay = layout(4, 8);
        let pb = &lay.pbs[0];
        let p = Point3::new(2.0, 3.5, 1.0);
        let h = los_vector(pb, &p, 4.0).unwrap();
        let beta = db_to_linear(pathloss_los(&pb.reference, &p, 4.0).unwrap());
        assert!((h.norm_squared() - 4.0 * beta).abs() <= 1e-12 * 4.0 * beta);
        // Directly in front of the reference element: equal entries.
        let front = Point3::new(pb.reference.x, 2.0, 0.5);
        let hf = los_vector(pb, &front, 4.0).unwrap();
        assert!(hf.iter().all(|z| (z - hf[0]).norm() < 1e-18));
        // Straight below: sin(theta) defined as 0.
        let below = Point3::new(pb.reference.x, pb.reference.y, 0.0);
        assert_eq!(sin_theta(pb, &below), 0.0);
    }

    #[test]
    fn single_antenna_magnitude() {
        let lay = layout(1, 4);
        let p = Point3::new(1.0, 1.0, 1.0);
        let h = los_vector(&lay.pbs[2], &p, 4.0).unwrap();
        let beta = db_to_linear(pathloss_los(&lay.pbs[2].reference, &p, 4.0).unwrap());
        assert!((h[0].norm() - beta.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn covariance_trace_relation() {
        let lay = layout(4, 8);
        let ues = vec![UeSpec::new([1.0, 2.0, 0.5]), UeSpec::new([5.0, 5.0, 1.5])];
        let stats = ChannelStats::compute(&lay, &ues, 10.0, true).unwrap();
        for row in &stats.links {
            for l in row {
                let tr = trace_re(&l.covariance);
                let expect = 4.0 * (l.beta_los + l.beta_nlos);
                assert!((tr - expect).abs() <= 1e-9 * expect);
                assert!(is_hermitian(&l.covariance, 1e-12));
                assert!(min_eigenvalue(&l.covariance) >= -1e-12 * tr);
                assert!((l.los.norm_squared() - 4.0 * l.beta_los).abs() <= 1e-9 * l.beta_los);
            }
        }
    }

    #[test]
    fn no_scattering_gives_the_mean() {
        let lay = layout(4, 4);
        let ues = vec![UeSpec::new([1.0, 2.0, 0.5])];
        let stats = ChannelStats::compute(&lay, &ues, 10.0, false).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let real = draw_realization(&stats, &mut rng);
        assert_eq!(real.per_ue[0], stats.mean(0));
    }

    #[test]
    fn draws_are_reproducible() {
        let lay = layout(4, 4);
        let ues = vec![UeSpec::new([1.0, 2.0, 0.5])];
        let stats = ChannelStats::compute(&lay, &ues, 10.0, true).unwrap();
        let a = draw_realization(&stats, &mut ChaCha8Rng::seed_from_u64(9));
        let b = draw_realization(&stats, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn inconsistent_covariance_is_rejected() {
        let los = CVec::from_element(2, C64::new(1.0, 0.0));
        let cov = CMat::identity(2, 2) * C64::new(0.5, 0.0);
        assert!(matches!(LinkStats::new(1.0, 0.0, los, cov), Err(Error::ModelInconsistency(_))));
    }

    #[test]
    fn pilots_are_orthogonal() {
        let cfg = PilotConfig {
            tau: 100,
            tau_p: 5,
            noise_power: 0.0,
        };
        for i in 0..5 {
            for j in 0..5 {
                let g = cfg.pilot(i).dotc(&cfg.pilot(j));
                let expect = if i == j { 5.0 } else { 0.0 };
                assert!((g - C64::new(expect, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn noiseless_estimate_is_exact() {
        let lay = layout(4, 4);
        let mut ues = vec![UeSpec::new([1.0, 2.0, 0.5]), UeSpec::new([4.0, 1.0, 1.0])];
        ues[1].pilot_index = 1;
        let stats = ChannelStats::compute(&lay, &ues, 10.0, true).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let real = draw_realization(&stats, &mut rng);
        let cfg = PilotConfig {
            tau: 1000,
            tau_p: 2,
            noise_power: 0.0,
        };
        let est = ls_estimate(&real, &cfg, &ues, &mut rng).unwrap();
        for k in 0..2 {
            let err = (&est.per_ue[k] - &real.per_ue[k]).norm() / real.per_ue[k].norm();
            assert!(err < 1e-12, "{err}");
        }
    }

    #[test]
    fn estimate_rejects_bad_pilots() {
        let lay = layout(1, 4);
        let mut ues = vec![UeSpec::new([1.0, 2.0, 0.5]), UeSpec::new([4.0, 1.0, 1.0])];
        let stats = ChannelStats::compute(&lay, &ues, 10.0, false).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let real = draw_realization(&stats, &mut rng);
        let cfg = PilotConfig {
            tau: 1000,
            tau_p: 2,
            noise_power: 1e-13,
        };
        assert!(ls_estimate(&real, &cfg, &ues, &mut rng).is_err());
        ues[1].pilot_index = 1;
        ues[1].pilot_power = 0.0;
        assert!(matches!(
            ls_estimate(&real, &cfg, &ues, &mut rng),
            Err(Error::DivisionByZero(_))
        ));
    }
}
