//! RF exposure: point power, power density around UEs and region averages.
//!
//! Every exposure quantity is a trace functional `Tr(V^T H)` of the transmit
//! covariance, so the work here is assembling the matrices `H` by quadrature.
//! Outer products are accumulated in batches through two real matrix
//! products, `Re = A A^T + B B^T` and `Im = B A^T - A B^T` for `X = A + iB`.

use std::f64::consts::PI;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{stacked_los, UeSpec};
use crate::geometry::{Point3, StripeLayout};
use crate::linalg::{hermitian_eig, hermitize, min_eigenvalue, reassemble, trace_re, trace_t, trace_t_rank1, CMat, CVec, RMat, C64};
use crate::{Error, Result};

/// How the angular integral over a sphere is weighted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeasureMode {
    /// `d(omega) d(upsilon)` with no Jacobian; radial integral without `r^2`.
    #[default]
    Literal,
    /// Solid-angle measure `sin(omega) d(omega) d(upsilon)` and the `r^2`
    /// shell factor, so region integrals are true volume integrals.
    Spherical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureSpec {
    pub n_upsilon: usize,
    pub n_omega: usize,
    pub n_radial: usize,
    /// Target spacing of the volume grid in meters; `None` means `lambda / 8`.
    pub volume_spacing: Option<f64>,
    pub measure: MeasureMode,
    /// Height range of the occupied region; `None` means `[0, G - G']`.
    pub region_z: Option<[f64; 2]>,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            n_upsilon: 16,
            n_omega: 8,
            n_radial: 8,
            volume_spacing: None,
            measure: MeasureMode::Literal,
            region_z: None,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_upsilon < 8 || self.n_omega < 8 {
            return Err(Error::InvalidArgument("sphere grid needs at least 8 x 8 points".into()));
        }
        if self.n_radial == 0 {
            return Err(Error::InvalidArgument("need at least one radial point".into()));
        }
        if let Some(h) = self.volume_spacing {
            if !(h > 0.0) {
                return Err(Error::InvalidArgument("volume spacing must be positive".into()));
            }
        }
        if let Some([lo, hi]) = self.region_z {
            if !(hi > lo) {
                return Err(Error::InvalidArgument("region height range is empty".into()));
            }
        }
        Ok(())
    }

    pub fn spacing(&self, lambda: f64) -> f64 {
        self.volume_spacing.unwrap_or(lambda / 8.0)
    }

    pub fn region_z(&self, layout: &StripeLayout) -> [f64; 2] {
        self.region_z
            .unwrap_or([0.0, layout.room.ceiling_height - layout.room.proximity_floor])
    }
}

const BATCH: usize = 256;

/// `sum_i w_i h(p_i) h(p_i)^H` over weighted points.
fn accumulate(layout: &StripeLayout, points: &[(Point3, f64)]) -> Result<CMat> {
    let d = layout.dim();
    let parts: Vec<Result<(RMat, RMat)>> = points
        .par_chunks(BATCH)
        .map(|chunk| {
            let b = chunk.len();
            let mut a = RMat::zeros(d, b);
            let mut im = RMat::zeros(d, b);
            for (j, (p, w)) in chunk.iter().enumerate() {
                let h = stacked_los(layout, p)? * C64::new(w.sqrt(), 0.0);
                for i in 0..d {
                    a[(i, j)] = h[i].re;
                    im[(i, j)] = h[i].im;
                }
            }
            let re = &a * a.transpose() + &im * im.transpose();
            let imag = &im * a.transpose() - &a * im.transpose();
            Ok((re, imag))
        })
        .collect();
    let mut re = RMat::zeros(d, d);
    let mut imag = RMat::zeros(d, d);
    for part in parts {
        let (r, i) = part?;
        re += r;
        imag += i;
    }
    let mut out = CMat::from_fn(d, d, |i, j| C64::new(re[(i, j)], imag[(i, j)]));
    hermitize(&mut out);
    Ok(out)
}

/// Received LOS power `Tr(V^T h h^H)` at a point.
pub fn field_power_at_point(v: &CMat, point: &Point3, layout: &StripeLayout) -> Result<f64> {
    check_dim(v, layout)?;
    let h = stacked_los(layout, point)?;
    Ok(trace_t_rank1(v, &h))
}

/// Same as [`field_power_at_point`] for precoder vectors: `sum |v^T h|^2`.
pub fn field_power_vectors(precoders: &[CVec], point: &Point3, layout: &StripeLayout) -> Result<f64> {
    let h = stacked_los(layout, point)?;
    Ok(precoders.iter().map(|v| v.dot(&h).norm_sqr()).sum())
}

fn check_dim(v: &CMat, layout: &StripeLayout) -> Result<()> {
    if v.nrows() != layout.dim() || v.ncols() != layout.dim() {
        return Err(Error::Dimension {
            expected: layout.dim(),
            got: v.nrows(),
        });
    }
    Ok(())
}

fn sphere_points(center: &Point3, r: f64, quad: &QuadratureSpec, extra_weight: f64) -> Vec<(Point3, f64)> {
    let du = 2.0 * PI / quad.n_upsilon as f64;
    let dw = PI / quad.n_omega as f64;
    let mut pts = Vec::with_capacity(quad.n_upsilon * quad.n_omega);
    for j in 0..quad.n_omega {
        let om = (j as f64 + 0.5) * dw;
        let jac = match quad.measure {
            MeasureMode::Literal => 1.0,
            MeasureMode::Spherical => om.sin(),
        };
        for i in 0..quad.n_upsilon {
            let up = (i as f64 + 0.5) * du;
            let p = center + Point3::new(r * om.sin() * up.cos(), r * om.sin() * up.sin(), r * om.cos());
            pts.push((p, du * dw * jac * extra_weight));
        }
    }
    pts
}

fn check_sphere_clear(layout: &StripeLayout, center: &Point3, r: f64) -> Result<()> {
    if let Some(a) = layout.antennas().find(|a| (*a - center).norm() <= r) {
        return Err(Error::Geometry(format!(
            "antenna at ({:.3}, {:.3}, {:.3}) lies inside the {r} m sphere",
            a.x, a.y, a.z
        )));
    }
    Ok(())
}

/// `H_k(r)`: the LOS outer product integrated over the sphere of radius `r`
/// around the UE.
pub fn sphere_average_matrix(ue: &UeSpec, r: f64, layout: &StripeLayout, quad: &QuadratureSpec) -> Result<CMat> {
    if !(r > 0.0) {
        return Err(Error::InvalidArgument(format!("sphere radius {r} must be positive")));
    }
    quad.validate()?;
    let c = ue.point();
    check_sphere_clear(layout, &c, r)?;
    let h = accumulate(layout, &sphere_points(&c, r, quad, 1.0))?;
    Ok(floor_psd(h, "sphere matrix"))
}

/// Floor tiny negative eigenvalues, complaining if they are not tiny.
fn floor_psd(h: CMat, what: &str) -> CMat {
    let (vals, vecs) = hermitian_eig(&h);
    let tr = trace_re(&h).abs();
    if vals[0] < -1e-9 * tr {
        warn!("{what}: eigenvalue {:.3e} below tolerance (trace {tr:.3e})", vals[0]);
    }
    if vals[0] >= 0.0 {
        return h;
    }
    reassemble(&vals, &vecs, |l| Some(l.max(0.0)))
}

/// Expected power density on the sphere of radius `r`, W/m^2.
pub fn power_density(v: &CMat, ue: &UeSpec, r: f64, layout: &StripeLayout, quad: &QuadratureSpec) -> Result<f64> {
    check_dim(v, layout)?;
    let h = sphere_average_matrix(ue, r, layout, quad)?;
    Ok(trace_t(v, &h) / (4.0 * PI * r * r))
}

/// Radial derivative of [`power_density`], with the matrix derivative taken
/// by central differences of step `r/100`.
pub fn power_density_slope(v: &CMat, ue: &UeSpec, r: f64, layout: &StripeLayout, quad: &QuadratureSpec) -> Result<f64> {
    check_dim(v, layout)?;
    let step = r / 100.0;
    let h = sphere_average_matrix(ue, r, layout, quad)?;
    let hp = sphere_average_matrix(ue, r + step, layout, quad)?;
    let hm = sphere_average_matrix(ue, r - step, layout, quad)?;
    let dh = (hp - hm) / C64::new(2.0 * step, 0.0);
    Ok((trace_t(v, &dh) - 2.0 / r * trace_t(v, &h)) / (4.0 * PI * r * r))
}

/// Matrices and volumes of the occupied-region average.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMatrices {
    /// Integral of the LOS outer product over the region.
    pub region: CMat,
    /// Integral over each UE sphere.
    pub spheres: Vec<CMat>,
    pub v0: f64,
    pub vk: Vec<f64>,
}

/// Midpoint tensor grid over `[0, S]^2 x [z0, z1]`.
pub fn region_grid(layout: &StripeLayout, quad: &QuadratureSpec) -> Vec<(Point3, f64)> {
    let s = layout.room.side();
    let [z0, z1] = quad.region_z(layout);
    let h = quad.spacing(layout.room.wavelength());
    let nx = (s / h).ceil().max(1.0) as usize;
    let nz = ((z1 - z0) / h).ceil().max(1.0) as usize;
    let (dx, dz) = (s / nx as f64, (z1 - z0) / nz as f64);
    let w = dx * dx * dz;
    let mut pts = Vec::with_capacity(nx * nx * nz);
    for iz in 0..nz {
        let z = z0 + (iz as f64 + 0.5) * dz;
        for iy in 0..nx {
            let y = (iy as f64 + 0.5) * dx;
            for ix in 0..nx {
                pts.push((Point3::new((ix as f64 + 0.5) * dx, y, z), w));
            }
        }
    }
    pts
}

pub fn region_matrices(layout: &StripeLayout, ues: &[UeSpec], quad: &QuadratureSpec) -> Result<RegionMatrices> {
    quad.validate()?;
    let lambda = layout.room.wavelength();
    let spacing = quad.spacing(lambda);
    if spacing > lambda / 8.0 * (1.0 + 1e-12) {
        warn!("volume grid spacing {spacing:.4} m exceeds lambda/8 = {:.4} m", lambda / 8.0);
    }
    let s = layout.room.side();
    let [z0, z1] = quad.region_z(layout);
    for (k, ue) in ues.iter().enumerate() {
        let c = ue.point();
        let r = ue.proximity_radius;
        let inside = c.x - r >= 0.0 && c.x + r <= s && c.y - r >= 0.0 && c.y + r <= s && c.z - r >= z0 && c.z + r <= z1;
        if !inside {
            return Err(Error::Geometry(format!(
                "proximity sphere of UE {k} is not inside the occupied region (z in [{z0}, {z1}])"
            )));
        }
        check_sphere_clear(layout, &c, r)?;
    }

    let region = floor_psd(accumulate(layout, &region_grid(layout, quad))?, "region matrix");
    let spheres = ues
        .iter()
        .map(|ue| {
            let rk = ue.proximity_radius;
            let dr = rk / quad.n_radial as f64;
            let mut pts = Vec::new();
            for i in 0..quad.n_radial {
                let r = (i as f64 + 0.5) * dr;
                let shell = match quad.measure {
                    MeasureMode::Literal => 1.0,
                    MeasureMode::Spherical => r * r,
                };
                pts.extend(sphere_points(&ue.point(), r, quad, dr * shell));
            }
            Ok(floor_psd(accumulate(layout, &pts)?, "sphere volume matrix"))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RegionMatrices {
        region,
        spheres,
        v0: (z1 - z0) * s * s,
        vk: ues.iter().map(|u| 4.0 * PI * u.proximity_radius.powi(3) / 3.0).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProximityParams {
    /// Measurement radius `r0`, meters.
    pub radius: f64,
    /// Power density limit, W/m^2.
    pub theta1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumetricParams {
    /// Exposure level, watts.
    pub theta2: f64,
    /// Tolerated violation probability.
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProximityConstraint {
    pub matrix: CMat,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VolumetricConstraint {
    pub h_eff: CMat,
    /// PSD part of `h_eff`.
    pub positive: CMat,
    /// Negative definite part of `h_eff`.
    pub negative: CMat,
    pub bound: f64,
    pub v0: f64,
    pub vk: Vec<f64>,
}

/// Exposure constraints `Tr(V^T H) <= bound` in the form the precoders use.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmfConstraintSet {
    pub proximity: Vec<ProximityConstraint>,
    pub volumetric: Option<VolumetricConstraint>,
}

impl EmfConstraintSet {
    pub fn is_empty(&self) -> bool {
        self.proximity.is_empty() && self.volumetric.is_none()
    }

    /// Largest relative violation `(value - bound) / bound` over all constraints.
    pub fn max_violation(&self, v: &CMat) -> f64 {
        let mut worst: f64 = 0.0;
        for c in &self.proximity {
            worst = worst.max((trace_t(v, &c.matrix) - c.bound) / c.bound);
        }
        if let Some(c) = &self.volumetric {
            worst = worst.max((trace_t(v, &c.h_eff) - c.bound) / c.bound);
        }
        worst.max(0.0)
    }
}

/// Split a Hermitian matrix into PSD and negative definite parts.
/// Eigenvalues with `|l| <= 1e-12 max|l|` count as zero and go to the PSD part.
pub fn split_indefinite(h: &CMat) -> (CMat, CMat) {
    let (vals, vecs) = hermitian_eig(h);
    let scale = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let thr = 1e-12 * scale;
    let pos = reassemble(&vals, &vecs, |l| (l >= -thr).then_some(l));
    let neg = reassemble(&vals, &vecs, |l| (l < -thr).then_some(l));
    (pos, neg)
}

pub fn build_constraints(
    layout: &StripeLayout,
    ues: &[UeSpec],
    proximity: Option<ProximityParams>,
    volumetric: Option<VolumetricParams>,
    quad: &QuadratureSpec,
) -> Result<EmfConstraintSet> {
    let mut set = EmfConstraintSet::default();
    if let Some(p) = proximity {
        if !(p.theta1 > 0.0 && p.radius > 0.0) {
            return Err(Error::InvalidArgument("proximity limit and radius must be positive".into()));
        }
        let bound = 4.0 * PI * p.radius * p.radius * p.theta1;
        for ue in ues {
            set.proximity.push(ProximityConstraint {
                matrix: sphere_average_matrix(ue, p.radius, layout, quad)?,
                bound,
            });
        }
    }
    if let Some(p) = volumetric {
        if !(p.epsilon > 0.0 && p.epsilon < 1.0) {
            return Err(Error::InvalidArgument(format!("violation probability {} not in (0, 1)", p.epsilon)));
        }
        if !(p.theta2 > 0.0) {
            return Err(Error::InvalidArgument("exposure level must be positive".into()));
        }
        let rm = region_matrices(layout, ues, quad)?;
        let bound = p.epsilon * (rm.v0 - rm.vk.iter().sum::<f64>()) * p.theta2;
        if !(bound > 0.0) {
            return Err(Error::DegenerateRegion(bound));
        }
        let mut h_eff = rm.region.clone();
        for hk in &rm.spheres {
            h_eff -= hk;
        }
        hermitize(&mut h_eff);
        let (positive, negative) = split_indefinite(&h_eff);
        set.volumetric = Some(VolumetricConstraint {
            h_eff,
            positive,
            negative,
            bound,
            v0: rm.v0,
            vk: rm.vk,
        });
    }
    Ok(set)
}

/// `epsilon (V0 - sum V_k) theta2`.
pub fn volumetric_bound(v0: f64, vk: &[f64], theta2: f64, epsilon: f64) -> f64 {
    epsilon * (v0 - vk.iter().sum::<f64>()) * theta2
}

/// Smallest eigenvalue relative to the trace; diagnostics for PSD checks.
pub fn relative_min_eigenvalue(h: &CMat) -> f64 {
    min_eigenvalue(h) / trace_re(h).abs().max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{db_to_linear, pathloss_los};
    use crate::geometry::{build_layout, RoomGeometry};
    use crate::linalg::{frobenius, outer};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_layout(m: usize, n: usize) -> StripeLayout {
        build_layout(&RoomGeometry::new(24.0, 3.0, 2.5, 4.0).unwrap(), m, n, 0.1).unwrap()
    }

    fn random_psd(d: usize, rng: &mut ChaCha8Rng) -> CMat {
        let g = CMat::from_fn(d, d, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        &g * g.adjoint()
    }

    #[test]
    fn point_power_scalar_case() {
        let lay = small_layout(1, 4);
        let p = Point3::new(2.0, 1.0, 1.0);
        let mut v = CMat::zeros(4, 4);
        v[(1, 1)] = C64::new(2.5, 0.0);
        let got = field_power_at_point(&v, &p, &lay).unwrap();
        let beta = db_to_linear(pathloss_los(&lay.pbs[1].reference, &p, 4.0).unwrap());
        assert!((got - 2.5 * beta).abs() <= 1e-12 * got);
        assert_eq!(field_power_at_point(&CMat::zeros(4, 4), &p, &lay).unwrap(), 0.0);
    }

    #[test]
    fn vector_and_matrix_forms_agree() {
        let lay = small_layout(2, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let vs: Vec<CVec> = (0..2)
            .map(|_| CVec::from_fn(8, |_, _| C64::new(rng.random(), rng.random())))
            .collect();
        let v = vs.iter().map(outer).fold(CMat::zeros(8, 8), |a, b| a + b);
        let p = Point3::new(3.0, 2.0, 0.7);
        let a = field_power_at_point(&v, &p, &lay).unwrap();
        let b = field_power_vectors(&vs, &p, &lay).unwrap();
        assert!((a - b).abs() <= 1e-12 * a);
    }

    #[test]
    fn sphere_trace_is_sum_of_path_gains() {
        let lay = small_layout(2, 4);
        let ue = UeSpec::new([2.0, 3.0, 1.0]);
        let quad = QuadratureSpec::default();
        let r = 0.05;
        let h = sphere_average_matrix(&ue, r, &lay, &quad).unwrap();
        // Literal measure: each grid point carries du*dw of a 2 pi^2 total.
        let pts = sphere_points(&ue.point(), r, &quad, 1.0);
        let total_w: f64 = pts.iter().map(|p| p.1).sum();
        assert!((total_w - 2.0 * PI * PI).abs() < 1e-12);
        let expect: f64 = pts
            .iter()
            .map(|(p, w)| {
                w * lay
                    .pbs
                    .iter()
                    .map(|pb| 2.0 * db_to_linear(pathloss_los(&pb.reference, p, 4.0).unwrap()))
                    .sum::<f64>()
            })
            .sum();
        assert!((trace_re(&h) - expect).abs() <= 1e-10 * expect);
        assert!(relative_min_eigenvalue(&h) >= -1e-9);
    }

    #[test]
    fn spherical_weights_total_four_pi() {
        let quad = QuadratureSpec {
            n_upsilon: 32,
            n_omega: 32,
            measure: MeasureMode::Spherical,
            ..Default::default()
        };
        let total: f64 = sphere_points(&Point3::zeros(), 1.0, &quad, 1.0).iter().map(|p| p.1).sum();
        assert!((total - 4.0 * PI).abs() < 1e-3 * 4.0 * PI);
    }

    #[test]
    fn antenna_inside_sphere_is_rejected() {
        let lay = small_layout(1, 4);
        let a = lay.pbs[0].reference;
        let ue = UeSpec::new([a.x, a.y + 0.01, a.z - 0.01]);
        assert!(matches!(
            sphere_average_matrix(&ue, 0.05, &lay, &QuadratureSpec::default()),
            Err(Error::Geometry(_))
        ));
    }

    #[test]
    fn density_and_slope_are_linear_and_consistent() {
        let lay = small_layout(2, 4);
        let ue = UeSpec::new([2.0, 3.0, 1.0]);
        let quad = QuadratureSpec::default();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let v = random_psd(8, &mut rng);
        let r = 0.02;
        let pd = power_density(&v, &ue, r, &lay, &quad).unwrap();
        let pd2 = power_density(&(&v * C64::new(3.0, 0.0)), &ue, r, &lay, &quad).unwrap();
        assert!((pd2 - 3.0 * pd).abs() <= 1e-12 * pd2);
        assert_eq!(power_density(&CMat::zeros(8, 8), &ue, r, &lay, &quad).unwrap(), 0.0);
        assert!(power_density(&v, &ue, 0.0, &lay, &quad).is_err());

        let slope = power_density_slope(&v, &ue, r, &lay, &quad).unwrap();
        let e = 1e-4;
        let fd = (power_density(&v, &ue, r + e, &lay, &quad).unwrap() - power_density(&v, &ue, r - e, &lay, &quad).unwrap())
            / (2.0 * e);
        assert!((slope - fd).abs() <= 0.01 * fd.abs(), "{slope} vs {fd}");
        assert_eq!(power_density_slope(&CMat::zeros(8, 8), &ue, r, &lay, &quad).unwrap(), 0.0);
    }

    #[test]
    fn split_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let a = random_psd(6, &mut rng);
        let b = random_psd(6, &mut rng);
        let h = &a - &b * C64::new(0.7, 0.0);
        let (p, n) = split_indefinite(&h);
        assert!(frobenius(&(&p + &n - &h)) <= 1e-9 * frobenius(&h));
        assert!(min_eigenvalue(&p) >= -1e-10 * frobenius(&h));
        let (vals, _) = hermitian_eig(&n);
        assert!(vals.iter().all(|&l| l <= 1e-10 * frobenius(&h)));
    }

    #[test]
    fn volumes_and_bounds() {
        let room = RoomGeometry::new(24.0, 3.0, 2.5, 4.0).unwrap();
        assert!((room.occupied_volume() - 18.0).abs() < 1e-12);
        let vk = 4.0 * PI * 0.02f64.powi(3) / 3.0;
        assert!((vk - 3.351e-5).abs() < 1e-8);
        let bound = volumetric_bound(18.0, &[vk], 0.25, 1e-2);
        assert!((bound - 0.0450).abs() < 1e-4);
        let prox = 4.0 * PI * 0.015f64.powi(2) * 1000.0;
        assert!((prox - 2.827).abs() < 1e-3);
    }
}
