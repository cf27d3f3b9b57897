//! Room and radio-stripe deployment.
//!
//! The stripe wraps a square of side `L/4` at ceiling height `G`. Sides are
//! numbered counter-clockwise from the origin corner:
//! side 0 runs along +x at `y = 0`, side 1 along +y at `x = L/4`,
//! side 2 along -x at `y = L/4` and side 3 along -y at `x = 0`.

use std::fmt;
use std::io::Write;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub type Point3 = Vector3<f64>;

/// Speed of light divided by 1e9, so `lambda = C_GHZ / f` with `f` in GHz.
pub const C_GHZ: f64 = 0.299_792_458;

pub fn wavelength(f_ghz: f64) -> f64 {
    C_GHZ / f_ghz
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoomGeometry {
    /// Stripe length `L`; the room is a square of side `L/4`.
    pub side_length: f64,
    pub ceiling_height: f64,
    /// Height `G'` separating the proximity region of the stripes from the
    /// occupied region.
    pub proximity_floor: f64,
    pub frequency_ghz: f64,
}

impl RoomGeometry {
    pub fn new(side_length: f64, ceiling_height: f64, proximity_floor: f64, frequency_ghz: f64) -> Result<Self> {
        let room = RoomGeometry {
            side_length,
            ceiling_height,
            proximity_floor,
            frequency_ghz,
        };
        room.validate()?;
        Ok(room)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.side_length > 0.0) {
            return Err(Error::InvalidArgument("stripe length must be positive".into()));
        }
        if !(self.proximity_floor > 0.0 && self.proximity_floor < self.ceiling_height) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < G' < G, got G'={} G={}",
                self.proximity_floor, self.ceiling_height
            )));
        }
        if !(self.frequency_ghz > 0.0) {
            return Err(Error::InvalidArgument("frequency must be positive".into()));
        }
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        wavelength(self.frequency_ghz)
    }

    /// Side of the square room, `L/4`.
    pub fn side(&self) -> f64 {
        self.side_length / 4.0
    }

    /// Volume of the occupied region, `(G - G') L^2 / 16`.
    pub fn occupied_volume(&self) -> f64 {
        (self.ceiling_height - self.proximity_floor) * self.side() * self.side()
    }
}

/// `floor(x)`, snapping values within rounding noise of an integer.
fn snapped_floor(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r
    } else {
        x.floor()
    }
}

/// Largest `N` with `N < 2L / (M lambda)`.
pub fn max_pbs_halfwavelength(l: f64, m: usize, lambda: f64) -> Result<usize> {
    if !(l > 0.0 && lambda > 0.0) || m == 0 {
        return Err(Error::InvalidArgument("L, M and lambda must be positive".into()));
    }
    let x = 2.0 * l / (m as f64 * lambda);
    let r = x.round();
    let n = if (x - r).abs() <= 1e-9 * x.max(1.0) { r - 1.0 } else { x.floor() };
    Ok(n.max(0.0) as usize)
}

/// `4 floor(L / (2(M-1) lambda + 4 l0))`: the count when no PB straddles a corner.
pub fn max_pbs_spaced(l: f64, m: usize, lambda: f64, l0: f64) -> Result<usize> {
    if !(l > 0.0 && lambda > 0.0) || m == 0 {
        return Err(Error::InvalidArgument("L, M and lambda must be positive".into()));
    }
    if !(l0 > lambda / 2.0) {
        return Err(Error::SpacingViolation {
            l0,
            half_lambda: lambda / 2.0,
        });
    }
    let per_side = snapped_floor(l / (2.0 * (m as f64 - 1.0) * lambda + 4.0 * l0));
    Ok(4 * per_side.max(0.0) as usize)
}

/// One row of a capacity-versus-frequency sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapacityPoint {
    pub frequency_ghz: f64,
    pub half_wavelength: usize,
    /// `None` where `l0` does not exceed half a wavelength.
    pub spaced: Option<usize>,
}

pub fn capacity_sweep(l: f64, m: usize, l0: f64, freqs: &[f64]) -> Result<Vec<CapacityPoint>> {
    freqs
        .iter()
        .map(|&f| {
            let lambda = wavelength(f);
            let spaced = match max_pbs_spaced(l, m, lambda, l0) {
                Ok(n) => Some(n),
                Err(Error::SpacingViolation { .. }) => None,
                Err(e) => return Err(e),
            };
            Ok(CapacityPoint {
                frequency_ghz: f,
                half_wavelength: max_pbs_halfwavelength(l, m, lambda)?,
                spaced,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::X => "x",
            Axis::Y => "y",
        })
    }
}

impl Axis {
    /// Coordinate along the array axis.
    pub fn coord(&self, p: &Point3) -> f64 {
        match self {
            Axis::X => p.x,
            Axis::Y => p.y,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PbEntry {
    pub side: usize,
    pub axis: Axis,
    /// Array reference position: the first antenna element.
    pub reference: Point3,
    /// Inward normal of the side, i.e. the array boresight.
    pub boresight: Point3,
    pub antennas: Vec<Point3>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StripeLayout {
    pub room: RoomGeometry,
    pub antennas_per_pb: usize,
    pub spacing: f64,
    pub pbs: Vec<PbEntry>,
}

impl StripeLayout {
    pub fn pb_count(&self) -> usize {
        self.pbs.len()
    }

    /// Length of a stacked vector, `M N`.
    pub fn dim(&self) -> usize {
        self.pbs.len() * self.antennas_per_pb
    }

    pub fn antennas(&self) -> impl Iterator<Item = &Point3> {
        self.pbs.iter().flat_map(|pb| pb.antennas.iter())
    }

    /// Smallest gap between facing end elements of neighbouring PBs on a side.
    pub fn min_adjacent_gap(&self) -> f64 {
        let mut best = f64::INFINITY;
        for w in self.pbs.windows(2) {
            if w[0].side == w[1].side {
                let a = w[0].antennas.last().unwrap();
                let b = w[1].antennas.first().unwrap();
                best = best.min((a - b).norm());
            }
        }
        best
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        w.write_record(["pb_index", "antenna_index", "x", "y", "z", "axis"])
            .map_err(|e| Error::csv(path, e))?;
        for (n, pb) in self.pbs.iter().enumerate() {
            for (m, p) in pb.antennas.iter().enumerate() {
                w.write_record([
                    n.to_string(),
                    m.to_string(),
                    p.x.to_string(),
                    p.y.to_string(),
                    p.z.to_string(),
                    pb.axis.to_string(),
                ])
                .map_err(|e| Error::csv(path, e))?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Origin, direction and inward normal of each side.
fn side_frame(side: usize, s: f64) -> (Point3, Point3, Point3, Axis) {
    match side {
        0 => (Point3::new(0.0, 0.0, 0.0), Point3::x(), Point3::y(), Axis::X),
        1 => (Point3::new(s, 0.0, 0.0), Point3::y(), -Point3::x(), Axis::Y),
        2 => (Point3::new(s, s, 0.0), -Point3::x(), -Point3::y(), Axis::X),
        _ => (Point3::new(0.0, s, 0.0), -Point3::y(), Point3::x(), Axis::Y),
    }
}

/// Place `n` PBs of `m` half-wavelength spaced antennas around the room.
///
/// Each side receives `n / 4` PBs and the remainder goes to sides 0, 1, 2.
/// A side is split into equal slots and each array is centred in its slot.
pub fn build_layout(room: &RoomGeometry, m: usize, n: usize, l0: f64) -> Result<StripeLayout> {
    room.validate()?;
    if m == 0 {
        return Err(Error::InvalidArgument("need at least one antenna per PB".into()));
    }
    let lambda = room.wavelength();
    let max = max_pbs_spaced(room.side_length, m, lambda, l0)?;
    if n > max {
        return Err(Error::Capacity { requested: n, max });
    }
    let s = room.side();
    let array_len = (m as f64 - 1.0) * lambda / 2.0;
    let mut pbs = Vec::with_capacity(n);
    for side in 0..4 {
        let count = n / 4 + usize::from(side < n % 4);
        if count == 0 {
            continue;
        }
        let (origin, dir, normal, axis) = side_frame(side, s);
        let slot = s / count as f64;
        for j in 0..count {
            let start = j as f64 * slot + (slot - array_len) / 2.0;
            let antennas: Vec<Point3> = (0..m)
                .map(|i| {
                    let mut p = origin + dir * (start + i as f64 * lambda / 2.0);
                    p.z = room.ceiling_height;
                    p
                })
                .collect();
            pbs.push(PbEntry {
                side,
                axis,
                reference: antennas[0],
                boresight: normal,
                antennas,
            });
        }
    }
    Ok(StripeLayout {
        room: *room,
        antennas_per_pb: m,
        spacing: l0,
        pbs,
    })
}

/// Write `(frequency_ghz, half_wavelength, spaced)` rows; empty cells where
/// the spacing is invalid.
pub fn write_capacity_csv(points: &[CapacityPoint], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "frequency_ghz,half_wavelength,spaced")?;
    for p in points {
        let spaced = p.spaced.map(|v| v.to_string()).unwrap_or_default();
        writeln!(out, "{},{},{}", p.frequency_ghz, p.half_wavelength, spaced)?;
    }
    Ok(())
}
