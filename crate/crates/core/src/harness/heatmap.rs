use std::path::Path;

use rayon::prelude::*;

use crate::emf::field_power_vectors;
use crate::geometry::{Point3, StripeLayout};
use crate::linalg::CVec;
use crate::{Error, Result};

/// Field power on a cell-centred 3D grid over the room, with its projections.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub zs: Vec<f64>,
    /// Watts, indexed `[(iz * ny + iy) * nx + ix]`; NaN where masked.
    pub values: Vec<f64>,
    /// Points skipped because they coincide with an antenna.
    pub masked: Vec<usize>,
    /// Averages over z, y and x respectively, `[row][col]` = `[y][x]`, `[z][x]`, `[z][y]`.
    pub xy: Vec<Vec<f64>>,
    pub xz: Vec<Vec<f64>>,
    pub yz: Vec<Vec<f64>>,
}

impl Heatmap {
    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (iz * self.ys.len() + iy) * self.xs.len() + ix
    }

    /// Grid indices of the cell containing `p`.
    pub fn cell_of(&self, p: &Point3) -> Option<(usize, usize, usize)> {
        let find = |axis: &[f64], v: f64| {
            let h = if axis.len() > 1 { axis[1] - axis[0] } else { 2.0 * axis[0] };
            let i = ((v - (axis[0] - h / 2.0)) / h).floor();
            (i >= 0.0 && (i as usize) < axis.len()).then_some(i as usize)
        };
        Some((find(&self.xs, p.x)?, find(&self.ys, p.y)?, find(&self.zs, p.z)?))
    }

    /// Rows `(plane, row, col, coord_a, coord_b, power_w)` for all three projections.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        w.write_record(["plane", "row", "col", "a_m", "b_m", "power_w"])
            .map_err(|e| Error::csv(path, e))?;
        let planes: [(&str, &Vec<Vec<f64>>, &[f64], &[f64]); 3] = [
            ("xy", &self.xy, &self.ys, &self.xs),
            ("xz", &self.xz, &self.zs, &self.xs),
            ("yz", &self.yz, &self.zs, &self.ys),
        ];
        for (name, grid, rows, cols) in planes {
            for (r, row) in grid.iter().enumerate() {
                for (c, v) in row.iter().enumerate() {
                    w.write_record([
                        name.to_string(),
                        r.to_string(),
                        c.to_string(),
                        rows[r].to_string(),
                        cols[c].to_string(),
                        v.to_string(),
                    ])
                    .map_err(|e| Error::csv(path, e))?;
                }
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn centres(extent: f64, step: f64) -> Vec<f64> {
    let n = (extent / step).ceil().max(1.0) as usize;
    let h = extent / n as f64;
    (0..n).map(|i| (i as f64 + 0.5) * h).collect()
}

fn average(vals: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for v in vals.filter(|v| !v.is_nan()) {
        s += v;
        n += 1;
    }
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// Evaluate `sum_k |v_k^T h(p)|^2` on a grid of about `resolution` meters.
///
/// Spacings finer than `lambda / 8` are allowed but logged, since the cost
/// grows with the cube of the point count per axis.
pub fn heatmap_grid(precoders: &[CVec], layout: &StripeLayout, resolution: f64) -> Result<Heatmap> {
    if !(resolution > 0.0) {
        return Err(Error::InvalidArgument("heatmap resolution must be positive".into()));
    }
    if resolution < layout.room.wavelength() / 8.0 {
        log::warn!("heatmap spacing {resolution} m is finer than lambda/8");
    }
    let s = layout.room.side();
    let xs = centres(s, resolution);
    let ys = xs.clone();
    let zs = centres(layout.room.ceiling_height, resolution);
    let (nx, ny, nz) = (xs.len(), ys.len(), zs.len());
    let slices: Vec<Result<(Vec<f64>, Vec<usize>)>> = (0..nz)
        .into_par_iter()
        .map(|iz| {
            let mut vals = Vec::with_capacity(nx * ny);
            let mut masked = Vec::new();
            for iy in 0..ny {
                for ix in 0..nx {
                    let p = Point3::new(xs[ix], ys[iy], zs[iz]);
                    match field_power_vectors(precoders, &p, layout) {
                        Ok(v) => vals.push(v),
                        Err(Error::SingularDistance) => {
                            masked.push((iz * ny + iy) * nx + ix);
                            vals.push(f64::NAN);
                        }
                        Err(e) => return Err(e),
                    }
                }
            }
            Ok((vals, masked))
        })
        .collect();
    let mut values = Vec::with_capacity(nx * ny * nz);
    let mut masked = Vec::new();
    for part in slices {
        let (v, m) = part?;
        values.extend(v);
        masked.extend(m);
    }
    let at = |ix: usize, iy: usize, iz: usize| values[(iz * ny + iy) * nx + ix];
    let xy = (0..ny).map(|iy| (0..nx).map(|ix| average((0..nz).map(|iz| at(ix, iy, iz)))).collect()).collect();
    let xz = (0..nz).map(|iz| (0..nx).map(|ix| average((0..ny).map(|iy| at(ix, iy, iz)))).collect()).collect();
    let yz = (0..nz).map(|iz| (0..ny).map(|iy| average((0..nx).map(|ix| at(ix, iy, iz)))).collect()).collect();
    Ok(Heatmap {
        xs,
        ys,
        zs,
        values,
        masked,
        xy,
        xz,
        yz,
    })
}
