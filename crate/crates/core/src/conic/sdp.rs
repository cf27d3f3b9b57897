use std::time::Instant;

use log::debug;
use nalgebra::SymmetricEigen;

use super::{SolveReport, SolveStatus, SolverSettings};
use crate::linalg::{embed, is_hermitian, project_psd, trace_re, trace_t, unembed, CMat, RMat, RVec};
use crate::{Error, Result};

/// `Tr(V^T matrix)` compared against `bound`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceConstraint {
    pub matrix: CMat,
    pub bound: f64,
}

impl TraceConstraint {
    pub fn new(matrix: CMat, bound: f64) -> Self {
        TraceConstraint { matrix, bound }
    }
}

/// `sum_{i in indices} V_ii <= cap`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagCap {
    pub indices: Vec<usize>,
    pub cap: f64,
}

/// minimize `Tr(V)` over Hermitian `V >= 0` subject to trace inequalities and
/// diagonal group caps.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TraceSdp {
    pub dim: usize,
    /// `Tr(V^T A_i) >= b_i`
    pub ge: Vec<TraceConstraint>,
    /// `Tr(V^T C_j) <= u_j`
    pub le: Vec<TraceConstraint>,
    pub diag_caps: Vec<DiagCap>,
}

impl TraceSdp {
    pub fn new(dim: usize) -> Self {
        TraceSdp {
            dim,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidArgument("SDP dimension must be positive".into()));
        }
        for c in self.ge.iter().chain(self.le.iter()) {
            if c.matrix.nrows() != self.dim || c.matrix.ncols() != self.dim {
                return Err(Error::Dimension {
                    expected: self.dim,
                    got: c.matrix.nrows(),
                });
            }
            if !is_hermitian(&c.matrix, 1e-9) {
                return Err(Error::InvalidArgument("constraint matrix is not Hermitian".into()));
            }
            if !c.bound.is_finite() {
                return Err(Error::InvalidArgument("constraint bound is not finite".into()));
            }
        }
        let mut seen = vec![false; self.dim];
        for cap in &self.diag_caps {
            if !(cap.cap >= 0.0) {
                return Err(Error::InvalidArgument("diagonal cap must be non-negative".into()));
            }
            for &i in &cap.indices {
                if i >= self.dim {
                    return Err(Error::InvalidArgument(format!("cap index {i} out of range")));
                }
                if seen[i] {
                    return Err(Error::InvalidArgument(format!("cap index {i} appears in two groups")));
                }
                seen[i] = true;
            }
        }
        Ok(())
    }

    /// Largest relative constraint violation at `v`, PSD cone included.
    pub fn max_violation(&self, v: &CMat) -> f64 {
        let tr = trace_re(v).abs().max(f64::MIN_POSITIVE);
        let rel = |excess: f64, bound: f64| {
            let denom = if bound.abs() > 0.0 { bound.abs() } else { tr };
            (excess / denom).max(0.0)
        };
        let mut worst: f64 = 0.0;
        for c in &self.ge {
            worst = worst.max(rel(c.bound - trace_t(v, &c.matrix), c.bound));
        }
        for c in &self.le {
            worst = worst.max(rel(trace_t(v, &c.matrix) - c.bound, c.bound));
        }
        for cap in &self.diag_caps {
            let s: f64 = cap.indices.iter().map(|&i| v[(i, i)].re).sum();
            worst = worst.max(rel(s - cap.cap, cap.cap));
        }
        let min_eig = crate::linalg::min_eigenvalue(v);
        worst.max((-min_eig / tr).max(0.0))
    }
}

/// One row `<A, X> <= b` of the embedded problem.
struct Row {
    a: RMat,
    b: f64,
}

fn inner(a: &RMat, b: &RMat) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum()
}

fn project_psd_real(m: &RMat) -> (RMat, f64) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let n = m.nrows();
    let pos: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] > 0.0).collect();
    let min_eig = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if pos.is_empty() {
        return (RMat::zeros(n, n), min_eig);
    }
    let mut u = RMat::zeros(n, pos.len());
    for (c, &i) in pos.iter().enumerate() {
        let s = eig.eigenvalues[i].sqrt();
        u.set_column(c, &(eig.eigenvectors.column(i) * s));
    }
    (&u * u.transpose(), min_eig)
}

fn min_sym_eig(m: &RMat) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Solve a [`TraceSdp`] by ADMM on the embedded problem
/// `min <C,X>  s.t.  <A_i,X> + s_i = b_i,  X >= 0,  s >= 0`.
///
/// The iteration alternates a projection onto the affine set (through a Gram
/// matrix factorized once) with a projection onto `PSD x R+`.
pub fn solve_trace_sdp(problem: &TraceSdp, settings: &SolverSettings) -> Result<(CMat, SolveReport)> {
    problem.validate()?;
    let start = Instant::now();
    let d = problem.dim;
    let n2 = 2 * d;

    // V = 0 is optimal whenever it is feasible.
    let zero_ok = problem.ge.iter().all(|c| c.bound <= 0.0)
        && problem.le.iter().all(|c| c.bound >= 0.0)
        && problem.diag_caps.iter().all(|c| c.cap >= 0.0);
    if zero_ok {
        let report = SolveReport {
            status: SolveStatus::Optimal,
            objective: 0.0,
            dual_bound: 0.0,
            primal_residual: 0.0,
            dual_residual: 0.0,
            iterations: 0,
            wall_time: start.elapsed(),
        };
        return Ok((CMat::zeros(d, d), report));
    }

    // Embedded rows; Tr(V^T A) = 1/2 <embed(V), embed(conj A)>.
    let mut rows: Vec<Row> = Vec::new();
    for c in &problem.ge {
        let a = embed(&c.matrix.map(|z| z.conj())) * -0.5;
        rows.push(Row { a, b: -c.bound });
    }
    for c in &problem.le {
        let a = embed(&c.matrix.map(|z| z.conj())) * 0.5;
        rows.push(Row { a, b: c.bound });
    }
    for cap in &problem.diag_caps {
        let mut a = RMat::zeros(n2, n2);
        for &i in &cap.indices {
            a[(i, i)] = 0.5;
            a[(i + d, i + d)] = 0.5;
        }
        rows.push(Row { a, b: cap.cap });
    }

    // Row equilibration, then scale X so the largest bound is 1.
    for row in rows.iter_mut() {
        let norm = row.a.norm();
        if norm > 0.0 {
            row.a /= norm;
            row.b /= norm;
        }
    }
    let sigma = rows.iter().map(|r| r.b.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    for row in rows.iter_mut() {
        row.b /= sigma;
    }
    let m = rows.len();
    let c_coef = 0.5; // objective <1/2 I, X> = Tr(V)

    // Gram matrix of the affine map (X, s) -> <A_i, X> + s_i.
    let gram = RMat::from_fn(m, m, |i, j| inner(&rows[i].a, &rows[j].a) + if i == j { 1.0 } else { 0.0 });
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Degenerate("constraint Gram matrix is singular".into()))?;
    let b = RVec::from_iterator(m, rows.iter().map(|r| r.b));

    let alpha = 1.6;
    let mut rho = 1.0;
    let mut zx = RMat::zeros(n2, n2);
    let mut zs = RVec::zeros(m);
    let mut ux = RMat::zeros(n2, n2);
    let mut us = RVec::zeros(m);
    let mut nu = RVec::zeros(m);

    let mut status = SolveStatus::MaxIterations;
    let mut iterations = 0;
    let mut r_prim = f64::INFINITY;
    let mut r_dual = f64::INFINITY;
    let mut diverging = 0usize;
    let mut prev_u_norm = 0.0;
    let mut u_norm_at_window_start = 0.0;

    for it in 0..settings.max_iter {
        iterations = it + 1;
        // x-update: project z - u - c/rho onto the affine set.
        let mut vx = &zx - &ux;
        for i in 0..n2 {
            vx[(i, i)] -= c_coef / rho;
        }
        let vs = &zs - &us;
        let resid = RVec::from_iterator(m, (0..m).map(|i| inner(&rows[i].a, &vx) + vs[i] - b[i]));
        nu = chol.solve(&resid);
        let mut xx = vx;
        for (i, row) in rows.iter().enumerate() {
            if nu[i] != 0.0 {
                xx -= &row.a * nu[i];
            }
        }
        let xs = &vs - &nu;

        // z-update with over-relaxation.
        let hx = &xx * alpha + &zx * (1.0 - alpha);
        let hs = &xs * alpha + &zs * (1.0 - alpha);
        let (zx_new, _) = project_psd_real(&(&hx + &ux));
        let zs_new = (&hs + &us).map(|v| v.max(0.0));

        ux += &hx - &zx_new;
        us += &hs - &zs_new;

        let dz = ((&zx_new - &zx).norm_squared() + (&zs_new - &zs).norm_squared()).sqrt();
        zx = zx_new;
        zs = zs_new;

        r_prim = ((&xx - &zx).norm_squared() + (&xs - &zs).norm_squared()).sqrt();
        r_dual = rho * dz;
        let x_norm = (xx.norm_squared() + xs.norm_squared()).sqrt();
        let z_norm = (zx.norm_squared() + zs.norm_squared()).sqrt();
        let u_norm = (ux.norm_squared() + us.norm_squared()).sqrt();
        let eps_p = settings.tol * (1.0 + x_norm.max(z_norm));
        let eps_d = settings.tol * (1.0 + rho * u_norm);
        if r_prim <= eps_p && r_dual <= eps_d {
            status = SolveStatus::Optimal;
            break;
        }

        // Divergence of the scaled dual iterate signals infeasibility.
        if r_prim > eps_p && u_norm > prev_u_norm {
            if diverging == 0 {
                u_norm_at_window_start = prev_u_norm;
            }
            diverging += 1;
        } else {
            diverging = 0;
        }
        prev_u_norm = u_norm;
        if diverging >= settings.stall_window && u_norm > 10.0 * u_norm_at_window_start.max(1.0) {
            status = SolveStatus::Infeasible;
            break;
        }

        // Residual balancing; the affine projection does not depend on rho.
        if it % 25 == 24 {
            let p = r_prim / eps_p;
            let q = r_dual / eps_d;
            if p > 10.0 * q || q > 10.0 * p {
                let new_rho = (rho * (p / q.max(1e-300)).sqrt()).clamp(1e-6, 1e6);
                ux *= rho / new_rho;
                us *= rho / new_rho;
                rho = new_rho;
            }
        }
    }

    let elapsed = start.elapsed();
    debug!(
        "trace SDP: dim={} rows={} iters={} status={:?} r_prim={:.2e} r_dual={:.2e}",
        d, m, iterations, status, r_prim, r_dual
    );
    if status == SolveStatus::Infeasible {
        return Ok((CMat::zeros(d, d), SolveReport::infeasible(iterations, elapsed)));
    }

    // Back to the complex covariance and repair the requirements by scaling.
    let mut v = project_psd(&(unembed(&zx) * num_complex::Complex64::new(sigma, 0.0)));
    let mut scale: f64 = 1.0;
    for c in &problem.ge {
        if c.bound > 0.0 {
            let got = trace_t(&v, &c.matrix);
            if got > 0.0 {
                scale = scale.max(c.bound / got);
            }
        }
    }
    if scale > 1.0 {
        v *= num_complex::Complex64::new(scale, 0.0);
    }

    // Certified lower bound from the dual estimate y = rho * nu.
    let y = nu.map(|v| (v * rho).max(0.0));
    let mut s = RMat::identity(n2, n2) * c_coef;
    for (i, row) in rows.iter().enumerate() {
        s += &row.a * y[i];
    }
    let lam_min = min_sym_eig(&s);
    let dual_obj = -b.dot(&y);
    let scaled_bound = if lam_min >= 0.0 {
        dual_obj
    } else {
        dual_obj / (1.0 - lam_min / c_coef)
    };
    let dual_bound = (scaled_bound * sigma).max(0.0);

    let objective = trace_re(&v);
    let primal_residual = problem.max_violation(&v);
    let dual_residual = (-lam_min).max(0.0) / c_coef;
    if status == SolveStatus::Optimal && primal_residual > 10.0 * settings.tol {
        debug!("trace SDP polish left residual {primal_residual:.2e}");
    }
    let report = SolveReport {
        status,
        objective,
        dual_bound,
        primal_residual,
        dual_residual,
        iterations,
        wall_time: elapsed,
    };
    Ok((v, report))
}
