//! Plain-text dump of a [`TraceSdp`] for cross-checking with other solvers.
//!
//! ```text
//! trace-sdp 1
//! dim <D>
//! ge <bound>            followed by D rows of D "re im" pairs
//! le <bound>            same layout
//! cap <cap> <i> <j> ... zero-based diagonal indices
//! end
//! ```
//!
//! Every number is written with 17 significant digits so reading a dump back
//! reproduces the problem bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::sdp::{DiagCap, TraceConstraint, TraceSdp};
use crate::linalg::{CMat, C64};
use crate::{Error, Result};

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn format_dump(problem: &TraceSdp) -> String {
    let mut out = String::new();
    let d = problem.dim;
    writeln!(out, "trace-sdp 1").unwrap();
    writeln!(out, "dim {d}").unwrap();
    let mut block = |kind: &str, c: &TraceConstraint| {
        writeln!(out, "{kind} {}", num(c.bound)).unwrap();
        for i in 0..d {
            let row: Vec<String> = (0..d)
                .map(|j| {
                    let z = c.matrix[(i, j)];
                    format!("{} {}", num(z.re), num(z.im))
                })
                .collect();
            writeln!(out, "{}", row.join(" ")).unwrap();
        }
    };
    for c in &problem.ge {
        block("ge", c);
    }
    for c in &problem.le {
        block("le", c);
    }
    for cap in &problem.diag_caps {
        let idx: Vec<String> = cap.indices.iter().map(|i| i.to_string()).collect();
        writeln!(out, "cap {} {}", num(cap.cap), idx.join(" ")).unwrap();
    }
    writeln!(out, "end").unwrap();
    out
}

pub fn parse_dump(text: &str) -> Result<TraceSdp> {
    let bad = |msg: &str| Error::Parse(format!("problem dump: {msg}"));
    let float = |s: &str| s.parse::<f64>().map_err(|_| bad(&format!("bad number '{s}'")));
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());

    if lines.next() != Some("trace-sdp 1") {
        return Err(bad("missing 'trace-sdp 1' header"));
    }
    let dim: usize = lines
        .next()
        .and_then(|l| l.strip_prefix("dim "))
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| bad("missing dimension"))?;
    let mut problem = TraceSdp::new(dim);
    loop {
        let line = lines.next().ok_or_else(|| bad("missing 'end'"))?;
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("end") => break,
            Some(kind @ ("ge" | "le")) => {
                let bound = float(parts.next().ok_or_else(|| bad("missing bound"))?)?;
                let mut m = CMat::zeros(dim, dim);
                for i in 0..dim {
                    let row = lines.next().ok_or_else(|| bad("truncated matrix"))?;
                    let vals: Vec<f64> = row.split_whitespace().map(float).collect::<Result<_>>()?;
                    if vals.len() != 2 * dim {
                        return Err(bad(&format!("row {i} has {} numbers, expected {}", vals.len(), 2 * dim)));
                    }
                    for j in 0..dim {
                        m[(i, j)] = C64::new(vals[2 * j], vals[2 * j + 1]);
                    }
                }
                let c = TraceConstraint::new(m, bound);
                if kind == "ge" {
                    problem.ge.push(c);
                } else {
                    problem.le.push(c);
                }
            }
            Some("cap") => {
                let cap = float(parts.next().ok_or_else(|| bad("missing cap"))?)?;
                let indices = parts
                    .map(|s| s.parse::<usize>().map_err(|_| bad(&format!("bad index '{s}'"))))
                    .collect::<Result<Vec<_>>>()?;
                problem.diag_caps.push(DiagCap { indices, cap });
            }
            Some(other) => return Err(bad(&format!("unknown record '{other}'"))),
            None => unreachable!(),
        }
    }
    Ok(problem)
}

pub fn write_dump(problem: &TraceSdp, path: &Path) -> Result<()> {
    fs::write(path, format_dump(problem)).map_err(|e| Error::io(path, e))
}

pub fn read_dump(path: &Path) -> Result<TraceSdp> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dump(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn roundtrip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = 3;
        let mut p = TraceSdp::new(d);
        for _ in 0..2 {
            let g = CMat::from_fn(d, d, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>()));
            p.ge.push(TraceConstraint::new(&g * g.adjoint(), rng.random::<f64>() * 1e-7));
        }
        p.le.push(TraceConstraint::new(CMat::identity(d, d), std::f64::consts::PI));
        p.diag_caps.push(DiagCap {
            indices: vec![0, 2],
            cap: 0.1 + 0.2,
        });
        let back = parse_dump(&format_dump(&p)).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_dump("hello").is_err());
        assert!(parse_dump("trace-sdp 1\ndim 1\nge 1.0\n1.0\nend\n").is_err());
    }
}
