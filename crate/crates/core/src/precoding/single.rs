use crate::conic::SolveReport;
use crate::linalg::{CVec, C64};
use crate::{Error, Result};

use super::{block_norms, zero_report, Method, PrecoderInput, PrecoderSolution};

/// Whether PBs at full cap can deliver `delta`: `sum_n ||h_n|| >= sqrt(delta / p_max)`.
pub fn single_ue_feasible(norms: &[f64], delta: f64, p_max: f64) -> bool {
    norms.iter().sum::<f64>() * p_max.sqrt() >= delta.sqrt()
}

/// Per-PB amplitudes `rho_n` for one UE served with conjugate beams.
///
/// Without a cap the power goes to PBs in proportion to `||h_n||^2`. With a
/// cap, PBs that reach it are clipped and the rest of the requirement is
/// redistributed over the remaining PBs until no PB exceeds the cap.
pub fn single_ue_allocation(norms: &[f64], delta: f64, p_max: Option<f64>) -> Result<Vec<f64>> {
    if !(delta >= 0.0) {
        return Err(Error::InvalidArgument("requirement must be non-negative".into()));
    }
    if norms.iter().any(|g| !(*g >= 0.0)) {
        return Err(Error::InvalidArgument("channel norms must be non-negative".into()));
    }
    let total: f64 = norms.iter().sum();
    if delta > 0.0 && total == 0.0 {
        return Err(Error::Infeasible("the UE has an all-zero channel".into()));
    }
    if let Some(p) = p_max {
        if !single_ue_feasible(norms, delta, p) {
            return Err(Error::Infeasible(format!(
                "requirement {delta} W exceeds the {:.6e} W all PBs deliver at cap",
                p * total * total
            )));
        }
    }
    let mut rho = vec![0.0; norms.len()];
    let mut clipped = vec![false; norms.len()];
    loop {
        let sqrt_rest = delta.sqrt()
            - p_max.map_or(0.0, |p| {
                p.sqrt() * norms.iter().zip(&clipped).filter(|(_, c)| **c).map(|(g, _)| g).sum::<f64>()
            });
        let free: f64 = norms.iter().zip(&clipped).filter(|(_, c)| !**c).map(|(g, _)| g * g).sum();
        for n in 0..norms.len() {
            if !clipped[n] {
                rho[n] = if free > 0.0 {
                    norms[n] * sqrt_rest.max(0.0) / free
                } else {
                    0.0
                };
            }
        }
        let Some(p) = p_max else { break };
        let mut changed = false;
        for n in 0..norms.len() {
            if !clipped[n] && rho[n] * rho[n] >= p {
                clipped[n] = true;
                rho[n] = p.sqrt();
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    Ok(rho)
}

/// Closed-form design for `K = 1`.
pub fn single_ue_precoder(input: &PrecoderInput) -> Result<PrecoderSolution> {
    input.validate()?;
    if input.channels.len() != 1 {
        return Err(Error::InvalidArgument(format!(
            "single-UE design needs one UE, got {}",
            input.channels.len()
        )));
    }
    let m = input.antennas_per_pb;
    let h = &input.channels[0];
    let norms = block_norms(h, m);
    let rho = match single_ue_allocation(&norms, input.deltas[0], input.p_max) {
        Ok(r) => r,
        Err(Error::Infeasible(msg)) => {
            return Ok(PrecoderSolution::infeasible(
                Method::SingleUe,
                h.len(),
                m,
                SolveReport::infeasible(0, Default::default()),
                Some(msg),
            ))
        }
        Err(e) => return Err(e),
    };
    let v = conjugate_beam(h, &norms, &rho, m);
    let mut sol = PrecoderSolution::from_precoders(Method::SingleUe, vec![v], m, zero_report());
    sol.report.objective = sol.total_power;
    sol.report.dual_bound = sol.total_power;
    if let Some(emf) = input.emf {
        if emf.max_violation(&sol.covariance) > 0.0 {
            log::warn!("closed-form single-UE design ignores the exposure constraints");
        }
    }
    Ok(sol)
}

/// `v_n = conj(h_n) / ||h_n|| * rho_n`, zero where `||h_n|| = 0`.
pub(crate) fn conjugate_beam(h: &CVec, norms: &[f64], rho: &[f64], m: usize) -> CVec {
    CVec::from_fn(h.len(), |i, _| {
        let n = i / m;
        if norms[n] > 0.0 {
            h[i].conj() * C64::new(rho[n] / norms[n], 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::precoding::incident_power_vectors;
    use proptest::prelude::*;

    fn delivered(norms: &[f64], rho: &[f64]) -> f64 {
        norms.iter().zip(rho).map(|(g, r)| g * r).sum::<f64>().powi(2)
    }

    #[test]
    fn uncapped_is_proportional() {
        let norms = [1.0, 2.0, 3.0];
        let rho = single_ue_allocation(&norms, 14.0, None).unwrap();
        let p: f64 = rho.iter().map(|r| r * r).sum();
        assert!((p - 1.0).abs() < 1e-12);
        assert!((delivered(&norms, &rho) - 14.0).abs() < 1e-12);
    }

    #[test]
    fn clipping_redistributes() {
        let norms = [3.0, 1.0, 1.0];
        // uncapped rho = (3, 1, 1) * sqrt(25)/11; the first exceeds 1
        let rho = single_ue_allocation(&norms, 25.0, Some(1.0)).unwrap();
        assert!((rho[0] - 1.0).abs() < 1e-15);
        assert!((rho[1] - 1.0).abs() < 1e-12 && (rho[2] - 1.0).abs() < 1e-12);
        assert!((delivered(&norms, &rho) - 25.0).abs() < 1e-9);
        let rho = single_ue_allocation(&norms, 16.0, Some(1.0)).unwrap();
        assert_eq!(rho[0], 1.0);
        assert!((rho[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn infeasible_when_caps_too_tight() {
        assert!(!single_ue_feasible(&[1.0, 1.0], 4.01, 1.0));
        assert!(single_ue_feasible(&[1.0, 1.0], 4.0, 1.0));
        assert!(matches!(single_ue_allocation(&[1.0, 1.0], 5.0, Some(1.0)), Err(Error::Infeasible(_))));
        assert!(matches!(single_ue_allocation(&[0.0, 0.0], 1.0, None), Err(Error::Infeasible(_))));
    }

    #[test]
    fn precoder_meets_requirement() {
        let h = CVec::from_vec(vec![C64::new(0.3, -0.1), C64::new(0.0, 0.2), C64::new(1.0, 0.5), C64::new(-0.4, 0.0)]);
        let deltas = [2.0];
        let input = PrecoderInput {
            channels: std::slice::from_ref(&h),
            antennas_per_pb: 2,
            deltas: &deltas,
            p_max: Some(1.5),
            emf: None,
        };
        let sol = single_ue_precoder(&input).unwrap();
        let got = incident_power_vectors(&sol.precoders, &h).unwrap();
        assert!((got - 2.0).abs() < 1e-12);
        assert!(sol.pb_powers.iter().all(|p| *p <= 1.5 + 1e-12));
    }

    proptest! {
        #[test]
        fn allocation_is_grid_optimal(g1 in 0.1f64..2.0, g2 in 0.1f64..2.0, cap in 0.5f64..3.0, frac in 0.05f64..0.95) {
            let norms = [g1, g2];
            let delta = frac * cap * (g1 + g2).powi(2);
            let rho = single_ue_allocation(&norms, delta, Some(cap)).unwrap();
            let power: f64 = rho.iter().map(|r| r * r).sum();
            prop_assert!((delivered(&norms, &rho) - delta).abs() <= 1e-9 * delta);
            prop_assert!(rho.iter().all(|r| r * r <= cap * (1.0 + 1e-12)));
            // brute force over rho_1; rho_2 is then fixed by the requirement
            let mut best = f64::INFINITY;
            for i in 0..=4000 {
                let r1 = cap.sqrt() * i as f64 / 4000.0;
                let r2 = (delta.sqrt() - g1 * r1) / g2;
                if r2 >= 0.0 && r2 * r2 <= cap {
                    best = best.min(r1 * r1 + r2 * r2);
                }
            }
            prop_assert!(power <= best * (1.0 + 1e-9), "{} vs {}", power, best);
        }
    }
}
