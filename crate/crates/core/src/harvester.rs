//! Logistic energy-harvesting model.
//!
//! `g(x) = nu * ((1 + e^{ab}) / (1 + e^{-a(x-b)}) - 1) * e^{-ab}`, evaluated
//! in the algebraically equal form `nu (1 - e^{-ax}) / (1 + e^{-a(x-b)})`
//! which does not overflow for large `ab`.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EhCurve {
    pub a: f64,
    /// Watts.
    pub b: f64,
    /// Saturation level in watts.
    pub nu: f64,
    /// Sensitivity in watts. Stored only; the model has `g(x) = 0` at `x = 0` alone.
    #[serde(default)]
    pub sensitivity: f64,
}

impl Default for EhCurve {
    fn default() -> Self {
        EhCurve {
            a: 1.0,
            b: 4.0,
            nu: 4.0,
            sensitivity: 0.0,
        }
    }
}

impl EhCurve {
    pub fn new(a: f64, b: f64, nu: f64) -> Result<Self> {
        let c = EhCurve {
            a,
            b,
            nu,
            sensitivity: 0.0,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.b > 0.0 && self.nu > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "EH curve needs a, b, nu > 0 (got {}, {}, {})",
                self.a, self.b, self.nu
            )));
        }
        Ok(())
    }

    /// Harvested DC power for incident RF power `x`.
    pub fn harvest(&self, x: f64) -> Result<f64> {
        if !(x >= 0.0) {
            return Err(Error::InvalidArgument(format!("incident power {x} is negative")));
        }
        Ok(self.g(x))
    }

    fn g(&self, x: f64) -> f64 {
        let num = -(-self.a * x).exp_m1();
        let den = 1.0 + (-self.a * (x - self.b)).exp();
        self.nu * num / den
    }

    /// Inverse of [`harvest`](Self::harvest) on `[0, nu)`.
    pub fn inverse(&self, y: f64) -> Result<f64> {
        if !(y >= 0.0) {
            return Err(Error::InvalidArgument(format!("harvested power {y} is negative")));
        }
        if y >= self.nu {
            return Err(Error::InfeasibleSaturation {
                required: y,
                saturation: self.nu,
            });
        }
        if y == 0.0 {
            return Ok(0.0);
        }
        // Solving y = nu (1 - u) / (1 + u e^{ab}) for u = e^{-ax}.
        let t = y / self.nu;
        let ab = self.a * self.b;
        let x = if ab < 700.0 {
            ((t * ab.exp()).ln_1p() - (-t).ln_1p()) / self.a
        } else {
            (t.ln() + ab - (-t).ln_1p()) / self.a
        };
        Ok(x.max(0.0))
    }

    /// Conversion efficiency `g(x)/x`; 0 at `x = 0` by convention.
    pub fn efficiency(&self, x: f64) -> Result<f64> {
        if x == 0.0 {
            return Ok(0.0);
        }
        Ok(self.harvest(x)? / x)
    }

    /// Location and value of the efficiency peak, by golden-section search.
    pub fn peak_efficiency(&self) -> (f64, f64) {
        let eta = |x: f64| self.g(x) / x;
        let (mut lo, mut hi) = (1e-9, self.b + 20.0 / self.a);
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        let mut c = hi - phi * (hi - lo);
        let mut d = lo + phi * (hi - lo);
        for _ in 0..200 {
            if eta(c) > eta(d) {
                hi = d;
            } else {
                lo = c;
            }
            c = hi - phi * (hi - lo);
            d = lo + phi * (hi - lo);
        }
        let x = 0.5 * (lo + hi);
        (x, eta(x))
    }
}

fn duty(tau_p: f64, tau: f64) -> Result<f64> {
    if !(tau > 0.0 && tau_p >= 0.0 && tau_p < tau) {
        return Err(Error::InvalidArgument(format!(
            "pilot length {tau_p} must be below the coherence block {tau}"
        )));
    }
    Ok(1.0 - tau_p / tau)
}

/// Incident RF power `delta` needed to harvest `xi` joules per unit block.
pub fn rf_requirement(xi: f64, tau_p: f64, tau: f64, curve: &EhCurve) -> Result<f64> {
    if !(xi >= 0.0) {
        return Err(Error::InvalidArgument(format!("energy target {xi} is negative")));
    }
    curve.inverse(xi / duty(tau_p, tau)?)
}

/// Energy harvested in a unit block for incident power `p`.
pub fn harvested_energy(p: f64, tau_p: f64, tau: f64, curve: &EhCurve) -> Result<f64> {
    let d = duty(tau_p, tau)?;
    if tau - tau_p < 10.0 {
        log::warn!("short energy-transfer window: tau - tau_p = {}", tau - tau_p);
    }
    Ok(d * curve.harvest(p)?)
}

/// `(x, g(x), eta(x))` samples for plotting.
pub fn sample_curve(curve: &EhCurve, x_max: f64, points: usize) -> Vec<(f64, f64, f64)> {
    (0..points)
        .map(|i| {
            let x = x_max * i as f64 / (points.max(2) - 1) as f64;
            let g = curve.g(x);
            let eta = if x > 0.0 { g / x } else { 0.0 };
            (x, g, eta)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Unrearranged logistic form.
    fn g_literal(c: &EhCurve, x: f64) -> f64 {
        let eab = (c.a * c.b).exp();
        c.nu * ((1.0 + eab) / (1.0 + (-c.a * (x - c.b)).exp()) - 1.0) / eab
    }

    fn bisect_inverse(c: &EhCurve, y: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, 1.0);
        while g_literal(c, hi) < y {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g_literal(c, mid) < y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn stable_form_matches_printed_form() {
        let c = EhCurve::default();
        for x in [0.0, 0.1, 1.0, 4.0, 5.5, 12.0, 40.0] {
            let a = c.harvest(x).unwrap();
            let b = g_literal(&c, x);
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-12), "x={x}");
        }
    }

    #[test]
    fn endpoints() {
        let c = EhCurve::default();
        assert_eq!(c.harvest(0.0).unwrap(), 0.0);
        assert!(c.harvest(1e6).unwrap() >= 0.999 * c.nu);
        assert!(c.harvest(-1.0).is_err());
    }

    #[test]
    fn efficiency_at_b() {
        let c = EhCurve::default();
        let eta = c.efficiency(4.0).unwrap();
        assert!((eta - 0.4908).abs() < 1e-4, "{eta}");
        assert!((c.harvest(4.0).unwrap() - 1.9634).abs() < 1e-4);
        assert_eq!(c.efficiency(0.0).unwrap(), 0.0);
    }

    #[test]
    fn efficiency_peak_near_five_and_a_half_watts() {
        let (x, eta) = EhCurve::default().peak_efficiency();
        assert!((x - 5.5).abs() < 0.2, "{x}");
        assert!((eta - 0.59).abs() < 0.01, "{eta}");
        // grid oracle
        let best = (1..20000)
            .map(|i| i as f64 * 1e-3)
            .map(|x| (x, g_literal(&EhCurve::default(), x) / x))
            .fold((0.0, 0.0), |acc, p| if p.1 > acc.1 { p } else { acc });
        assert!((best.0 - x).abs() < 2e-3);
    }

    #[test]
    fn requirement_for_one_joule() {
        let c = EhCurve::default();
        let delta = rf_requirement(1.0, 1.0, 1000.0, &c).unwrap();
        assert!((delta - 2.9734).abs() < 1e-4, "{delta}");
        let oracle = bisect_inverse(&c, 1.0 / 0.999);
        assert!((delta - oracle).abs() < 1e-10);
        let e = harvested_energy(delta, 1.0, 1000.0, &c).unwrap();
        assert!((e - 1.0).abs() < 1e-9);
        assert_eq!(rf_requirement(0.0, 1.0, 1000.0, &c).unwrap(), 0.0);
    }

    #[test]
    fn saturation_is_rejected() {
        let c = EhCurve::default();
        assert!(matches!(
            rf_requirement(4.0, 1.0, 1000.0, &c),
            Err(Error::InfeasibleSaturation { .. })
        ));
        let near = c.inverse(c.nu - 1e-12).unwrap();
        assert!(near.is_finite() && near > 20.0);
        assert!(c.inverse(c.nu - 1e-12).unwrap() > c.inverse(c.nu - 1e-9).unwrap());
        assert!(harvested_energy(1.0, 10.0, 10.0, &c).is_err());
    }

    #[test]
    fn half_duty_saturates_at_half_nu() {
        let c = EhCurve::default();
        let e = harvested_energy(1e6, 500.0, 1000.0, &c).unwrap();
        assert!((e - 2.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn monotone(x1 in 0.0f64..60.0, dx in 0.0f64..60.0) {
            let c = EhCurve::default();
            prop_assert!(c.harvest(x1 + dx).unwrap() >= c.harvest(x1).unwrap());
        }

        #[test]
        fn inverse_roundtrip(x in 1e-6f64..50.0, a in 0.2f64..3.0, b in 0.5f64..8.0) {
            let c = EhCurve::new(a, b, 4.0).unwrap();
            let y = c.harvest(x).unwrap();
            prop_assume!(y < c.nu * (1.0 - 1e-4));
            let back = c.inverse(y).unwrap();
            prop_assert!((back - x).abs() <= 1e-9 * x.max(1.0), "x={} back={}", x, back);
        }

        #[test]
        fn efficiency_in_unit_interval(x in 1e-9f64..1e4) {
            let eta = EhCurve::default().efficiency(x).unwrap();
            prop_assert!((0.0..1.0).contains(&eta));
        }
    }
}
