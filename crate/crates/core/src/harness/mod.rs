//! Scenario configuration, Monte Carlo runs, schedule comparison and reports.

mod config;
mod heatmap;
mod report;
mod run;

pub use config::{
    reference_position, ChannelConfig, ConstraintConfig, LayoutConfig, PbCount, PilotSetup, ScenarioConfig, Schedule,
    UeSetup,
};
pub use heatmap::{heatmap_grid, Heatmap};
pub use report::{export_report, import_report, ReportPaths, RunReport, Summary, TrialRecord};
pub use run::{compare_tdma_sdma, run_scenario, Scenario};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::SolveStatus;
    use crate::geometry::Point3;
    use crate::linalg::{CVec, C64};
    use crate::precoding::Method;

    fn small(text: &str) -> ScenarioConfig {
        let mut cfg: ScenarioConfig = toml::from_str(text).unwrap();
        if !text.contains("trials") {
            cfg.trials = 6;
        }
        cfg.layout.pbs = PbCount::Count(8);
        cfg.layout.antennas_per_pb = 4;
        cfg.validate().unwrap();
        cfg
    }

    fn same(a: &RunReport, b: &RunReport) -> bool {
        a.records.len() == b.records.len()
            && a.records.iter().zip(&b.records).all(|(x, y)| {
                x.status == y.status
                    && x.total_power.to_bits() == y.total_power.to_bits()
                    && x.incident == y.incident
                    && x.harvested == y.harvested
            })
    }

    #[test]
    fn centre_ue_mrt_power_is_delta_over_norm() {
        let cfg = small("[ues]\nreference = []\npositions = [[3.0, 3.0, 0.0]]\n");
        let sc = Scenario::prepare(&cfg).unwrap();
        let delta = sc.deltas[0].unwrap();
        let rep = sc.run().unwrap();
        for r in &rep.records {
            let (_, est) = sc.draw(r.trial).unwrap();
            let want = delta / est.per_ue[0].norm_squared();
            assert!(((r.total_power - want) / want).abs() < 1e-6, "{} vs {want}", r.total_power);
        }
    }

    #[test]
    fn same_seed_same_report() {
        let cfg = small("seed = 42\n[ues]\nreference = [1, 2]\n");
        assert!(same(&run_scenario(&cfg).unwrap(), &run_scenario(&cfg).unwrap()));
        let mut other = cfg.clone();
        other.seed = 43;
        assert!(!same(&run_scenario(&cfg).unwrap(), &run_scenario(&other).unwrap()));
    }

    #[test]
    fn strong_pilots_meet_the_target() {
        let cfg = small("trials = 40\n[pilots]\ntau_p = 1\npilot_power = 0.01\nnoise_dbm = -100.0\n");
        let rep = run_scenario(&cfg).unwrap();
        let short = rep.feasible().filter(|r| r.harvested[0] < 0.99).count();
        assert!((short as f64) < 0.01 * rep.records.len() as f64, "{short}");
    }

    #[test]
    fn noiseless_estimate_matches_true_channel() {
        let cfg = small("[pilots]\nnoise_dbm = -1000.0\n[ues]\nreference = [1, 3]\n");
        let mut cfg = cfg;
        cfg.pilots.noise_dbm = f64::NEG_INFINITY;
        let rep = run_scenario(&cfg).unwrap();
        for r in rep.feasible() {
            for (a, b) in r.incident.iter().zip(&r.incident_estimated) {
                assert!((a - b).abs() <= 1e-12 * a.abs(), "{a} {b}");
            }
        }
    }

    #[test]
    fn one_ue_tdma_equals_sdma() {
        let cfg = small("");
        let (s, t) = compare_tdma_sdma(&cfg, 1).unwrap();
        for (a, b) in s.records.iter().zip(&t.records) {
            assert!(((a.total_power - b.total_power) / a.total_power).abs() < 1e-9);
        }
    }

    #[test]
    fn tdma_cheaper_for_two_ues() {
        let cfg = small("trials = 10\n[ues]\nreference = [1, 2]\n");
        let (s, t) = compare_tdma_sdma(&cfg, 2).unwrap();
        assert_eq!(s.feasibility_rate(), 1.0);
        assert!(t.mean_power() <= s.mean_power(), "{} > {}", t.mean_power(), s.mean_power());
    }

    #[test]
    fn tdma_saturation_is_flagged() {
        let cfg = small("[ues]\nreference = [1, 2]\nenergy_target = 5.0\n");
        let (s, t) = compare_tdma_sdma(&cfg, 2).unwrap();
        assert_eq!(s.feasibility_rate(), 1.0);
        assert_eq!(t.feasibility_rate(), 0.0);
        assert!(t.records.iter().all(|r| r.status == SolveStatus::Infeasible && r.total_power.is_nan()));
    }

    #[test]
    fn caps_never_lower_mean_power() {
        let free = small("[ues]\nreference = [2]\n");
        let mut capped = free.clone();
        capped.constraints.p_max_dbw = Some(-3.0);
        capped.method = Method::Mrt;
        let a = run_scenario(&free).unwrap();
        let b = run_scenario(&capped).unwrap();
        for (x, y) in a.records.iter().zip(&b.records) {
            if y.is_feasible() {
                assert!(y.total_power >= x.total_power * (1.0 - 1e-9));
            }
        }
    }

    #[test]
    fn heatmap_zero_and_linear() {
        let cfg = small("");
        let layout = cfg.build_layout().unwrap();
        let d = layout.dim();
        let zero = heatmap_grid(&[CVec::zeros(d)], &layout, 0.5).unwrap();
        assert!(zero.values.iter().all(|v| *v == 0.0));
        assert!(zero.xy.iter().flatten().all(|v| *v == 0.0));
        let v = CVec::from_fn(d, |i, _| C64::new((i as f64).sin(), (i as f64 * 0.3).cos()));
        let a = heatmap_grid(std::slice::from_ref(&v), &layout, 0.5).unwrap();
        let b = heatmap_grid(&[v * C64::new(3f64.sqrt(), 0.0)], &layout, 0.5).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((y - 3.0 * x).abs() <= 1e-12 * y.abs().max(1e-300));
        }
        assert_eq!(a.xy.len(), a.ys.len());
        assert_eq!(a.xz.len(), a.zs.len());
    }

    #[test]
    fn heatmap_peaks_at_the_ue() {
        // with 0.2 m cells the UE at (3.1, 2.9, 1.1) sits on a cell centre; the
        // beam is matched to the line-of-sight channel the field model uses
        let cfg = small("method = \"single-ue\"\n[ues]\nreference = []\npositions = [[3.1, 2.9, 1.1]]\n");
        let sc = Scenario::prepare(&cfg).unwrap();
        let h = &sc.stats.mean(0);
        let v = h.map(|z| z.conj()) / C64::new(h.norm(), 0.0);
        let map = heatmap_grid(&[v], &sc.layout, 0.2).unwrap();
        let (ix, iy, iz) = map.cell_of(&Point3::new(3.1, 2.9, 1.1)).unwrap();
        let at_ue = map.values[map.index(ix, iy, iz)];
        let above = map.values.iter().filter(|&&x| x > at_ue).count();
        assert!((above as f64) < 0.01 * map.values.len() as f64, "{above} of {}", map.values.len());
    }
}
