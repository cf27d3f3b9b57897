use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channel::{draw_realization, ls_estimate, ChannelEstimate, ChannelRealization, ChannelStats, PilotConfig, UeSpec};
use crate::conic::{SolveReport, SolveStatus};
use crate::emf::{build_constraints, EmfConstraintSet};
use crate::geometry::StripeLayout;
use crate::harvester::{harvested_energy, rf_requirement};
use crate::precoding::{design, PrecoderInput, PrecoderSolution};
use crate::{Error, Result};

use super::config::{ScenarioConfig, Schedule};
use super::report::{RunReport, TrialRecord};

/// Everything a trial needs that does not depend on the random draw.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub layout: StripeLayout,
    pub ues: Vec<UeSpec>,
    pub stats: ChannelStats,
    pub pilots: PilotConfig,
    /// Per-UE RF requirement; `None` when the harvester saturates first.
    pub deltas: Vec<Option<f64>>,
    /// Exposure constraints: one set for SDMA, one per slot for TDMA.
    pub emf: Vec<Option<EmfConstraintSet>>,
}

impl Scenario {
    pub fn prepare(config: &ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let layout = config.build_layout()?;
        let ues = config.ue_specs();
        let k = ues.len();
        let stats = ChannelStats::compute(&layout, &ues, config.channel.angular_spread_deg, config.channel.nlos)?;
        let pilots = config.pilot_config();
        let (tau_p, tau) = (pilots.tau_p as f64, pilots.tau as f64);
        // a TDMA slot lasts 1/K of the energy window
        let share = match config.schedule {
            Schedule::Sdma => 1.0,
            Schedule::Tdma => k as f64,
        };
        let deltas = ues
            .iter()
            .map(|ue| match rf_requirement(share * ue.energy_target, tau_p, tau, &ue.eh_curve) {
                Ok(d) => Ok(Some(d)),
                Err(Error::InfeasibleSaturation { .. }) => Ok(None),
                Err(e) => Err(e),
            })
            .collect::<Result<Vec<_>>>()?;
        let c = &config.constraints;
        let emf_for = |group: &[UeSpec]| -> Result<Option<EmfConstraintSet>> {
            if !c.has_emf() {
                return Ok(None);
            }
            build_constraints(&layout, group, c.proximity, c.volumetric, &config.quadrature).map(Some)
        };
        let emf = match config.schedule {
            Schedule::Sdma => vec![emf_for(&ues)?],
            Schedule::Tdma => ues.chunks(1).map(emf_for).collect::<Result<Vec<_>>>()?,
        };
        Ok(Scenario {
            config: config.clone(),
            layout,
            ues,
            stats,
            pilots,
            deltas,
            emf,
        })
    }

    fn solve(&self, channels: &[crate::linalg::CVec], deltas: &[f64], emf: Option<&EmfConstraintSet>) -> Result<PrecoderSolution> {
        let input = PrecoderInput {
            channels,
            antennas_per_pb: self.layout.antennas_per_pb,
            deltas,
            p_max: self.config.constraints.p_max(),
            emf,
        };
        design(self.config.method, &input, &self.config.solver)
    }

    /// True channels and their estimates for trial `t`.
    pub fn draw(&self, t: usize) -> Result<(ChannelRealization, ChannelEstimate)> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(t as u64);
        let real = draw_realization(&self.stats, &mut rng);
        let est = ls_estimate(&real, &self.pilots, &self.ues, &mut rng)?;
        Ok((real, est))
    }

    /// Run trial `t` with its own random stream.
    pub fn trial(&self, t: usize) -> Result<TrialRecord> {
        let clock = Instant::now();
        let (real, est) = self.draw(t)?;
        let k = self.ues.len();
        let (tau_p, tau) = (self.pilots.tau_p as f64, self.pilots.tau as f64);
        let mut rec = TrialRecord {
            trial: t,
            status: SolveStatus::Optimal,
            total_power: f64::NAN,
            incident: vec![f64::NAN; k],
            incident_estimated: vec![f64::NAN; k],
            harvested: vec![0.0; k],
            iterations: 0,
            wall_time_s: 0.0,
        };
        let absorb = |rec: &mut TrialRecord, report: &SolveReport| {
            rec.iterations += report.iterations;
            if report.status == SolveStatus::Infeasible {
                rec.status = SolveStatus::Infeasible;
            } else if report.status == SolveStatus::MaxIterations && rec.status == SolveStatus::Optimal {
                rec.status = SolveStatus::MaxIterations;
            }
        };
        match self.config.schedule {
            Schedule::Sdma => {
                if let Some(deltas) = self.deltas.iter().copied().collect::<Option<Vec<f64>>>() {
                    let sol = self.solve(&est.per_ue, &deltas, self.emf[0].as_ref())?;
                    absorb(&mut rec, &sol.report);
                    if sol.status() != SolveStatus::Infeasible {
                        rec.total_power = sol.total_power;
                        for j in 0..k {
                            rec.incident[j] = sol.incident_power(&real.per_ue[j]);
                            rec.incident_estimated[j] = sol.incident_power(&est.per_ue[j]);
                            rec.harvested[j] = harvested_energy(rec.incident[j], tau_p, tau, &self.ues[j].eh_curve)?;
                        }
                    }
                } else {
                    rec.status = SolveStatus::Infeasible;
                }
            }
            Schedule::Tdma => {
                let mut slot_total = 0.0;
                for j in 0..k {
                    let Some(delta) = self.deltas[j] else {
                        rec.status = SolveStatus::Infeasible;
                        continue;
                    };
                    let sol = self.solve(&est.per_ue[j..=j], &[delta], self.emf[j].as_ref())?;
                    absorb(&mut rec, &sol.report);
                    if sol.status() == SolveStatus::Infeasible {
                        continue;
                    }
                    slot_total += sol.total_power;
                    rec.incident[j] = sol.incident_power(&real.per_ue[j]);
                    rec.incident_estimated[j] = sol.incident_power(&est.per_ue[j]);
                    rec.harvested[j] =
                        harvested_energy(rec.incident[j], tau_p, tau, &self.ues[j].eh_curve)? / k as f64;
                }
                if rec.status != SolveStatus::Infeasible {
                    rec.total_power = slot_total / k as f64;
                }
            }
        }
        if rec.status == SolveStatus::Infeasible {
            rec.total_power = f64::NAN;
        }
        rec.wall_time_s = clock.elapsed().as_secs_f64();
        Ok(rec)
    }

    pub fn run(&self) -> Result<RunReport> {
        let records = (0..self.config.trials)
            .into_par_iter()
            .map(|t| self.trial(t))
            .collect::<Result<Vec<_>>>()?;
        let infeasible = records.iter().filter(|r| !r.is_feasible()).count();
        if infeasible > 0 {
            log::info!("{infeasible} of {} trials infeasible", records.len());
        }
        Ok(RunReport {
            method: self.config.method,
            schedule: self.config.schedule,
            records,
        })
    }
}

/// Draw channels, estimate, design and evaluate on the true channel, per trial.
pub fn run_scenario(config: &ScenarioConfig) -> Result<RunReport> {
    Scenario::prepare(config)?.run()
}

/// Serve the first `k` UEs with SDMA and with TDMA on paired channel draws.
///
/// The configured energy target is the total; each UE gets `1/k` of it.
pub fn compare_tdma_sdma(config: &ScenarioConfig, k: usize) -> Result<(RunReport, RunReport)> {
    if k == 0 || k > config.ue_count() {
        return Err(Error::Config(format!("cannot compare {k} of {} UEs", config.ue_count())));
    }
    let mut base = config.clone();
    let from_ref = k.min(base.ues.reference.len());
    base.ues.reference.truncate(from_ref);
    base.ues.positions.truncate(k - from_ref);
    base.ues.energy_target = config.ues.energy_target / k as f64;
    if base.pilots.tau_p.is_some_and(|t| t < k) {
        base.pilots.tau_p = Some(k);
    }
    let mut sdma = base.clone();
    sdma.schedule = Schedule::Sdma;
    let mut tdma = base;
    tdma.schedule = Schedule::Tdma;
    let nu = config.eh_curve.nu;
    if config.ues.energy_target >= nu {
        log::warn!("TDMA slots need {} J per slot, at or above the {nu} W saturation", config.ues.energy_target);
    }
    Ok((run_scenario(&sdma)?, run_scenario(&tdma)?))
}
