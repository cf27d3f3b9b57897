use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::{db_to_linear, PilotConfig, UeSpec};
use crate::emf::{ProximityParams, QuadratureSpec, VolumetricParams};
use crate::geometry::{build_layout, max_pbs_spaced, RoomGeometry, StripeLayout};
use crate::harvester::{rf_requirement, EhCurve};
use crate::precoding::{DesignSettings, Method};
use crate::{Error, Result};

/// Reference UE positions for a stripe of perimeter `l`, `k` counted from 1.
///
/// Odd `k`: `[Lk/32, Lk/32, 2^(k/7 - 1)]`; even `k`: `[L(9-k)/32, Lk/36, 2^(1 - k/7)]`.
pub fn reference_position(k: usize, l: f64) -> [f64; 3] {
    let kf = k as f64;
    if k % 2 == 1 {
        [l * kf / 32.0, l * kf / 32.0, 2f64.powf(kf / 7.0 - 1.0)]
    } else {
        [l * (9.0 - kf) / 32.0, l * kf / 36.0, 2f64.powf(1.0 - kf / 7.0)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    /// All UEs charged together by one joint design.
    #[default]
    Sdma,
    /// The energy window split evenly, one UE per slot.
    Tdma,
}

impl std::fmt::Display for Schedule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Schedule::Sdma => "sdma",
            Schedule::Tdma => "tdma",
        })
    }
}

impl std::str::FromStr for Schedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sdma" => Ok(Schedule::Sdma),
            "tdma" => Ok(Schedule::Tdma),
            other => Err(Error::Parse(format!("unknown schedule '{other}'"))),
        }
    }
}

/// PB count: a number or `"max"` for the largest count the spacing allows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PbCountRepr", into = "PbCountRepr")]
pub enum PbCount {
    Count(usize),
    Max,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum PbCountRepr {
    Count(usize),
    Name(String),
}

impl TryFrom<PbCountRepr> for PbCount {
    type Error = String;

    fn try_from(r: PbCountRepr) -> std::result::Result<Self, String> {
        match r {
            PbCountRepr::Count(n) => Ok(PbCount::Count(n)),
            PbCountRepr::Name(s) if s == "max" => Ok(PbCount::Max),
            PbCountRepr::Name(s) => Err(format!("PB count must be a number or \"max\", got \"{s}\"")),
        }
    }
}

impl From<PbCount> for PbCountRepr {
    fn from(p: PbCount) -> Self {
        match p {
            PbCount::Count(n) => PbCountRepr::Count(n),
            PbCount::Max => PbCountRepr::Name("max".into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayoutConfig {
    pub antennas_per_pb: usize,
    pub pbs: PbCount,
    /// Minimum gap between consecutive PBs, meters.
    pub spacing: f64,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        LayoutConfig {
            antennas_per_pb: 8,
            pbs: PbCount::Max,
            spacing: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub angular_spread_deg: f64,
    pub nlos: bool,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            angular_spread_deg: 10.0,
            nlos: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PilotSetup {
    pub tau: usize,
    /// `None` uses one pilot per UE.
    pub tau_p: Option<usize>,
    /// Uplink pilot power, watts.
    pub pilot_power: f64,
    pub noise_dbm: f64,
}

impl Default for PilotSetup {
    fn default() -> Self {
        PilotSetup {
            tau: 1000,
            tau_p: None,
            pilot_power: 0.01,
            noise_dbm: -100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UeSetup {
    /// Indices (from 1) of reference positions to use.
    pub reference: Vec<usize>,
    /// Extra positions appended after the reference ones.
    pub positions: Vec<[f64; 3]>,
    /// Energy target per block, joules.
    pub energy_target: f64,
    pub proximity_radius: f64,
}

impl Default for UeSetup {
    fn default() -> Self {
        UeSetup {
            reference: vec![1],
            positions: Vec::new(),
            energy_target: 1.0,
            proximity_radius: 0.02,
        }
    }
}

/// Constraint families; an absent table disables the family.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstraintConfig {
    /// Per-PB cap in dBW.
    pub p_max_dbw: Option<f64>,
    pub proximity: Option<ProximityParams>,
    pub volumetric: Option<VolumetricParams>,
}

impl ConstraintConfig {
    pub fn p_max(&self) -> Option<f64> {
        self.p_max_dbw.map(db_to_linear)
    }

    pub fn has_emf(&self) -> bool {
        self.proximity.is_some() || self.volumetric.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub trials: usize,
    pub method: Method,
    pub schedule: Schedule,
    pub room: RoomGeometry,
    pub layout: LayoutConfig,
    pub channel: ChannelConfig,
    pub pilots: PilotSetup,
    pub ues: UeSetup,
    pub eh_curve: EhCurve,
    pub constraints: ConstraintConfig,
    pub quadrature: QuadratureSpec,
    pub solver: DesignSettings,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 1,
            trials: 100,
            method: Method::Mrt,
            schedule: Schedule::Sdma,
            room: RoomGeometry {
                side_length: 24.0,
                ceiling_height: 3.0,
                proximity_floor: 2.5,
                frequency_ghz: 4.0,
            },
            layout: LayoutConfig::default(),
            channel: ChannelConfig::default(),
            pilots: PilotSetup::default(),
            ues: UeSetup::default(),
            eh_curve: EhCurve::default(),
            constraints: ConstraintConfig::default(),
            quadrature: QuadratureSpec::default(),
            solver: DesignSettings::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn ue_count(&self) -> usize {
        self.ues.reference.len() + self.ues.positions.len()
    }

    pub fn tau_p(&self) -> usize {
        self.pilots.tau_p.unwrap_or(self.ue_count())
    }

    pub fn pilot_config(&self) -> PilotConfig {
        PilotConfig {
            tau: self.pilots.tau,
            tau_p: self.tau_p(),
            noise_power: db_to_linear(self.pilots.noise_dbm - 30.0),
        }
    }

    pub fn pb_count(&self) -> Result<usize> {
        match self.layout.pbs {
            PbCount::Count(n) => Ok(n),
            PbCount::Max => max_pbs_spaced(
                self.room.side_length,
                self.layout.antennas_per_pb,
                self.room.wavelength(),
                self.layout.spacing,
            ),
        }
    }

    pub fn build_layout(&self) -> Result<StripeLayout> {
        build_layout(&self.room, self.layout.antennas_per_pb, self.pb_count()?, self.layout.spacing)
    }

    pub fn ue_specs(&self) -> Vec<UeSpec> {
        let l = self.room.side_length;
        self.ues
            .reference
            .iter()
            .map(|&k| reference_position(k, l))
            .chain(self.ues.positions.iter().copied())
            .enumerate()
            .map(|(i, position)| UeSpec {
                position,
                energy_target: self.ues.energy_target,
                pilot_index: i,
                pilot_power: self.pilots.pilot_power,
                proximity_radius: self.ues.proximity_radius,
                eh_curve: self.eh_curve,
            })
            .collect()
    }

    /// RF requirement of every UE when all are charged for the whole window.
    pub fn requirements(&self) -> Result<Vec<f64>> {
        self.ue_specs()
            .iter()
            .map(|ue| rf_requirement(ue.energy_target, self.tau_p() as f64, self.pilots.tau as f64, &ue.eh_curve))
            .collect()
    }

    /// Configuration errors are reported as [`Error::Config`].
    pub fn validate(&self) -> Result<()> {
        let cfg = |e: Error| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        };
        self.room.validate().map_err(cfg)?;
        self.eh_curve.validate().map_err(cfg)?;
        self.quadrature.validate().map_err(cfg)?;
        let k = self.ue_count();
        if k == 0 {
            return Err(Error::Config("no UEs configured".into()));
        }
        if let Some(&bad) = self.ues.reference.iter().find(|&&i| i == 0) {
            return Err(Error::Config(format!("reference UE index {bad} must start at 1")));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be positive".into()));
        }
        if !(self.channel.angular_spread_deg >= 0.0) {
            return Err(Error::Config("angular spread must be non-negative".into()));
        }
        if !(self.pilots.pilot_power >= 0.0) {
            return Err(Error::Config("pilot power must be non-negative".into()));
        }
        self.pilot_config().validate(k).map_err(cfg)?;
        if self.method == Method::SingleUe && self.schedule == Schedule::Sdma && k > 1 {
            return Err(Error::Config("the single-UE method needs one UE or the TDMA schedule".into()));
        }
        let layout = self.build_layout().map_err(cfg)?;
        if k > layout.dim() {
            return Err(Error::Config(format!("{k} UEs exceed the {} transmit antennas", layout.dim())));
        }
        for ue in self.ue_specs() {
            ue.validate().map_err(cfg)?;
            let p = ue.position;
            let s = self.room.side();
            if !(0.0..=s).contains(&p[0]) || !(0.0..=s).contains(&p[1]) || !(0.0..self.room.ceiling_height).contains(&p[2]) {
                return Err(Error::Config(format!("UE at {p:?} lies outside the room")));
            }
        }
        if let Some(p) = self.constraints.proximity {
            if !(p.radius > 0.0 && p.theta1 > 0.0) {
                return Err(Error::Config("proximity constraint needs positive radius and limit".into()));
            }
        }
        if let Some(p) = self.constraints.volumetric {
            if !(p.theta2 > 0.0 && p.epsilon > 0.0 && p.epsilon < 1.0) {
                return Err(Error::Config("volumetric constraint needs theta2 > 0 and 0 < epsilon < 1".into()));
            }
        }
        if let Some(p) = self.constraints.p_max_dbw {
            if !p.is_finite() {
                return Err(Error::Config("p_max_dbw must be finite".into()));
            }
        }
        Ok(())
    }
}
