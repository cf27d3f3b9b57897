//! Benchmark fixtures.

use wet_core::harness::Scenario;
use wet_core::linalg::CVec;
use wet_core::{Result, ScenarioConfig};

/// Estimated channels and RF requirements for `ues` reference UEs on `pbs` PBs.
pub struct Fixture {
    pub channels: Vec<CVec>,
    pub deltas: Vec<f64>,
    pub antennas_per_pb: usize,
}

pub fn fixture(ues: usize, pbs: usize, m: usize) -> Result<Fixture> {
    let text = format!(
        "[layout]\nantennas_per_pb = {m}\npbs = {pbs}\n\n[ues]\nreference = {:?}\n",
        (1..=ues).collect::<Vec<_>>()
    );
    let cfg = ScenarioConfig::from_toml(&text)?;
    let sc = Scenario::prepare(&cfg)?;
    let (_, est) = sc.draw(0)?;
    let deltas = sc.deltas.iter().map(|d| d.expect("requirement below saturation")).collect();
    Ok(Fixture {
        channels: est.per_ue,
        deltas,
        antennas_per_pb: m,
    })
}
