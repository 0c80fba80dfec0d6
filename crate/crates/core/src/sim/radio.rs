//! Log-distance path loss with a parabolic sector antenna pattern.
//!
//! Signal values are expressed as SNR in dB relative to the noise floor `noise_db`.

use serde::{Deserialize, Serialize};

use super::topology::{distance, Cell, Point, Topology};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RadioConfig {
    /// Signal on boresight at `ref_distance`, dB.
    pub ref_signal_db: f64,
    pub ref_distance: f64,
    pub path_loss_exponent: f64,
    /// Distances below this are clamped.
    pub min_distance: f64,
    /// Half-power beamwidth of the sector antenna, degrees.
    pub beamwidth_deg: f64,
    /// Maximum attenuation of the antenna pattern (reached at the back lobe), dB.
    pub back_lobe_db: f64,
    /// Spectral-efficiency cap, bit/s/Hz.
    pub eff_max: f64,
    pub noise_db: f64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            ref_signal_db: 45.0,
            ref_distance: 50.0,
            path_loss_exponent: 3.5,
            min_distance: 10.0,
            beamwidth_deg: 65.0,
            back_lobe_db: 20.0,
            eff_max: 8.0,
            noise_db: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadioModel {
    pub config: RadioConfig,
    ref_efficiency: f64,
}

impl RadioModel {
    pub fn new(config: RadioConfig) -> Self {
        let ref_efficiency = raw_efficiency(&config, config.ref_signal_db);
        Self { config, ref_efficiency }
    }

    /// Antenna gain (≤ 0 dB) for a direction `angle_deg` measured from boresight.
    pub fn antenna_gain_db(&self, angle_deg: f64) -> f64 {
        let off = wrap_degrees(angle_deg).abs();
        let theta = off / self.config.beamwidth_deg;
        -(12.0 * theta * theta).min(self.config.back_lobe_db)
    }

    pub fn path_signal_db(&self, dist: f64) -> f64 {
        let c = &self.config;
        let d = dist.max(c.min_distance);
        c.ref_signal_db - 10.0 * c.path_loss_exponent * (d / c.ref_distance).log10()
    }

    /// Signal from a sector (site + azimuth) to a position, without carrier offsets.
    pub fn sector_signal_db(&self, site: Point, azimuth_deg: f64, pos: Point) -> f64 {
        let dist = distance(site, pos);
        let bearing = (pos[1] - site[1]).atan2(pos[0] - site[0]).to_degrees();
        self.path_signal_db(dist) + self.antenna_gain_db(bearing - azimuth_deg)
    }

    pub fn signal_quality(&self, topo: &Topology, pos: Point, cell: &Cell) -> f64 {
        self.sector_signal_db(topo.site_of(cell), cell.sector_azimuth, pos) + topo.carrier_offsets_db[cell.carrier]
    }

    /// Spectral efficiency normalized so that a boresight UE at the reference distance gets 1.
    pub fn efficiency(&self, signal_db: f64) -> f64 {
        raw_efficiency(&self.config, signal_db) / self.ref_efficiency
    }
}

fn raw_efficiency(c: &RadioConfig, signal_db: f64) -> f64 {
    let snr = 10f64.powf((signal_db - c.noise_db) / 10.0);
    (1.0 + snr).log2().min(c.eff_max)
}

fn wrap_degrees(a: f64) -> f64 {
    let r = (a + 180.0).rem_euclid(360.0) - 180.0;
    if r == -180.0 {
        180.0
    } else {
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::topology::{build_topology, TopologyConfig};

    fn model() -> RadioModel {
        RadioModel::new(RadioConfig::default())
    }

    #[test]
    fn reference_anchor() {
        let m = model();
        let s = m.sector_signal_db([0.0, 0.0], 0.0, [50.0, 0.0]);
        assert!((s - 45.0).abs() < 1e-12);
        assert!((m.efficiency(s) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn doubling_distance_drops_by_path_loss() {
        let m = model();
        let a = m.sector_signal_db([0.0, 0.0], 0.0, [100.0, 0.0]);
        let b = m.sector_signal_db([0.0, 0.0], 0.0, [200.0, 0.0]);
        let expected = 10.0 * 3.5 * 2f64.log10();
        assert!((a - b - expected).abs() < 1e-12);
        assert!((expected - 10.536).abs() < 1e-3);
    }

    #[test]
    fn back_lobe_attenuation() {
        let m = model();
        let front = m.sector_signal_db([0.0, 0.0], 0.0, [100.0, 0.0]);
        let back = m.sector_signal_db([0.0, 0.0], 0.0, [-100.0, 0.0]);
        assert!((front - back - 20.0).abs() < 1e-12);
        assert_eq!(m.antenna_gain_db(0.0), 0.0);
    }

    #[test]
    fn strictly_decreasing_beyond_clamp() {
        let m = model();
        let mut prev = f64::INFINITY;
        for step in 1..200 {
            let d = 10.0 + 7.3 * step as f64;
            let s = m.sector_signal_db([0.0, 0.0], 120.0, [d * -0.5, d * 0.75f64.sqrt()]);
            assert!(s < prev);
            prev = s;
        }
        // Inside the clamp the signal is flat.
        assert_eq!(m.path_signal_db(1.0), m.path_signal_db(10.0));
    }

    #[test]
    fn cell_signal_includes_carrier_offset() {
        let topo = build_topology(&TopologyConfig::default()).unwrap();
        let m = model();
        let pos = [120.0, 30.0];
        let s0 = m.signal_quality(&topo, pos, &topo.cells[0]);
        let s3 = m.signal_quality(&topo, pos, &topo.cells[3]);
        assert!((s0 - s3 - 4.5).abs() < 1e-12);
    }
}
