use serde::{Deserialize, Serialize};

use super::radio::RadioModel;
use super::topology::{Point, Topology};

/// Precomputed best-serving sector on a square grid covering the simulation disc.
///
/// Camping decisions and spectral efficiencies are looked up here instead of evaluating the
/// radio model per UE per tick. Carrier offsets are identical across sectors, so the best
/// sector does not depend on the carrier.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverageMap {
    resolution: f64,
    origin: f64,
    side: usize,
    carriers: usize,
    best_sector: Vec<u16>,
    /// Sector signal (dB, without carrier offset) of the best sector.
    best_signal: Vec<f32>,
    /// Normalized spectral efficiency per (grid point, carrier) on the best sector.
    efficiency: Vec<f32>,
    /// Mean efficiency per (sector, carrier) over the in-disc points the sector serves.
    mean_efficiency: Vec<f64>,
}

impl CoverageMap {
    pub fn new(topo: &Topology, radio: &RadioModel, resolution: f64) -> Self {
        let radius = topo.coverage_radius;
        let side = (2.0 * radius / resolution).ceil() as usize + 1;
        let origin = -radius;
        let carriers = topo.cells_per_sector;
        let sectors: Vec<(Point, f64)> = (0..topo.sector_count())
            .map(|s| (topo.sites[s / topo.sectors_per_enb], topo.sector_azimuth(s)))
            .collect();
        let mut best_sector = Vec::with_capacity(side * side);
        let mut best_signal = Vec::with_capacity(side * side);
        let mut efficiency = Vec::with_capacity(side * side * carriers);
        let mut eff_sum = vec![0.0; sectors.len() * carriers];
        let mut eff_count = vec![0usize; sectors.len()];
        for iy in 0..side {
            for ix in 0..side {
                let p = [
                    origin + (ix as f64 + 0.5) * resolution,
                    origin + (iy as f64 + 0.5) * resolution,
                ];
                let (sector, signal) = sectors
                    .iter()
                    .enumerate()
                    .map(|(s, &(site, az))| (s, radio.sector_signal_db(site, az, p)))
                    .fold(
                        (0, f64::NEG_INFINITY),
                        |best, cur| if cur.1 > best.1 { cur } else { best },
                    );
                best_sector.push(sector as u16);
                best_signal.push(signal as f32);
                let inside = p[0].hypot(p[1]) <= radius;
                if inside {
                    eff_count[sector] += 1;
                }
                for (carrier, offset) in topo.carrier_offsets_db.iter().enumerate() {
                    let e = radio.efficiency(signal + offset);
                    efficiency.push(e as f32);
                    if inside {
                        eff_sum[sector * carriers + carrier] += e;
                    }
                }
            }
        }
        let mean_efficiency = eff_sum
            .iter()
            .enumerate()
            .map(|(i, sum)| sum / eff_count[i / carriers].max(1) as f64)
            .collect();
        Self {
            resolution,
            origin,
            side,
            carriers,
            best_sector,
            best_signal,
            efficiency,
            mean_efficiency,
        }
    }

    /// Average efficiency a UE sees on `carrier` when uniformly placed in `sector`'s area.
    pub fn mean_efficiency(&self, sector: usize, carrier: usize) -> f64 {
        self.mean_efficiency[sector * self.carriers + carrier]
    }

    #[inline]
    fn index(&self, p: Point) -> usize {
        let clamp = |v: f64| (((v - self.origin) / self.resolution) as isize).clamp(0, self.side as isize - 1) as usize;
        clamp(p[1]) * self.side + clamp(p[0])
    }

    #[inline]
    pub fn best_sector(&self, p: Point) -> usize {
        self.best_sector[self.index(p)] as usize
    }

    /// Best sector, its sector signal and the per-carrier efficiency table at `p`.
    #[inline]
    pub fn lookup(&self, p: Point) -> (usize, f64, &[f32]) {
        let i = self.index(p);
        (
            self.best_sector[i] as usize,
            self.best_signal[i] as f64,
            &self.efficiency[i * self.carriers..(i + 1) * self.carriers],
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::radio::RadioConfig;
    use crate::sim::topology::{build_topology, TopologyConfig};

    #[test]
    fn grid_agrees_with_exact_best_sector_mostly() {
        let topo = build_topology(&TopologyConfig::default()).unwrap();
        let radio = RadioModel::new(RadioConfig::default());
        let map = CoverageMap::new(&topo, &radio, 10.0);
        // Points at grid centres must match the exact argmax.
        let mut checked = 0;
        for k in 0..400 {
            let x = -700.0 + 3.5 * k as f64 + 5.0;
            let y = 350.0 - 1.75 * k as f64 + 5.0;
            let p = [(x / 10.0).floor() * 10.0 + 5.0, (y / 10.0).floor() * 10.0 + 5.0];
            let exact = (0..topo.sector_count())
                .max_by(|&a, &b| {
                    let sa = radio.sector_signal_db(topo.sites[a / 3], topo.sector_azimuth(a), p);
                    let sb = radio.sector_signal_db(topo.sites[b / 3], topo.sector_azimuth(b), p);
                    sa.total_cmp(&sb).then(b.cmp(&a))
                })
                .unwrap();
            assert_eq!(map.best_sector(p), exact, "at {p:?}");
            checked += 1;
        }
        assert_eq!(checked, 400);
    }

    #[test]
    fn centre_sector_zero_faces_east() {
        let topo = build_topology(&TopologyConfig::default()).unwrap();
        let radio = RadioModel::new(RadioConfig::default());
        let map = CoverageMap::new(&topo, &radio, 10.0);
        assert_eq!(map.best_sector([120.0, 5.0]), 0);
        assert_eq!(map.best_sector([-120.0, 60.0]), 1);
        let (_, _, eff) = map.lookup([245.0, 5.0]);
        assert!(eff[0] > eff[3]);
    }
}
