use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// 2-D position in meters.
pub type Point = [f64; 2];

/// Carrier-dependent cell properties. Index = carrier index within a sector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarrierSpec {
    /// Peak throughput of the carrier for a unit-efficiency UE, Mbps.
    pub capacity_mbps: f64,
    pub prb_count: u32,
    /// Frequency-dependent signal offset added on top of the path loss, dB.
    pub signal_offset_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TopologyConfig {
    pub enb_count: usize,
    pub sectors_per_enb: usize,
    pub inter_site_distance: f64,
    /// Radius of the simulated coverage disc as a multiple of the inter-site distance.
    pub coverage_factor: f64,
    /// One entry per carrier; its length is the number of cells per sector.
    pub carriers: Vec<CarrierSpec>,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        let carrier = |capacity_mbps: f64, prb_count: u32, signal_offset_db: f64| CarrierSpec {
            capacity_mbps,
            prb_count,
            signal_offset_db,
        };
        Self {
            enb_count: 7,
            sectors_per_enb: 3,
            inter_site_distance: 500.0,
            coverage_factor: 1.5,
            carriers: vec![
                carrier(4.0, 25, 0.0),
                carrier(6.0, 50, -1.5),
                carrier(8.0, 75, -3.0),
                carrier(10.0, 100, -4.5),
            ],
        }
    }
}

impl TopologyConfig {
    pub fn cells_per_sector(&self) -> usize {
        self.carriers.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub id: usize,
    pub enb: usize,
    /// Global sector index (`enb * sectors_per_enb + local sector`).
    pub sector: usize,
    pub sector_azimuth: f64,
    pub carrier: usize,
    pub capacity: f64,
    pub prb_count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub enb_count: usize,
    pub sectors_per_enb: usize,
    pub cells_per_sector: usize,
    pub inter_site_distance: f64,
    pub coverage_radius: f64,
    pub sites: Vec<Point>,
    pub cells: Vec<Cell>,
    pub carrier_offsets_db: Vec<f64>,
}

/// Builds the hexagonal layout: one eNB at the origin and up to six on a ring of radius
/// `inter_site_distance`. Cell ids are `(sector * cells_per_sector) + carrier`.
pub fn build_topology(config: &TopologyConfig) -> Result<Topology> {
    if config.enb_count == 0 || config.enb_count > 7 {
        return Err(Error::Config(format!(
            "enb_count must be in 1..=7 for the hexagonal layout, got {}",
            config.enb_count
        )));
    }
    if config.sectors_per_enb == 0 {
        return Err(Error::Config("sectors_per_enb must be positive".into()));
    }
    if config.carriers.is_empty() {
        return Err(Error::Config("at least one carrier is required".into()));
    }
    if !(config.inter_site_distance > 0.0) || !(config.coverage_factor > 0.0) {
        return Err(Error::Config(
            "inter_site_distance and coverage_factor must be positive".into(),
        ));
    }
    if let Some(bad) = config
        .carriers
        .iter()
        .find(|c| !(c.capacity_mbps > 0.0) || c.prb_count == 0)
    {
        return Err(Error::Config(format!("invalid carrier spec {bad:?}")));
    }

    let isd = config.inter_site_distance;
    let sites: Vec<Point> = (0..config.enb_count)
        .map(|enb| {
            if enb == 0 {
                [0.0, 0.0]
            } else {
                let angle = (60.0 * (enb - 1) as f64).to_radians();
                [isd * angle.cos(), isd * angle.sin()]
            }
        })
        .collect();

    let n_c = config.cells_per_sector();
    let mut cells = Vec::with_capacity(config.enb_count * config.sectors_per_enb * n_c);
    for enb in 0..config.enb_count {
        for local in 0..config.sectors_per_enb {
            let sector = enb * config.sectors_per_enb + local;
            let azimuth = 360.0 * local as f64 / config.sectors_per_enb as f64;
            for (carrier, spec) in config.carriers.iter().enumerate() {
                cells.push(Cell {
                    id: sector * n_c + carrier,
                    enb,
                    sector,
                    sector_azimuth: azimuth,
                    carrier,
                    capacity: spec.capacity_mbps,
                    prb_count: spec.prb_count,
                });
            }
        }
    }

    Ok(Topology {
        enb_count: config.enb_count,
        sectors_per_enb: config.sectors_per_enb,
        cells_per_sector: n_c,
        inter_site_distance: isd,
        coverage_radius: isd * config.coverage_factor,
        sites,
        cells,
        carrier_offsets_db: config.carriers.iter().map(|c| c.signal_offset_db).collect(),
    })
}

impl Topology {
    pub fn sector_count(&self) -> usize {
        self.enb_count * self.sectors_per_enb
    }

    pub fn cell_id(&self, sector: usize, carrier: usize) -> usize {
        sector * self.cells_per_sector + carrier
    }

    pub fn sector_cells(&self, sector: usize) -> &[Cell] {
        let start = sector * self.cells_per_sector;
        &self.cells[start..start + self.cells_per_sector]
    }

    pub fn sector_of(&self, cell: usize) -> usize {
        cell / self.cells_per_sector
    }

    pub fn site_of(&self, cell: &Cell) -> Point {
        self.sites[cell.enb]
    }

    pub fn sector_azimuth(&self, sector: usize) -> f64 {
        let local = sector % self.sectors_per_enb;
        360.0 * local as f64 / self.sectors_per_enb as f64
    }
}

pub(crate) fn distance(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn default_layout_counts() {
        let topo = build_topology(&TopologyConfig::default()).unwrap();
        assert_eq!(topo.cells.len(), 84);
        assert_eq!(topo.sector_count(), 21);
        let ids: HashSet<_> = topo.cells.iter().map(|c| c.id).collect();
        assert_eq!(ids.len(), 84);
        for (i, c) in topo.cells.iter().enumerate() {
            assert_eq!(c.id, i);
            assert!([0.0, 120.0, 240.0].contains(&c.sector_azimuth));
            assert!(c.carrier < 4);
        }
    }

    #[test]
    fn hexagon_geometry() {
        let topo = build_topology(&TopologyConfig::default()).unwrap();
        assert_eq!(topo.sites[0], [0.0, 0.0]);
        let isd = topo.inter_site_distance;
        for k in 1..7 {
            let next = if k == 6 { 1 } else { k + 1 };
            let prev = if k == 1 { 6 } else { k - 1 };
            assert!((distance(topo.sites[k], [0.0, 0.0]) - isd).abs() < 1e-9);
            // A regular hexagon's side equals its circumradius.
            assert!((distance(topo.sites[k], topo.sites[next]) - isd).abs() < 1e-9);
            assert!((distance(topo.sites[k], topo.sites[prev]) - isd).abs() < 1e-9);
        }
    }

    #[test]
    fn single_site() {
        let topo = build_topology(&TopologyConfig {
            enb_count: 1,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(topo.cells.len(), 12);
        assert!(topo.cells.iter().all(|c| topo.site_of(c) == [0.0, 0.0]));
    }

    #[test]
    fn rejects_invalid_counts() {
        for cfg in [
            TopologyConfig {
                enb_count: 0,
                ..Default::default()
            },
            TopologyConfig {
                sectors_per_enb: 0,
                ..Default::default()
            },
            TopologyConfig {
                carriers: vec![],
                ..Default::default()
            },
            TopologyConfig {
                inter_site_distance: -1.0,
                ..Default::default()
            },
        ] {
            assert!(build_topology(&cfg).is_err());
        }
    }
}
