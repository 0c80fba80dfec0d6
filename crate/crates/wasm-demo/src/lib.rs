//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every exported function returns a JSON string so the page needs no generated type glue.

use std::cell::RefCell;
use std::sync::Arc;

use lbirl::env::{Controller, Env, EnvConfig};
use lbirl::kpi::{KpiConfig, SectorKpis};
use lbirl::policy::{AdaptiveController, FixedController, RandomController};
use lbirl::sim::{Network, TrafficScenario};
use lbirl::trex::{contiguous_offsets, pair_loss, pref_prob, tcs_index_set, SamplerKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

thread_local! {
    static NETWORK: RefCell<Option<Arc<Network>>> = const { RefCell::new(None) };
}

fn network() -> Result<Arc<Network>, String> {
    NETWORK.with(|cell| {
        let mut slot = cell.borrow_mut();
        if slot.is_none() {
            *slot = Some(Network::new(EnvConfig::default().sim).map_err(|e| e.to_string())?);
        }
        Ok(Arc::clone(slot.as_ref().expect("just built")))
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct HourRow {
    pub hour: usize,
    pub t_min: f64,
    pub t_std: f64,
    pub t_cc: f64,
    pub ip: Vec<f64>,
    pub prb: Vec<f64>,
    pub action: Vec<i32>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Simulation {
    pub scenario: u32,
    pub controller: String,
    pub hours: Vec<HourRow>,
    pub mean_t_min: f64,
    pub mean_t_std: f64,
}

/// Runs `hours` control steps of `controller` ("fixed", "adaptive" or "random").
pub fn run_simulation(scenario: u32, controller: &str, hours: usize, seed: u64) -> Result<Simulation, String> {
    if hours == 0 || hours > 168 {
        return Err(format!("hours must be in 1..=168, got {hours}"));
    }
    let sc = TrafficScenario::builtin(scenario).map_err(|e| e.to_string())?;
    let mut env = Env::with_network(network()?, EnvConfig::default()).map_err(|e| e.to_string())?;
    let space = env.action_space();
    let mut ctrl: Box<dyn Controller> = match controller {
        "fixed" => Box::new(FixedController::neutral(space)),
        "adaptive" => Box::new(AdaptiveController::new(space, 10.0).map_err(|e| e.to_string())?),
        "random" => Box::new(RandomController::new(space, seed ^ 0xD3_0000_0000)),
        other => return Err(format!("unknown controller '{other}'")),
    };
    let kpi = KpiConfig::default();
    let mut obs = env.reset(&sc, seed).map_err(|e| e.to_string())?;
    let mut rows = Vec::with_capacity(hours);
    for hour in 0..hours {
        let action = ctrl.act(&obs);
        obs = env.step(&action).map_err(|e| e.to_string())?;
        let k = SectorKpis::of(&obs, &kpi);
        rows.push(HourRow {
            hour,
            t_min: k.t_min,
            t_std: k.t_std,
            t_cc: k.t_cc,
            ip: obs.ip().to_vec(),
            prb: obs.prb().to_vec(),
            action: action.0,
        });
    }
    let n = rows.len() as f64;
    Ok(Simulation {
        scenario,
        controller: ctrl.name(),
        mean_t_min: rows.iter().map(|r| r.t_min).sum::<f64>() / n,
        mean_t_std: rows.iter().map(|r| r.t_std).sum::<f64>() / n,
        hours: rows,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Preference {
    /// Probability that the second return is preferred.
    pub prob: f64,
    /// Loss when the second side is labelled better.
    pub loss: f64,
}

pub fn preference_of(j_i: f64, j_j: f64) -> Preference {
    Preference {
        prob: pref_prob(j_i, j_j),
        loss: pair_loss(j_i, j_j),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IndexDraw {
    pub sampler: String,
    pub a: Vec<usize>,
    pub b: Vec<usize>,
}

pub fn draw_indices(sampler: &str, horizon: usize, l: usize, seed: u64) -> Result<IndexDraw, String> {
    let kind: SamplerKind = sampler.parse().map_err(|e: lbirl::Error| e.to_string())?;
    if l == 0 || l > horizon {
        return Err(format!("sub-trajectory length must be in 1..={horizon}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a, b) = match kind {
        SamplerKind::Tcs => {
            let idx = tcs_index_set(&mut rng, horizon, l);
            (idx.clone(), idx)
        }
        SamplerKind::Contiguous => {
            let (sa, sb) = contiguous_offsets(&mut rng, horizon, l);
            ((sa..sa + l).collect(), (sb..sb + l).collect())
        }
    };
    Ok(IndexDraw {
        sampler: kind.to_string(),
        a,
        b,
    })
}

fn to_json<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
        .and_then(|v| serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string())))
}

#[wasm_bindgen]
pub fn simulate(scenario: u32, controller: &str, hours: u32, seed: u32) -> Result<String, JsError> {
    to_json(run_simulation(scenario, controller, hours as usize, seed as u64))
}

#[wasm_bindgen]
pub fn preference(j_i: f64, j_j: f64) -> Result<String, JsError> {
    to_json(Ok(preference_of(j_i, j_j)))
}

#[wasm_bindgen]
pub fn sample_indices(sampler: &str, horizon: u32, l: u32, seed: u32) -> Result<String, JsError> {
    to_json(draw_indices(sampler, horizon as usize, l as usize, seed as u64))
}
