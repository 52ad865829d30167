//! Closed-form area, energy and latency for BP and DFA chips over depth.
//!
//!     cargo run --example cost_model

use cimtrain::analog::CrossbarConfig;
use cimtrain::hwcost::{build_floorplan, CostReport, UnitCosts, DEFAULT_TILE_DIM};
use cimtrain::network::{Activation, Topology};
use cimtrain::trainers::TrainerKind;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let uc = UnitCosts::resolve("default")?;
    let cfg = CrossbarConfig::default();
    println!("depth  area BP/DFA  energy BP/DFA  backward latency BP/DFA");
    for depth in [1, 2, 4, 6, 8, 10] {
        let topo = Topology::uniform(784, 1024, depth, 10, Activation::Relu)?;
        let report = |kind| -> Result<CostReport, Box<dyn std::error::Error>> {
            let fp = build_floorplan(&topo, kind, &cfg, DEFAULT_TILE_DIM)?;
            Ok(CostReport::new(&fp, &uc, 60000, 128, 1))
        };
        let (bp, dfa) = (report(TrainerKind::Bp)?, report(TrainerKind::Dfa)?);
        println!(
            "{depth:>5}  {:>11.3}  {:>13.3}  {:>23.3}",
            bp.area_um2.total / dfa.area_um2.total,
            bp.energy_pj.total / dfa.energy_pj.total,
            bp.backward_latency_per_batch_ns / dfa.backward_latency_per_batch_ns
        );
    }

    let topo = Topology::uniform(784, 1024, 5, 10, Activation::Relu)?;
    let fp = build_floorplan(&topo, TrainerKind::Dfa, &cfg, DEFAULT_TILE_DIM)?;
    print!("\n{}", fp.summary());
    println!("{}", CostReport::new(&fp, &uc, 60000, 128, 1).to_json());
    Ok(())
}
