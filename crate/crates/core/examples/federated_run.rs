// Drive the federated simulator step by step on the census-like data and
// print what crosses the wire each round.

use flecs::compress::CompressorSpec;
use flecs::dataset::{census_like, partition_rows, PartitionMode};
use flecs::federation::{FlecsConfig, Simulation};
use flecs::objective::{GlobalObjective, ObjectiveKind};
use flecs::Vector;

fn main() -> flecs::Result<()> {
    let ds = census_like(3000, 1)?;
    let part = partition_rows(&ds, 5, PartitionMode::Contiguous, 0)?;
    let f = GlobalObjective::from_dataset(&ds, &part, ObjectiveKind::LogregL2, 1e-3)?;
    let d = f.dim();

    let config = FlecsConfig {
        m: 8,
        compressor: CompressorSpec::Identity,
        max_iterations: 25,
        record_wall_time: false,
        ..FlecsConfig::benchmark_defaults(d)
    };
    let mut sim = Simulation::new(&f, config, Vector::zeros(d))?;
    println!("{:>4} {:>12} {:>12} {:>12} {:>8}", "k", "loss", "|grad|^2", "uplink bits", "hvps");
    while !sim.is_finished() {
        let report = sim.step()?;
        let r = &report.row;
        if r.iter % 5 == 0 || report.finished {
            println!("{:>4} {:>12.6} {:>12.3e} {:>12} {:>8}", r.iter, r.loss, r.grad_norm_sq, r.uplink_bits_cum, r.hvp_cum);
        }
        if let Some(dir) = &report.direction {
            if dir.fallback {
                println!("     direction fell back to -grad at k = {}", r.iter);
            }
        }
    }
    let b = sim.aggregate_hessian();
    println!("aggregate approximation: d = {}, trace {:.4}", b.nrows(), b.trace());
    Ok(())
}
