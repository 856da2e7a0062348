// How the sketch size m trades Hessian-vector products against bits.

use flecs::compress::CompressorSpec;
use flecs::dataset::{census_like, partition_rows, PartitionMode};
use flecs::federation::{run, FlecsConfig};
use flecs::objective::{GlobalObjective, ObjectiveKind};
use flecs::Vector;

fn main() -> flecs::Result<()> {
    let ds = census_like(2000, 5)?;
    let part = partition_rows(&ds, 4, PartitionMode::Contiguous, 0)?;
    let f = GlobalObjective::from_dataset(&ds, &part, ObjectiveKind::LogregL2, 1e-3)?;
    let d = f.dim();
    let tol = 1e-8;
    println!("{:>4} {:>6} {:>14} {:>8}", "m", "iters", "uplink bits", "hvps");
    for m in [1, 4, 16, 32] {
        let rows = run(
            &f,
            FlecsConfig {
                m,
                compressor: CompressorSpec::Identity,
                tol,
                max_iterations: 60,
                record_wall_time: false,
                ..FlecsConfig::benchmark_defaults(d)
            },
            Vector::zeros(d),
        )?;
        let last = rows.last().expect("at least one row");
        let mark = if last.grad_norm_sq <= tol { "" } else { " (tolerance not reached)" };
        println!("{m:>4} {:>6} {:>14} {:>8}{mark}", last.iter, last.uplink_bits_cum, last.hvp_cum);
    }
    Ok(())
}
