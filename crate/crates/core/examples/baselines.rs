// Gradient descent, full-matrix Newton learning and the sketched method on
// the same logistic problem, compared by uplink bits to reach a tolerance.

use flecs::compress::CompressorSpec;
use flecs::dataset::{census_like, partition_rows, PartitionMode};
use flecs::federation::baseline::{run_fednl_lite, run_gd, FednlLiteConfig, GdConfig};
use flecs::federation::{run, FlecsConfig, RunMetrics};
use flecs::objective::{GlobalObjective, ObjectiveKind};
use flecs::Vector;

fn bits_to(rows: &[RunMetrics], tol: f64) -> String {
    rows.iter()
        .find(|r| r.grad_norm_sq <= tol)
        .map_or_else(|| format!("not reached in {} iterations", rows.len() - 1), |r| format!("{} bits at k = {}", r.uplink_bits_cum, r.iter))
}

fn main() -> flecs::Result<()> {
    let ds = census_like(2000, 4)?;
    let part = partition_rows(&ds, 4, PartitionMode::Contiguous, 0)?;
    let f = GlobalObjective::from_dataset(&ds, &part, ObjectiveKind::LogregL2, 1e-3)?;
    let d = f.dim();
    let w0 = Vector::zeros(d);
    let tol = 1e-8;

    let gd = run_gd(&f, &GdConfig { alpha: 1.0, max_iterations: 3000, tol, record_wall_time: false }, w0.clone())?;
    let nl = run_fednl_lite(
        &f,
        &FednlLiteConfig { compressor: CompressorSpec::TopK { k: 4 * d }, tol, max_iterations: 300, record_wall_time: false, ..FednlLiteConfig::default() },
        w0.clone(),
    )?;
    let sk = run(
        &f,
        FlecsConfig { m: 8, tol, max_iterations: 300, record_wall_time: false, ..FlecsConfig::benchmark_defaults(d) },
        w0,
    )?;
    println!("target |grad|^2 <= {tol:e}, d = {d}");
    println!("  gd          {}", bits_to(&gd, tol));
    println!("  fednl_lite  {}", bits_to(&nl, tol));
    println!("  sketched    {}", bits_to(&sk, tol));
    Ok(())
}
