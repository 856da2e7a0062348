// Stop a run halfway, write a checkpoint, resume from it and confirm the
// trajectory matches an uninterrupted run.

use flecs::compress::CompressorSpec;
use flecs::dataset::{census_like, partition_rows, PartitionMode};
use flecs::federation::{checkpoint, FlecsConfig, Simulation};
use flecs::objective::{GlobalObjective, ObjectiveKind};
use flecs::Vector;

fn main() -> flecs::Result<()> {
    let ds = census_like(800, 2)?;
    let part = partition_rows(&ds, 4, PartitionMode::Shuffled, 2)?;
    let f = GlobalObjective::from_dataset(&ds, &part, ObjectiveKind::LogregL2, 1e-3)?;
    let d = f.dim();
    let config = FlecsConfig {
        m: 4,
        compressor: CompressorSpec::Dither { levels: 64 },
        max_iterations: 12,
        tol: 0.0,
        record_wall_time: false,
        ..FlecsConfig::default()
    };

    let full = Simulation::new(&f, config.clone(), Vector::zeros(d))?.run()?;

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("checkpoint.bin");
    let mut first = Simulation::new(&f, config, Vector::zeros(d))?;
    let mut rows = Vec::new();
    for _ in 0..6 {
        rows.push(first.step()?.row);
    }
    checkpoint::save(&first, &path)?;
    println!("checkpoint at k = {}: {} bytes", first.state().k, std::fs::metadata(&path)?.len());
    drop(first);

    let mut resumed = checkpoint::resume(&f, &path)?;
    rows.extend(resumed.run()?);
    assert_eq!(rows, full);
    println!("resumed run matches the uninterrupted one over {} rows", rows.len());
    Ok(())
}
