// Parse a LIBSVM snippet, generate the census-like stand-in and split it
// across workers.

use flecs::dataset::{census_like, parse_libsvm, partition_rows, PartitionMode};

const SNIPPET: &str = "\
+1 3:1 11:1 14:1
-1 5:1 7:0.5

+1 1:1 123:1
";

fn main() -> flecs::Result<()> {
    let small = parse_libsvm(SNIPPET.as_bytes(), Some(123))?;
    println!("parsed {} rows, d = {}", small.num_rows(), small.num_features());
    for r in small.rows() {
        println!("  label {:+} nnz {} indices {:?}", r.label, r.nnz(), r.indices);
    }

    let ds = census_like(2000, 7)?;
    let positives = ds.rows().iter().filter(|r| r.label > 0.0).count();
    let max_nnz = ds.rows().iter().map(|r| r.nnz()).max().unwrap_or(0);
    println!("census-like: {} rows, d = {}, {positives} positive, max nnz {max_nnz}", ds.num_rows(), ds.num_features());

    for mode in [PartitionMode::Contiguous, PartitionMode::SortedByLabel, PartitionMode::Shuffled] {
        let part = partition_rows(&ds, 6, mode, 7)?;
        let sizes: Vec<usize> = part.assignments.iter().map(Vec::len).collect();
        let pos_share: Vec<String> = part
            .assignments
            .iter()
            .map(|rows| {
                let p = rows.iter().filter(|&&r| ds.rows()[r].label > 0.0).count();
                format!("{:.2}", p as f64 / rows.len() as f64)
            })
            .collect();
        println!("{mode:?}: sizes {sizes:?}, positive share {pos_share:?}");
    }
    Ok(())
}
