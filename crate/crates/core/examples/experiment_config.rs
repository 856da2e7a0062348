// Build a run from TOML text, execute it into a scratch directory and read
// back the files the CLI would produce.

use flecs::experiment::{run_experiment_in, RunConfig};

const CONFIG: &str = r#"
[run]
name = "demo"
max_iterations = 10
record_wall_time = false

[data]
source = "synthetic_quadratic"
dim = 20
workers = 3

[compressor]
kind = "rand_k"
k = "4d"

[direction]
rule = "fedsonia"
rho = 0.2
"#;

fn main() -> flecs::Result<()> {
    let cfg = RunConfig::from_toml_str(CONFIG)?;
    let dir = tempfile::tempdir()?;
    let out = run_experiment_in(&cfg, dir.path())?;
    println!("{}", out.summary.to_text());
    let mut names: Vec<String> = std::fs::read_dir(&out.dir)?.map(|e| e.map(|e| e.file_name().to_string_lossy().into_owned())).collect::<Result<_, _>>()?;
    names.sort();
    println!("wrote {names:?}");
    println!("{}", std::fs::read_to_string(out.dir.join("resolved_config.toml"))?);
    Ok(())
}
