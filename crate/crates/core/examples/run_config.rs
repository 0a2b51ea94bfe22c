//! Parses an experiment config from a string and writes its artifacts to a
//! temporary directory (or the directory given as the first argument).

use mckean::experiment::{run_config, ExperimentConfig, RunOptions};

const CONFIG: &str = r#"
model = "ou-linear"
estimator = "strong-W2"
seed = 3
time = "schedule"
replications = 64

[params]
v0 = 0.25

[sweep]
axis = "N"
values = [64, 128, 256, 512]
fixed = 64

[verdict]
upper = -0.35
"#;

fn main() -> mckean::Result<()> {
    let config = ExperimentConfig::parse(CONFIG)?;
    let out = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("mckean-example"), Into::into);
    let options = RunOptions {
        output: Some(out),
        ..Default::default()
    };
    let summary = run_config(&config, &options, None)?;
    println!("{:?}: {}", summary.report.verdict, summary.report.reason);
    for entry in std::fs::read_dir(&summary.output)? {
        println!("  {}", entry?.path().display());
    }
    Ok(())
}
