//! Write a dataset to CSV, load it back, and stamp a report with a manifest.

use fairbni::io::{load_dataset, report_json, save_dataset, DatasetPaths, RunManifest};
use fairbni::simulation::{generate_dataset, SimConfig};

pub fn run_example() -> fairbni::Result<()> {
    let config = SimConfig::with_dims(50, 6, 2, 2)?;
    let (dataset, _) = generate_dataset(&config)?;
    let dir = std::env::temp_dir().join(format!("fairbni-example-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let paths = DatasetPaths::in_dir(&dir);
    save_dataset(&dataset, &paths)?;
    let loaded = load_dataset(&paths)?;
    println!("round trip identical: {}", loaded == dataset);

    let manifest = RunManifest::new("example", &config, &paths.all(), Some(config.seed))?;
    let json = report_json(&manifest, &loaded.subgroup_fractions())?;
    println!("{}", json.lines().take(6).collect::<Vec<_>>().join("\n"));
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> fairbni::Result<()> {
    run_example()
}
