//! Score the bundled benchmark at several shot counts and print metrics
//! per slice.
//!
//! cargo run -p relq --example eval

use relq::eval::BenchAssets;
use relq::{run_benchmark, BenchmarkOptions, FixtureProvider};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let assets = BenchAssets::bundled()?;
    let provider = FixtureProvider::replay(&assets.fixtures_dir);
    let options = BenchmarkOptions {
        shots: vec![0, 2, 4],
        example_pool: assets.examples.clone(),
        optimize: true,
        model: None,
    };
    for run in run_benchmark(&assets.records, &assets.catalog, &assets.database, &provider, &options)? {
        println!("== {} shots ==\n{}", run.shots, run.metrics);
    }
    Ok(())
}
