//! Answer natural-language questions through the full pipeline, replaying
//! recorded model responses so no network access is needed.
//!
//! cargo run -p relq --example query

use relq::eval::BenchAssets;
use relq::{run_query, FixtureProvider, QueryOutcome, RunOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let assets = BenchAssets::bundled()?;
    let provider = FixtureProvider::replay(&assets.fixtures_dir);
    let questions = assets.records.iter().filter(|r| ["q01", "q12", "q13"].contains(&r.id.as_str()));
    for rec in questions {
        println!("Q: {}", rec.query);
        match run_query(&rec.query, &assets.catalog, &assets.database, &provider, &RunOptions::default()) {
            QueryOutcome::Answered { answer, timings } => {
                println!("  ra:        {}", answer.ra_text);
                println!("  optimized: {}", answer.optimized_ra_text);
                println!("  {} rows in {} us", answer.result.len(), timings.total_micros());
            }
            QueryOutcome::Rejected { reason, stage, .. } => println!("  rejected at {}: {reason}", stage.as_str()),
            QueryOutcome::Failed { error, stage, .. } => println!("  failed at {}: {error}", stage.as_str()),
        }
    }
    Ok(())
}
