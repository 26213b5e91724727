//! Print the prompt the interpreter model receives. It carries schema
//! metadata and examples only, never cell values.
//!
//! cargo run -p relq --example prompt

use relq::eval::BenchAssets;
use relq::llm::build_interpreter_prompt;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let assets = BenchAssets::bundled()?;
    let request = build_interpreter_prompt(
        &assets.catalog,
        "Which trucks failed a test on release candidate RC2?",
        &assets.examples[..2],
    );
    println!("--- system ---\n{}", request.system);
    println!("--- user ---\n{}", request.user);
    println!("--- fixture key ---\n{}", request.fixture_key());
    Ok(())
}
