//! Compile and run an expression against the bundled CSV tables.
//!
//! cargo run -p relq --example exec

use relq::eval::BenchAssets;
use relq::{compile_plan, execute, parse};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let assets = BenchAssets::bundled()?;
    let expr = parse(
        r#"sort[n desc](groupby[ecu; count(*) as n](select[safety_critical == true](test_cases)))"#,
    )?;
    let plan = compile_plan(&expr, &assets.catalog)?;
    let result = execute(&plan, &assets.database)?;
    print!("{}", result.to_csv());
    Ok(())
}
