//! Show what the optimizer does to a naive product-then-filter query and
//! how many rows reach the join before and after.
//!
//! cargo run -p relq --example optimize

use relq::eval::BenchAssets;
use relq::optimizer::optimize_traced;
use relq::{compile_plan, execute, format_ra, parse};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let assets = BenchAssets::bundled()?;
    let naive = parse(
        r#"project[name, ecu](select[test_case == tc and test_result == "NOK" and ecu == "EBS"](times(results, rename[test_case -> tc](test_cases))))"#,
    )?;
    let traced = optimize_traced(&naive, &assets.catalog);
    println!("before: {}", format_ra(&naive));
    println!("after:  {}", format_ra(&traced.expr));
    println!("rewrites: {}, converged: {}", traced.rewrites, traced.converged);
    for (label, expr) in [("naive", &naive), ("optimized", &traced.expr)] {
        let plan = compile_plan(expr, &assets.catalog)?;
        let rows = execute(&plan, &assets.database)?.len();
        println!("{label}: {rows} result rows, join input {:?}", plan.join_rows_in());
    }
    Ok(())
}
