//! Repair misspelled identifiers against the catalog.
//!
//! cargo run -p relq --example resolve

use relq::eval::BenchAssets;
use relq::{bind_and_repair, format_ra, parse};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let assets = BenchAssets::bundled()?;
    let inputs = [
        r#"project[truck, TESTRESULT](select[`sw-version` == "R2"](results))"#,
        r#"project[tset_result](results)"#,
        r#"select[colour == "red"](trucks)"#,
    ];
    for text in inputs {
        let expr = parse(text)?;
        match bind_and_repair(&expr, &assets.catalog) {
            Ok((bound, resolutions)) => {
                println!("{text}\n  -> {}", format_ra(&bound));
                for r in resolutions {
                    println!("     {r}");
                }
            }
            Err(e) => println!("{text}\n  !! {e}"),
        }
    }
    Ok(())
}
