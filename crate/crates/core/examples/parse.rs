//! Parse relational algebra, including greek operators and quoted names,
//! and print the canonical ASCII form.
//!
//! cargo run -p relq --example parse

use relq::{format_ra, parse};

fn main() {
    let inputs = [
        r#"π[name](σ[test_result == "NOK"](results))"#,
        r#"project[`Test Result`](results)"#,
        "groupby[ecu; count(*) as n](test_cases)",
        "project[name](results",
    ];
    for text in inputs {
        match parse(text) {
            Ok(expr) => println!("{text}\n  -> {}", format_ra(&expr)),
            Err(e) => println!("{text}\n  !! {e}"),
        }
    }
}
