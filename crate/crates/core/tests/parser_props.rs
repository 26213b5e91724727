use relq::{format_ra, parse};
use relq_testkit::gen::rng;
use relq_testkit::{checks, random_ast, random_case};

#[test]
fn round_trips_generated_trees() {
    check(checks::parser_round_trips(500));
}

#[test]
fn round_trips_typed_expressions() {
    for seed in 0..500 {
        let e = random_case(seed).expr;
        assert_eq!(parse(&format_ra(&e)).unwrap(), e, "seed {seed}");
    }
}

#[test]
fn round_trips_pretty_printed_form() {
    let mut rng = rng(11);
    for _ in 0..200 {
        let ast = random_ast(&mut rng, 4);
        assert_eq!(parse(&relq::ast::pretty(&ast)).unwrap(), ast);
    }
}

fn check(result: checks::CheckResult) {
    if let Err(e) = result {
        panic!("{e}");
    }
}

#[test]
fn greek_and_ascii_spellings_are_equivalent() {
    check(checks::greek_matches_ascii(500));
}

#[test]
fn fuzzing_never_panics_and_errors_point_inside_the_input() {
    check(checks::parser_survives_fuzzing(10_000));
}
