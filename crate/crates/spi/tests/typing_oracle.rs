mod common;

use common::compare;

#[test]
fn checker_agrees_with_declarative_rules_on_small_programs() {
    let max = std::env::var("ORACLE_MAX")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(4);
    let (programs, judgements, accepted, bad) = compare(max);
    println!("{programs} programs, {judgements} judgements, {accepted} accepted");
    assert!(
        programs > 100 && accepted > 1000 && judgements - accepted > 1000,
        "{programs} {judgements} {accepted}"
    );
    assert!(bad.is_empty(), "{bad:#?}");
}
