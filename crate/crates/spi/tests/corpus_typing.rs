use std::path::PathBuf;

use spi::parser::parse_module;
use spi::typecheck::typecheck;

fn corpus(file: &str) -> String {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../corpus")
        .join(file);
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn positive_corpus_typechecks() {
    for f in [
        "server.spi",
        "cell.spi",
        "dataflow.spi",
        "ref.spi",
        "clock.spi",
        "clock_reset.spi",
        "instrumented.spi",
    ] {
        let m = parse_module(&corpus(f)).unwrap_or_else(|e| panic!("{f}: {e}"));
        let (_, r) = typecheck(&m);
        assert!(
            r.ok(),
            "{f}: {:#?}",
            r.diagnostics
                .iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
        );
    }
}

#[test]
fn negative_corpus_rejected_with_usage_errors() {
    for f in [
        "negative/double_emit.spi",
        "negative/deref_kind5.spi",
        "negative/list_dup.spi",
        "two_emitters.spi",
    ] {
        let m = parse_module(&corpus(f)).unwrap_or_else(|e| panic!("{f}: {e}"));
        let (_, r) = typecheck(&m);
        assert!(!r.ok(), "{f} accepted");
        for d in &r.diagnostics {
            assert!(d.error.is_usage_class(), "{f}: {d}");
        }
    }
}
