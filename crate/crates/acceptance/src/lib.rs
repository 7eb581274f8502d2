//! Acceptance criteria for `lrp`, run with `cargo test -p lrp-acceptance`.
//! The checks live in `tests/acceptance.rs`.
