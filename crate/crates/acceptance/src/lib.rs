//! Acceptance checks live in `tests/acceptance.rs`; run them with
//! `cargo test -p teleassist-acceptance --test acceptance`.
