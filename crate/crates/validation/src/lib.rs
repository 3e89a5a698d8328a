//! Acceptance suite for `fracext`. The checks live in `tests/acceptance.rs`
//! and run with `cargo test -p fracext-validation --test acceptance`.
