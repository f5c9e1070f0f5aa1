//! Holds the acceptance suite in `tests/acceptance.rs`:
//! `cargo test -p filtergen-verify --test acceptance`.
