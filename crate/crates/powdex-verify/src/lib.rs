//! Holds the slow end-to-end acceptance harness in `tests/acceptance.rs`.
