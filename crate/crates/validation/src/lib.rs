//! Holds the `acceptance` test target. It lives in its own package so that
//! `cargo test --workspace` runs every unit suite before the long scenario runs.
