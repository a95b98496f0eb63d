//! Shared fixtures for the criterion benchmarks.

use std::path::PathBuf;

use loadshed_core::network::load_case;
use loadshed_core::NetworkCase;

pub fn fixture(name: &str) -> NetworkCase {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "cases", name].iter().collect();
    load_case(path).expect("fixture case loads")
}
