//! The JSON files under `scenarios/` are the canonical builders, serialized.
//! Set `IMMUNENET_BLESS=1` to rewrite them.

use immunenet::harness::canonical;
use immunenet::harness::Scenario;
use std::path::PathBuf;

fn dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

#[test]
fn shipped_scenarios_match_builders() {
    let bless = std::env::var_os("IMMUNENET_BLESS").is_some();
    for (name, sc) in canonical::all() {
        let path = dir().join(name);
        if bless {
            std::fs::write(&path, sc.to_json() + "\n").unwrap();
        }
        let loaded = Scenario::load(&path).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(loaded, sc, "{name} is out of date");
    }
}
