//! Writes the default scenario files to `configs/`.

use std::path::Path;

use deeplcc::config::ScenarioConfig;

fn main() -> deeplcc::Result<()> {
    let dir = Path::new("configs");
    std::fs::create_dir_all(dir).expect("create configs/");
    ScenarioConfig::straight(vec![2])?.save(&dir.join("straight.toml"))?;
    ScenarioConfig::ring()?.save(&dir.join("ring.toml"))?;
    Ok(())
}
