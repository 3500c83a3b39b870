//! Regenerates the shipped asset files from the built-in scenarios.

use delayguard::{io, plants, scenarios};

fn main() -> std::io::Result<()> {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("assets");
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("table1.json"), io::taskset_to_string(&scenarios::table1()))?;
    std::fs::write(dir.join("table2.json"), io::taskset_to_string(&scenarios::table2()))?;
    let mut rm = io::taskset_to_file(&scenarios::table2_rm());
    rm.tasks.iter_mut().for_each(|t| t.priority = None);
    std::fs::write(dir.join("table2_rm.json"), serde_json::to_string_pretty(&rm).unwrap())?;
    std::fs::write(
        dir.join("table2_plants.json"),
        serde_json::to_string_pretty(&plants::table2_plants()).unwrap(),
    )?;
    std::fs::write(
        dir.join("table1_plant.json"),
        serde_json::to_string_pretty(&plants::ttc_table1()).unwrap(),
    )?;
    std::fs::write(
        dir.join("table2_rm_tau3_delays.json"),
        "{\n  \"victim\": 3,\n  \"delays\": [8, 0, 5, 0, 5, 8, 5, 0, 5, 0]\n}\n",
    )?;
    Ok(())
}
