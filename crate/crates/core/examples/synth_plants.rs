//! Generate labeled synthetic maize plants and write them as xyz-label files.
//!
//! ```text
//! cargo run --release --example synth_plants -- [out_dir] [count]
//! ```

use std::path::PathBuf;

use edgegat::cloud::{synth_maize, write_cloud, CloudFormat, DEFAULT_NOISE};

fn main() -> edgegat::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "synthetic".into()));
    let count: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(5);
    std::fs::create_dir_all(&dir).map_err(|e| edgegat::Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    for seed in 0..count {
        let plant = synth_maize(2048, seed, DEFAULT_NOISE)?;
        let [soil, stem, leaf] = plant.class_fractions().expect("synthetic clouds are labeled");
        let path = dir.join(format!("plant_{seed:03}.txt"));
        write_cloud(&plant, &path, CloudFormat::XyzLabel)?;
        println!(
            "{}: diameter {:.3}, soil {soil:.2} stem {stem:.2} leaf {leaf:.2}",
            path.display(),
            plant.cloud.diameter()
        );
    }
    Ok(())
}
