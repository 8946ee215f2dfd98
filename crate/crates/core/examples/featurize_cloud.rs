//! Per-point geometric descriptors of a plant, summarized per class.
//!
//! Stems should come out linear, leaves planar and soil flat but noisy.
//!
//! ```text
//! cargo run --release --example featurize_cloud -- [cloud.txt] [features.csv]
//! ```

use edgegat::cloud::{read_cloud, synth_maize, CloudFormat, ClassLabel, DEFAULT_NOISE};
use edgegat::geomfeat::{featurize, FeatureSet, DEFAULT_K_FEATURES};

fn main() -> edgegat::Result<()> {
    let mut args = std::env::args().skip(1);
    let plant = match args.next() {
        Some(p) => read_cloud(&p, CloudFormat::from_path(p.as_ref()))?,
        None => synth_maize(2048, 3, DEFAULT_NOISE)?,
    };
    let features = featurize(&plant.cloud.normalized(), DEFAULT_K_FEATURES)?;
    let labels = plant.require_labels()?;

    println!("{:>6} {:>7} {:>10} {:>10} {:>10} {:>10}", "class", "points", "curvature", "linearity", "planarity", "scattering");
    for class in [ClassLabel::Soil, ClassLabel::Stem, ClassLabel::Leaf] {
        let rows: Vec<&[f64]> = (0..features.rows())
            .filter(|&i| labels[i] == class)
            .map(|i| features.row(i))
            .collect();
        let mean = |j: usize| rows.iter().map(|r| r[j]).sum::<f64>() / rows.len().max(1) as f64;
        println!(
            "{:>6} {:>7} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
            class.name(),
            rows.len(),
            mean(6),
            mean(7),
            mean(8),
            mean(9)
        );
    }

    if let Some(out) = args.next() {
        features.write_csv(&out, FeatureSet::Full, Some(labels))?;
        println!("wrote {out}");
    }
    Ok(())
}
