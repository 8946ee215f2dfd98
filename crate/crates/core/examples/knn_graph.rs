//! Build the symmetric k-nearest-neighbour graph of a plant and check the
//! k-d tree against brute force.
//!
//! ```text
//! cargo run --release --example knn_graph -- [k] [edges.txt]
//! ```

use std::time::Instant;

use edgegat::cloud::{synth_maize, DEFAULT_NOISE};
use edgegat::graph::{brute_force_nearest, knn_graph, knn_lists};

fn main() -> edgegat::Result<()> {
    let mut args = std::env::args().skip(1);
    let k: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(16);
    let plant = synth_maize(4096, 1, DEFAULT_NOISE)?;
    let points = plant.cloud.normalized();

    let t = Instant::now();
    let lists = knn_lists(points.points(), k)?;
    let tree_time = t.elapsed();
    let t = Instant::now();
    let mismatched = (0..points.len())
        .filter(|&i| {
            let brute: Vec<usize> = brute_force_nearest(points.points(), &points.points()[i], k, Some(i)).iter().map(|n| n.index).collect();
            brute != lists[i]
        })
        .count();
    println!(
        "{} points, k={k}: k-d tree {:.1} ms, brute force {:.1} ms, {mismatched} mismatched lists",
        points.len(),
        tree_time.as_secs_f64() * 1e3,
        t.elapsed().as_secs_f64() * 1e3
    );

    let graph = knn_graph(&points, k)?;
    let degree = graph.in_degree();
    println!(
        "graph: {} directed edges, in-degree {}..={}, mean {:.2}",
        graph.num_edges(),
        degree.iter().min().unwrap(),
        degree.iter().max().unwrap(),
        graph.num_edges() as f64 / points.len() as f64
    );
    if let Some(path) = args.next() {
        graph.write_edge_list(&path)?;
        println!("wrote {path}");
    }
    Ok(())
}
