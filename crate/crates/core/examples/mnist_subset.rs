//! LLE against ALLE on a stratified MNIST subset read from the IDX files.
//!
//! cargo run --release --example mnist_subset -- <images-idx3> <labels-idx1> [n] [classes]
//!
//! `classes` is a comma-separated digit list, e.g. `0,1,2`; all ten by default.

use std::collections::BTreeSet;
use std::path::Path;

use alle::evaluation::{self, EvaluationOptions};
use alle::{data, fit, Algorithm, PipelineConfig};

fn main() -> alle::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.len() < 2 {
        eprintln!("usage: mnist_subset <images-idx3> <labels-idx1> [n] [classes]");
        std::process::exit(2);
    }
    let n = args.get(2).map_or(1000, |a| a.parse().expect("n"));
    let classes: Option<BTreeSet<usize>> = args
        .get(3)
        .map(|a| a.split(',').map(|c| c.trim().parse().expect("class")).collect());

    let all = data::load_idx(&args[0], Some(Path::new(&args[1])))?;
    let subset = data::stratified_subsample(&all, n, classes.as_ref(), 0)?;
    let labels = subset.labels().expect("labels were loaded").to_vec();
    println!("{} images of dimension {}", subset.rows(), subset.dim());

    let config = PipelineConfig::default();
    let options = EvaluationOptions::with_k(10);
    for algorithm in [Algorithm::Lle, Algorithm::Alle] {
        let y = fit(&subset, algorithm, &config)?.to_data(&subset)?;
        let q = evaluation::evaluate(&subset, &y, Some(&labels), &options)?;
        println!(
            "{algorithm:?}: T={:.4} C={:.4} knn={:.4}",
            q.trustworthiness,
            q.continuity,
            q.knn_accuracy.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
