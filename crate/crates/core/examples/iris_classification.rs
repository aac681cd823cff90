//! Embeds the bundled iris table in two dimensions and reports how well the
//! species separate: silhouette, 5-NN and logistic-regression accuracy on a
//! stratified split.
//!
//! cargo run --release --example iris_classification

use alle::evaluation::{self, EvaluationOptions};
use alle::{data, fit, Algorithm, PipelineConfig};

fn main() -> alle::Result<()> {
    let iris = data::builtin_iris();
    let labels = iris.labels().expect("iris is labeled").to_vec();
    let config = PipelineConfig::default();
    let options = EvaluationOptions::with_k(10);

    for algorithm in [Algorithm::Lle, Algorithm::Alle] {
        let result = fit(&iris, algorithm, &config)?;
        let y = result.to_data(&iris)?;
        let q = evaluation::evaluate(&iris, &y, Some(&labels), &options)?;
        println!(
            "{algorithm:?}: T={:.4} C={:.4} silhouette={:.4} knn={:.4} linear={:.4}",
            q.trustworthiness,
            q.continuity,
            q.silhouette.unwrap_or(f64::NAN),
            q.knn_accuracy.unwrap_or(f64::NAN),
            q.linear_accuracy.unwrap_or(f64::NAN),
        );
    }
    Ok(())
}
