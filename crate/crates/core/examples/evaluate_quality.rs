//! Scores an embedding against its source with the full quality report,
//! printed as JSON. Without arguments, scores LLE on a fresh Swiss roll.
//!
//! cargo run --release --example evaluate_quality -- [original.csv embedding.csv [k]]

use alle::evaluation::{self, EvaluationOptions};
use alle::{data, fit_lle, PipelineConfig};

fn main() -> alle::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (original, embedded, k) = if args.len() >= 2 {
        let k = args.get(2).map_or(10, |a| a.parse().expect("k"));
        (data::load_csv_table(&args[0])?, data::load_csv_table(&args[1])?, k)
    } else {
        let roll = data::generate_swiss_roll(800, 0.0, 4)?;
        let y = fit_lle(&roll, &PipelineConfig::default())?.to_data(&roll)?;
        (roll, y, 10)
    };

    let report = evaluation::evaluate(&original, &embedded, original.labels(), &EvaluationOptions::with_k(k))?;
    println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
    Ok(())
}
