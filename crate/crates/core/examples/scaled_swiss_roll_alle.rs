//! A Swiss roll with one axis stretched tenfold. The Euclidean neighbor
//! graph short-circuits across the stretched axis; learning the metric lets
//! ALLE shrink it back.
//!
//! cargo run --release --example scaled_swiss_roll_alle -- [seed]

use alle::{data, evaluation, fit_alle, fit_lle, PipelineConfig};

fn main() -> alle::Result<()> {
    let seed = std::env::args().nth(1).map_or(0, |a| a.parse().expect("seed"));
    let roll = data::scaled_swiss_roll(1000, 0.0, &[1.0, 1.0, 10.0], seed)?;
    let config = PipelineConfig::default();

    let lle = fit_lle(&roll, &config)?;
    let alle = fit_alle(&roll, &config)?;
    for (name, fit) in [("LLE", &lle), ("ALLE", &alle)] {
        let y = fit.to_data(&roll)?;
        let (t, c) = evaluation::neighborhood_preservation(&roll, &y, 10)?;
        println!("{name:5} T(10) = {t:.4}  C(10) = {c:.4}");
    }

    println!("ALLE ran {} epochs, eta clamped: {}", alle.epochs_run, alle.eta_guard);
    println!("E trace: first {:?}, last {:?}", alle.error_trace.first(), alle.error_trace.last());
    println!("learned M =\n{}", alle.metric.metric());
    Ok(())
}
