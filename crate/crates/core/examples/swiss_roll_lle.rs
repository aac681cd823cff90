//! Plain LLE on a Swiss roll, scored by trustworthiness and continuity.
//!
//! cargo run --release --example swiss_roll_lle -- [n] [noise] [seed]

use alle::{data, evaluation, fit_lle, PipelineConfig};

fn main() -> alle::Result<()> {
    let mut args = std::env::args().skip(1);
    let n = args.next().map_or(1000, |a| a.parse().expect("n"));
    let noise = args.next().map_or(0.0, |a| a.parse().expect("noise"));
    let seed = args.next().map_or(0, |a| a.parse().expect("seed"));

    let roll = data::generate_swiss_roll(n, noise, seed)?;
    let fit = fit_lle(&roll, &PipelineConfig::default())?;
    let y = fit.to_data(&roll)?;
    let (t, c) = evaluation::neighborhood_preservation(&roll, &y, 10)?;

    println!("n={n} noise={noise} seed={seed}");
    println!("eigenvalues {:?}", fit.embedding.eigenvalues);
    println!("T(10) = {t:.4}  C(10) = {c:.4}");
    Ok(())
}
