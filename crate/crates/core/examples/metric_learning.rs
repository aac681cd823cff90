//! The metric step on its own: hold the reconstruction weights fixed and
//! run gradient descent on the factor `L`, watching `E(M)` fall and `M`
//! stay positive semidefinite.
//!
//! cargo run --release --example metric_learning

use alle::metric::sgd_update_l;
use alle::neighbors::knn;
use alle::pipeline::descent_bound;
use alle::reconstruction::{compute_residuals, compute_weights, DEFAULT_GRAM_REG};
use alle::{data, MetricMode, MetricState};

fn main() -> alle::Result<()> {
    let roll = data::scaled_swiss_roll(500, 0.05, &[1.0, 1.0, 10.0], 1)?;
    let mut state = MetricState::identity(3)?;
    let neighbors = knn(&roll, 10, &state)?;
    let weights = compute_weights(&roll, &neighbors, &state, DEFAULT_GRAM_REG)?;
    let residuals = compute_residuals(&roll, &weights)?;

    let bound = descent_bound(&residuals, MetricMode::FactorL)
        .value()
        .expect("residuals are not all zero");
    let eta = 0.9 * bound;
    println!("descent bound {bound:.3e}, using eta = {eta:.3e}");

    for step in 0..=20 {
        if step % 5 == 0 {
            println!(
                "step {step:2}: E = {:.6}  min eig(M) = {:.2e}",
                residuals.error_under(&state),
                state.min_eigenvalue()
            );
        }
        state = sgd_update_l(&state, &residuals, eta, 0.0)?;
    }
    println!("M =\n{}", state.metric());
    Ok(())
}
