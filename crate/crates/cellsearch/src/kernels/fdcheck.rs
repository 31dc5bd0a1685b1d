//! Central finite-difference gradient checking for the op kernels. Kept in
//! the library (rather than test code) so integration suites can drive the
//! same harness; nothing here is used by the search path itself.

use super::{OpState, Tensor4};

/// Central-difference step, double precision.
pub const FD_STEP: f64 = 1e-4;

/// Relative error between an analytic and a numeric derivative. Entries
/// where both are tiny compare in absolute terms (the `1e-3` floor), which
/// keeps finite-difference roundoff from dominating near-zero gradients.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

fn loss(op: &mut OpState, x: &Tensor4, target: &Tensor4) -> f64 {
    let y = op.forward(x).expect("forward in fd harness");
    0.5 * y
        .data()
        .iter()
        .zip(target.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
}

/// Checks every parameter block and the input of one op against central
/// finite differences of the squared-error loss `0.5 * ||forward(x) - t||^2`.
/// Returns the maximum relative error across all checked entries.
pub fn max_gradient_error(op: &mut OpState, x: &Tensor4, target: &Tensor4) -> f64 {
    let y = op.forward(x).expect("forward in fd harness");
    assert_eq!(
        y.dims(),
        target.dims(),
        "target must match the op output shape"
    );
    let mut grad_out = y.clone();
    for (g, t) in grad_out.data_mut().iter_mut().zip(target.data()) {
        *g -= t;
    }
    let grads = op.backward(x, &grad_out).expect("backward in fd harness");

    let analytic_blocks: Vec<Vec<f64>> = [
        grads.grad_weights.clone(),
        grads.grad_gamma.clone(),
        grads.grad_beta.clone(),
    ]
    .into_iter()
    .filter(|b| !b.is_empty())
    .collect();

    let mut max_err: f64 = 0.0;

    for (block_idx, analytic) in analytic_blocks.iter().enumerate() {
        for i in 0..analytic.len() {
            let numeric = {
                let perturb = |op: &mut OpState, delta: f64| {
                    let mut blocks = op.parameter_blocks_mut();
                    blocks[block_idx][i] += delta;
                };
                perturb(op, FD_STEP);
                let up = loss(op, x, target);
                perturb(op, -2.0 * FD_STEP);
                let down = loss(op, x, target);
                perturb(op, FD_STEP);
                (up - down) / (2.0 * FD_STEP)
            };
            max_err = max_err.max(relative_error(analytic[i], numeric));
        }
    }

    // input gradient
    let mut xp = x.clone();
    for i in 0..xp.data().len() {
        xp.data_mut()[i] += FD_STEP;
        let up = loss(op, &xp, target);
        xp.data_mut()[i] -= 2.0 * FD_STEP;
        let down = loss(op, &xp, target);
        xp.data_mut()[i] += FD_STEP;
        let numeric = (up - down) / (2.0 * FD_STEP);
        max_err = max_err.max(relative_error(grads.grad_input.data()[i], numeric));
    }

    max_err
}
