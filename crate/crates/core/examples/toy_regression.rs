// Fits the reduced-rank model to synthetic data, checks the gradient, and
// compares predictions with the exact GP at the fitted hyperparameters.
//
//     cargo run --release --example toy_regression

use hilbert_gp::reference::full_gp_predict;
use hilbert_gp::toy::{toy_replica, toy_theta};
use hilbert_gp::train::{grad_check, optimize, OptimizerOptions};
use hilbert_gp::{build_basis, domain_from_data, precompute, predict, BasisMode, Hyperparams, KernelSpec};
use nalgebra::DMatrix;

fn main() {
    let data = toy_replica(256, 1).unwrap();
    let spec = KernelSpec::SquaredExponential;

    let domain = domain_from_data(&data.x, 0.1).unwrap();
    let basis = build_basis(domain, 32, BasisMode::Sorted).unwrap();
    let fit = precompute(&data.x, &data.y, &basis).unwrap();

    let start = Hyperparams::new(0.5, 0.3, 0.1);
    let check = grad_check(&fit, &spec, &start, 1e-5).unwrap();
    println!("gradient check at start: max relative error {:.2e}", check.max_rel_err);

    let (theta, trace) = optimize(&fit, &spec, &start, &OptimizerOptions::default()).unwrap();
    println!(
        "fitted: sigma2 = {:.3}, ell = {:.4}, sigma_n = {:.4} after {} iterations ({:?})",
        theta.magnitude(),
        theta.lengthscale(),
        theta.noise.sqrt(),
        trace.iterations(),
        trace.status
    );
    let truth = toy_theta();
    println!("generating: sigma2 = {}, ell = {}, sigma_n = {}", truth.magnitude(), truth.lengthscale(), truth.noise.sqrt());

    let grid = DMatrix::from_fn(9, 1, |i, _| -0.8 + 0.2 * i as f64);
    let approx = predict(&fit, &spec, &theta, &grid).unwrap();
    let exact = full_gp_predict(&data.x, &data.y, &spec, &theta, &grid).unwrap();
    println!("{:>6} {:>10} {:>10} {:>10} {:>10}", "x", "mean", "full", "sd", "full sd");
    for i in 0..grid.nrows() {
        println!(
            "{:>6.2} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
            grid[(i, 0)],
            approx.mean[i],
            exact.mean[i],
            approx.var_latent[i].sqrt(),
            exact.var_latent[i].sqrt()
        );
    }
}
