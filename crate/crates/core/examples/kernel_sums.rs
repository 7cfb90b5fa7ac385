// A sum of a long and a short length-scale component, fitted jointly.
// Both components share one basis; only the spectral weights change.
//
//     cargo run --release --example kernel_sums

use hilbert_gp::toy::toy_replica_with;
use hilbert_gp::train::{optimize, OptimizerOptions};
use hilbert_gp::{build_basis, domain_from_data, nlml, precompute, BasisMode, ComponentParams, Hyperparams, KernelSpec};

fn main() {
    let spec = KernelSpec::sum(vec![KernelSpec::SquaredExponential, KernelSpec::matern(1.5).unwrap()]).unwrap();
    let truth = Hyperparams {
        components: vec![
            ComponentParams { magnitude: 1.0, lengthscale: 0.6 },
            ComponentParams { magnitude: 0.2, lengthscale: 0.08 },
        ],
        noise: 0.01,
    };
    let data = toy_replica_with(400, 3, &spec, &truth).unwrap();

    let basis = build_basis(domain_from_data(&data.x, 0.2).unwrap(), 96, BasisMode::Sorted).unwrap();
    let fit = precompute(&data.x, &data.y, &basis).unwrap();
    let start = Hyperparams {
        components: vec![
            ComponentParams { magnitude: 0.5, lengthscale: 1.0 },
            ComponentParams { magnitude: 0.5, lengthscale: 0.2 },
        ],
        noise: 0.05,
    };
    let opts = OptimizerOptions { restarts: 4, seed: 2, ..Default::default() };
    let (theta, trace) = optimize(&fit, &spec, &start, &opts).unwrap();

    println!("{:<12} {:>10} {:>10}", "component", "sigma2", "ell");
    for (i, (c, t)) in theta.components.iter().zip(&truth.components).enumerate() {
        println!("{:<12} {:>10.4} {:>10.4}   (true {}, {})", i, c.magnitude, c.lengthscale, t.magnitude, t.lengthscale);
    }
    println!("noise {:.5} (true {})", theta.noise, truth.noise);
    println!(
        "nlml {:.3} at the fit, {:.3} at the truth; best of {} restarts was run {}",
        nlml(&fit, &spec, &theta).unwrap(),
        nlml(&fit, &spec, &truth).unwrap(),
        opts.restarts,
        trace.restart
    );
}
