// Compares an exact covariance function with its truncated eigen-expansion
// on an interval, for a few basis sizes.
//
//     cargo run --release --example approx_kernel

use hilbert_gp::{build_basis, kernel_eval, BasisMode, Domain, Hyperparams, KernelSpec};

fn main() {
    let spec = KernelSpec::matern(1.5).unwrap();
    let theta = Hyperparams::new(1.0, 0.2, 0.01);
    let domain = Domain::interval(0.0, 1.0).unwrap();

    println!("{:>5} {:>12} {:>12}", "m", "k~(0,0)", "max |k - k~|");
    for m in [8, 16, 32, 64, 128] {
        let basis = build_basis(domain.clone(), m, BasisMode::Sorted).unwrap();
        let diag = basis.approx_kernel_eval(&spec, &theta, &[0.0], &[0.0]).unwrap();
        // error against x' = 0 along r in [0, 0.8]
        let worst = (0..=80)
            .map(|i| {
                let r = i as f64 * 0.01;
                let exact = kernel_eval(&spec, &theta, r).unwrap();
                let approx = basis.approx_kernel_eval(&spec, &theta, &[r], &[0.0]).unwrap();
                (exact - approx).abs()
            })
            .fold(0.0, f64::max);
        println!("{m:>5} {diag:>12.6} {worst:>12.3e}");
    }
}
