// Truncation tails, observed kernel errors and average-case learning curves
// as the number of basis functions grows.
//
//     cargo run --release --example convergence_diagnostics

use hilbert_gp::eval::{kernel_sup_error, learning_curve_ov, theorem1_tail, SupErrorGrid};
use hilbert_gp::toy::toy_theta;
use hilbert_gp::{build_basis, BasisMode, Domain, KernelSpec};

fn main() {
    let theta = toy_theta();
    for spec in [KernelSpec::SquaredExponential, KernelSpec::matern(0.5).unwrap()] {
        println!("{}", spec.name());
        println!("{:>5} {:>12} {:>12} {:>12}", "m", "tail", "sup error", "eps(n=100)");
        for half_width in [1.0, 2.0] {
            let domain = Domain::interval(0.0, half_width).unwrap();
            let grid = SupErrorGrid::fraction_of(&domain, 0.8 / half_width, 81).unwrap();
            for m in [8, 16, 32, 64] {
                let basis = build_basis(domain.clone(), m, BasisMode::Sorted).unwrap();
                let tail = theorem1_tail(&spec, &theta, 1, m, half_width).unwrap();
                let sup = kernel_sup_error(&basis, &spec, &theta, &grid).unwrap();
                let eps = learning_curve_ov(&basis, &spec, &theta, 100.0).unwrap();
                println!("{m:>5} {tail:>12.3e} {:>12.3e} {eps:>12.4}   (L = {half_width})", sup.error);
            }
        }
    }
}
