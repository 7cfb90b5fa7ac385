// Draws from a Matérn prior on the unit sphere using spherical harmonics
// and prints a coarse latitude/longitude map of one draw.
//
//     cargo run --release --example sphere_prior

use hilbert_gp::{build_basis, BasisMode, Domain, Hyperparams, KernelSpec};
use nalgebra::DMatrix;

fn main() {
    let spec = KernelSpec::matern(2.5).unwrap();
    let theta = Hyperparams::new(1.0, 0.4, 1e-4);
    // degrees 0..=11
    let basis = build_basis(Domain::unit_sphere(), 144, BasisMode::Sorted).unwrap();

    let (rows, cols) = (9, 18);
    let x = DMatrix::from_fn(rows * cols, 2, |k, j| {
        let (r, c) = (k / cols, k % cols);
        if j == 0 {
            (80.0 - 20.0 * r as f64).to_radians()
        } else {
            (-180.0 + 20.0 * c as f64).to_radians()
        }
    });
    let f = basis.sample_prior(&spec, &theta, &x, 11).unwrap();

    let shades = [' ', '.', ':', '-', '=', '+', '*', '#', '%', '@'];
    let (lo, hi) = f.iter().fold((f64::MAX, f64::MIN), |(a, b), v| (a.min(*v), b.max(*v)));
    for r in 0..rows {
        let line: String = (0..cols)
            .map(|c| {
                let t = (f[r * cols + c] - lo) / (hi - lo);
                shades[((t * 9.0).round() as usize).min(9)]
            })
            .collect();
        println!("{:>4}° |{line}|", 80 - 20 * r as i32);
    }
    let var = basis.approx_kernel_eval(&spec, &theta, &[0.3, 1.0], &[0.3, 1.0]).unwrap();
    println!("prior variance at a point: {var:.4}; draw range [{lo:.3}, {hi:.3}]");
}
