mod common;

use common::vec_rel_err;
use hilbert_gp::reference::{
    full_gp_nlml, full_gp_nlml_with_grad, full_gp_predict, kernel_matrix, ssgp_kernel_eval, ssgp_predict, SpectralPoints,
    SsgpFit,
};
use hilbert_gp::toy::toy_replica;
use hilbert_gp::{kernel_eval, ComponentParams, Hyperparams, KernelSpec};
use nalgebra::{DMatrix, DVector};

fn central_difference<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|k| {
            let mut up = x.to_vec();
            let mut down = x.to_vec();
            up[k] += h;
            down[k] -= h;
            (f(&up) - f(&down)) / (2.0 * h)
        })
        .collect()
}

fn assert_grad_close(analytic: &[f64], numeric: &[f64], tol: f64) {
    for (a, b) in analytic.iter().zip(numeric) {
        assert!((a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0), "{analytic:?} vs {numeric:?}");
    }
}

#[test]
fn full_gp_gradient_matches_differences() {
    let toy = toy_replica(60, 5).unwrap();
    let sum = KernelSpec::sum(vec![KernelSpec::SquaredExponential, KernelSpec::matern(0.5).unwrap()]).unwrap();
    let cases = [
        (KernelSpec::SquaredExponential, Hyperparams::new(0.7, 0.12, 0.05)),
        (KernelSpec::matern(2.5).unwrap(), Hyperparams::new(1.4, 0.3, 0.02)),
        (
            sum,
            Hyperparams {
                components: vec![
                    ComponentParams { magnitude: 0.5, lengthscale: 0.1 },
                    ComponentParams { magnitude: 0.2, lengthscale: 0.8 },
                ],
                noise: 0.04,
            },
        ),
    ];
    for (spec, theta) in cases {
        let (_, g) = full_gp_nlml_with_grad(&toy.x, &toy.y, &spec, &theta).unwrap();
        let f = |x: &[f64]| full_gp_nlml(&toy.x, &toy.y, &spec, &Hyperparams::from_log_vec(x).unwrap()).unwrap();
        assert_grad_close(&g, &central_difference(f, &theta.to_log_vec(), 1e-5), 1e-6);
    }
}

#[test]
fn full_gp_interpolates_with_little_noise() {
    let x = DMatrix::from_fn(20, 1, |i, _| -1.0 + i as f64 / 9.5);
    let y = x.column(0).map(|v| (3.0 * v).sin());
    let theta = Hyperparams::new(1.0, 0.3, 1e-8);
    let p = full_gp_predict(&x, &y, &KernelSpec::SquaredExponential, &theta, &x).unwrap();
    assert!((&p.mean - &y).amax() < 1e-5);
    assert!(p.var_latent.amax() < 1e-6);
}

#[test]
fn ssgp_diagonal_is_the_signal_variance() {
    for d in 1..=3 {
        let sp = SpectralPoints::sample(&KernelSpec::matern(1.5).unwrap(), 33, d, 9).unwrap();
        let theta = Hyperparams::new(2.3, 0.7, 0.1);
        let x: Vec<f64> = (0..d).map(|i| 0.37 * i as f64 - 1.0).collect();
        assert_eq!(ssgp_kernel_eval(&sp, &theta, &x, &x).unwrap(), 2.3);
    }
}

#[test]
fn ssgp_kernel_approaches_its_target() {
    for spec in [KernelSpec::SquaredExponential, KernelSpec::matern(1.5).unwrap()] {
        let theta = Hyperparams::new(1.0, 0.4, 0.1);
        for r in [0.2, 0.4, 0.8] {
            let exact = kernel_eval(&spec, &theta, r).unwrap();
            let mean: f64 = (0..20)
                .map(|seed| {
                    let sp = SpectralPoints::sample(&spec, 4096, 1, seed).unwrap();
                    ssgp_kernel_eval(&sp, &theta, &[0.0], &[r]).unwrap()
                })
                .sum::<f64>()
                / 20.0;
            assert!((mean - exact).abs() < 0.01, "{} r={r}: {mean} vs {exact}", spec.name());
        }
    }
}

#[test]
fn ssgp_rejects_sum_kernels() {
    let sum = KernelSpec::sum(vec![KernelSpec::SquaredExponential, KernelSpec::SquaredExponential]).unwrap();
    assert!(SpectralPoints::sample(&sum, 8, 1, 0).is_err());
}

#[test]
fn ssgp_prediction_matches_a_dense_gp_with_the_ssgp_kernel() {
    let toy = toy_replica(80, 7).unwrap();
    let spec = KernelSpec::SquaredExponential;
    let theta = Hyperparams::new(0.9, 0.15, 0.05);
    let sp = SpectralPoints::sample(&spec, 12, 1, 3).unwrap();
    let fit = SsgpFit::new(sp.clone(), toy.x.clone(), toy.y.clone()).unwrap();
    let xs = DMatrix::from_fn(15, 1, |i, _| -1.0 + i as f64 / 7.0);
    let p = ssgp_predict(&fit, &spec, &theta, &xs).unwrap();

    let k = |a: &DMatrix<f64>, b: &DMatrix<f64>| {
        DMatrix::from_fn(a.nrows(), b.nrows(), |i, j| ssgp_kernel_eval(&sp, &theta, &[a[(i, 0)]], &[b[(j, 0)]]).unwrap())
    };
    let q = k(&toy.x, &toy.x) + DMatrix::identity(80, 80) * theta.noise;
    let chol = q.cholesky().unwrap();
    let ks = k(&toy.x, &xs);
    let mean = ks.tr_mul(&chol.solve(&toy.y));
    let v = chol.solve(&ks);
    let var = DVector::from_fn(15, |i, _| theta.magnitude() - ks.column(i).dot(&v.column(i)));
    assert!(vec_rel_err(&p.mean, &mean) < 1e-8);
    assert!(vec_rel_err(&p.var_latent, &var) < 1e-6);
}

#[test]
fn ssgp_gradient_matches_differences() {
    let toy = toy_replica(100, 8).unwrap();
    for spec in [KernelSpec::SquaredExponential, KernelSpec::matern(2.5).unwrap()] {
        let sp = SpectralPoints::sample(&spec, 10, 1, 4).unwrap();
        let fit = SsgpFit::new(sp, toy.x.clone(), toy.y.clone()).unwrap();
        let theta = Hyperparams::new(0.8, 0.2, 0.06);
        let (_, g) = fit.nlml_with_grad(&spec, &theta).unwrap();
        let f = |x: &[f64]| fit.nlml(&spec, &Hyperparams::from_log_vec(x).unwrap()).unwrap();
        assert_grad_close(&g, &central_difference(f, &theta.to_log_vec(), 1e-5), 1e-6);
    }
}

#[test]
fn kernel_matrix_is_symmetric_with_signal_variance_diagonal() {
    let toy = toy_replica(30, 9).unwrap();
    let theta = Hyperparams::new(1.7, 0.3, 0.1);
    let k = kernel_matrix(&KernelSpec::matern(1.5).unwrap(), &theta, &toy.x, &toy.x);
    assert_eq!(k, k.transpose());
    assert!(k.diagonal().iter().all(|v| *v == 1.7));
}
