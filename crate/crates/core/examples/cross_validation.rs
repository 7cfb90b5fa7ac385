// Ten-fold cross-validation of the reduced-rank model against the exact GP
// and a sparse-spectrum GP on the same folds.
//
//     cargo run --release --example cross_validation

use hilbert_gp::eval::{kfold_cv, write_sweep_csv, FitConfig, MethodConfig};
use hilbert_gp::toy::toy_replica;
use hilbert_gp::{BasisMode, Hyperparams, KernelSpec};

fn main() {
    let data = toy_replica(256, 1).unwrap();
    let methods = [
        MethodConfig::ReducedRank { m: 32, mode: BasisMode::Sorted, extension: 0.1 },
        MethodConfig::Full,
        MethodConfig::Ssgp { h: 16 },
    ];
    let mut reports = Vec::new();
    for method in methods {
        let mut cfg = FitConfig::new(method, KernelSpec::SquaredExponential);
        cfg.theta0 = Some(Hyperparams::new(0.5, 0.3, 0.1));
        let r = kfold_cv(&data.x, &data.y, &cfg, 10, 1).unwrap();
        println!(
            "{:<13} SMSE {:.4} ± {:.4}   MSLL {:.4} ± {:.4}   train {:.3}s",
            r.method, r.smse, r.smse_std, r.msll, r.msll_std, r.wall_clock_seconds.train
        );
        reports.push(r);
    }
    let mut csv = Vec::new();
    write_sweep_csv(&reports, &mut csv).unwrap();
    println!("\nper-fold rows: {}", String::from_utf8(csv).unwrap().lines().count() - 1);
}
