use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regvar::oracle::{relative_error, InstanceShape, OracleInstance};

const FLOOR: f64 = 1e-6;

#[test]
fn cphd_matches_exact_update_on_iid_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut compared, mut worst) = (0, 0.0f64);
    while compared < 60 {
        let inst = OracleInstance::random_iid(InstanceShape::default(), &mut rng);
        let Ok(cmp) = inst.compare() else { continue };
        for r in &cmp.regions {
            worst = worst
                .max(relative_error(r.cphd.0, r.oracle.0, FLOOR))
                .max(relative_error(r.cphd.1, r.oracle.1, FLOOR));
        }
        for (a, b) in cmp.cphd_cardinality.iter().zip(&cmp.oracle_cardinality) {
            assert!((a - b).abs() < 1e-9);
        }
        compared += 1;
    }
    println!("worst CPHD relative error {worst:e}");
    assert!(worst < 1e-9);
}

#[test]
fn phd_and_cphd_match_exact_update_on_poisson_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let shape = InstanceShape {
        max_points: 3,
        max_measurements: 3,
        max_targets: 80,
    };
    let (mut phd_worst, mut reduction_worst) = (0.0f64, 0.0f64);
    for _ in 0..25 {
        let inst = OracleInstance::random_poisson(shape, 80, &mut rng);
        let cmp = inst.compare().expect("comparison");
        for r in &cmp.regions {
            phd_worst = phd_worst
                .max(relative_error(r.phd.0, r.oracle.0, FLOOR))
                .max(relative_error(r.phd.1, r.oracle.1, FLOOR));
            reduction_worst = reduction_worst
                .max(relative_error(r.cphd.0, r.phd.0, FLOOR))
                .max(relative_error(r.cphd.1, r.phd.1, FLOOR));
        }
    }
    println!("worst PHD relative error {phd_worst:e}, CPHD vs PHD {reduction_worst:e}");
    assert!(phd_worst < 1e-6);
    assert!(reduction_worst < 1e-6);
}
