use cdma_bounds::finite_bounds::{conjectured_upper, SystemSize};
use cdma_bounds::noise::NoiseModel;
use cdma_bounds::numerics::QuadratureConfig;
use cdma_bounds::oracle::*;

#[test]
fn seed_swap_stays_within_error_bars() {
    let a: SignatureMatrix = "2 3\n+1 +1 -1\n+1 -1 +1\n".parse().unwrap();
    for model in [NoiseModel::gaussian(0.5).unwrap(), NoiseModel::uniform(1.2).unwrap()] {
        let x = mc_mutual_information(&a, &model, 20_000, 1).unwrap();
        let y = mc_mutual_information(&a, &model, 20_000, 2).unwrap();
        let pooled = (x.std_error.powi(2) + y.std_error.powi(2)).sqrt();
        assert_ne!(x.mean, y.mean);
        assert!((x.mean - y.mean).abs() <= 6.0 * pooled, "{model}: {x:?} vs {y:?}");
    }
}

#[test]
fn walsh_soft_output_beats_hard_decisions() {
    for order in [2usize, 4] {
        let a = SignatureMatrix::walsh(order).unwrap();
        for s2 in [0.25, 0.5, 1.0, 2.0] {
            let est = mc_mutual_information(&a, &NoiseModel::gaussian(s2).unwrap(), 20_000, 5).unwrap();
            let per_user = est.mean / order as f64;
            let se = est.std_error / order as f64;
            assert!(per_user + 3.0 * se >= bpsk_reference(s2).unwrap(), "order {order}, sigma2 {s2}: {per_user} ± {se}");
        }
    }
}

#[test]
fn single_user_upper_bound_is_the_mutual_information() {
    let one = SignatureMatrix::new(1, 1, vec![1]).unwrap();
    let model = NoiseModel::gaussian(1.0).unwrap();
    let est = mc_mutual_information(&one, &model, 100_000, 17).unwrap();
    let up = conjectured_upper(SystemSize::new(1, 1).unwrap(), &model, &QuadratureConfig::default()).unwrap();
    assert!((est.mean - up.bits_total).abs() <= 3.0 * est.std_error, "{est:?} vs {}", up.bits_total);
}

#[test]
fn sampled_capacity_is_bracketed_by_exhaustive() {
    let size = SystemSize::new(3, 4).unwrap();
    let full = exact_noiseless_capacity(size, ExactMode::Exhaustive).unwrap();
    let sampled = exact_noiseless_capacity(size, ExactMode::Sample { count: 200, seed: 3 }).unwrap();
    assert!(sampled.max <= full.max);
    assert!((sampled.mean - full.mean).abs() < 0.2);
}

#[test]
fn caps_are_resource_errors() {
    let wide = SignatureMatrix::new(1, 17, vec![1; 17]).unwrap();
    assert!(matches!(
        mc_mutual_information(&wide, &NoiseModel::gaussian(1.0).unwrap(), 10, 0),
        Err(cdma_bounds::Error::Resource(_))
    ));
    assert!(matches!(
        exact_noiseless_capacity(SystemSize::new(5, 5).unwrap(), ExactMode::Exhaustive),
        Err(cdma_bounds::Error::Resource(_))
    ));
}
