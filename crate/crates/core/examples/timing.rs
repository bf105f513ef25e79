use multiview::inference::{permutation_test_networks, KChoice, TestConfig};
use multiview::coupling::OptimizerConfig;
use multiview::rng::derived_rng;
use multiview::simulate::*;
use ndarray::array;
use std::time::Instant;

fn main() {
    let theta = array![[0.5, 0.25], [0.25, 1.0]];
    let params = SbmParams::new(theta, uniform_pi(2)).unwrap();
    let cm = coupling_matrix(0.0, 2).unwrap();
    let spec = PopularitySpec::Uniform { lo: 0.14, hi: 0.84 };
    let mut rng = derived_rng(43, 0);
    let s = sample_network_pair(&cm, &params, &params, Some((&spec, &PopularitySpec::SharedWithView1)), 50, &mut rng).unwrap();

    // Full K = n = 50 permutation test, M = 200, bounded-effort optimizer.
    let cfg = TestConfig {
        parallel: false,
        optimizer: OptimizerConfig { outer_tol: 1e-5, outer_max_iter: 100, ..OptimizerConfig::default() },
        ..TestConfig::default()
    };
    let t = Instant::now();
    let res = permutation_test_networks(&s.view1, &s.view2, KChoice::Given(50), KChoice::Given(50), 200, &cfg, 8).unwrap();
    eprintln!("K=n=50 M=200 serial: {:?} stat={:.3} p={:.3}", t.elapsed(), res.statistic, res.p_value);

    // Same at the default optimizer config for comparison (fewer perms).
    let cfg_default = TestConfig { parallel: false, ..TestConfig::default() };
    let t = Instant::now();
    let res = permutation_test_networks(&s.view1, &s.view2, KChoice::Given(50), KChoice::Given(50), 20, &cfg_default, 8).unwrap();
    eprintln!("K=n=50 M=20 default cfg: {:?} stat={:.3} p={:.3}", t.elapsed(), res.statistic, res.p_value);

    // Check the standard n=400 pipeline is unaffected.
    let cm = coupling_matrix(0.0, 3).unwrap();
    let params = block_matrix(3.0, 0.03, 3, &uniform_pi(3)).unwrap();
    let mut rng = derived_rng(42, 0);
    let s = sample_network_pair(&cm, &params, &params, None, 400, &mut rng).unwrap();
    let t = Instant::now();
    let res = permutation_test_networks(&s.view1, &s.view2, KChoice::Given(3), KChoice::Given(3), 200, &cfg_default, 7).unwrap();
    eprintln!("n=400 M=200 default serial: {:?} stat={:.3} p={:.3}", t.elapsed(), res.statistic, res.p_value);
}
