use bptd_core::gibbs::{class_probabilities, Allocator};
use bptd_core::linalg::{CoreTensor, Matrix};
use bptd_core::model::{sample_prior, ModelDims};
use bptd_core::{
    AllocationMode, BptdChain, CountTensor, EventToken, Hyperparams, RngStream, TokenAssignment, TuckerParams,
};

fn small_state(seed: u64) -> TuckerParams {
    let dims = ModelDims::new(4, 3, 3, 2, 2, 2).unwrap();
    let mut rng = RngStream::new(seed);
    sample_prior(dims, Hyperparams::new(1.0, 1.0).unwrap(), &mut rng).unwrap().params
}

#[test]
fn class_distribution_is_invariant_to_rescaling_a_community() {
    let p = small_state(3);
    let (c_n, k_n, r_n) = (2, 2, 2);
    let s = 3.7;
    let mut q = p.clone();
    for i in 0..4 {
        q.theta.set(i, 0, p.theta.get(i, 0) * s);
    }
    // community 0 appears once per sender or receiver side
    for r in 0..r_n {
        for k in 0..k_n {
            for c in 0..c_n {
                for d in 0..c_n {
                    let power = (c == 0) as i32 + (d == 0) as i32;
                    q.core.set(c, d, k, r, p.core.get(c, d, k, r) / s.powi(power));
                }
            }
        }
    }
    for e in [EventToken::new(0, 1, 0, 0), EventToken::new(3, 2, 2, 1), EventToken::new(1, 3, 1, 2)] {
        let (a, b) = (class_probabilities(&p, &e), class_probabilities(&q, &e));
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12, "{a:?} vs {b:?}");
        }
    }
}

#[test]
fn symmetric_state_gives_symmetric_frequencies() {
    // identical θ columns and a core symmetric under swapping the two
    // communities
    let theta = Matrix::filled(4, 2, 1.0);
    let phi = Matrix::from_vec(3, 2, vec![1.0, 0.5, 0.2, 2.0, 1.0, 1.0]).unwrap();
    let psi = Matrix::from_vec(3, 2, vec![0.3, 1.0, 1.0, 0.6, 2.0, 0.5]).unwrap();
    let mut core = CoreTensor::filled(2, 2, 2, 0.0);
    for r in 0..2 {
        for k in 0..2 {
            let (w, b1, b2) = (1.0 + k as f64 + r as f64, 0.4 + 0.1 * r as f64, 0.7);
            core.set(0, 0, k, r, w);
            core.set(1, 1, k, r, w);
            core.set(0, 1, k, r, b1 + b2 * k as f64);
            core.set(1, 0, k, r, b1 + b2 * k as f64);
        }
    }
    let p = TuckerParams::new(theta, phi, psi, core).unwrap();
    let dims = p.dims();
    let e = EventToken::new(1, 2, 0, 1);
    let probs = class_probabilities(&p, &e);
    let mut rng = RngStream::new(17);
    let mut alloc = Allocator::new(&dims);
    let mut z = TokenAssignment::default();
    let n = 100_000;
    let mut counts = vec![0u64; 16];
    for _ in 0..n {
        alloc.compositional(&p, &e, &mut z, &mut rng).unwrap();
        counts[((z.r * 2 + z.k) * 2 + z.c) * 2 + z.d] += 1;
    }
    let chi2: f64 = counts
        .iter()
        .zip(&probs)
        .map(|(&o, &q)| (o as f64 - q * n as f64).powi(2) / (q * n as f64))
        .sum();
    assert!(chi2 < 30.5779, "chi-square {chi2}");
    // swapped classes (c, d) ↔ (1 − c, 1 − d) have equal probability
    for r in 0..2 {
        for k in 0..2 {
            for c in 0..2 {
                for d in 0..2 {
                    let a = ((r * 2 + k) * 2 + c) * 2 + d;
                    let b = ((r * 2 + k) * 2 + (1 - c)) * 2 + (1 - d);
                    assert!((probs[a] - probs[b]).abs() < 1e-12);
                }
            }
        }
    }
}

fn tiny_data() -> CountTensor {
    let tokens = [
        EventToken::new(0, 1, 0, 0),
        EventToken::new(0, 1, 0, 0),
        EventToken::new(1, 2, 1, 1),
        EventToken::new(2, 0, 0, 1),
        EventToken::new(1, 0, 1, 0),
        EventToken::new(2, 1, 1, 1),
    ];
    CountTensor::from_tokens(&tokens, ModelDims::new(3, 2, 2, 2, 2, 2).unwrap().tensor()).unwrap()
}

fn posterior_means(mode: AllocationMode, seed: u64) -> Vec<f64> {
    let hyper = Hyperparams::new(1.0, 1.0).unwrap();
    let mut rng = RngStream::new(seed);
    let mut chain = BptdChain::new(tiny_data(), 2, 2, 2, hyper, mode, &mut rng).unwrap();
    let (burn, keep) = (2_000, 40_000);
    let mut sums = [0.0; 3];
    for it in 0..burn + keep {
        chain.sweep(&mut rng).unwrap();
        if it >= burn {
            let p = &chain.state().params;
            // log scale keeps the heavy prior tails from dominating
            sums[0] += p.total_rate().ln();
            sums[1] += p.theta.mean().ln();
            sums[2] += p.rate_unchecked(0, 1, 0, 0).ln();
        }
    }
    sums.iter().map(|s| s / keep as f64).collect()
}

#[test]
fn joint_and_compositional_chains_agree() {
    let joint = posterior_means(AllocationMode::Joint, 1);
    let comp = posterior_means(AllocationMode::Compositional, 2);
    for (a, b) in joint.iter().zip(&comp) {
        assert!((a - b).abs() < 0.1, "joint {joint:?} vs compositional {comp:?}");
    }
}
