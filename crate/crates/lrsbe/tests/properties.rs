//! Property tests: operator identities under random shapes, proximal
//! contraction, metric identities, and the generator's reproducibility and
//! structure contract over many seeds.

use lrsbe::beamspace::{synthesize_channel, ChannelDims, GeneratorParams};
use lrsbe::eval::{ecdf, nmse};
use lrsbe::measurement::PilotSet;
use lrsbe::solvers::soft_threshold;
use lrsbe::{CMat, CVec, C64};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn adjoint_identity_random_shapes(
        m in 1usize..6,
        k in 1usize..5,
        n_off in 0usize..4,
        seed in 0u64..1000,
    ) {
        let n = 1 + n_off.min(k - 1);
        let p = PilotSet::make_pilots(n, k, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draw = |rng: &mut ChaCha8Rng, len: usize| {
            use rand::Rng;
            CVec::from_fn(len, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
        };
        let h = draw(&mut rng, m * k);
        let v = draw(&mut rng, m * n);
        let lhs = p.forward(&h).unwrap().dotc(&v);
        let rhs = h.dotc(&p.adjoint(&v).unwrap());
        prop_assert!((lhs - rhs).norm() <= 1e-10 * lhs.norm().max(1.0));
    }

    #[test]
    fn soft_threshold_is_a_contraction(re in -5.0f64..5.0, im in -5.0f64..5.0, tau in 0.0f64..3.0) {
        let z = C64::new(re, im);
        let out = soft_threshold(z, tau);
        prop_assert!(out.norm() <= z.norm() + 1e-15);
        if z.norm() >= tau {
            prop_assert!((out.norm() - (z.norm() - tau)).abs() <= 1e-12);
        } else {
            prop_assert_eq!(out, C64::new(0.0, 0.0));
        }
    }

    #[test]
    fn nmse_scaling_identity(vals in proptest::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 8), c in 0.1f64..3.0) {
        let h = CVec::from_iterator(8, vals.iter().map(|(r, i)| C64::new(*r, *i)));
        prop_assume!(h.rows(0, 4).norm() > 1e-6 && h.rows(4, 4).norm() > 1e-6);
        // Scaling both channels leaves the per-user ratio unchanged.
        let hat = &h * C64::new(0.3, 0.1);
        let (a, _) = nmse(&h, &hat, 2).unwrap();
        let (b, _) = nmse(&(&h * C64::new(c, 0.0)), &(&hat * C64::new(c, 0.0)), 2).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a.max(1.0));
    }

    #[test]
    fn ecdf_is_a_right_continuous_cdf(vals in proptest::collection::vec(-100.0f64..100.0, 1..50)) {
        let cdf = ecdf(&vals).unwrap();
        prop_assert_eq!(cdf.len(), vals.len());
        let mut prev = 0.0;
        for (i, (v, p)) in cdf.iter().enumerate() {
            prop_assert!(*p > prev - 1e-12);
            prop_assert!((p - (i + 1) as f64 / vals.len() as f64).abs() < 1e-12);
            if i > 0 {
                prop_assert!(*v >= cdf[i - 1].0);
            }
            prev = *p;
        }
        prop_assert!((cdf.last().unwrap().1 - 1.0).abs() < 1e-12);
    }
}

#[test]
fn generator_contract_over_many_seeds() {
    let dims = ChannelDims::new(8, 8, 3);
    let params = GeneratorParams {
        rank_r: 3,
        sparse_blocks: 2,
        block_len_gen: 4,
        power_split: 0.5,
        energy_concentration: 0.9,
        gain: 2.0,
    };
    let energy = params.gain * params.gain * dims.m() as f64;
    for seed in 0..1000u64 {
        let c = synthesize_channel(&params, dims, seed).unwrap();
        for u in &c.users {
            // Exact split and additive decomposition.
            let el = u.lowrank.norm_squared();
            let es = u.sparse.norm_squared();
            assert!((el - 0.5 * energy).abs() < 1e-6 * energy);
            assert!((es - 0.5 * energy).abs() < 1e-6 * energy);
            let beam = u.beam();
            for i in 0..beam.len() {
                assert_eq!(beam[i], u.lowrank[i] + u.sparse[i]);
            }
            // Sparse support: exactly two non-adjacent runs of length 4.
            let nz: Vec<bool> = u.sparse.iter().map(|z| z.norm_sqr() > 0.0).collect();
            assert_eq!(nz.iter().filter(|b| **b).count(), 8);
            let runs = nz.windows(2).filter(|w| !w[0] && w[1]).count() + usize::from(nz[0]);
            assert_eq!(runs, 2);
        }
        // Rank bound on a sampled subset to keep the SVD cost down.
        if seed % 50 == 0 {
            for u in &c.users {
                let mat = CMat::from_column_slice(dims.m_h, dims.m_v, u.lowrank.as_slice());
                let sv = mat.singular_values();
                for s in sv.iter().skip(params.rank_r) {
                    assert!(*s < 1e-10 * sv[0].max(1.0));
                }
            }
        }
    }
    // Bit-identical reproducibility.
    let a = synthesize_channel(&params, dims, 123).unwrap();
    let b = synthesize_channel(&params, dims, 123).unwrap();
    assert_eq!(a, b);
}
