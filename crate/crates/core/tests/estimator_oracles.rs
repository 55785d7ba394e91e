mod common;

use common::*;
use mwclust::cluster::{build_index, ClusterScheme, WeightedSample};
use mwclust::linalg::relative_frobenius;
use mwclust::variance::{cgm_components, cgm_demeaned, cgm_raw, cgm_with, psd_project, CgmMethod, CgmOptions};
use proptest::prelude::*;

fn estimate(inst: &Instance, method: CgmMethod) -> Dense {
    let index = build_index(&inst.scheme()).unwrap();
    to_dense(&cgm_raw(&inst.sample(), &index, method).unwrap().q_hat)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn both_paths_match_brute_force(seed in any::<u64>()) {
        let inst = Instance::random(&mut rng(seed), 120, 4);
        let brute = brute_force_cgm(&inst.w, &inst.omega, &inst.g, &inst.h);
        prop_assert!(rel_frob(&estimate(&inst, CgmMethod::PairEnum), &brute) < 1e-10);
        prop_assert!(rel_frob(&estimate(&inst, CgmMethod::InclusionExclusion), &brute) < 1e-10);
    }

    #[test]
    fn estimate_is_symmetric(seed in any::<u64>()) {
        let inst = Instance::random(&mut rng(seed), 80, 4);
        let q = estimate(&inst, CgmMethod::PairEnum);
        for (a, row) in q.iter().enumerate() {
            for (b, v) in row.iter().enumerate() {
                prop_assert_eq!(*v, q[b][a]);
            }
        }
    }

    #[test]
    fn permuting_observations_leaves_estimate_unchanged(seed in any::<u64>(), shift in 1usize..50) {
        let inst = Instance::random(&mut rng(seed), 80, 3);
        let n = inst.w.len();
        let perm: Vec<usize> = (0..n).map(|i| (i * 7 + shift) % n).collect();
        // only a permutation when gcd(7, n) = 1
        prop_assume!(!n.is_multiple_of(7));
        let permuted = Instance {
            w: perm.iter().map(|&i| inst.w[i].clone()).collect(),
            omega: perm.iter().map(|&i| inst.omega[i]).collect(),
            g: perm.iter().map(|&i| inst.g[i]).collect(),
            h: perm.iter().map(|&i| inst.h[i]).collect(),
        };
        let a = estimate(&inst, CgmMethod::PairEnum);
        let b = estimate(&permuted, CgmMethod::PairEnum);
        prop_assert!(rel_frob(&a, &b) < 1e-12);
    }

    #[test]
    fn weight_scaling_is_quadratic(seed in any::<u64>(), c in -3.0f64..3.0) {
        prop_assume!(c.abs() > 1e-3);
        let inst = Instance::random(&mut rng(seed), 60, 3);
        let scaled = Instance { omega: inst.omega.iter().map(|o| c * o).collect(), ..inst };
        let base = Instance { omega: scaled.omega.iter().map(|o| o / c).collect(), w: scaled.w.clone(), g: scaled.g.clone(), h: scaled.h.clone() };
        let a = estimate(&scaled, CgmMethod::PairEnum);
        let b: Dense = estimate(&base, CgmMethod::PairEnum).iter().map(|r| r.iter().map(|v| v * c * c).collect()).collect();
        prop_assert!(rel_frob(&a, &b) < 1e-10);
    }

    #[test]
    fn relabeling_clusters_is_irrelevant(seed in any::<u64>()) {
        let inst = Instance::random(&mut rng(seed), 80, 2);
        let relabeled = Instance {
            g: inst.g.iter().map(|v| 1000 - 3 * v).collect(),
            h: inst.h.iter().map(|v| v * 11 + 5).collect(),
            w: inst.w.clone(),
            omega: inst.omega.clone(),
        };
        prop_assert_eq!(estimate(&inst, CgmMethod::PairEnum), estimate(&relabeled, CgmMethod::PairEnum));
    }

    #[test]
    fn one_way_and_singleton_reductions(seed in any::<u64>()) {
        let inst = Instance::random(&mut rng(seed), 120, 3);
        let sample = inst.sample();
        for method in [CgmMethod::PairEnum, CgmMethod::InclusionExclusion] {
            let one = build_index(&ClusterScheme::one_way(&inst.g).unwrap()).unwrap();
            let q = to_dense(&cgm_raw(&sample, &one, method).unwrap().q_hat);
            prop_assert!(rel_frob(&q, &one_way_meat(&inst.w, &inst.omega, &inst.g)) < 1e-10);

            let single = build_index(&ClusterScheme::singletons(inst.w.len()).unwrap()).unwrap();
            let q = to_dense(&cgm_raw(&sample, &single, method).unwrap().q_hat);
            prop_assert!(rel_frob(&q, &hc0_meat(&inst.w, &inst.omega)) < 1e-10);
        }
    }

    #[test]
    fn demeaned_matches_centered_brute_force(seed in any::<u64>()) {
        let inst = Instance::random(&mut rng(seed), 80, 3);
        let total: f64 = inst.omega.iter().sum();
        prop_assume!(total.abs() > 0.5);
        let k = inst.w[0].len();
        let mean: Vec<f64> = (0..k)
            .map(|a| inst.w.iter().zip(&inst.omega).map(|(r, o)| o * r[a]).sum::<f64>() / total)
            .collect();
        let centered: Dense = inst.w.iter().map(|r| r.iter().zip(&mean).map(|(v, m)| v - m).collect()).collect();
        let brute = brute_force_cgm(&centered, &inst.omega, &inst.g, &inst.h);
        let index = build_index(&inst.scheme()).unwrap();
        let (m, est) = cgm_demeaned(&inst.sample(), &index, CgmMethod::PairEnum).unwrap();
        prop_assert!(est.demeaned);
        for a in 0..k {
            prop_assert!((m[a] - mean[a]).abs() <= 1e-12 * (1.0 + mean[a].abs()));
        }
        // compare on the scale of the summands; the estimate itself can be pure roundoff
        let magnitude: f64 = centered.iter().zip(&inst.omega).map(|(r, o)| o.abs() * frob(&vec![r.clone()])).sum();
        let q = to_dense(&est.q_hat);
        let diff: Dense = q.iter().zip(&brute).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect()).collect();
        let err = frob(&diff) / frob(&brute).max(magnitude * magnitude).max(1e-300);
        prop_assert!(err < 1e-10, "err {err}");
    }

    #[test]
    fn psd_projection_properties(seed in any::<u64>()) {
        let inst = Instance::random(&mut rng(seed), 60, 4);
        let index = build_index(&inst.scheme()).unwrap();
        let est = cgm_raw(&inst.sample(), &index, CgmMethod::PairEnum).unwrap();
        let p = psd_project(&est).unwrap();
        prop_assert!(p.psd_projected);
        let scale = est.q_hat.frobenius_norm().max(1.0);
        prop_assert!(p.lambda_min >= -1e-12 * scale);
        let twice = psd_project(&p).unwrap();
        prop_assert!(relative_frobenius(&twice.q_hat, &p.q_hat) < 1e-10);
        if est.lambda_min >= 0.0 {
            prop_assert!(relative_frobenius(&p.q_hat, &est.q_hat) < 1e-10);
        }
    }

    #[test]
    fn dof_correction_rescales_components(seed in any::<u64>()) {
        let inst = Instance::random(&mut rng(seed), 100, 2);
        let index = build_index(&inst.scheme()).unwrap();
        let (cg, ch, cc) = (index.clusters(0).len(), index.clusters(1).len(), index.cells().len());
        prop_assume!(cg >= 2 && ch >= 2 && cc >= 2);
        let sample = inst.sample();
        let [qg, qh, qc] = cgm_components(&sample, &index).unwrap();
        let f = |c: usize| c as f64 / (c as f64 - 1.0);
        let expected = qg.scale(f(cg)).add(&qh.scale(f(ch))).unwrap().sub(&qc.scale(f(cc))).unwrap();
        let opts = CgmOptions { method: CgmMethod::InclusionExclusion, dof_correction: true };
        let got = cgm_with(&sample, &index, opts).unwrap();
        prop_assert!(got.dof_corrected);
        prop_assert!(relative_frobenius(&got.q_hat, &expected) < 1e-12);
    }
}

#[test]
fn dof_correction_requires_inclusion_exclusion() {
    let index = build_index(&ClusterScheme::balanced_grid(3, 3, 1).unwrap()).unwrap();
    let sample = WeightedSample::scalar(vec![1.0; 9], vec![1.0; 9]).unwrap();
    let opts = CgmOptions { method: CgmMethod::PairEnum, dof_correction: true };
    assert!(cgm_with(&sample, &index, opts).is_err());
}

#[test]
fn components_sum_to_estimate() {
    let inst = Instance::random(&mut rng(99), 200, 3);
    let index = build_index(&inst.scheme()).unwrap();
    let [qg, qh, qc] = cgm_components(&inst.sample(), &index).unwrap();
    let total = qg.add(&qh).unwrap().sub(&qc).unwrap();
    let brute = brute_force_cgm(&inst.w, &inst.omega, &inst.g, &inst.h);
    assert!(rel_frob(&to_dense(&total), &brute) < 1e-10);
}
