use cddgeo::algebra::{
    gamma_embed, gamma_project, infidelity, mat_exp, max_abs_diff, target_from_axis, GammaVector,
    Mat2, C64,
};
use cddgeo::ampdamp::{
    conjugate_target, correction_operator, permute_fields, rotate_fields, unpermute_fields,
};
use cddgeo::field::ControlField;
use cddgeo::geodesic::Target;
use cddgeo::noise::{h_of_t, ln_mu, NoiseParams};
use cddgeo::simulator::trivial_hamiltonian;
use cddgeo::su2::{BlockUnitary, Su2};
use cddgeo::surrogate::{fold_partition, Histogram};
use proptest::prelude::*;

fn axis() -> impl Strategy<Value = [f64; 3]> {
    prop::array::uniform3(-3.0..3.0f64)
}

fn gamma() -> impl Strategy<Value = GammaVector> {
    prop::array::uniform6(-20.0..20.0f64).prop_map(GammaVector)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 1000, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn quaternion_product_matches_matrices(a in axis(), b in axis()) {
        let (p, q) = (Su2::exp_axis(&a), Su2::exp_axis(&b));
        prop_assert!(max_abs_diff(&p.mul(&q).to_mat2(), &(p.to_mat2() * q.to_mat2())) < 1e-13);
        prop_assert!(max_abs_diff(&p.to_mat2(), &target_from_axis(a)) < 1e-13);
    }

    #[test]
    fn block_conjugation_matches_dense(a in axis(), b in axis(), l in gamma()) {
        let u = BlockUnitary { up: Su2::exp_axis(&a), down: Su2::exp_axis(&b) };
        let m = u.to_mat4();
        let dense = gamma_project(&(m * gamma_embed(&l) * m.adjoint()));
        let fast = u.conjugate(&l);
        for k in 0..6 {
            prop_assert!((dense[k] - fast[k]).abs() < 1e-11);
        }
    }

    #[test]
    fn target_axis_round_trip(u in axis(), phase in -3.0..3.0f64) {
        let m = target_from_axis(u) * C64::from_polar(1.0, phase);
        let back = Target::from_unitary(&m).unwrap();
        prop_assert!(infidelity(&back.matrix(), &target_from_axis(u)) < 1e-12);
        prop_assert!(back.u.iter().map(|x| x * x).sum::<f64>().sqrt() <= std::f64::consts::FRAC_PI_2 + 1e-12);
    }

    #[test]
    fn trivial_hamiltonian_generates_target(u in prop::array::uniform3(-1.5..1.5f64), tau in 0.2..5.0f64) {
        let target = target_from_axis(u);
        let f = trivial_hamiltonian(&target, 100, tau).unwrap();
        let [x, y, z] = f.omega(0);
        let h: Mat2 = cddgeo::algebra::sigma_x() * C64::from(x) + cddgeo::algebra::sigma_y() * C64::from(y) + cddgeo::algebra::sigma_z() * C64::from(z);
        let gen = mat_exp(&(h * C64::new(0.0, -tau)));
        prop_assert!(infidelity(&gen, &target) < 1e-12);
    }

    #[test]
    fn correction_permutes_gate_coefficients(u in axis()) {
        let v = conjugate_target(&target_from_axis(u), &correction_operator());
        prop_assert!(max_abs_diff(&v, &target_from_axis([u[1], u[2], u[0]])) < 1e-13);
    }

    #[test]
    fn field_permutation_round_trip(w in prop::collection::vec(prop::array::uniform3(-10.0..10.0f64), 2..30), w0 in 0.0..3.0f64) {
        let n = w.len() - 1;
        let f = ControlField::from_fn(n, 1.0, |t| w[((t * n as f64).round() as usize).min(n)]);
        let back = unpermute_fields(&permute_fields(&f, w0), w0);
        for k in 0..=n {
            for i in 0..3 {
                prop_assert!((back.omega(k)[i] - f.omega(k)[i]).abs() < 1e-12);
            }
        }
        let rotated = rotate_fields(&f, &correction_operator());
        let permuted = permute_fields(&f, 0.0);
        for k in 0..=n {
            for i in 0..3 {
                prop_assert!((rotated.omega(k)[i] - permuted.omega(k)[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn coherence_decays_and_coupling_is_negative(
        eta in 0.01..1.0f64,
        wc in 0.05..5.0f64,
        ratio in prop::option::of(0.0..10.0f64),
        t in 1e-6..3.0f64,
    ) {
        let p = NoiseParams::new(eta, wc, ratio.map(|r| r * wc));
        let l = ln_mu(t, &p);
        prop_assert!(l.is_finite() && l <= 0.0);
        prop_assert!(h_of_t(t, &p) <= 0.0);
    }

    #[test]
    fn folds_are_a_disjoint_cover(n in 4usize..500, k in 2usize..8, seed in any::<u64>()) {
        prop_assume!(k <= n);
        let folds = fold_partition(n, k, seed).unwrap();
        let mut seen = vec![0u8; n];
        folds.iter().flatten().for_each(|&i| seen[i] += 1);
        prop_assert_eq!(folds.len(), k);
        prop_assert!(seen.iter().all(|&c| c == 1));
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn histogram_counts_every_value(values in prop::collection::vec(0.0..1.0f64, 0..200)) {
        let h = Histogram::from_values(values.clone(), &[1e-4, 1e-1, 1.0]);
        prop_assert_eq!(h.counts.iter().sum::<usize>(), values.len());
        let low = values.iter().filter(|&&v| v < 1e-1).count();
        prop_assert_eq!(h.counts[0], low);
    }
}
