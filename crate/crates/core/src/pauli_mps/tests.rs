use super::*;
use crate::pauli::dense::{
    brute_force_long_range_magic, brute_force_mixed_sre, brute_force_sre, dense_pauli_spectrum, partial_trace, DenseInput,
};
use proptest::prelude::*;

type C = Complex<f64>;

fn dense(psi: &MatrixProductState<f64>) -> Vec<C> {
    psi.normalized().unwrap().to_dense(1 << 14).unwrap()
}

fn magic_product(n: usize) -> MatrixProductState<f64> {
    let s = 1.0 / 2f64.sqrt();
    let v = vec![C::new(0.0, 0.0), C::new(s, 0.0), C::new(-s, 0.0)];
    MatrixProductState::product_from_vectors(&vec![v; n]).unwrap()
}

/// Compares every coefficient with the dense spectrum of `rho_A` over `keep`.
fn assert_matches_dense(pm: &PauliMps<f64>, psi: &MatrixProductState<f64>, keep: &[usize], tol: f64) {
    let alg = QuditAlgebra::qutrit();
    let v = dense(psi);
    let spectrum = if keep.len() == psi.n_sites() {
        dense_pauli_spectrum(&alg, DenseInput::Vector(&v)).unwrap()
    } else {
        let rho = partial_trace(&v, 3, keep).unwrap();
        dense_pauli_spectrum(&alg, DenseInput::Matrix(&rho)).unwrap()
    };
    let norm = 3f64.powf(keep.len() as f64 / 2.0);
    for (i, z) in spectrum.values.iter().enumerate() {
        let c = pm.component(&spectrum.string_at(i)).unwrap();
        assert!((c - z / norm).norm() < tol, "string {i}: {c} vs {}", z / norm);
    }
}

#[test]
fn product_state_has_unit_bonds() {
    let alg = QuditAlgebra::qutrit();
    let psi = magic_product(3);
    let pm = psi.to_pauli_mps(&alg).unwrap();
    assert_eq!(pm.bond_dims(), vec![1, 1, 1, 1]);
    assert_matches_dense(&pm, &psi, &[0, 1, 2], 1e-12);
}

#[test]
fn random_state_components_match_dense_spectrum() {
    let alg = QuditAlgebra::qutrit();
    let psi = MatrixProductState::<f64>::random(4, 3, 3, 17).unwrap();
    let pm = psi.to_pauli_mps(&alg).unwrap();
    let sq: Vec<usize> = psi.bond_dims().iter().map(|b| b * b).collect();
    assert_eq!(pm.bond_dims(), sq);
    assert_matches_dense(&pm, &psi, &[0, 1, 2, 3], 1e-10);
}

#[test]
fn unnormalized_input_is_normalized() {
    let alg = QuditAlgebra::qutrit();
    let psi = MatrixProductState::<f64>::random(3, 3, 3, 2).unwrap();
    let scaled = MatrixProductState::with_gauge(psi.tensors().to_vec(), 3, None, 2.5).unwrap();
    let pm = scaled.to_pauli_mps(&alg).unwrap();
    assert_matches_dense(&pm, &psi, &[0, 1, 2], 1e-10);
}

#[test]
fn parseval_for_pure_states() {
    let alg = QuditAlgebra::qutrit();
    for seed in 0..4 {
        let psi = MatrixProductState::<f64>::random(5, 3, 3, seed).unwrap();
        let pm = psi.to_pauli_mps(&alg).unwrap();
        assert!(pm.log_norm_sqr().unwrap().abs() < 1e-10);
        assert!(pm.log_power_sum(1, DEFAULT_EXACT_ENV_CAP).unwrap().abs() < 1e-10);
    }
}

#[test]
fn tracing_nothing_is_identity() {
    let alg = QuditAlgebra::qutrit();
    let psi = MatrixProductState::<f64>::random(4, 3, 3, 5).unwrap();
    let pm = psi.to_pauli_mps(&alg).unwrap();
    let same = pm.reduce_to(&Partition::block(0..4, 4).unwrap()).unwrap();
    assert_eq!(same.sites(), pm.sites());
    assert_matches_dense(&same, &psi, &[0, 1, 2, 3], 1e-10);
}

#[test]
fn ghz_reduced_to_one_site_is_maximally_mixed() {
    let alg = QuditAlgebra::qutrit();
    let psi = MatrixProductState::<f64>::ghz(3, 3).unwrap();
    let red = psi.to_pauli_mps(&alg).unwrap().trace_out(&Partition::block(1..3, 3).unwrap()).unwrap();
    assert_eq!(red.sites(), &[0]);
    for al in 0..9 {
        let (a, ap) = alg.unlabel(al);
        let c = red.component(&PauliString::new(vec![(a, ap)], 3)).unwrap();
        let expect = if al == 0 { 1.0 / 3f64.sqrt() } else { 0.0 };
        assert!((c - C::new(expect, 0.0)).norm() < 1e-12, "label {al}: {c}");
    }
}

#[test]
fn partial_trace_matches_dense() {
    let alg = QuditAlgebra::qutrit();
    let psi = MatrixProductState::<f64>::random(4, 3, 3, 8).unwrap();
    let pm = psi.to_pauli_mps(&alg).unwrap();
    let red = pm.trace_out(&Partition::from_sites(&[0, 3], 4).unwrap()).unwrap();
    assert_eq!(red.sites(), &[1, 2]);
    assert_matches_dense(&red, &psi, &[1, 2], 1e-10);
    let red = pm.reduce_to(&Partition::from_sites(&[0, 2], 4).unwrap()).unwrap();
    assert_matches_dense(&red, &psi, &[0, 2], 1e-10);
}

#[test]
fn tracing_everything_is_rejected() {
    let alg = QuditAlgebra::qutrit();
    let pm = magic_product(2).to_pauli_mps(&alg).unwrap();
    let err = pm.trace_out(&Partition::block(0..2, 2).unwrap()).unwrap_err();
    assert!(matches!(err, Error::InvalidPartition(_)));
    let red = pm.trace_out(&Partition::block(0..1, 2).unwrap()).unwrap();
    assert!(matches!(red.trace_out(&Partition::block(0..1, 2).unwrap()), Err(Error::InvalidPartition(_))));
}

#[test]
fn stabilizer_states_have_zero_replica_sre() {
    let alg = QuditAlgebra::qutrit();
    let states = [
        MatrixProductState::<f64>::product_state(&[0, 1, 2, 1], 3).unwrap(),
        MatrixProductState::<f64>::uniform_superposition(4, 3).unwrap(),
        MatrixProductState::<f64>::ghz(4, 3).unwrap(),
    ];
    for psi in &states {
        let pm = psi.to_pauli_mps(&alg).unwrap();
        for n in [2, 3] {
            let m = sre_replica(&pm, n, ReplicaMode::Exact, false).unwrap();
            assert!(m.value.abs() < 1e-10, "n = {n}: {}", m.value);
        }
    }
}

#[test]
fn exact_replica_matches_brute_force() {
    let alg = QuditAlgebra::qutrit();
    for seed in 0..3 {
        let psi = MatrixProductState::<f64>::random(4, 3, 3, 40 + seed).unwrap();
        let v = dense(&psi);
        let pm = psi.to_pauli_mps(&alg).unwrap();
        for n in [2usize, 3] {
            let m = sre_replica(&pm, n, ReplicaMode::Exact, false).unwrap();
            let oracle = brute_force_sre(&alg, &v, n as f64).unwrap();
            assert!((m.value - oracle).abs() < 1e-9, "n = {n}: {} vs {oracle}", m.value);
            assert_eq!(m.accumulated_truncation_weight, 0.0);
        }
    }
}

#[test]
fn mixed_replica_matches_brute_force() {
    let alg = QuditAlgebra::qutrit();
    let psi = MatrixProductState::<f64>::random(5, 3, 3, 61).unwrap();
    let v = dense(&psi);
    let pm = psi.to_pauli_mps(&alg).unwrap();
    for keep in [vec![0, 1], vec![1, 3, 4], vec![2]] {
        let red = pm.reduce_to(&Partition::from_sites(&keep, 5).unwrap()).unwrap();
        let rho = partial_trace(&v, 3, &keep).unwrap();
        let oracle = brute_force_mixed_sre(&alg, &rho, 2.0).unwrap();
        let m = sre_replica(&red, 2, ReplicaMode::Exact, true).unwrap();
        assert!((m.value - oracle).abs() < 1e-9, "{keep:?}: {} vs {oracle}", m.value);
    }
    let full = brute_force_sre(&alg, &v, 2.0).unwrap();
    let m = sre_replica(&pm, 2, ReplicaMode::Exact, true).unwrap();
    assert!((m.value - full).abs() < 1e-9);
}

#[test]
fn compressed_without_truncation_matches_exact() {
    let alg = QuditAlgebra::qutrit();
    let psi = MatrixProductState::<f64>::random(4, 3, 3, 7).unwrap();
    let pm = psi.to_pauli_mps(&alg).unwrap();
    let exact = sre_replica(&pm, 2, ReplicaMode::Exact, false).unwrap().value;
    let c = sre_replica(&pm, 2, ReplicaMode::Compressed { chi_p: 81 }, false).unwrap();
    assert!((c.value - exact).abs() < 1e-9, "{} vs {exact}", c.value);
    assert!(c.accumulated_truncation_weight < 1e-20);
    assert_eq!(c.chi_p, Some(81));
    let exact3 = sre_replica(&pm, 3, ReplicaMode::Exact, false).unwrap().value;
    let c3 = sre_replica(&pm, 3, ReplicaMode::Compressed { chi_p: 729 }, false).unwrap().value;
    assert!((c3 - exact3).abs() < 1e-9, "{c3} vs {exact3}");
}

#[test]
fn truncated_construction_without_truncation_is_exact() {
    let alg = QuditAlgebra::qutrit();
    let psi = MatrixProductState::<f64>::random(4, 3, 3, 9).unwrap();
    let pm = PauliMps::from_state_truncated(&alg, &psi, 9).unwrap();
    assert!(pm.truncation_weight() < 1e-20);
    assert_matches_dense(&pm, &psi, &[0, 1, 2, 3], 1e-10);
}

#[test]
fn truncated_construction_reports_single_bond_weight() {
    // one bond: the kept coefficients are an orthogonal projection
    let alg = QuditAlgebra::qutrit();
    let psi = MatrixProductState::<f64>::random(2, 3, 3, 10).unwrap();
    let pm = PauliMps::from_state_truncated(&alg, &psi, 4).unwrap();
    let kept = pm.log_norm_sqr().unwrap().exp();
    assert!(pm.truncation_weight() > 1e-4);
    assert!((kept + pm.truncation_weight() - 1.0).abs() < 1e-10);
}

fn assert_monotone_convergence(psi: &MatrixProductState<f64>, chi_ps: &[usize]) -> f64 {
    let alg = QuditAlgebra::qutrit();
    let exact = brute_force_sre(&alg, &dense(psi), 2.0).unwrap();
    let mut last = f64::INFINITY;
    for &chi_p in chi_ps {
        let pm = PauliMps::from_state_truncated(&alg, psi, chi_p).unwrap();
        let c = sre_replica(&pm, 2, ReplicaMode::Compressed { chi_p }, false).unwrap();
        let err = (c.value - exact).abs();
        assert!(err < last || err < 1e-12, "chi_P {chi_p}: error {err} after {last}");
        last = err;
    }
    last
}

#[test]
fn compressed_error_decreases_with_chi_p() {
    // below these chi_P nearly all weight is discarded and the error is not
    // ordered
    for seed in 0..4 {
        let psi = MatrixProductState::<f64>::random(6, 3, 2, seed).unwrap();
        assert!(assert_monotone_convergence(&psi, &[4, 8, 16]) < 1e-10);
    }
    use crate::dmrg::{dmrg_ground_state, DmrgSettings};
    use crate::model::{build_mpo, preset, ModelParams};
    let p = preset("haldane-large-d").unwrap();
    let mpo = build_mpo::<f64>(&ModelParams::new(6, p.jz, p.d).unwrap()).unwrap();
    let psi = dmrg_ground_state(&mpo, &DmrgSettings::with_chi(27), 0).unwrap().state;
    assert!(assert_monotone_convergence(&psi, &[8, 16, 32, 64]) < 1e-2);
}

#[test]
fn compressing_an_exact_pauli_mps() {
    let alg = QuditAlgebra::qutrit();
    let psi = MatrixProductState::<f64>::random(5, 3, 3, 13).unwrap();
    let pm = psi.to_pauli_mps(&alg).unwrap();
    let exact = sre_replica(&pm, 2, ReplicaMode::Exact, false).unwrap().value;
    let c = sre_replica(&pm, 2, ReplicaMode::Compressed { chi_p: 6 }, false).unwrap();
    assert!(c.accumulated_truncation_weight > 0.0);
    assert!((c.value - exact).abs() < 0.5, "{} vs {exact}", c.value);
}

#[test]
fn exact_mode_respects_cost_cap() {
    let alg = QuditAlgebra::qutrit();
    let psi = MatrixProductState::<f64>::random(4, 3, 6, 14).unwrap();
    let pm = psi.to_pauli_mps(&alg).unwrap();
    assert_eq!(pm.max_bond(), 36);
    let err = sre_replica(&pm, 2, ReplicaMode::Exact, false).unwrap_err();
    assert!(matches!(err, Error::ContractionTooLarge(_)));
    assert!(sre_replica_with_cap(&pm, 2, ReplicaMode::Exact, false, 36usize.pow(4)).is_ok());
}

#[test]
fn replica_index_must_be_at_least_two() {
    let alg = QuditAlgebra::qutrit();
    let pm = magic_product(2).to_pauli_mps(&alg).unwrap();
    assert!(sre_replica(&pm, 1, ReplicaMode::Exact, false).is_err());
    assert!(sre_replica(&pm, 2, ReplicaMode::Compressed { chi_p: 0 }, false).is_err());
}

#[test]
fn product_of_magic_states_has_no_long_range_magic() {
    let alg = QuditAlgebra::qutrit();
    let psi = magic_product(6);
    let a = Partition::block(0..2, 6).unwrap();
    let b = Partition::block(4..6, 6).unwrap();
    let l = long_range_magic_pauli_mps(&alg, &psi, &a, &b, ReplicaMode::Exact).unwrap();
    assert!(l.long_range.abs() < 1e-8, "{l:?}");
    assert!(l.m2_a > 0.1);
}

#[test]
fn long_range_magic_matches_brute_force() {
    let alg = QuditAlgebra::qutrit();
    let psi = MatrixProductState::<f64>::random(6, 3, 2, 15).unwrap();
    let a = Partition::block(0..2, 6).unwrap();
    let b = Partition::block(3..5, 6).unwrap();
    let oracle = brute_force_long_range_magic(&alg, &dense(&psi), &a, &b).unwrap();
    let l = long_range_magic_pauli_mps(&alg, &psi, &a, &b, ReplicaMode::Exact).unwrap();
    assert!((l.long_range - oracle).abs() < 1e-9, "{} vs {oracle}", l.long_range);
    let c = long_range_magic_pauli_mps(&alg, &psi, &a, &b, ReplicaMode::Compressed { chi_p: 16 }).unwrap();
    assert!((c.long_range - oracle).abs() < 1e-8, "{} vs {oracle}", c.long_range);
}

#[test]
fn single_precision_exact_replica() {
    let alg = QuditAlgebra::qutrit();
    let psi = MatrixProductState::<f64>::random(4, 3, 2, 16).unwrap();
    let exact = sre_replica(&psi.to_pauli_mps(&alg).unwrap(), 2, ReplicaMode::Exact, false).unwrap().value;
    let single = sre_replica(&psi.cast::<f32>().to_pauli_mps(&alg).unwrap(), 2, ReplicaMode::Exact, false).unwrap().value;
    assert!((single as f64 - exact).abs() < 1e-4);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn replica_sre_agrees_with_dense(seed in 0u64..1000, chi in 1usize..4) {
        let alg = QuditAlgebra::qutrit();
        let psi = MatrixProductState::<f64>::random(3, 3, chi, seed).unwrap();
        let v = dense(&psi);
        let pm = psi.to_pauli_mps(&alg).unwrap();
        prop_assert!(pm.log_norm_sqr().unwrap().abs() < 1e-10);
        let m = sre_replica(&pm, 2, ReplicaMode::Exact, false).unwrap().value;
        let oracle = brute_force_sre(&alg, &v, 2.0).unwrap();
        prop_assert!((m - oracle).abs() < 1e-9);
        prop_assert!(m >= -1e-10);
    }
}
