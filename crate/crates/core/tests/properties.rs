//! Property tests for the statevector core and the entanglement measures.

use num_complex::Complex64;
use proptest::prelude::*;
use vaidman_core::entanglement::{concurrence_sum, pair_concurrence, three_tangle, three_tangle_with_pivot};
use vaidman_core::qcore::{basis_vectors, joint_distribution, measure_single, MeasurementBasis, StateVector};
use vaidman_core::states::{w_class, WClassParams};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn any_state() -> impl Strategy<Value = StateVector> {
    prop::collection::vec(-1.0f64..1.0, 16)
        .prop_filter("nonzero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-3)
        .prop_map(|v| {
            let amps = v.chunks(2).map(|p| c(p[0], p[1])).collect();
            StateVector::normalized(amps).unwrap()
        })
}

fn any_basis() -> impl Strategy<Value = MeasurementBasis> {
    prop_oneof![
        Just(MeasurementBasis::X),
        Just(MeasurementBasis::Y),
        Just(MeasurementBasis::Z),
        (-7.0f64..7.0).prop_map(MeasurementBasis::Lambda),
    ]
}

/// Random SU(2) element from Euler angles.
fn any_unitary() -> impl Strategy<Value = [[Complex64; 2]; 2]> {
    (0.0f64..std::f64::consts::PI, 0.0f64..6.3, 0.0f64..6.3).prop_map(|(t, p, l)| {
        let (s, co) = ((t / 2.0).sin(), (t / 2.0).cos());
        [
            [c(co, 0.0), -Complex64::from_polar(s, l)],
            [Complex64::from_polar(s, p), Complex64::from_polar(co, p + l)],
        ]
    })
}

/// Product ket for one joint outcome, built without touching the measurement code.
fn product_ket(bases: &[MeasurementBasis; 3], choice: usize) -> StateVector {
    let mut ket: Option<StateVector> = None;
    for (q, b) in bases.iter().enumerate() {
        let (k0, k1) = basis_vectors(*b).unwrap();
        let k = if (choice >> (2 - q)) & 1 == 0 { k0 } else { k1 };
        ket = Some(match ket {
            None => k,
            Some(acc) => acc.tensor(&k).unwrap(),
        });
    }
    ket.unwrap()
}

/// Sequential-collapse probability of the joint outcome `choice`, measuring
/// qubits in `order`.
fn sequential_probability(state: &StateVector, bases: &[MeasurementBasis; 3], order: [usize; 3], choice: usize) -> f64 {
    let mut current = state.clone();
    let mut p = 1.0;
    for q in order {
        let branches = measure_single(&current, q, bases[q]).unwrap();
        let branch = &branches[(choice >> (2 - q)) & 1];
        p *= branch.probability;
        match &branch.post_state {
            Some(s) => current = s.clone(),
            None => return 0.0,
        }
    }
    p
}

const ORDERS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn joint_probabilities_sum_to_one(s in any_state(), b in [any_basis(), any_basis(), any_basis()]) {
        let total: f64 = joint_distribution(&s, &b).unwrap().iter().map(|j| j.probability).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn product_basis_reconstructs_state(s in any_state(), b in [any_basis(), any_basis(), any_basis()]) {
        let mut rebuilt = [c(0.0, 0.0); 8];
        for choice in 0..8 {
            let ket = product_ket(&b, choice);
            let overlap = ket.inner(&s);
            for (r, k) in rebuilt.iter_mut().zip(ket.amps()) {
                *r += overlap * k;
            }
        }
        for (r, a) in rebuilt.iter().zip(s.amps()) {
            prop_assert!((r - a).norm() < 1e-12);
        }
    }

    #[test]
    fn measurement_order_does_not_matter(s in any_state(), b in [any_basis(), any_basis(), any_basis()]) {
        let joint = joint_distribution(&s, &b).unwrap();
        for order in ORDERS {
            for (choice, j) in joint.iter().enumerate() {
                let p = sequential_probability(&s, &b, order, choice);
                prop_assert!((p - j.probability).abs() < 1e-12, "order {order:?} outcome {choice}");
            }
        }
    }

    #[test]
    fn pivot_choice_does_not_change_tangle(s in any_state()) {
        let taus: Vec<f64> = (0..3).map(|p| three_tangle_with_pivot(&s, p).unwrap().tau).collect();
        prop_assert!((taus[0] - taus[1]).abs() < 1e-9);
        prop_assert!((taus[0] - taus[2]).abs() < 1e-9);
    }

    #[test]
    fn local_unitaries_preserve_entanglement(
        s in any_state(),
        u in [any_unitary(), any_unitary(), any_unitary()],
    ) {
        let mut t = s.clone();
        for (q, u) in u.iter().enumerate() {
            t = t.apply_single(q, *u).unwrap();
        }
        prop_assert!((three_tangle(&s).unwrap().tau - three_tangle(&t).unwrap().tau).abs() < 1e-9);
        prop_assert!((concurrence_sum(&s).unwrap() - concurrence_sum(&t).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn w_class_pair_concurrence_is_twice_product(
        v in prop::collection::vec(0.0f64..1.0, 3).prop_filter("nonzero", |v| v.iter().sum::<f64>() > 1e-3),
        phases in prop::collection::vec(0.0f64..6.3, 3),
    ) {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let m: Vec<f64> = v.iter().map(|x| x / norm).collect();
        let p = WClassParams::new(
            Complex64::from_polar(m[0], phases[0]),
            Complex64::from_polar(m[1], phases[1]),
            Complex64::from_polar(m[2], phases[2]),
        ).unwrap();
        let s = w_class(p).unwrap();
        prop_assert!((pair_concurrence(&s, 0, 1).unwrap() - 2.0 * m[0] * m[1]).abs() < 1e-9);
        prop_assert!((pair_concurrence(&s, 1, 2).unwrap() - 2.0 * m[1] * m[2]).abs() < 1e-9);
        prop_assert!((pair_concurrence(&s, 2, 0).unwrap() - 2.0 * m[2] * m[0]).abs() < 1e-9);
        prop_assert!(three_tangle(&s).unwrap().tau.abs() < 1e-9);
    }
}

#[test]
fn lambda_bases_are_orthonormal() {
    for k in 0..100 {
        let lambda = -3.0 + 6.0 * k as f64 / 99.0;
        let (b0, b1) = basis_vectors(MeasurementBasis::Lambda(lambda)).unwrap();
        assert!((b0.inner(&b0).re - 1.0).abs() < 1e-15);
        assert!((b1.inner(&b1).re - 1.0).abs() < 1e-15);
        assert!(b0.inner(&b1).norm() < 1e-15);
        // b0 = sinλ|0> - cosλ|1>, b1 = cosλ|0> + sinλ|1>
        assert!((b0.amp(0).re - lambda.sin()).abs() < 1e-15);
        assert!((b0.amp(1).re + lambda.cos()).abs() < 1e-15);
        assert!((b1.amp(0).re - lambda.cos()).abs() < 1e-15);
    }
}
