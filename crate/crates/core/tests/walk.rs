use std::collections::BTreeMap;
use std::f64::consts::PI;

use approx::assert_relative_eq;
use cavity_walk::gates::{fidelity, multi_controlled_z, on_qubit, CMatrix};
use cavity_walk::walk::*;
use nalgebra::SymmetricEigen;
use num_complex::Complex64;
use proptest::prelude::*;

fn tridiagonal(w: [f64; 4]) -> CMatrix {
    let mut m = CMatrix::zeros(5, 5);
    for (i, v) in w.iter().enumerate() {
        m[(i, i + 1)] = Complex64::new(*v, 0.0);
        m[(i + 1, i)] = Complex64::new(*v, 0.0);
    }
    m
}

fn sorted_eigs(m: &CMatrix) -> Vec<f64> {
    let mut e: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    e.sort_by(f64::total_cmp);
    e
}

#[test]
fn chain_closed_form_matches_numerics() {
    let w = [1.0, 2.0, 3.0, 0.5];
    let closed = chain_eigenfrequencies(w[0], w[1], w[2], w[3]);
    for (a, b) in closed.iter().zip(sorted_eigs(&tridiagonal(w))) {
        assert_relative_eq!(*a, b, epsilon = 1e-12);
    }
}

proptest! {
    #[test]
    fn chain_closed_form_random(a in -5.0..5.0f64, b in -5.0..5.0f64, d in -5.0..5.0f64, g in -5.0..5.0f64) {
        let closed = chain_eigenfrequencies(a, b, d, g);
        for (x, y) in closed.iter().zip(sorted_eigs(&tridiagonal([a, b, d, g]))) {
            prop_assert!((x - y).abs() < 1e-9 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn walk_unitary_is_unitary(vals in proptest::collection::vec(-3.0..3.0f64, 10), tau in 0.1..4.0f64) {
        let mut m = CMatrix::zeros(4, 4);
        let mut k = 0;
        for i in 0..4 {
            for j in i..4 {
                m[(i, j)] = Complex64::new(vals[k], 0.0);
                m[(j, i)] = Complex64::new(vals[k], 0.0);
                k += 1;
            }
        }
        let u = walk_unitary(&m, tau).unwrap();
        let err = (u.adjoint() * &u - CMatrix::identity(4, 4)).norm();
        prop_assert!(err < 1e-12);
    }

    #[test]
    fn balloon_transform_preserves_spectrum(v in proptest::collection::vec(-4.0..4.0f64, 5)) {
        // [000, e00, ee0, e0e, eee]
        let mut b = CMatrix::zeros(5, 5);
        let mut set = |i: usize, j: usize, w: f64| {
            b[(i, j)] = Complex64::new(w, 0.0);
            b[(j, i)] = Complex64::new(w, 0.0);
        };
        set(0, 1, v[0]);
        set(1, 2, v[1]);
        set(1, 3, v[2]);
        set(2, 4, v[3]);
        set(3, 4, v[4]);
        let (t, chain) = balloon_to_chain(&b).unwrap();
        prop_assert!((t.adjoint() * &t - CMatrix::identity(5, 5)).norm() < 1e-14);
        for (x, y) in sorted_eigs(&b).iter().zip(sorted_eigs(&chain)) {
            prop_assert!((x - y).abs() < 1e-10);
        }
        // with tied tier-ii amplitudes the chain is tridiagonal
        if (v[1] - v[2]).abs() < 1e-12 {
            prop_assert!(chain[(1, 4)].norm() < 1e-12);
        }
    }
}

#[test]
fn balloon_chain_couplings() {
    let d = design_ccz(1.0).unwrap();
    let t = d.table();
    let [s1, s2, s3, s2iii, s3iii] = ccz_symbols();
    let mut b = CMatrix::zeros(5, 5);
    let mut set = |i: usize, j: usize, w: f64| {
        b[(i, j)] = Complex64::new(w, 0.0);
        b[(j, i)] = Complex64::new(w, 0.0);
    };
    set(0, 1, t[&s1]);
    set(1, 2, t[&s2]);
    set(1, 3, t[&s3]);
    set(2, 4, t[&s3iii]);
    set(3, 4, t[&s2iii]);
    let (_, chain) = balloon_to_chain(&b).unwrap();
    assert_relative_eq!(chain[(0, 1)].re, PI, epsilon = 1e-12);
    assert_relative_eq!(chain[(1, 2)].re, 6f64.sqrt() * PI, epsilon = 1e-12);
    assert_relative_eq!(chain[(2, 3)].re, 3.0 * PI / 2f64.sqrt(), epsilon = 1e-12);
    assert_relative_eq!(chain[(3, 4)].re.abs(), 17f64.sqrt() * PI / 2f64.sqrt(), epsilon = 1e-12);
    let e = chain_eigenfrequencies(PI, 6f64.sqrt() * PI, 3.0 * PI / 2f64.sqrt(), 17f64.sqrt() * PI / 2f64.sqrt());
    assert_relative_eq!(e[3], 2.0 * PI, epsilon = 1e-12);
    assert_relative_eq!(e[4], 4.0 * PI, epsilon = 1e-12);
}

#[test]
fn ccz_design_is_a_ccz() {
    for tau in [1.0, 0.37, 12.5] {
        let d = design_ccz(tau).unwrap();
        let u = d.computational_unitary().unwrap();
        let mut expected = CMatrix::identity(8, 8);
        expected[(3, 3)] = Complex64::new(-1.0, 0.0);
        assert!((&u - &expected).norm() < 1e-10, "τ = {tau}");
        // relabeling QS0 turns it into the textbook gate
        let x = CMatrix::from_row_slice(2, 2, &[0.0.into(), 1.0.into(), 1.0.into(), 0.0.into()]);
        let xf = on_qubit(&x, d.x_frame[0], 3);
        assert!(fidelity(&multi_controlled_z(3), &(&xf * &u * &xf)) > 1.0 - 1e-12);
    }
}

#[test]
fn ccz_full_unitary_closes_every_component() {
    let d = design_ccz(1.0).unwrap();
    let u = d.unitary().unwrap();
    for (c, &a) in d.graph.anchors.iter().enumerate() {
        for &v in &d.graph.components[c] {
            if v != a {
                assert!(u[(v, a)].norm() < 1e-10);
            }
        }
    }
}

#[test]
fn balloon_solve_recovers_analytic_amplitudes() {
    let d = design_ccz(1.0).unwrap();
    let [s1, s2, s3, s2iii, s3iii] = ccz_symbols();
    let opts = SolveOptions {
        fixed: vec![(s1, PI), (s2, 3f64.sqrt() * PI), (s3, 3f64.sqrt() * PI)],
        indices: BTreeMap::from([(0, vec![2, 4])]),
        starts: 16,
        ..Default::default()
    };
    let sols = solve_return_conditions(&d.graph, 1.0, &[(0, 0.0)], &opts).unwrap();
    let hit = sols.iter().any(|s| {
        let t: BTreeMap<_, _> = s.amplitudes.iter().copied().collect();
        (t[&s2iii] - (3.0 + 17f64.sqrt()) * PI / 2.0).abs() < 1e-8 && (t[&s3iii] - (3.0 - 17f64.sqrt()) * PI / 2.0).abs() < 1e-8
    });
    assert!(hit, "{sols:?}");
}

#[test]
fn full_ccz_solve_yields_distinct_valid_designs() {
    let graph = build_walk_graph(&ccz_symbols(), 3, 0, 2).unwrap();
    let [_, s2, s3, ..] = ccz_symbols();
    let targets: Vec<(usize, f64)> = [(0b000, 0.0), (0b001, 0.0), (0b010, 0.0), (0b011, PI)]
        .iter()
        .map(|&(x, p)| (graph.component_of_state(x), p))
        .collect();
    let mut found = Vec::new();
    for balloon in [vec![2, 4], vec![4, 6]] {
        let opts = SolveOptions {
            ties: vec![(s2, s3)],
            indices: BTreeMap::from([(graph.component_of_state(0), balloon)]),
            max_index: 5,
            starts: 8,
            ..Default::default()
        };
        let sols = solve_return_conditions(&graph, 1.0, &targets, &opts).unwrap();
        for s in &sols {
            let design = WalkDesign {
                graph: graph.clone(),
                amplitudes: s.amplitudes.clone(),
                tau: 1.0,
                flipped_states: vec![3],
                x_frame: vec![0],
            };
            let u = design.computational_unitary().unwrap();
            let mut expected = CMatrix::identity(8, 8);
            expected[(3, 3)] = Complex64::new(-1.0, 0.0);
            assert!((&u - &expected).norm() < 1e-7);
        }
        found.push(sols[0].amplitudes.clone());
    }
    let differ = found[0].iter().zip(&found[1]).any(|(a, b)| (a.1.abs() - b.1.abs()).abs() > 1e-3);
    assert!(differ);
}

#[test]
fn unreachable_index_bound_reports_no_solution() {
    let graph = build_walk_graph(&[RabiSymbol::new(0, 1)], 1, 0, 2).unwrap();
    let err = solve_return_conditions(&graph, 1.0, &[(0, PI)], &SolveOptions { max_index: 0, ..Default::default() });
    assert!(matches!(err, Err(cavity_walk::Error::NoSolution { .. })));
}
