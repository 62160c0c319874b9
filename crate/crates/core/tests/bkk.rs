use std::collections::BTreeSet;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use respose_core::bkk::{
    bezout_bound, cubic_support, gauge_support, match_support, mixed_volume, mixed_volume_brute_force, newton_polytope,
    random_cross_check, total_degree, verify_bounds, BkkError, BoundInputs, Exponent, NewtonPolytope, Support,
    QUADRATIC_DIM,
};
use respose_core::dixon::{constraint_polynomial, gauge_polynomial};
use respose_core::mpoly::MPoly;
use respose_core::ConstraintCoefficients;

fn poly(dim: usize, pts: &[&[i64]]) -> NewtonPolytope {
    newton_polytope(&Support::from_terms(dim, pts.iter().map(|p| p.to_vec()))).unwrap()
}

/// All exponents of total degree at most `d`.
fn dense(dim: usize, d: i64) -> NewtonPolytope {
    let mut pts = vec![vec![0i64; dim]];
    for _ in 0..d {
        let mut next = BTreeSet::new();
        for p in &pts {
            next.insert(p.clone());
            for i in 0..dim {
                let mut q = p.clone();
                q[i] += 1;
                next.insert(q);
            }
        }
        pts = next.into_iter().collect();
    }
    newton_polytope(&Support::from_terms(dim, pts)).unwrap()
}

fn random_polytope(rng: &mut ChaCha8Rng, dim: usize) -> NewtonPolytope {
    let n = rng.random_range(dim + 1..dim + 5);
    newton_polytope(&Support::from_terms(dim, (0..n).map(|_| (0..dim).map(|_| rng.random_range(0..3i64)).collect())))
        .unwrap()
}

/// Support of a numeric polynomial in `(d₁..d₄, q₂, q₃, q₄)`: the hidden
/// variable's exponent comes from the nonzero coefficient powers.
fn numeric_support(f: &MPoly) -> Support {
    let mut terms = BTreeSet::new();
    for (m, c) in f.terms() {
        let e = m.exponents();
        for (k, a) in c.coeffs().iter().enumerate() {
            if a.abs() > 1e-12 {
                terms.insert(vec![e[0] as i64, e[1] as i64, e[2] as i64, e[3] as i64, k as i64, e[4] as i64, e[5] as i64]);
            }
        }
    }
    Support::from_terms(QUADRATIC_DIM, terms)
}

#[test]
fn dense_systems_meet_the_bezout_bound() {
    for degrees in [[1, 1], [2, 3], [3, 3]] {
        let ps: Vec<_> = degrees.iter().map(|&d| dense(2, d)).collect();
        assert_eq!(mixed_volume(&ps).unwrap(), bezout_bound(&degrees.map(|d| d as u32)));
    }
    let ps = vec![dense(3, 1), dense(3, 2), dense(3, 2)];
    assert_eq!(mixed_volume(&ps).unwrap(), 4);
    assert_eq!(mixed_volume_brute_force(&ps).unwrap(), 4);
}

#[test]
fn mixed_volume_is_symmetric() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..20 {
        let ps: Vec<_> = (0..3).map(|_| random_polytope(&mut rng, 3)).collect();
        let base = mixed_volume(&ps).unwrap();
        for perm in [[1, 0, 2], [2, 1, 0], [1, 2, 0]] {
            let shuffled: Vec<_> = perm.iter().map(|&i| ps[i].clone()).collect();
            assert_eq!(mixed_volume(&shuffled).unwrap(), base);
        }
    }
}

#[test]
fn mixed_volume_is_monotone() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let ps: Vec<_> = (0..3).map(|_| random_polytope(&mut rng, 3)).collect();
        let base = mixed_volume(&ps).unwrap();
        let mut grown = ps.clone();
        let extra: Exponent = (0..3).map(|_| rng.random_range(0..4i64)).collect();
        grown[0] = newton_polytope(&ps[0].support.add(&Support::from_terms(3, [extra]))).unwrap();
        assert!(mixed_volume(&grown).unwrap() >= base);
    }
}

#[test]
fn grouped_and_brute_force_routes_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for dim in [2, 3, 4] {
        for _ in 0..10 {
            let ps: Vec<_> = (0..dim).map(|_| random_polytope(&mut rng, dim)).collect();
            assert_eq!(mixed_volume(&ps).unwrap(), mixed_volume_brute_force(&ps).unwrap(), "dim {dim}");
        }
    }
    let check = random_cross_check(40, 1);
    assert_eq!(check.agreed, check.trials, "{:?}", check.disagreements);
}

#[test]
fn translation_does_not_change_the_count() {
    let a = poly(2, &[&[0, 0], &[2, 0], &[0, 1]]);
    let b = poly(2, &[&[0, 0], &[1, 1], &[0, 2]]);
    let shifted = poly(2, &[&[3, 1], &[5, 1], &[3, 2]]);
    assert_eq!(mixed_volume(&[a.clone(), b.clone()]).unwrap(), mixed_volume(&[shifted, b]).unwrap());
}

#[test]
fn shape_errors() {
    let a = poly(2, &[&[0, 0], &[1, 0], &[0, 1]]);
    assert!(matches!(mixed_volume(std::slice::from_ref(&a)), Err(BkkError::Count { .. })));
    assert_eq!(newton_polytope(&Support::zero(2)).unwrap_err(), BkkError::Empty);
    let b = poly(3, &[&[0, 0, 0], &[1, 0, 0]]);
    assert!(mixed_volume(&[a, b]).is_err());
}

#[test]
fn structural_supports_match_the_numeric_polynomials() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut v = || Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
    let c = ConstraintCoefficients { p: v(), s: v(), b: v() };
    assert_eq!(numeric_support(&constraint_polynomial(&c)), match_support(true));
    let origin = ConstraintCoefficients { b: Vector3::zeros(), ..c };
    assert_eq!(numeric_support(&constraint_polynomial(&origin)), match_support(false));
    assert_eq!(numeric_support(&gauge_polynomial()), gauge_support());
}

#[test]
fn pose_system_counts() {
    assert_eq!(total_degree(&match_support(true)), 2);
    assert_eq!(total_degree(&gauge_support()), 2);
    assert_eq!(total_degree(&cubic_support()), 3);
    let report = verify_bounds(&BoundInputs::default());
    let computed: Vec<_> = report.rows.iter().map(|r| r.computed).collect();
    assert_eq!(computed, [729, 128, 160, 64, 40].map(Some));
    assert!(report.all_match());
}

#[test]
fn a_wrong_support_is_caught() {
    let mut inputs = BoundInputs::default();
    let mut terms: Vec<Exponent> = inputs.quadratic.terms().cloned().collect();
    terms.retain(|e| e.iter().sum::<i64>() < 2);
    inputs.quadratic = Support::from_terms(QUADRATIC_DIM, terms);
    let report = verify_bounds(&inputs);
    assert!(!report.all_match());
    assert!(report.rows.iter().any(|r| r.name == "bkk-quadratic" && !r.matches()));
}
