//! Solution-count bounds: Newton polytopes, mixed volumes and Bezout counts.
//!
//! Supports are generated structurally by expanding the quaternion formulas
//! over exponent sets, so they do not depend on numeric coefficients.

mod hull;

use std::collections::BTreeSet;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

pub use hull::{hull, Hull};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BkkError {
    #[error("point dimension does not match {expected}")]
    Dimension { expected: usize },
    #[error("expected {expected} polytopes for dimension {expected}, got {found}")]
    Count { expected: usize, found: usize },
    #[error("empty support")]
    Empty,
    #[error("integer overflow in exact volume arithmetic")]
    Overflow,
    #[error("mixed volume {value} is not an integer")]
    NonInteger { value: String },
}

/// Exponent vector of one monomial.
pub type Exponent = Vec<i64>;

/// A set of exponent vectors in a fixed number of variables. Addition is
/// union and multiplication is the Minkowski sum, so expanding a formula over
/// supports gives the support of the expanded polynomial with generic
/// coefficients.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Support {
    dim: usize,
    terms: BTreeSet<Exponent>,
}

impl Support {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            terms: BTreeSet::new(),
        }
    }

    pub fn one(dim: usize) -> Self {
        Self {
            dim,
            terms: BTreeSet::from([vec![0; dim]]),
        }
    }

    pub fn var(dim: usize, i: usize) -> Self {
        let mut e = vec![0; dim];
        e[i] = 1;
        Self {
            dim,
            terms: BTreeSet::from([e]),
        }
    }

    pub fn from_terms(dim: usize, terms: impl IntoIterator<Item = Exponent>) -> Self {
        Self {
            dim,
            terms: terms.into_iter().collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = &Exponent> {
        self.terms.iter()
    }

    pub fn add(&self, other: &Support) -> Support {
        Support {
            dim: self.dim,
            terms: self.terms.union(&other.terms).cloned().collect(),
        }
    }

    pub fn mul(&self, other: &Support) -> Support {
        let mut terms = BTreeSet::new();
        for a in &self.terms {
            for b in &other.terms {
                terms.insert(a.iter().zip(b).map(|(x, y)| x + y).collect());
            }
        }
        Support { dim: self.dim, terms }
    }
}

/// Quaternion whose components are supports.
#[derive(Debug, Clone)]
struct SupportQuat([Support; 4]);

impl SupportQuat {
    fn mul(&self, other: &SupportQuat) -> SupportQuat {
        // Index pairs feeding each Hamilton product component; signs do not
        // matter for supports.
        const PAIRS: [[(usize, usize); 4]; 4] = [
            [(0, 0), (1, 1), (2, 2), (3, 3)],
            [(0, 1), (1, 0), (2, 3), (3, 2)],
            [(0, 2), (2, 0), (3, 1), (1, 3)],
            [(0, 3), (3, 0), (1, 2), (2, 1)],
        ];
        let dim = self.0[0].dim;
        SupportQuat(PAIRS.map(|pairs| {
            pairs
                .iter()
                .fold(Support::zero(dim), |acc, &(i, j)| acc.add(&self.0[i].mul(&other.0[j])))
        }))
    }

    /// Vector part collapsed by a generic linear functional.
    fn dot_vec(&self) -> Support {
        self.0[1].add(&self.0[2]).add(&self.0[3])
    }
}

/// `q = (1, q₂, q₃, q₄)` with the listed variable indices.
fn unit_q(dim: usize, vars: [usize; 3]) -> SupportQuat {
    SupportQuat([
        Support::one(dim),
        Support::var(dim, vars[0]),
        Support::var(dim, vars[1]),
        Support::var(dim, vars[2]),
    ])
}

/// A generic pure quaternion with constant components.
fn pure_constant(dim: usize) -> SupportQuat {
    SupportQuat([Support::zero(dim), Support::one(dim), Support::one(dim), Support::one(dim)])
}

/// Dimension of the quadratic system in `(d₁, d₂, d₃, d₄, q₂, q₃, q₄)`.
pub const QUADRATIC_DIM: usize = 7;
/// Dimension of the cubic system in `(q₂, q₃, q₄, t₁, t₂, t₃)`.
pub const CUBIC_DIM: usize = 6;

/// Support of one match polynomial `sᵀ vec(d p q*) + bᵀ vec(q p q*)`, with
/// the `b` part dropped when `with_b` is false (a match against a camera
/// centered at the origin).
pub fn match_support(with_b: bool) -> Support {
    let dim = QUADRATIC_DIM;
    let q = unit_q(dim, [4, 5, 6]);
    let q_conj = q.clone();
    let d = SupportQuat(std::array::from_fn(|i| Support::var(dim, i)));
    let p = pure_constant(dim);
    let s_part = d.mul(&p).mul(&q_conj).dot_vec();
    if with_b {
        s_part.add(&q.mul(&p).mul(&q_conj).dot_vec())
    } else {
        s_part
    }
}

/// Support of `dᵀ q`.
pub fn gauge_support() -> Support {
    let dim = QUADRATIC_DIM;
    let q = unit_q(dim, [4, 5, 6]);
    (0..4).fold(Support::zero(dim), |acc, i| acc.add(&Support::var(dim, i).mul(&q.0[i])))
}

/// Support of the cubic match polynomial `pᵀ vec(q* (s×t + b) q)`.
pub fn cubic_support() -> Support {
    let dim = CUBIC_DIM;
    let q = unit_q(dim, [0, 1, 2]);
    let t = |i: usize| Support::var(dim, 3 + i);
    let mut v = [Support::zero(dim), Support::zero(dim), Support::zero(dim), Support::zero(dim)];
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        v[i + 1] = t(j).add(&t(k)).add(&Support::one(dim));
    }
    q.mul(&SupportQuat(v)).mul(&q).dot_vec()
}

/// Newton polytope of a polynomial, kept as its support.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NewtonPolytope {
    pub support: Support,
}

impl NewtonPolytope {
    pub fn dim(&self) -> usize {
        self.support.dim
    }

    /// Support points on the hull boundary. Interior points never affect
    /// volumes, so dropping them shrinks Minkowski sums.
    fn vertices(&self) -> Result<Vec<Exponent>, BkkError> {
        let pts: Vec<Exponent> = self.support.terms().cloned().collect();
        Ok(hull(&pts, self.dim())?.boundary)
    }
}

pub fn newton_polytope(support: &Support) -> Result<NewtonPolytope, BkkError> {
    if support.is_empty() {
        return Err(BkkError::Empty);
    }
    Ok(NewtonPolytope {
        support: support.clone(),
    })
}

/// `d!` times the volume of `Σ kᵢ Pᵢ`.
fn scaled_sum_volume(parts: &[(&[Exponent], i64)], dim: usize) -> Result<i128, BkkError> {
    let mut points: Vec<Exponent> = vec![vec![0; dim]];
    for &(verts, k) in parts {
        if k == 0 {
            continue;
        }
        let mut next = BTreeSet::new();
        for a in &points {
            for v in verts {
                next.insert(a.iter().zip(v).map(|(x, y)| x + k * y).collect::<Exponent>());
            }
        }
        // Prune to the boundary as we go; sums of interior points add nothing.
        let next: Vec<Exponent> = next.into_iter().collect();
        points = hull(&next, dim)?.boundary;
    }
    Ok(hull(&points, dim)?.normalized_volume)
}

fn factorial(n: usize) -> BigInt {
    (1..=n).fold(BigInt::one(), |acc, k| acc * BigInt::from(k))
}

fn binomial(n: usize, k: usize) -> BigInt {
    factorial(n) / (factorial(k) * factorial(n - k))
}

fn to_integer(value: BigRational) -> Result<u64, BkkError> {
    if !value.is_integer() || value.is_negative() {
        return Err(BkkError::NonInteger {
            value: value.to_string(),
        });
    }
    value.to_integer().to_u64().ok_or(BkkError::Overflow)
}

/// Distinct polytopes with their multiplicities, in first-seen order.
fn group(polytopes: &[NewtonPolytope]) -> Vec<(&NewtonPolytope, usize)> {
    let mut groups: Vec<(&NewtonPolytope, usize)> = Vec::new();
    for p in polytopes {
        match groups.iter_mut().find(|(g, _)| *g == p) {
            Some((_, n)) => *n += 1,
            None => groups.push((p, 1)),
        }
    }
    groups
}

fn check_shape(polytopes: &[NewtonPolytope]) -> Result<usize, BkkError> {
    let m = polytopes.len();
    if polytopes.iter().any(|p| p.dim() != m) {
        return Err(BkkError::Count {
            expected: polytopes.first().map_or(0, |p| p.dim()),
            found: m,
        });
    }
    if polytopes.iter().any(|p| p.support.is_empty()) {
        return Err(BkkError::Empty);
    }
    Ok(m)
}

/// Mixed volume normalized so that `m` copies of `P` give `m!·Vol(P)`.
///
/// With at most two distinct polytopes `P` (s copies) and `Q`, the volume
/// `Vol(λP + Q)` is a degree-m polynomial in `λ`; it is sampled at `m + 1`
/// integers and interpolated exactly, and the mixed volume is read off the
/// `λˢ` coefficient. With more distinct polytopes the inclusion-exclusion
/// formula is evaluated with copies grouped.
pub fn mixed_volume(polytopes: &[NewtonPolytope]) -> Result<u64, BkkError> {
    let m = check_shape(polytopes)?;
    let groups = group(polytopes);
    let verts: Vec<Vec<Exponent>> = groups.iter().map(|(p, _)| p.vertices()).collect::<Result<_, _>>()?;
    match groups.len() {
        1 => Ok(scaled_sum_volume(&[(&verts[0], 1)], m)? as u64),
        2 => {
            let s = groups[0].1;
            let samples: Vec<BigRational> = (0..=m)
                .map(|l| {
                    scaled_sum_volume(&[(&verts[0], l as i64), (&verts[1], 1)], m)
                        .map(|v| BigRational::from_integer(BigInt::from(v)))
                })
                .collect::<Result<_, _>>()?;
            let coeffs = interpolate(&samples);
            // coeffs are m!·C(m,k)·V(Pᵏ, Q^{m−k}); the BKK number is m!·V.
            to_integer(coeffs[s].clone() / BigRational::from_integer(binomial(m, s)))
        }
        _ => grouped_inclusion_exclusion(&groups, &verts, m),
    }
}

/// Coefficients of the polynomial through `(k, samples[k])`, `k = 0..n`,
/// by Newton forward differences.
fn interpolate(samples: &[BigRational]) -> Vec<BigRational> {
    let n = samples.len();
    let mut diffs = samples.to_vec();
    let mut newton = Vec::with_capacity(n);
    for level in 0..n {
        newton.push(diffs[0].clone() / BigRational::from_integer(factorial(level)));
        diffs = diffs.windows(2).map(|w| w[1].clone() - w[0].clone()).collect();
    }
    // Expand Σ cₖ λ(λ−1)…(λ−k+1) into monomial coefficients.
    let mut coeffs = vec![BigRational::zero(); n];
    let mut basis = vec![BigRational::one()];
    for (k, c) in newton.iter().enumerate() {
        for (i, b) in basis.iter().enumerate() {
            coeffs[i] += c.clone() * b.clone();
        }
        let mut next = vec![BigRational::zero(); basis.len() + 1];
        let shift = BigRational::from_integer(BigInt::from(k));
        for (i, b) in basis.iter().enumerate() {
            next[i + 1] += b.clone();
            next[i] -= b.clone() * shift.clone();
        }
        basis = next;
    }
    coeffs
}

fn grouped_inclusion_exclusion(
    groups: &[(&NewtonPolytope, usize)],
    verts: &[Vec<Exponent>],
    m: usize,
) -> Result<u64, BkkError> {
    let mut total = BigInt::zero();
    let mut counts = vec![0usize; groups.len()];
    loop {
        let taken: usize = counts.iter().sum();
        if taken > 0 {
            let parts: Vec<(&[Exponent], i64)> = verts.iter().zip(&counts).map(|(v, &k)| (v.as_slice(), k as i64)).collect();
            let vol = BigInt::from(scaled_sum_volume(&parts, m)?);
            let mult = groups.iter().zip(&counts).fold(BigInt::one(), |acc, ((_, n), &k)| acc * binomial(*n, k));
            let term = mult * vol;
            if (m - taken) % 2 == 0 {
                total += term;
            } else {
                total -= term;
            }
        }
        // Odometer over 0..=nᵢ.
        let mut i = 0;
        loop {
            if i == counts.len() {
                return to_integer(BigRational::new(total, factorial(m)));
            }
            counts[i] += 1;
            if counts[i] <= groups[i].1 {
                break;
            }
            counts[i] = 0;
            i += 1;
        }
    }
}

/// Mixed volume by inclusion-exclusion over every subset, without grouping
/// copies. Exponential in `m`; meant as a cross-check in low dimension.
pub fn mixed_volume_brute_force(polytopes: &[NewtonPolytope]) -> Result<u64, BkkError> {
    let m = check_shape(polytopes)?;
    let supports: Vec<Vec<Exponent>> = polytopes.iter().map(|p| p.support.terms().cloned().collect()).collect();
    let mut total = BigInt::zero();
    for mask in 1u32..(1 << m) {
        let parts: Vec<(&[Exponent], i64)> = (0..m)
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| (supports[i].as_slice(), 1))
            .collect();
        let vol = BigInt::from(scaled_sum_volume(&parts, m)?);
        if (m - parts.len()) % 2 == 0 {
            total += vol;
        } else {
            total -= vol;
        }
    }
    to_integer(BigRational::new(total, factorial(m)))
}

/// Product of the total degrees.
pub fn bezout_bound(degrees: &[u32]) -> u64 {
    degrees.iter().map(|&d| d as u64).product()
}

#[derive(Debug, Clone, Serialize)]
pub struct CrossCheck {
    pub trials: usize,
    pub agreed: usize,
    pub disagreements: Vec<String>,
}

/// Random lattice polytopes in dimension 2 and 3, each system built from two
/// distinct supports: [`mixed_volume`] against [`mixed_volume_brute_force`].
pub fn random_cross_check(trials: usize, seed: u64) -> CrossCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agreed = 0;
    let mut disagreements = Vec::new();
    for trial in 0..trials {
        let dim = 2 + trial % 2;
        let random_support = |rng: &mut ChaCha8Rng| {
            let n = rng.random_range(dim + 1..dim + 6);
            Support::from_terms(dim, (0..n).map(|_| (0..dim).map(|_| rng.random_range(0..4i64)).collect()))
        };
        let p = random_support(&mut rng);
        let q = random_support(&mut rng);
        let mut polys = vec![NewtonPolytope { support: p }];
        polys.extend((1..dim).map(|_| NewtonPolytope { support: q.clone() }));
        match (mixed_volume(&polys), mixed_volume_brute_force(&polys)) {
            (Ok(a), Ok(b)) if a == b => agreed += 1,
            (a, b) => disagreements.push(format!("trial {trial} (dim {dim}): {a:?} vs {b:?}")),
        }
    }
    CrossCheck {
        trials,
        agreed,
        disagreements,
    }
}

/// The supports entering the bound table. Kept as data so a caller can
/// substitute a wrong one and watch the check fail.
#[derive(Debug, Clone)]
pub struct BoundInputs {
    pub cubic: Support,
    pub quadratic: Support,
    pub gauge: Support,
    pub quadratic_origin: Support,
}

impl Default for BoundInputs {
    fn default() -> Self {
        Self {
            cubic: cubic_support(),
            quadratic: match_support(true),
            gauge: gauge_support(),
            quadratic_origin: match_support(false),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundRow {
    pub name: &'static str,
    pub kind: &'static str,
    pub computed: Option<u64>,
    pub expected: u64,
    pub error: Option<String>,
}

impl BoundRow {
    pub fn matches(&self) -> bool {
        self.computed == Some(self.expected)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub rows: Vec<BoundRow>,
}

impl BoundReport {
    pub fn all_match(&self) -> bool {
        self.rows.iter().all(BoundRow::matches)
    }
}

fn polytopes(list: &[(&Support, usize)]) -> Result<Vec<NewtonPolytope>, BkkError> {
    let mut out = Vec::new();
    for &(s, n) in list {
        let p = newton_polytope(s)?;
        out.extend(std::iter::repeat_n(p, n));
    }
    Ok(out)
}

fn degree(s: &Support) -> u32 {
    total_degree(s).max(0) as u32
}

/// Bezout and BKK counts for the pose systems.
pub fn verify_bounds(inputs: &BoundInputs) -> BoundReport {
    let row = |name, kind, expected, computed: Result<u64, BkkError>| BoundRow {
        name,
        kind,
        expected,
        computed: computed.as_ref().ok().copied(),
        error: computed.err().map(|e| e.to_string()),
    };
    let rows = vec![
        row("bezout-cubic", "bezout", 729, Ok(bezout_bound(&[degree(&inputs.cubic); 6]))),
        row(
            "bezout-quadratic",
            "bezout",
            128,
            Ok(bezout_bound(&[[degree(&inputs.quadratic); 6].as_slice(), &[degree(&inputs.gauge)]].concat())),
        ),
        row("bkk-cubic", "mixed-volume", 160, polytopes(&[(&inputs.cubic, 6)]).and_then(|p| mixed_volume(&p))),
        row(
            "bkk-quadratic",
            "mixed-volume",
            64,
            polytopes(&[(&inputs.quadratic, 6), (&inputs.gauge, 1)]).and_then(|p| mixed_volume(&p)),
        ),
        row(
            "bkk-4+2",
            "mixed-volume",
            40,
            polytopes(&[(&inputs.quadratic_origin, 4), (&inputs.quadratic, 2), (&inputs.gauge, 1)])
                .and_then(|p| mixed_volume(&p)),
        ),
    ];
    BoundReport { rows }
}

/// Degree of every exponent vector in a support, for Bezout counts.
pub fn total_degree(support: &Support) -> i64 {
    support.terms().map(|e| e.iter().sum::<i64>()).max().unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn supports_have_expected_sizes() {
        assert_eq!(match_support(true).len(), 26);
        assert_eq!(match_support(false).len(), 16);
        assert_eq!(gauge_support().len(), 4);
        assert_eq!(cubic_support().len(), 40);
    }

    #[test]
    fn unit_simplices() {
        let dim = 3;
        let s = Support::from_terms(dim, [vec![0, 0, 0], vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]]);
        let p = newton_polytope(&s).unwrap();
        let ps = vec![p.clone(), p.clone(), p];
        assert_eq!(mixed_volume(&ps).unwrap(), 1);
        assert_eq!(mixed_volume_brute_force(&ps).unwrap(), 1);
    }

    #[test]
    fn interpolation_recovers_cubic() {
        let f = |x: i64| 2 * x * x * x - x + 5;
        let samples: Vec<BigRational> = (0..4).map(|x| BigRational::from_integer(BigInt::from(f(x)))).collect();
        let c = interpolate(&samples);
        let want = [5, -1, 0, 2];
        for (a, b) in c.iter().zip(want) {
            assert_eq!(*a, BigRational::from_integer(BigInt::from(b)));
        }
    }
}
