//! Sparse polynomials in the twelve elimination variables
//! `x = (d₁, d₂, d₃, d₄, q₃, q₄)` and their duplicates `y`, with coefficients
//! that are dense polynomials in the hidden variable `q₂`.

use std::cmp::Ordering;
use std::fmt;

use num_complex::Complex64;
use rustc_hash::FxHashMap;

/// Number of elimination variables (six `x` followed by six `y`).
pub const NUM_VARS: usize = 12;
/// Number of original (`x`) variables; `y` variable `i` has index `i + NUM_X_VARS`.
pub const NUM_X_VARS: usize = 6;
/// Coefficient slots per term; hidden-variable degree is at most `HIDDEN_CAPACITY - 1`.
pub const HIDDEN_CAPACITY: usize = 9;
/// Relative magnitude below which a term is treated as floating-point dust.
pub const DROP_TOLERANCE: f64 = 1e-13;

const BITS: u32 = 5;
const FIELD: u64 = (1 << BITS) - 1;

/// Exponent vector over the twelve variables, packed five bits per variable
/// with variable 0 in the most significant field.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Monomial(u64);

impl Monomial {
    pub const ONE: Monomial = Monomial(0);
    /// Largest exponent representable per variable.
    pub const MAX_EXPONENT: u32 = FIELD as u32;

    #[inline]
    fn shift(var: usize) -> u32 {
        (NUM_VARS - 1 - var) as u32 * BITS
    }

    pub fn var(var: usize) -> Self {
        Self::ONE.with_exponent(var, 1)
    }

    pub fn from_exponents(exps: &[u32; NUM_VARS]) -> Self {
        exps.iter()
            .enumerate()
            .fold(Self::ONE, |m, (i, &e)| m.with_exponent(i, e))
    }

    #[inline]
    pub fn exponent(self, var: usize) -> u32 {
        ((self.0 >> Self::shift(var)) & FIELD) as u32
    }

    pub fn exponents(self) -> [u32; NUM_VARS] {
        std::array::from_fn(|i| self.exponent(i))
    }

    pub fn with_exponent(self, var: usize, e: u32) -> Self {
        assert!(var < NUM_VARS, "variable index {var} out of range");
        assert!(e <= Self::MAX_EXPONENT, "exponent {e} exceeds {}", Self::MAX_EXPONENT);
        let s = Self::shift(var);
        Monomial((self.0 & !(FIELD << s)) | ((e as u64) << s))
    }

    pub fn total_degree(self) -> u32 {
        (0..NUM_VARS).map(|i| self.exponent(i)).sum()
    }

    #[inline]
    #[allow(clippy::should_implement_trait)]
    pub fn mul(self, other: Monomial) -> Monomial {
        debug_assert!(
            (0..NUM_VARS).all(|i| self.exponent(i) + other.exponent(i) <= Self::MAX_EXPONENT),
            "monomial exponent overflow"
        );
        Monomial(self.0 + other.0)
    }

    /// Part of the monomial in the `x` variables.
    pub fn x_part(self) -> Monomial {
        Monomial(self.0 & !((1u64 << (NUM_X_VARS as u32 * BITS)) - 1))
    }

    /// Part of the monomial in the `y` variables.
    pub fn y_part(self) -> Monomial {
        Monomial(self.0 & ((1u64 << (NUM_X_VARS as u32 * BITS)) - 1))
    }

    /// Graded lexicographic order with `x₁ > … > x₆ > y₁ > … > y₆`.
    pub fn grlex_cmp(&self, other: &Monomial) -> Ordering {
        self.total_degree()
            .cmp(&other.total_degree())
            .then(self.0.cmp(&other.0))
    }

    pub fn eval(self, point: &[f64; NUM_VARS]) -> f64 {
        (0..NUM_VARS)
            .map(|i| point[i].powi(self.exponent(i) as i32))
            .product()
    }
}

impl fmt::Debug for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const NAMES: [&str; NUM_VARS] = [
            "x1", "x2", "x3", "x4", "x5", "x6", "y1", "y2", "y3", "y4", "y5", "y6",
        ];
        if *self == Self::ONE {
            return f.write_str("1");
        }
        let mut first = true;
        for (i, name) in NAMES.iter().enumerate() {
            let e = self.exponent(i);
            if e > 0 {
                if !first {
                    f.write_str("*")?;
                }
                first = false;
                if e == 1 {
                    write!(f, "{name}")?;
                } else {
                    write!(f, "{name}^{e}")?;
                }
            }
        }
        Ok(())
    }
}

/// Dense univariate polynomial in the hidden variable, lowest power first.
#[derive(Clone, Copy, PartialEq)]
pub struct HiddenCoeff {
    c: [f64; HIDDEN_CAPACITY],
    len: u8,
}

impl Default for HiddenCoeff {
    fn default() -> Self {
        Self::zero()
    }
}

impl fmt::Debug for HiddenCoeff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.coeffs()).finish()
    }
}

impl HiddenCoeff {
    pub const fn zero() -> Self {
        Self {
            c: [0.0; HIDDEN_CAPACITY],
            len: 0,
        }
    }

    pub fn constant(v: f64) -> Self {
        Self::from_coeffs(&[v])
    }

    /// # Panics
    /// If the degree exceeds `HIDDEN_CAPACITY - 1`.
    pub fn from_coeffs(coeffs: &[f64]) -> Self {
        assert!(
            coeffs.len() <= HIDDEN_CAPACITY,
            "hidden-variable degree {} exceeds capacity",
            coeffs.len().saturating_sub(1)
        );
        let mut h = Self::zero();
        h.c[..coeffs.len()].copy_from_slice(coeffs);
        h.len = coeffs.len() as u8;
        h.trim();
        h
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.c[..self.len as usize]
    }

    /// Coefficient of `q₂^k` (zero beyond the stored degree).
    pub fn coeff(&self, k: usize) -> f64 {
        if k < self.len as usize {
            self.c[k]
        } else {
            0.0
        }
    }

    pub fn degree(&self) -> Option<usize> {
        (self.len as usize).checked_sub(1)
    }

    pub fn is_zero(&self) -> bool {
        self.len == 0
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs().iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn trim(&mut self) {
        while self.len > 0 && self.c[self.len as usize - 1] == 0.0 {
            self.len -= 1;
        }
    }

    pub fn eval(&self, q2: f64) -> f64 {
        self.coeffs().iter().rev().fold(0.0, |acc, &c| acc * q2 + c)
    }

    pub fn eval_complex(&self, q2: Complex64) -> Complex64 {
        self.coeffs()
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * q2 + c)
    }

    pub fn scale(&self, k: f64) -> Self {
        let mut out = *self;
        out.c.iter_mut().for_each(|v| *v *= k);
        out.trim();
        out
    }

    /// `self += k · other`.
    pub fn add_scaled(&mut self, other: &HiddenCoeff, k: f64) {
        for i in 0..other.len as usize {
            self.c[i] += k * other.c[i];
        }
        self.len = self.len.max(other.len);
        self.trim();
    }

    /// `self += sign · a · b` without trimming; callers trim once at the end.
    #[inline]
    fn mul_add_untrimmed(&mut self, a: &HiddenCoeff, b: &HiddenCoeff, sign: f64) {
        let (la, lb) = (a.len as usize, b.len as usize);
        if la == 0 || lb == 0 {
            return;
        }
        assert!(
            la + lb - 1 <= HIDDEN_CAPACITY,
            "hidden-variable degree {} exceeds capacity",
            la + lb - 2
        );
        for i in 0..la {
            let ai = sign * a.c[i];
            for j in 0..lb {
                self.c[i + j] += ai * b.c[j];
            }
        }
        self.len = self.len.max((la + lb - 1) as u8);
    }

    pub fn mul(&self, other: &HiddenCoeff) -> HiddenCoeff {
        let mut out = Self::zero();
        out.mul_add_untrimmed(self, other, 1.0);
        out.trim();
        out
    }
}

/// Sparse polynomial: a map from [`Monomial`] to [`HiddenCoeff`], stored
/// sorted by monomial with no zero terms.
#[derive(Clone, PartialEq, Default)]
pub struct MPoly {
    terms: Vec<(Monomial, HiddenCoeff)>,
}

impl fmt::Debug for MPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map().entries(self.terms.iter().map(|(m, c)| (m, c))).finish()
    }
}

impl MPoly {
    pub fn zero() -> Self {
        Self { terms: Vec::new() }
    }

    pub fn one() -> Self {
        Self::constant(1.0)
    }

    pub fn constant(v: f64) -> Self {
        Self::term(Monomial::ONE, HiddenCoeff::constant(v))
    }

    pub fn variable(var: usize) -> Self {
        Self::term(Monomial::var(var), HiddenCoeff::constant(1.0))
    }

    pub fn term(m: Monomial, c: HiddenCoeff) -> Self {
        Self::from_terms([(m, c)])
    }

    /// Collects terms, summing duplicates and dropping dust.
    pub fn from_terms(terms: impl IntoIterator<Item = (Monomial, HiddenCoeff)>) -> Self {
        let mut acc: FxHashMap<Monomial, HiddenCoeff> = FxHashMap::default();
        for (m, c) in terms {
            acc.entry(m).or_default().add_scaled(&c, 1.0);
        }
        Self::from_accumulator(acc)
    }

    fn from_accumulator(acc: FxHashMap<Monomial, HiddenCoeff>) -> Self {
        let mut terms: Vec<_> = acc
            .into_iter()
            .map(|(m, mut c)| {
                c.trim();
                (m, c)
            })
            .collect();
        terms.sort_unstable_by_key(|t| t.0);
        let mut p = Self { terms };
        p.prune();
        p
    }

    /// Drops terms whose largest coefficient is below `DROP_TOLERANCE` times
    /// the largest coefficient of the polynomial.
    fn prune(&mut self) {
        let max = self.max_abs_coeff();
        let cut = DROP_TOLERANCE * max;
        self.terms.retain(|(_, c)| !c.is_zero() && c.max_abs() >= cut);
    }

    pub fn terms(&self) -> &[(Monomial, HiddenCoeff)] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, m: Monomial) -> Option<&HiddenCoeff> {
        self.terms
            .binary_search_by_key(&m, |t| t.0)
            .ok()
            .map(|i| &self.terms[i].1)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.iter().fold(0.0, |m, (_, c)| m.max(c.max_abs()))
    }

    /// Highest power of the hidden variable appearing in any term.
    pub fn hidden_degree(&self) -> Option<usize> {
        self.terms.iter().filter_map(|(_, c)| c.degree()).max()
    }

    /// Highest exponent of `var` appearing in any term.
    pub fn degree_in(&self, var: usize) -> u32 {
        self.terms.iter().map(|(m, _)| m.exponent(var)).max().unwrap_or(0)
    }

    pub fn scale(&self, k: f64) -> Self {
        Self::from_terms(self.terms.iter().map(|(m, c)| (*m, c.scale(k))))
    }

    pub fn neg(&self) -> Self {
        self.scale(-1.0)
    }

    pub fn add(&self, other: &MPoly) -> MPoly {
        let mut out = Vec::with_capacity(self.terms.len() + other.terms.len());
        let (mut i, mut j) = (0, 0);
        while i < self.terms.len() || j < other.terms.len() {
            let ord = match (self.terms.get(i), other.terms.get(j)) {
                (Some(a), Some(b)) => a.0.cmp(&b.0),
                (Some(_), None) => Ordering::Less,
                _ => Ordering::Greater,
            };
            match ord {
                Ordering::Less => {
                    out.push(self.terms[i]);
                    i += 1;
                }
                Ordering::Greater => {
                    out.push(other.terms[j]);
                    j += 1;
                }
                Ordering::Equal => {
                    let mut c = self.terms[i].1;
                    c.add_scaled(&other.terms[j].1, 1.0);
                    out.push((self.terms[i].0, c));
                    i += 1;
                    j += 1;
                }
            }
        }
        let mut p = MPoly { terms: out };
        p.prune();
        p
    }

    pub fn sub(&self, other: &MPoly) -> MPoly {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &MPoly) -> MPoly {
        let mut acc = FxHashMap::default();
        acc.reserve(self.len() * other.len());
        accumulate_product(&mut acc, self, other, 1.0);
        Self::from_accumulator(acc)
    }

    /// Evaluates at `point` (twelve values, `x` then `y`) and hidden value `q2`.
    pub fn eval(&self, point: &[f64; NUM_VARS], q2: f64) -> f64 {
        self.terms.iter().map(|(m, c)| m.eval(point) * c.eval(q2)).sum()
    }

    /// Replaces `xᵢ` by `yᵢ`.
    pub fn substitute_x_with_y(&self, i: usize) -> MPoly {
        assert!(i < NUM_X_VARS);
        Self::from_terms(self.terms.iter().map(|(m, c)| {
            let (a, b) = (m.exponent(i), m.exponent(i + NUM_X_VARS));
            (m.with_exponent(i, 0).with_exponent(i + NUM_X_VARS, a + b), *c)
        }))
    }

    /// `(f − f|ₓᵢ→ᵧᵢ) / (xᵢ − yᵢ)`, computed term by term from
    /// `xᵢᵃ − yᵢᵃ = (xᵢ − yᵢ) Σₖ xᵢᵏ yᵢᵃ⁻¹⁻ᵏ`; the division is always exact.
    pub fn divided_difference(&self, i: usize) -> MPoly {
        assert!(i < NUM_X_VARS);
        let yi = i + NUM_X_VARS;
        let mut out = Vec::new();
        for (m, c) in &self.terms {
            let (a, b) = (m.exponent(i), m.exponent(yi));
            let rest = m.with_exponent(i, 0).with_exponent(yi, 0);
            for k in 0..a {
                out.push((rest.with_exponent(i, k).with_exponent(yi, b + a - 1 - k), *c));
            }
        }
        Self::from_terms(out)
    }
}

fn accumulate_product(acc: &mut FxHashMap<Monomial, HiddenCoeff>, a: &MPoly, b: &MPoly, sign: f64) {
    for (ma, ca) in &a.terms {
        for (mb, cb) in &b.terms {
            acc.entry(ma.mul(*mb))
                .or_default()
                .mul_add_untrimmed(ca, cb, sign);
        }
    }
}

/// Determinant of a square grid of polynomials by Laplace expansion along
/// the top row, memoizing the minors of the trailing rows over column subsets.
///
/// # Panics
/// If the grid is not square or larger than 16×16.
pub fn det_memoized_laplace(grid: &[Vec<MPoly>]) -> MPoly {
    let m = grid.len();
    assert!(m <= 16, "grid too large for subset memoization");
    assert!(grid.iter().all(|row| row.len() == m), "grid must be square");
    if m == 0 {
        return MPoly::one();
    }
    let mut minors: Vec<Option<MPoly>> = vec![None; 1 << m];
    minors[0] = Some(MPoly::one());
    for k in 1..=m {
        let row = &grid[m - k];
        for mask in 1usize..(1 << m) {
            if mask.count_ones() as usize != k {
                continue;
            }
            let mut acc = FxHashMap::default();
            for (pos, col) in (0..m).filter(|c| mask & (1 << c) != 0).enumerate() {
                let entry = &row[col];
                let minor = minors[mask & !(1 << col)].as_ref().expect("minor computed");
                if entry.is_zero() || minor.is_zero() {
                    continue;
                }
                let sign = if pos % 2 == 0 { 1.0 } else { -1.0 };
                accumulate_product(&mut acc, entry, minor, sign);
            }
            minors[mask] = Some(MPoly::from_accumulator(acc));
        }
        // Minors of size k-1 are no longer needed.
        for (mask, slot) in minors.iter_mut().enumerate() {
            if mask.count_ones() as usize == k - 1 {
                *slot = None;
            }
        }
    }
    minors.pop().flatten().expect("full determinant")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(v: f64) -> HiddenCoeff {
        HiddenCoeff::constant(v)
    }

    fn x(i: usize) -> MPoly {
        MPoly::variable(i)
    }

    fn y(i: usize) -> MPoly {
        MPoly::variable(i + NUM_X_VARS)
    }

    #[test]
    fn add_zero_and_inverse() {
        let a = x(0).mul(&y(2)).add(&MPoly::constant(3.0));
        assert_eq!(a.add(&MPoly::zero()), a);
        assert!(a.add(&a.neg()).is_zero());
    }

    #[test]
    fn mul_examples() {
        let a = x(0).mul(&y(2)).add(&MPoly::constant(3.0));
        assert_eq!(a.mul(&MPoly::one()), a);
        let lhs = x(0).sub(&y(0)).mul(&x(0).add(&y(0)));
        let rhs = x(0).mul(&x(0)).sub(&y(0).mul(&y(0)));
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn divided_difference_examples() {
        assert_eq!(x(3).mul(&x(3)).divided_difference(3), x(3).add(&y(3)));
        let constant_in_x3 = x(1).mul(&y(4)).add(&MPoly::constant(2.0));
        assert!(constant_in_x3.divided_difference(3).is_zero());
    }

    #[test]
    fn eval_examples() {
        let pt = {
            let mut p = [0.0; NUM_VARS];
            p[0] = 2.0;
            p[NUM_X_VARS + 1] = 5.0;
            p
        };
        assert_eq!(MPoly::zero().eval(&pt, 1.0), 0.0);
        let m = Monomial::var(0).mul(Monomial::var(NUM_X_VARS + 1));
        let f = MPoly::term(m, HiddenCoeff::from_coeffs(&[0.0, 0.0, 3.0]));
        assert_eq!(f.eval(&pt, 1.0), 30.0);
    }

    #[test]
    fn det_identity_and_repeated_rows() {
        let n = 4;
        let grid: Vec<Vec<MPoly>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { MPoly::one() } else { MPoly::zero() }).collect())
            .collect();
        assert_eq!(det_memoized_laplace(&grid), MPoly::one());

        let row: Vec<MPoly> = (0..3).map(|j| x(j).add(&MPoly::term(Monomial::ONE, HiddenCoeff::from_coeffs(&[1.0, j as f64])))).collect();
        let grid = vec![row.clone(), vec![y(0), y(1), x(2)], row];
        assert!(det_memoized_laplace(&grid).is_zero());
    }

    #[test]
    fn hidden_coeff_ops() {
        let a = HiddenCoeff::from_coeffs(&[1.0, 2.0]);
        let b = HiddenCoeff::from_coeffs(&[0.0, 1.0, 1.0]);
        assert_eq!(a.mul(&b).coeffs(), &[0.0, 1.0, 3.0, 2.0]);
        assert_eq!(a.eval(2.0), 5.0);
        assert_eq!(HiddenCoeff::from_coeffs(&[1.0, 0.0, 0.0]).degree(), Some(0));
        assert!(c(0.0).is_zero());
    }

    #[test]
    fn monomial_packing() {
        let m = Monomial::from_exponents(&[1, 0, 2, 0, 0, 3, 0, 0, 0, 0, 1, 4]);
        assert_eq!(m.exponent(2), 2);
        assert_eq!(m.exponent(11), 4);
        assert_eq!(m.total_degree(), 11);
        assert_eq!(m.x_part().mul(m.y_part()), m);
        assert_eq!(m.y_part().exponent(10), 1);
        assert_eq!(m.x_part().exponent(10), 0);
        assert_eq!(Monomial::var(0).grlex_cmp(&Monomial::var(1)), Ordering::Greater);
        assert_eq!(Monomial::var(11).grlex_cmp(&Monomial::var(0).mul(Monomial::var(0))), Ordering::Less);
    }
}
