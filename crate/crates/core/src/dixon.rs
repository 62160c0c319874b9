//! Dixon resultant of the quaternion pose system with `q₂` hidden.
//!
//! With `q = (1, q₂, q₃, q₄)` and `d = t̂ q`, each match contributes
//! `sᵀ vec(d p q*) + bᵀ vec(q p q*) = 0`, and `dᵀ q = 0` closes the system.
//! The elimination variables are `x = (d₁, d₂, d₃, d₄, q₃, q₄)`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::geometry::{hamilton_product, ConstraintCoefficients, Quaternion};
use crate::mpoly::{det_memoized_laplace, HiddenCoeff, MPoly, Monomial, NUM_X_VARS};

/// Index of `q₃` among the elimination variables.
pub const Q3: usize = 4;
/// Index of `q₄` among the elimination variables.
pub const Q4: usize = 5;
/// Size of the generic Dixon matrix.
pub const GENERIC_SIZE: usize = 27;
/// Columns whose entries all fall below this fraction of the largest
/// coefficient are treated as structural zeros.
pub const ZERO_COLUMN_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DixonError {
    #[error("expected 6 constraints, got {0}")]
    ConstraintCount(usize),
    #[error("Dixon matrix is {rows}x{cols} after removing zero columns, expected {expected}x{expected}")]
    Shape {
        rows: usize,
        cols: usize,
        expected: usize,
    },
    #[error("Dixon polynomial vanished identically")]
    Vanished,
}

/// The seven polynomials in `x` with coefficients in `q₂`.
#[derive(Debug, Clone)]
pub struct PolySystem {
    pub polys: Vec<MPoly>,
}

/// Component `a` of `q = (1, q₂, q₃, q₄)` as a monomial times a power of `q₂`.
fn q_component(a: usize) -> (Monomial, usize) {
    match a {
        0 => (Monomial::ONE, 0),
        1 => (Monomial::ONE, 1),
        2 => (Monomial::var(Q3), 0),
        _ => (Monomial::var(Q4), 0),
    }
}

fn basis(a: usize) -> Quaternion {
    let mut v = [0.0; 4];
    v[a] = 1.0;
    Quaternion::from_array(v)
}

fn hidden_power(k: usize, c: f64) -> HiddenCoeff {
    let mut v = [0.0; 3];
    v[k] = c;
    HiddenCoeff::from_coeffs(&v[..=k])
}

/// `vec(e_a p e_b*)` for quaternion basis elements.
fn sandwich(a: usize, p: &Quaternion, b: usize) -> nalgebra::Vector3<f64> {
    hamilton_product(&hamilton_product(&basis(a), p), &basis(b).conjugate()).vec()
}

/// Polynomial form of one match constraint.
pub fn constraint_polynomial(c: &ConstraintCoefficients) -> MPoly {
    let p = Quaternion::pure(&c.p);
    let mut terms = Vec::with_capacity(32);
    for a in 0..4 {
        for b in 0..4 {
            let v = sandwich(a, &p, b);
            let (qm, qk) = q_component(b);
            // s-term: d_a q_b
            let cs = c.s.dot(&v);
            if cs != 0.0 {
                terms.push((Monomial::var(a).mul(qm), hidden_power(qk, cs)));
            }
            // b-term: q_a q_b
            let cb = c.b.dot(&v);
            if cb != 0.0 {
                let (am, ak) = q_component(a);
                terms.push((am.mul(qm), hidden_power(ak + qk, cb)));
            }
        }
    }
    MPoly::from_terms(terms)
}

/// `dᵀq` with `q₁ = 1`.
pub fn gauge_polynomial() -> MPoly {
    MPoly::from_terms((0..4).map(|a| {
        let (qm, qk) = q_component(a);
        (Monomial::var(a).mul(qm), hidden_power(qk, 1.0))
    }))
}

/// Six match polynomials (from balanced constraints) followed by `dᵀq`.
pub fn build_system(constraints: &[ConstraintCoefficients]) -> Result<PolySystem, DixonError> {
    if constraints.len() != 6 {
        return Err(DixonError::ConstraintCount(constraints.len()));
    }
    let mut polys: Vec<MPoly> = constraints
        .iter()
        .map(|c| constraint_polynomial(&c.balanced()))
        .collect();
    polys.push(gauge_polynomial());
    Ok(PolySystem { polys })
}

/// Cayley–Dixon grid in divided-difference form: row `i < 6` holds the
/// divided differences in `xᵢ` of the system with `x₀..xᵢ₋₁` replaced by
/// `y`, and the last row holds the system fully in `y`.
pub fn build_dixon_matrix(sys: &PolySystem) -> Vec<Vec<MPoly>> {
    let mut current = sys.polys.clone();
    let mut grid = Vec::with_capacity(NUM_X_VARS + 1);
    for i in 0..NUM_X_VARS {
        grid.push(current.iter().map(|f| f.divided_difference(i)).collect());
        current = current.iter().map(|f| f.substitute_x_with_y(i)).collect();
    }
    grid.push(current);
    grid
}

/// Dixon polynomial `δ(x, y)` of a system.
pub fn dixon_polynomial(sys: &PolySystem) -> MPoly {
    det_memoized_laplace(&build_dixon_matrix(sys))
}

/// Matrix polynomial `M(q₂) = Σ Mₖ q₂ᵏ` with rows indexed by `y`-monomials
/// and columns by `x`-monomials of the Dixon polynomial.
#[derive(Debug, Clone, PartialEq)]
pub struct DixonPencil {
    pub matrices: Vec<DMatrix<f64>>,
    pub col_monomials: Vec<Monomial>,
    pub row_monomials: Vec<Monomial>,
}

#[derive(Serialize)]
struct PencilDump<'a> {
    format_version: u32,
    rows: usize,
    cols: usize,
    col_monomials: Vec<[u32; NUM_X_VARS]>,
    row_monomials: Vec<[u32; NUM_X_VARS]>,
    matrices: &'a [Vec<Vec<f64>>],
}

/// Column order: total degree ascending, then higher `q₃` power first, so
/// `1, q₃, q₄` lead. Any remaining variables break ties lexicographically.
fn column_order(a: &Monomial, b: &Monomial) -> std::cmp::Ordering {
    a.total_degree()
        .cmp(&b.total_degree())
        .then(b.exponent(Q3).cmp(&a.exponent(Q3)))
        .then(b.cmp(a))
}

impl DixonPencil {
    pub fn rows(&self) -> usize {
        self.row_monomials.len()
    }

    pub fn cols(&self) -> usize {
        self.col_monomials.len()
    }

    /// Highest power of `q₂` with a nonzero coefficient matrix.
    pub fn degree(&self) -> usize {
        self.matrices.len().saturating_sub(1)
    }

    pub fn eval(&self, q2: f64) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.rows(), self.cols());
        for m in self.matrices.iter().rev() {
            out = out * q2 + m;
        }
        out
    }

    pub fn eval_complex(&self, q2: Complex64) -> DMatrix<Complex64> {
        let mut out = DMatrix::<Complex64>::zeros(self.rows(), self.cols());
        for m in self.matrices.iter().rev() {
            out = out * q2 + m.map(|v| Complex64::new(v, 0.0));
        }
        out
    }

    /// Frobenius norm of the stacked coefficient matrices.
    pub fn norm(&self) -> f64 {
        self.matrices.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt()
    }

    /// Column-monomial vector at `x = (d₁..d₄, q₃, q₄)`.
    pub fn column_vector(&self, x: &[f64; NUM_X_VARS]) -> nalgebra::DVector<f64> {
        let mut point = [0.0; crate::mpoly::NUM_VARS];
        point[..NUM_X_VARS].copy_from_slice(x);
        nalgebra::DVector::from_iterator(self.cols(), self.col_monomials.iter().map(|m| m.eval(&point)))
    }

    /// Index of the column holding `q₃ᵃ q₄ᵇ`, if present.
    pub fn column_of(&self, a: u32, b: u32) -> Option<usize> {
        let m = Monomial::ONE.with_exponent(Q3, a).with_exponent(Q4, b);
        self.col_monomials.iter().position(|c| *c == m)
    }

    /// Restricts the pencil to the given rows and columns (in that order).
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> DixonPencil {
        DixonPencil {
            matrices: self
                .matrices
                .iter()
                .map(|m| DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])]))
                .collect(),
            col_monomials: cols.iter().map(|&j| self.col_monomials[j]).collect(),
            row_monomials: rows.iter().map(|&i| self.row_monomials[i]).collect(),
        }
    }

    /// JSON dump: coefficient matrices `M₀…M_k` as row-major nested arrays,
    /// monomials as exponent vectors over `(d₁..d₄, q₃, q₄)` (rows use the
    /// `y` copies).
    pub fn to_json(&self) -> serde_json::Value {
        let mats: Vec<Vec<Vec<f64>>> = self
            .matrices
            .iter()
            .map(|m| (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect())
            .collect();
        let x_exps = |m: &Monomial| -> [u32; NUM_X_VARS] { std::array::from_fn(|i| m.exponent(i)) };
        let y_exps = |m: &Monomial| -> [u32; NUM_X_VARS] { std::array::from_fn(|i| m.exponent(i + NUM_X_VARS)) };
        serde_json::to_value(PencilDump {
            format_version: 1,
            rows: self.rows(),
            cols: self.cols(),
            col_monomials: self.col_monomials.iter().map(x_exps).collect(),
            row_monomials: self.row_monomials.iter().map(y_exps).collect(),
            matrices: &mats,
        })
        .expect("pencil serializes")
    }
}

/// Collects `δ` into a pencil without checking its shape. Columns (and rows)
/// whose entries are all below `eps` times the largest coefficient are removed.
pub fn collect_pencil_with(delta: &MPoly, eps: f64) -> Result<DixonPencil, DixonError> {
    let global = delta.max_abs_coeff();
    if global == 0.0 {
        return Err(DixonError::Vanished);
    }
    let cut = eps * global;
    let mut cols: Vec<Monomial> = Vec::new();
    let mut rows: Vec<Monomial> = Vec::new();
    for (m, c) in delta.terms() {
        if c.max_abs() < cut {
            continue;
        }
        cols.push(m.x_part());
        rows.push(m.y_part());
    }
    cols.sort_by(column_order);
    cols.dedup();
    rows.sort_by(|a, b| a.grlex_cmp(b));
    rows.dedup();
    let degree = delta
        .terms()
        .iter()
        .filter(|(_, c)| c.max_abs() >= cut)
        .filter_map(|(_, c)| c.degree())
        .max()
        .unwrap_or(0);
    let mut matrices = vec![DMatrix::zeros(rows.len(), cols.len()); degree + 1];
    for (m, c) in delta.terms() {
        let (Ok(j), Ok(i)) = (
            cols.binary_search_by(|probe| column_order(probe, &m.x_part())),
            rows.binary_search_by(|probe| probe.grlex_cmp(&m.y_part())),
        ) else {
            continue;
        };
        for (k, v) in c.coeffs().iter().enumerate().take(degree + 1) {
            matrices[k][(i, j)] = *v;
        }
    }
    Ok(DixonPencil {
        matrices,
        col_monomials: cols,
        row_monomials: rows,
    })
}

/// Collects `δ` into the square generic pencil, failing if the surviving
/// shape is not 27×27.
pub fn collect_pencil(delta: &MPoly) -> Result<DixonPencil, DixonError> {
    let pencil = collect_pencil_with(delta, ZERO_COLUMN_EPS)?;
    if pencil.rows() != GENERIC_SIZE || pencil.cols() != GENERIC_SIZE {
        return Err(DixonError::Shape {
            rows: pencil.rows(),
            cols: pencil.cols(),
            expected: GENERIC_SIZE,
        });
    }
    Ok(pencil)
}

/// Constraints → system → Dixon polynomial → pencil.
pub fn pencil_from_constraints(constraints: &[ConstraintCoefficients]) -> Result<DixonPencil, DixonError> {
    collect_pencil(&dixon_polynomial(&build_system(constraints)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    #[test]
    fn gauge_support() {
        let g = gauge_polynomial();
        assert_eq!(g.len(), 4);
        let d1 = Monomial::var(0);
        assert_eq!(g.coefficient(d1).unwrap().coeffs(), &[1.0]);
        assert_eq!(g.coefficient(Monomial::var(1)).unwrap().coeffs(), &[0.0, 1.0]);
        assert!(g.coefficient(Monomial::var(2).mul(Monomial::var(Q3))).is_some());
    }

    #[test]
    fn two_view_constraint_has_no_pure_q_block() {
        let c = ConstraintCoefficients {
            p: Vector3::new(0.1, 0.2, 1.0).normalize(),
            s: Vector3::new(0.3, -0.1, 1.0),
            b: Vector3::zeros(),
        };
        let f = constraint_polynomial(&c);
        assert!(f.terms().iter().all(|(m, _)| (0..4).any(|a| m.exponent(a) == 1)));
    }
}
