//! Polynomial eigenvalue problems `M(λ) v = 0` through companion
//! linearization and a dense QZ decomposition, plus univariate root finding
//! and a determinant-interpolation cross-check.

use faer::diag::Diag;
use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::evd::ComputeEigenvectors;
use faer::linalg::gevd;
use faer::{Mat, Par};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::dixon::DixonPencil;

/// An eigenvalue is finite when `|β| / (|α| + |β|)` exceeds this, after the
/// pencil has been normalized (unit-norm coefficients, balanced hidden
/// variable). The Dixon pencil has a rank-one leading coefficient, and the
/// resulting Jordan blocks at infinity split under rounding into eigenvalues
/// with ratios up to about 1e-5; genuine roots sit above 5e-4 in practice.
pub const FINITE_RATIO: f64 = 1e-4;
/// Kept eigenpairs satisfy `‖M(λ)v‖ / (‖M(λ)‖‖v‖)` below this.
pub const RESIDUAL_TOL: f64 = 1e-6;
/// Eigenvalues with `|Im λ| < REAL_TOL · (1 + |Re λ|)` count as real.
pub const REAL_TOL: f64 = 1e-6;
/// Imaginary-part threshold for univariate real roots.
pub const UNIVARIATE_REAL_TOL: f64 = 1e-8;
/// Sample dynamic range above which determinant interpolation is flagged.
pub const INTERPOLATION_RANGE_LIMIT: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyEigError {
    #[error("generalized eigen-decomposition did not converge")]
    NoConvergence,
    #[error("no finite eigenvalues")]
    NoSolutions,
    #[error("polynomial is identically zero")]
    ZeroPolynomial,
    #[error("matrix polynomial must be square with degree at least 1")]
    BadShape,
}

/// `M(λ) = Σₖ Mₖ λᵏ`, coefficients lowest power first.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixPolynomial {
    pub coeffs: Vec<DMatrix<f64>>,
}

impl MatrixPolynomial {
    pub fn new(coeffs: Vec<DMatrix<f64>>) -> Self {
        Self { coeffs }
    }

    pub fn size(&self) -> usize {
        self.coeffs.first().map_or(0, |m| m.nrows())
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn eval(&self, lambda: f64) -> DMatrix<f64> {
        let n = self.size();
        self.coeffs
            .iter()
            .rev()
            .fold(DMatrix::zeros(n, n), |acc, m| acc * lambda + m)
    }

    pub fn eval_complex(&self, lambda: Complex64) -> DMatrix<Complex64> {
        let n = self.size();
        self.coeffs.iter().rev().fold(DMatrix::zeros(n, n), |acc, m| {
            acc * lambda + m.map(|v| Complex64::new(v, 0.0))
        })
    }
}

impl From<&DixonPencil> for MatrixPolynomial {
    fn from(p: &DixonPencil) -> Self {
        Self::new(p.matrices.clone())
    }
}

/// Block companion form `C₂ v̄ = λ C₁ v̄` with `v̄ = (v; λv; …; λᵏ⁻¹v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompanionPencil {
    pub c1: DMatrix<f64>,
    pub c2: DMatrix<f64>,
    pub block: usize,
    pub degree: usize,
}

/// Builds the companion pencil: `C₁ = diag(I, …, I, Mₖ)`, `C₂` has identity
/// blocks on the block superdiagonal and `(−M₀ … −Mₖ₋₁)` as its last block row.
pub fn linearize(poly: &MatrixPolynomial) -> Result<CompanionPencil, PolyEigError> {
    let n = poly.size();
    let k = poly.degree();
    if k == 0 || n == 0 || poly.coeffs.iter().any(|m| m.nrows() != n || m.ncols() != n) {
        return Err(PolyEigError::BadShape);
    }
    let big = n * k;
    let mut c1 = DMatrix::zeros(big, big);
    let mut c2 = DMatrix::zeros(big, big);
    for b in 0..k - 1 {
        c1.view_mut((b * n, b * n), (n, n)).fill_with_identity();
        c2.view_mut((b * n, (b + 1) * n), (n, n)).fill_with_identity();
    }
    c1.view_mut(((k - 1) * n, (k - 1) * n), (n, n)).copy_from(&poly.coeffs[k]);
    for j in 0..k {
        c2.view_mut(((k - 1) * n, j * n), (n, n)).copy_from(&(-&poly.coeffs[j]));
    }
    Ok(CompanionPencil {
        c1,
        c2,
        block: n,
        degree: k,
    })
}

/// One eigenpair of the matrix polynomial.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSolution {
    pub lambda: Complex64,
    /// Null vector of `M(λ)`, normalized so its first entry is 1 unless that
    /// entry is negligible, in which case it has unit norm.
    pub vector: DVector<Complex64>,
    /// `‖M(λ)v‖ / (‖M(λ)‖‖v‖)`.
    pub residual: f64,
}

impl EigenSolution {
    pub fn is_real(&self) -> bool {
        self.lambda.im.abs() < REAL_TOL * (1.0 + self.lambda.re.abs())
    }
}

/// Output of [`solve_generalized`].
#[derive(Debug, Clone, PartialEq)]
pub struct EigenReport {
    /// Finite eigenpairs passing the residual check.
    pub solutions: Vec<EigenSolution>,
    /// Every finite eigenvalue, including those failing the residual check.
    pub eigenvalues: Vec<Complex64>,
    /// Number of finite generalized eigenvalues (before the residual check).
    pub finite_count: usize,
    /// Finite eigenvalues whose eigenvector failed the residual check.
    pub rejected: usize,
}

fn to_faer(m: &DMatrix<f64>) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Raw QZ output: `(α, β)` pairs and right eigenvectors as complex columns.
pub struct GeneralizedEigen {
    pub alpha: Vec<Complex64>,
    pub beta: Vec<f64>,
    pub vectors: DMatrix<Complex64>,
}

/// Dense real QZ of `(A, B)`: `A v = λ B v` with `λ = α / β`.
pub fn qz(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<GeneralizedEigen, PolyEigError> {
    let n = a.nrows();
    let mut fa = to_faer(a);
    let mut fb = to_faer(b);
    let mut re = Diag::<f64>::zeros(n);
    let mut im = Diag::<f64>::zeros(n);
    let mut beta = Diag::<f64>::zeros(n);
    // Eigenvalues alone are unreliable in the current faer release, so right
    // eigenvectors are always requested.
    let mut u = Mat::<f64>::zeros(n, n);
    let mut mem = MemBuffer::new(gevd::gevd_scratch::<f64>(
        n,
        ComputeEigenvectors::No,
        ComputeEigenvectors::Yes,
        Par::Seq,
        Default::default(),
    ));
    gevd::gevd_real(
        fa.as_mut(),
        fb.as_mut(),
        re.as_mut(),
        im.as_mut(),
        beta.as_mut(),
        None,
        Some(u.as_mut()),
        Par::Seq,
        MemStack::new(&mut mem),
        Default::default(),
    )
    .map_err(|_| PolyEigError::NoConvergence)?;

    let mut alpha: Vec<Complex64> = (0..n).map(|i| Complex64::new(re[i], im[i])).collect();
    let mut beta: Vec<f64> = (0..n).map(|i| beta[i]).collect();
    let mut vectors = DMatrix::<Complex64>::zeros(n, n);
    let mut j = 0;
    while j < n {
        if alpha[j].im != 0.0 && j + 1 < n {
            // Conjugate pair stored as real and imaginary columns. Only the
            // first (α, β) of the pair is meaningful.
            alpha[j + 1] = alpha[j].conj();
            beta[j + 1] = beta[j];
            for i in 0..n {
                let (r, s) = (u[(i, j)], u[(i, j + 1)]);
                vectors[(i, j)] = Complex64::new(r, s);
                vectors[(i, j + 1)] = Complex64::new(r, -s);
            }
            j += 2;
        } else {
            for i in 0..n {
                vectors[(i, j)] = Complex64::new(u[(i, j)], 0.0);
            }
            j += 1;
        }
    }
    Ok(GeneralizedEigen { alpha, beta, vectors })
}

fn relative_residual(m: &DMatrix<Complex64>, v: &DVector<Complex64>) -> f64 {
    let denom = m.norm() * v.norm();
    if denom == 0.0 {
        return f64::INFINITY;
    }
    (m * v).norm() / denom
}

/// `‖M(λ)v‖ / (‖M(λ)‖‖v‖)`. For a scalar polynomial that ratio is always one,
/// so the backward error `|p(λ)| / Σ|aₖ||λ|ᵏ` is used instead.
fn eigen_residual(poly: &MatrixPolynomial, lambda: Complex64, m: &DMatrix<Complex64>, v: &DVector<Complex64>) -> f64 {
    if poly.size() != 1 {
        return relative_residual(m, v);
    }
    let scale: f64 = poly.coeffs.iter().enumerate().map(|(k, a)| a.norm() * lambda.norm().powi(k as i32)).sum();
    if scale == 0.0 {
        return f64::INFINITY;
    }
    m[(0, 0)].norm() / scale
}

/// Right singular vector of the smallest singular value.
pub fn null_vector(m: &DMatrix<Complex64>) -> DVector<Complex64> {
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V");
    let (idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty");
    v_t.row(idx).adjoint()
}

/// Divides by the first entry when it is not negligible; otherwise scales to
/// unit norm with the largest entry real and positive.
fn normalize_vector(v: DVector<Complex64>) -> DVector<Complex64> {
    let n = v.norm();
    if n == 0.0 {
        return v;
    }
    if v[0].norm() >= 1e-10 * n {
        let v0 = v[0];
        return v / v0;
    }
    let big = v.iter().copied().max_by(|a, b| a.norm().total_cmp(&b.norm())).expect("nonempty");
    let phase = big / big.norm();
    v / (phase * n)
}

/// Finite eigenpairs of the matrix polynomial via its companion pencil.
///
/// The hidden variable is rescaled internally so the first and last
/// coefficient matrices have comparable norms, which leaves eigenvalues
/// unchanged but improves the conditioning of the QZ step.
pub fn solve_polynomial(poly: &MatrixPolynomial) -> Result<EigenReport, PolyEigError> {
    if poly.degree() == 0 || poly.size() == 0 {
        return Err(PolyEigError::BadShape);
    }
    let gamma = balancing_scale(poly);
    let scaled = normalized(poly, gamma);
    let cp = linearize(&scaled)?;
    let mut report = solve_generalized(&cp, &scaled)?;
    for s in &mut report.solutions {
        s.lambda *= gamma;
    }
    for l in &mut report.eigenvalues {
        *l *= gamma;
    }
    Ok(report)
}

/// Shifts tried in turn by [`solve_polynomial_shifted`]; arbitrary values
/// that are unlikely to be eigenvalues.
const SHIFTS: [f64; 3] = [std::f64::consts::FRAC_1_PI, -0.577_215_664_901_532_9, std::f64::consts::SQRT_2];

/// Coefficients of `M(σ + x)` in powers of `x`.
fn taylor_shift(poly: &MatrixPolynomial, sigma: f64) -> Vec<DMatrix<f64>> {
    let k = poly.degree();
    let n = poly.size();
    // Repeated synthetic division, as in Horner's scheme for a shift.
    let mut c: Vec<DMatrix<f64>> = poly.coeffs.clone();
    for i in 0..k {
        for j in (i..k).rev() {
            let next = c[j + 1].clone();
            c[j] += next * sigma;
        }
    }
    debug_assert!(c.iter().all(|m| m.nrows() == n));
    c
}

/// Finite eigenpairs through a standard eigenproblem.
///
/// With `λ = σ + 1/μ` the reversed polynomial `μᵏ M(σ + 1/μ)` has the
/// invertible leading coefficient `M(σ)`, so infinite eigenvalues move to
/// `μ = 0` and no generalized solver is needed. Infinite eigenvalues in long
/// Jordan chains scatter around zero instead of landing on it, so finiteness
/// is decided by the residual of the extracted null vector rather than by the
/// size of `μ`.
pub fn solve_polynomial_shifted(poly: &MatrixPolynomial) -> Result<EigenReport, PolyEigError> {
    if poly.degree() == 0 || poly.size() == 0 {
        return Err(PolyEigError::BadShape);
    }
    let gamma = balancing_scale(poly);
    let scaled = normalized(poly, gamma);
    let n = scaled.size();
    let k = scaled.degree();
    for sigma in SHIFTS {
        let a = taylor_shift(&scaled, sigma);
        let sv = a[0].singular_values();
        if sv.min() <= 1e-10 * sv.max() {
            continue;
        }
        let lu = a[0].clone().lu();
        let mut c = Mat::<f64>::zeros(n * k, n * k);
        for i in 0..k - 1 {
            for d in 0..n {
                c[(i * n + d, (i + 1) * n + d)] = 1.0;
            }
        }
        for j in 0..k {
            let blk = lu.solve(&a[k - j]).ok_or(PolyEigError::NoConvergence)?;
            for r in 0..n {
                for col in 0..n {
                    c[((k - 1) * n + r, j * n + col)] = -blk[(r, col)];
                }
            }
        }
        let mu = c.eigenvalues().map_err(|_| PolyEigError::NoConvergence)?;
        let top = mu.iter().map(|z| z.re.hypot(z.im)).fold(0.0, f64::max);
        let mut report = EigenReport {
            solutions: Vec::new(),
            eigenvalues: Vec::new(),
            finite_count: 0,
            rejected: 0,
        };
        for z in mu {
            let z = Complex64::new(z.re, z.im);
            if z.norm() <= f64::EPSILON * top {
                continue;
            }
            let lambda = Complex64::new(sigma, 0.0) + z.inv();
            let m = scaled.eval_complex(lambda);
            let v = null_vector(&m);
            let residual = eigen_residual(&scaled, lambda, &m, &v);
            if residual < RESIDUAL_TOL {
                report.finite_count += 1;
                report.eigenvalues.push(lambda * gamma);
                report.solutions.push(EigenSolution {
                    lambda: lambda * gamma,
                    vector: normalize_vector(v),
                    residual,
                });
            } else {
                report.rejected += 1;
            }
        }
        if report.finite_count == 0 {
            return Err(PolyEigError::NoSolutions);
        }
        return Ok(report);
    }
    Err(PolyEigError::NoConvergence)
}

/// Coefficients `Mₖ γᵏ`, divided by the largest resulting norm.
pub fn normalized(poly: &MatrixPolynomial, gamma: f64) -> MatrixPolynomial {
    let scaled: Vec<DMatrix<f64>> = poly
        .coeffs
        .iter()
        .enumerate()
        .map(|(i, m)| m * gamma.powi(i as i32))
        .collect();
    let top = scaled.iter().map(|m| m.norm()).fold(0.0, f64::max);
    let top = if top > 0.0 { top } else { 1.0 };
    MatrixPolynomial::new(scaled.into_iter().map(|m| m / top).collect())
}

/// Scale for the hidden variable that equalizes the norms of the first and
/// last coefficients.
pub fn balancing_scale(poly: &MatrixPolynomial) -> f64 {
    let k = poly.degree();
    let n0 = poly.coeffs[0].norm();
    let nk = poly.coeffs[k].norm();
    if k > 0 && n0 > 0.0 && nk > 0.0 {
        (n0 / nk).powf(1.0 / k as f64)
    } else {
        1.0
    }
}

/// QZ on the companion pencil, keeping finite eigenvalues whose extracted
/// null vector of `M(λ)` passes the residual check.
pub fn solve_generalized(cp: &CompanionPencil, poly: &MatrixPolynomial) -> Result<EigenReport, PolyEigError> {
    let ge = qz(&cp.c2, &cp.c1)?;
    let n = cp.block;
    let mut solutions = Vec::new();
    let mut finite_count = 0;
    let mut rejected = 0;
    let mut eigenvalues = Vec::new();
    for (j, (a, &b)) in ge.alpha.iter().zip(&ge.beta).enumerate() {
        if b.abs() / (a.norm() + b.abs()) <= FINITE_RATIO {
            continue;
        }
        finite_count += 1;
        let lambda = a / b;
        let m = poly.eval_complex(lambda);
        let full = ge.vectors.column(j);
        let best_block = (0..cp.degree)
            .max_by(|&x, &y| {
                full.rows(x * n, n)
                    .norm()
                    .total_cmp(&full.rows(y * n, n).norm())
            })
            .unwrap_or(0);
        let mut v = full.rows(best_block * n, n).into_owned();
        let mut residual = eigen_residual(poly, lambda, &m, &v);
        if residual >= RESIDUAL_TOL {
            let w = null_vector(&m);
            let r = eigen_residual(poly, lambda, &m, &w);
            if r < residual {
                v = w;
                residual = r;
            }
        }
        eigenvalues.push(lambda);
        if residual < RESIDUAL_TOL {
            solutions.push(EigenSolution {
                lambda,
                vector: normalize_vector(v),
                residual,
            });
        } else {
            rejected += 1;
        }
    }
    if finite_count == 0 {
        return Err(PolyEigError::NoSolutions);
    }
    Ok(EigenReport {
        solutions,
        eigenvalues,
        finite_count,
        rejected,
    })
}

/// Finite generalized eigenvalues of a companion pencil, without eigenvector
/// checks.
pub fn finite_eigenvalues(cp: &CompanionPencil) -> Result<Vec<Complex64>, PolyEigError> {
    let ge = qz(&cp.c2, &cp.c1)?;
    Ok(ge
        .alpha
        .iter()
        .zip(&ge.beta)
        .filter(|(a, b)| b.abs() / (a.norm() + b.abs()) > FINITE_RATIO)
        .map(|(a, b)| a / *b)
        .collect())
}

fn trim(coeffs: &[f64]) -> &[f64] {
    let mut n = coeffs.len();
    while n > 0 && coeffs[n - 1] == 0.0 {
        n -= 1;
    }
    &coeffs[..n]
}

/// All complex roots of a real polynomial (lowest power first) from the
/// eigenvalues of its companion matrix.
pub fn polynomial_roots(coeffs: &[f64]) -> Result<Vec<Complex64>, PolyEigError> {
    let c = trim(coeffs);
    if c.is_empty() {
        return Err(PolyEigError::ZeroPolynomial);
    }
    let deg = c.len() - 1;
    if deg == 0 {
        return Ok(Vec::new());
    }
    let lead = c[deg];
    let mut comp = DMatrix::<f64>::zeros(deg, deg);
    for i in 1..deg {
        comp[(i, i - 1)] = 1.0;
    }
    for i in 0..deg {
        comp[(i, deg - 1)] = -c[i] / lead;
    }
    // Balancing keeps the companion eigenvalues accurate when coefficient
    // magnitudes vary widely.
    let comp = balance(comp);
    Ok(comp.complex_eigenvalues().iter().copied().collect())
}

/// Parlett–Reinsch diagonal similarity balancing.
fn balance(mut m: DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let radix = 2.0_f64;
    let mut converged = false;
    while !converged {
        converged = true;
        for i in 0..n {
            let c: f64 = (0..n).filter(|&j| j != i).map(|j| m[(j, i)].abs()).sum();
            let r: f64 = (0..n).filter(|&j| j != i).map(|j| m[(i, j)].abs()).sum();
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let (mut c2, mut r2) = (c, r);
            while c2 < r2 / radix {
                c2 *= radix;
                r2 /= radix;
                f *= radix;
            }
            while c2 >= r2 * radix {
                c2 /= radix;
                r2 *= radix;
                f /= radix;
            }
            if (c2 + r2) < 0.95 * s {
                converged = false;
                for j in 0..n {
                    m[(i, j)] /= f;
                    m[(j, i)] *= f;
                }
            }
        }
    }
    m
}

fn horner(c: &[f64], x: f64) -> (f64, f64) {
    let mut p = 0.0;
    let mut dp = 0.0;
    for &a in c.iter().rev() {
        dp = dp * x + p;
        p = p * x + a;
    }
    (p, dp)
}

/// Real roots of a real polynomial (lowest power first), ascending.
///
/// Roots come from the companion eigenvalues. A multiple root of order m
/// shows up as m eigenvalues spread by about ε^(1/m); nearby eigenvalues are
/// replaced by their centroid when the polynomial vanishes there to rounding
/// level. Simple real roots are then polished with up to two Newton steps
/// that must not increase `|f|`.
pub fn real_roots_univariate(coeffs: &[f64]) -> Result<Vec<f64>, PolyEigError> {
    let c = trim(coeffs);
    let roots = polynomial_roots(c)?;
    let is_real = |z: &Complex64| z.im.abs() < UNIVARIATE_REAL_TOL * (1.0 + z.re.abs());
    let vanishes_at = |z: Complex64| {
        let (mut p, mut scale) = (Complex64::new(0.0, 0.0), 0.0);
        for &a in c.iter().rev() {
            p = p * z + a;
            scale = scale * z.norm() + a.abs();
        }
        p.norm() <= 1e3 * f64::EPSILON * scale
    };

    let n = roots.len();
    let mut cluster: Vec<usize> = (0..n).collect();
    fn find(c: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while c[r] != r {
            r = c[r];
        }
        c[i] = r;
        r
    }
    for i in 0..n {
        for j in i + 1..n {
            if (roots[i] - roots[j]).norm() < 1e-2 * (1.0 + roots[i].norm()) {
                let (a, b) = (find(&mut cluster, i), find(&mut cluster, j));
                cluster[a] = b;
            }
        }
    }
    // (root, simple)
    let mut out: Vec<(f64, bool)> = Vec::new();
    let mut seen = vec![false; n];
    for i in 0..n {
        let root = find(&mut cluster, i);
        if seen[root] {
            continue;
        }
        seen[root] = true;
        let members: Vec<usize> = (0..n).filter(|&j| find(&mut cluster, j) == root).collect();
        let centroid = members.iter().map(|&j| roots[j]).sum::<Complex64>() / members.len() as f64;
        if members.len() > 1 && vanishes_at(centroid) {
            if is_real(&centroid) {
                out.push((centroid.re, false));
            }
        } else {
            out.extend(members.iter().filter(|&&j| is_real(&roots[j])).map(|&j| (roots[j].re, true)));
        }
    }
    for (x, _) in out.iter_mut().filter(|(_, simple)| *simple) {
        for _ in 0..2 {
            let (p, dp) = horner(c, *x);
            if dp == 0.0 || !dp.is_finite() {
                break;
            }
            let cand = *x - p / dp;
            if horner(c, cand).0.abs() <= p.abs() {
                *x = cand;
            } else {
                break;
            }
        }
    }
    let mut out: Vec<f64> = out.into_iter().map(|(x, _)| x).collect();
    out.sort_by(f64::total_cmp);
    Ok(out)
}

/// Roots of `det M(λ)` recovered by sampling and interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct DetInterpolation {
    pub roots: Vec<Complex64>,
    /// Degree of the interpolated determinant: the highest power whose
    /// coefficient stands above the sampling noise floor.
    pub degree: usize,
    /// Interpolated coefficients of `det M(λ)`, lowest power first.
    pub coeffs: Vec<f64>,
    /// Largest coefficient magnitude above `degree`, relative to the largest
    /// coefficient, both measured on the balanced sampling circle.
    pub tail: f64,
    /// Ratio of the largest to the smallest sampled `|det|`.
    pub dynamic_range: f64,
    pub ill_conditioned: bool,
}


struct CircleSamples {
    /// Coefficients of `det M(r z)` in `z`.
    coeffs: Vec<f64>,
    max_sample: f64,
    min_sample: f64,
}

fn sample_on_circle(poly: &MatrixPolynomial, radius: f64, samples: usize) -> CircleSamples {
    let n = poly.size();
    let scaled: Vec<DMatrix<Complex64>> = poly
        .coeffs
        .iter()
        .enumerate()
        .map(|(i, c)| c.map(|v| Complex64::new(v * radius.powi(i as i32), 0.0)))
        .collect();
    let values: Vec<Complex64> = (0..samples)
        .map(|j| {
            let w = Complex64::from_polar(1.0, std::f64::consts::TAU * j as f64 / samples as f64);
            let m = scaled
                .iter()
                .rev()
                .fold(DMatrix::<Complex64>::zeros(n, n), |acc, c| acc * w + c);
            m.lu().determinant()
        })
        .collect();
    let coeffs = (0..samples)
        .map(|k| {
            let s: Complex64 = values
                .iter()
                .enumerate()
                .map(|(j, v)| {
                    v * Complex64::from_polar(1.0, -std::f64::consts::TAU * ((j * k) % samples) as f64 / samples as f64)
                })
                .sum();
            (s / samples as f64).re
        })
        .collect();
    let mags = values.iter().map(|v| v.norm());
    CircleSamples {
        coeffs,
        max_sample: mags.clone().fold(0.0, f64::max),
        min_sample: mags.fold(f64::INFINITY, f64::min),
    }
}

/// Degree of an interpolated polynomial whose coefficients above
/// `max_degree` are known to vanish: the highest index standing clearly
/// above the rounding noise seen in that structurally zero tail.
fn effective_degree(c: &[f64], max_degree: usize) -> (usize, f64) {
    let noise = c[max_degree + 1..].iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let cmax = c.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let floor = (DET_NOISE_FACTOR * noise).max(f64::MIN_POSITIVE * cmax);
    let d = (0..=max_degree).rev().find(|&k| c[k].abs() > floor).unwrap_or(0);
    (d, noise)
}

/// Coefficients count as nonzero when they exceed the tail noise by this factor.
pub const DET_NOISE_FACTOR: f64 = 10.0;

/// Samples `det M(λ)` on `2nk + 1` (or more) equispaced points of a circle,
/// recovers the coefficients by an inverse discrete Fourier transform and
/// finds the roots of the resulting polynomial from its companion matrix.
/// Those roots are then polished by Aberth–Ehrlich iteration on `det M(λ)`
/// itself, evaluated through LU factorizations.
///
/// The sampling radius starts at `(‖M₀‖/‖Mₖ‖)^{1/k}` and is re-centred twice
/// on the geometric mean of the root magnitudes so the coefficients are as
/// balanced as possible.
pub fn det_interpolation_roots_poly(poly: &MatrixPolynomial, n_samples: usize) -> Result<DetInterpolation, PolyEigError> {
    if poly.degree() == 0 || poly.size() == 0 {
        return Err(PolyEigError::BadShape);
    }
    let max_degree = poly.size() * poly.degree();
    let samples = n_samples.max(2 * max_degree + 1);
    let mut radius = balancing_scale(poly);
    let mut pass = sample_on_circle(poly, radius, samples);
    for _ in 0..2 {
        if pass.max_sample == 0.0 {
            return Err(PolyEigError::ZeroPolynomial);
        }
        let (d, _) = effective_degree(&pass.coeffs, max_degree);
        if d == 0 || pass.coeffs[0] == 0.0 {
            break;
        }
        radius *= (pass.coeffs[0] / pass.coeffs[d]).abs().powf(1.0 / d as f64);
        pass = sample_on_circle(poly, radius, samples);
    }
    if pass.max_sample == 0.0 {
        return Err(PolyEigError::ZeroPolynomial);
    }
    let (mut degree, _) = effective_degree(&pass.coeffs, max_degree);
    let cmax = pass.coeffs.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let tail = pass.coeffs[degree + 1..].iter().fold(0.0_f64, |m, v| m.max(v.abs())) / cmax;
    let mut start: Vec<Complex64> = polynomial_roots(&pass.coeffs[..=degree])?
        .into_iter()
        .map(|z| z * radius)
        .collect();
    // Large roots flatten the top coefficients on the balanced circle. On a
    // circle enclosing every root estimate the leading terms dominate, which
    // makes the root count unambiguous.
    for _ in 0..3 {
        let outer = 2.0 * start.iter().fold(radius, |m, z| m.max(z.norm()));
        let wide = sample_on_circle(poly, outer, samples);
        let (d, _) = effective_degree(&wide.coeffs, max_degree);
        if d <= degree || wide.max_sample == 0.0 {
            break;
        }
        degree = d;
        start = polynomial_roots(&wide.coeffs[..=d])?
            .into_iter()
            .map(|z| z * outer)
            .collect();
    }
    let (roots, converged) = polish_det_roots(poly, start);
    let coeffs = pass.coeffs[..=max_degree]
        .iter()
        .enumerate()
        .map(|(i, c)| c / radius.powi(i as i32))
        .collect();
    let dynamic_range = pass.max_sample / pass.min_sample;
    Ok(DetInterpolation {
        roots,
        degree,
        coeffs,
        tail,
        dynamic_range,
        ill_conditioned: !converged || !(dynamic_range <= INTERPOLATION_RANGE_LIMIT),
    })
}

/// `(det M)′ / det M = tr(M⁻¹ M′)` at `z`, or `None` when `M(z)` is singular.
pub fn log_derivative(poly: &MatrixPolynomial, z: Complex64) -> Option<Complex64> {
    let n = poly.size();
    let mut m = DMatrix::<Complex64>::zeros(n, n);
    let mut dm = DMatrix::<Complex64>::zeros(n, n);
    for c in poly.coeffs.iter().rev() {
        dm = dm * z + &m;
        m = m * z + c.map(|v| Complex64::new(v, 0.0));
    }
    let x = m.lu().solve(&dm)?;
    let t = x.trace();
    t.is_finite().then_some(t)
}

/// Newton iterations on `det M(λ)` from a real starting point. The result is
/// discarded if it wanders more than `1e-3·(1 + |λ₀|)` away, which would
/// mean it converged to a neighbouring root.
pub fn polish_real_root(poly: &MatrixPolynomial, lambda0: f64) -> f64 {
    let mut lambda = lambda0;
    for _ in 0..8 {
        let Some(ld) = log_derivative(poly, Complex64::new(lambda, 0.0)) else {
            break;
        };
        if ld.norm() == 0.0 {
            break;
        }
        let step = ld.inv().re;
        lambda -= step;
        if step.abs() <= 4.0 * f64::EPSILON * (1.0 + lambda.abs()) {
            break;
        }
    }
    if lambda.is_finite() && (lambda - lambda0).abs() <= 1e-3 * (1.0 + lambda0.abs()) {
        lambda
    } else {
        lambda0
    }
}

/// Maximum Aberth–Ehrlich sweeps used to polish interpolated roots.
pub const ABERTH_MAX_ITERS: usize = 200;

/// Simultaneous Aberth–Ehrlich refinement of all roots of `det M(λ)`,
/// evaluated directly from the matrix polynomial. Returns the refined roots
/// and whether every correction fell below `1e-11 (1 + |z|)`.
pub fn polish_det_roots(poly: &MatrixPolynomial, mut z: Vec<Complex64>) -> (Vec<Complex64>, bool) {
    let n = z.len();
    let mut done = vec![false; n];
    for _ in 0..ABERTH_MAX_ITERS {
        for i in 0..n {
            if done[i] {
                continue;
            }
            let Some(ld) = log_derivative(poly, z[i]) else {
                // Landed exactly on a root.
                done[i] = true;
                continue;
            };
            let newton = ld.inv();
            let repulsion: Complex64 = (0..n).filter(|&j| j != i).map(|j| (z[i] - z[j]).inv()).sum();
            let w = newton / (Complex64::new(1.0, 0.0) - newton * repulsion);
            if !w.is_finite() {
                continue;
            }
            z[i] -= w;
            if w.norm() < 1e-11 * (1.0 + z[i].norm()) {
                done[i] = true;
            }
        }
        if done.iter().all(|d| *d) {
            return (z, true);
        }
    }
    (z, false)
}

/// [`det_interpolation_roots_poly`] for a Dixon pencil with 129 samples.
pub fn det_interpolation_roots(pencil: &DixonPencil) -> Result<DetInterpolation, PolyEigError> {
    det_interpolation_roots_poly(&MatrixPolynomial::from(pencil), 129)
}
