//! Symmetric-matrix algebra and positive-semidefinite-cone primitives.
//!
//! The state space of every model in this toolkit is the cone of symmetric
//! positive (semi)definite `d x d` matrices. This module provides the shared
//! plumbing: validated symmetric storage, spectral decompositions, matrix
//! powers and inverses through the spectral form, the determinant gradient
//! and Hessian, distance to the cone boundary, and the matrix literal text
//! format (`"2,1;1,2"`) used by configs and CSV output.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Dense real matrix, not necessarily symmetric (Brownian increments, Q, β,
/// coefficient factors). Finiteness is validated at construction boundaries
/// (parsing, [`SymMatrix::new`]), not on every operation.
pub type GeneralMatrix = DMatrix<f64>;

/// Relative tolerance for PSD cone membership: `lambda_min >= -1e-12 * ||x||`.
const CONE_ATOL_REL: f64 = 1e-12;
/// Relative singularity threshold for inversion.
const SINGULAR_TOL_REL: f64 = 1e-13;

pub fn frobenius(m: &GeneralMatrix) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn check_finite(m: &GeneralMatrix) -> Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if !m[(i, j)].is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
        }
    }
    Ok(())
}

/// `Tr(a b)` for general square matrices of equal dimension.
pub fn trace_prod(a: &GeneralMatrix, b: &GeneralMatrix) -> f64 {
    debug_assert_eq!(a.nrows(), b.nrows());
    let d = a.nrows();
    let mut t = 0.0;
    for i in 0..d {
        for j in 0..d {
            t += a[(i, j)] * b[(j, i)];
        }
    }
    t
}

/// A validated symmetric `d x d` matrix.
///
/// Construction symmetrizes `(A + Aᵀ)/2` and records the Frobenius norm of
/// the discarded antisymmetric part, so Euler-step rounding noise is absorbed
/// while staying observable.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    m: DMatrix<f64>,
    asymmetry: f64,
}

impl SymMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        check_finite(&m)?;
        let anti = (&m - m.transpose()) * 0.5;
        let asymmetry = frobenius(&anti);
        let sym = if asymmetry == 0.0 { m } else { (&m + m.transpose()) * 0.5 };
        Ok(SymMatrix { m: sym, asymmetry })
    }

    /// Wrap a matrix that is symmetric by construction (entrywise operations
    /// on already-symmetric operands). Debug builds verify the claim.
    fn wrap(m: DMatrix<f64>) -> Self {
        debug_assert!(m
            .iter()
            .zip(m.transpose().iter())
            .all(|(a, b)| a == b));
        SymMatrix { m, asymmetry: 0.0 }
    }

    pub fn identity(d: usize) -> Self {
        SymMatrix::wrap(DMatrix::identity(d, d))
    }

    pub fn zeros(d: usize) -> Self {
        SymMatrix::wrap(DMatrix::zeros(d, d))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let d = diag.len();
        let mut m = DMatrix::zeros(d, d);
        for (i, v) in diag.iter().enumerate() {
            m[(i, i)] = *v;
        }
        SymMatrix::wrap(m)
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.m
    }

    /// Frobenius norm of the antisymmetric part removed at construction.
    pub fn asymmetry(&self) -> f64 {
        self.asymmetry
    }

    /// Largest entrywise gap `|m_ij - m_ji|` of the stored matrix; zero for
    /// every value this type hands out.
    pub fn symmetry_gap(&self) -> f64 {
        let d = self.dim();
        let mut gap: f64 = 0.0;
        for i in 0..d {
            for j in 0..i {
                gap = gap.max((self.m[(i, j)] - self.m[(j, i)]).abs());
            }
        }
        gap
    }

    pub fn trace(&self) -> f64 {
        self.m.trace()
    }

    pub fn frobenius(&self) -> f64 {
        frobenius(&self.m)
    }

    pub fn scale(&self, s: f64) -> SymMatrix {
        SymMatrix::wrap(&self.m * s)
    }

    pub fn add(&self, other: &SymMatrix) -> SymMatrix {
        debug_assert_eq!(self.dim(), other.dim());
        SymMatrix::wrap(&self.m + &other.m)
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        debug_assert_eq!(self.dim(), other.dim());
        SymMatrix::wrap(&self.m - &other.m)
    }
}

impl std::fmt::Display for SymMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&format_matrix(&self.m))
    }
}

/// Eigendecomposition `x = V diag(λ) Vᵀ` with ascending eigenvalues and
/// orthonormal columns.
#[derive(Debug, Clone)]
pub struct SpectralForm {
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<f64>,
}

impl SpectralForm {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues[self.eigenvalues.len() - 1]
    }

    pub fn det(&self) -> f64 {
        self.eigenvalues.iter().product()
    }

    pub fn trace(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    /// `V diag(f(λ)) Vᵀ`, symmetrized against rounding.
    pub fn apply(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let d = self.dim();
        let v = &self.eigenvectors;
        let mut out = DMatrix::zeros(d, d);
        for k in 0..d {
            let fk = f(self.eigenvalues[k]);
            if fk == 0.0 {
                continue;
            }
            for i in 0..d {
                let vik = v[(i, k)] * fk;
                for j in 0..=i {
                    out[(i, j)] += vik * v[(j, k)];
                }
            }
        }
        for i in 0..d {
            for j in 0..i {
                out[(j, i)] = out[(i, j)];
            }
        }
        SymMatrix::wrap(out)
    }

    pub fn reconstruct(&self) -> SymMatrix {
        self.apply(|l| l)
    }
}

/// Eigendecomposition of a symmetric matrix. Dimensions 1 and 2 use exact
/// closed forms; larger matrices go through nalgebra's symmetric solver.
pub fn spectral_decompose(x: &SymMatrix) -> Result<SpectralForm> {
    let d = x.dim();
    match d {
        0 => Err(Error::InvalidArgument("empty matrix".into())),
        1 => Ok(SpectralForm {
            eigenvalues: vec![x.entry(0, 0)],
            eigenvectors: DMatrix::identity(1, 1),
        }),
        2 => Ok(spectral_2x2(x)),
        _ => {
            let eig = x
                .m
                .clone()
                .try_symmetric_eigen(f64::EPSILON, 0)
                .ok_or(Error::EigenFailed { dim: d })?;
            let mut idx: Vec<usize> = (0..d).collect();
            idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
            let eigenvalues: Vec<f64> = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
            let mut vectors = DMatrix::zeros(d, d);
            for (col, &i) in idx.iter().enumerate() {
                vectors.set_column(col, &eig.eigenvectors.column(i));
            }
            Ok(SpectralForm {
                eigenvalues,
                eigenvectors: vectors,
            })
        }
    }
}

fn spectral_2x2(x: &SymMatrix) -> SpectralForm {
    let a = x.entry(0, 0);
    let b = x.entry(0, 1);
    let c = x.entry(1, 1);
    let mid = 0.5 * (a + c);
    let disc = f64::hypot(0.5 * (a - c), b);
    let lo = mid - disc;
    let hi = mid + disc;
    // Eigenvector of the larger eigenvalue; the smaller one is its rotation.
    let (v0, v1) = if b == 0.0 {
        if a >= c {
            (1.0, 0.0)
        } else {
            (0.0, 1.0)
        }
    } else {
        let (p, q) = if (hi - a).abs() > (hi - c).abs() {
            (b, hi - a)
        } else {
            (hi - c, b)
        };
        let n = f64::hypot(p, q);
        (p / n, q / n)
    };
    let mut vectors = DMatrix::zeros(2, 2);
    // Columns ascending: first the small eigenvalue's vector.
    vectors[(0, 0)] = -v1;
    vectors[(1, 0)] = v0;
    vectors[(0, 1)] = v0;
    vectors[(1, 1)] = v1;
    SpectralForm {
        eigenvalues: vec![lo, hi],
        eigenvectors: vectors,
    }
}

/// `x^alpha` for PSD `x` and `alpha` in `[1/2, 1]`. Eigenvalues within the
/// cone tolerance below zero are clamped to zero; anything lower is an error.
pub fn psd_power(x: &SymMatrix, alpha: f64) -> Result<SymMatrix> {
    if !(0.5..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!(
            "alpha out of [0.5, 1]: {alpha}"
        )));
    }
    let form = spectral_decompose(x)?;
    let atol = CONE_ATOL_REL * x.frobenius();
    if form.lambda_min() < -atol {
        return Err(Error::NotInCone {
            lambda_min: form.lambda_min(),
        });
    }
    Ok(form.apply(|l| l.max(0.0).powf(alpha)))
}

/// Inverse of a symmetric positive definite matrix through its spectral form.
pub fn inv_spd(x: &SymMatrix) -> Result<SymMatrix> {
    let form = spectral_decompose(x)?;
    inv_from_spectral(&form, x.frobenius())
}

/// Error unless the decomposed matrix sits strictly inside the cone.
pub(crate) fn interior_check(form: &SpectralForm, scale: f64) -> Result<()> {
    let tol = SINGULAR_TOL_REL * scale;
    if form.lambda_min() <= tol {
        return Err(Error::BoundarySingular {
            lambda_min: form.lambda_min(),
            tol,
        });
    }
    Ok(())
}

pub(crate) fn inv_from_spectral(form: &SpectralForm, scale: f64) -> Result<SymMatrix> {
    interior_check(form, scale)?;
    Ok(form.apply(|l| 1.0 / l))
}

/// `∇ det(x) = det(x) x⁻¹` for positive definite `x`.
pub fn det_gradient(x: &SymMatrix) -> Result<SymMatrix> {
    let form = spectral_decompose(x)?;
    let inv = inv_from_spectral(&form, x.frobenius())?;
    Ok(inv.scale(form.det()))
}

/// Hessian of the determinant as a 4-index array:
/// entry `(ij, kl) = det(x) [ (x⁻¹)_kl (x⁻¹)_ij − (x⁻¹)_il (x⁻¹)_jk ]`.
///
/// The result shares [`CovariationTensor`]'s shape but only the pair swap
/// `(ij) <-> (kl)` is a symmetry of the Hessian; the within-pair swaps are
/// not.
pub fn det_hessian(x: &SymMatrix) -> Result<CovariationTensor> {
    let form = spectral_decompose(x)?;
    let inv = inv_from_spectral(&form, x.frobenius())?;
    let det = form.det();
    let d = x.dim();
    let mut t = CovariationTensor::zeros(d);
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                for l in 0..d {
                    let v = det
                        * (inv.entry(k, l) * inv.entry(i, j)
                            - inv.entry(i, l) * inv.entry(j, k));
                    t.set(i, j, k, l, v);
                }
            }
        }
    }
    Ok(t)
}

/// Frobenius distance from PSD `x` to the cone boundary, which equals its
/// smallest eigenvalue.
pub fn boundary_distance(x: &SymMatrix) -> Result<f64> {
    let form = spectral_decompose(x)?;
    let atol = CONE_ATOL_REL * x.frobenius();
    if form.lambda_min() < -atol {
        return Err(Error::NotInCone {
            lambda_min: form.lambda_min(),
        });
    }
    Ok(form.lambda_min().max(0.0))
}

/// Clamp the spectrum of a symmetric matrix to `max(λ, floor)`. Idempotent;
/// positive definite output whenever `floor > 0`.
pub fn cone_project(x: &SymMatrix, floor: f64) -> Result<SymMatrix> {
    let form = spectral_decompose(x)?;
    if form.lambda_min() >= floor {
        return Ok(x.clone());
    }
    Ok(form.apply(|l| l.max(floor)))
}

/// `Tr(x y) = Σ_ij x_ij y_ij` for symmetric matrices, the cone's scalar
/// product.
pub fn trace_inner(x: &SymMatrix, y: &SymMatrix) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            left: x.dim(),
            right: y.dim(),
        });
    }
    Ok(x.m.iter().zip(y.m.iter()).map(|(a, b)| a * b).sum())
}

/// Instantaneous covariation of the matrix SDE state as a fully symmetric
/// 4-index array `T[i][j][k][l]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariationTensor {
    d: usize,
    data: Vec<f64>,
}

impl CovariationTensor {
    pub fn zeros(d: usize) -> Self {
        CovariationTensor {
            d,
            data: vec![0.0; d * d * d * d],
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    fn idx(&self, i: usize, j: usize, k: usize, l: usize) -> usize {
        ((i * self.d + j) * self.d + k) * self.d + l
    }

    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.data[self.idx(i, j, k, l)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, l: usize, v: f64) {
        let n = self.idx(i, j, k, l);
        self.data[n] = v;
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Check the full symmetry `T_ijkl = T_jikl = T_ijlk = T_klij`.
    pub fn is_fully_symmetric(&self, atol: f64) -> bool {
        let d = self.d;
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    for l in 0..d {
                        let v = self.get(i, j, k, l);
                        if (v - self.get(j, i, k, l)).abs() > atol
                            || (v - self.get(i, j, l, k)).abs() > atol
                            || (v - self.get(k, l, i, j)).abs() > atol
                        {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }
}

/// Parse the matrix literal format: rows separated by `;`, entries by `,`.
pub fn parse_matrix(text: &str) -> Result<GeneralMatrix> {
    let rows: Vec<&str> = text.split(';').collect();
    if rows.iter().all(|r| r.trim().is_empty()) {
        return Err(Error::Parse("empty matrix literal".into()));
    }
    let mut entries: Vec<Vec<f64>> = Vec::with_capacity(rows.len());
    for (ri, row) in rows.iter().enumerate() {
        let mut vals = Vec::new();
        for (ci, cell) in row.split(',').enumerate() {
            let cell = cell.trim();
            let v: f64 = cell.parse().map_err(|_| {
                Error::Parse(format!("row {}, entry {}: bad number {cell:?}", ri + 1, ci + 1))
            })?;
            if !v.is_finite() {
                return Err(Error::Parse(format!(
                    "row {}, entry {}: non-finite value",
                    ri + 1,
                    ci + 1
                )));
            }
            vals.push(v);
        }
        if let Some(first) = entries.first() {
            if vals.len() != first.len() {
                return Err(Error::Parse(format!(
                    "row {} has {} entries, expected {}",
                    ri + 1,
                    vals.len(),
                    first.len()
                )));
            }
        }
        entries.push(vals);
    }
    let nrows = entries.len();
    let ncols = entries[0].len();
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| entries[i][j]))
}

/// Parse a literal that must denote a symmetric matrix (config input).
pub fn parse_sym(text: &str) -> Result<SymMatrix> {
    let m = parse_matrix(text)?;
    if m.nrows() != m.ncols() {
        return Err(Error::Parse(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let sym = SymMatrix::new(m)?;
    let scale = 1.0 + sym.frobenius();
    if sym.asymmetry() > 1e-9 * scale {
        return Err(Error::Parse(format!(
            "matrix is not symmetric (asymmetry {:.3e})",
            sym.asymmetry()
        )));
    }
    Ok(sym)
}

/// Render a matrix in the literal format, row-major, shortest round-trip
/// float formatting.
pub fn format_matrix(m: &GeneralMatrix) -> String {
    let mut rows = Vec::with_capacity(m.nrows());
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{}", m[(i, j)])).collect();
        rows.push(row.join(","));
    }
    rows.join(";")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sym(entries: &[&[f64]]) -> SymMatrix {
        let d = entries.len();
        SymMatrix::new(DMatrix::from_fn(d, d, |i, j| entries[i][j])).unwrap()
    }

    #[test]
    fn construction_symmetrizes_and_records() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        let s = SymMatrix::new(m).unwrap();
        assert_eq!(s.entry(0, 1), 1.0);
        assert_eq!(s.entry(1, 0), 1.0);
        assert!(s.asymmetry() > 0.0);
        assert_eq!(s.symmetry_gap(), 0.0);
    }

    #[test]
    fn construction_rejects_non_finite() {
        let m = DMatrix::from_row_slice(1, 1, &[f64::NAN]);
        assert!(matches!(
            SymMatrix::new(m),
            Err(Error::NonFinite { row: 0, col: 0 })
        ));
    }

    #[test]
    fn spectral_identity() {
        let form = spectral_decompose(&SymMatrix::identity(2)).unwrap();
        assert_eq!(form.eigenvalues(), &[1.0, 1.0]);
    }

    #[test]
    fn spectral_diagonal_sorted() {
        let form = spectral_decompose(&SymMatrix::from_diagonal(&[3.0, 2.0])).unwrap();
        assert_eq!(form.eigenvalues(), &[2.0, 3.0]);
        // Standard basis columns, small eigenvalue first.
        assert_eq!(form.eigenvectors()[(1, 0)].abs(), 1.0);
        assert_eq!(form.eigenvectors()[(0, 1)].abs(), 1.0);
    }

    #[test]
    fn spectral_2x2_hand_case() {
        // [[2,1],[1,2]] has eigenvalues 1, 3 with eigenvectors (1,-1)/√2 and
        // (1,1)/√2.
        let x = sym(&[&[2.0, 1.0], &[1.0, 2.0]]);
        let form = spectral_decompose(&x).unwrap();
        assert_relative_eq!(form.eigenvalues()[0], 1.0, max_relative = 1e-14);
        assert_relative_eq!(form.eigenvalues()[1], 3.0, max_relative = 1e-14);
        let v = form.eigenvectors();
        let s = 1.0 / 2.0_f64.sqrt();
        assert_relative_eq!(v[(0, 0)].abs(), s, max_relative = 1e-12);
        assert_relative_eq!(v[(1, 1)].abs(), s, max_relative = 1e-12);
        // Column of the larger eigenvalue has equal signs.
        assert_relative_eq!(v[(0, 1)], v[(1, 1)], max_relative = 1e-12);
        let rec = form.reconstruct();
        assert!(rec.sub(&x).frobenius() <= 1e-10 * x.frobenius());
    }

    #[test]
    fn spectral_reconstruction_d4() {
        // Fixed non-trivial 4x4 case through the iterative solver.
        let x = sym(&[
            &[4.0, 1.0, 0.5, 0.0],
            &[1.0, 3.0, 0.2, 0.1],
            &[0.5, 0.2, 2.0, 0.3],
            &[0.0, 0.1, 0.3, 1.0],
        ]);
        let form = spectral_decompose(&x).unwrap();
        assert!(form.reconstruct().sub(&x).frobenius() <= 1e-10 * x.frobenius());
        let v = form.eigenvectors();
        let gram = v.transpose() * v;
        let eye = DMatrix::<f64>::identity(4, 4);
        assert!(frobenius(&(gram - eye)) <= 1e-10);
        for w in form.eigenvalues().windows(2) {
            assert!(w[0] <= w[1]);
        }
    }

    #[test]
    fn psd_power_examples() {
        let id = SymMatrix::identity(3);
        assert_eq!(psd_power(&id, 0.7).unwrap(), id);

        let x = SymMatrix::from_diagonal(&[4.0, 9.0]);
        let r = psd_power(&x, 0.5).unwrap();
        assert_relative_eq!(r.entry(0, 0), 2.0, max_relative = 1e-12);
        assert_relative_eq!(r.entry(1, 1), 3.0, max_relative = 1e-12);

        // [[2,1],[1,2]]^(1/2) = [[(√3+1)/2, (√3-1)/2], [(√3-1)/2, (√3+1)/2]].
        let x = sym(&[&[2.0, 1.0], &[1.0, 2.0]]);
        let r = psd_power(&x, 0.5).unwrap();
        let s3 = 3.0_f64.sqrt();
        assert_relative_eq!(r.entry(0, 0), (s3 + 1.0) / 2.0, max_relative = 1e-12);
        assert_relative_eq!(r.entry(0, 1), (s3 - 1.0) / 2.0, max_relative = 1e-12);
        assert_relative_eq!(r.entry(1, 1), (s3 + 1.0) / 2.0, max_relative = 1e-12);
    }

    #[test]
    fn psd_power_square_roundtrip() {
        let x = sym(&[&[2.0, 1.0], &[1.0, 2.0]]);
        let r = psd_power(&x, 0.5).unwrap();
        let sq = SymMatrix::new(r.as_matrix() * r.as_matrix()).unwrap();
        assert!(sq.sub(&x).frobenius() <= 1e-9 * x.frobenius());
    }

    #[test]
    fn psd_power_rejects_indefinite_and_bad_alpha() {
        let x = SymMatrix::from_diagonal(&[-1.0, 2.0]);
        assert!(matches!(psd_power(&x, 0.5), Err(Error::NotInCone { .. })));
        let id = SymMatrix::identity(2);
        assert!(matches!(
            psd_power(&id, 0.3),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn inv_spd_examples() {
        assert_eq!(inv_spd(&SymMatrix::identity(2)).unwrap(), SymMatrix::identity(2));

        let x = SymMatrix::from_diagonal(&[2.0, 4.0]);
        let inv = inv_spd(&x).unwrap();
        assert_relative_eq!(inv.entry(0, 0), 0.5, max_relative = 1e-12);
        assert_relative_eq!(inv.entry(1, 1), 0.25, max_relative = 1e-12);

        // [[2,1],[1,2]]⁻¹ = (1/3)[[2,-1],[-1,2]].
        let x = sym(&[&[2.0, 1.0], &[1.0, 2.0]]);
        let inv = inv_spd(&x).unwrap();
        assert_relative_eq!(inv.entry(0, 0), 2.0 / 3.0, max_relative = 1e-12);
        assert_relative_eq!(inv.entry(0, 1), -1.0 / 3.0, max_relative = 1e-12);
        let prod = x.as_matrix() * inv.as_matrix();
        let eye = DMatrix::<f64>::identity(2, 2);
        assert!(frobenius(&(prod - eye)) <= 1e-9);
    }

    #[test]
    fn inv_spd_rejects_singular() {
        let x = SymMatrix::from_diagonal(&[0.0, 1.0]);
        assert!(matches!(inv_spd(&x), Err(Error::BoundarySingular { .. })));
    }

    #[test]
    fn det_gradient_examples() {
        assert_eq!(det_gradient(&SymMatrix::identity(3)).unwrap(), SymMatrix::identity(3));

        let g = det_gradient(&SymMatrix::from_diagonal(&[2.0, 3.0])).unwrap();
        assert_relative_eq!(g.entry(0, 0), 3.0, max_relative = 1e-12);
        assert_relative_eq!(g.entry(1, 1), 2.0, max_relative = 1e-12);

        let g = det_gradient(&sym(&[&[2.0, 1.0], &[1.0, 2.0]])).unwrap();
        assert_relative_eq!(g.entry(0, 0), 2.0, max_relative = 1e-12);
        assert_relative_eq!(g.entry(0, 1), -1.0, max_relative = 1e-12);
        assert_relative_eq!(g.entry(1, 1), 2.0, max_relative = 1e-12);
    }

    #[test]
    fn det_gradient_matches_finite_differences() {
        // det as a function of all d^2 independent entries; the gradient at a
        // symmetric point is det(x) x⁻¹.
        let x = sym(&[&[2.0, 0.7], &[0.7, 1.5]]);
        let g = det_gradient(&x).unwrap();
        let h = 1e-5 * x.frobenius();
        for i in 0..2 {
            for j in 0..2 {
                let mut plus = x.as_matrix().clone();
                plus[(i, j)] += h;
                let mut minus = x.as_matrix().clone();
                minus[(i, j)] -= h;
                let fd = (plus.determinant() - minus.determinant()) / (2.0 * h);
                assert_relative_eq!(g.entry(i, j), fd, max_relative = 1e-7);
            }
        }
    }

    #[test]
    fn det_hessian_examples() {
        let t = det_hessian(&SymMatrix::identity(2)).unwrap();
        assert_eq!(t.get(0, 0, 0, 0), 0.0);
        assert_eq!(t.get(0, 0, 1, 1), 1.0);

        let t = det_hessian(&SymMatrix::from_diagonal(&[2.0, 3.0])).unwrap();
        assert_relative_eq!(t.get(0, 0, 1, 1), 1.0, max_relative = 1e-12);
        // Mixed entry: ∂²det/∂x_12 ∂x_21 = -1 for d = 2.
        assert_relative_eq!(t.get(1, 0, 0, 1), -1.0, max_relative = 1e-12);
        assert_eq!(t.get(0, 1, 0, 1), 0.0);
    }

    #[test]
    fn det_hessian_matches_finite_differences() {
        let x = sym(&[&[2.0, 0.4], &[0.4, 1.2]]);
        let t = det_hessian(&x).unwrap();
        let h = 1e-4 * x.frobenius();
        let det_at = |pairs: &[(usize, usize, f64)]| {
            let mut m = x.as_matrix().clone();
            for &(i, j, dv) in pairs {
                m[(i, j)] += dv;
            }
            m.determinant()
        };
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        let fd = (det_at(&[(i, j, h), (k, l, h)])
                            - det_at(&[(i, j, h), (k, l, -h)])
                            - det_at(&[(i, j, -h), (k, l, h)])
                            + det_at(&[(i, j, -h), (k, l, -h)]))
                            / (4.0 * h * h);
                        let exact = t.get(i, j, k, l);
                        assert!(
                            (exact - fd).abs() <= 1e-5 * (1.0 + t.max_abs()),
                            "entry ({i}{j},{k}{l}): exact {exact}, fd {fd}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn boundary_distance_examples() {
        assert_eq!(boundary_distance(&SymMatrix::identity(2)).unwrap(), 1.0);
        assert_eq!(
            boundary_distance(&SymMatrix::from_diagonal(&[0.0, 1.0])).unwrap(),
            0.0
        );
        assert_relative_eq!(
            boundary_distance(&SymMatrix::from_diagonal(&[0.1, 5.0])).unwrap(),
            0.1,
            max_relative = 1e-14
        );
        assert!(matches!(
            boundary_distance(&SymMatrix::from_diagonal(&[-1.0, 1.0])),
            Err(Error::NotInCone { .. })
        ));
    }

    #[test]
    fn boundary_distance_brute_force_oracle() {
        // No sampled rank-deficient PSD matrix may be closer to x than
        // lambda_min(x); the minimizer is x with its smallest eigenvalue
        // zeroed.
        let x = SymMatrix::from_diagonal(&[0.1, 5.0]);
        let d = boundary_distance(&x).unwrap();
        let zeroed = spectral_decompose(&x)
            .unwrap()
            .apply(|l| if l <= 0.1 { 0.0 } else { l });
        assert_relative_eq!(x.sub(&zeroed).frobenius(), d, max_relative = 1e-12);

        let stream = crate::rng::NoiseStream::new(7);
        let mut c = 0;
        for _ in 0..500 {
            // Random rank-one PSD y = s vvᵀ.
            let v = nalgebra::DVector::from_fn(2, |_, _| {
                c += 1;
                stream.normal(c)
            });
            c += 1;
            let s = stream.uniform(c) * 8.0;
            let y = SymMatrix::new(&v * v.transpose() * s).unwrap();
            assert!(x.sub(&y).frobenius() >= d - 1e-12);
        }
    }

    #[test]
    fn cone_project_examples() {
        let id = SymMatrix::identity(2);
        assert_eq!(cone_project(&id, 0.0).unwrap(), id);

        let x = SymMatrix::from_diagonal(&[-1.0, 2.0]);
        let p = cone_project(&x, 0.0).unwrap();
        assert_relative_eq!(p.entry(0, 0), 0.0, epsilon = 1e-15);
        assert_relative_eq!(p.entry(1, 1), 2.0, max_relative = 1e-14);

        let p = cone_project(&x, 1e-8).unwrap();
        assert_relative_eq!(p.entry(0, 0), 1e-8, max_relative = 1e-10);

        // Idempotence.
        let pp = cone_project(&p, 1e-8).unwrap();
        assert_eq!(p, pp);
    }

    #[test]
    fn trace_inner_examples() {
        let id = SymMatrix::identity(2);
        assert_eq!(trace_inner(&id, &id).unwrap(), 2.0);
        let a = SymMatrix::from_diagonal(&[1.0, 2.0]);
        let b = SymMatrix::from_diagonal(&[3.0, 4.0]);
        assert_eq!(trace_inner(&a, &b).unwrap(), 11.0);
        assert!(matches!(
            trace_inner(&id, &SymMatrix::identity(3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn det_monotone_under_psd_increment() {
        let x = sym(&[&[2.0, 0.5], &[0.5, 1.0]]);
        let j = sym(&[&[0.3, 0.1], &[0.1, 0.2]]);
        assert!(boundary_distance(&j).is_ok());
        let dx = spectral_decompose(&x).unwrap().det();
        let dxj = spectral_decompose(&x.add(&j)).unwrap().det();
        assert!(dxj >= dx);
    }

    #[test]
    fn matrix_literal_roundtrip() {
        let m = parse_matrix("2,1;1,2").unwrap();
        assert_eq!(m[(0, 1)], 1.0);
        assert_eq!(format_matrix(&m), "2,1;1,2");

        let m = parse_matrix(" 1.5e-3 , -2 ").unwrap();
        assert_eq!(m.nrows(), 1);
        assert_eq!(m[(0, 0)], 1.5e-3);
        let back = parse_matrix(&format_matrix(&m)).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn matrix_literal_errors() {
        assert!(matches!(parse_matrix(""), Err(Error::Parse(_))));
        assert!(matches!(parse_matrix("1,2;3"), Err(Error::Parse(_))));
        assert!(matches!(parse_matrix("1,x"), Err(Error::Parse(_))));
        assert!(matches!(parse_sym("1,2;3,4"), Err(Error::Parse(_))));
        assert!(parse_sym("1,2;2,4").is_ok());
        // Non-square symmetric parse.
        assert!(matches!(parse_sym("1,2,3;4,5,6"), Err(Error::Parse(_))));
    }

    #[test]
    fn trace_prod_agrees_with_product_trace() {
        let a = parse_matrix("1,2;3,4").unwrap();
        let b = parse_matrix("0.5,1;2,-1").unwrap();
        let direct = (&a * &b).trace();
        assert_relative_eq!(trace_prod(&a, &b), direct, max_relative = 1e-14);
    }
}
