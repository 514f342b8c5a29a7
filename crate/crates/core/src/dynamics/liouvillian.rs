//! Column-stacked superoperator form of the Lindblad generator and its
//! spectral analysis.

use super::{ComplexMatrix, DynamicsError};
use crate::units::angular;
use nalgebra::DVector;
use num_complex::Complex64;

/// Column-stacking vectorization: `vec(ρ)[i + j·d] = ρ[i, j]`.
pub fn vec_column(rho: &ComplexMatrix) -> DVector<Complex64> {
    DVector::from_column_slice(rho.as_slice())
}

pub fn unvec(v: &DVector<Complex64>) -> ComplexMatrix {
    let d = (v.len() as f64).sqrt().round() as usize;
    ComplexMatrix::from_column_slice(d, d, v.as_slice())
}

/// L = −i(I⊗H) + i(Hᵀ⊗I) + Σ 2πκ (a*⊗a − ½ I⊗a†a − ½ (a†a)ᵀ⊗I), with `H`
/// in rad/s and each rate κ in Hz.
pub fn build_liouvillian(h: &ComplexMatrix, collapse: &[(ComplexMatrix, f64)]) -> Result<ComplexMatrix, DynamicsError> {
    let d = h.nrows();
    if h.ncols() != d {
        return Err(DynamicsError::DimensionMismatch("Hamiltonian is not square".into()));
    }
    let id = ComplexMatrix::identity(d, d);
    let i = Complex64::new(0.0, 1.0);
    let mut l = id.kronecker(h) * (-i) + h.transpose().kronecker(&id) * i;
    for (a, rate) in collapse {
        if a.nrows() != d || a.ncols() != d {
            return Err(DynamicsError::DimensionMismatch(format!(
                "collapse operator is {}×{}, Hamiltonian is {d}×{d}",
                a.nrows(),
                a.ncols()
            )));
        }
        let k = Complex64::new(angular(*rate), 0.0);
        let ada = a.adjoint() * a;
        let half = Complex64::new(0.5, 0.0);
        l += (a.conjugate().kronecker(a) - id.kronecker(&ada) * half - ada.transpose().kronecker(&id) * half) * k;
    }
    Ok(l)
}

#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<Complex64>,
    /// Unit-norm right eigenvectors as columns.
    pub vectors: ComplexMatrix,
}

/// Right eigenpairs of a general complex matrix via complex Schur form and
/// back-substitution on the triangular factor.
pub fn eigen_decomposition(m: &ComplexMatrix) -> Result<Eigen, DynamicsError> {
    let n = m.nrows();
    let schur = nalgebra::Schur::try_new(m.clone(), f64::EPSILON, 1000 * n.max(1)).ok_or(DynamicsError::EigenNonConvergence)?;
    let (q, t) = schur.unpack();
    let scale = t.iter().fold(0.0f64, |a, z| a.max(z.norm())).max(f64::MIN_POSITIVE);
    for j in 0..n {
        for i in j + 1..n {
            if t[(i, j)].norm() > 1e3 * f64::EPSILON * scale {
                return Err(DynamicsError::EigenNonConvergence);
            }
        }
    }
    let small = f64::EPSILON * scale;
    let values: Vec<Complex64> = (0..n).map(|k| t[(k, k)]).collect();
    let mut vectors = ComplexMatrix::zeros(n, n);
    for k in 0..n {
        let lambda = values[k];
        let mut y = DVector::from_element(n, Complex64::new(0.0, 0.0));
        y[k] = Complex64::new(1.0, 0.0);
        for i in (0..k).rev() {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in i + 1..=k {
                acc += t[(i, j)] * y[j];
            }
            let mut denom = t[(i, i)] - lambda;
            if denom.norm() < small {
                denom = Complex64::new(small, 0.0);
            }
            y[i] = -acc / denom;
        }
        let v = &q * y;
        let norm = v.norm();
        vectors.set_column(k, &(v / Complex64::new(norm, 0.0)));
    }
    Ok(Eigen { values, vectors })
}

#[derive(Debug, Clone)]
pub struct DarkMode {
    pub eigenvalue: Complex64,
    /// Column-stacked eigenvector.
    pub eigenvector: DVector<Complex64>,
    /// Share of the matricized eigenvector's weight carried by filter
    /// excitations: Σ|X_ij|²(n_i + n_j)/2 over Σ|X_ij|².
    pub filter_weight: f64,
    /// ‖L v − λ v‖.
    pub residual: f64,
}

/// Eigenmodes of `l` with |Re λ| < `tol` (rad/s). `filter_number` is the
/// filter occupation of each basis state.
pub fn dark_modes(l: &ComplexMatrix, tol: f64, filter_number: &[f64]) -> Result<Vec<DarkMode>, DynamicsError> {
    let d2 = l.nrows();
    let d = (d2 as f64).sqrt().round() as usize;
    if d * d != d2 || filter_number.len() != d {
        return Err(DynamicsError::DimensionMismatch(format!(
            "superoperator of size {d2} with filter table of length {}",
            filter_number.len()
        )));
    }
    let eig = eigen_decomposition(l)?;
    let mut out = Vec::new();
    for (k, lambda) in eig.values.iter().enumerate() {
        if lambda.re.abs() >= tol {
            continue;
        }
        let v = eig.vectors.column(k).into_owned();
        let x = unvec(&v);
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..d {
            for j in 0..d {
                let w = x[(i, j)].norm_sqr();
                num += w * 0.5 * (filter_number[i] + filter_number[j]);
                den += w;
            }
        }
        let residual = (l * &v - &v * *lambda).norm();
        out.push(DarkMode {
            eigenvalue: *lambda,
            eigenvector: v,
            filter_weight: if den > 0.0 { num / den } else { 0.0 },
            residual,
        });
    }
    Ok(out)
}
