use nalgebra::DMatrix;

/// Relative singular-value cutoff of the exact pseudoinverse.
pub const PINV_RTOL: f64 = 1e-10;

const PINV_REFINE_STEPS: usize = 2;

/// `Jᵀ (J Jᵀ + λ² I)⁻¹`.
///
/// For λ = 0 on a rank-deficient `J` the normal matrix is singular and the
/// exact (SVD) pseudoinverse is returned instead.
pub fn damped_pseudoinverse(j: &DMatrix<f64>, damping: f64) -> DMatrix<f64> {
    let (m, n) = j.shape();
    if m == 0 {
        return DMatrix::zeros(n, 0);
    }
    let gram = j * j.transpose() + DMatrix::identity(m, m) * (damping * damping);
    match gram.clone().cholesky() {
        Some(chol) => {
            // (J Jᵀ + λ²I) X = J  ⇒  X = (J Jᵀ + λ²I)⁻¹ J, and J† = Xᵀ
            chol.solve(j).transpose()
        }
        None => exact_pseudoinverse(j),
    }
}

/// Moore–Penrose pseudoinverse via SVD, dropping singular values below
/// `PINV_RTOL` times the largest one.
pub fn exact_pseudoinverse(j: &DMatrix<f64>) -> DMatrix<f64> {
    let (m, n) = j.shape();
    if m == 0 || n == 0 {
        return DMatrix::zeros(n, m);
    }
    let svd = j.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if smax == 0.0 {
        return DMatrix::zeros(n, m);
    }
    let mut x = svd
        .pseudo_inverse(smax * PINV_RTOL)
        .expect("both singular vector sets were computed");
    // The SVD can leave ~1e-9 reconstruction error when singular values
    // cluster. Newton-Schulz steps X <- 2X - XJX restore full precision
    // and keep the range of X, so truncated directions stay truncated.
    // A step is kept only while it lowers the residual of J X J = J, which
    // guards against ill-conditioned inputs where the iteration diverges.
    let residual = |x: &DMatrix<f64>| (j * x * j - j).amax();
    let mut best = residual(&x);
    for _ in 0..PINV_REFINE_STEPS {
        let next = &x * 2.0 - &x * j * &x;
        let r = residual(&next);
        if !(r < best) {
            break;
        }
        x = next;
        best = r;
    }
    x
}

/// `I − J† J` with the exact pseudoinverse of the (augmented) Jacobian.
pub fn null_space_projector(j_aug: &DMatrix<f64>) -> DMatrix<f64> {
    let n = j_aug.ncols();
    DMatrix::identity(n, n) - exact_pseudoinverse(j_aug) * j_aug
}
