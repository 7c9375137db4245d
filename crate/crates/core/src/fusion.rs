//! PCA fusion of the multi-frequency image stack into one integrated image.
//!
//! The stack is centered across frequencies, decomposed through the small
//! `N_omega x N_omega` Gram matrix (never the pixel-sized covariance), and
//! recombined from the leading components. Because every nonzero right
//! singular vector of a centered stack is orthogonal to the constant vector,
//! the row means of any truncated reconstruction vanish identically; the
//! integrated image therefore adds the mean image back unless the caller asks
//! for the raw oscillation output.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::reconstruct::ImageStack;

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("PCA needs at least 2 frequencies, got {0}")]
    TooFewFrequencies(usize),
    #[error("image length {got} does not match the decomposition ({expected})")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("eigendecomposition failed")]
    NumericalFailure,
}

/// Which part of the complex admittivity images to fuse.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Real,
    Imag,
}

/// Extract one real part of the stack and remove the across-frequency mean
/// image from every column.
pub fn center_stack(stack: &ImageStack, part: Part) -> Result<DMatrix<f64>, FusionError> {
    let n = stack.n_frequencies();
    if n < 2 {
        return Err(FusionError::TooFewFrequencies(n));
    }
    let m = stack.n_pixels();
    let mut x = DMatrix::<f64>::zeros(m, n);
    for j in 0..n {
        for i in 0..m {
            let v = stack.images[(i, j)];
            x[(i, j)] = match part {
                Part::Real => v.re,
                Part::Imag => v.im,
            };
        }
    }
    let mean = x.column_mean();
    for j in 0..n {
        let mut col = x.column_mut(j);
        col -= &mean;
    }
    Ok(x)
}

/// Mean image of one real part (the quantity removed by [`center_stack`]).
pub fn mean_image(stack: &ImageStack, part: Part) -> DVector<f64> {
    let m = stack.n_pixels();
    let n = stack.n_frequencies();
    let mut mean = DVector::<f64>::zeros(m);
    for j in 0..n {
        for i in 0..m {
            let v = stack.images[(i, j)];
            mean[i] += match part {
                Part::Real => v.re,
                Part::Imag => v.im,
            };
        }
    }
    mean / n as f64
}

/// Thin SVD of a centered stack via the Gram matrix.
#[derive(Debug, Clone)]
pub struct PcaDecomposition {
    pub mean_image: DVector<f64>,
    /// covariance eigenvalues (squared singular values / N_omega), descending
    pub eigenvalues: Vec<f64>,
    /// singular values of the centered matrix
    pub singular_values: Vec<f64>,
    /// orthonormal left vectors (M x r)
    pub left: DMatrix<f64>,
    /// orthonormal right vectors (N_omega x r)
    pub right: DMatrix<f64>,
    pub n_kept: usize,
}

impl PcaDecomposition {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    /// Rank-`n` reconstruction `sum s_i u_i v_i^T`.
    pub fn reconstruct(&self, n: usize) -> DMatrix<f64> {
        let n = n.min(self.rank());
        let m = self.left.nrows();
        let cols = self.right.nrows();
        let mut out = DMatrix::<f64>::zeros(m, cols);
        for i in 0..n {
            let u = self.left.column(i);
            let v = self.right.column(i);
            let s = self.singular_values[i];
            for c in 0..cols {
                for r in 0..m {
                    out[(r, c)] += s * u[r] * v[c];
                }
            }
        }
        out
    }

    /// Indices of adjacent eigenvalue pairs that are numerically degenerate.
    pub fn degenerate_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 1..self.eigenvalues.len() {
            let (a, b) = (self.eigenvalues[i - 1], self.eigenvalues[i]);
            if a > 0.0 && (a - b).abs() <= 1e-12 * a {
                out.push((i - 1, i));
            }
        }
        out
    }

    /// Fraction of the total eigenvalue mass captured by the first `n`.
    pub fn energy_fraction(&self, n: usize) -> f64 {
        let total: f64 = self.eigenvalues.iter().sum();
        if total == 0.0 {
            return 1.0;
        }
        self.eigenvalues.iter().take(n).sum::<f64>() / total
    }
}

/// Thin SVD of the centered stack. The work is bounded by the small
/// frequency count (`O(M N_omega^2)`); the `M x M` covariance is never
/// formed. A plain Gram-matrix eigensolve would cap the round-trip accuracy
/// at `sqrt(eps)`, losing the nearly dependent columns a spectroscopic stack
/// typically has.
pub fn decompose(centered: &DMatrix<f64>) -> Result<PcaDecomposition, FusionError> {
    let n = centered.ncols();
    let m = centered.nrows();
    let svd = centered.clone().svd(true, true);
    let u_full = svd.u.as_ref().ok_or(FusionError::NumericalFailure)?;
    let vt_full = svd.v_t.as_ref().ok_or(FusionError::NumericalFailure)?;
    let s_max = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let cutoff = 1e-12 * s_max.max(1e-300);
    // nalgebra returns unordered singular values; sort descending
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let kept: Vec<usize> = order
        .into_iter()
        .filter(|&i| svd.singular_values[i] > cutoff)
        .collect();
    let r = kept.len();
    let mut left = DMatrix::<f64>::zeros(m, r);
    let mut right = DMatrix::<f64>::zeros(n, r);
    let mut singular_values = Vec::with_capacity(r);
    for (col, &i) in kept.iter().enumerate() {
        let s = svd.singular_values[i];
        if !s.is_finite() {
            return Err(FusionError::NumericalFailure);
        }
        singular_values.push(s);
        left.set_column(col, &u_full.column(i).into_owned());
        right.set_column(col, &vt_full.row(i).transpose());
    }
    Ok(PcaDecomposition {
        mean_image: DVector::zeros(m),
        eigenvalues: singular_values.iter().map(|s| s * s / n as f64).collect(),
        singular_values,
        left,
        right,
        n_kept: r,
    })
}

/// Principal components `p_i = u_i^T (image - mean_image)`.
pub fn project(image: &DVector<f64>, decomp: &PcaDecomposition) -> Result<Vec<f64>, FusionError> {
    if image.len() != decomp.left.nrows() {
        return Err(FusionError::DimensionMismatch {
            got: image.len(),
            expected: decomp.left.nrows(),
        });
    }
    let centered = image - &decomp.mean_image;
    Ok((0..decomp.rank())
        .map(|i| decomp.left.column(i).dot(&centered))
        .collect())
}

/// One fused part (real or imaginary).
#[derive(Debug, Clone)]
pub struct FusedPart {
    /// row-wise mean over the truncated reconstruction of the centered stack
    /// (identically zero in exact arithmetic; kept as the degenerate check)
    pub oscillation: DVector<f64>,
    /// integrated image: mean image plus the oscillation output
    pub with_mean: DVector<f64>,
    pub decomposition: PcaDecomposition,
    /// number of components actually used
    pub n_used: usize,
    /// whether the request exceeded the rank and was truncated
    pub truncated: bool,
}

/// Result of fusing both parts of a stack.
#[derive(Debug, Clone)]
pub struct FusionResult {
    pub real: FusedPart,
    pub imag: FusedPart,
}

/// Fuse one part of the stack from its leading `n_components`.
pub fn fuse_part(
    stack: &ImageStack,
    n_components: usize,
    part: Part,
) -> Result<FusedPart, FusionError> {
    let centered = center_stack(stack, part)?;
    let mut decomp = decompose(&centered)?;
    decomp.mean_image = mean_image(stack, part);
    let truncated = n_components > decomp.rank();
    let n_used = n_components.min(decomp.rank());
    let recon = decomp.reconstruct(n_used);
    let n_cols = recon.ncols() as f64;
    let oscillation = DVector::<f64>::from_iterator(
        recon.nrows(),
        recon.row_iter().map(|r| r.sum() / n_cols),
    );
    let with_mean = &decomp.mean_image + &oscillation;
    let mut decomp_out = decomp.clone();
    decomp_out.n_kept = n_used;
    Ok(FusedPart {
        oscillation,
        with_mean,
        decomposition: decomp_out,
        n_used,
        truncated,
    })
}

/// Fuse real and imaginary parts independently.
pub fn fuse(stack: &ImageStack, n_components: usize) -> Result<FusionResult, FusionError> {
    Ok(FusionResult {
        real: fuse_part(stack, n_components, Part::Real)?,
        imag: fuse_part(stack, n_components, Part::Imag)?,
    })
}
