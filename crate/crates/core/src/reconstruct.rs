//! Linearized sensitivity-matrix reconstruction of per-frequency complex
//! admittivity perturbation images.
//!
//! The sensitivity rows are `int_pixel grad u_j . grad u_k` over the
//! homogeneous reference fields. Since the background admittivity is spatially
//! constant, the reference fields scale like `1/gamma_b(omega)`, so one real
//! geometric matrix serves every frequency.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::admittivity::{Frequency, MaterialSpec};
use crate::forward::{ForwardError, ForwardSolver, NeumannCurrent};
use crate::geometry::{Mesh, Pixelation};
use crate::protocol::{make_injection, BoundaryDataset, ElectrodeLayout, ProtocolError};

#[derive(Debug, Error)]
pub enum ReconstructError {
    #[error("singular normal equations (alpha = 0 with rank-deficient sensitivity)")]
    SingularSystem,
    #[error("dataset and reference frequencies differ")]
    FrequencyMismatch,
    #[error("dataset electrode count does not match the sensitivity matrix")]
    ShapeMismatch,
    #[error(transparent)]
    Forward(#[from] ForwardError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

/// Tikhonov regularization choice.
#[derive(Debug, Clone, Copy)]
pub enum Regularization {
    /// fixed parameter
    Fixed(f64),
    /// `alpha = factor * ||J||^2` (spectral norm); the working default with
    /// `factor = 1e-4`
    RelativeToNorm(f64),
    /// discrepancy principle: pick alpha so the residual matches the noise
    /// norm estimate
    Discrepancy { noise_norm: f64 },
}

impl Default for Regularization {
    fn default() -> Self {
        Regularization::RelativeToNorm(1e-4)
    }
}

/// Sensitivity matrix over all `(k, j)` injection/measurement pairs.
pub struct SensitivityMatrix {
    /// 1-based (injection, measurement) pair per row
    rows: Vec<(usize, usize)>,
    /// geometric rows from unit-conductivity reference fields
    j_geom: DMatrix<f64>,
    materials: MaterialSpec,
    pub pixelation: Pixelation,
}

impl SensitivityMatrix {
    pub fn rows(&self) -> &[(usize, usize)] {
        &self.rows
    }

    pub fn n_pixels(&self) -> usize {
        self.j_geom.ncols()
    }

    /// Complex sensitivity at a frequency: `J(omega) = J_geom / gamma_b^2`.
    pub fn at_frequency(&self, omega: Frequency) -> DMatrix<Complex64> {
        let gb = self.materials.gamma_b(omega);
        let scale = 1.0 / (gb * gb);
        DMatrix::from_fn(self.j_geom.nrows(), self.j_geom.ncols(), |r, c| {
            scale * self.j_geom[(r, c)]
        })
    }

    /// Squared spectral norm of `J(omega)` by power iteration on `J J^H`.
    pub fn norm_squared(&self, omega: Frequency) -> f64 {
        let j = self.at_frequency(omega);
        let jh = j.adjoint();
        let mut v = DVector::<Complex64>::from_element(j.ncols(), Complex64::new(1.0, 0.0));
        let n0 = v.norm();
        v /= Complex64::new(n0, 0.0);
        let mut lambda = 0.0;
        for _ in 0..30 {
            let w = &jh * (&j * &v);
            let norm = w.norm();
            if norm == 0.0 {
                return 0.0;
            }
            lambda = norm;
            v = w / Complex64::new(norm, 0.0);
        }
        lambda
    }
}

/// Assemble the sensitivity matrix from homogeneous reference solves on the
/// mesh's pixelation (or a caller-provided one).
pub fn build_sensitivity(
    mesh: &Mesh,
    layout: &ElectrodeLayout,
    materials: &MaterialSpec,
    pixelation: Option<Pixelation>,
) -> Result<SensitivityMatrix, ReconstructError> {
    let pixelation = pixelation.unwrap_or_else(|| mesh.pixelation.clone());
    let same_grid = pixelation.nx == mesh.pixelation.nx && pixelation.ny == mesh.pixelation.ny;
    let pixel_of_triangle: Vec<usize> = if same_grid {
        mesh.pixel_map.clone()
    } else {
        (0..mesh.triangles.len())
            .map(|t| {
                let c = mesh.centroid(t);
                pixelation
                    .locate(c)
                    .unwrap_or_else(|| pixelation.nearest_active(c))
            })
            .collect()
    };
    let n = layout.n_electrodes;
    // unit-conductivity reference fields
    let unit = MaterialSpec::unchecked(1.0, 0.0, 0.0, 0.0, 2.0, 0.0);
    let omega_ref = Frequency::from_hz(1.0).expect("valid");
    let solver = ForwardSolver::homogeneous(mesh, &unit, omega_ref)?;
    let injections: Vec<NeumannCurrent> = (1..=n)
        .map(|k| make_injection(mesh, layout, k))
        .collect::<Result<_, _>>()?;
    let fields = solver.solve_many(&injections)?;
    // per-field real gradients per triangle
    let grads: Vec<Vec<(f64, f64)>> = fields
        .iter()
        .map(|f| {
            (0..mesh.triangles.len())
                .map(|t| {
                    let (gx, gy) = f.gradient(mesh, t);
                    (gx.re, gy.re)
                })
                .collect()
        })
        .collect();
    let areas: Vec<f64> = (0..mesh.triangles.len())
        .map(|t| mesh.triangle_area(t))
        .collect();

    let m = pixelation.len();
    let mut rows = Vec::with_capacity(n * n);
    let mut j_geom = DMatrix::<f64>::zeros(n * n, m);
    let mut r = 0;
    for k in 1..=n {
        for j in 1..=n {
            rows.push((k, j));
            let gk = &grads[k - 1];
            let gj = &grads[j - 1];
            for t in 0..mesh.triangles.len() {
                let dot = gk[t].0 * gj[t].0 + gk[t].1 * gj[t].1;
                j_geom[(r, pixel_of_triangle[t])] += dot * areas[t];
            }
            r += 1;
        }
    }
    Ok(SensitivityMatrix {
        rows,
        j_geom,
        materials: *materials,
        pixelation,
    })
}

/// Per-frequency complex perturbation images on a fixed pixelation.
pub struct ImageStack {
    /// M x N_omega
    pub images: DMatrix<Complex64>,
    pub frequencies: Vec<Frequency>,
    pub pixelation: Pixelation,
}

impl ImageStack {
    pub fn n_pixels(&self) -> usize {
        self.images.nrows()
    }

    pub fn n_frequencies(&self) -> usize {
        self.images.ncols()
    }
}

/// Reconstruct one frequency: Tikhonov-regularized linearized inversion of
/// the difference data `V_omega - V_ref` over the unmasked entries.
pub fn reconstruct_frequency(
    dataset: &BoundaryDataset,
    reference: &BoundaryDataset,
    sensitivity: &SensitivityMatrix,
    regularization: Regularization,
) -> Result<DVector<Complex64>, ReconstructError> {
    if dataset.omega != reference.omega {
        return Err(ReconstructError::FrequencyMismatch);
    }
    let n = dataset.n_electrodes();
    if n * n != sensitivity.rows.len() {
        return Err(ReconstructError::ShapeMismatch);
    }
    let keep: Vec<usize> = sensitivity
        .rows
        .iter()
        .enumerate()
        .filter(|(_, &(k, j))| !dataset.masked[k - 1][j - 1])
        .map(|(r, _)| r)
        .collect();
    let j_full = sensitivity.at_frequency(dataset.omega);
    let j_sel = j_full.select_rows(keep.iter());
    let d = DVector::<Complex64>::from_iterator(
        keep.len(),
        keep.iter().map(|&r| {
            let (k, j) = sensitivity.rows[r];
            dataset.v[k - 1][j - 1] - reference.v[k - 1][j - 1]
        }),
    );
    let alpha = match regularization {
        Regularization::Fixed(a) => a,
        Regularization::RelativeToNorm(f) => f * sensitivity.norm_squared(dataset.omega),
        Regularization::Discrepancy { noise_norm } => discrepancy_alpha(
            &j_sel,
            &d,
            noise_norm,
            sensitivity.norm_squared(dataset.omega),
        ),
    };
    solve_tikhonov(&j_sel, &d, alpha)
}

/// Dual-form Tikhonov solve `x = J^H (J J^H + alpha I)^{-1} d`.
fn solve_tikhonov(
    j: &DMatrix<Complex64>,
    d: &DVector<Complex64>,
    alpha: f64,
) -> Result<DVector<Complex64>, ReconstructError> {
    let rows = j.nrows();
    let mut gram = j * j.adjoint();
    for i in 0..rows {
        gram[(i, i)] += Complex64::new(alpha, 0.0);
    }
    let lu = gram.lu();
    let Some(y) = lu.solve(d) else {
        return Err(ReconstructError::SingularSystem);
    };
    if !y.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
        return Err(ReconstructError::SingularSystem);
    }
    Ok(j.adjoint() * y)
}

/// Bisection on `log alpha` for `||J x(alpha) - d|| ~ noise_norm`.
fn discrepancy_alpha(
    j: &DMatrix<Complex64>,
    d: &DVector<Complex64>,
    noise_norm: f64,
    norm_sq: f64,
) -> f64 {
    let residual = |alpha: f64| -> f64 {
        match solve_tikhonov(j, d, alpha) {
            Ok(x) => (j * x - d).norm(),
            Err(_) => f64::INFINITY,
        }
    };
    let mut lo = 1e-14 * norm_sq.max(1e-300);
    let mut hi = 1e2 * norm_sq.max(1e-300);
    if residual(lo) > noise_norm {
        return lo;
    }
    if residual(hi) < noise_norm {
        return hi;
    }
    for _ in 0..60 {
        let mid = (lo * hi).sqrt();
        if residual(mid) < noise_norm {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo * hi).sqrt()
}

/// Map [`reconstruct_frequency`] over a sweep.
pub fn reconstruct_sweep(
    datasets: &[BoundaryDataset],
    references: &[BoundaryDataset],
    sensitivity: &SensitivityMatrix,
    regularization: Regularization,
) -> Result<ImageStack, ReconstructError> {
    assert_eq!(datasets.len(), references.len());
    let m = sensitivity.n_pixels();
    let mut images = DMatrix::<Complex64>::zeros(m, datasets.len());
    let mut frequencies = Vec::with_capacity(datasets.len());
    for (col, (ds, rf)) in datasets.iter().zip(references.iter()).enumerate() {
        let x = reconstruct_frequency(ds, rf, sensitivity, regularization)?;
        images.set_column(col, &x);
        frequencies.push(ds.omega);
    }
    Ok(ImageStack {
        images,
        frequencies,
        pixelation: sensitivity.pixelation.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::admittivity::MaterialSpec;
    use crate::forward::SolveModel;
    use crate::geometry::{build_phantom, PhantomSpec};
    use crate::protocol::{mask_adjacent, simulate_sweep};

    fn freq_hz(f: f64) -> Frequency {
        Frequency::from_hz(f).unwrap()
    }

    fn homogeneous_setup(
        h: f64,
        pixel_n: usize,
    ) -> (crate::geometry::Phantom, Mesh, ElectrodeLayout) {
        let phantom = build_phantom(&PhantomSpec {
            domain_radius: 1.0,
            d0: 0.1,
            materials: MaterialSpec::default(),
            insulators: vec![],
            disks: vec![],
        })
        .unwrap();
        let mut opts = crate::geometry::MeshOptions::zero_thickness(h);
        opts.pixel_n = pixel_n;
        let mesh = crate::geometry::mesh_with(&phantom, &opts).unwrap();
        (phantom, mesh, ElectrodeLayout::new(16))
    }

    #[test]
    fn whole_domain_pixel_reproduces_energy_form() {
        // M = 1: each row equals V^{j,k} / gamma_b
        let (phantom, mesh, layout) = homogeneous_setup(0.1, 1);
        assert_eq!(mesh.pixelation.len(), 1);
        let sens = build_sensitivity(&mesh, &layout, &phantom.materials, None).unwrap();
        let omega = freq_hz(1e3);
        let data = simulate_sweep(
            &phantom,
            &mesh,
            &layout,
            &[omega],
            SolveModel::Homogeneous,
        )
        .unwrap();
        let j = sens.at_frequency(omega);
        let gb = phantom.materials.gamma_b(omega);
        for (r, &(k, jj)) in sens.rows().iter().enumerate() {
            let expected = data[0].v[k - 1][jj - 1] / gb;
            assert!(
                (j[(r, 0)] - expected).norm() <= 1e-10 * expected.norm().max(1e-12),
                "row ({k},{jj}): {:?} vs {:?}",
                j[(r, 0)],
                expected
            );
        }
    }

    #[test]
    fn row_matches_elementwise_quadrature_of_actual_fields() {
        let (phantom, mesh, layout) = homogeneous_setup(0.09, 8);
        let sens = build_sensitivity(&mesh, &layout, &phantom.materials, None).unwrap();
        let omega = freq_hz(2.5e5);
        // oracle: solve the actual complex fields at omega and integrate
        // grad u_j . grad u_k over one pixel, element by element
        let solver = ForwardSolver::homogeneous(&mesh, &phantom.materials, omega).unwrap();
        let g3 = make_injection(&mesh, &layout, 3).unwrap();
        let g9 = make_injection(&mesh, &layout, 9).unwrap();
        let u3 = solver.solve(&g3).unwrap();
        let u9 = solver.solve(&g9).unwrap();
        let pixel = mesh.pixelation.len() / 2;
        let mut oracle = Complex64::new(0.0, 0.0);
        for t in 0..mesh.triangles.len() {
            if mesh.pixel_map[t] != pixel {
                continue;
            }
            let (gx3, gy3) = u3.gradient(&mesh, t);
            let (gx9, gy9) = u9.gradient(&mesh, t);
            oracle += (gx3 * gx9 + gy3 * gy9) * mesh.triangle_area(t);
        }
        let j = sens.at_frequency(omega);
        let row = sens
            .rows()
            .iter()
            .position(|&(k, jj)| k == 3 && jj == 9)
            .unwrap();
        assert!(
            (j[(row, pixel)] - oracle).norm() <= 1e-10 * oracle.norm().max(1e-14),
            "sensitivity {:?} vs quadrature {:?}",
            j[(row, pixel)],
            oracle
        );
    }

    #[test]
    fn mirror_symmetric_pixels_have_equal_magnitude() {
        let (phantom, mesh, mut layout) = homogeneous_setup(0.07, 4);
        // shift electrodes half a pitch so injection 16 straddles the x-axis
        layout.offset = std::f64::consts::PI / 16.0;
        let sens = build_sensitivity(&mesh, &layout, &phantom.materials, None).unwrap();
        let j = sens.at_frequency(freq_hz(1e3));
        let row = sens
            .rows()
            .iter()
            .position(|&(k, jj)| k == 16 && jj == 8)
            .unwrap();
        // pixels mirrored across the x-axis
        let cells = sens.pixelation.cells();
        let find = |x: f64, y: f64| {
            cells
                .iter()
                .position(|c| (c.center.x - x).abs() < 1e-9 && (c.center.y - y).abs() < 1e-9)
                .unwrap()
        };
        let w = sens.pixelation.cell_width();
        let up = find(w / 2.0, w / 2.0);
        let down = find(w / 2.0, -w / 2.0);
        let (a, b) = (j[(row, up)].norm(), j[(row, down)].norm());
        // equality is exact only for a mirror-symmetric mesh; allow the
        // discretization asymmetry of the unstructured interior
        assert!(
            (a - b).abs() <= 0.05 * a.max(b),
            "mirror magnitudes {a:.6e} vs {b:.6e}"
        );
    }

    #[test]
    fn zero_difference_reconstructs_zero() {
        let (phantom, mesh, layout) = homogeneous_setup(0.1, 16);
        let sens = build_sensitivity(&mesh, &layout, &phantom.materials, None).unwrap();
        let data = simulate_sweep(
            &phantom,
            &mesh,
            &layout,
            &[freq_hz(1e3)],
            SolveModel::Homogeneous,
        )
        .unwrap();
        let ds = mask_adjacent(&data[0]);
        let x = reconstruct_frequency(&ds, &ds, &sens, Regularization::default()).unwrap();
        assert!(x.norm() == 0.0);
    }

    #[test]
    fn inverse_crime_peaks_at_perturbed_pixel() {
        let (phantom, mesh, layout) = homogeneous_setup(0.09, 8);
        let sens = build_sensitivity(&mesh, &layout, &phantom.materials, None).unwrap();
        let omega = freq_hz(1e3);
        let data = simulate_sweep(
            &phantom,
            &mesh,
            &layout,
            &[omega],
            SolveModel::Homogeneous,
        )
        .unwrap();
        let reference = mask_adjacent(&data[0]);
        let j = sens.at_frequency(omega);
        // synthetic one-pixel perturbation pushed through the linear model
        let m_target = sens.n_pixels() / 3;
        let mut dataset = reference.clone();
        for (r, &(k, jj)) in sens.rows().iter().enumerate() {
            dataset.v[k - 1][jj - 1] += j[(r, m_target)];
        }
        let x = reconstruct_frequency(&dataset, &reference, &sens, Regularization::Fixed(1e-12))
            .unwrap();
        let argmax = x
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm().partial_cmp(&b.1.norm()).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        assert_eq!(argmax, m_target);
    }

    #[test]
    fn linearity_and_tikhonov_monotonicity() {
        let (phantom, mesh, layout) = homogeneous_setup(0.09, 8);
        let sens = build_sensitivity(&mesh, &layout, &phantom.materials, None).unwrap();
        let omega = freq_hz(1e3);
        let data = simulate_sweep(
            &phantom,
            &mesh,
            &layout,
            &[omega],
            SolveModel::Homogeneous,
        )
        .unwrap();
        let reference = mask_adjacent(&data[0]);
        let j = sens.at_frequency(omega);
        let mut dataset = reference.clone();
        for (r, &(k, jj)) in sens.rows().iter().enumerate() {
            dataset.v[k - 1][jj - 1] += j[(r, 5)] + Complex64::new(0.3, -0.1) * j[(r, 11)];
        }
        // linearity: scaling the data scales the image by the same factor
        let c = Complex64::new(-0.7, 1.3);
        let mut scaled = reference.clone();
        for &(k, jj) in sens.rows().iter() {
            let d = dataset.v[k - 1][jj - 1] - reference.v[k - 1][jj - 1];
            scaled.v[k - 1][jj - 1] = reference.v[k - 1][jj - 1] + c * d;
        }
        let alpha = Regularization::Fixed(1e-8);
        let x1 = reconstruct_frequency(&dataset, &reference, &sens, alpha).unwrap();
        let x2 = reconstruct_frequency(&scaled, &reference, &sens, alpha).unwrap();
        let lin_defect = (&x2 - &x1.map(|v| c * v)).norm() / x2.norm();
        assert!(lin_defect < 1e-10, "linearity defect {lin_defect:.3e}");
        // Tikhonov monotonicity
        let norms: Vec<f64> = [1e-10, 1e-6, 1e-2]
            .iter()
            .map(|&a| {
                reconstruct_frequency(&dataset, &reference, &sens, Regularization::Fixed(a))
                    .unwrap()
                    .norm()
            })
            .collect();
        assert!(norms[0] >= norms[1] && norms[1] >= norms[2]);
    }

    #[test]
    fn frequency_mismatch_rejected() {
        let (phantom, mesh, layout) = homogeneous_setup(0.1, 4);
        let sens = build_sensitivity(&mesh, &layout, &phantom.materials, None).unwrap();
        let data = simulate_sweep(
            &phantom,
            &mesh,
            &layout,
            &[freq_hz(1e3), freq_hz(1e4)],
            SolveModel::Homogeneous,
        )
        .unwrap();
        assert!(matches!(
            reconstruct_frequency(&data[0], &data[1], &sens, Regularization::default()),
            Err(ReconstructError::FrequencyMismatch)
        ));
    }
}
