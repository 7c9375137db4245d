//! Adjacent-pair electrode protocol: injection patterns, frequency sweeps,
//! reciprocity-symmetric voltage matrices, noise and masking.
//!
//! Electrodes use the gap (shunt-free) model: uniform current density on each
//! arc, voltages read as arc averages. `V[k][j]` is the voltage of pair `j`
//! under injection `k`, computed through the energy bilinear form, which
//! discretely equals the arc-averaged voltage difference.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::admittivity::Frequency;
use crate::forward::{boundary_load, ForwardError, ForwardSolver, NeumannCurrent, SolveModel};
use crate::geometry::{Mesh, Phantom};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("injection index {k} out of range 1..={n}")]
    BadIndex { k: usize, n: usize },
    #[error("electrode layout does not fit the mesh: {0}")]
    LayoutMismatch(String),
    #[error(transparent)]
    Forward(#[from] ForwardError),
}

/// Equally spaced electrodes covering `coverage` of the circumference.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ElectrodeLayout {
    pub n_electrodes: usize,
    /// covered fraction of the circumference (arc width = coverage * pitch)
    pub coverage: f64,
    /// angular position of the first electrode center
    pub offset: f64,
}

impl ElectrodeLayout {
    pub fn new(n_electrodes: usize) -> Self {
        Self {
            n_electrodes,
            coverage: 0.5,
            offset: 0.0,
        }
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_electrodes)
            .map(|i| self.offset + 2.0 * std::f64::consts::PI * i as f64 / self.n_electrodes as f64)
            .collect()
    }

    pub fn arc_half_width(&self) -> f64 {
        std::f64::consts::PI / self.n_electrodes as f64 * self.coverage
    }

    /// Arclength overlap of each boundary node's lumped segment with each
    /// electrode arc: `coverage[e]` lists `(node, overlap_length)` pairs.
    ///
    /// A node owns the half-edges on both sides; partial overlaps at arc ends
    /// enter fractionally so the discretized electrodes converge smoothly
    /// under mesh refinement.
    pub fn electrode_coverage(&self, mesh: &Mesh) -> Result<Vec<Vec<(usize, f64)>>, ProtocolError> {
        let boundary = mesh.boundary_nodes();
        let nb = boundary.len();
        let radius = mesh.nodes[boundary[0]].coords.norm();
        let angles: Vec<f64> = boundary
            .iter()
            .map(|&n| mesh.nodes[n].y.atan2(mesh.nodes[n].x))
            .collect();
        let centers = self.centers();
        let half = self.arc_half_width();
        let tau = 2.0 * std::f64::consts::PI;
        let mut coverage = vec![Vec::new(); self.n_electrodes];
        for i in 0..nb {
            let prev = angles[(i + nb - 1) % nb];
            let next = angles[(i + 1) % nb];
            let here = angles[i];
            // the node's own angular segment (half gaps on both sides)
            let gap_lo = ((here - prev).rem_euclid(tau)) / 2.0;
            let gap_hi = ((next - here).rem_euclid(tau)) / 2.0;
            for (e, &c) in centers.iter().enumerate() {
                // shift the segment into the arc's frame
                let rel = (here - c + std::f64::consts::PI).rem_euclid(tau) - std::f64::consts::PI;
                let lo = (rel - gap_lo).max(-half);
                let hi = (rel + gap_hi).min(half);
                if hi > lo {
                    coverage[e].push((boundary[i], radius * (hi - lo)));
                }
            }
        }
        for (e, cov) in coverage.iter().enumerate() {
            if cov.is_empty() {
                return Err(ProtocolError::LayoutMismatch(format!(
                    "electrode {} covers no boundary node; refine the mesh",
                    e + 1
                )));
            }
        }
        Ok(coverage)
    }

    /// Boundary node indices per electrode (nodes with positive overlap).
    pub fn electrode_nodes(&self, mesh: &Mesh) -> Result<Vec<Vec<usize>>, ProtocolError> {
        Ok(self
            .electrode_coverage(mesh)?
            .into_iter()
            .map(|cov| cov.into_iter().map(|(n, _)| n).collect())
            .collect())
    }
}

/// Overlap-weighted average of nodal values over one electrode arc.
pub fn arc_average(coverage: &[(usize, f64)], values_by_node: &[Complex64]) -> Complex64 {
    let total: f64 = coverage.iter().map(|(_, w)| w).sum();
    coverage
        .iter()
        .map(|&(n, w)| values_by_node[n] * w)
        .sum::<Complex64>()
        / total
}

/// Injection/measurement metadata carried by a dataset.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ProtocolMeta {
    pub amplitude: f64,
    /// electrode offset between the pair members (1 = adjacent)
    pub skip: usize,
}

impl Default for ProtocolMeta {
    fn default() -> Self {
        Self {
            amplitude: 1.0,
            skip: 1,
        }
    }
}

/// Per-frequency complex voltage matrix `V[k][j] = V^{j,k}`.
#[derive(Debug, Clone)]
pub struct BoundaryDataset {
    pub omega: Frequency,
    pub v: Vec<Vec<Complex64>>,
    pub masked: Vec<Vec<bool>>,
    pub meta: ProtocolMeta,
}

impl BoundaryDataset {
    pub fn n_electrodes(&self) -> usize {
        self.v.len()
    }

    pub fn max_abs(&self) -> f64 {
        self.v
            .iter()
            .flatten()
            .map(|c| c.norm())
            .fold(0.0, f64::max)
    }

    /// Entrywise difference `self - other` (mask = union).
    pub fn difference(&self, other: &BoundaryDataset) -> BoundaryDataset {
        assert_eq!(self.n_electrodes(), other.n_electrodes());
        let n = self.n_electrodes();
        let v = (0..n)
            .map(|k| (0..n).map(|j| self.v[k][j] - other.v[k][j]).collect())
            .collect();
        let masked = (0..n)
            .map(|k| {
                (0..n)
                    .map(|j| self.masked[k][j] || other.masked[k][j])
                    .collect()
            })
            .collect();
        BoundaryDataset {
            omega: self.omega,
            v,
            masked,
            meta: self.meta,
        }
    }

    /// Largest reciprocity defect `max |V[k][j] - V[j][k]|`.
    pub fn reciprocity_defect(&self) -> f64 {
        let n = self.n_electrodes();
        let mut worst = 0.0f64;
        for k in 0..n {
            for j in 0..n {
                worst = worst.max((self.v[k][j] - self.v[j][k]).norm());
            }
        }
        worst
    }
}

/// Unit adjacent-pair current between electrodes `k` and `k+1` (`k` is
/// 1-based; `k = n` wraps to the pair `(E_n, E_1)`).
pub fn make_injection(
    mesh: &Mesh,
    layout: &ElectrodeLayout,
    k: usize,
) -> Result<NeumannCurrent, ProtocolError> {
    let n = layout.n_electrodes;
    if k < 1 || k > n {
        return Err(ProtocolError::BadIndex { k, n });
    }
    let coverage = layout.electrode_coverage(mesh)?;
    let weights = mesh.boundary_weights();
    let boundary = mesh.boundary_nodes();
    let index_of: std::collections::HashMap<usize, usize> = boundary
        .iter()
        .enumerate()
        .map(|(i, &bn)| (bn, i))
        .collect();
    let mut densities = vec![0.0; boundary.len()];
    // unit total current: nodal density = overlap fraction / arc length
    for (arc, sign) in [(&coverage[k - 1], 1.0), (&coverage[k % n], -1.0)] {
        let total: f64 = arc.iter().map(|(_, w)| w).sum();
        for &(node, overlap) in arc.iter() {
            densities[index_of[&node]] += sign * overlap / (weights[&node] * total);
        }
    }
    Ok(NeumannCurrent::new(mesh, densities)?)
}

/// Simulate all adjacent-pair injections at each frequency.
///
/// Frequencies run in parallel; each holds one factorization and solves all
/// injections against it. `V[k][j] = <b_j, u_k>`, the discrete energy form.
pub fn simulate_sweep(
    phantom: &Phantom,
    mesh: &Mesh,
    layout: &ElectrodeLayout,
    frequencies: &[Frequency],
    model: SolveModel,
) -> Result<Vec<BoundaryDataset>, ProtocolError> {
    let n = layout.n_electrodes;
    let injections: Vec<NeumannCurrent> = (1..=n)
        .map(|k| make_injection(mesh, layout, k))
        .collect::<Result<_, _>>()?;
    let loads: Vec<Vec<Complex64>> = injections
        .iter()
        .map(|g| boundary_load(mesh, g))
        .collect();
    frequencies
        .par_iter()
        .map(|&omega| {
            let solver = ForwardSolver::new(mesh, phantom, omega, model)?;
            let fields = solver.solve_many(&injections)?;
            let v: Vec<Vec<Complex64>> = (0..n)
                .map(|k| {
                    (0..n)
                        .map(|j| {
                            loads[j]
                                .iter()
                                .zip(fields[k].u.iter())
                                .map(|(b, u)| b * u)
                                .sum()
                        })
                        .collect()
                })
                .collect();
            Ok(BoundaryDataset {
                omega,
                v,
                masked: vec![vec![false; n]; n],
                meta: ProtocolMeta::default(),
            })
        })
        .collect()
}

/// Additive complex Gaussian noise at the given per-matrix SNR (dB), seeded
/// deterministically. `snr_db = f64::INFINITY` returns the dataset unchanged.
pub fn add_noise(dataset: &BoundaryDataset, snr_db: f64, seed: u64) -> BoundaryDataset {
    if snr_db.is_infinite() {
        return dataset.clone();
    }
    let n = dataset.n_electrodes();
    let power: f64 =
        dataset.v.iter().flatten().map(|c| c.norm_sqr()).sum::<f64>() / (n * n) as f64;
    let noise_power = power * 10f64.powf(-snr_db / 10.0);
    let comp_std = (noise_power / 2.0).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, comp_std).expect("valid std");
    let mut out = dataset.clone();
    for row in out.v.iter_mut() {
        for val in row.iter_mut() {
            let re: f64 = normal.sample(&mut rng);
            let im: f64 = normal.sample(&mut rng);
            *val += Complex64::new(re, im);
        }
    }
    out
}

/// Flag the entries `V^{k-1,k}, V^{k,k}, V^{k,k+1}` whose measuring pair
/// shares an electrode with the injecting pair.
pub fn mask_adjacent(dataset: &BoundaryDataset) -> BoundaryDataset {
    let n = dataset.n_electrodes();
    let mut out = dataset.clone();
    for k in 0..n {
        out.masked[k][(k + n - 1) % n] = true;
        out.masked[k][k] = true;
        out.masked[k][(k + 1) % n] = true;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::admittivity::MaterialSpec;
    use crate::forward::homogeneous_reference;
    use crate::geometry::{
        build_phantom, mesh_domain, ConductiveDisk, PhantomSpec, ThinInsulatorSpec,
    };
    use crate::Point;

    fn freq_hz(f: f64) -> Frequency {
        Frequency::from_hz(f).unwrap()
    }

    fn homogeneous_phantom() -> Phantom {
        build_phantom(&PhantomSpec {
            domain_radius: 1.0,
            d0: 0.1,
            materials: MaterialSpec::default(),
            insulators: vec![],
            disks: vec![],
        })
        .unwrap()
    }

    fn inclusion_phantom() -> Phantom {
        build_phantom(&PhantomSpec {
            domain_radius: 1.0,
            d0: 0.1,
            materials: MaterialSpec::default(),
            insulators: vec![ThinInsulatorSpec {
                p: [-0.4, 0.15],
                q: [0.1, 0.35],
                delta: 5e-4,
            }],
            disks: vec![ConductiveDisk::new(Point::new(0.3, -0.3), 0.12).unwrap()],
        })
        .unwrap()
    }

    #[test]
    fn injection_support_and_zero_mean() {
        let phantom = homogeneous_phantom();
        let mesh = mesh_domain(&phantom, 0.08).unwrap();
        let layout = ElectrodeLayout::new(16);
        let g = make_injection(&mesh, &layout, 1).unwrap();
        let nodes = layout.electrode_nodes(&mesh).unwrap();
        let boundary = mesh.boundary_nodes();
        for (i, bn) in boundary.iter().enumerate() {
            let d = g.densities()[i];
            if nodes[0].contains(bn) {
                assert!(d > 0.0);
            } else if nodes[1].contains(bn) {
                assert!(d < 0.0);
            } else {
                assert_eq!(d, 0.0);
            }
        }
        let w = mesh.boundary_weights();
        let integral: f64 = boundary
            .iter()
            .zip(g.densities())
            .map(|(n, d)| w[n] * d)
            .sum();
        assert!(integral.abs() < 1e-12);
        // total injected current is one
        let injected: f64 = boundary
            .iter()
            .zip(g.densities())
            .filter(|(_, &d)| d > 0.0)
            .map(|(n, d)| w[n] * d)
            .sum();
        assert!((injected - 1.0).abs() < 1e-12);
    }

    #[test]
    fn injection_wraps_and_rejects() {
        let phantom = homogeneous_phantom();
        let mesh = mesh_domain(&phantom, 0.08).unwrap();
        let layout = ElectrodeLayout::new(16);
        let g = make_injection(&mesh, &layout, 16).unwrap();
        let nodes = layout.electrode_nodes(&mesh).unwrap();
        let boundary = mesh.boundary_nodes();
        for (i, bn) in boundary.iter().enumerate() {
            if nodes[15].contains(bn) {
                assert!(g.densities()[i] > 0.0);
            }
            if nodes[0].contains(bn) {
                assert!(g.densities()[i] < 0.0);
            }
        }
        assert!(matches!(
            make_injection(&mesh, &layout, 0),
            Err(ProtocolError::BadIndex { .. })
        ));
        assert!(matches!(
            make_injection(&mesh, &layout, 17),
            Err(ProtocolError::BadIndex { .. })
        ));
    }

    #[test]
    fn injections_telescope_to_zero() {
        let phantom = homogeneous_phantom();
        let mesh = mesh_domain(&phantom, 0.08).unwrap();
        let layout = ElectrodeLayout::new(16);
        let nb = mesh.boundary_nodes().len();
        let mut sum = vec![0.0f64; nb];
        for k in 1..=16 {
            let g = make_injection(&mesh, &layout, k).unwrap();
            for (i, d) in g.densities().iter().enumerate() {
                sum[i] += d;
            }
        }
        assert!(sum.iter().all(|d| d.abs() < 1e-12));
    }

    #[test]
    fn homogeneous_dataset_equals_reference() {
        let phantom = homogeneous_phantom();
        let mesh = mesh_domain(&phantom, 0.1).unwrap();
        let layout = ElectrodeLayout::new(16);
        let freqs = [freq_hz(1e3)];
        let data =
            simulate_sweep(&phantom, &mesh, &layout, &freqs, SolveModel::ZeroThickness).unwrap();
        let refs =
            simulate_sweep(&phantom, &mesh, &layout, &freqs, SolveModel::Homogeneous).unwrap();
        let diff = data[0].difference(&refs[0]);
        assert_eq!(diff.max_abs(), 0.0);
    }

    #[test]
    fn reciprocity_on_inclusion_phantom() {
        let phantom = inclusion_phantom();
        let mesh = mesh_domain(&phantom, 0.09).unwrap();
        let layout = ElectrodeLayout::new(16);
        let data = simulate_sweep(
            &phantom,
            &mesh,
            &layout,
            &[freq_hz(1e3), freq_hz(2.5e5)],
            SolveModel::ZeroThickness,
        )
        .unwrap();
        for ds in &data {
            assert!(
                ds.reciprocity_defect() <= 1e-10 * ds.max_abs(),
                "reciprocity defect {:.3e} vs scale {:.3e}",
                ds.reciprocity_defect(),
                ds.max_abs()
            );
        }
    }

    #[test]
    fn mask_adjacent_counts_and_idempotence() {
        let phantom = homogeneous_phantom();
        let mesh = mesh_domain(&phantom, 0.1).unwrap();
        let layout = ElectrodeLayout::new(16);
        let data = simulate_sweep(
            &phantom,
            &mesh,
            &layout,
            &[freq_hz(1e3)],
            SolveModel::Homogeneous,
        )
        .unwrap();
        let masked = mask_adjacent(&data[0]);
        let count: usize = masked.masked.iter().flatten().filter(|&&m| m).count();
        assert_eq!(count, 48);
        let twice = mask_adjacent(&masked);
        assert_eq!(masked.masked, twice.masked);
    }

    #[test]
    fn noise_determinism_and_identity() {
        let phantom = homogeneous_phantom();
        let mesh = mesh_domain(&phantom, 0.1).unwrap();
        let layout = ElectrodeLayout::new(16);
        let data = simulate_sweep(
            &phantom,
            &mesh,
            &layout,
            &[freq_hz(1e3)],
            SolveModel::Homogeneous,
        )
        .unwrap();
        let clean = add_noise(&data[0], f64::INFINITY, 7);
        assert_eq!(clean.v, data[0].v);
        let a = add_noise(&data[0], 40.0, 7);
        let b = add_noise(&data[0], 40.0, 7);
        assert_eq!(a.v, b.v);
        let c = add_noise(&data[0], 40.0, 8);
        assert_ne!(a.v, c.v);
    }

    #[test]
    fn noise_meets_requested_snr() {
        let phantom = homogeneous_phantom();
        let mesh = mesh_domain(&phantom, 0.1).unwrap();
        let layout = ElectrodeLayout::new(16);
        let data = simulate_sweep(
            &phantom,
            &mesh,
            &layout,
            &[freq_hz(1e3)],
            SolveModel::Homogeneous,
        )
        .unwrap();
        let signal: f64 = data[0].v.iter().flatten().map(|c| c.norm_sqr()).sum();
        let mut noise_total = 0.0;
        let trials = 100;
        for seed in 0..trials {
            let noisy = add_noise(&data[0], 40.0, seed);
            noise_total += noisy
                .v
                .iter()
                .flatten()
                .zip(data[0].v.iter().flatten())
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>();
        }
        let snr_emp = 10.0 * (signal / (noise_total / trials as f64)).log10();
        assert!((snr_emp - 40.0).abs() < 1.0, "empirical SNR {snr_emp:.2} dB");
    }

    #[test]
    fn dipole_injection_matches_dense_mesh() {
        // adjacent-pair voltages converge against a finer-mesh oracle
        let phantom = homogeneous_phantom();
        let layout = ElectrodeLayout::new(16);
        let omega = freq_hz(1e3);
        let v_at = |h: f64| {
            let mesh = mesh_domain(&phantom, h).unwrap();
            let g = make_injection(&mesh, &layout, 3).unwrap();
            let field = homogeneous_reference(&mesh, &phantom.materials, omega, &g).unwrap();
            // arc-averaged voltage of a pair away from the injection
            let coverage = layout.electrode_coverage(&mesh).unwrap();
            arc_average(&coverage[7], &field.u) - arc_average(&coverage[8], &field.u)
        };
        let dense = v_at(0.02);
        let coarse = (v_at(0.08) - dense).norm();
        let fine = (v_at(0.04) - dense).norm();
        assert!(
            fine < coarse / 1.5,
            "no first-order decay: coarse {coarse:.3e}, fine {fine:.3e}"
        );
    }
}
