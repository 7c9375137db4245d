//! Inclusion detection from boundary data: reconstruct the meromorphic
//! identification functions from boundary traces, sample their derivatives on
//! an interior contour and recover poles and residues.
//!
//! The identification functions vanish at infinity and are holomorphic
//! outside the inclusion region, so on the measurement circle their real
//! parts determine the negative Laurent coefficients directly:
//! `g_{-m} = 2 conj(a_m) R^m` where `a_m` is the `e^{i m theta}` Fourier
//! coefficient of the sampled real part.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use super::poles::{recover_poles, ContourSamples, MeromorphicModel, PoleError, RecoverConfig};
use super::SignConvention;
use crate::protocol::{BoundaryDataset, ElectrodeLayout, ProtocolError};
use crate::Vec2;

#[derive(Debug, Error)]
pub enum DetectError {
    #[error(transparent)]
    Pole(#[from] PoleError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("detection input mismatch: {0}")]
    BadInput(String),
}

/// Negative-power Laurent expansion `G(z) = sum_{m>=1} g_{-m} z^{-m}`.
#[derive(Debug, Clone)]
pub struct LaurentTail {
    /// radius of the sampling circle
    pub radius: f64,
    /// `g_{-1}, g_{-2}, ...`
    pub coeffs: Vec<Complex64>,
}

impl LaurentTail {
    /// Extract the tail from uniform samples of `Re G` on the circle of the
    /// given radius (samples start at angle zero, counterclockwise).
    pub fn from_real_samples(samples: &[f64], radius: f64, n_modes: usize) -> Self {
        let n = samples.len();
        let mut coeffs = Vec::with_capacity(n_modes);
        for m in 1..=n_modes {
            let mut a_m = Complex64::new(0.0, 0.0);
            for (j, &v) in samples.iter().enumerate() {
                let th = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
                a_m += v * Complex64::from_polar(1.0, -(m as f64) * th);
            }
            a_m /= n as f64;
            coeffs.push(2.0 * a_m.conj() * radius.powi(m as i32));
        }
        Self { radius, coeffs }
    }

    pub fn value_at(&self, z: Complex64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        let inv = 1.0 / z;
        let mut zp = inv;
        for g in &self.coeffs {
            acc += g * zp;
            zp *= inv;
        }
        acc
    }

    pub fn derivative_at(&self, z: Complex64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        let inv = 1.0 / z;
        let mut zp = inv * inv;
        for (m, g) in self.coeffs.iter().enumerate() {
            acc -= (m as f64 + 1.0) * g * zp;
            zp *= inv;
        }
        acc
    }

    /// Sample `dG/dz` on a concentric contour.
    pub fn contour_samples(&self, radius: f64, n: usize) -> ContourSamples {
        ContourSamples::from_fn(Complex64::new(0.0, 0.0), radius, n, |z| {
            self.derivative_at(z)
        })
    }
}

#[derive(Debug, Clone)]
pub struct DetectionConfig {
    /// radius of the interior contour where `dG/dz` is sampled
    pub contour_radius: f64,
    /// number of Laurent modes kept (at most half the trace sample count)
    pub n_modes: usize,
    /// contour sample count for the recovery stage
    pub contour_samples: usize,
    pub recover: RecoverConfig,
    pub sign: SignConvention,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            contour_radius: 0.75,
            n_modes: 7,
            contour_samples: 256,
            recover: RecoverConfig {
                tol: 0.5,
                max_poles: 6,
                pair_threshold: 0.12,
                ..Default::default()
            },
            sign: SignConvention::PlusHalf,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DetectedSegment {
    pub p: [f64; 2],
    pub q: [f64; 2],
    pub c_re: [f64; 2],
    pub c_im: [f64; 2],
}

#[derive(Debug, Clone, Serialize)]
pub struct DetectedDisk {
    pub z: [f64; 2],
    pub d_re: [f64; 2],
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct DetectionReport {
    pub segments: Vec<DetectedSegment>,
    pub disks: Vec<DetectedDisk>,
    pub fit_residual: f64,
}

/// Recover inclusions from uniform boundary samples of the scattered trace
/// `u - u_0` under the uniform-field current `g = a . nu` (the samples sit at
/// angles `2 pi j / N` on the circle of radius `domain_radius`).
pub fn detect_from_traces(
    trace_diff: &[Complex64],
    domain_radius: f64,
    config: &DetectionConfig,
) -> Result<DetectionReport, DetectError> {
    if trace_diff.len() < 8 {
        return Err(DetectError::BadInput(format!(
            "need at least 8 trace samples, got {}",
            trace_diff.len()
        )));
    }
    let functional = super::scattered_functional(trace_diff, config.sign);
    let re: Vec<f64> = functional.iter().map(|c| c.re).collect();
    let im: Vec<f64> = functional.iter().map(|c| c.im).collect();
    let n_modes = config.n_modes.min(trace_diff.len() / 2 - 1).max(1);
    let tail_re = LaurentTail::from_real_samples(&re, domain_radius, n_modes);
    let tail_im = LaurentTail::from_real_samples(&im, domain_radius, n_modes);
    detect_from_tails(&tail_re, &tail_im, config)
}

fn detect_from_tails(
    tail_re: &LaurentTail,
    tail_im: &LaurentTail,
    config: &DetectionConfig,
) -> Result<DetectionReport, DetectError> {
    let samples_re = tail_re.contour_samples(config.contour_radius, config.contour_samples);
    let model_re = recover_poles(&samples_re, &config.recover)?;
    let samples_im = tail_im.contour_samples(config.contour_radius, config.contour_samples);
    // the imaginary-part function shares pole locations; its recovery is
    // best-effort (used only for the C_im coefficients)
    let model_im = recover_poles(&samples_im, &config.recover).unwrap_or_default();
    let residual_re = refit_residual(&model_re, &samples_re);
    Ok(build_report(&model_re, &model_im, residual_re))
}

fn refit_residual(model: &MeromorphicModel, samples: &ContourSamples) -> f64 {
    let points = samples.points();
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, v) in points.iter().zip(samples.values.iter()) {
        if let Ok(m) = super::meromorphic_derivative(model, *x) {
            num += (m - v).norm_sqr();
        }
        den += v.norm_sqr();
    }
    if den > 0.0 {
        (num / den).sqrt()
    } else {
        0.0
    }
}

fn build_report(
    model_re: &MeromorphicModel,
    model_im: &MeromorphicModel,
    fit_residual: f64,
) -> DetectionReport {
    let mut report = DetectionReport {
        fit_residual,
        ..Default::default()
    };
    // residue at the location nearest to `loc` in the imaginary-part model
    let im_residue_near = |loc: Complex64| -> Complex64 {
        model_im
            .simple_poles
            .iter()
            .min_by(|a, b| {
                (a.location - loc)
                    .norm()
                    .partial_cmp(&(b.location - loc).norm())
                    .unwrap()
            })
            .map(|p| p.residue)
            .unwrap_or(Complex64::new(0.0, 0.0))
    };
    for (q, p) in model_re.paired_segments() {
        let c_re = (q.residue - p.residue) / 2.0;
        let c_im = im_residue_near(q.location);
        report.segments.push(DetectedSegment {
            p: [p.location.re, p.location.im],
            q: [q.location.re, q.location.im],
            c_re: [c_re.re, c_re.im],
            c_im: [c_im.re, c_im.im],
        });
    }
    for d in &model_re.double_poles {
        report.disks.push(DetectedDisk {
            z: [d.location.re, d.location.im],
            d_re: [d.strength.re, d.strength.im],
        });
    }
    report
}

/// Fourier coefficient of one electrode's unit-density indicator at mode `m`.
fn electrode_mode(center: f64, half_width: f64, density: f64, m: usize) -> Complex64 {
    // (1/2pi) int_arc density e^{-i m theta} d theta
    let mf = m as f64;
    let magnitude = density * (mf * half_width).sin() / (std::f64::consts::PI * mf);
    Complex64::from_polar(magnitude.abs(), -mf * center)
        * if magnitude >= 0.0 { 1.0 } else { -1.0 }
}

/// Real coefficients `c` such that `sum_k c_k g_k` reproduces the low Fourier
/// modes of the uniform-field density `a . nu`; minimum-norm solution.
pub fn uniform_field_coefficients(
    layout: &ElectrodeLayout,
    domain_radius: f64,
    a: Vec2,
    n_modes: usize,
) -> Vec<f64> {
    let n = layout.n_electrodes;
    let centers = layout.centers();
    let hw = layout.arc_half_width();
    // arc length of one electrode; densities are 1/|arc|
    let arc_len = 2.0 * hw * domain_radius;
    let density = 1.0 / arc_len;
    // rows: Re/Im of each mode m = 1..n_modes; columns: injections
    let mut mat = DMatrix::<f64>::zeros(2 * n_modes, n);
    let mut rhs = DVector::<f64>::zeros(2 * n_modes);
    for m in 1..=n_modes {
        for k in 0..n {
            // injection k: +density on electrode k, -density on electrode k+1
            let mode = electrode_mode(centers[k], hw, density, m)
                - electrode_mode(centers[(k + 1) % n], hw, density, m);
            mat[(2 * (m - 1), k)] = mode.re;
            mat[(2 * (m - 1) + 1, k)] = mode.im;
        }
        // target a . nu = a_x cos(theta) + a_y sin(theta): modes +-1 only
        if m == 1 {
            let target = Complex64::new(a.x / 2.0, -a.y / 2.0);
            rhs[0] = target.re;
            rhs[1] = target.im;
        }
    }
    let svd = mat.svd(true, true);
    let c = svd.solve(&rhs, 1e-12).expect("svd solve");
    c.iter().cloned().collect()
}

/// Per-injection arc-averaged traces of `u_k` at the electrode centers,
/// rebuilt from a voltage matrix by unwinding the adjacent differences
/// (`V[k][j] = w_k[j] - w_k[j+1]`), mean-free.
pub fn electrode_traces(dataset: &BoundaryDataset) -> Vec<Vec<Complex64>> {
    let n = dataset.n_electrodes();
    (0..n)
        .map(|k| {
            let mut w = vec![Complex64::new(0.0, 0.0); n];
            for j in 0..n - 1 {
                w[j + 1] = w[j] - dataset.v[k][j];
            }
            // distribute the cyclic closure defect (noise) as a linear ramp
            let closure = w[n - 1] - dataset.v[k][n - 1];
            let defect = closure - w[0];
            for (j, wj) in w.iter_mut().enumerate() {
                *wj -= defect * (j as f64 / n as f64);
            }
            let mean = crate::numeric::mean(&w);
            for wj in w.iter_mut() {
                *wj -= mean;
            }
            w
        })
        .collect()
}

/// End-to-end detection from adjacent-pair voltage matrices: synthesize the
/// uniform-field current `g = a . nu` from the injection set, rebuild its
/// trace perturbation at the electrode centers, deconvolve the arc averaging
/// and hand the trace to [`detect_from_traces`].
pub fn detect_from_datasets(
    data: &BoundaryDataset,
    reference: &BoundaryDataset,
    layout: &ElectrodeLayout,
    domain_radius: f64,
    a: Vec2,
    config: &DetectionConfig,
) -> Result<DetectionReport, DetectError> {
    let n = layout.n_electrodes;
    if data.n_electrodes() != n || reference.n_electrodes() != n {
        return Err(DetectError::BadInput(
            "dataset electrode count does not match the layout".into(),
        ));
    }
    let diff = data.difference(reference);
    let traces = electrode_traces(&diff);
    let n_modes = config.n_modes.min(n / 2 - 1).max(1);
    let coeffs = uniform_field_coefficients(layout, domain_radius, a, n_modes);
    // synthesized trace perturbation at the electrode centers
    let mut synth = vec![Complex64::new(0.0, 0.0); n];
    for (k, c) in coeffs.iter().enumerate() {
        for j in 0..n {
            synth[j] += c * traces[k][j];
        }
    }
    // deconvolve the arc averaging mode by mode: divide by sinc(m * hw)
    let hw = layout.arc_half_width();
    let mut modes = vec![Complex64::new(0.0, 0.0); n];
    for (m, slot) in modes.iter_mut().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, &v) in synth.iter().enumerate() {
            let th = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
            acc += v * Complex64::from_polar(1.0, -(m as f64) * th);
        }
        *slot = acc / n as f64;
    }
    let mut deconv = vec![Complex64::new(0.0, 0.0); n];
    for (j, slot) in deconv.iter_mut().enumerate() {
        let th = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
        let mut acc = Complex64::new(0.0, 0.0);
        for (m, &mode) in modes.iter().enumerate() {
            let signed_m = if m <= n / 2 { m as i64 } else { m as i64 - n as i64 };
            let sinc = if signed_m == 0 {
                1.0
            } else {
                let x = signed_m as f64 * hw;
                x.sin() / x
            };
            // keep only the trusted low modes
            if signed_m.unsigned_abs() as usize <= n_modes {
                acc += mode / sinc * Complex64::from_polar(1.0, m as f64 * th);
            }
        }
        *slot = acc;
    }
    detect_from_traces(&deconv, domain_radius, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asymptotics::poles::{meromorphic_derivative, DoublePole, SimplePole};
    use crate::asymptotics::{meromorphic_models, scattered_functional};
    use crate::to_complex;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn laurent_tail_reproduces_derivative() {
        // G with one segment pair and one double pole, sampled on the unit
        // circle through its real part only
        let model = MeromorphicModel {
            simple_poles: vec![
                SimplePole {
                    location: c(-0.3, 0.1),
                    residue: c(1.2e-3, 4e-4),
                },
                SimplePole {
                    location: c(0.1, 0.3),
                    residue: c(-1.2e-3, -4e-4),
                },
            ],
            double_poles: vec![DoublePole {
                location: c(0.25, -0.2),
                strength: c(-8e-4, 3e-4),
            }],
        };
        let n = 512;
        let radius = 1.0;
        let re_samples: Vec<f64> = (0..n)
            .map(|j| {
                let th = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
                let x = Complex64::from_polar(radius, th);
                super::super::meromorphic_value(&model, x).unwrap().re
            })
            .collect();
        // mode count balances series truncation against floating-point noise
        // amplified by (1/rho)^m
        let tail = LaurentTail::from_real_samples(&re_samples, radius, 32);
        let rho = 0.75;
        for j in 0..16 {
            let z = Complex64::from_polar(rho, 0.39 * j as f64);
            let exact = meromorphic_derivative(&model, z).unwrap();
            let approx = tail.derivative_at(z);
            assert!(
                (exact - approx).norm() <= 1e-9 * exact.norm().max(1e-6),
                "at {z}: exact {exact} vs tail {approx}"
            );
        }
    }

    #[test]
    fn detect_from_synthetic_traces() {
        // phantom-level models provide the ground truth; traces are built
        // from the forward relation trace = 2 * Phi (PlusHalf side)
        let phantom = crate::geometry::Phantom {
            domain_radius: 1.0,
            insulators: vec![crate::geometry::ThinInsulator::new(
                crate::Point::new(-0.45, 0.1),
                crate::Point::new(0.0, 0.35),
                5e-4,
            )
            .unwrap()],
            disks: vec![
                crate::geometry::ConductiveDisk::new(crate::Point::new(0.3, -0.25), 0.08).unwrap(),
            ],
            materials: crate::admittivity::MaterialSpec::default(),
            separation: 0.1,
        };
        let omega = crate::admittivity::Frequency::from_hz(5e5).unwrap();
        let a = Vec2::new(1.0, 0.0);
        let n = 256;
        let xs: Vec<crate::Point> = (0..n)
            .map(|j| {
                let th = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
                crate::Point::new(th.cos(), th.sin())
            })
            .collect();
        let phi = crate::asymptotics::high_freq_prediction(&phantom, omega, a, &xs).unwrap();
        // PlusHalf functional of a zero-mean trace is trace/2
        let trace: Vec<Complex64> = phi.iter().map(|v| 2.0 * v).collect();
        let functional = scattered_functional(&trace, SignConvention::PlusHalf);
        for (f, p) in functional.iter().zip(phi.iter()) {
            assert!((f - p).norm() < 1e-12);
        }
        let config = DetectionConfig {
            n_modes: 40,
            recover: RecoverConfig {
                tol: 1e-5,
                max_poles: 6,
                pair_threshold: 0.05,
                ..Default::default()
            },
            ..Default::default()
        };
        let report = detect_from_traces(&trace, 1.0, &config).unwrap();
        assert_eq!(report.segments.len(), 1);
        assert_eq!(report.disks.len(), 1);
        let seg = &report.segments[0];
        let truth_p = to_complex(phantom.insulators[0].p);
        let truth_q = to_complex(phantom.insulators[0].q);
        let got_a = c(seg.p[0], seg.p[1]);
        let got_b = c(seg.q[0], seg.q[1]);
        let err = ((got_a - truth_p).norm() + (got_b - truth_q).norm())
            .min((got_a - truth_q).norm() + (got_b - truth_p).norm());
        assert!(err < 1e-3, "endpoint error {err:.3e}");
        let disk = &report.disks[0];
        let z = c(disk.z[0], disk.z[1]);
        assert!((z - to_complex(phantom.disks[0].center)).norm() < 1e-3);
        // recovered coefficients match the expansion coefficients
        let (model_re, _) = meromorphic_models(&phantom, omega, a).unwrap();
        let truth_c = model_re.simple_poles[0].residue;
        let got_c = c(seg.c_re[0], seg.c_re[1]);
        assert!(
            (got_c.norm() - truth_c.norm()).abs() / truth_c.norm() < 1e-2,
            "coefficient magnitude {} vs {}",
            got_c.norm(),
            truth_c.norm()
        );
    }

    #[test]
    fn uniform_field_coefficients_match_low_modes() {
        let layout = ElectrodeLayout::new(16);
        let a = Vec2::new(1.0, 0.0);
        let coeffs = uniform_field_coefficients(&layout, 1.0, a, 7);
        // evaluate the synthesized density's Fourier modes directly
        let hw = layout.arc_half_width();
        let centers = layout.centers();
        let density = 1.0 / (2.0 * hw);
        for m in 1..=7 {
            let mut mode = Complex64::new(0.0, 0.0);
            for (k, &ck) in coeffs.iter().enumerate() {
                mode += ck
                    * (electrode_mode(centers[k], hw, density, m)
                        - electrode_mode(centers[(k + 1) % 16], hw, density, m));
            }
            let target = if m == 1 { c(0.5, 0.0) } else { c(0.0, 0.0) };
            assert!(
                (mode - target).norm() < 1e-10,
                "mode {m}: {mode} vs {target}"
            );
        }
    }
}
