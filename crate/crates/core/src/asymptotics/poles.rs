//! Meromorphic models of the boundary derivative functional and pole/residue
//! recovery from contour samples.
//!
//! The derivative of the identification function has simple poles at segment
//! endpoints (with antisymmetric residues) and double poles at disk centers.
//! Recovery runs a contour-moment (Prony / linear prediction) stage for pole
//! locations, classifies close pairs as double-pole candidates, fits the
//! coefficients linearly and polishes everything with Gauss-Newton.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PoleError {
    #[error("evaluation point within 1e-9 of a pole")]
    PoleEvaluation,
    #[error("cannot fit the samples within tolerance {tol:.3e} at max pole count (best residual {best:.3e})")]
    ModelOrderFailure { tol: f64, best: f64 },
    #[error("recovered poles closer than the resolution {resolution:.3e}")]
    PoleCollision { resolution: f64 },
    #[error("need at least 64 contour samples, got {0}")]
    TooFewSamples(usize),
}

/// Simple pole with its residue.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SimplePole {
    pub location: Complex64,
    pub residue: Complex64,
}

/// Double pole `-strength / (x - location)^2` in the derivative, i.e. the
/// coefficient of `1/(x - location)` in the identification function itself.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DoublePole {
    pub location: Complex64,
    pub strength: Complex64,
}

/// Pole/residue model of `dG/dx`.
#[derive(Debug, Clone, Default, Serialize)]
pub struct MeromorphicModel {
    pub simple_poles: Vec<SimplePole>,
    pub double_poles: Vec<DoublePole>,
}

impl MeromorphicModel {
    /// Pair simple poles into segments by residue antisymmetry: `(Q, P)`
    /// pairs minimizing `|res_Q + res_P|`, greedily.
    pub fn paired_segments(&self) -> Vec<(SimplePole, SimplePole)> {
        let mut free: Vec<SimplePole> = self.simple_poles.clone();
        let mut pairs = Vec::new();
        while free.len() >= 2 {
            let mut best = (0usize, 1usize, f64::INFINITY);
            for i in 0..free.len() {
                for j in (i + 1)..free.len() {
                    let defect = (free[i].residue + free[j].residue).norm();
                    if defect < best.2 {
                        best = (i, j, defect);
                    }
                }
            }
            let (i, j, _) = best;
            let b = free.remove(j);
            let a = free.remove(i);
            // Q carries the positive-orientation residue; order is fixed by
            // the convention Res(Q) = -Res(P), so report (Q, P) as given
            pairs.push((a, b));
        }
        pairs
    }

    /// Worst residue-antisymmetry defect over the paired segments, relative
    /// to the residue magnitude.
    pub fn residue_antisymmetry_defect(&self) -> f64 {
        self.paired_segments()
            .iter()
            .map(|(a, b)| (a.residue + b.residue).norm() / a.residue.norm().max(b.residue.norm()))
            .fold(0.0, f64::max)
    }
}

/// Evaluate `dG/dx = sum res_j/(x-p_j) - sum D_k/(x-z_k)^2`.
pub fn meromorphic_derivative(model: &MeromorphicModel, x: Complex64) -> Result<Complex64, PoleError> {
    let mut acc = Complex64::new(0.0, 0.0);
    for p in &model.simple_poles {
        let d = x - p.location;
        if d.norm() < 1e-9 {
            return Err(PoleError::PoleEvaluation);
        }
        acc += p.residue / d;
    }
    for p in &model.double_poles {
        let d = x - p.location;
        if d.norm() < 1e-9 {
            return Err(PoleError::PoleEvaluation);
        }
        acc -= p.strength / (d * d);
    }
    Ok(acc)
}

/// Evaluate `G` itself: paired simple poles contribute `C ln((x-Q)/(x-P))`
/// (branch cut along the segment), unpaired ones `C ln(x-p)`, and double
/// poles `D/(x-z)`.
pub fn meromorphic_value(model: &MeromorphicModel, x: Complex64) -> Result<Complex64, PoleError> {
    let mut acc = Complex64::new(0.0, 0.0);
    let pairs = model.paired_segments();
    let paired_count = 2 * pairs.len();
    for (q, p) in &pairs {
        let dq = x - q.location;
        let dp = x - p.location;
        if dq.norm() < 1e-9 || dp.norm() < 1e-9 {
            return Err(PoleError::PoleEvaluation);
        }
        // average the antisymmetric residues for a slightly noisy model
        let c = (q.residue - p.residue) / 2.0;
        acc += c * (dq / dp).ln();
    }
    for p in model.simple_poles.iter().skip(paired_count) {
        let d = x - p.location;
        if d.norm() < 1e-9 {
            return Err(PoleError::PoleEvaluation);
        }
        acc += p.residue * d.ln();
    }
    for p in &model.double_poles {
        let d = x - p.location;
        if d.norm() < 1e-9 {
            return Err(PoleError::PoleEvaluation);
        }
        acc += p.strength / d;
    }
    Ok(acc)
}

/// Uniform samples of a function on the circle `|x - center| = radius`.
#[derive(Debug, Clone)]
pub struct ContourSamples {
    pub center: Complex64,
    pub radius: f64,
    pub values: Vec<Complex64>,
}

impl ContourSamples {
    pub fn points(&self) -> Vec<Complex64> {
        let n = self.values.len();
        (0..n)
            .map(|j| {
                let th = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
                self.center + Complex64::from_polar(self.radius, th)
            })
            .collect()
    }

    /// Sample a function on the contour.
    pub fn from_fn(
        center: Complex64,
        radius: f64,
        n: usize,
        mut f: impl FnMut(Complex64) -> Complex64,
    ) -> Self {
        let values = (0..n)
            .map(|j| {
                let th = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
                f(center + Complex64::from_polar(radius, th))
            })
            .collect();
        Self {
            center,
            radius,
            values,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RecoverConfig {
    /// cap on the total pole multiplicity
    pub max_poles: usize,
    /// relative fit residual target
    pub tol: f64,
    /// two locations closer than `pair_threshold * radius` form a double-pole
    /// candidate
    pub pair_threshold: f64,
    /// Gauss-Newton polish iterations
    pub refine_iters: usize,
    /// drop basis terms contributing less than this fraction of the samples
    pub prune_rel: f64,
}

impl Default for RecoverConfig {
    fn default() -> Self {
        Self {
            max_poles: 12,
            tol: 1e-8,
            pair_threshold: 0.02,
            refine_iters: 40,
            prune_rel: 1e-7,
        }
    }
}

type CMat = DMatrix<Complex64>;
type CVec = DVector<Complex64>;

/// One basis group: a pole location with either a simple term, or (for
/// double-pole candidates) both `1/(x-z)` and `1/(x-z)^2` terms.
#[derive(Debug, Clone)]
struct PoleGroup {
    location: Complex64,
    double_candidate: bool,
}

fn least_squares(a: &CMat, b: &CVec) -> Option<CVec> {
    let svd = a.clone().svd(true, true);
    svd.solve(b, 1e-13).ok().map(|x| x.column(0).into_owned())
}

/// Horner evaluation of the monic polynomial with low-order coefficients
/// `coeffs[0..n]` (`x^n + c_{n-1} x^{n-1} + ... + c_0`).
fn eval_monic(coeffs: &[Complex64], x: Complex64) -> Complex64 {
    let mut acc = Complex64::new(1.0, 0.0);
    for c in coeffs.iter().rev() {
        acc = acc * x + c;
    }
    acc
}

/// Durand-Kerner root finder; adequate here because clustering plus
/// Gauss-Newton refinement absorbs its reduced accuracy at multiple roots.
fn polynomial_roots(coeffs: &[Complex64]) -> Vec<Complex64> {
    let n = coeffs.len();
    if n == 0 {
        return Vec::new();
    }
    let scale = coeffs
        .iter()
        .map(|c| c.norm())
        .fold(0.0f64, f64::max)
        .max(1e-30)
        .powf(1.0 / n as f64)
        .max(0.3);
    let seed = Complex64::new(0.4, 0.9) / Complex64::new(0.4, 0.9).norm();
    let mut z: Vec<Complex64> = (0..n)
        .map(|j| seed.powu(j as u32 + 1) * scale * (1.0 + 0.11 * j as f64))
        .collect();
    for _ in 0..400 {
        let mut largest = 0.0f64;
        for i in 0..n {
            let p = eval_monic(coeffs, z[i]);
            let mut denom = Complex64::new(1.0, 0.0);
            for j in 0..n {
                if j != i {
                    denom *= z[i] - z[j];
                }
            }
            if denom.norm() < 1e-280 {
                continue;
            }
            let step = p / denom;
            z[i] -= step;
            largest = largest.max(step.norm() / (1.0 + z[i].norm()));
        }
        if largest < 1e-14 {
            break;
        }
    }
    z
}

struct FitResult {
    groups: Vec<PoleGroup>,
    coeffs: Vec<Complex64>,
    residual: f64,
}

/// Basis matrix for the given groups at the given points.
fn basis_matrix(groups: &[PoleGroup], points: &[Complex64]) -> (CMat, Vec<(usize, u8)>) {
    // column -> (group index, power)
    let mut layout = Vec::new();
    for (gi, g) in groups.iter().enumerate() {
        layout.push((gi, 1u8));
        if g.double_candidate {
            layout.push((gi, 2u8));
        }
    }
    let mut a = CMat::zeros(points.len(), layout.len());
    for (col, &(gi, pow)) in layout.iter().enumerate() {
        for (row, &x) in points.iter().enumerate() {
            let d = x - groups[gi].location;
            a[(row, col)] = if pow == 1 { 1.0 / d } else { 1.0 / (d * d) };
        }
    }
    (a, layout)
}

/// Merge fitted groups that drifted within the pairing distance (a double
/// pole fitted as two nearby simple poles).
fn merge_close_groups(groups: &[PoleGroup], merge_dist: f64) -> Option<Vec<PoleGroup>> {
    let mut merged: Vec<PoleGroup> = Vec::new();
    let mut used = vec![false; groups.len()];
    let mut changed = false;
    for i in 0..groups.len() {
        if used[i] {
            continue;
        }
        let mut partner = None;
        for j in (i + 1)..groups.len() {
            if !used[j] && (groups[i].location - groups[j].location).norm() < merge_dist {
                partner = Some(j);
                break;
            }
        }
        if let Some(j) = partner {
            used[i] = true;
            used[j] = true;
            changed = true;
            merged.push(PoleGroup {
                location: (groups[i].location + groups[j].location) / 2.0,
                double_candidate: true,
            });
        } else {
            used[i] = true;
            merged.push(groups[i].clone());
        }
    }
    changed.then_some(merged)
}

fn fit_groups(
    mut groups: Vec<PoleGroup>,
    points: &[Complex64],
    values: &CVec,
    config: &RecoverConfig,
    scale: f64,
) -> Option<FitResult> {
    let norm_f = values.norm();
    if norm_f == 0.0 {
        return Some(FitResult {
            groups: Vec::new(),
            coeffs: Vec::new(),
            residual: 0.0,
        });
    }
    let mut best: Option<FitResult> = None;
    for _pass in 0..3 {
        // linear fit + Gauss-Newton polish of the locations
        let mut coeffs;
        {
            let (a, _) = basis_matrix(&groups, points);
            coeffs = least_squares(&a, values)?;
        }
        for _ in 0..config.refine_iters {
            let (a, layout) = basis_matrix(&groups, points);
            coeffs = least_squares(&a, values)?;
            let r = values - &a * &coeffs;
            // Jacobian with respect to the group locations
            let mut jac = CMat::zeros(points.len(), groups.len());
            for (col, &(gi, pow)) in layout.iter().enumerate() {
                for (row, &x) in points.iter().enumerate() {
                    let d = x - groups[gi].location;
                    let dphi = if pow == 1 {
                        1.0 / (d * d)
                    } else {
                        2.0 / (d * d * d)
                    };
                    jac[(row, gi)] += coeffs[col] * dphi;
                }
            }
            let Some(delta) = least_squares(&jac, &r) else {
                break;
            };
            let max_step = delta.iter().map(|d| d.norm()).fold(0.0f64, f64::max);
            let cap = 0.25 * scale;
            let damp = if max_step > cap { cap / max_step } else { 1.0 };
            for (gi, g) in groups.iter_mut().enumerate() {
                g.location += damp * delta[gi];
            }
            if max_step < 1e-13 * scale {
                break;
            }
        }
        let (a, layout) = basis_matrix(&groups, points);
        coeffs = least_squares(&a, values)?;
        let residual = (values - &a * &coeffs).norm() / norm_f;
        let result = FitResult {
            groups: groups.clone(),
            coeffs: coeffs.iter().cloned().collect(),
            residual,
        };
        // merge pairs that Gauss-Newton drove together, then refit
        if let Some(merged) = merge_close_groups(&groups, config.pair_threshold * scale) {
            best = Some(match best {
                Some(b) if b.residual < result.residual => b,
                _ => result,
            });
            groups = merged;
            continue;
        }
        // prune negligible basis contributions, then refit once
        let contrib: Vec<f64> = layout
            .iter()
            .enumerate()
            .map(|(col, &(gi, pow))| {
                let dist = points
                    .iter()
                    .map(|x| (x - groups[gi].location).norm())
                    .fold(f64::INFINITY, f64::min)
                    .max(1e-12);
                let basis_max = if pow == 1 { 1.0 / dist } else { 1.0 / (dist * dist) };
                coeffs[col].norm() * basis_max
            })
            .collect();
        let max_contrib = contrib.iter().cloned().fold(0.0f64, f64::max);
        let keep: Vec<bool> = contrib
            .iter()
            .map(|&c| c > config.prune_rel * max_contrib)
            .collect();
        if keep.iter().all(|&k| k) {
            return Some(match best {
                Some(b) if b.residual < result.residual => b,
                _ => result,
            });
        }
        // rebuild groups from the surviving columns
        let mut new_groups: Vec<PoleGroup> = Vec::new();
        for (gi, g) in groups.iter().enumerate() {
            let cols: Vec<usize> = layout
                .iter()
                .enumerate()
                .filter(|(_, &(i, _))| i == gi)
                .map(|(c, _)| c)
                .collect();
            let keep_simple = cols
                .iter()
                .any(|&c| layout[c].1 == 1 && keep[c]);
            let keep_double = cols
                .iter()
                .any(|&c| layout[c].1 == 2 && keep[c]);
            if keep_double {
                new_groups.push(PoleGroup {
                    location: g.location,
                    double_candidate: true,
                });
            } else if keep_simple {
                new_groups.push(PoleGroup {
                    location: g.location,
                    double_candidate: false,
                });
            }
        }
        if new_groups.is_empty() {
            return Some(result);
        }
        best = Some(result);
        groups = new_groups;
    }
    best
}

/// Recover pole locations and residues/strengths from uniform samples of
/// `dG/dx` on a closed contour enclosing all poles.
pub fn recover_poles(
    samples: &ContourSamples,
    config: &RecoverConfig,
) -> Result<MeromorphicModel, PoleError> {
    let n_samp = samples.values.len();
    if n_samp < 64 {
        return Err(PoleError::TooFewSamples(n_samp));
    }
    let points = samples.points();
    let values = CVec::from_iterator(n_samp, samples.values.iter().cloned());
    let norm_f = values.norm();
    if norm_f == 0.0 {
        return Ok(MeromorphicModel::default());
    }

    // contour moments s_m = (1/2 pi i) \oint (x-c)^m f(x) dx, spectrally
    // accurate by the trapezoid rule on the circle
    let k_max = config.max_poles;
    let mut moments = vec![Complex64::new(0.0, 0.0); 2 * k_max];
    for (m, slot) in moments.iter_mut().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, &v) in samples.values.iter().enumerate() {
            let th = 2.0 * std::f64::consts::PI * j as f64 / n_samp as f64;
            let rot = Complex64::from_polar(samples.radius.powi(m as i32 + 1), th * (m as f64 + 1.0));
            acc += rot * v;
        }
        *slot = acc / n_samp as f64;
    }

    let mut candidates: Vec<FitResult> = Vec::new();
    for order in 1..=k_max {
        // linear prediction: s_{m+order} = sum_j q_j s_{m+j}
        let rows = 2 * k_max - order;
        let mut a = CMat::zeros(rows, order);
        let mut b = CVec::zeros(rows);
        for m in 0..rows {
            for j in 0..order {
                a[(m, j)] = moments[m + j];
            }
            b[m] = moments[m + order];
        }
        let Some(q) = least_squares(&a, &b) else {
            continue;
        };
        let coeffs: Vec<Complex64> = (0..order).map(|j| -q[j]).collect();
        let roots = polynomial_roots(&coeffs);
        // keep roots enclosed by the contour
        let mut locs: Vec<Complex64> = roots
            .into_iter()
            .map(|r| r + samples.center)
            .filter(|z| (z - samples.center).norm() <= 1.02 * samples.radius)
            .collect();
        if locs.is_empty() {
            continue;
        }
        // cluster close pairs into double-pole candidates
        let merge_dist = config.pair_threshold * samples.radius;
        let mut groups: Vec<PoleGroup> = Vec::new();
        locs.sort_by(|a, b| (a.re, a.im).partial_cmp(&(b.re, b.im)).unwrap());
        let mut used = vec![false; locs.len()];
        for i in 0..locs.len() {
            if used[i] {
                continue;
            }
            let mut partner = None;
            for j in (i + 1)..locs.len() {
                if !used[j] && (locs[i] - locs[j]).norm() < merge_dist {
                    partner = Some(j);
                    break;
                }
            }
            if let Some(j) = partner {
                used[i] = true;
                used[j] = true;
                groups.push(PoleGroup {
                    location: (locs[i] + locs[j]) / 2.0,
                    double_candidate: true,
                });
            } else {
                used[i] = true;
                groups.push(PoleGroup {
                    location: locs[i],
                    double_candidate: false,
                });
            }
        }
        if let Some(fit) = fit_groups(groups, &points, &values, config, samples.radius) {
            candidates.push(fit);
        }
        // noiseless data: stop once a fit is essentially exact
        if candidates.iter().any(|f| f.residual < 1e-11) {
            break;
        }
    }

    // parsimony: among fits close to the best residual, prefer the fewest
    // pole parameters (extra poles always fit noise a little better)
    let Some(best_residual) = candidates
        .iter()
        .map(|f| f.residual)
        .min_by(|a, b| a.partial_cmp(b).unwrap())
    else {
        return Err(PoleError::ModelOrderFailure {
            tol: config.tol,
            best: f64::INFINITY,
        });
    };
    let param_count = |f: &FitResult| {
        f.groups
            .iter()
            .map(|g| if g.double_candidate { 2 } else { 1 })
            .sum::<usize>()
    };
    let fit = candidates
        .into_iter()
        .filter(|f| f.residual <= (1.3 * best_residual).max(config.tol.min(1e-11)))
        .min_by(|a, b| {
            (param_count(a), a.residual)
                .partial_cmp(&(param_count(b), b.residual))
                .unwrap()
        })
        .expect("nonempty candidate set");
    if fit.residual > config.tol {
        return Err(PoleError::ModelOrderFailure {
            tol: config.tol,
            best: fit.residual,
        });
    }

    // assemble the model from the fitted groups
    let mut model = MeromorphicModel::default();
    let mut col = 0;
    for g in &fit.groups {
        let c1 = fit.coeffs[col];
        col += 1;
        if g.double_candidate {
            let c2 = fit.coeffs[col];
            col += 1;
            // a physical double pole carries a negligible simple component;
            // a spurious one degenerates to a simple pole
            let dist = points
                .iter()
                .map(|x| (x - g.location).norm())
                .fold(f64::INFINITY, f64::min)
                .max(1e-12);
            if c2.norm() / (dist * dist) > c1.norm() / dist {
                model.double_poles.push(DoublePole {
                    location: g.location,
                    strength: -c2,
                });
            } else {
                model.simple_poles.push(SimplePole {
                    location: g.location,
                    residue: c1,
                });
            }
        } else {
            model.simple_poles.push(SimplePole {
                location: g.location,
                residue: c1,
            });
        }
    }

    // collision check on the final model
    let mut all_locs: Vec<Complex64> = model
        .simple_poles
        .iter()
        .map(|p| p.location)
        .chain(model.double_poles.iter().map(|p| p.location))
        .collect();
    let resolution = 0.5 * config.pair_threshold * samples.radius;
    all_locs.sort_by(|a, b| (a.re, a.im).partial_cmp(&(b.re, b.im)).unwrap());
    for i in 0..all_locs.len() {
        for j in (i + 1)..all_locs.len() {
            if (all_locs[i] - all_locs[j]).norm() < resolution {
                return Err(PoleError::PoleCollision { resolution });
            }
        }
    }
    Ok(model)
}
