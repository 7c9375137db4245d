//! Forward problem: P1 finite element solves of the complex conductivity
//! equation, with thin insulators either resolved as strip subdomains or
//! replaced by the effective zero-thickness interface model, plus the
//! jump-profile extraction used to verify the interface conditions.

mod system;

pub use system::{assemble, element_gradients, region_gamma, AssembledSystem, Factorization};

use num_complex::Complex64;
use thiserror::Error;

use crate::admittivity::{lambda_c, Frequency, MaterialSpec};
use crate::geometry::{Mesh, Phantom, Region};
use crate::Vec2;

#[derive(Debug, Error)]
pub enum ForwardError {
    #[error("linear solve failed: {0}")]
    SolveFailure(String),
    #[error("segment {0} not found in phantom")]
    SegmentNotFound(usize),
    #[error("mesh does not fit the requested model: {0}")]
    ModelMismatch(String),
    #[error("invalid boundary current: {0}")]
    InvalidCurrent(String),
}

/// Which coefficient layout a solve uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveModel {
    /// Strips are resolved subdomains carrying `gamma_c`.
    Resolved,
    /// Strips are interfaces with the Robin-type jump coupling.
    ZeroThickness,
    /// Background admittivity everywhere (crack pairs tied together).
    Homogeneous,
}

/// Neumann boundary current density, sampled at the boundary nodes in
/// counterclockwise order. The discrete boundary integral vanishes.
#[derive(Debug, Clone)]
pub struct NeumannCurrent {
    densities: Vec<f64>,
}

impl NeumannCurrent {
    /// Wrap a nodal density after checking the zero-mean invariant.
    pub fn new(mesh: &Mesh, densities: Vec<f64>) -> Result<Self, ForwardError> {
        let boundary = mesh.boundary_nodes();
        if densities.len() != boundary.len() {
            return Err(ForwardError::InvalidCurrent(format!(
                "expected {} boundary samples, got {}",
                boundary.len(),
                densities.len()
            )));
        }
        let weights = mesh.boundary_weights();
        let integral: f64 = boundary
            .iter()
            .zip(densities.iter())
            .map(|(n, g)| weights[n] * g)
            .sum();
        let scale = densities.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if scale > 0.0 && integral.abs() > 1e-12 * scale {
            return Err(ForwardError::InvalidCurrent(format!(
                "boundary integral {integral:.3e} not zero"
            )));
        }
        Ok(Self { densities })
    }

    /// Uniform-field pattern `g = a . nu` (projected to exact discrete zero
    /// mean).
    pub fn uniform_field(mesh: &Mesh, a: Vec2) -> Self {
        let boundary = mesh.boundary_nodes();
        let weights = mesh.boundary_weights();
        let mut densities: Vec<f64> = boundary
            .iter()
            .map(|&n| {
                let x = mesh.nodes[n];
                a.dot(&x.coords) / x.coords.norm()
            })
            .collect();
        let total_w: f64 = boundary.iter().map(|n| weights[n]).sum();
        let integral: f64 = boundary
            .iter()
            .zip(densities.iter())
            .map(|(n, g)| weights[n] * g)
            .sum();
        let shift = integral / total_w;
        for g in densities.iter_mut() {
            *g -= shift;
        }
        Self { densities }
    }

    pub fn densities(&self) -> &[f64] {
        &self.densities
    }
}

/// Complex potential per mesh node; crack-duplicated nodes carry independent
/// values.
#[derive(Debug, Clone)]
pub struct PotentialField {
    pub u: Vec<Complex64>,
    pub omega: Frequency,
    pub model: SolveModel,
}

impl PotentialField {
    /// Trace at the boundary nodes, counterclockwise.
    pub fn boundary_trace(&self, mesh: &Mesh) -> Vec<Complex64> {
        mesh.boundary_nodes().iter().map(|&n| self.u[n]).collect()
    }

    /// Weighted mean of the boundary trace (zero for any solve).
    pub fn boundary_mean(&self, mesh: &Mesh) -> Complex64 {
        let weights = mesh.boundary_weights();
        let mut total = 0.0;
        let mut acc = Complex64::new(0.0, 0.0);
        for &(a, _) in &mesh.boundary_edges {
            let w = weights[&a];
            acc += w * self.u[a];
            total += w;
        }
        acc / total
    }

    /// Potential jumps `u_plus - u_minus` along one segment chain, ordered by
    /// arclength (tips carry zero jump).
    pub fn crack_jumps(&self, mesh: &Mesh, segment: usize) -> Option<(Vec<f64>, Vec<Complex64>)> {
        let chain = mesh.crack_chains.iter().find(|c| c.segment == segment)?;
        let s: Vec<f64> = chain.vertices.iter().map(|v| v.s).collect();
        let jumps: Vec<Complex64> = chain
            .vertices
            .iter()
            .map(|v| self.u[v.plus] - self.u[v.minus])
            .collect();
        Some((s, jumps))
    }

    /// Complex gradient on one triangle.
    pub fn gradient(&self, mesh: &Mesh, t: usize) -> (Complex64, Complex64) {
        let tri = mesh.triangles[t];
        let (grads, _) = element_gradients(
            mesh.nodes[tri[0]],
            mesh.nodes[tri[1]],
            mesh.nodes[tri[2]],
        );
        let mut gx = Complex64::new(0.0, 0.0);
        let mut gy = Complex64::new(0.0, 0.0);
        for i in 0..3 {
            gx += self.u[tri[i]] * grads[i].x;
            gy += self.u[tri[i]] * grads[i].y;
        }
        (gx, gy)
    }
}

/// Nodal load vector `b_i = int_boundary g phi_i ds` (P1 density on edges).
pub fn boundary_load(mesh: &Mesh, g: &NeumannCurrent) -> Vec<Complex64> {
    let boundary = mesh.boundary_nodes();
    let mut g_of_node = std::collections::HashMap::new();
    for (i, &n) in boundary.iter().enumerate() {
        g_of_node.insert(n, g.densities[i]);
    }
    let mut b = vec![Complex64::new(0.0, 0.0); mesh.nodes.len()];
    for &(na, nb) in &mesh.boundary_edges {
        let len = (mesh.nodes[nb] - mesh.nodes[na]).norm();
        let ga = g_of_node[&na];
        let gb = g_of_node[&nb];
        b[na] += Complex64::new(len * (2.0 * ga + gb) / 6.0, 0.0);
        b[nb] += Complex64::new(len * (ga + 2.0 * gb) / 6.0, 0.0);
    }
    b
}

/// Factor-once solver for one `(mesh, materials, omega, model)` combination.
pub struct ForwardSolver<'m> {
    mesh: &'m Mesh,
    model: SolveModel,
    omega: Frequency,
    system: AssembledSystem,
    factorization: Factorization,
}

impl<'m> ForwardSolver<'m> {
    pub fn new(
        mesh: &'m Mesh,
        phantom: &Phantom,
        omega: Frequency,
        model: SolveModel,
    ) -> Result<Self, ForwardError> {
        match model {
            SolveModel::Resolved => {
                if !mesh.crack_pairs.is_empty() {
                    return Err(ForwardError::ModelMismatch(
                        "resolved solve on a crack-duplicated mesh".into(),
                    ));
                }
                for k in 0..phantom.insulators.len() {
                    if !mesh.regions.iter().any(|r| *r == Region::Insulator(k)) {
                        return Err(ForwardError::ModelMismatch(format!(
                            "mesh does not resolve strip {k}"
                        )));
                    }
                }
            }
            SolveModel::ZeroThickness => {
                for k in 0..phantom.insulators.len() {
                    if !mesh.crack_chains.iter().any(|c| c.segment == k) {
                        return Err(ForwardError::ModelMismatch(format!(
                            "mesh has no crack chain for segment {k}"
                        )));
                    }
                }
            }
            SolveModel::Homogeneous => {}
        }
        let half: Vec<f64> = phantom.insulators.iter().map(|i| i.half_thickness).collect();
        let system = assemble(mesh, &phantom.materials, omega, model, &half);
        let factorization = system.factor()?;
        Ok(Self {
            mesh,
            model,
            omega,
            system,
            factorization,
        })
    }

    /// Background-only solver; needs no phantom.
    pub fn homogeneous(
        mesh: &'m Mesh,
        materials: &MaterialSpec,
        omega: Frequency,
    ) -> Result<Self, ForwardError> {
        let system = assemble(mesh, materials, omega, SolveModel::Homogeneous, &[]);
        let factorization = system.factor()?;
        Ok(Self {
            mesh,
            model: SolveModel::Homogeneous,
            omega,
            system,
            factorization,
        })
    }

    pub fn solve(&self, g: &NeumannCurrent) -> Result<PotentialField, ForwardError> {
        Ok(self.solve_many(std::slice::from_ref(g))?.pop().unwrap())
    }

    pub fn solve_many(&self, gs: &[NeumannCurrent]) -> Result<Vec<PotentialField>, ForwardError> {
        let rhs: Vec<Vec<Complex64>> = gs
            .iter()
            .map(|g| {
                let load = boundary_load(self.mesh, g);
                let mut r = vec![Complex64::new(0.0, 0.0); self.system.size()];
                for (node, v) in load.iter().enumerate() {
                    r[self.system.dof_of_node[node]] += v;
                }
                r
            })
            .collect();
        let mut solutions = self.factorization.solve_many(&rhs);
        let mut fields = Vec::with_capacity(gs.len());
        for (x, r) in solutions.iter_mut().zip(rhs.iter()) {
            // iterative refinement against the same factorization, then a
            // hard residual check
            let mut rel = residual(&self.system, x, r);
            for _ in 0..3 {
                if rel <= 1e-12 {
                    break;
                }
                let ax = self.system.apply(x);
                let defect: Vec<Complex64> =
                    r.iter().zip(ax.iter()).map(|(b, a)| b - a).collect();
                let correction = self.factorization.solve(&defect);
                for (xi, ci) in x.iter_mut().zip(correction.iter()) {
                    *xi += ci;
                }
                let new_rel = residual(&self.system, x, r);
                if new_rel >= rel {
                    break;
                }
                rel = new_rel;
            }
            if rel > 1e-10 {
                return Err(ForwardError::SolveFailure(format!(
                    "relative residual {rel:.3e} above 1e-10"
                )));
            }
            let u: Vec<Complex64> = (0..self.mesh.nodes.len())
                .map(|node| x[self.system.dof_of_node[node]])
                .collect();
            fields.push(PotentialField {
                u,
                omega: self.omega,
                model: self.model,
            });
        }
        Ok(fields)
    }

    pub fn omega(&self) -> Frequency {
        self.omega
    }

    pub fn model(&self) -> SolveModel {
        self.model
    }
}

fn residual(system: &AssembledSystem, x: &[Complex64], b: &[Complex64]) -> f64 {
    let ax = system.apply(x);
    let num: f64 = ax
        .iter()
        .zip(b.iter())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        .sqrt();
    let den: f64 = b.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Solve with resolved strips (`gamma_c` rectangles in the mesh).
pub fn solve_resolved(
    mesh: &Mesh,
    phantom: &Phantom,
    omega: Frequency,
    g: &NeumannCurrent,
) -> Result<PotentialField, ForwardError> {
    ForwardSolver::new(mesh, phantom, omega, SolveModel::Resolved)?.solve(g)
}

/// Solve the effective zero-thickness interface model.
pub fn solve_zero_thickness(
    mesh: &Mesh,
    phantom: &Phantom,
    omega: Frequency,
    g: &NeumannCurrent,
) -> Result<PotentialField, ForwardError> {
    ForwardSolver::new(mesh, phantom, omega, SolveModel::ZeroThickness)?.solve(g)
}

/// Background-only reference solve on the same mesh.
pub fn homogeneous_reference(
    mesh: &Mesh,
    materials: &MaterialSpec,
    omega: Frequency,
    g: &NeumannCurrent,
) -> Result<PotentialField, ForwardError> {
    ForwardSolver::homogeneous(mesh, materials, omega)?.solve(g)
}

/// Discrete energy bilinear form `int gamma grad u . grad v` plus, for the
/// zero-thickness model, the interfacial jump terms. Complex-symmetric (no
/// conjugation).
pub fn energy_product(
    mesh: &Mesh,
    materials: &MaterialSpec,
    omega: Frequency,
    model: SolveModel,
    insulator_half_thickness: &[f64],
    u: &PotentialField,
    v: &PotentialField,
) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let gamma = region_gamma(mesh.regions[t], model, materials, omega);
        let (grads, area) = element_gradients(
            mesh.nodes[tri[0]],
            mesh.nodes[tri[1]],
            mesh.nodes[tri[2]],
        );
        let mut gu = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
        let mut gv = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
        for i in 0..3 {
            gu.0 += u.u[tri[i]] * grads[i].x;
            gu.1 += u.u[tri[i]] * grads[i].y;
            gv.0 += v.u[tri[i]] * grads[i].x;
            gv.1 += v.u[tri[i]] * grads[i].y;
        }
        acc += gamma * (gu.0 * gv.0 + gu.1 * gv.1) * area;
    }
    if model == SolveModel::ZeroThickness {
        let lambda = lambda_c(omega, materials);
        if lambda.norm() > 0.0 {
            let gamma_b = materials.gamma_b(omega);
            for chain in &mesh.crack_chains {
                let delta = insulator_half_thickness[chain.segment];
                let coeff = gamma_b * lambda / (2.0 * delta);
                for w in chain.vertices.windows(2) {
                    let len = (mesh.nodes[w[1].plus] - mesh.nodes[w[0].plus]).norm();
                    let ju = [
                        u.u[w[0].plus] - u.u[w[0].minus],
                        u.u[w[1].plus] - u.u[w[1].minus],
                    ];
                    let jv = [
                        v.u[w[0].plus] - v.u[w[0].minus],
                        v.u[w[1].plus] - v.u[w[1].minus],
                    ];
                    acc += coeff
                        * (len / 6.0)
                        * (2.0 * ju[0] * jv[0]
                            + ju[0] * jv[1]
                            + ju[1] * jv[0]
                            + 2.0 * ju[1] * jv[1]);
                }
            }
        }
    }
    acc
}

/// Jump samples along the interior portion of a segment from a resolved
/// solve: the measured potential jump, the exterior normal derivative on the
/// minus face, its jump across the strip, and the interface-condition
/// prediction `(2 delta / lambda_c) * dnu_plus`.
#[derive(Debug, Clone)]
pub struct JumpProfile {
    pub segment: usize,
    pub s: Vec<f64>,
    pub jump_u: Vec<Complex64>,
    pub dnu_plus: Vec<Complex64>,
    pub dnu_jump: Vec<Complex64>,
    pub predicted_jump: Vec<Complex64>,
}

impl JumpProfile {
    pub fn max_prediction_error(&self) -> f64 {
        self.jump_u
            .iter()
            .zip(self.predicted_jump.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_dnu_jump(&self) -> f64 {
        self.dnu_jump.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }
}

/// Extract a [`JumpProfile`] from a resolved solve.
///
/// Samples sit at the strip-face mesh nodes whose arclength lies in
/// `[c0, L - c0]` with `c0 = c0_fraction * L`; the normal derivatives are
/// exterior limits, averaged over the (at most two) outside elements adjacent
/// to each face node.
pub fn jump_profile(
    field: &PotentialField,
    mesh: &Mesh,
    phantom: &Phantom,
    segment_id: usize,
    c0_fraction: f64,
) -> Result<JumpProfile, ForwardError> {
    if field.model != SolveModel::Resolved {
        return Err(ForwardError::ModelMismatch(
            "jump profiles need a resolved-model field".into(),
        ));
    }
    let ins = phantom
        .insulators
        .get(segment_id)
        .ok_or(ForwardError::SegmentNotFound(segment_id))?;
    let len = ins.length();
    let delta = ins.half_thickness;
    let nu = ins.normal();
    let c0 = c0_fraction * len;

    // collect strip-face nodes by local coordinates
    let tol = 1e-6 * delta;
    let mut top: Vec<(f64, usize)> = Vec::new();
    let mut bottom: Vec<(f64, usize)> = Vec::new();
    for (n, p) in mesh.nodes.iter().enumerate() {
        let (s, off) = ins.local(*p);
        if s < -tol || s > len + tol {
            continue;
        }
        if (off - delta).abs() <= tol {
            top.push((s, n));
        } else if (off + delta).abs() <= tol {
            bottom.push((s, n));
        }
    }
    top.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    bottom.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    if top.len() != bottom.len() || top.len() < 4 {
        return Err(ForwardError::ModelMismatch(format!(
            "strip {segment_id} faces not conforming ({} top, {} bottom nodes)",
            top.len(),
            bottom.len()
        )));
    }

    // exterior elements adjacent to the faces: region != this strip and two
    // vertices on the face line
    let top_set: std::collections::HashMap<usize, usize> =
        top.iter().enumerate().map(|(i, &(_, n))| (n, i)).collect();
    let bottom_set: std::collections::HashMap<usize, usize> =
        bottom.iter().enumerate().map(|(i, &(_, n))| (n, i)).collect();
    let mut top_flux: Vec<Vec<Complex64>> = vec![Vec::new(); top.len()];
    let mut bottom_flux: Vec<Vec<Complex64>> = vec![Vec::new(); bottom.len()];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        if mesh.regions[t] == Region::Insulator(segment_id) {
            continue;
        }
        let on_top: Vec<usize> = tri.iter().filter_map(|v| top_set.get(v).copied()).collect();
        let on_bottom: Vec<usize> = tri
            .iter()
            .filter_map(|v| bottom_set.get(v).copied())
            .collect();
        if on_top.len() == 2 {
            let (gx, gy) = field.gradient(mesh, t);
            let flux = gx * nu.x + gy * nu.y;
            for &i in &on_top {
                top_flux[i].push(flux);
            }
        }
        if on_bottom.len() == 2 {
            let (gx, gy) = field.gradient(mesh, t);
            let flux = gx * nu.x + gy * nu.y;
            for &i in &on_bottom {
                bottom_flux[i].push(flux);
            }
        }
    }

    let lam = lambda_c(field.omega, &phantom.materials);
    let mut out = JumpProfile {
        segment: segment_id,
        s: Vec::new(),
        jump_u: Vec::new(),
        dnu_plus: Vec::new(),
        dnu_jump: Vec::new(),
        predicted_jump: Vec::new(),
    };
    let avg = |v: &[Complex64]| -> Option<Complex64> {
        if v.is_empty() {
            None
        } else {
            Some(v.iter().sum::<Complex64>() / v.len() as f64)
        }
    };
    for i in 0..top.len() {
        let (s_top, n_top) = top[i];
        let (s_bot, n_bot) = bottom[i];
        if (s_top - s_bot).abs() > 1e-9 * len.max(1.0) {
            return Err(ForwardError::ModelMismatch(
                "strip face stations misaligned".into(),
            ));
        }
        if s_top < c0 || s_top > len - c0 {
            continue;
        }
        let (Some(f_top), Some(f_bot)) = (avg(&top_flux[i]), avg(&bottom_flux[i])) else {
            continue;
        };
        out.s.push(s_top);
        out.jump_u.push(field.u[n_top] - field.u[n_bot]);
        out.dnu_plus.push(f_bot);
        out.dnu_jump.push(f_top - f_bot);
        out.predicted_jump.push(2.0 * delta / lam * f_bot);
    }
    if out.s.is_empty() {
        return Err(ForwardError::ModelMismatch(
            "no interior face samples found".into(),
        ));
    }
    Ok(out)
}
