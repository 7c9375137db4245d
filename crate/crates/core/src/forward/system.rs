//! Sparse complex linear systems: P1 assembly and direct factorization.
//!
//! The weak form is complex-symmetric. The zero-mean constraint
//! `int_{boundary} u ds = 0` is imposed through one Lagrange multiplier row
//! appended to the stiffness matrix rather than by pinning a node.

use faer::linalg::solvers::Solve;
use faer::prelude::Reborrow;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use num_complex::Complex64;

use super::{ForwardError, SolveModel};
use crate::admittivity::{Frequency, MaterialSpec};
use crate::geometry::{Mesh, Region};
use crate::{Point, Vec2};

/// P1 gradient basis of a triangle: constant gradients of the three hat
/// functions plus the (signed) area.
pub fn element_gradients(a: Point, b: Point, c: Point) -> ([Vec2; 3], f64) {
    let det = (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y);
    let area = 0.5 * det;
    let g0 = Vec2::new(b.y - c.y, c.x - b.x) / det;
    let g1 = Vec2::new(c.y - a.y, a.x - c.x) / det;
    let g2 = Vec2::new(a.y - b.y, b.x - a.x) / det;
    ([g0, g1, g2], area)
}

/// Admittivity of a triangle region for the given solve model.
pub fn region_gamma(
    region: Region,
    model: SolveModel,
    materials: &MaterialSpec,
    omega: Frequency,
) -> Complex64 {
    match (model, region) {
        (SolveModel::Homogeneous, _) => materials.gamma_b(omega),
        (_, Region::Background) => materials.gamma_b(omega),
        (_, Region::Disk(_)) => materials.gamma_d(omega),
        (SolveModel::Resolved, Region::Insulator(_)) => materials.gamma_c(omega),
        // zero-thickness meshes carry no insulator regions
        (SolveModel::ZeroThickness, Region::Insulator(_)) => materials.gamma_b(omega),
    }
}

/// Assembled constrained system together with the node-to-dof map.
pub struct AssembledSystem {
    /// nodes map to dofs; for homogeneous solves on crack meshes both copies
    /// of a pair share one dof
    pub dof_of_node: Vec<usize>,
    /// number of potential dofs (excluding the multiplier row)
    pub n_dofs: usize,
    triplets: Vec<Triplet<usize, usize, Complex64>>,
}

impl AssembledSystem {
    pub fn size(&self) -> usize {
        self.n_dofs + 1
    }

    /// Sparse matrix-vector product of the augmented system.
    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut y = vec![Complex64::new(0.0, 0.0); self.size()];
        for t in &self.triplets {
            y[t.row] += t.val * x[t.col];
        }
        y
    }

    pub fn factor(&self) -> Result<Factorization, ForwardError> {
        let n = self.size();
        let mat = SparseColMat::try_new_from_triplets(n, n, &self.triplets)
            .map_err(|e| ForwardError::SolveFailure(format!("matrix creation: {e:?}")))?;
        let symbolic = SymbolicLu::try_new(mat.symbolic())
            .map_err(|e| ForwardError::SolveFailure(format!("symbolic LU: {e:?}")))?;
        let lu = Lu::try_new_with_symbolic(symbolic, mat.rb())
            .map_err(|e| ForwardError::SolveFailure(format!("numeric LU: {e:?}")))?;
        Ok(Factorization { lu, n })
    }
}

/// Sparse LU of one assembled system; reusable across right-hand sides.
pub struct Factorization {
    lu: Lu<usize, Complex64>,
    n: usize,
}

impl Factorization {
    pub fn solve(&self, rhs: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(rhs.len(), self.n);
        let mut b = Mat::<Complex64>::zeros(self.n, 1);
        for (i, v) in rhs.iter().enumerate() {
            b[(i, 0)] = *v;
        }
        let x = self.lu.solve(&b);
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }

    /// Solve several right-hand sides against one factorization.
    pub fn solve_many(&self, rhs: &[Vec<Complex64>]) -> Vec<Vec<Complex64>> {
        if rhs.is_empty() {
            return Vec::new();
        }
        let mut b = Mat::<Complex64>::zeros(self.n, rhs.len());
        for (j, col) in rhs.iter().enumerate() {
            assert_eq!(col.len(), self.n);
            for (i, v) in col.iter().enumerate() {
                b[(i, j)] = *v;
            }
        }
        let x = self.lu.solve(&b);
        (0..rhs.len())
            .map(|j| (0..self.n).map(|i| x[(i, j)]).collect())
            .collect()
    }
}

/// Assemble the constrained stiffness system for the given model.
///
/// Zero-thickness meshes get one interfacial mass term per crack edge,
/// penalizing `gamma_b * lambda_c / (2 delta_k) * [u][v]`; when
/// `lambda_c = 0` the interface contribution is dropped entirely (perfect
/// crack, the continuous limit of the Robin term).
pub fn assemble(
    mesh: &Mesh,
    materials: &MaterialSpec,
    omega: Frequency,
    model: SolveModel,
    insulator_half_thickness: &[f64],
) -> AssembledSystem {
    // dof map: merge crack pairs for homogeneous solves (corner splits chain
    // several copies together, so resolve merge links to their roots)
    let n_nodes = mesh.nodes.len();
    let mut dof_of_node: Vec<usize> = (0..n_nodes).collect();
    if model == SolveModel::Homogeneous {
        for pair in &mesh.crack_pairs {
            dof_of_node[pair.minus] = pair.plus;
        }
        for node in 0..n_nodes {
            let mut root = node;
            while dof_of_node[root] != root {
                root = dof_of_node[root];
            }
            dof_of_node[node] = root;
        }
    }
    // compact renumbering
    let mut remap = vec![usize::MAX; n_nodes];
    let mut n_dofs = 0;
    for node in 0..n_nodes {
        let root = dof_of_node[node];
        if remap[root] == usize::MAX {
            remap[root] = n_dofs;
            n_dofs += 1;
        }
        dof_of_node[node] = remap[root];
    }

    let mut triplets: Vec<Triplet<usize, usize, Complex64>> = Vec::new();

    // volume terms
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let gamma = region_gamma(mesh.regions[t], model, materials, omega);
        let (grads, area) = element_gradients(
            mesh.nodes[tri[0]],
            mesh.nodes[tri[1]],
            mesh.nodes[tri[2]],
        );
        for i in 0..3 {
            for j in 0..3 {
                let k = gamma * (grads[i].dot(&grads[j]) * area);
                triplets.push(Triplet::new(dof_of_node[tri[i]], dof_of_node[tri[j]], k));
            }
        }
    }

    // interfacial jump terms along each crack chain
    if model == SolveModel::ZeroThickness {
        let gamma_b = materials.gamma_b(omega);
        let lambda = crate::admittivity::lambda_c(omega, materials);
        if lambda.norm() > 0.0 {
            for chain in &mesh.crack_chains {
                let delta = insulator_half_thickness[chain.segment];
                let coeff = gamma_b * lambda / (2.0 * delta);
                for w in chain.vertices.windows(2) {
                    let (va, vb) = (w[0], w[1]);
                    let len = (mesh.nodes[vb.plus] - mesh.nodes[va.plus]).norm();
                    // edge mass matrix on the jump values [u] = u_plus - u_minus
                    let m = [[2.0, 1.0], [1.0, 2.0]];
                    let ends = [va, vb];
                    for (ei, end_i) in ends.iter().enumerate() {
                        for (ej, end_j) in ends.iter().enumerate() {
                            let w_ij = coeff * (len / 6.0 * m[ei][ej]);
                            for (ni, si) in [(end_i.plus, 1.0), (end_i.minus, -1.0)] {
                                for (nj, sj) in [(end_j.plus, 1.0), (end_j.minus, -1.0)] {
                                    triplets.push(Triplet::new(
                                        dof_of_node[ni],
                                        dof_of_node[nj],
                                        w_ij * si * sj,
                                    ));
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    // zero-mean constraint row and column
    let row = n_dofs;
    for (node, w) in mesh.boundary_weights() {
        let dof = dof_of_node[node];
        let c = Complex64::new(w, 0.0);
        triplets.push(Triplet::new(row, dof, c));
        triplets.push(Triplet::new(dof, row, c));
    }
    triplets.push(Triplet::new(row, row, Complex64::new(0.0, 0.0)));

    AssembledSystem {
        dof_of_node,
        n_dofs,
        triplets,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn element_gradients_sum_to_zero() {
        let (g, area) = element_gradients(
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(0.0, 1.0),
        );
        assert!((area - 0.5).abs() < 1e-15);
        let sum = g[0] + g[1] + g[2];
        assert!(sum.norm() < 1e-14);
        // gradient of hat at node 0 on the unit right triangle is (-1, -1)
        assert!((g[0] - Vec2::new(-1.0, -1.0)).norm() < 1e-14);
    }
}
