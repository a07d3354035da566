//! Reference computations for verification at small scale: a monolithic
//! assembly of the interior-penalty form written directly in average/jump
//! notation, a direct solve, and dense versions of the dual-primal
//! operators and spectra.
//!
//! Nothing here goes through the local ghost-augmented assembly, so
//! agreement with [`crate::fetidp`] is a genuine cross-check.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::assembly::{assemble_local, Source};
use crate::coeffield::{harmonic_mean, SampledField};
use crate::dofspace::{build_jump_matrix, build_scaling, classify_primal_dual, DofClass, DofMap};
use crate::error::{Error, Result};
use crate::geometry::{Geometry, Side, SubdomainMesh};
use crate::sparse::{CooMatrix, CsrMatrix, SpdFactor};

/// Size limits for the dense paths.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DenseGuards {
    /// Multiplier-space dimension for the dense spectrum of `M⁻¹F`.
    pub spectrum: usize,
    /// Monolithic dimension for the generalized eigenproblem.
    pub generalized: usize,
}

impl Default for DenseGuards {
    fn default() -> Self {
        Self {
            spectrum: 2000,
            generalized: 3000,
        }
    }
}

fn guard(dim: usize, limit: usize) -> Result<()> {
    if dim > limit {
        Err(Error::DimensionGuard { dim, limit })
    } else {
        Ok(())
    }
}

/// Global matrix on the product of native spaces, one block per subdomain.
#[derive(Clone, Debug)]
pub struct MonolithicSystem {
    pub matrix: CsrMatrix,
    pub load: Vec<f64>,
    /// First global index of each subdomain's native block.
    pub offsets: Vec<usize>,
}

impl MonolithicSystem {
    pub fn dim(&self) -> usize {
        self.matrix.nrows
    }

    pub fn global_index(&self, sub: usize, vertex: usize) -> usize {
        self.offsets[sub] + vertex
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MonolithicOptions {
    pub delta: f64,
    /// Include the symmetric flux terms; without them the form is `d_h`.
    pub consistency: bool,
}

impl MonolithicOptions {
    pub fn new(delta: f64) -> Self {
        Self {
            delta,
            consistency: true,
        }
    }
}

/// Barycentric values and constant gradients of the P1 basis at `p`.
fn p1_basis(tri: &[[f64; 2]; 3], p: [f64; 2]) -> ([f64; 3], [[f64; 2]; 3]) {
    let [a, b, c] = *tri;
    let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    let grads = [
        [(b[1] - c[1]) / det, (c[0] - b[0]) / det],
        [(c[1] - a[1]) / det, (a[0] - c[0]) / det],
        [(a[1] - b[1]) / det, (b[0] - a[0]) / det],
    ];
    let vals = [0, 1, 2].map(|k| 1.0 + grads[k][0] * (p[0] - tri[k][0]) + grads[k][1] * (p[1] - tri[k][1]));
    (vals, grads)
}

/// Triangles of `mesh` having an edge on `side`, with the covered interval
/// of the side coordinate.
fn side_triangles(mesh: &SubdomainMesh, side: Side) -> Vec<(usize, f64, f64)> {
    let (axis, level) = match side {
        Side::Bottom => (1, mesh.origin[1]),
        Side::Top => (1, mesh.origin[1] + mesh.n as f64 * mesh.h),
        Side::Left => (0, mesh.origin[0]),
        Side::Right => (0, mesh.origin[0] + mesh.n as f64 * mesh.h),
    };
    let along = 1 - axis;
    let eps = 1e-9 * mesh.h;
    let mut out = Vec::new();
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let on: Vec<f64> = tri
            .iter()
            .map(|&v| mesh.vertices[v])
            .filter(|p| (p[axis] - level).abs() < eps)
            .map(|p| p[along])
            .collect();
        if on.len() == 2 {
            out.push((t, on[0].min(on[1]), on[0].max(on[1])));
        }
    }
    out
}

fn locate(cands: &[(usize, f64, f64)], s: f64) -> usize {
    cands
        .iter()
        .find(|&&(_, lo, hi)| s > lo && s < hi)
        .map(|c| c.0)
        .expect("point lies strictly inside a boundary edge")
}

const GAUSS: [(f64, f64); 2] = [(-0.577_350_269_189_625_8, 1.0), (0.577_350_269_189_625_8, 1.0)];

/// Assembles `a_h` (or `d_h`) on the product of native spaces.
pub fn assemble_monolithic(
    geometry: &Geometry,
    field: &SampledField,
    opts: MonolithicOptions,
    f: &dyn Source,
) -> Result<MonolithicSystem> {
    crate::assembly::check_delta(opts.delta)?;
    let mut offsets = vec![0];
    for m in &geometry.meshes {
        offsets.push(offsets.last().unwrap() + m.num_vertices());
    }
    let dim = *offsets.last().unwrap();
    let mut coo = CooMatrix::new(dim, dim);
    let mut load = vec![0.0; dim];

    for (i, mesh) in geometry.meshes.iter().enumerate() {
        let off = offsets[i];
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let pts = mesh.triangle_coords(t);
            let (_, g) = p1_basis(&pts, pts[0]);
            let area = mesh.signed_area(t);
            let alpha = field.values[i][t];
            for a in 0..3 {
                load[off + tri[a]] += area / 3.0 * f.eval(pts[a]);
                for b in 0..3 {
                    coo.push(
                        off + tri[a],
                        off + tri[b],
                        alpha * area * (g[a][0] * g[b][0] + g[a][1] * g[b][1]),
                    );
                }
            }
        }
    }

    // interior edges: -∫α({∂u/∂n}[v] + {∂v/∂n}[u]) + (δ/h)∫α[u][v], n from first to second
    for e in &geometry.interfaces.interfaces {
        let (mi, mj) = (&geometry.meshes[e.first], &geometry.meshes[e.second]);
        let normal = e.first_side.outward_normal();
        let along = if e.is_vertical() { 1 } else { 0 };
        let (ci, cj) = (side_triangles(mi, e.first_side), side_triangles(mj, e.second_side));
        let s0 = e.start[along];
        let len = e.length();
        let mut bps: Vec<f64> = (0..=mi.n)
            .map(|k| k as f64 * len / mi.n as f64)
            .chain((0..=mj.n).map(|k| k as f64 * len / mj.n as f64))
            .collect();
        bps.sort_by(f64::total_cmp);
        bps.dedup_by(|a, b| (*a - *b).abs() < 1e-12 * len);
        let h_e = harmonic_mean(mi.h, mj.h);
        for w in bps.windows(2) {
            let mid = s0 + 0.5 * (w[0] + w[1]);
            let (ti, tj) = (locate(&ci, mid), locate(&cj, mid));
            let alpha = harmonic_mean(field.values[e.first][ti], field.values[e.second][tj]);
            let (pi, pj) = (mi.triangle_coords(ti), mj.triangle_coords(tj));
            let dofs: Vec<usize> = mi.triangles[ti]
                .iter()
                .map(|&v| offsets[e.first] + v)
                .chain(mj.triangles[tj].iter().map(|&v| offsets[e.second] + v))
                .collect();
            let half = 0.5 * (w[1] - w[0]);
            for &(xi, wq) in &GAUSS {
                let s = mid + half * xi;
                let mut p = e.start;
                p[along] = s;
                let (vi, gi) = p1_basis(&pi, p);
                let (vj, gj) = p1_basis(&pj, p);
                let mut jump = [0.0; 6];
                let mut avg = [0.0; 6];
                for k in 0..3 {
                    jump[k] = vi[k];
                    jump[k + 3] = -vj[k];
                    avg[k] = 0.5 * (gi[k][0] * normal[0] + gi[k][1] * normal[1]);
                    avg[k + 3] = 0.5 * (gj[k][0] * normal[0] + gj[k][1] * normal[1]);
                }
                let wt = wq * half * alpha;
                for a in 0..6 {
                    for b in 0..6 {
                        let mut v = opts.delta / h_e * jump[a] * jump[b];
                        if opts.consistency {
                            v -= avg[b] * jump[a] + avg[a] * jump[b];
                        }
                        coo.push(dofs[a], dofs[b], wt * v);
                    }
                }
            }
        }
    }

    // outer boundary, weak Dirichlet with zero data
    for (i, mesh) in geometry.meshes.iter().enumerate() {
        for side in geometry.interfaces.outer_sides(i) {
            let normal = side.outward_normal();
            let along = if matches!(side, Side::Left | Side::Right) { 1 } else { 0 };
            for (t, lo, hi) in side_triangles(mesh, side) {
                let pts = mesh.triangle_coords(t);
                let alpha = field.values[i][t];
                let half = 0.5 * (hi - lo);
                let mid = 0.5 * (hi + lo);
                for &(xi, wq) in &GAUSS {
                    let mut p = pts[0];
                    let across = 1 - along;
                    p[across] = if matches!(side, Side::Bottom | Side::Left) {
                        mesh.origin[across]
                    } else {
                        mesh.origin[across] + mesh.n as f64 * mesh.h
                    };
                    p[along] = mid + half * xi;
                    let (v, g) = p1_basis(&pts, p);
                    let dn = [0, 1, 2].map(|k| g[k][0] * normal[0] + g[k][1] * normal[1]);
                    let wt = wq * half * alpha;
                    for a in 0..3 {
                        for b in 0..3 {
                            let mut val = opts.delta / mesh.h * v[a] * v[b];
                            if opts.consistency {
                                val -= dn[b] * v[a] + dn[a] * v[b];
                            }
                            coo.push(
                                offsets[i] + mesh.triangles[t][a],
                                offsets[i] + mesh.triangles[t][b],
                                wt * val,
                            );
                        }
                    }
                }
            }
        }
    }

    Ok(MonolithicSystem {
        matrix: coo.to_csr(),
        load,
        offsets,
    })
}

/// Direct sparse Cholesky solve of the monolithic system.
pub fn direct_solve(system: &MonolithicSystem) -> Result<Vec<f64>> {
    let factor = SpdFactor::new(&system.matrix, "monolithic system")?;
    Ok(factor.solve(&system.load))
}

/// Scatter-adds every local `A'_i` into the monolithic numbering, ghost
/// columns and rows folded onto the partner natives.
pub fn fold_local_matrices(
    geometry: &Geometry,
    field: &SampledField,
    delta: f64,
    offsets: &[usize],
) -> Result<CsrMatrix> {
    let dofs = classify_primal_dual(geometry);
    let dim = *offsets.last().unwrap();
    let mut coo = CooMatrix::new(dim, dim);
    let zero = |_: [f64; 2]| 0.0;
    for space in &dofs.spaces {
        let i = space.subdomain;
        let mut to_global: Vec<usize> = (0..space.num_native).map(|v| offsets[i] + v).collect();
        to_global.resize(space.num_dofs(), usize::MAX);
        for gb in &space.ghosts {
            let e = &geometry.interfaces.interfaces[gb.interface];
            let (side_j, _) = e.side_of(gb.neighbor).expect("ghost neighbour on interface");
            for m in 0..gb.len {
                to_global[gb.offset + m] = offsets[gb.neighbor] + geometry.meshes[gb.neighbor].side_node(side_j, m);
            }
        }
        let sys = assemble_local(geometry, field, space, delta, &zero)?;
        for (a, b, v) in sys.a_prime.triplets() {
            coo.push(to_global[a], to_global[b], v);
        }
    }
    Ok(coo.to_csr())
}

/// Discrete L² norm of a piecewise-linear function given by nodal values,
/// by the vertex rule on every triangle.
pub fn l2_norm(geometry: &Geometry, offsets: &[usize], u: &[f64]) -> f64 {
    let mut s = 0.0;
    for (i, mesh) in geometry.meshes.iter().enumerate() {
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let a = mesh.signed_area(t) / 3.0;
            for &v in tri {
                s += a * u[offsets[i] + v].powi(2);
            }
        }
    }
    s.sqrt()
}

/// Nodal interpolant of `g` on the product space.
pub fn interpolate(geometry: &Geometry, g: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
    geometry
        .meshes
        .iter()
        .flat_map(|m| m.vertices.iter().map(|&p| g(p)).collect::<Vec<_>>())
        .collect()
}

fn symmetric_eigenvalues(m: DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Eigenvalues of `A x = θ B x` for SPD `B`.
pub fn generalized_eigenvalues(a: &DMatrix<f64>, b: &DMatrix<f64>, context: &str) -> Result<Vec<f64>> {
    let l = b
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite {
            context: context.to_string(),
        })?
        .l();
    let linv = l
        .solve_lower_triangular(&DMatrix::identity(l.nrows(), l.ncols()))
        .ok_or_else(|| Error::NotPositiveDefinite {
            context: context.to_string(),
        })?;
    let mut c = &linv * a * linv.transpose();
    c = 0.5 * (&c + c.transpose());
    Ok(symmetric_eigenvalues(c))
}

/// Extreme generalized eigenvalues `(γ₀, γ₁)` of `a_h u = λ d_h u`.
pub fn generalized_eig_check(
    geometry: &Geometry,
    field: &SampledField,
    delta: f64,
    guards: DenseGuards,
) -> Result<(f64, f64)> {
    guard(geometry.num_native_dofs(), guards.generalized)?;
    let zero = |_: [f64; 2]| 0.0;
    let a = assemble_monolithic(geometry, field, MonolithicOptions::new(delta), &zero)?
        .matrix
        .to_dense();
    let d = assemble_monolithic(
        geometry,
        field,
        MonolithicOptions {
            delta,
            consistency: false,
        },
        &zero,
    )?
    .matrix
    .to_dense();
    let ev = generalized_eigenvalues(&a, &d, "broken norm matrix")?;
    Ok((ev[0], *ev.last().unwrap()))
}

/// Dual-primal matrices formed explicitly from dense blocks.
#[derive(Clone, Debug)]
pub struct DenseFeti {
    pub dofs: DofMap,
    /// `Ã` ordered as all interiors (subdomain by subdomain), then primal, then dual.
    pub a_tilde: DMatrix<f64>,
    pub load: DVector<f64>,
    pub num_interior: usize,
    pub s_tilde: DMatrix<f64>,
    pub g_tilde: DVector<f64>,
    pub jump: DMatrix<f64>,
    pub scaled_jump: DMatrix<f64>,
    /// Block diagonal `S'_Δ`.
    pub s_prime: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub m_inv: DMatrix<f64>,
    pub d: DVector<f64>,
}

impl DenseFeti {
    pub fn build(
        geometry: &Geometry,
        field: &SampledField,
        delta: f64,
        f: &dyn Source,
        guards: DenseGuards,
    ) -> Result<Self> {
        let dofs = classify_primal_dual(geometry);
        let jump_sparse = build_jump_matrix(geometry, &dofs)?;
        guard(jump_sparse.num_rows(), guards.spectrum)?;
        let scaling = build_scaling(geometry, &dofs, &field.layers);
        let num_interior: usize = dofs.spaces.iter().map(|s| s.interior.len()).sum();
        let (np, nd) = (dofs.num_primal, dofs.num_dual());
        let dim = num_interior + np + nd;
        guard(dim, guards.generalized)?;
        let mut a_tilde = DMatrix::zeros(dim, dim);
        let mut load = DVector::zeros(dim);
        let mut s_prime = DMatrix::zeros(nd, nd);
        let mut ioff = 0;
        for space in &dofs.spaces {
            let sys = assemble_local(geometry, field, space, delta, f)?;
            let mut map = vec![0usize; space.num_dofs()];
            for (k, &d) in space.interior.iter().enumerate() {
                map[d] = ioff + k;
            }
            for (&d, &g) in space.primal.iter().zip(&space.primal_global) {
                map[d] = num_interior + g;
            }
            for &d in &space.dual {
                map[d] = num_interior + np + dofs.dual_index(space.subdomain, d);
            }
            ioff += space.interior.len();
            for (a, b, v) in sys.a_prime.triplets() {
                a_tilde[(map[a], map[b])] += v;
            }
            for (d, &v) in sys.load.iter().enumerate() {
                load[map[d]] += v;
            }
            // S' on Γ', then keep the dual rows and columns
            let dense = sys.a_prime.to_dense();
            let gamma = space.gamma();
            let ii = &space.interior;
            let a_ii = dense.select_rows(ii).select_columns(ii);
            let a_ig = dense.select_rows(ii).select_columns(&gamma);
            let a_gg = dense.select_rows(&gamma).select_columns(&gamma);
            let s_gamma = if ii.is_empty() {
                a_gg
            } else {
                let chol = a_ii.cholesky().ok_or_else(|| Error::NotPositiveDefinite {
                    context: format!("subdomain {} interior block", space.subdomain),
                })?;
                &a_gg - a_ig.transpose() * chol.solve(&a_ig)
            };
            let dual_in_gamma: Vec<usize> = gamma
                .iter()
                .enumerate()
                .filter(|(_, &d)| space.class[d] == DofClass::Dual)
                .map(|(k, _)| k)
                .collect();
            for (a, &ka) in dual_in_gamma.iter().enumerate() {
                for (b, &kb) in dual_in_gamma.iter().enumerate() {
                    let (ga, gb) = (
                        dofs.dual_offsets[space.subdomain] + a,
                        dofs.dual_offsets[space.subdomain] + b,
                    );
                    s_prime[(ga, gb)] = s_gamma[(ka, kb)];
                }
            }
        }
        let nip = num_interior + np;
        let a_ee = a_tilde.view((0, 0), (nip, nip)).into_owned();
        let a_ed = a_tilde.view((0, nip), (nip, nd)).into_owned();
        let a_dd = a_tilde.view((nip, nip), (nd, nd)).into_owned();
        let chol = a_ee.cholesky().ok_or_else(|| Error::NotPositiveDefinite {
            context: "dense interior-primal block".into(),
        })?;
        let s_tilde: DMatrix<f64> = &a_dd - a_ed.transpose() * chol.solve(&a_ed);
        let f_e = load.rows(0, nip).into_owned();
        let g_tilde = load.rows(nip, nd).into_owned() - a_ed.transpose() * chol.solve(&f_e);
        let jump = jump_sparse.to_csr().to_dense();
        let scaled_jump = &jump * DMatrix::from_diagonal(&DVector::from_vec(scaling));
        let s_chol = s_tilde.clone().cholesky().ok_or_else(|| Error::NotPositiveDefinite {
            context: "dense dual Schur complement".into(),
        })?;
        let s_inv_bt = s_chol.solve(&jump.transpose());
        let f = &jump * &s_inv_bt;
        let d = &jump * s_chol.solve(&g_tilde);
        let m_inv = &scaled_jump * &s_prime * scaled_jump.transpose();
        Ok(Self {
            dofs,
            a_tilde,
            load,
            num_interior,
            s_tilde,
            g_tilde,
            jump,
            scaled_jump,
            s_prime,
            f,
            m_inv,
            d,
        })
    }

    /// `P_Δ = B_Dᵀ B`
    pub fn projection(&self) -> DMatrix<f64> {
        self.scaled_jump.transpose() * &self.jump
    }

    /// Sorted eigenvalues of `M⁻¹F` (equivalently `F λ = θ M λ`).
    pub fn spectrum(&self) -> Result<Vec<f64>> {
        if self.f.nrows() == 0 {
            return Ok(Vec::new());
        }
        let l = self
            .m_inv
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite {
                context: "dense preconditioner".into(),
            })?
            .l();
        let mut c = l.transpose() * &self.f * &l;
        c = 0.5 * (&c + c.transpose());
        Ok(symmetric_eigenvalues(c))
    }
}

/// `θ_max / θ_min` of a sorted spectrum.
pub fn condition_number(spectrum: &[f64]) -> f64 {
    match (spectrum.first(), spectrum.last()) {
        (Some(&lo), Some(&hi)) => hi / lo,
        _ => f64::NAN,
    }
}

/// Sorted eigenvalues of `M⁻¹F` by dense computation.
pub fn dense_spectrum(geometry: &Geometry, field: &SampledField, delta: f64, guards: DenseGuards) -> Result<Vec<f64>> {
    let zero = |_: [f64; 2]| 0.0;
    DenseFeti::build(geometry, field, delta, &zero, guards)?.spectrum()
}

/// `index,value` lines with a header.
pub fn eigen_csv(values: &[f64]) -> String {
    let mut out = String::from("index,value\n");
    for (k, v) in values.iter().enumerate() {
        let _ = writeln!(out, "{k},{v:.17e}");
    }
    out
}
