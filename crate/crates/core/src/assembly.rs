//! Local matrices of the composite FE/DG form on the augmented space.
//!
//! `a'_i = a_i + s_i + p_i` where `a_i` is the P1 energy, `s_i` the symmetric
//! consistency term and `p_i` the interior penalty. Interface integrals are
//! evaluated exactly on merged edge meshes: normal derivatives are constant
//! per triangle and traces are linear per merged segment.

use crate::coeffield::SampledField;
use crate::dofspace::LocalSpace;
use crate::error::{Error, Result};
use crate::geometry::{Geometry, MergedEdgeMesh, MergedSegment, Side, SubdomainMesh};
use crate::sparse::{CooMatrix, CsrMatrix};

/// Gradients of the three P1 basis functions and the triangle area.
pub fn p1_gradients(p: &[[f64; 2]; 3]) -> ([[f64; 2]; 3], f64) {
    let area2 = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    let g = [
        [(p[1][1] - p[2][1]) / area2, (p[2][0] - p[1][0]) / area2],
        [(p[2][1] - p[0][1]) / area2, (p[0][0] - p[2][0]) / area2],
        [(p[0][1] - p[1][1]) / area2, (p[1][0] - p[0][0]) / area2],
    ];
    (g, 0.5 * area2)
}

pub fn element_stiffness(p: &[[f64; 2]; 3], alpha: f64) -> [[f64; 3]; 3] {
    let (g, area) = p1_gradients(p);
    let mut k = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            k[a][b] = alpha * area * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
        }
    }
    k
}

/// P1 stiffness matrix over the native vertices of one subdomain.
pub fn assemble_volume(mesh: &SubdomainMesh, alpha: &[f64]) -> CsrMatrix {
    let n = mesh.num_vertices();
    let mut coo = CooMatrix::new(n, n);
    add_volume(mesh, alpha, n, &mut coo);
    coo.to_csr()
}

fn add_volume(mesh: &SubdomainMesh, alpha: &[f64], dim: usize, coo: &mut CooMatrix) {
    debug_assert!(dim >= mesh.num_vertices());
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let k = element_stiffness(&mesh.triangle_coords(t), alpha[t]);
        for a in 0..3 {
            for b in 0..3 {
                coo.push(tri[a], tri[b], k[a][b]);
            }
        }
    }
}

/// Normal-derivative functional of the triangle adjacent to a boundary
/// interval: `du/dn = sum_a w[a] * u[dofs[a]]`.
#[derive(Clone, Copy, Debug)]
pub struct NormalFlux {
    pub dofs: [usize; 3],
    pub weights: [f64; 3],
}

impl NormalFlux {
    pub fn new(mesh: &SubdomainMesh, triangle: usize, side: Side) -> Self {
        let (g, _) = p1_gradients(&mesh.triangle_coords(triangle));
        let n = side.outward_normal();
        Self {
            dofs: mesh.triangles[triangle],
            weights: [0, 1, 2].map(|a| g[a][0] * n[0] + g[a][1] * n[1]),
        }
    }
}

/// Linear trace of one side over a merged segment: the value at the segment
/// start is `(1 - xi0) u[d0] + xi0 u[d1]`, likewise at the end with `xi1`.
#[derive(Clone, Copy, Debug)]
pub struct TracePiece {
    pub dofs: [usize; 2],
    pub xi0: f64,
    pub xi1: f64,
}

impl TracePiece {
    fn at(&self, end: bool) -> [(usize, f64); 2] {
        let xi = if end { self.xi1 } else { self.xi0 };
        [(self.dofs[0], 1.0 - xi), (self.dofs[1], xi)]
    }
}

/// Data of one merged segment as seen from the owning subdomain.
#[derive(Clone, Copy, Debug)]
pub struct EdgePiece {
    pub side: Side,
    pub length: f64,
    pub alpha: f64,
    pub h: f64,
    /// `l_ij`: 2 on interior interfaces, 1 on the outer boundary.
    pub weight: f64,
    pub flux: NormalFlux,
    pub own: TracePiece,
    /// Neighbour trace; `None` on the outer boundary where it vanishes.
    pub other: Option<TracePiece>,
}

impl EdgePiece {
    /// Coefficients of `u_other - u_own` at the segment start or end.
    fn jump(&self, end: bool) -> Vec<(usize, f64)> {
        let mut c: Vec<(usize, f64)> = self.own.at(end).iter().map(|&(d, w)| (d, -w)).collect();
        if let Some(o) = &self.other {
            c.extend(o.at(end));
        }
        c
    }

    /// Adds `(1/l) ∫ α (du/dn (v_o - v) + dv/dn (u_o - u))` to `coo`.
    pub fn add_consistency(&self, coo: &mut CooMatrix) {
        let scale = self.alpha / self.weight;
        // ∫ (v_o - v) ds for a linear jump is the trapezoid rule
        let mut mean_jump = self.jump(false);
        mean_jump.extend(self.jump(true));
        for (a, &da) in self.flux.dofs.iter().enumerate() {
            let ga = scale * self.flux.weights[a];
            for &(db, jb) in &mean_jump {
                let v = ga * 0.5 * self.length * jb;
                coo.push(da, db, v);
                coo.push(db, da, v);
            }
        }
    }

    /// Adds `(1/l) (δ/h) ∫ α (u_o - u)(v_o - v)` to `coo`.
    pub fn add_penalty(&self, delta: f64, coo: &mut CooMatrix) {
        let scale = self.alpha * delta / (self.weight * self.h) * self.length / 6.0;
        let c0 = self.jump(false);
        let c1 = self.jump(true);
        for (p, q, w) in [(&c0, &c0, 2.0), (&c0, &c1, 1.0), (&c1, &c0, 1.0), (&c1, &c1, 2.0)] {
            for &(a, wa) in p {
                for &(b, wb) in q {
                    coo.push(a, b, scale * w * wa * wb);
                }
            }
        }
    }
}

fn trace_piece(
    mesh: &SubdomainMesh,
    merged: &MergedEdgeMesh,
    seg: &MergedSegment,
    interval: usize,
    dofs: [usize; 2],
) -> TracePiece {
    TracePiece {
        dofs,
        xi0: merged.local_coordinate(seg.lo, mesh.n, interval),
        xi1: merged.local_coordinate(seg.hi, mesh.n, interval),
    }
}

/// All edge pieces of subdomain `sub`, with neighbour traces addressed
/// through the ghost blocks of `space`.
pub fn edge_pieces(geometry: &Geometry, field: &SampledField, space: &LocalSpace) -> Vec<EdgePiece> {
    let sub = space.subdomain;
    let mesh = &geometry.meshes[sub];
    let alpha = &field.values[sub];
    let mut pieces = Vec::new();
    for side in Side::ALL {
        match geometry.interfaces.interface_on(sub, side) {
            Some(e) => {
                let merged = &geometry.merged[e.id];
                let coeffs = &field.interfaces[e.id];
                let ghost = space.ghost_block(e.id).expect("ghost block per interior interface");
                let other_mesh = &geometry.meshes[ghost.neighbor];
                let own_is_first = e.first == sub;
                for (k, seg) in merged.segments.iter().enumerate() {
                    let (own_iv, own_tri, other_iv) = if own_is_first {
                        (seg.first_interval, seg.first_triangle, seg.second_interval)
                    } else {
                        (seg.second_interval, seg.second_triangle, seg.first_interval)
                    };
                    pieces.push(EdgePiece {
                        side,
                        length: seg.length,
                        alpha: coeffs.alpha[k],
                        h: coeffs.h,
                        weight: 2.0,
                        flux: NormalFlux::new(mesh, own_tri, side),
                        own: trace_piece(
                            mesh,
                            merged,
                            seg,
                            own_iv,
                            [mesh.side_node(side, own_iv), mesh.side_node(side, own_iv + 1)],
                        ),
                        other: Some(trace_piece(
                            other_mesh,
                            merged,
                            seg,
                            other_iv,
                            [ghost.offset + other_iv, ghost.offset + other_iv + 1],
                        )),
                    });
                }
            }
            None => {
                for k in 0..mesh.n {
                    let tri = mesh.boundary_triangle(side, k);
                    pieces.push(EdgePiece {
                        side,
                        length: mesh.h,
                        alpha: alpha[tri],
                        h: mesh.h,
                        weight: 1.0,
                        flux: NormalFlux::new(mesh, tri, side),
                        own: TracePiece {
                            dofs: [mesh.side_node(side, k), mesh.side_node(side, k + 1)],
                            xi0: 0.0,
                            xi1: 1.0,
                        },
                        other: None,
                    });
                }
            }
        }
    }
    pieces
}

/// The three terms of `a'_i` separately, on the augmented local space.
#[derive(Clone, Debug)]
pub struct LocalTerms {
    pub energy: CsrMatrix,
    pub consistency: CsrMatrix,
    pub penalty: CsrMatrix,
}

#[derive(Clone, Debug)]
pub struct LocalSystem {
    /// `a'_i = a_i + s_i + p_i`
    pub a_prime: CsrMatrix,
    /// `d_i = a_i + p_i`
    pub d: CsrMatrix,
    /// Load over all local dofs; ghost entries are zero.
    pub load: Vec<f64>,
}

pub fn check_delta(delta: f64) -> Result<()> {
    if delta.is_finite() && delta > 0.0 {
        Ok(())
    } else {
        Err(Error::config(format!(
            "penalty parameter must be positive (got {delta})"
        )))
    }
}

pub fn assemble_local_terms(
    geometry: &Geometry,
    field: &SampledField,
    space: &LocalSpace,
    delta: f64,
) -> Result<LocalTerms> {
    check_delta(delta)?;
    let dim = space.num_dofs();
    let mesh = &geometry.meshes[space.subdomain];
    let mut energy = CooMatrix::new(dim, dim);
    add_volume(mesh, &field.values[space.subdomain], dim, &mut energy);
    let mut consistency = CooMatrix::new(dim, dim);
    let mut penalty = CooMatrix::new(dim, dim);
    for piece in edge_pieces(geometry, field, space) {
        piece.add_consistency(&mut consistency);
        piece.add_penalty(delta, &mut penalty);
    }
    Ok(LocalTerms {
        energy: energy.to_csr(),
        consistency: consistency.to_csr(),
        penalty: penalty.to_csr(),
    })
}

/// Source term evaluated pointwise.
pub trait Source: Sync {
    fn eval(&self, p: [f64; 2]) -> f64;
}

impl<F: Fn([f64; 2]) -> f64 + Sync> Source for F {
    fn eval(&self, p: [f64; 2]) -> f64 {
        self(p)
    }
}

/// P1 load by the vertex quadrature rule, padded with zeros to `dim`.
pub fn assemble_load(mesh: &SubdomainMesh, f: &dyn Source, dim: usize) -> Vec<f64> {
    let mut load = vec![0.0; dim];
    let fv: Vec<f64> = mesh.vertices.iter().map(|&p| f.eval(p)).collect();
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let w = mesh.signed_area(t) / 3.0;
        for &v in tri {
            load[v] += w * fv[v];
        }
    }
    load
}

pub fn assemble_local(
    geometry: &Geometry,
    field: &SampledField,
    space: &LocalSpace,
    delta: f64,
    f: &dyn Source,
) -> Result<LocalSystem> {
    let LocalTerms {
        energy,
        consistency,
        penalty,
    } = assemble_local_terms(geometry, field, space, delta)?;
    let d = energy.combine(1.0, &penalty, 1.0);
    let a_prime = d.combine(1.0, &consistency, 1.0);
    let load = assemble_load(&geometry.meshes[space.subdomain], f, space.num_dofs());
    Ok(LocalSystem { a_prime, d, load })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffield::CoefficientField;
    use crate::dofspace::classify_primal_dual;

    fn quad_form(a: &CsrMatrix, u: &[f64]) -> f64 {
        crate::sparse::dot(&a.apply(u), u)
    }

    #[test]
    fn reference_triangle_stiffness() {
        let h = 0.37;
        let k = element_stiffness(&[[0.0, 0.0], [h, 0.0], [0.0, h]], 1.0);
        // hand integration of the P1 gradients on a right isosceles triangle
        let expected = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        for a in 0..3 {
            for b in 0..3 {
                assert!((k[a][b] - expected[a][b]).abs() < 1e-14);
            }
        }
        let k3 = element_stiffness(&[[0.0, 0.0], [h, 0.0], [0.0, h]], 3.0);
        assert!((k3[0][0] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn volume_kills_constants() {
        let g = Geometry::build(2, &[5]).unwrap();
        let f = SampledField::new(
            &CoefficientField::new(1.0, vec![crate::coeffield::Inclusion::new(0.1, 0.1, 0.3, 0.2, 50.0)]).unwrap(),
            &g,
        )
        .unwrap();
        let a = assemble_volume(&g.meshes[0], &f.values[0]);
        let y = a.apply(&vec![1.0; a.nrows]);
        assert!(y.iter().all(|v| v.abs() < 1e-12));
        assert!(a.asymmetry() < 1e-14);
    }

    #[test]
    fn terms_sum_and_symmetry() {
        let g = Geometry::build(2, &[4, 6, 3, 4]).unwrap();
        let field = SampledField::new(
            &CoefficientField::new(1.0, vec![crate::coeffield::Inclusion::new(0.4, 0.2, 0.6, 0.7, 1e3)]).unwrap(),
            &g,
        )
        .unwrap();
        let dofs = classify_primal_dual(&g);
        for space in &dofs.spaces {
            let t = assemble_local_terms(&g, &field, space, 5.0).unwrap();
            let sys = assemble_local(&g, &field, space, 5.0, &|_p: [f64; 2]| 1.0).unwrap();
            let sum = t.energy.combine(1.0, &t.consistency, 1.0).combine(1.0, &t.penalty, 1.0);
            let diff = sum.combine(1.0, &sys.a_prime, -1.0);
            assert!(diff.max_abs() <= 1e-12 * sys.a_prime.max_abs());
            let diff = t.energy.combine(1.0, &t.penalty, 1.0).combine(1.0, &sys.d, -1.0);
            assert!(diff.max_abs() <= 1e-12 * sys.d.max_abs());
            assert!(sys.a_prime.asymmetry() <= 1e-12 * sys.a_prime.max_abs());
            assert!(sys.d.asymmetry() <= 1e-12 * sys.d.max_abs());
            // doubling δ doubles the penalty block
            let t2 = assemble_local_terms(&g, &field, space, 10.0).unwrap();
            let diff = t2.penalty.combine(1.0, &t.penalty, -2.0);
            assert!(diff.max_abs() <= 1e-12 * t2.penalty.max_abs());
        }
        assert!(assemble_local_terms(&g, &field, &dofs.spaces[0], 0.0).is_err());
    }

    /// Fills the augmented vector of `space` from a global function: natives
    /// and ghosts sample the same function, so all traces are continuous.
    fn continuous_vector(g: &Geometry, space: &LocalSpace, u: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
        let mesh = &g.meshes[space.subdomain];
        let mut v: Vec<f64> = mesh.vertices.iter().map(|&p| u(p)).collect();
        v.resize(space.num_dofs(), 0.0);
        for gb in &space.ghosts {
            let other = &g.meshes[gb.neighbor];
            let e = &g.interfaces.interfaces[gb.interface];
            let (oside, _) = e.side_of(gb.neighbor).unwrap();
            for m in 0..gb.len {
                v[gb.offset + m] = u(other.vertices[other.side_node(oside, m)]);
            }
        }
        v
    }

    #[test]
    fn continuous_traces_have_no_penalty() {
        let g = Geometry::build(2, &[4]).unwrap();
        let field = SampledField::new(&CoefficientField::constant(1.0).unwrap(), &g).unwrap();
        let dofs = classify_primal_dual(&g);
        let space = &dofs.spaces[3];
        let t = assemble_local_terms(&g, &field, space, 5.0).unwrap();
        // subdomain 3 touches the outer boundary on its top and right, so use a
        // function vanishing there
        let u = |p: [f64; 2]| (1.0 - p[0]) * (1.0 - p[1]) * (p[0] + 2.0 * p[1]);
        let v = continuous_vector(&g, space, u);
        assert!(quad_form(&t.penalty, &v).abs() < 1e-12);
    }

    #[test]
    fn penalty_of_unit_jump() {
        // u_i = 1 on all natives of subdomain 0, ghosts 0, matching grids, α = 1
        let g = Geometry::build(2, &[4]).unwrap();
        let field = SampledField::new(&CoefficientField::constant(1.0).unwrap(), &g).unwrap();
        let dofs = classify_primal_dual(&g);
        let space = &dofs.spaces[0];
        let mut u = vec![0.0; space.num_dofs()];
        u[..space.num_native].fill(1.0);
        let mut coo = CooMatrix::new(space.num_dofs(), space.num_dofs());
        let mesh = &g.meshes[0];
        for piece in edge_pieces(&g, &field, space).iter().filter(|p| p.side == Side::Right) {
            piece.add_penalty(5.0, &mut coo);
        }
        let p = quad_form(&coo.to_csr(), &u);
        let expected = 0.5 * (5.0 / mesh.h) * 0.5;
        assert!((p - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn zero_normal_derivative_gives_no_consistency() {
        // u = x is continuous and has zero normal derivative on horizontal interfaces
        let g = Geometry::build(2, &[4, 6, 5, 3]).unwrap();
        let field = SampledField::new(&CoefficientField::constant(2.0).unwrap(), &g).unwrap();
        let dofs = classify_primal_dual(&g);
        for space in &dofs.spaces {
            let u = continuous_vector(&g, space, |p| p[0]);
            let mut coo = CooMatrix::new(space.num_dofs(), space.num_dofs());
            let horizontal = edge_pieces(&g, &field, space)
                .into_iter()
                .filter(|p| p.other.is_some() && matches!(p.side, Side::Bottom | Side::Top));
            for piece in horizontal {
                piece.add_consistency(&mut coo);
            }
            let su = coo.to_csr().apply(&u);
            assert!(su.iter().all(|v| v.abs() < 1e-12), "subdomain {}", space.subdomain);
        }
    }

    #[test]
    fn continuous_traces_have_no_consistency_energy() {
        let g = Geometry::build(2, &[4]).unwrap();
        let field = SampledField::new(&CoefficientField::constant(1.0).unwrap(), &g).unwrap();
        let dofs = classify_primal_dual(&g);
        for space in &dofs.spaces {
            let u = continuous_vector(&g, space, |p| p[0] * p[0] + 3.0 * p[1]);
            let mut coo = CooMatrix::new(space.num_dofs(), space.num_dofs());
            for piece in edge_pieces(&g, &field, space).iter().filter(|p| p.other.is_some()) {
                piece.add_consistency(&mut coo);
            }
            assert!(quad_form(&coo.to_csr(), &u).abs() < 1e-12);
        }
    }

    #[test]
    fn dirichlet_consistency_single_triangle() {
        // one boundary interval on the bottom side of a 1x1 mesh with n = 2:
        // s(u, v) = -∫ α du/dn v - ∫ α dv/dn u
        let g = Geometry::build(1, &[2]).unwrap();
        let field = SampledField::new(&CoefficientField::constant(1.0).unwrap(), &g).unwrap();
        let dofs = classify_primal_dual(&g);
        let space = &dofs.spaces[0];
        let mesh = &g.meshes[0];
        let piece = edge_pieces(&g, &field, space)
            .into_iter()
            .find(|p| {
                p.other.is_none() && p.own.dofs == [mesh.side_node(Side::Bottom, 0), mesh.side_node(Side::Bottom, 1)]
            })
            .unwrap();
        let mut coo = CooMatrix::new(9, 9);
        piece.add_consistency(&mut coo);
        let s = coo.to_csr();
        // triangle (v0, v1, v4) with legs h = 1/2; du/dn = -du/dy
        // u = y: du/dn = -1 on the bottom edge, and u = 0 on the edge.
        // v = 1 at v0 only: ∫ v ds = h/2.  s(u, v) = -(-1)(h/2) - (dv/dn)(0) = h/2
        let h = 0.5;
        let u: Vec<f64> = mesh.vertices.iter().map(|p| p[1]).collect();
        let mut v = vec![0.0; 9];
        v[0] = 1.0;
        let s_uv = crate::sparse::dot(&s.apply(&u), &v);
        assert!((s_uv - h / 2.0).abs() < 1e-14);
    }

    #[test]
    fn load_vertex_rule() {
        let g = Geometry::build(1, &[1 + 1]).unwrap();
        let mesh = &g.meshes[0];
        let load = assemble_load(mesh, &|_p: [f64; 2]| 1.0, mesh.num_vertices() + 3);
        assert!((load.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!(load[mesh.num_vertices()..].iter().all(|&v| v == 0.0));
        // the corner (0,0) belongs to two triangles of area 1/8
        assert!((load[0] - 2.0 * (0.125 / 3.0)).abs() < 1e-15);
        let zero = assemble_load(mesh, &|_p: [f64; 2]| 0.0, mesh.num_vertices());
        assert!(zero.iter().all(|&v| v == 0.0));
    }
}
