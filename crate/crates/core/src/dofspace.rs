//! Augmented local spaces (native nodes plus ghost copies of neighbour
//! traces), the interior / primal / dual split, the jump matrix and the
//! coefficient-weighted scaling.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::coeffield::LayerStats;
use crate::error::{Error, Result};
use crate::geometry::{Geometry, Side};
use crate::sparse::CsrMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DofClass {
    Interior,
    Primal,
    Dual,
}

/// Ghost copy of a neighbour's side nodes, stored after the natives.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GhostBlock {
    pub interface: usize,
    pub side: Side,
    pub neighbor: usize,
    pub offset: usize,
    /// Number of ghost nodes (`n_neighbor + 1`).
    pub len: usize,
}

#[derive(Clone, Debug)]
pub struct LocalSpace {
    pub subdomain: usize,
    pub n: usize,
    pub num_native: usize,
    pub ghosts: Vec<GhostBlock>,
    pub class: Vec<DofClass>,
    pub interior: Vec<usize>,
    pub primal: Vec<usize>,
    pub dual: Vec<usize>,
    /// Global primal id of each entry of `primal`.
    pub primal_global: Vec<usize>,
    /// Interface each dual dof belongs to (parallel to `dual`).
    pub dual_interface: Vec<usize>,
    /// Position of a local dof inside `primal` / `dual` (or `usize::MAX`).
    pub primal_pos: Vec<usize>,
    pub dual_pos: Vec<usize>,
}

impl LocalSpace {
    pub fn num_dofs(&self) -> usize {
        self.class.len()
    }

    pub fn num_ghost(&self) -> usize {
        self.num_dofs() - self.num_native
    }

    /// Interface dofs `Γ'` in ascending local order.
    pub fn gamma(&self) -> Vec<usize> {
        (0..self.num_dofs())
            .filter(|&d| self.class[d] != DofClass::Interior)
            .collect()
    }

    pub fn ghost_block(&self, interface: usize) -> Option<&GhostBlock> {
        self.ghosts.iter().find(|g| g.interface == interface)
    }

    /// `(I, Δ)` ordering used for the local dual-primal solves.
    pub fn remainder(&self) -> Vec<usize> {
        self.interior.iter().chain(&self.dual).copied().collect()
    }
}

/// Integer key of a subdomain corner point on the `(nx + 1)^2` corner lattice.
type CornerKey = (usize, usize);

/// A primal unknown: the value of subdomain `owner`'s own function at a
/// corner point. The owner's native node and every neighbour's ghost copy of
/// that node share it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PrimalKey {
    pub owner: usize,
    pub point: CornerKey,
}

fn side_endpoint_keys(gx: usize, gy: usize, side: Side) -> [CornerKey; 2] {
    match side {
        Side::Bottom => [(gx, gy), (gx + 1, gy)],
        Side::Top => [(gx, gy + 1), (gx + 1, gy + 1)],
        Side::Left => [(gx, gy), (gx, gy + 1)],
        Side::Right => [(gx + 1, gy), (gx + 1, gy + 1)],
    }
}

/// Local spaces of all subdomains together with the global primal numbering.
#[derive(Clone, Debug)]
pub struct DofMap {
    pub spaces: Vec<LocalSpace>,
    pub num_primal: usize,
    /// Owner and corner-lattice point of each global primal id.
    pub primal_points: Vec<PrimalKey>,
    /// Offset of each subdomain's block in the global dual vector.
    pub dual_offsets: Vec<usize>,
}

impl DofMap {
    pub fn num_dual(&self) -> usize {
        *self.dual_offsets.last().unwrap_or(&0)
    }

    pub fn dual_index(&self, sub: usize, local: usize) -> usize {
        self.dual_offsets[sub] + self.spaces[sub].dual_pos[local]
    }

    /// Lines `subdomain local_dof global_primal_id`.
    pub fn primal_map_dump(&self) -> String {
        let mut out = String::new();
        for s in &self.spaces {
            for (&d, &g) in s.primal.iter().zip(&s.primal_global) {
                let _ = writeln!(out, "{} {} {}", s.subdomain, d, g);
            }
        }
        out
    }
}

pub fn build_local_space(geometry: &Geometry, sub: usize) -> LocalSpace {
    let mesh = &geometry.meshes[sub];
    let n = mesh.n;
    let num_native = mesh.num_vertices();
    let mut ghosts = Vec::new();
    let mut offset = num_native;
    for (side, e) in geometry.interfaces.interior_sides(sub) {
        let (_, neighbor) = e.side_of(sub).expect("interface lists its owners");
        let len = geometry.meshes[neighbor].n + 1;
        ghosts.push(GhostBlock {
            interface: e.id,
            side,
            neighbor,
            offset,
            len,
        });
        offset += len;
    }
    let num_dofs = offset;
    let mut class = vec![DofClass::Interior; num_dofs];
    for g in &ghosts {
        let native_nodes = mesh.boundary_nodes(g.side);
        for (m, &v) in native_nodes.iter().enumerate() {
            let endpoint = m == 0 || m == n;
            if endpoint {
                class[v] = DofClass::Primal;
            } else if class[v] == DofClass::Interior {
                class[v] = DofClass::Dual;
            }
        }
        for m in 0..g.len {
            let endpoint = m == 0 || m + 1 == g.len;
            class[g.offset + m] = if endpoint { DofClass::Primal } else { DofClass::Dual };
        }
    }
    let pick = |c: DofClass| (0..num_dofs).filter(|&d| class[d] == c).collect::<Vec<_>>();
    let interior = pick(DofClass::Interior);
    let primal = pick(DofClass::Primal);
    let dual = pick(DofClass::Dual);
    let mut primal_pos = vec![usize::MAX; num_dofs];
    let mut dual_pos = vec![usize::MAX; num_dofs];
    for (k, &d) in primal.iter().enumerate() {
        primal_pos[d] = k;
    }
    for (k, &d) in dual.iter().enumerate() {
        dual_pos[d] = k;
    }
    let mut dual_interface = vec![usize::MAX; dual.len()];
    for g in &ghosts {
        for m in 1..n {
            let v = mesh.side_node(g.side, m);
            dual_interface[dual_pos[v]] = g.interface;
        }
        for m in 1..g.len - 1 {
            dual_interface[dual_pos[g.offset + m]] = g.interface;
        }
    }
    LocalSpace {
        subdomain: sub,
        n,
        num_native,
        ghosts,
        class,
        interior,
        primal,
        dual,
        primal_global: Vec::new(),
        dual_interface,
        primal_pos,
        dual_pos,
    }
}

/// Builds every local space and merges each native corner value with the
/// neighbours' ghost copies of it into one global primal id. Ids are ordered
/// by `(y, x)` of the corner point, then by owner.
pub fn classify_primal_dual(geometry: &Geometry) -> DofMap {
    let mut spaces: Vec<LocalSpace> = (0..geometry.num_subdomains())
        .map(|s| build_local_space(geometry, s))
        .collect();
    let mut keys_per_sub: Vec<Vec<PrimalKey>> = Vec::with_capacity(spaces.len());
    let mut all_keys = BTreeMap::new();
    for space in &spaces {
        let sub = &geometry.partition.subdomains[space.subdomain];
        let mesh = &geometry.meshes[space.subdomain];
        let mut key_of = vec![None; space.num_dofs()];
        for g in &space.ghosts {
            let [k0, k1] = side_endpoint_keys(sub.gx, sub.gy, g.side);
            let own = |point| PrimalKey {
                owner: space.subdomain,
                point,
            };
            let theirs = |point| PrimalKey {
                owner: g.neighbor,
                point,
            };
            key_of[mesh.side_node(g.side, 0)] = Some(own(k0));
            key_of[mesh.side_node(g.side, mesh.n)] = Some(own(k1));
            key_of[g.offset] = Some(theirs(k0));
            key_of[g.offset + g.len - 1] = Some(theirs(k1));
        }
        let keys: Vec<PrimalKey> = space
            .primal
            .iter()
            .map(|&d| key_of[d].expect("every primal dof is an edge endpoint"))
            .collect();
        for &k in &keys {
            all_keys.insert((k.point.1, k.point.0, k.owner), k);
        }
        keys_per_sub.push(keys);
    }
    let ordered: Vec<PrimalKey> = all_keys.into_values().collect();
    let id_of: BTreeMap<PrimalKey, usize> = ordered.iter().enumerate().map(|(i, &k)| (k, i)).collect();
    for (space, keys) in spaces.iter_mut().zip(keys_per_sub) {
        space.primal_global = keys.iter().map(|k| id_of[k]).collect();
    }
    let mut dual_offsets = Vec::with_capacity(spaces.len() + 1);
    let mut acc = 0;
    dual_offsets.push(0);
    for s in &spaces {
        acc += s.dual.len();
        dual_offsets.push(acc);
    }
    DofMap {
        spaces,
        num_primal: ordered.len(),
        primal_points: ordered,
        dual_offsets,
    }
}

/// One continuity constraint: `u[plus] - u[minus] = 0` between a native
/// trace dof and the neighbour's ghost copy of the same node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct JumpRow {
    pub interface: usize,
    /// Global dual indices.
    pub plus: usize,
    pub minus: usize,
}

/// Signed pairing matrix `B_Δ` acting on the global dual vector.
#[derive(Clone, Debug)]
pub struct JumpMatrix {
    pub rows: Vec<JumpRow>,
    pub num_dual: usize,
}

impl JumpMatrix {
    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    /// `y = B u`
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| u[r.plus] - u[r.minus]).collect()
    }

    /// `u = B^T y`
    pub fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; self.num_dual];
        for (r, &v) in self.rows.iter().zip(y) {
            u[r.plus] += v;
            u[r.minus] -= v;
        }
        u
    }

    pub fn to_csr(&self) -> CsrMatrix {
        CsrMatrix::from_triplets(
            self.rows.len(),
            self.num_dual,
            self.rows
                .iter()
                .enumerate()
                .flat_map(|(k, r)| [(k, r.plus, 1.0), (k, r.minus, -1.0)]),
        )
    }
}

/// For each interface, one row per non-endpoint node of the first side's
/// grid (native in first, ghost in second), then one per non-endpoint node
/// of the second side's grid (native in second, ghost in first).
pub fn build_jump_matrix(geometry: &Geometry, dofs: &DofMap) -> Result<JumpMatrix> {
    let mut rows = Vec::new();
    for e in &geometry.interfaces.interfaces {
        for (owner, side, other) in [(e.first, e.first_side, e.second), (e.second, e.second_side, e.first)] {
            let mesh = &geometry.meshes[owner];
            let ghost = dofs.spaces[other].ghost_block(e.id).ok_or_else(|| {
                Error::Numbering(format!("subdomain {other} has no ghost copy of interface {}", e.id))
            })?;
            if ghost.len != mesh.n + 1 {
                return Err(Error::Numbering(format!(
                    "ghost block of interface {} in subdomain {other} has {} nodes, expected {}",
                    e.id,
                    ghost.len,
                    mesh.n + 1
                )));
            }
            for m in 1..mesh.n {
                let native = mesh.side_node(side, m);
                rows.push(JumpRow {
                    interface: e.id,
                    plus: dofs.dual_index(owner, native),
                    minus: dofs.dual_index(other, ghost.offset + m),
                });
            }
        }
    }
    Ok(JumpMatrix {
        rows,
        num_dual: dofs.num_dual(),
    })
}

/// Diagonal of `D_Δ` over the global dual vector: a dof of subdomain `i`
/// on interface `(i, j)` gets `ᾱ_j / (ᾱ_i + ᾱ_j)`.
pub fn build_scaling(geometry: &Geometry, dofs: &DofMap, layers: &[LayerStats]) -> Vec<f64> {
    let mut d = vec![0.0; dofs.num_dual()];
    for space in &dofs.spaces {
        let i = space.subdomain;
        for (k, &iface) in space.dual_interface.iter().enumerate() {
            let e = &geometry.interfaces.interfaces[iface];
            let (_, j) = e.side_of(i).expect("dual dof belongs to an interface of its subdomain");
            let (ai, aj) = (layers[i].alpha_hi, layers[j].alpha_hi);
            d[dofs.dual_offsets[i] + k] = aj / (ai + aj);
        }
    }
    d
}
