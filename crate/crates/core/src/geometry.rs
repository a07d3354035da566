//! Subdomain partition of the unit square, structured per-subdomain
//! triangulations and interface bookkeeping.
//!
//! Every subdomain carries its own uniform mesh with `n` segments per side, so
//! neighbouring meshes are in general nonmatching. Positions along an
//! interface are kept as exact integers on the least common multiple of the
//! two side resolutions, which makes merged edge meshes exact.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// One of the four sides of a square subdomain.
///
/// Side nodes are always listed in ascending global coordinate (x for the
/// horizontal sides, y for the vertical ones), so both owners of an interface
/// traverse it in the same direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Bottom,
    Right,
    Top,
    Left,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Bottom, Side::Right, Side::Top, Side::Left];

    pub fn outward_normal(self) -> [f64; 2] {
        match self {
            Side::Bottom => [0.0, -1.0],
            Side::Right => [1.0, 0.0],
            Side::Top => [0.0, 1.0],
            Side::Left => [-1.0, 0.0],
        }
    }

    pub fn opposite(self) -> Side {
        match self {
            Side::Bottom => Side::Top,
            Side::Right => Side::Left,
            Side::Top => Side::Bottom,
            Side::Left => Side::Right,
        }
    }
}

/// Axis-aligned square subdomain with integer grid coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Subdomain {
    pub id: usize,
    pub gx: usize,
    pub gy: usize,
    pub origin: [f64; 2],
    pub size: f64,
}

impl Subdomain {
    pub fn contains_point(&self, p: [f64; 2]) -> bool {
        p[0] >= self.origin[0]
            && p[0] <= self.origin[0] + self.size
            && p[1] >= self.origin[1]
            && p[1] <= self.origin[1] + self.size
    }
}

#[derive(Clone, Debug)]
pub struct DomainPartition {
    pub nx: usize,
    pub ny: usize,
    /// Subdomain side length.
    pub h_sub: f64,
    pub subdomains: Vec<Subdomain>,
}

impl DomainPartition {
    pub fn len(&self) -> usize {
        self.subdomains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subdomains.is_empty()
    }

    pub fn id_of(&self, gx: usize, gy: usize) -> usize {
        gy * self.nx + gx
    }

    /// Neighbour across `side`, or `None` when that side lies on the outer boundary.
    pub fn neighbor(&self, id: usize, side: Side) -> Option<usize> {
        let s = &self.subdomains[id];
        match side {
            Side::Bottom => (s.gy > 0).then(|| self.id_of(s.gx, s.gy - 1)),
            Side::Top => (s.gy + 1 < self.ny).then(|| self.id_of(s.gx, s.gy + 1)),
            Side::Left => (s.gx > 0).then(|| self.id_of(s.gx - 1, s.gy)),
            Side::Right => (s.gx + 1 < self.nx).then(|| self.id_of(s.gx + 1, s.gy)),
        }
    }
}

/// Splits the unit square into `nx * ny` equal squares, numbered row by row
/// from the bottom-left corner.
pub fn build_partition(nx: usize, ny: usize) -> Result<DomainPartition> {
    if nx == 0 || ny == 0 {
        return Err(Error::config("subdomain counts must be positive"));
    }
    if nx != ny {
        return Err(Error::config(format!(
            "only square subdomains are supported (got {nx}x{ny})"
        )));
    }
    let h_sub = 1.0 / nx as f64;
    let subdomains = (0..ny)
        .flat_map(|gy| (0..nx).map(move |gx| (gx, gy)))
        .enumerate()
        .map(|(id, (gx, gy))| Subdomain {
            id,
            gx,
            gy,
            origin: [gx as f64 * h_sub, gy as f64 * h_sub],
            size: h_sub,
        })
        .collect();
    Ok(DomainPartition {
        nx,
        ny,
        h_sub,
        subdomains,
    })
}

/// Uniform right-triangle mesh of one subdomain.
///
/// Vertex `(cx, cy)` has index `cy * (n + 1) + cx`. Cell `(cx, cy)` is split
/// along its bottom-left to top-right diagonal into a lower triangle
/// `(v00, v10, v11)` and an upper triangle `(v00, v11, v01)`, both
/// counterclockwise; the lower one has the even index `2 * (cy * n + cx)`.
#[derive(Clone, Debug)]
pub struct SubdomainMesh {
    pub subdomain: usize,
    pub n: usize,
    pub h: f64,
    pub origin: [f64; 2],
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
}

impl SubdomainMesh {
    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertex_index(&self, cx: usize, cy: usize) -> usize {
        cy * (self.n + 1) + cx
    }

    /// Vertex index of the `m`-th node along `side` (ascending coordinate).
    pub fn side_node(&self, side: Side, m: usize) -> usize {
        let n = self.n;
        match side {
            Side::Bottom => self.vertex_index(m, 0),
            Side::Top => self.vertex_index(m, n),
            Side::Left => self.vertex_index(0, m),
            Side::Right => self.vertex_index(n, m),
        }
    }

    pub fn boundary_nodes(&self, side: Side) -> Vec<usize> {
        (0..=self.n).map(|m| self.side_node(side, m)).collect()
    }

    /// The unique triangle having the `k`-th boundary interval of `side` as an edge.
    pub fn boundary_triangle(&self, side: Side, k: usize) -> usize {
        let n = self.n;
        let (cx, cy, upper) = match side {
            Side::Bottom => (k, 0, false),
            Side::Right => (n - 1, k, false),
            Side::Top => (k, n - 1, true),
            Side::Left => (0, k, true),
        };
        2 * (cy * n + cx) + usize::from(upper)
    }

    pub fn triangle_coords(&self, t: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn centroid(&self, t: usize) -> [f64; 2] {
        let [a, b, c] = self.triangle_coords(t);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_coords(t);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    /// Whether triangle `t` touches the subdomain boundary (has a vertex on it).
    pub fn touches_boundary(&self, t: usize) -> bool {
        let n = self.n;
        self.triangles[t].iter().any(|&v| {
            let (cx, cy) = (v % (n + 1), v / (n + 1));
            cx == 0 || cy == 0 || cx == n || cy == n
        })
    }

    /// Plain-text dump: `v id x y` lines followed by `t id v0 v1 v2` lines.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (i, p) in self.vertices.iter().enumerate() {
            let _ = writeln!(out, "v {i} {:.17e} {:.17e}", p[0], p[1]);
        }
        for (i, t) in self.triangles.iter().enumerate() {
            let _ = writeln!(out, "t {i} {} {} {}", t[0], t[1], t[2]);
        }
        out
    }
}

pub fn triangulate_subdomain(sub: &Subdomain, n: usize) -> Result<SubdomainMesh> {
    if n < 2 {
        return Err(Error::config(format!(
            "subdomain {} needs at least 2 segments per side (got {n})",
            sub.id
        )));
    }
    let h = sub.size / n as f64;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for cy in 0..=n {
        for cx in 0..=n {
            vertices.push([sub.origin[0] + cx as f64 * h, sub.origin[1] + cy as f64 * h]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * n * n);
    let idx = |cx: usize, cy: usize| cy * (n + 1) + cx;
    for cy in 0..n {
        for cx in 0..n {
            let v00 = idx(cx, cy);
            let v10 = idx(cx + 1, cy);
            let v01 = idx(cx, cy + 1);
            let v11 = idx(cx + 1, cy + 1);
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }
    Ok(SubdomainMesh {
        subdomain: sub.id,
        n,
        h,
        origin: sub.origin,
        vertices,
        triangles,
    })
}

/// Builds one mesh per subdomain. `resolutions` holds either a single entry
/// (uniform) or one entry per subdomain.
pub fn triangulate_all(partition: &DomainPartition, resolutions: &[usize]) -> Result<Vec<SubdomainMesh>> {
    let per_sub = match resolutions.len() {
        1 => vec![resolutions[0]; partition.len()],
        len if len == partition.len() => resolutions.to_vec(),
        len => {
            return Err(Error::config(format!(
                "expected 1 or {} mesh resolutions, got {len}",
                partition.len()
            )))
        }
    };
    partition
        .subdomains
        .iter()
        .zip(per_sub)
        .map(|(s, n)| triangulate_subdomain(s, n))
        .collect()
}

/// Common edge of two neighbouring subdomains.
///
/// `first` is the left (vertical interface) or bottom (horizontal interface)
/// subdomain; `second` the right or top one.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeInterface {
    pub id: usize,
    pub first: usize,
    pub second: usize,
    pub first_side: Side,
    pub second_side: Side,
    pub n_first: usize,
    pub n_second: usize,
    /// Start and end point of the edge in global coordinates.
    pub start: [f64; 2],
    pub end: [f64; 2],
    /// Side-node vertex ids (ascending) in the first and second mesh.
    pub first_nodes: Vec<usize>,
    pub second_nodes: Vec<usize>,
}

impl EdgeInterface {
    pub fn is_vertical(&self) -> bool {
        self.first_side == Side::Right
    }

    pub fn length(&self) -> f64 {
        (self.end[0] - self.start[0]) + (self.end[1] - self.start[1])
    }

    /// Side of `sub` on this interface, with the neighbour's id.
    pub fn side_of(&self, sub: usize) -> Option<(Side, usize)> {
        if sub == self.first {
            Some((self.first_side, self.second))
        } else if sub == self.second {
            Some((self.second_side, self.first))
        } else {
            None
        }
    }
}

/// Interfaces of the whole partition plus a per-subdomain lookup by side.
#[derive(Clone, Debug)]
pub struct InterfaceMap {
    pub interfaces: Vec<EdgeInterface>,
    /// `by_side[sub][side as usize]` is the interface on that side, if interior.
    pub by_side: Vec<[Option<usize>; 4]>,
}

impl InterfaceMap {
    pub fn interface_on(&self, sub: usize, side: Side) -> Option<&EdgeInterface> {
        self.by_side[sub][side as usize].map(|k| &self.interfaces[k])
    }

    /// Interior interfaces of `sub` in side order.
    pub fn interior_sides(&self, sub: usize) -> impl Iterator<Item = (Side, &EdgeInterface)> + '_ {
        Side::ALL
            .into_iter()
            .filter_map(move |s| self.interface_on(sub, s).map(|e| (s, e)))
    }

    /// Sides of `sub` lying on the outer boundary.
    pub fn outer_sides(&self, sub: usize) -> impl Iterator<Item = Side> + '_ {
        Side::ALL
            .into_iter()
            .filter(move |&s| self.by_side[sub][s as usize].is_none())
    }
}

/// Enumerates vertical interfaces (row by row) and then horizontal ones.
pub fn discover_interfaces(partition: &DomainPartition, meshes: &[SubdomainMesh]) -> InterfaceMap {
    let mut interfaces = Vec::new();
    let mut by_side = vec![[None; 4]; partition.len()];
    let h_sub = partition.h_sub;
    let mut push = |first: usize, first_side: Side, second: usize, start: [f64; 2], end: [f64; 2]| {
        let id = interfaces.len();
        let second_side = first_side.opposite();
        by_side[first][first_side as usize] = Some(id);
        by_side[second][second_side as usize] = Some(id);
        interfaces.push(EdgeInterface {
            id,
            first,
            second,
            first_side,
            second_side,
            n_first: meshes[first].n,
            n_second: meshes[second].n,
            start,
            end,
            first_nodes: meshes[first].boundary_nodes(first_side),
            second_nodes: meshes[second].boundary_nodes(second_side),
        });
    };
    for gy in 0..partition.ny {
        for gx in 0..partition.nx.saturating_sub(1) {
            let x = (gx + 1) as f64 * h_sub;
            push(
                partition.id_of(gx, gy),
                Side::Right,
                partition.id_of(gx + 1, gy),
                [x, gy as f64 * h_sub],
                [x, (gy + 1) as f64 * h_sub],
            );
        }
    }
    for gy in 0..partition.ny.saturating_sub(1) {
        for gx in 0..partition.nx {
            let y = (gy + 1) as f64 * h_sub;
            push(
                partition.id_of(gx, gy),
                Side::Top,
                partition.id_of(gx, gy + 1),
                [gx as f64 * h_sub, y],
                [(gx + 1) as f64 * h_sub, y],
            );
        }
    }
    InterfaceMap { interfaces, by_side }
}

/// One piece of a merged interface mesh.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MergedSegment {
    /// Endpoints as integer positions on a lattice of `lcm(n_first, n_second)` cells.
    pub lo: usize,
    pub hi: usize,
    /// Length in global units.
    pub length: f64,
    /// Fine interval of each side covering the segment.
    pub first_interval: usize,
    pub second_interval: usize,
    /// Triangle of each side adjacent to the covering interval.
    pub first_triangle: usize,
    pub second_triangle: usize,
}

#[derive(Clone, Debug)]
pub struct MergedEdgeMesh {
    pub interface: usize,
    /// Number of lattice cells the edge is divided into (`lcm(n_first, n_second)`).
    pub lattice: usize,
    pub breakpoints: Vec<usize>,
    pub segments: Vec<MergedSegment>,
    pub edge_length: f64,
}

impl MergedEdgeMesh {
    /// Local coordinate in `[0, 1]` of lattice position `pos` inside interval
    /// `k` of a side grid with `n` intervals.
    pub fn local_coordinate(&self, pos: usize, n: usize, k: usize) -> f64 {
        let step = self.lattice / n;
        (pos as f64 - (k * step) as f64) / step as f64
    }
}

pub fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

pub fn merge_edge_meshes(iface: &EdgeInterface, meshes: &[SubdomainMesh]) -> Result<MergedEdgeMesh> {
    let (ni, nj) = (iface.n_first, iface.n_second);
    let lattice = ni / gcd(ni, nj) * nj;
    let (si, sj) = (lattice / ni, lattice / nj);
    let mut breakpoints: Vec<usize> = (0..=ni).map(|k| k * si).chain((0..=nj).map(|k| k * sj)).collect();
    breakpoints.sort_unstable();
    breakpoints.dedup();
    let edge_length = iface.length();
    let cell = edge_length / lattice as f64;
    let tol = 1e-12 * edge_length;
    let mesh_i = &meshes[iface.first];
    let mesh_j = &meshes[iface.second];
    let mut segments = Vec::with_capacity(breakpoints.len() - 1);
    for w in breakpoints.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let length = (hi - lo) as f64 * cell;
        if length <= tol {
            return Err(Error::Geometry(format!(
                "degenerate merged segment on interface {}",
                iface.id
            )));
        }
        let first_interval = lo / si;
        let second_interval = lo / sj;
        segments.push(MergedSegment {
            lo,
            hi,
            length,
            first_interval,
            second_interval,
            first_triangle: mesh_i.boundary_triangle(iface.first_side, first_interval),
            second_triangle: mesh_j.boundary_triangle(iface.second_side, second_interval),
        });
    }
    Ok(MergedEdgeMesh {
        interface: iface.id,
        lattice,
        breakpoints,
        segments,
        edge_length,
    })
}

/// Everything geometric about one configuration.
#[derive(Clone, Debug)]
pub struct Geometry {
    pub partition: DomainPartition,
    pub meshes: Vec<SubdomainMesh>,
    pub interfaces: InterfaceMap,
    pub merged: Vec<MergedEdgeMesh>,
}

impl Geometry {
    pub fn build(nx: usize, resolutions: &[usize]) -> Result<Self> {
        let partition = build_partition(nx, nx)?;
        let meshes = triangulate_all(&partition, resolutions)?;
        let interfaces = discover_interfaces(&partition, &meshes);
        let merged = interfaces
            .interfaces
            .iter()
            .map(|e| merge_edge_meshes(e, &meshes))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            partition,
            meshes,
            interfaces,
            merged,
        })
    }

    pub fn num_subdomains(&self) -> usize {
        self.partition.len()
    }

    /// Largest `H / h_i` over all subdomains.
    pub fn max_h_ratio(&self) -> usize {
        self.meshes.iter().map(|m| m.n).max().unwrap_or(0)
    }

    pub fn num_native_dofs(&self) -> usize {
        self.meshes.iter().map(|m| m.num_vertices()).sum()
    }
}
