//! Dual-primal substructuring on the augmented local spaces: local
//! factorizations, the primal coarse problem, the matrix-free operators
//! `F`, `S̃⁻¹`, `M⁻¹`, the multiplier right-hand side, PCG and recovery.

use nalgebra::DMatrix;

use crate::assembly::{assemble_local, LocalSystem, Source};
use crate::coeffield::SampledField;
use crate::dofspace::{build_jump_matrix, build_scaling, classify_primal_dual, DofMap, JumpMatrix, LocalSpace};
use crate::error::{Error, Result};
use crate::geometry::Geometry;
use crate::pcg::{pcg, PcgOptions, PcgResult};
use crate::sparse::{CsrMatrix, DenseSpdFactor, SpdFactor};
use crate::timing::Stopwatch;

#[cfg(feature = "parallel")]
fn map_subs<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_subs<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    items.iter().map(f).collect()
}

/// Dense `A x` for a column-major block times a vector.
fn dense_mul(a: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; a.nrows()];
    for (j, &xj) in x.iter().enumerate() {
        if xj != 0.0 {
            for (yi, aij) in y.iter_mut().zip(a.column(j).iter()) {
                *yi += aij * xj;
            }
        }
    }
    y
}

/// Per-subdomain blocks of `A'_i` split by the `(I, Π, Δ)` classes, with the
/// factorizations of `A_II` and `A_rr` (`r = I ∪ Δ`, interior first).
#[derive(Debug)]
pub struct SubdomainOperator {
    pub subdomain: usize,
    pub num_interior: usize,
    pub num_dual: usize,
    pub primal_global: Vec<usize>,
    a_ii: SpdFactor,
    a_rr: SpdFactor,
    pub a_ip: CsrMatrix,
    pub a_id: CsrMatrix,
    pub a_dd: CsrMatrix,
    pub a_dp: CsrMatrix,
    pub a_pp: DMatrix<f64>,
    a_rp: CsrMatrix,
    /// `A_rr⁻¹ A_rΠ`
    x_r: DMatrix<f64>,
    /// `A_II⁻¹ A_IΠ`
    y_i: DMatrix<f64>,
    pub load_interior: Vec<f64>,
    pub load_primal: Vec<f64>,
    pub load_dual: Vec<f64>,
}

impl SubdomainOperator {
    pub fn new(space: &LocalSpace, system: &LocalSystem) -> Result<Self> {
        let a = &system.a_prime;
        let (ii, pp, dd) = (&space.interior, &space.primal, &space.dual);
        let rr = space.remainder();
        let sub = space.subdomain;
        let a_ii = SpdFactor::new(&a.submatrix(ii, ii), &format!("subdomain {sub} interior block"))?;
        let a_rr = SpdFactor::new(&a.submatrix(&rr, &rr), &format!("subdomain {sub} interior-dual block"))?;
        let a_rp = a.submatrix(&rr, pp);
        let a_ip = a.submatrix(ii, pp);
        let np = pp.len();
        let mut x_r = DMatrix::zeros(rr.len(), np);
        let mut y_i = DMatrix::zeros(ii.len(), np);
        let a_rp_dense = a_rp.to_dense();
        let a_ip_dense = a_ip.to_dense();
        for k in 0..np {
            let mut col: Vec<f64> = a_rp_dense.column(k).iter().copied().collect();
            a_rr.solve_in_place(&mut col);
            x_r.column_mut(k).copy_from_slice(&col);
            let mut col: Vec<f64> = a_ip_dense.column(k).iter().copied().collect();
            a_ii.solve_in_place(&mut col);
            y_i.column_mut(k).copy_from_slice(&col);
        }
        let pick = |idx: &[usize]| idx.iter().map(|&d| system.load[d]).collect::<Vec<_>>();
        Ok(Self {
            subdomain: sub,
            num_interior: ii.len(),
            num_dual: dd.len(),
            primal_global: space.primal_global.clone(),
            a_ii,
            a_rr,
            a_id: a.submatrix(ii, dd),
            a_dd: a.submatrix(dd, dd),
            a_dp: a.submatrix(dd, pp),
            a_pp: a.submatrix(pp, pp).to_dense(),
            a_ip,
            a_rp,
            x_r,
            y_i,
            load_interior: pick(ii),
            load_primal: pick(pp),
            load_dual: pick(dd),
        })
    }

    pub fn num_primal(&self) -> usize {
        self.primal_global.len()
    }

    /// Local coarse contribution after eliminating `I ∪ Δ`.
    pub fn coarse_contribution(&self) -> DMatrix<f64> {
        let mut k = self.a_pp.clone();
        let ax = self.a_rp.transpose().to_dense() * &self.x_r;
        k -= ax;
        k
    }

    /// Local coarse contribution after eliminating `I` only.
    pub fn interior_coarse_contribution(&self) -> DMatrix<f64> {
        let mut k = self.a_pp.clone();
        let ay = self.a_ip.transpose().to_dense() * &self.y_i;
        k -= ay;
        k
    }

    fn restrict(&self, global: &[f64]) -> Vec<f64> {
        self.primal_global.iter().map(|&g| global[g]).collect()
    }

    /// `S'_Δ v = A_ΔΔ v - A_ΔI A_II⁻¹ A_IΔ v`
    pub fn apply_sprime_delta(&self, v: &[f64]) -> Vec<f64> {
        let mut w = self.a_id.apply(v);
        self.a_ii.solve_in_place(&mut w);
        let mut out = self.a_dd.apply(v);
        let corr = self.a_id.apply_transpose(&w);
        for (o, c) in out.iter_mut().zip(corr) {
            *o -= c;
        }
        out
    }
}

/// Everything needed to apply the dual-primal operators.
#[derive(Debug)]
pub struct FetiOperators {
    pub dofs: DofMap,
    pub jump: JumpMatrix,
    /// Diagonal of `D_Δ` on the global dual vector.
    pub scaling: Vec<f64>,
    pub subs: Vec<SubdomainOperator>,
    /// Primal Schur complement with `I ∪ Δ` eliminated.
    pub coarse_matrix: DMatrix<f64>,
    /// Primal Schur complement with only `I` eliminated.
    pub interior_coarse_matrix: DMatrix<f64>,
    coarse: DenseSpdFactor,
    interior_coarse: DenseSpdFactor,
    /// Subassembled primal load.
    pub load_primal: Vec<f64>,
}

/// Interior, primal and dual parts of a vector on `Ã`'s space.
#[derive(Clone, Debug, PartialEq)]
pub struct TildeVector {
    pub interior: Vec<Vec<f64>>,
    pub primal: Vec<f64>,
    /// Global dual vector.
    pub dual: Vec<f64>,
}

impl FetiOperators {
    pub fn build(geometry: &Geometry, field: &SampledField, delta: f64, f: &dyn Source) -> Result<Self> {
        let dofs = classify_primal_dual(geometry);
        let jump = build_jump_matrix(geometry, &dofs)?;
        let scaling = build_scaling(geometry, &dofs, &field.layers);
        let subs = map_subs(&dofs.spaces, |space| {
            let system = assemble_local(geometry, field, space, delta, f)?;
            SubdomainOperator::new(space, &system)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let np = dofs.num_primal;
        let mut coarse_matrix = DMatrix::zeros(np, np);
        let mut interior_coarse_matrix = DMatrix::zeros(np, np);
        let mut load_primal = vec![0.0; np];
        for s in &subs {
            let (k, ki) = (s.coarse_contribution(), s.interior_coarse_contribution());
            for (a, &ga) in s.primal_global.iter().enumerate() {
                load_primal[ga] += s.load_primal[a];
                for (b, &gb) in s.primal_global.iter().enumerate() {
                    coarse_matrix[(ga, gb)] += k[(a, b)];
                    interior_coarse_matrix[(ga, gb)] += ki[(a, b)];
                }
            }
        }
        let coarse = DenseSpdFactor::new(coarse_matrix.clone(), "primal coarse problem")?;
        let interior_coarse =
            DenseSpdFactor::new(interior_coarse_matrix.clone(), "interior-eliminated coarse problem")?;
        Ok(Self {
            dofs,
            jump,
            scaling,
            subs,
            coarse_matrix,
            interior_coarse_matrix,
            coarse,
            interior_coarse,
            load_primal,
        })
    }

    pub fn num_multipliers(&self) -> usize {
        self.jump.num_rows()
    }

    pub fn num_dual(&self) -> usize {
        self.dofs.num_dual()
    }

    pub fn num_primal(&self) -> usize {
        self.dofs.num_primal
    }

    fn dual_slice<'a>(&self, v: &'a [f64], sub: usize) -> &'a [f64] {
        &v[self.dofs.dual_offsets[sub]..self.dofs.dual_offsets[sub + 1]]
    }

    /// Solves `Ã u = b` by static condensation onto the primal unknowns.
    pub fn solve_tilde(&self, b: &TildeVector) -> TildeVector {
        let local = map_subs(&self.subs, |s| {
            let mut y: Vec<f64> = b.interior[s.subdomain].clone();
            y.extend_from_slice(self.dual_slice(&b.dual, s.subdomain));
            s.a_rr.solve_in_place(&mut y);
            let c = s.a_rp.apply_transpose(&y);
            (y, c)
        });
        let mut rhs = b.primal.clone();
        for (s, (_, c)) in self.subs.iter().zip(&local) {
            for (&g, v) in s.primal_global.iter().zip(c) {
                rhs[g] -= v;
            }
        }
        let u_p = self.coarse.solve(&rhs);
        let mut interior = Vec::with_capacity(self.subs.len());
        let mut dual = Vec::with_capacity(self.num_dual());
        for (s, (mut y, _)) in self.subs.iter().zip(local) {
            let corr = dense_mul(&s.x_r, &s.restrict(&u_p));
            for (yi, ci) in y.iter_mut().zip(corr) {
                *yi -= ci;
            }
            dual.extend_from_slice(&y[s.num_interior..]);
            y.truncate(s.num_interior);
            interior.push(y);
        }
        TildeVector {
            interior,
            primal: u_p,
            dual,
        }
    }

    /// Solves the `(I, Π)` block of `Ã`, the dual unknowns held at zero.
    pub fn solve_interior_primal(&self, b_i: &[Vec<f64>], b_p: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let local = map_subs(&self.subs, |s| {
            let z = s.a_ii.solve(&b_i[s.subdomain]);
            let c = s.a_ip.apply_transpose(&z);
            (z, c)
        });
        let mut rhs = b_p.to_vec();
        for (s, (_, c)) in self.subs.iter().zip(&local) {
            for (&g, v) in s.primal_global.iter().zip(c) {
                rhs[g] -= v;
            }
        }
        let u_p = self.interior_coarse.solve(&rhs);
        let u_i = self
            .subs
            .iter()
            .zip(local)
            .map(|(s, (mut z, _))| {
                let corr = dense_mul(&s.y_i, &s.restrict(&u_p));
                for (zi, ci) in z.iter_mut().zip(corr) {
                    *zi -= ci;
                }
                z
            })
            .collect();
        (u_i, u_p)
    }

    /// `S̃⁻¹ r` for a global dual vector `r`.
    pub fn apply_stilde_inverse(&self, r: &[f64]) -> Vec<f64> {
        let b = TildeVector {
            interior: self.subs.iter().map(|s| vec![0.0; s.num_interior]).collect(),
            primal: vec![0.0; self.num_primal()],
            dual: r.to_vec(),
        };
        self.solve_tilde(&b).dual
    }

    /// `F λ = B S̃⁻¹ Bᵀ λ`
    pub fn apply_f(&self, lambda: &[f64]) -> Vec<f64> {
        self.jump
            .apply(&self.apply_stilde_inverse(&self.jump.apply_transpose(lambda)))
    }

    /// Block-diagonal `S'_Δ` on a global dual vector.
    pub fn apply_sprime_delta(&self, v: &[f64]) -> Vec<f64> {
        map_subs(&self.subs, |s| s.apply_sprime_delta(self.dual_slice(v, s.subdomain)))
            .into_iter()
            .flatten()
            .collect()
    }

    /// `B_D v` with `B_D = B D_Δ`.
    pub fn apply_scaled_jump(&self, v: &[f64]) -> Vec<f64> {
        let dv: Vec<f64> = v.iter().zip(&self.scaling).map(|(a, d)| a * d).collect();
        self.jump.apply(&dv)
    }

    /// `B_Dᵀ μ`
    pub fn apply_scaled_jump_transpose(&self, mu: &[f64]) -> Vec<f64> {
        let mut v = self.jump.apply_transpose(mu);
        v.iter_mut().zip(&self.scaling).for_each(|(a, d)| *a *= d);
        v
    }

    /// `M⁻¹ μ = B_D S'_Δ B_Dᵀ μ`
    pub fn apply_preconditioner(&self, mu: &[f64]) -> Vec<f64> {
        self.apply_scaled_jump(&self.apply_sprime_delta(&self.apply_scaled_jump_transpose(mu)))
    }

    /// `P_Δ w = B_Dᵀ B w`
    pub fn apply_projection(&self, w: &[f64]) -> Vec<f64> {
        self.apply_scaled_jump_transpose(&self.jump.apply(w))
    }

    /// The condensed dual load `g̃_Δ` and the multiplier right-hand side `d = B S̃⁻¹ g̃_Δ`.
    pub fn compute_rhs(&self) -> (Vec<f64>, Vec<f64>) {
        let f_i: Vec<Vec<f64>> = self.subs.iter().map(|s| s.load_interior.clone()).collect();
        let (u_i, u_p) = self.solve_interior_primal(&f_i, &self.load_primal);
        let g: Vec<f64> = map_subs(&self.subs, |s| {
            let mut g = s.load_dual.clone();
            let a = s.a_id.apply_transpose(&u_i[s.subdomain]);
            let b = s.a_dp.apply(&s.restrict(&u_p));
            for ((gi, ai), bi) in g.iter_mut().zip(a).zip(b) {
                *gi -= ai + bi;
            }
            g
        })
        .into_iter()
        .flatten()
        .collect();
        let d = self.jump.apply(&self.apply_stilde_inverse(&g));
        (g, d)
    }

    /// Full `Ã` load: interior, subassembled primal and dual parts.
    pub fn tilde_load(&self) -> TildeVector {
        TildeVector {
            interior: self.subs.iter().map(|s| s.load_interior.clone()).collect(),
            primal: self.load_primal.clone(),
            dual: self.subs.iter().flat_map(|s| s.load_dual.iter().copied()).collect(),
        }
    }

    /// Back-substitution from multipliers to the local solutions.
    pub fn recover(&self, geometry: &Geometry, g: &[f64], lambda: &[f64], tol: f64) -> Recovery {
        let mut rhs = g.to_vec();
        for (r, b) in rhs.iter_mut().zip(self.jump.apply_transpose(lambda)) {
            *r -= b;
        }
        let u_d = self.apply_stilde_inverse(&rhs);
        let b_i: Vec<Vec<f64>> = self
            .subs
            .iter()
            .map(|s| {
                let mut b = s.load_interior.clone();
                s.a_id.mul_vec_add(
                    &self
                        .dual_slice(&u_d, s.subdomain)
                        .iter()
                        .map(|v| -v)
                        .collect::<Vec<_>>(),
                    &mut b,
                );
                b
            })
            .collect();
        let mut b_p = self.load_primal.clone();
        for s in &self.subs {
            let c = s.a_dp.apply_transpose(self.dual_slice(&u_d, s.subdomain));
            for (&gid, v) in s.primal_global.iter().zip(c) {
                b_p[gid] -= v;
            }
        }
        let (u_i, u_p) = self.solve_interior_primal(&b_i, &b_p);
        let mut local = Vec::with_capacity(self.subs.len());
        for (s, space) in self.subs.iter().zip(&self.dofs.spaces) {
            let mut u = vec![0.0; space.num_dofs()];
            for (&d, &v) in space.interior.iter().zip(&u_i[s.subdomain]) {
                u[d] = v;
            }
            for (&d, &gid) in space.primal.iter().zip(&space.primal_global) {
                u[d] = u_p[gid];
            }
            for (&d, &v) in space.dual.iter().zip(self.dual_slice(&u_d, s.subdomain)) {
                u[d] = v;
            }
            local.push(u);
        }
        let jump_norm = crate::sparse::norm2(&self.jump.apply(&u_d));
        let ghost_mismatch = ghost_mismatch(geometry, &self.dofs, &local);
        Recovery {
            consistent: ghost_mismatch <= 10.0 * tol,
            local,
            dual: u_d,
            ghost_mismatch,
            jump_norm,
        }
    }

    /// Runs PCG on `F λ = d` and recovers the local solutions.
    pub fn solve(&self, geometry: &Geometry, opts: PcgOptions) -> Result<FetiSolution> {
        let (g, d) = self.compute_rhs();
        let result = pcg(|x| self.apply_f(x), |r| self.apply_preconditioner(r), &d, opts);
        if result.breakdown {
            return Err(Error::NotPositiveDefinite {
                context: "dual-primal PCG (breakdown in F or M⁻¹)".into(),
            });
        }
        let recovery = self.recover(geometry, &g, &result.x, opts.tol);
        Ok(FetiSolution { pcg: result, recovery })
    }
}

/// Largest `|ghost - native|` over all ghost copies, relative to `max |u|`.
pub fn ghost_mismatch(geometry: &Geometry, dofs: &DofMap, local: &[Vec<f64>]) -> f64 {
    let scale = local
        .iter()
        .flatten()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    let mut worst = 0.0f64;
    for space in &dofs.spaces {
        for gb in &space.ghosts {
            let e = &geometry.interfaces.interfaces[gb.interface];
            let (side_j, _) = e.side_of(gb.neighbor).expect("ghost neighbour lies on the interface");
            let mesh_j = &geometry.meshes[gb.neighbor];
            for m in 0..gb.len {
                let a = local[space.subdomain][gb.offset + m];
                let b = local[gb.neighbor][mesh_j.side_node(side_j, m)];
                worst = worst.max((a - b).abs());
            }
        }
    }
    worst / scale
}

#[derive(Clone, Debug)]
pub struct Recovery {
    /// Full local vectors on each augmented space.
    pub local: Vec<Vec<f64>>,
    /// Global dual vector.
    pub dual: Vec<f64>,
    pub ghost_mismatch: f64,
    pub jump_norm: f64,
    /// `ghost_mismatch <= 10 tol`
    pub consistent: bool,
}

impl Recovery {
    /// Native nodal values concatenated subdomain by subdomain.
    pub fn native_solution(&self, dofs: &DofMap) -> Vec<f64> {
        self.local
            .iter()
            .zip(&dofs.spaces)
            .flat_map(|(u, s)| u[..s.num_native].iter().copied())
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct FetiSolution {
    pub pcg: PcgResult,
    pub recovery: Recovery,
}

/// Wall-clock split of one solve.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Timings {
    pub setup_s: f64,
    pub solve_s: f64,
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub solution: FetiSolution,
    /// Native nodal values, subdomain by subdomain.
    pub u: Vec<f64>,
    pub timings: Timings,
    pub num_multipliers: usize,
    pub num_primal: usize,
}

/// Setup plus solve with timings.
pub fn solve_problem(
    geometry: &Geometry,
    field: &SampledField,
    delta: f64,
    f: &dyn Source,
    opts: PcgOptions,
) -> Result<(FetiOperators, SolveReport)> {
    let clock = Stopwatch::start();
    let ops = FetiOperators::build(geometry, field, delta, f)?;
    let setup_s = clock.elapsed_s();
    let clock = Stopwatch::start();
    let solution = ops.solve(geometry, opts)?;
    let solve_s = clock.elapsed_s();
    let u = solution.recovery.native_solution(&ops.dofs);
    let report = SolveReport {
        solution,
        u,
        timings: Timings { setup_s, solve_s },
        num_multipliers: ops.num_multipliers(),
        num_primal: ops.num_primal(),
    };
    Ok((ops, report))
}
