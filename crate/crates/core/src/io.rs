//! Debug dumps written to a directory.

use std::path::{Path, PathBuf};

use crate::assembly::{assemble_local, Source};
use crate::coeffield::SampledField;
use crate::error::{Error, Result};
use crate::fetidp::FetiOperators;
use crate::geometry::Geometry;
use crate::oracle::{self, DenseFeti, DenseGuards, MonolithicOptions};
use crate::sparse::dense_matrix_market;

/// Writes mesh, matrix and map dumps into `dir` and returns the written
/// paths. Dense `F` and `M⁻¹F` are skipped (with a note) above the guard.
pub fn write_dumps(
    dir: &Path,
    geometry: &Geometry,
    field: &SampledField,
    operators: &FetiOperators,
    delta: f64,
    f: &dyn Source,
    guards: DenseGuards,
) -> Result<(Vec<PathBuf>, Vec<String>)> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut notes = Vec::new();
    let mut put = |name: String, text: String| -> Result<()> {
        let p = dir.join(name);
        std::fs::write(&p, text)?;
        written.push(p);
        Ok(())
    };
    for (i, mesh) in geometry.meshes.iter().enumerate() {
        put(format!("mesh_{i}.txt"), mesh.dump())?;
    }
    for (i, space) in operators.dofs.spaces.iter().enumerate() {
        let sys = assemble_local(geometry, field, space, delta, f)?;
        put(format!("a_prime_{i}.mtx"), sys.a_prime.to_matrix_market(true))?;
    }
    let mono = oracle::assemble_monolithic(geometry, field, MonolithicOptions::new(delta), f)?;
    put("monolithic.mtx".into(), mono.matrix.to_matrix_market(true))?;
    put("b_delta.mtx".into(), operators.jump.to_csr().to_matrix_market(false))?;
    put("primal_map.txt".into(), operators.dofs.primal_map_dump())?;
    match DenseFeti::build(geometry, field, delta, f, guards) {
        Ok(d) => {
            put("F.mtx".into(), dense_matrix_market(&d.f, true))?;
            put("MinvF.mtx".into(), dense_matrix_market(&(&d.m_inv * &d.f), false))?;
        }
        Err(Error::DimensionGuard { dim, limit }) => {
            notes.push(format!("dense F skipped: dimension {dim} exceeds guard {limit}"));
        }
        Err(e) => return Err(e),
    }
    Ok((written, notes))
}
