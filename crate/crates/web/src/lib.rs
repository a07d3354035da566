//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Three calls are exported: a coefficient raster, a full FETI-DP solve
//! (returned as JSON) and the dense spectrum of the preconditioned operator.

use fetidp_dg::experiment::{self, ExperimentConfig, Preset};
use fetidp_dg::geometry::Geometry;
use fetidp_dg::oracle::{self, DenseGuards};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Largest total unknown count the page will solve; keeps the tab responsive.
pub const MAX_DOFS: usize = 80_000;

pub fn config(preset: &str, nx: usize, n: usize, alpha_hat: f64) -> Result<ExperimentConfig, String> {
    let preset: Preset = preset.parse().map_err(|e: fetidp_dg::Error| e.to_string())?;
    if preset == Preset::Custom {
        return Err("the demo only offers ex1, ex2 and ex3".into());
    }
    let cfg = ExperimentConfig {
        preset,
        nx,
        ny: nx,
        n: vec![n],
        alpha_hat,
        ..Default::default()
    };
    cfg.validate().map_err(|e| e.to_string())?;
    let dofs = nx * nx * (n + 1) * (n + 1);
    if dofs > MAX_DOFS {
        return Err(format!(
            "{dofs} unknowns is too many for the browser (limit {MAX_DOFS})"
        ));
    }
    Ok(cfg)
}

/// `log10 α` sampled at `res × res` pixel centres, rows from the top.
pub fn raster(cfg: &ExperimentConfig, res: usize) -> Result<Vec<f64>, String> {
    let geometry = Geometry::build(cfg.nx, &cfg.resolutions()).map_err(|e| e.to_string())?;
    let field = cfg.field(&geometry).map_err(|e| e.to_string())?;
    let mut out = Vec::with_capacity(res * res);
    for row in 0..res {
        let y = 1.0 - (row as f64 + 0.5) / res as f64;
        for col in 0..res {
            let x = (col as f64 + 0.5) / res as f64;
            out.push(field.value_at([x, y]).log10());
        }
    }
    Ok(out)
}

#[derive(Serialize)]
pub struct SolveSummary {
    pub iterations: usize,
    pub converged: bool,
    pub cond_estimate: f64,
    pub residuals: Vec<f64>,
    pub h_ratio: usize,
    pub num_multipliers: usize,
    pub num_primal: usize,
    pub res: usize,
    /// Solution on the pixel grid, rows from the top.
    pub u: Vec<f64>,
}

fn sample_solution(geometry: &Geometry, u: &[f64], res: usize) -> Vec<f64> {
    let part = &geometry.partition;
    let mut offsets = vec![0];
    for m in &geometry.meshes {
        offsets.push(offsets.last().unwrap() + m.num_vertices());
    }
    let mut out = Vec::with_capacity(res * res);
    for row in 0..res {
        let y = 1.0 - (row as f64 + 0.5) / res as f64;
        for col in 0..res {
            let x = (col as f64 + 0.5) / res as f64;
            let gx = ((x / part.h_sub) as usize).min(part.nx - 1);
            let gy = ((y / part.h_sub) as usize).min(part.ny - 1);
            let id = part.id_of(gx, gy);
            let m = &geometry.meshes[id];
            let (lx, ly) = ((x - m.origin[0]) / m.h, (y - m.origin[1]) / m.h);
            let (cx, cy) = ((lx as usize).min(m.n - 1), (ly as usize).min(m.n - 1));
            let (s, t) = (lx - cx as f64, ly - cy as f64);
            let at = |dx: usize, dy: usize| u[offsets[id] + (cy + dy) * (m.n + 1) + cx + dx];
            let (u00, u10, u01, u11) = (at(0, 0), at(1, 0), at(0, 1), at(1, 1));
            // cells are split along the (0,0)-(1,1) diagonal
            out.push(if s >= t {
                u00 + s * (u10 - u00) + t * (u11 - u10)
            } else {
                u00 + t * (u01 - u00) + s * (u11 - u01)
            });
        }
    }
    out
}

pub fn solve_summary(cfg: &ExperimentConfig, res: usize) -> Result<SolveSummary, String> {
    let out = experiment::run_experiment(cfg).map_err(|e| e.to_string())?;
    let pcg = &out.report.solution.pcg;
    Ok(SolveSummary {
        iterations: pcg.iterations,
        converged: pcg.converged,
        cond_estimate: pcg.cond_estimate,
        residuals: pcg.residual_history.clone(),
        h_ratio: out.row.h_ratio,
        num_multipliers: out.report.num_multipliers,
        num_primal: out.report.num_primal,
        res,
        u: sample_solution(&out.geometry, &out.report.u, res),
    })
}

/// Eigenvalues of `M⁻¹F` in ascending order; small problems only.
pub fn spectrum_values(cfg: &ExperimentConfig) -> Result<Vec<f64>, String> {
    let (geometry, field) = experiment::build_problem(cfg).map_err(|e| e.to_string())?;
    let guards = DenseGuards {
        spectrum: 1200,
        ..Default::default()
    };
    oracle::dense_spectrum(&geometry, &field, cfg.delta, guards).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn coefficient_raster(preset: &str, nx: usize, n: usize, alpha_hat: f64, res: usize) -> Result<Vec<f64>, JsError> {
    config(preset, nx, n, alpha_hat)
        .and_then(|c| raster(&c, res))
        .map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn solve(preset: &str, nx: usize, n: usize, alpha_hat: f64, res: usize) -> Result<String, JsError> {
    config(preset, nx, n, alpha_hat)
        .and_then(|c| solve_summary(&c, res))
        .and_then(|s| serde_json::to_string(&s).map_err(|e| e.to_string()))
        .map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn spectrum(preset: &str, nx: usize, n: usize, alpha_hat: f64) -> Result<Vec<f64>, JsError> {
    config(preset, nx, n, alpha_hat)
        .and_then(|c| spectrum_values(&c))
        .map_err(|e| JsError::new(&e))
}
