//! Experiment configuration, coefficient presets, the end-to-end runner and
//! CSV reporting.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::coeffield::{CoefficientField, Inclusion, SampledField};
use crate::error::{Error, Result};
use crate::fetidp::{solve_problem, FetiOperators, SolveReport};
use crate::geometry::Geometry;
use crate::oracle::{self, DenseGuards, MonolithicOptions};
use crate::pcg::PcgOptions;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Square inclusion of value `alpha_hat` kept one cell away from the
    /// sides of a single subdomain.
    Ex1,
    /// Two neighbouring subdomains whose interior values lie above and
    /// below their boundary-layer values.
    Ex2,
    /// Islands of value `alpha_hat` crossing the boundary layer at every
    /// interior interface.
    Ex3,
    /// Background and inclusions taken verbatim from the config.
    Custom,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Ex1 => "ex1",
            Preset::Ex2 => "ex2",
            Preset::Ex3 => "ex3",
            Preset::Custom => "custom",
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ex1" => Ok(Preset::Ex1),
            "ex2" => Ok(Preset::Ex2),
            "ex3" => Ok(Preset::Ex3),
            "custom" => Ok(Preset::Custom),
            other => Err(Error::config(format!(
                "unknown preset '{other}' (expected ex1, ex2, ex3 or custom)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ex1Params {
    /// Grid position `(gx, gy)` of the subdomain holding the inclusion.
    pub subdomain: [usize; 2],
    /// Distance of the inclusion from the subdomain sides, in fine cells.
    pub inset_cells: usize,
}

impl Default for Ex1Params {
    fn default() -> Self {
        Self {
            subdomain: [1, 1],
            inset_cells: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ex2Params {
    /// Grid position of the high-valued subdomain; the low-valued one is
    /// its right neighbour.
    pub left: [usize; 2],
    /// Value on both subdomains outside their inclusions.
    pub layer_value: f64,
    pub high_value: f64,
    pub low_value: f64,
    /// High inclusion in subdomain-local fractions `[x0, y0, x1, y1]` of
    /// `H`; `None` keeps it `inset_cells` away from every side.
    pub high_rect: Option<[f64; 4]>,
    pub inset_cells: usize,
}

impl Default for Ex2Params {
    fn default() -> Self {
        Self {
            left: [1, 1],
            layer_value: 1e3,
            high_value: 1e6,
            low_value: 1.0,
            high_rect: None,
            inset_cells: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ex3Params {
    /// Extent across the interface, as a fraction of `H`.
    pub width: f64,
    /// Extent along the interface, as a fraction of `H`, centred.
    pub length: f64,
    pub vertical: bool,
    pub horizontal: bool,
}

impl Default for Ex3Params {
    fn default() -> Self {
        Self {
            width: 0.125,
            length: 0.5,
            vertical: true,
            horizontal: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub preset: Preset,
    pub nx: usize,
    pub ny: usize,
    /// Segments per subdomain side: one value (uniform), two (checkerboard)
    /// or one per subdomain in row-major order from the bottom left.
    pub n: Vec<usize>,
    pub alpha_hat: f64,
    /// Constant source term.
    pub source: f64,
    pub delta: f64,
    pub tol: f64,
    pub max_it: usize,
    pub oracle: bool,
    pub out: Option<String>,
    pub seed: u64,
    pub background: f64,
    pub inclusions: Vec<Inclusion>,
    pub ex1: Ex1Params,
    pub ex2: Ex2Params,
    pub ex3: Ex3Params,
    pub guards: GuardConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuardConfig {
    pub spectrum: usize,
    pub generalized: usize,
}

impl Default for GuardConfig {
    fn default() -> Self {
        let g = DenseGuards::default();
        Self {
            spectrum: g.spectrum,
            generalized: g.generalized,
        }
    }
}

impl From<GuardConfig> for DenseGuards {
    fn from(g: GuardConfig) -> Self {
        DenseGuards {
            spectrum: g.spectrum,
            generalized: g.generalized,
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            preset: Preset::Ex1,
            nx: 4,
            ny: 4,
            n: vec![32],
            alpha_hat: 1e2,
            source: 1.0,
            delta: 5.0,
            tol: 1e-6,
            max_it: 500,
            oracle: false,
            out: None,
            seed: 0,
            background: 1.0,
            inclusions: Vec::new(),
            ex1: Ex1Params::default(),
            ex2: Ex2Params::default(),
            ex3: Ex3Params::default(),
            guards: GuardConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::config(format!("config: {e}")))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::config("nx and ny must be positive"));
        }
        if self.nx != self.ny {
            return Err(Error::config(format!(
                "only square partitions are supported (nx={}, ny={})",
                self.nx, self.ny
            )));
        }
        let count = self.nx * self.ny;
        if !(self.n.len() == 1 || self.n.len() == 2 || self.n.len() == count) {
            return Err(Error::config(format!(
                "n must have 1, 2 or {count} entries (got {})",
                self.n.len()
            )));
        }
        if self.n.contains(&0) {
            return Err(Error::config("n entries must be positive"));
        }
        for (name, v) in [("alpha_hat", self.alpha_hat), ("delta", self.delta), ("tol", self.tol)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("{name} must be positive (got {v})")));
            }
        }
        if !self.source.is_finite() {
            return Err(Error::config("source must be finite"));
        }
        if self.max_it == 0 {
            return Err(Error::config("max_it must be at least 1"));
        }
        Ok(())
    }

    /// Per-subdomain resolutions in subdomain order.
    pub fn resolutions(&self) -> Vec<usize> {
        let count = self.nx * self.ny;
        match self.n.len() {
            1 => vec![self.n[0]; count],
            2 => (0..count).map(|id| self.n[(id % self.nx + id / self.nx) % 2]).collect(),
            _ => self.n.clone(),
        }
    }

    pub fn pcg_options(&self) -> PcgOptions {
        PcgOptions {
            tol: self.tol,
            max_it: self.max_it,
        }
    }

    /// Sets one field from its textual value, as used by sweeps.
    pub fn set(&mut self, field: &str, value: &str) -> Result<()> {
        let bad = |e: &dyn std::fmt::Display| Error::config(format!("invalid value '{value}' for {field}: {e}"));
        match field.replace('-', "_").as_str() {
            "preset" => self.preset = value.parse()?,
            "nx" => {
                self.nx = value.trim().parse().map_err(|e| bad(&e))?;
                self.ny = self.nx;
            }
            "n" | "h_over_h" => {
                self.n = value
                    .split([' ', '/'])
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse().map_err(|e| bad(&e)))
                    .collect::<Result<_>>()?
            }
            "alpha_hat" => self.alpha_hat = value.trim().parse().map_err(|e| bad(&e))?,
            "delta" => self.delta = value.trim().parse().map_err(|e| bad(&e))?,
            "tol" => self.tol = value.trim().parse().map_err(|e| bad(&e))?,
            "max_it" => self.max_it = value.trim().parse().map_err(|e| bad(&e))?,
            "source" => self.source = value.trim().parse().map_err(|e| bad(&e))?,
            "seed" => self.seed = value.trim().parse().map_err(|e| bad(&e))?,
            other => return Err(Error::config(format!("field '{other}' cannot be swept"))),
        }
        Ok(())
    }

    /// Coefficient field of the configured preset on `geometry`.
    pub fn field(&self, geometry: &Geometry) -> Result<CoefficientField> {
        match self.preset {
            Preset::Ex1 => preset_ex1(geometry, self.alpha_hat, &self.ex1),
            Preset::Ex2 => preset_ex2(geometry, &self.ex2),
            Preset::Ex3 => preset_ex3(geometry, self.alpha_hat, &self.ex3),
            Preset::Custom => CoefficientField::new(self.background, self.inclusions.clone()),
        }
    }

    /// The value reported in the `alpha_hat` column.
    pub fn reported_alpha_hat(&self) -> f64 {
        match self.preset {
            Preset::Ex2 => self.ex2.high_value,
            _ => self.alpha_hat,
        }
    }
}

/// Expands `field=v1,v2,...` into one config per value.
pub fn expand_sweep(base: &ExperimentConfig, spec: &str) -> Result<Vec<ExperimentConfig>> {
    let (field, values) = spec
        .split_once('=')
        .ok_or_else(|| Error::config(format!("sweep '{spec}' must look like field=v1,v2,...")))?;
    let values: Vec<&str> = values.split(',').map(str::trim).filter(|v| !v.is_empty()).collect();
    if values.is_empty() {
        return Err(Error::config(format!("sweep '{spec}' has no values")));
    }
    values
        .into_iter()
        .map(|v| {
            let mut cfg = base.clone();
            cfg.set(field.trim(), v)?;
            Ok(cfg)
        })
        .collect()
}

fn subdomain_at(geometry: &Geometry, pos: [usize; 2], what: &str) -> Result<usize> {
    let p = &geometry.partition;
    if pos[0] >= p.nx || pos[1] >= p.ny {
        return Err(Error::config(format!(
            "{what}: subdomain ({}, {}) outside the {}x{} partition",
            pos[0], pos[1], p.nx, p.ny
        )));
    }
    Ok(p.id_of(pos[0], pos[1]))
}

fn inset_square(geometry: &Geometry, sub: usize, cells: usize, value: f64, what: &str) -> Result<Inclusion> {
    let mesh = &geometry.meshes[sub];
    if mesh.n < 2 * cells + 2 {
        return Err(Error::config(format!(
            "{what}: subdomain {sub} needs at least {} segments per side (got {})",
            2 * cells + 2,
            mesh.n
        )));
    }
    let d = cells as f64 * mesh.h;
    let s = &geometry.partition.subdomains[sub];
    let [x, y] = s.origin;
    Ok(Inclusion::new(x + d, y + d, x + s.size - d, y + s.size - d, value))
}

/// One subdomain carries `[d, H - d]²` (local coordinates) with value
/// `alpha_hat`, `d = inset_cells · h`; background 1.
pub fn preset_ex1(geometry: &Geometry, alpha_hat: f64, p: &Ex1Params) -> Result<CoefficientField> {
    let sub = subdomain_at(geometry, p.subdomain, "ex1")?;
    CoefficientField::new(
        1.0,
        vec![inset_square(geometry, sub, p.inset_cells.max(1), alpha_hat, "ex1")?],
    )
}

/// Two horizontally adjacent subdomains at `layer_value`; the left one
/// holds an inclusion of `high_value`, the right one of `low_value`.
/// Background 1.
pub fn preset_ex2(geometry: &Geometry, p: &Ex2Params) -> Result<CoefficientField> {
    let part = &geometry.partition;
    if part.nx < 4 {
        return Err(Error::config(
            "ex2 needs two horizontally adjacent interior subdomains (nx >= 4)",
        ));
    }
    let a = subdomain_at(geometry, p.left, "ex2")?;
    let b = subdomain_at(geometry, [p.left[0] + 1, p.left[1]], "ex2")?;
    let whole = |id: usize| {
        let s = &part.subdomains[id];
        Inclusion::new(
            s.origin[0],
            s.origin[1],
            s.origin[0] + s.size,
            s.origin[1] + s.size,
            p.layer_value,
        )
    };
    let high = match p.high_rect {
        Some([x0, y0, x1, y1]) => {
            let s = &part.subdomains[a];
            let [ox, oy] = s.origin;
            Inclusion::new(
                ox + x0 * s.size,
                oy + y0 * s.size,
                ox + x1 * s.size,
                oy + y1 * s.size,
                p.high_value,
            )
        }
        None => inset_square(geometry, a, p.inset_cells.max(1), p.high_value, "ex2")?,
    };
    let low = inset_square(geometry, b, p.inset_cells.max(1), p.low_value, "ex2")?;
    CoefficientField::new(1.0, vec![whole(a), whole(b), high, low])
}

/// Islands of value `alpha_hat` on every interior interface, reaching
/// `width · H` into the left (or lower) subdomain and covering the centred
/// `length · H` of the edge.
pub fn preset_ex3(geometry: &Geometry, alpha_hat: f64, p: &Ex3Params) -> Result<CoefficientField> {
    if !(p.width > 0.0 && p.width <= 0.5 && p.length > 0.0 && p.length <= 1.0) {
        return Err(Error::config("ex3: width must lie in (0, 0.5] and length in (0, 1]"));
    }
    for m in &geometry.meshes {
        if (m.n as f64) * p.width < 1.0 - 1e-12 {
            return Err(Error::config(format!(
                "ex3: islands of width {}H are thinner than one cell for n = {}",
                p.width, m.n
            )));
        }
    }
    let h_sub = geometry.partition.h_sub;
    let (w, l) = (p.width * h_sub, p.length * h_sub);
    let mut inclusions = Vec::new();
    for e in &geometry.interfaces.interfaces {
        let mid = [0.5 * (e.start[0] + e.end[0]), 0.5 * (e.start[1] + e.end[1])];
        if e.is_vertical() && p.vertical {
            let x = e.start[0];
            inclusions.push(Inclusion::new(x - w, mid[1] - 0.5 * l, x, mid[1] + 0.5 * l, alpha_hat));
        } else if !e.is_vertical() && p.horizontal {
            let y = e.start[1];
            inclusions.push(Inclusion::new(mid[0] - 0.5 * l, y - w, mid[0] + 0.5 * l, y, alpha_hat));
        }
    }
    CoefficientField::new(1.0, inclusions)
}

/// Least-squares slope of `log y` against `log x`.
pub fn fit_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::Input("slope fit needs at least two points".into()));
    }
    if points
        .iter()
        .any(|&(x, y)| !(x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite()))
    {
        return Err(Error::Input("slope fit needs positive finite values".into()));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Input("slope fit needs at least two distinct abscissae".into()));
    }
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Ok(sxy / sxx)
}

pub const CSV_HEADER: [&str; 10] = [
    "preset",
    "nx",
    "H_over_h",
    "alpha_hat",
    "iterations",
    "cond_estimate",
    "final_rel_residual",
    "converged",
    "t_setup_s",
    "t_solve_s",
];

/// One line of the results table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub preset: String,
    pub nx: usize,
    #[serde(rename = "H_over_h")]
    pub h_ratio: usize,
    pub alpha_hat: f64,
    pub iterations: usize,
    pub cond_estimate: f64,
    pub final_rel_residual: f64,
    pub converged: bool,
    pub t_setup_s: f64,
    pub t_solve_s: f64,
}

/// Writes rows as CSV, with the header when `header` is set.
pub fn write_csv<W: std::io::Write>(out: W, rows: &[ReportRow], header: bool) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(header).from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Input(format!("csv: {e}")))?;
    }
    w.flush()?;
    Ok(())
}

/// Appends rows to `path`, writing the header if the file is new or empty.
pub fn append_csv(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    write_csv(file, rows, fresh)
}

pub fn read_csv(text: &str) -> Result<Vec<ReportRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let headers = r.headers().map_err(|e| Error::Input(format!("csv: {e}")))?.clone();
    if headers.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::Input(format!("unexpected csv header: {headers:?}")));
    }
    r.deserialize()
        .map(|row| row.map_err(|e| Error::Input(format!("csv: {e}"))))
        .collect()
}

/// Cross-checks against the reference path.
#[derive(Clone, Debug, Default)]
pub struct OracleReport {
    /// Relative l2 distance to the monolithic direct solution.
    pub solution_error: f64,
    /// Largest entrywise difference between folded local and monolithic
    /// matrices, relative to the largest entry.
    pub subassembly_error: f64,
    /// Dense spectrum of `M⁻¹F`, when within the guard.
    pub spectrum: Option<Vec<f64>>,
    pub notes: Vec<String>,
}

pub struct ExperimentOutcome {
    pub row: ReportRow,
    pub geometry: Geometry,
    pub field: SampledField,
    pub operators: FetiOperators,
    pub report: SolveReport,
    pub oracle: Option<OracleReport>,
}

/// Builds geometry and sampled field for a config.
pub fn build_problem(cfg: &ExperimentConfig) -> Result<(Geometry, SampledField)> {
    cfg.validate()?;
    let geometry = Geometry::build(cfg.nx, &cfg.resolutions())?;
    let field = SampledField::new(&cfg.field(&geometry)?, &geometry)?;
    Ok((geometry, field))
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let (geometry, field) = build_problem(cfg)?;
    let source = cfg.source;
    let f = move |_: [f64; 2]| source;
    let (operators, report) = solve_problem(&geometry, &field, cfg.delta, &f, cfg.pcg_options())?;
    let pcg = &report.solution.pcg;
    let row = ReportRow {
        preset: cfg.preset.name().to_string(),
        nx: cfg.nx,
        h_ratio: geometry.max_h_ratio(),
        alpha_hat: cfg.reported_alpha_hat(),
        iterations: pcg.iterations,
        cond_estimate: pcg.cond_estimate,
        final_rel_residual: pcg.final_rel_residual,
        converged: pcg.converged,
        t_setup_s: report.timings.setup_s,
        t_solve_s: report.timings.solve_s,
    };
    let oracle = if cfg.oracle {
        Some(oracle_checks(cfg, &geometry, &field, &report)?)
    } else {
        None
    };
    Ok(ExperimentOutcome {
        row,
        geometry,
        field,
        operators,
        report,
        oracle,
    })
}

fn oracle_checks(
    cfg: &ExperimentConfig,
    geometry: &Geometry,
    field: &SampledField,
    report: &SolveReport,
) -> Result<OracleReport> {
    let source = cfg.source;
    let f = move |_: [f64; 2]| source;
    let mono = oracle::assemble_monolithic(geometry, field, MonolithicOptions::new(cfg.delta), &f)?;
    let u = oracle::direct_solve(&mono)?;
    let diff: Vec<f64> = report.u.iter().zip(&u).map(|(a, b)| a - b).collect();
    let solution_error = crate::sparse::norm2(&diff) / crate::sparse::norm2(&u).max(f64::MIN_POSITIVE);
    let folded = oracle::fold_local_matrices(geometry, field, cfg.delta, &mono.offsets)?;
    let subassembly_error = folded.combine(1.0, &mono.matrix, -1.0).max_abs() / mono.matrix.max_abs();
    let mut notes = Vec::new();
    let spectrum = match oracle::dense_spectrum(geometry, field, cfg.delta, cfg.guards.into()) {
        Ok(s) => Some(s),
        Err(Error::DimensionGuard { dim, limit }) => {
            notes.push(format!("dense spectrum skipped: dimension {dim} exceeds guard {limit}"));
            None
        }
        Err(e) => return Err(e),
    };
    Ok(OracleReport {
        solution_error,
        subassembly_error,
        spectrum,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffield::boundary_layer_stats;

    #[test]
    fn slope_of_power_laws() {
        let pts: Vec<(f64, f64)> = [32.0, 64.0, 128.0].iter().map(|&x: &f64| (x, 3.0 * x * x)).collect();
        assert!((fit_slope(&pts).unwrap() - 2.0).abs() < 1e-12);
        let flat: Vec<(f64, f64)> = [4.0, 8.0, 16.0].iter().map(|&x| (x, 7.0)).collect();
        assert!(fit_slope(&flat).unwrap().abs() < 1e-12);
        assert!(fit_slope(&[(1.0, 1.0), (2.0, -1.0), (3.0, 1.0)]).is_err());
        assert!(fit_slope(&[(2.0, 1.0), (2.0, 3.0)]).is_err());
    }

    #[test]
    fn ex1_layer_and_counts() {
        let cfg = ExperimentConfig {
            n: vec![8],
            alpha_hat: 1e6,
            ..Default::default()
        };
        let (g, s) = build_problem(&cfg).unwrap();
        let sub = g.partition.id_of(1, 1);
        assert_eq!((s.layers[sub].alpha_lo, s.layers[sub].alpha_hi), (1.0, 1.0));
        let count = s.values[sub].iter().filter(|&&v| v == 1e6).count();
        assert_eq!(count, 2 * (8 - 2) * (8 - 2));
        assert_eq!(s.values.iter().flatten().filter(|&&v| v != 1.0).count(), count);
        let too_coarse = ExperimentConfig {
            n: vec![3],
            ..cfg.clone()
        };
        assert!(build_problem(&too_coarse).is_err());
        let homogeneous = ExperimentConfig { alpha_hat: 1.0, ..cfg };
        let (_, s) = build_problem(&homogeneous).unwrap();
        assert!(s.values.iter().flatten().all(|&v| v == 1.0));
    }

    #[test]
    fn ex2_layers_above_and_below() {
        let cfg = ExperimentConfig {
            preset: Preset::Ex2,
            n: vec![8],
            ..Default::default()
        };
        let (g, s) = build_problem(&cfg).unwrap();
        let (a, b) = (g.partition.id_of(1, 1), g.partition.id_of(2, 1));
        for sub in [a, b] {
            assert_eq!((s.layers[sub].alpha_lo, s.layers[sub].alpha_hi), (1e3, 1e3));
        }
        assert!(s.values[a].contains(&1e6));
        assert!(s.values[b].contains(&1.0));
        assert_eq!(
            s.values.iter().flatten().filter(|&&v| v == 1e3).count(),
            2 * (2 * 64 - 2 * 36)
        );
        let two = ExperimentConfig {
            nx: 2,
            ny: 2,
            ..cfg.clone()
        };
        assert!(build_problem(&two).is_err());
        let touching = ExperimentConfig {
            ex2: Ex2Params {
                high_rect: Some([0.0, 0.25, 0.5, 0.75]),
                ..Default::default()
            },
            ..cfg
        };
        let (g, s) = build_problem(&touching).unwrap();
        let a = g.partition.id_of(1, 1);
        assert_eq!((s.layers[a].alpha_lo, s.layers[a].alpha_hi), (1e3, 1e6));
    }

    #[test]
    fn ex3_islands_cross_layers() {
        let cfg = ExperimentConfig {
            preset: Preset::Ex3,
            n: vec![8],
            alpha_hat: 1e2,
            ..Default::default()
        };
        let (g, s) = build_problem(&cfg).unwrap();
        // every subdomain left of a vertical or below a horizontal interface
        for (i, m) in g.meshes.iter().enumerate() {
            let sd = &g.partition.subdomains[i];
            let stats = boundary_layer_stats(m, &s.values[i]);
            let expect = if sd.gx + 1 < 4 || sd.gy + 1 < 4 { 1e2 } else { 1.0 };
            assert_eq!(stats.alpha_hi, expect, "subdomain {i}");
            assert_eq!(stats.alpha_lo, 1.0);
        }
        assert!(build_problem(&ExperimentConfig {
            n: vec![4],
            ..cfg.clone()
        })
        .is_err());
        let flat = ExperimentConfig { alpha_hat: 1.0, ..cfg };
        let (_, s) = build_problem(&flat).unwrap();
        assert!(s.values.iter().flatten().all(|&v| v == 1.0));
    }

    #[test]
    fn resolutions_layouts() {
        let mut cfg = ExperimentConfig {
            nx: 2,
            ny: 2,
            n: vec![8, 16],
            ..Default::default()
        };
        assert_eq!(cfg.resolutions(), vec![8, 16, 16, 8]);
        cfg.n = vec![4, 5, 6, 7];
        assert_eq!(cfg.resolutions(), vec![4, 5, 6, 7]);
        cfg.n = vec![4, 5, 6];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn toml_roundtrip_and_rejections() {
        let cfg = ExperimentConfig::from_toml(
            "preset = \"ex3\"\nnx = 4\nny = 4\nn = [16]\nalpha_hat = 1e3\n[ex3]\nwidth = 0.25\n",
        )
        .unwrap();
        assert_eq!(cfg.preset, Preset::Ex3);
        assert_eq!(cfg.ex3.width, 0.25);
        assert_eq!(cfg.tol, 1e-6);
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert!(ExperimentConfig::from_toml("bogus = 1").is_err());
        assert!(ExperimentConfig::from_toml("preset = \"ex9\"").is_err());
        let bad = ExperimentConfig {
            tol: -1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn sweep_expansion() {
        let base = ExperimentConfig::default();
        let cfgs = expand_sweep(&base, "alpha_hat=1e2,1e4,1e6").unwrap();
        assert_eq!(cfgs.iter().map(|c| c.alpha_hat).collect::<Vec<_>>(), [1e2, 1e4, 1e6]);
        let cfgs = expand_sweep(&base, "n=8,16").unwrap();
        assert_eq!(cfgs[1].n, vec![16]);
        let cfgs = expand_sweep(&base, "n=8/16").unwrap();
        assert_eq!(cfgs[0].n, vec![8, 16]);
        assert!(expand_sweep(&base, "colour=red").is_err());
        assert!(expand_sweep(&base, "alpha_hat").is_err());
        assert!(expand_sweep(&base, "alpha_hat=x").is_err());
    }

    #[test]
    fn csv_roundtrip() {
        let row = ReportRow {
            preset: "ex1".into(),
            nx: 4,
            h_ratio: 32,
            alpha_hat: 100.0,
            iterations: 13,
            cond_estimate: 8.5,
            final_rel_residual: 1e-7,
            converged: true,
            t_setup_s: 0.1,
            t_solve_s: 0.2,
        };
        let mut buf = Vec::new();
        write_csv(&mut buf, &[row.clone(), row.clone()], true).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER.join(","));
        assert_eq!(read_csv(&text).unwrap(), vec![row.clone(), row]);
    }

    #[test]
    fn runner_small_with_oracle() {
        let cfg = ExperimentConfig {
            nx: 2,
            ny: 2,
            n: vec![4, 6],
            oracle: true,
            tol: 1e-10,
            ..Default::default()
        };
        let out = run_experiment(&cfg).unwrap();
        assert!(out.row.converged);
        assert_eq!(out.row.h_ratio, 6);
        let o = out.oracle.unwrap();
        assert!(o.solution_error < 1e-8);
        assert!(o.subassembly_error < 1e-12);
        assert!(o.spectrum.unwrap()[0] >= 1.0 - 1e-10);
    }
}
