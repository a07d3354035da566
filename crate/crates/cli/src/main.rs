//! `fetidp`: runs FETI-DP experiments and writes one CSV row per run.
//!
//! ```text
//! fetidp --preset ex1 --nx 4 --n 32 --alpha-hat 1e4
//! fetidp --preset ex3 --n 64 --sweep alpha_hat=1e2,1e3,1e4 --out results.csv
//! fetidp --config run.toml --oracle --dump-dir dumps
//! ```
//!
//! Exit status: 0 on success, 2 if any run failed to converge, 3 on a
//! configuration error, 1 on any other failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use fetidp_dg::experiment::{self, ExperimentConfig, ExperimentOutcome, Preset, ReportRow};
use fetidp_dg::oracle::{self, DenseGuards};
use fetidp_dg::Error;

#[derive(Parser, Debug)]
#[command(
    name = "fetidp",
    version,
    about = "FETI-DP experiments for composite FE/DG discretizations"
)]
struct Cli {
    /// TOML experiment config; flags given on the command line override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// ex1, ex2, ex3 or custom.
    #[arg(long)]
    preset: Option<Preset>,
    /// Subdomains per direction.
    #[arg(long)]
    nx: Option<usize>,
    /// Segments per subdomain side: one value, two (checkerboard) or nx² values.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    #[arg(long = "alpha-hat")]
    alpha_hat: Option<f64>,
    /// Penalty parameter.
    #[arg(long)]
    delta: Option<f64>,
    /// Relative residual reduction that stops PCG.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long = "max-it")]
    max_it: Option<usize>,
    /// Cross-check against the monolithic direct solve and dense spectrum.
    #[arg(long)]
    oracle: bool,
    /// Append rows to this CSV file instead of printing them.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `field=v1,v2,...`; repeat to sweep a product.
    #[arg(long)]
    sweep: Vec<String>,
    /// Write mesh, matrix and map dumps here (one subdirectory per run).
    #[arg(long = "dump-dir")]
    dump_dir: Option<PathBuf>,
    /// Write the dense spectrum of M⁻¹F as `index,value` CSV.
    #[arg(long)]
    spectrum: Option<PathBuf>,
}

enum Failure {
    Config(String),
    Other(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Geometry(_) => Failure::Config(e.to_string()),
            other => Failure::Other(other.to_string()),
        }
    }
}

fn base_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(p) = cli.preset {
        cfg.preset = p;
    }
    if let Some(nx) = cli.nx {
        cfg.nx = nx;
        cfg.ny = nx;
    }
    if let Some(n) = &cli.n {
        cfg.n = n.clone();
    }
    if let Some(a) = cli.alpha_hat {
        if cfg.preset == Preset::Ex2 {
            eprintln!("note: ex2 takes its values from the [ex2] config table; --alpha-hat is ignored");
        }
        cfg.alpha_hat = a;
    }
    if let Some(d) = cli.delta {
        cfg.delta = d;
    }
    if let Some(t) = cli.tol {
        cfg.tol = t;
    }
    if let Some(m) = cli.max_it {
        cfg.max_it = m;
    }
    cfg.oracle |= cli.oracle;
    if let Some(o) = &cli.out {
        cfg.out = Some(o.display().to_string());
    }
    Ok(cfg)
}

fn expand(cfg: ExperimentConfig, sweeps: &[String]) -> Result<Vec<ExperimentConfig>, Failure> {
    let mut runs = vec![cfg];
    for s in sweeps {
        let mut next = Vec::new();
        for c in &runs {
            next.extend(experiment::expand_sweep(c, s)?);
        }
        runs = next;
    }
    for c in &runs {
        c.validate()?;
    }
    Ok(runs)
}

fn indexed(path: &std::path::Path, k: usize, total: usize) -> PathBuf {
    if total == 1 {
        return path.to_path_buf();
    }
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
    let name = match path.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}_{k}.{ext}"),
        None => format!("{stem}_{k}"),
    };
    path.with_file_name(name)
}

fn report_oracle(out: &ExperimentOutcome) {
    let Some(o) = &out.oracle else { return };
    eprintln!(
        "oracle: |u - u_direct|/|u_direct| = {:.3e}, subassembly mismatch = {:.3e}",
        o.solution_error, o.subassembly_error
    );
    if let Some(s) = &o.spectrum {
        let k = oracle::condition_number(s);
        let est = out.row.cond_estimate;
        eprintln!(
            "oracle: dense cond = {k:.6}, lanczos = {est:.6}, rel diff = {:.2e}",
            (est - k).abs() / k
        );
    }
    for n in &o.notes {
        eprintln!("oracle: {n}");
    }
}

fn run(cli: &Cli) -> Result<bool, Failure> {
    let runs = expand(base_config(cli)?, &cli.sweep)?;
    let total = runs.len();
    let mut rows: Vec<ReportRow> = Vec::with_capacity(total);
    let mut all_converged = true;
    for (k, cfg) in runs.iter().enumerate() {
        let out = experiment::run_experiment(cfg)?;
        report_oracle(&out);
        if let Some(dir) = &cli.dump_dir {
            let dir = if total == 1 {
                dir.clone()
            } else {
                dir.join(format!("run_{k}"))
            };
            let source = cfg.source;
            let f = move |_: [f64; 2]| source;
            let guards: DenseGuards = cfg.guards.into();
            let (paths, notes) =
                fetidp_dg::io::write_dumps(&dir, &out.geometry, &out.field, &out.operators, cfg.delta, &f, guards)?;
            eprintln!("dumps: {} files in {}", paths.len(), dir.display());
            for n in notes {
                eprintln!("dumps: {n}");
            }
        }
        if let Some(path) = &cli.spectrum {
            let spectrum = match out.oracle.as_ref().and_then(|o| o.spectrum.clone()) {
                Some(s) => s,
                None => oracle::dense_spectrum(&out.geometry, &out.field, cfg.delta, cfg.guards.into())?,
            };
            let p = indexed(path, k, total);
            std::fs::write(&p, oracle::eigen_csv(&spectrum)).map_err(Error::from)?;
        }
        if !out.row.converged {
            eprintln!(
                "warning: {} H/h={} alpha_hat={} did not converge in {} iterations (residual {:.3e})",
                out.row.preset, out.row.h_ratio, out.row.alpha_hat, out.row.iterations, out.row.final_rel_residual
            );
            all_converged = false;
        }
        // stream rows so partial sweeps are not lost
        match &runs[0].out {
            Some(path) => experiment::append_csv(std::path::Path::new(path), std::slice::from_ref(&out.row))?,
            None => experiment::write_csv(std::io::stdout(), std::slice::from_ref(&out.row), k == 0)?,
        }
        rows.push(out.row);
    }
    if let Some(path) = &runs[0].out {
        for r in &rows {
            println!(
                "{} nx={} H/h={} alpha_hat={:e}: {} its, cond {:.4}",
                r.preset, r.nx, r.h_ratio, r.alpha_hat, r.iterations, r.cond_estimate
            );
        }
        println!("appended {} row(s) to {path}", rows.len());
    }
    Ok(all_converged)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Other(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
