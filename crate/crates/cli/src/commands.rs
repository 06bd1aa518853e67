use std::path::{Path, PathBuf};

use compdec::experiments::{
    classical_pair, influence_series, riccati_crosscheck, run_scattering, scan_compositeness,
    scan_xi0, spearman, turnover_index, write_influence_csv, write_mc_csv, write_xi0_csv,
    ExperimentConfig, ExperimentRecord, PotentialKind,
};
use compdec::potentials::{
    analytic_rt, calibrate_beam_splitter, ExternalPotential, SmoothedWell, SquareWell,
};
use compdec::qgrid::{make_gaussian_1d, Grid1};
use log::info;
use serde::Serialize;
use serde_json::json;

use crate::{Cli, CliError, Command};

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a Command,
    config: &'a ExperimentConfig,
    outputs: Vec<String>,
}

/// Files produced by one subcommand, written only after the computation finished.
struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn new(dir: PathBuf) -> Result<Self, CliError> {
        std::fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            files: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }

    fn json(&mut self, name: &str, value: &impl Serialize) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        std::fs::write(self.path(name), text)?;
        Ok(())
    }

    fn finish(mut self, command: &Command, config: &ExperimentConfig) -> Result<(), CliError> {
        let outputs = std::mem::take(&mut self.files);
        let manifest = Manifest {
            tool: "compdec",
            version: env!("CARGO_PKG_VERSION"),
            command,
            config,
            outputs,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        std::fs::write(self.dir.join("manifest.json"), text)?;
        Ok(())
    }
}

fn invalid_records(records: &[ExperimentRecord]) -> Result<(), CliError> {
    let details: Vec<String> = records
        .iter()
        .filter(|r| !r.valid)
        .map(|r| format!("xi0 = {}: {}", r.xi0, r.invalid_reasons.join("; ")))
        .collect();
    if details.is_empty() {
        Ok(())
    } else {
        Err(CliError::Diagnostics {
            message: format!(
                "{} of {} runs failed their diagnostics",
                details.len(),
                records.len()
            ),
            details,
        })
    }
}

/// The influence pair needs a twice-differentiable well; a square well is
/// replaced by its smoothed counterpart with the configured edge scale.
fn driving_potential(cfg: &ExperimentConfig) -> Result<ExternalPotential<f64>, CliError> {
    let p = &cfg.potential;
    Ok(match p.kind {
        PotentialKind::Square => {
            info!(
                "using the smoothed well (edge scale {}) for the classical paths",
                p.edge_scale
            );
            SmoothedWell::new(p.mv0, p.width, p.edge_scale)?.into()
        }
        _ => cfg.external()?,
    })
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let mut cfg = crate::config::load(cli.config.as_deref(), &cli.overrides)?;
    if let Some(out) = &cli.out {
        cfg.output.dir = out.to_string_lossy().into_owned();
    }
    let dir = Path::new(&cfg.output.dir).to_path_buf();
    let command = &cli.command;
    match command {
        Command::Calibrate { p, width, target } => {
            let mv0 = calibrate_beam_splitter(*p, *width, *target)?;
            let (r, t) = analytic_rt(*p, &SquareWell::new(mv0, *width)?, 1.0)?;
            println!("mV0 = {mv0:.4}");
            println!("|R|^2 = {r:.6}, |T|^2 = {t:.6}");
            let mut out = Outputs::new(dir)?;
            out.json(
                "calibration.json",
                &json!({"p": p, "L": width, "target": target, "mv0": mv0, "reflection": r, "transmission": t}),
            )?;
            out.finish(command, &cfg)
        }
        Command::Scatter => {
            let rec = run_scattering(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&rec)?);
            let mut out = Outputs::new(dir)?;
            out.json("record.json", &rec)?;
            out.finish(command, &cfg)?;
            invalid_records(std::slice::from_ref(&rec))
        }
        Command::ScanXi0 => {
            let records = scan_xi0(&cfg)?;
            let imp: Vec<f64> = records.iter().map(|r| r.impurity).collect();
            let pmax: Vec<f64> = records.iter().map(|r| r.p_max).collect();
            let summary = json!({
                "spearman_impurity_p_max": spearman(&imp, &pmax),
                "impurity_turnover_xi0": turnover_index(&imp).map(|k| records[k].xi0),
            });
            println!("{summary}");
            let mut out = Outputs::new(dir)?;
            let csv = out.path("scan_xi0.csv");
            write_xi0_csv(&csv, &records)?;
            out.json("scan_xi0_records.json", &records)?;
            out.json("scan_xi0_summary.json", &summary)?;
            out.finish(command, &cfg)?;
            invalid_records(&records)
        }
        Command::ScanMc { wide } => {
            let run_cfg = if *wide {
                cfg.wide_well_variant()
            } else {
                cfg.clone()
            };
            let scan = scan_compositeness(&run_cfg)?;
            let (dy, dx) = scan.parity_defects();
            let peak = scan.cells.iter().map(|c| c.m_c).fold(0.0, f64::max);
            println!(
                "{}",
                json!({"cells": scan.cells.len(), "max_m_c": peak, "parity_defect_y0": dy, "parity_defect_xi": dx})
            );
            let mut out = Outputs::new(dir)?;
            let name = if *wide {
                "scan_mc_wide.csv"
            } else {
                "scan_mc.csv"
            };
            let csv = out.path(name);
            write_mc_csv(&csv, &scan)?;
            out.finish(command, &run_cfg)
        }
        Command::Influence {
            start,
            horizon,
            dt,
            stride,
            xi,
            internal_half_width,
            internal_points,
        } => {
            let v = driving_potential(&cfg)?;
            let u = cfg.spring()?;
            let (a, b) = classical_pair(&v, *start, cfg.initial.p, *dt, *horizon)?;
            let grid = Grid1::symmetric(*internal_half_width, *internal_points)?;
            let psi = make_gaussian_1d(
                grid,
                xi.unwrap_or(cfg.initial.xi0),
                cfg.initial.internal_width_sq,
                0.0,
                0.0,
            )?;
            let rows = influence_series(&psi, &a, &b, &v, &u, *stride)?;
            if let Some(last) = rows.last() {
                println!(
                    "{}",
                    json!({"t": last.t, "overlap_abs": last.overlap_abs, "overlap_arg": last.overlap_arg})
                );
            }
            let mut out = Outputs::new(dir)?;
            let csv = out.path("influence.csv");
            write_influence_csv(&csv, &rows)?;
            out.finish(command, &cfg)
        }
        Command::RiccatiCheck {
            n_fock,
            dt,
            sampled,
        } => {
            let report = riccati_crosscheck(*n_fock, *dt, *sampled, cfg.seed)?;
            let worst = report
                .entries
                .iter()
                .map(|e| e.fidelity)
                .fold(1.0, f64::min);
            println!(
                "{}",
                json!({"pass": report.pass, "entries": report.entries.len(), "min_fidelity": worst})
            );
            let mut out = Outputs::new(dir)?;
            out.json("riccati_check.json", &report)?;
            out.finish(command, &cfg)?;
            let details: Vec<String> = report
                .failures()
                .map(|e| {
                    format!(
                        "{} / {:?}: fidelity {} < {}",
                        e.profile, e.state, e.fidelity, e.threshold
                    )
                })
                .collect();
            if details.is_empty() {
                Ok(())
            } else {
                Err(CliError::Diagnostics {
                    message: "number-basis propagation disagrees with the grid".into(),
                    details,
                })
            }
        }
    }
}
