//! Run orchestration: single runs, Cartesian parameter sweeps, post-hoc
//! analysis of run directories, and run-to-run comparison.
//!
//! # Run directory layout
//!
//! ```text
//! manifest.toml      config echo + package version + platform + invocation
//! diagnostics.csv    one record per scheduled sample (fixed column order)
//! fits.csv           density-decay fits over the configured window
//! snapshots/         state_XXXXX.snap at the checkpoint cadence,
//!                    state_final.snap always, last_good.snap after an abort
//! scatter/           only when scattering analysis is enabled — see below
//! ```
//!
//! With `diagnostics.scattering = true` the run maintains the long-range
//! phase accumulator alongside the integrator and emits under `scatter/`:
//! `report.csv` (named scalars), `g_inf.bin` and `psi_r.bin` (raw
//! little-endian f64 fields in grid order), `kappa_inf.snap` (the scattering
//! datum), `eta_XXXXX.snap` / `eta_tilde_XXXXX.snap` (unmodified and
//! phase-corrected profile snapshots in the final decade), the pairwise
//! distance tables `cauchy_unmodified.csv` / `cauchy_modified.csv`, and the
//! peak phase drift series `drift.dat`.
//!
//! # Conventions
//!
//! The diagnostics `time` column is the run frame's own time (physical `t`
//! for the fixed frame, compactified `s` for compact frames). The density
//! columns `rho_l1`, `rho_l2`, `rho_linf` always report the *physical*
//! density: in compact frames each sampled state is mapped through the lens
//! to the physical frame at `t = 1/s` first. Decay fits are taken against
//! the run's own time variable, so a physical-frame decay `t^{-d}` appears
//! as slope `+d` in a compact run (`s = 1/t` exactly) and as `-d` in a
//! fixed-frame run.
//!
//! # Determinism
//!
//! Reruns of the same configuration are byte-identical on one platform with
//! a fixed thread count: the initial data is seeded, integration is
//! sequential with a deterministic transform plan, floats are written with
//! shortest round-trip formatting, directory listings are sorted, and no
//! artifact contains a timestamp. The manifest echoes the full effective
//! configuration, so a rerun driven from the manifest reproduces
//! `diagnostics.csv` exactly.
//!
//! # Failure policy
//!
//! Configuration problems abort before any integration with dotted
//! key-path messages. Runtime aborts (step-size guard, invariant loss,
//! non-finite values) write the state at the last completed diagnostic
//! barrier to `snapshots/last_good.snap`, flush the partial
//! `diagnostics.csv`, and return the underlying error. Sweep points fail
//! independently: the failure is recorded in the summary row and the sweep
//! continues.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::config::{apply_env_overrides, FrameKind, RunConfig};
use crate::diagnostics::{
    bootstrap_delta, linear_fit, BootstrapTracker, DensityNorm, DiagnosticsRecord,
    DiagnosticsSeries, LinearFit,
};
use crate::error::{Error, Result};
use crate::potentials::Potential;
use crate::propagator::{evolve_state, EvolveOptions};
use crate::pseudoconformal::{nu_to_kappa, FramedState, StateFrame};
use crate::scattering::{
    cauchy_table, kappa_scatter_error, modified_profile, phase_drift_series, profile,
    reconstruct_scattering_data, PhaseAccumulator, ScatterReport,
};
use crate::snapshot::{read_snapshot, write_snapshot};
use crate::state::{generate_initial_data, Observables, OrbitalState};

/// Maximum number of profile snapshots retained for Cauchy tables.
const MAX_CAUCHY_SNAPSHOTS: usize = 12;

/// Build metadata recorded in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildInfo {
    pub package: String,
    pub version: String,
    pub platform: String,
}

impl BuildInfo {
    fn current() -> Self {
        Self {
            package: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            platform: format!("{}-{}", std::env::consts::ARCH, std::env::consts::OS),
        }
    }
}

/// Invocation details that are not part of the configuration proper.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Invocation {
    /// Requested worker count. The engine is sequential; the value is
    /// recorded because the determinism contract is stated per thread count.
    pub threads: usize,
}

/// `manifest.toml`: everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub build: BuildInfo,
    pub invocation: Invocation,
    pub config: RunConfig,
}

impl Manifest {
    pub fn new(config: RunConfig, threads: usize) -> Self {
        Self {
            build: BuildInfo::current(),
            invocation: Invocation { threads },
            config,
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("manifest serializes to TOML")
    }

    /// Read a manifest, applying `KSFLOW_*` environment overrides to the
    /// embedded configuration (so analysis parameters can be adjusted
    /// without editing the run directory).
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
            path: path.display().to_string(),
            detail: format!("cannot read manifest: {e}"),
        })?;
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config {
            path: path.display().to_string(),
            detail: e.message().to_string(),
        })?;
        let Some(toml::Value::Table(config_table)) = table.get_mut("config") else {
            return Err(Error::Config {
                path: path.display().to_string(),
                detail: "manifest has no [config] table".to_string(),
            });
        };
        apply_env_overrides(config_table, std::env::vars())?;
        let manifest: Manifest =
            crate::config::table_into(table, &path.display().to_string())?;
        manifest.config.validate()?;
        Ok(manifest)
    }
}

/// Everything a completed run hands back to the caller.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub out_dir: PathBuf,
    pub series: DiagnosticsSeries<f64>,
    /// Density-decay fits against the run's own time variable (the subset
    /// of norms for which the fit preconditions held).
    pub decay_fits: Vec<(DensityNorm, LinearFit<f64>)>,
    pub scatter: Option<ScatterReport<f64>>,
    /// Measured asymptotic class when scattering analysis ran:
    /// `"critical"`, `"subcritical"`, or `"indeterminate"`.
    pub dichotomy: Option<String>,
    pub final_state: OrbitalState<f64>,
    pub state_frame: StateFrame,
}

impl RunArtifacts {
    /// Largest relative deviation of the mass column from its initial value.
    pub fn mass_drift(&self) -> f64 {
        let records = self.series.records();
        let m0 = records[0].observables.rho_l1;
        records
            .iter()
            .map(|r| (r.observables.rho_l1 - m0).abs() / m0)
            .fold(0.0, f64::max)
    }
}

fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

fn fit_window_of(config: &RunConfig) -> Option<(f64, f64)> {
    config
        .diagnostics
        .fit_window
        .map(|[a, b]| (a.min(b), a.max(b)))
}

fn window_header(config: &RunConfig) -> String {
    match config.diagnostics.fit_window {
        None => "# fit window: full".to_string(),
        Some([a, b]) => format!("# fit window: [{a}, {b}]"),
    }
}

fn norm_name(p: DensityNorm) -> &'static str {
    match p {
        DensityNorm::L1 => "rho_l1",
        DensityNorm::L2 => "rho_l2",
        DensityNorm::LInf => "rho_linf",
    }
}

const FIT_NORMS: [DensityNorm; 3] = [DensityNorm::LInf, DensityNorm::L2, DensityNorm::L1];

fn compute_decay_fits(
    series: &DiagnosticsSeries<f64>,
    window: Option<(f64, f64)>,
) -> Vec<(DensityNorm, LinearFit<f64>)> {
    FIT_NORMS
        .iter()
        .filter_map(|&p| series.fit_density_decay(p, window).ok().map(|f| (p, f)))
        .collect()
}

fn fits_csv(
    config: &RunConfig,
    fits: &[(DensityNorm, LinearFit<f64>)],
) -> String {
    let mut out = window_header(config);
    out.push('\n');
    out.push_str("quantity,slope,intercept,r_squared,residual\n");
    for (p, fit) in fits {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            norm_name(*p),
            fit.slope,
            fit.intercept,
            fit.r_squared,
            fit.residual
        );
    }
    out
}

/// Physical-frame density norms `(L¹, L², L^∞)` of a sampled state.
fn physical_density_norms(state: &OrbitalState<f64>, compact: bool) -> Result<(f64, f64, f64)> {
    let direct = |s: &OrbitalState<f64>| {
        let w = s.grid().position_weight();
        let rho = s.density();
        let l1 = w * rho.iter().sum::<f64>();
        let l2 = (w * rho.iter().map(|r| r * r).sum::<f64>()).sqrt();
        let linf = rho.iter().fold(0.0_f64, |a, &b| a.max(b));
        (l1, l2, linf)
    };
    if !compact {
        return Ok(direct(state));
    }
    let framed = FramedState::from_nu(state.clone())?;
    let kappa = nu_to_kappa(&framed)?;
    Ok(direct(kappa.state()))
}

fn observe(
    state: &OrbitalState<f64>,
    compact: bool,
    m: f64,
    tracker: &mut BootstrapTracker<f64>,
) -> Result<Observables<f64>> {
    let (rho_l1, rho_l2, rho_linf) = physical_density_norms(state, compact)?;
    let kappa_l2l2 = state.hilbert_schmidt_norm();
    let kappa_linfl2 = state.sup_l2_norm();
    let sobolev_m = state.sobolev_norm(m)?;
    let weighted_j_m = state.weighted_j_norm(m)?;
    let bootstrap_x = tracker.update(state.time(), kappa_l2l2, kappa_linfl2, sobolev_m);
    Ok(Observables {
        time: state.time(),
        rho_l1,
        rho_l2,
        rho_linf,
        kappa_l2l2,
        kappa_linfl2,
        sobolev_m,
        weighted_j_m,
        gram_drift: state.gram_drift(),
        edge_mass: state.grid().edge_mass_fraction(&state.density()),
        bootstrap_x,
    })
}

/// Indices into `samples` (which must include its endpoints) selected for
/// profile snapshots: all samples within a factor 10 of the final time,
/// thinned evenly to at most `max` entries, endpoints kept.
fn cauchy_sample_indices(samples: &[f64], max: usize) -> Vec<usize> {
    let end = *samples.last().expect("non-empty schedule");
    let cutoff = end * 10.0 * (1.0 + 1e-12);
    let decade: Vec<usize> = (0..samples.len()).filter(|&k| samples[k] <= cutoff).collect();
    if decade.len() <= max {
        return decade;
    }
    let mut picked: Vec<usize> = (0..max)
        .map(|i| decade[(i * (decade.len() - 1)) / (max - 1)])
        .collect();
    picked.dedup();
    picked
}

/// Largest tabulated distance among snapshot pairs whose times both lie in
/// `[lo, hi]`. `None` when fewer than two snapshots fall in the window.
fn windowed_max(times: &[f64], table: &[Vec<f64>], lo: f64, hi: f64) -> Option<f64> {
    let idx: Vec<usize> = (0..times.len())
        .filter(|&i| times[i] >= lo && times[i] <= hi)
        .collect();
    if idx.len() < 2 {
        return None;
    }
    let mut best = 0.0_f64;
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[a + 1..] {
            best = best.max(table[i][j]);
        }
    }
    Some(best)
}

/// Classify the measured asymptotics from the windowed Cauchy behavior and
/// the peak phase drift: an unmodified profile that is already Cauchy
/// (distances at least halve when the remaining time halves) is
/// `subcritical`; a logarithmically drifting phase that the correction
/// renders Cauchy is `critical`.
fn classify_dichotomy(
    times: &[f64],
    unmodified: &[Vec<f64>],
    modified: &[Vec<f64>],
    drift: Option<&LinearFit<f64>>,
) -> String {
    let Some(&sigma) = times.last() else {
        return "indeterminate".to_string();
    };
    let near = windowed_max(times, unmodified, sigma, 2.0 * sigma);
    let far = windowed_max(times, unmodified, 2.0 * sigma, 4.0 * sigma);
    let shrinks = |near: Option<f64>, far: Option<f64>| match (near, far) {
        (Some(n), Some(f)) => n == 0.0 || f >= 2.0 * n,
        _ => false,
    };
    if shrinks(near, far) {
        return "subcritical".to_string();
    }
    let near_m = windowed_max(times, modified, sigma, 2.0 * sigma);
    let far_m = windowed_max(times, modified, 2.0 * sigma, 4.0 * sigma);
    let drifting = drift.is_some_and(|fit| fit.r_squared > 0.99 && fit.slope.abs() > 0.0);
    if drifting && shrinks(near_m, far_m) {
        return "critical".to_string();
    }
    "indeterminate".to_string()
}

/// Profile snapshots collected while integrating the final decade.
struct CauchyStore {
    indices: Vec<usize>,
    times: Vec<f64>,
    etas: Vec<OrbitalState<f64>>,
    eta_tildes: Vec<OrbitalState<f64>>,
}

/// Map a profile snapshot `η(s)` back to the physical frame at `t = 1/s`.
fn profile_to_kappa(eta: &OrbitalState<f64>) -> Result<OrbitalState<f64>> {
    let s = eta.time();
    let mut nu = eta.clone();
    for orbital in nu.orbitals_mut() {
        orbital.free_propagate(s)?;
    }
    let framed = FramedState::from_nu(nu)?;
    Ok(nu_to_kappa(&framed)?.into_state())
}

fn write_real_field(path: &Path, values: &[f64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

fn cauchy_csv(times: &[f64], table: &[Vec<f64>]) -> String {
    let mut out = String::from("s");
    for t in times {
        let _ = write!(out, ",{t}");
    }
    out.push('\n');
    for (i, row) in table.iter().enumerate() {
        let _ = write!(out, "{}", times[i]);
        for v in row {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

/// Execute a single run into `out_dir`.
pub fn run(config: &RunConfig, out_dir: &Path, threads: usize) -> Result<RunArtifacts> {
    config.validate()?;
    let snapshots_dir = out_dir.join("snapshots");
    std::fs::create_dir_all(&snapshots_dir)?;

    let manifest = Manifest::new(config.clone(), threads.max(1));
    std::fs::write(out_dir.join("manifest.toml"), manifest.to_toml_string())?;

    let grid = config.build_grid()?;
    let spec = config.potential_spec();
    let potential = Potential::new(Arc::clone(&grid), &spec)?;
    let law = config.frame_law();
    let compact = config.frame.kind != FrameKind::Fixed;
    let state_frame = if compact {
        StateFrame::Nu
    } else {
        StateFrame::Kappa
    };
    let m = config.initial.sobolev_m;

    let mut state = generate_initial_data(&grid, &config.initial_spec())?;
    let samples = config.sample_times();
    let mut tracker = BootstrapTracker::new(bootstrap_delta(grid.dim(), m));
    let mut series = DiagnosticsSeries::new();
    let mut accumulator = if config.diagnostics.scattering {
        Some(PhaseAccumulator::new(&state, &potential, law)?)
    } else {
        None
    };

    let cauchy_indices = if accumulator.is_some() {
        cauchy_sample_indices(&samples, MAX_CAUCHY_SNAPSHOTS)
    } else {
        Vec::new()
    };
    let mut cauchy = CauchyStore {
        indices: cauchy_indices,
        times: Vec::new(),
        etas: Vec::new(),
        eta_tildes: Vec::new(),
    };

    let every = config.output.checkpoint_every;
    let record_sample = |state: &OrbitalState<f64>,
                             k: usize,
                             series: &mut DiagnosticsSeries<f64>,
                             tracker: &mut BootstrapTracker<f64>,
                             accumulator: &Option<PhaseAccumulator<f64>>,
                             cauchy: &mut CauchyStore|
     -> Result<()> {
        let observables = observe(state, compact, m, tracker)?;
        let record = match accumulator {
            Some(acc) => DiagnosticsRecord::with_psi(observables, acc.psi_sup()),
            None => DiagnosticsRecord::new(observables),
        };
        series.push(record)?;
        if every > 0 && k % every == 0 {
            write_snapshot(
                &snapshots_dir.join(format!("state_{k:05}.snap")),
                state,
                state_frame,
            )?;
        }
        if let Some(acc) = accumulator {
            if cauchy.indices.contains(&k) {
                let eta = profile(state)?;
                let eta_tilde = modified_profile(&eta, acc.psi())?;
                cauchy.times.push(state.time());
                cauchy.etas.push(eta);
                cauchy.eta_tildes.push(eta_tilde);
            }
        }
        Ok(())
    };

    record_sample(
        &state,
        0,
        &mut series,
        &mut tracker,
        &accumulator,
        &mut cauchy,
    )?;

    // Main loop. The state at the last completed diagnostic barrier is kept
    // for the abort path.
    let mut last_good = state.clone();
    let mut failure: Option<Error> = None;
    'samples: for k in 1..samples.len() {
        let (a, b) = (samples[k - 1], samples[k]);
        let n = config.steps_for(a, b);
        let h = ((b - a) / n as f64).abs();
        let opts = EvolveOptions::new(h).with_frame(law);
        if let Some(acc) = accumulator.as_mut() {
            for i in 1..=n {
                let target = if i == n {
                    b
                } else {
                    a + (b - a) * (i as f64 / n as f64)
                };
                if let Err(e) = evolve_state(&mut state, &potential, target, &opts) {
                    failure = Some(e);
                    break 'samples;
                }
                if let Err(e) = acc.advance(&state, &potential) {
                    failure = Some(e);
                    break 'samples;
                }
            }
        } else if let Err(e) = evolve_state(&mut state, &potential, b, &opts) {
            failure = Some(e);
            break 'samples;
        }
        record_sample(
            &state,
            k,
            &mut series,
            &mut tracker,
            &accumulator,
            &mut cauchy,
        )?;
        last_good = state.clone();
    }

    if let Some(error) = failure {
        write_snapshot(
            &snapshots_dir.join("last_good.snap"),
            &last_good,
            state_frame,
        )?;
        std::fs::write(out_dir.join("diagnostics.csv"), series.to_csv())?;
        return Err(error);
    }

    std::fs::write(out_dir.join("diagnostics.csv"), series.to_csv())?;
    write_snapshot(&snapshots_dir.join("state_final.snap"), &state, state_frame)?;

    let window = fit_window_of(config);
    let decay_fits = compute_decay_fits(&series, window);
    std::fs::write(out_dir.join("fits.csv"), fits_csv(config, &decay_fits))?;

    let mut scatter = None;
    let mut dichotomy = None;
    if let Some(acc) = &accumulator {
        let scatter_dir = out_dir.join("scatter");
        std::fs::create_dir_all(&scatter_dir)?;

        let decomposition = acc.decompose(&state, &potential)?;
        let eta_final = profile(&state)?;
        let eta_tilde_final = modified_profile(&eta_final, acc.psi())?;
        let kappa_grid = grid.reciprocal()?;
        let kappa_inf =
            reconstruct_scattering_data(&eta_tilde_final, &decomposition.psi_r, &kappa_grid)?;

        let (cauchy_unmodified, cauchy_modified) = if cauchy.etas.len() >= 3 {
            (cauchy_table(&cauchy.etas)?, cauchy_table(&cauchy.eta_tildes)?)
        } else {
            (Vec::new(), Vec::new())
        };
        let drift = if cauchy.etas.len() >= 2 {
            Some(phase_drift_series(&cauchy.etas)?)
        } else {
            None
        };
        let drift_fit = match &drift {
            Some(points) if points.len() >= 2 => linear_fit(points).ok(),
            _ => None,
        };

        // Convergence of the physical state toward the modified free
        // evolution of the scattering datum, measured at the stored
        // snapshot times (excluding the extraction time itself).
        let mut convergence_points = Vec::new();
        for (i, eta) in cauchy.etas.iter().enumerate() {
            let s_i = cauchy.times[i];
            if s_i <= decomposition.s_ref * (1.0 + 1e-12) {
                continue;
            }
            let kappa_i = profile_to_kappa(eta)?;
            let err = kappa_scatter_error(&kappa_i, &kappa_inf, &decomposition.g_inf)?;
            if err > 0.0 {
                convergence_points.push(((1.0 / s_i).ln(), err.ln()));
            }
        }
        let convergence_fit = if convergence_points.len() >= 2 {
            linear_fit(&convergence_points).ok()
        } else {
            None
        };

        let class = classify_dichotomy(
            &cauchy.times,
            &cauchy_unmodified,
            &cauchy_modified,
            drift_fit.as_ref(),
        );

        let report = ScatterReport {
            g_inf: decomposition.g_inf,
            psi_r_final: decomposition.psi_r,
            s_ref: decomposition.s_ref,
            cauchy_unmodified,
            cauchy_modified,
            decay_fits: decay_fits.clone(),
            convergence_fit,
            kappa_inf,
        };
        report.validate()?;

        write_real_field(&scatter_dir.join("g_inf.bin"), &report.g_inf)?;
        write_real_field(&scatter_dir.join("psi_r.bin"), &report.psi_r_final)?;
        write_snapshot(
            &scatter_dir.join("kappa_inf.snap"),
            &report.kappa_inf,
            StateFrame::Kappa,
        )?;
        for (i, &k) in cauchy.indices.iter().enumerate().take(cauchy.etas.len()) {
            write_snapshot(
                &scatter_dir.join(format!("eta_{k:05}.snap")),
                &cauchy.etas[i],
                StateFrame::Nu,
            )?;
            write_snapshot(
                &scatter_dir.join(format!("eta_tilde_{k:05}.snap")),
                &cauchy.eta_tildes[i],
                StateFrame::Nu,
            )?;
        }
        if !report.cauchy_unmodified.is_empty() {
            std::fs::write(
                scatter_dir.join("cauchy_unmodified.csv"),
                cauchy_csv(&cauchy.times, &report.cauchy_unmodified),
            )?;
            std::fs::write(
                scatter_dir.join("cauchy_modified.csv"),
                cauchy_csv(&cauchy.times, &report.cauchy_modified),
            )?;
        }
        if let Some(points) = &drift {
            crate::plot::write_xy_data(&scatter_dir.join("drift.dat"), points)?;
        }

        let g_sup = report.g_inf.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
        let psi_r_sup = report
            .psi_r_final
            .iter()
            .fold(0.0_f64, |a, &b| a.max(b.abs()));
        let mut rows: Vec<(String, String)> = vec![
            ("s_ref".into(), fmt_f64(report.s_ref)),
            ("g_inf_sup".into(), fmt_f64(g_sup)),
            ("psi_r_sup".into(), fmt_f64(psi_r_sup)),
            ("dichotomy".into(), class.clone()),
        ];
        if let Some(fit) = &drift_fit {
            rows.push(("drift_slope".into(), fmt_f64(fit.slope)));
            rows.push(("drift_r_squared".into(), fmt_f64(fit.r_squared)));
        }
        if let Some(fit) = &report.convergence_fit {
            rows.push(("convergence_slope".into(), fmt_f64(fit.slope)));
            rows.push(("convergence_r_squared".into(), fmt_f64(fit.r_squared)));
        }
        if !report.cauchy_unmodified.is_empty() {
            rows.push((
                "cauchy_unmodified_max".into(),
                fmt_f64(crate::scattering::max_pairwise(&report.cauchy_unmodified)),
            ));
            rows.push((
                "cauchy_modified_max".into(),
                fmt_f64(crate::scattering::max_pairwise(&report.cauchy_modified)),
            ));
        }
        let mut report_csv = String::from("name,value\n");
        for (name, value) in &rows {
            let _ = writeln!(report_csv, "{name},{value}");
        }
        std::fs::write(scatter_dir.join("report.csv"), report_csv)?;

        scatter = Some(report);
        dichotomy = Some(class);
    }

    Ok(RunArtifacts {
        out_dir: out_dir.to_path_buf(),
        series,
        decay_fits,
        scatter,
        dichotomy,
        final_state: state,
        state_frame,
    })
}

/// Rerun from a manifest (the determinism contract: the produced
/// `diagnostics.csv` is byte-identical to the original).
pub fn rerun_from_manifest(manifest_path: &Path, out_dir: &Path) -> Result<RunArtifacts> {
    let manifest = Manifest::load(manifest_path)?;
    run(&manifest.config, out_dir, manifest.invocation.threads)
}

/// Load a run configuration from either a plain configuration file or a
/// run manifest (recognized by its `[build]` and `[config]` tables).
/// Environment overrides apply in both cases.
pub fn load_run_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
        path: path.display().to_string(),
        detail: format!("cannot read configuration: {e}"),
    })?;
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config {
        path: path.display().to_string(),
        detail: e.message().to_string(),
    })?;
    if table.contains_key("build") && table.contains_key("config") {
        Ok(Manifest::load(path)?.config)
    } else {
        RunConfig::from_toml(&text, &path.display().to_string())
    }
}

/// What [`analyze`] computed and where it wrote its outputs.
#[derive(Debug, Clone)]
pub struct AnalyzeReport {
    pub analysis_dir: PathBuf,
    pub fit_window: Option<(f64, f64)>,
    pub fits: Vec<(DensityNorm, LinearFit<f64>)>,
    /// Times of the state snapshots that entered the recomputed tables.
    pub snapshot_times: Vec<f64>,
    pub cauchy_unmodified: Vec<Vec<f64>>,
    pub cauchy_modified: Vec<Vec<f64>>,
}

/// Sorted snapshot paths under `dir` whose file names start with `prefix`.
fn sorted_snapshots(dir: &Path, prefix: &str) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    if dir.is_dir() {
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            let name = path
                .file_name()
                .and_then(|n| n.to_str())
                .unwrap_or_default();
            if name.starts_with(prefix) && name.ends_with(".snap") {
                paths.push(path);
            }
        }
    }
    paths.sort();
    Ok(paths)
}

/// Recompute fits and Cauchy tables for a completed run directory.
///
/// Outputs go to `<run_dir>/analysis/`: `report.csv` (with the fit window
/// recorded in its header line), per-norm decay data and a combined decay
/// plot, the recomputed `cauchy_unmodified.csv` / `cauchy_modified.csv`,
/// and — when the diagnostics carry phase summaries — the accumulated
/// phase plot. Running it twice produces identical bytes.
pub fn analyze(run_dir: &Path) -> Result<AnalyzeReport> {
    let manifest = Manifest::load(&run_dir.join("manifest.toml"))?;
    let config = &manifest.config;
    let csv_text = std::fs::read_to_string(run_dir.join("diagnostics.csv"))?;
    let series = DiagnosticsSeries::from_csv(&csv_text)?;

    let analysis_dir = run_dir.join("analysis");
    std::fs::create_dir_all(&analysis_dir)?;

    let window = fit_window_of(config);
    let fits = compute_decay_fits(&series, window);
    std::fs::write(analysis_dir.join("report.csv"), fits_csv(config, &fits))?;

    // Decay data and plot in log-log coordinates of the run's own time.
    let mut decay_series = Vec::new();
    for p in FIT_NORMS {
        let points: Vec<(f64, f64)> = series
            .density_samples(p)
            .into_iter()
            .filter(|&(t, v)| t > 0.0 && v > 0.0)
            .map(|(t, v)| (t.ln(), v.ln()))
            .collect();
        crate::plot::write_xy_data(
            &analysis_dir.join(format!("decay_{}.dat", norm_name(p))),
            &points,
        )?;
        decay_series.push(crate::plot::PlotSeries::new(norm_name(p), points));
    }
    crate::plot::write_line_plot(
        &analysis_dir.join("decay.svg"),
        "density norms",
        "ln time",
        "ln value",
        &decay_series,
    )?;

    let psi_points: Vec<(f64, f64)> = series
        .records()
        .iter()
        .filter_map(|r| r.psi_linf.map(|p| ((1.0 / r.time()).ln(), p)))
        .collect();
    if !psi_points.is_empty() {
        crate::plot::write_xy_data(&analysis_dir.join("psi_sup.dat"), &psi_points)?;
        crate::plot::write_line_plot(
            &analysis_dir.join("psi_sup.svg"),
            "accumulated phase",
            "ln 1/time",
            "sup |Ψ|",
            &[crate::plot::PlotSeries::new("sup |Ψ|", psi_points)],
        )?;
    }

    // Profile Cauchy table from the stored state snapshots.
    let mut snapshot_times = Vec::new();
    let mut profiles = Vec::new();
    for path in sorted_snapshots(&run_dir.join("snapshots"), "state_")? {
        if path.file_name().is_some_and(|n| n == "last_good.snap") {
            continue;
        }
        let (state, _) = read_snapshot(&path)?;
        if snapshot_times.contains(&state.time()) {
            continue;
        }
        snapshot_times.push(state.time());
        profiles.push(profile(&state)?);
    }
    let cauchy_unmodified = if profiles.len() >= 3 {
        let table = cauchy_table(&profiles)?;
        std::fs::write(
            analysis_dir.join("cauchy_unmodified.csv"),
            cauchy_csv(&snapshot_times, &table),
        )?;
        table
    } else {
        Vec::new()
    };

    // Modified-profile table from the scatter snapshots, when present.
    let mut tilde_times = Vec::new();
    let mut tildes = Vec::new();
    for path in sorted_snapshots(&run_dir.join("scatter"), "eta_tilde_")? {
        let (state, _) = read_snapshot(&path)?;
        tilde_times.push(state.time());
        tildes.push(state);
    }
    let cauchy_modified = if tildes.len() >= 3 {
        let table = cauchy_table(&tildes)?;
        std::fs::write(
            analysis_dir.join("cauchy_modified.csv"),
            cauchy_csv(&tilde_times, &table),
        )?;
        table
    } else {
        Vec::new()
    };

    Ok(AnalyzeReport {
        analysis_dir,
        fit_window: window,
        fits,
        snapshot_times,
        cauchy_unmodified,
        cauchy_modified,
    })
}

/// Difference report between two run directories.
#[derive(Debug, Clone, Default)]
pub struct CompareReport {
    /// Dotted config keys whose values differ, with both values rendered.
    pub config_diffs: Vec<(String, String, String)>,
    /// Per-column maximum absolute difference over the shared records.
    pub column_diffs: Vec<(String, f64)>,
    /// Diagnostic record counts of the two runs.
    pub record_counts: (usize, usize),
    /// Hilbert–Schmidt distance of the final states, when comparable.
    pub final_state_distance: Option<f64>,
}

fn flatten_toml(prefix: &str, value: &toml::Value, out: &mut Vec<(String, String)>) {
    match value {
        toml::Value::Table(table) => {
            for (key, inner) in table {
                let path = if prefix.is_empty() {
                    key.clone()
                } else {
                    format!("{prefix}.{key}")
                };
                flatten_toml(&path, inner, out);
            }
        }
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

fn parse_csv_grid(text: &str) -> (Vec<String>, Vec<Vec<Option<f64>>>) {
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .unwrap_or_default()
        .split(',')
        .map(str::to_string)
        .collect();
    let rows = lines
        .map(|line| {
            line.split(',')
                .map(|cell| cell.parse::<f64>().ok())
                .collect()
        })
        .collect();
    (header, rows)
}

/// Compare two run directories and write `compare.csv` under `out_dir`.
pub fn compare(dir_a: &Path, dir_b: &Path, out_dir: &Path) -> Result<CompareReport> {
    let manifest_a = Manifest::load(&dir_a.join("manifest.toml"))?;
    let manifest_b = Manifest::load(&dir_b.join("manifest.toml"))?;
    let mut report = CompareReport::default();

    let mut flat_a = Vec::new();
    let mut flat_b = Vec::new();
    flatten_toml(
        "",
        &toml::Value::Table(
            toml::Table::try_from(&manifest_a.config).expect("config serializes"),
        ),
        &mut flat_a,
    );
    flatten_toml(
        "",
        &toml::Value::Table(
            toml::Table::try_from(&manifest_b.config).expect("config serializes"),
        ),
        &mut flat_b,
    );
    let map_b: std::collections::BTreeMap<_, _> = flat_b.iter().cloned().collect();
    let map_a: std::collections::BTreeMap<_, _> = flat_a.iter().cloned().collect();
    for (key, value_a) in &map_a {
        match map_b.get(key) {
            Some(value_b) if value_b == value_a => {}
            Some(value_b) => report
                .config_diffs
                .push((key.clone(), value_a.clone(), value_b.clone())),
            None => report
                .config_diffs
                .push((key.clone(), value_a.clone(), "<absent>".to_string())),
        }
    }
    for (key, value_b) in &map_b {
        if !map_a.contains_key(key) {
            report
                .config_diffs
                .push((key.clone(), "<absent>".to_string(), value_b.clone()));
        }
    }

    let text_a = std::fs::read_to_string(dir_a.join("diagnostics.csv"))?;
    let text_b = std::fs::read_to_string(dir_b.join("diagnostics.csv"))?;
    let (header_a, rows_a) = parse_csv_grid(&text_a);
    let (header_b, rows_b) = parse_csv_grid(&text_b);
    report.record_counts = (rows_a.len(), rows_b.len());
    if header_a == header_b {
        let shared = rows_a.len().min(rows_b.len());
        for (c, name) in header_a.iter().enumerate() {
            let mut max_diff = 0.0_f64;
            for r in 0..shared {
                if let (Some(Some(a)), Some(Some(b))) = (rows_a[r].get(c), rows_b[r].get(c)) {
                    max_diff = max_diff.max((a - b).abs());
                }
            }
            report.column_diffs.push((name.clone(), max_diff));
        }
    }

    let final_a = dir_a.join("snapshots/state_final.snap");
    let final_b = dir_b.join("snapshots/state_final.snap");
    if final_a.is_file() && final_b.is_file() {
        let (state_a, frame_a) = read_snapshot(&final_a)?;
        let (state_b, frame_b) = read_snapshot(&final_b)?;
        if frame_a == frame_b {
            report.final_state_distance = state_a.hs_distance(&state_b).ok();
        }
    }

    std::fs::create_dir_all(out_dir)?;
    let mut csv = String::from("kind,key,a,b,max_abs_diff\n");
    for (key, a, b) in &report.config_diffs {
        let clean = |s: &str| s.replace(',', ";");
        let _ = writeln!(csv, "config,{key},{},{},", clean(a), clean(b));
    }
    let _ = writeln!(
        csv,
        "records,count,{},{},",
        report.record_counts.0, report.record_counts.1
    );
    for (name, diff) in &report.column_diffs {
        let _ = writeln!(csv, "column,{name},,,{diff}");
    }
    if let Some(d) = report.final_state_distance {
        let _ = writeln!(csv, "snapshot,final_hs_distance,,,{d}");
    }
    std::fs::write(out_dir.join("compare.csv"), csv)?;
    Ok(report)
}

/// One row of the sweep summary.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub point: usize,
    pub dir: PathBuf,
    pub status: String,
    pub lambda: f64,
    pub mu: f64,
    pub alpha: f64,
    pub beta: f64,
    pub epsilon0: f64,
    pub n: usize,
    pub dt: Option<f64>,
    pub rho_slopes: [Option<f64>; 3],
    pub mass_drift: Option<f64>,
    pub psi_sup: Option<f64>,
    pub g_inf_sup: Option<f64>,
    pub dichotomy: Option<String>,
    pub observed_order: Option<f64>,
    pub error: Option<String>,
}

/// Outcome of a sweep: one row per Cartesian point plus the summary path.
#[derive(Debug, Clone)]
pub struct SweepSummary {
    pub rows: Vec<SweepRow>,
    pub csv_path: PathBuf,
}

const SWEEP_COLUMNS: &str = "point,status,lambda,mu,alpha,beta,epsilon0,n,dt,\
rho_linf_slope,rho_l2_slope,rho_l1_slope,mass_drift,psi_sup,g_inf_sup,\
dichotomy,observed_order,error";

fn sweep_row_csv(row: &SweepRow) -> String {
    let opt = |v: &Option<f64>| v.map(fmt_f64).unwrap_or_default();
    let mut line = format!(
        "{},{},{},{},{},{},{},{},{}",
        row.point,
        row.status,
        row.lambda,
        row.mu,
        row.alpha,
        row.beta,
        row.epsilon0,
        row.n,
        opt(&row.dt),
    );
    let _ = write!(
        line,
        ",{},{},{},{},{},{},{},{},{}",
        opt(&row.rho_slopes[0]),
        opt(&row.rho_slopes[1]),
        opt(&row.rho_slopes[2]),
        opt(&row.mass_drift),
        opt(&row.psi_sup),
        opt(&row.g_inf_sup),
        row.dichotomy.clone().unwrap_or_default(),
        opt(&row.observed_order),
        row.error
            .clone()
            .map(|e| e.replace(',', ";").replace('\n', " "))
            .unwrap_or_default()
    );
    line
}

/// Run the Cartesian sweep described by the `[sweep]` section.
///
/// Points are laid out as `point_XXXX/` under `out_root` in the fixed axis
/// order `lambda, mu, alpha, beta, epsilon0, n, dt` (last axis fastest).
/// Failures are recorded in the corresponding summary row and the sweep
/// continues. When the `dt` axis has three or more values, the summary's
/// `observed_order` column reports the step-size convergence order from
/// distances between final states at consecutive `dt` (groups share all
/// other axis values; the two finest points have no entry).
pub fn sweep(config: &RunConfig, out_root: &Path, threads: usize) -> Result<SweepSummary> {
    config.validate()?;
    let Some(section) = &config.sweep else {
        return Err(Error::Config {
            path: "sweep".to_string(),
            detail: "the sweep subcommand requires a [sweep] section".to_string(),
        });
    };
    std::fs::create_dir_all(out_root)?;

    let axis = |values: &[f64], base: f64| -> Vec<f64> {
        if values.is_empty() {
            vec![base]
        } else {
            values.to_vec()
        }
    };
    let lambdas = axis(&section.lambda, config.potential.lambda);
    let mus = axis(&section.mu, config.potential.mu);
    let alphas = axis(&section.alpha, config.potential.alpha);
    let betas = axis(&section.beta, config.potential.beta);
    let epsilons = axis(&section.epsilon0, config.initial.epsilon0);
    let ns: Vec<usize> = if section.n.is_empty() {
        vec![config.grid.n]
    } else {
        section.n.clone()
    };
    let dts: Vec<Option<f64>> = if section.dt.is_empty() {
        vec![None]
    } else {
        section.dt.iter().copied().map(Some).collect()
    };

    let mut rows = Vec::new();
    let mut final_states: Vec<Option<OrbitalState<f64>>> = Vec::new();
    let mut point = 0usize;
    for &lambda in &lambdas {
        for &mu in &mus {
            for &alpha in &alphas {
                for &beta in &betas {
                    for &epsilon0 in &epsilons {
                        for &n in &ns {
                            for &dt in &dts {
                                let dir = out_root.join(format!("point_{point:04}"));
                                let mut point_config = config.clone();
                                point_config.sweep = None;
                                point_config.potential.lambda = lambda;
                                point_config.potential.mu = mu;
                                point_config.potential.alpha = alpha;
                                point_config.potential.beta = beta;
                                point_config.initial.epsilon0 = epsilon0;
                                point_config.grid.n = n;
                                if let Some(dt) = dt {
                                    point_config.time.dt = Some(dt);
                                }
                                let effective_dt = point_config.time.dt;

                                let outcome = point_config
                                    .validate()
                                    .and_then(|()| run(&point_config, &dir, threads));
                                let mut row = SweepRow {
                                    point,
                                    dir,
                                    status: "ok".to_string(),
                                    lambda,
                                    mu,
                                    alpha,
                                    beta,
                                    epsilon0,
                                    n,
                                    dt: effective_dt,
                                    rho_slopes: [None, None, None],
                                    mass_drift: None,
                                    psi_sup: None,
                                    g_inf_sup: None,
                                    dichotomy: None,
                                    observed_order: None,
                                    error: None,
                                };
                                match outcome {
                                    Ok(artifacts) => {
                                        for (p, fit) in &artifacts.decay_fits {
                                            let slot = match p {
                                                DensityNorm::LInf => 0,
                                                DensityNorm::L2 => 1,
                                                DensityNorm::L1 => 2,
                                            };
                                            row.rho_slopes[slot] = Some(fit.slope);
                                        }
                                        row.mass_drift = Some(artifacts.mass_drift());
                                        row.psi_sup = artifacts
                                            .series
                                            .last()
                                            .and_then(|r| r.psi_linf);
                                        row.g_inf_sup = artifacts.scatter.as_ref().map(|s| {
                                            s.g_inf.iter().fold(0.0_f64, |a, &b| a.max(b.abs()))
                                        });
                                        row.dichotomy = artifacts.dichotomy.clone();
                                        final_states.push(Some(artifacts.final_state));
                                    }
                                    Err(e) => {
                                        row.status = "failed".to_string();
                                        row.error = Some(e.to_string());
                                        final_states.push(None);
                                    }
                                }
                                rows.push(row);
                                point += 1;
                            }
                        }
                    }
                }
            }
        }
    }

    // Observed step-size order per consecutive dt pair within each group of
    // points sharing all other axis values.
    if dts.len() >= 3 {
        let group_count = rows.len() / dts.len();
        for g in 0..group_count {
            let base = g * dts.len();
            if rows[base..base + dts.len()].iter().any(|r| r.status != "ok") {
                continue;
            }
            let group_dts: Vec<f64> = rows[base..base + dts.len()]
                .iter()
                .map(|r| r.dt.expect("swept dt"))
                .collect();
            let mut idx: Vec<usize> = (0..dts.len()).collect();
            idx.sort_by(|&a, &b| group_dts[b].partial_cmp(&group_dts[a]).expect("finite dt"));
            let mut gaps = Vec::new();
            for w in idx.windows(2) {
                let (coarse, fine) = (base + w[0], base + w[1]);
                match (&final_states[coarse], &final_states[fine]) {
                    (Some(u), Some(v)) => gaps.push(u.hs_distance(v).ok()),
                    _ => gaps.push(None),
                }
            }
            for w in 0..gaps.len().saturating_sub(1) {
                let (Some(d0), Some(d1)) = (gaps[w], gaps[w + 1]) else {
                    continue;
                };
                let dt0 = group_dts[idx[w]];
                let dt1 = group_dts[idx[w + 1]];
                if d0 > 0.0 && d1 > 0.0 && dt0 != dt1 {
                    let order = (d0 / d1).ln() / (dt0 / dt1).ln();
                    rows[base + idx[w]].observed_order = Some(order);
                }
            }
        }
    }

    let mut csv = String::from(SWEEP_COLUMNS);
    csv.push('\n');
    for row in &rows {
        csv.push_str(&sweep_row_csv(row));
        csv.push('\n');
    }
    let csv_path = out_root.join("summary.csv");
    std::fs::write(&csv_path, csv)?;
    Ok(SweepSummary { rows, csv_path })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Preset;

    /// A nonlinear compact-frame run small enough for unit tests:
    /// one-dimensional critical exchange coupling.
    fn tiny_scattering_config() -> RunConfig {
        let text = r#"
            [grid]
            dim = 1
            n = 64
            length = 24.0

            [potential]
            lambda = 0.0
            alpha = 0.5
            mu = 3.0
            beta = 1.0

            [frame]
            kind = "compact-critical"
            start = 1.0
            end = 0.04

            [time]
            policy = "fixed"
            dt = 0.002

            [initial]
            rank = 1
            seed = 5
            epsilon0 = 0.8
            sobolev_m = 1.0

            [diagnostics]
            samples = 25
            scattering = true

            [output]
            checkpoint_every = 4
        "#;
        RunConfig::from_toml(text, "<test>").unwrap()
    }

    fn tiny_free_config() -> RunConfig {
        let mut config = Preset::Free.config();
        config.grid.n = 32;
        config.grid.length = 24.0;
        config.frame.end = 2.0;
        config.time.dt = Some(0.05);
        config.diagnostics.samples = 9;
        config
    }

    #[test]
    fn free_run_conserves_mass_and_reruns_identically() {
        let dir = tempfile::tempdir().unwrap();
        let out_a = dir.path().join("a");
        let config = tiny_free_config();
        let artifacts = run(&config, &out_a, 1).unwrap();

        let mass0 = artifacts.series.records()[0].observables.rho_l1;
        for record in artifacts.series.records() {
            assert!(
                (record.observables.rho_l1 - mass0).abs() <= 1e-10 * mass0,
                "mass drifted: {} vs {}",
                record.observables.rho_l1,
                mass0
            );
        }

        let out_b = dir.path().join("b");
        run(&config, &out_b, 1).unwrap();
        let csv_a = std::fs::read(out_a.join("diagnostics.csv")).unwrap();
        let csv_b = std::fs::read(out_b.join("diagnostics.csv")).unwrap();
        assert_eq!(csv_a, csv_b, "rerun must reproduce diagnostics bytes");

        let out_c = dir.path().join("c");
        rerun_from_manifest(&out_a.join("manifest.toml"), &out_c).unwrap();
        let csv_c = std::fs::read(out_c.join("diagnostics.csv")).unwrap();
        assert_eq!(csv_a, csv_c, "manifest rerun must reproduce diagnostics");

        assert!(out_a.join("fits.csv").is_file());
        assert!(out_a.join("snapshots/state_final.snap").is_file());
        assert!(out_a.join("snapshots/state_00000.snap").is_file());
    }

    #[test]
    fn scattering_run_emits_the_report_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let config = tiny_scattering_config();
        let artifacts = run(&config, &out, 1).unwrap();

        let report = artifacts.scatter.as_ref().expect("scatter report");
        let volume = config.grid.n;
        assert_eq!(report.g_inf.len(), volume);
        assert_eq!(
            std::fs::metadata(out.join("scatter/g_inf.bin")).unwrap().len(),
            (volume * 8) as u64
        );
        assert!(out.join("scatter/report.csv").is_file());
        assert!(out.join("scatter/kappa_inf.snap").is_file());
        assert!(out.join("scatter/cauchy_unmodified.csv").is_file());
        assert!(out.join("scatter/cauchy_modified.csv").is_file());
        assert!(out.join("scatter/drift.dat").is_file());
        assert!(artifacts.dichotomy.is_some());

        // Phase summaries must be present and non-decreasing backwards in s.
        let psi: Vec<f64> = artifacts
            .series
            .records()
            .iter()
            .map(|r| r.psi_linf.expect("psi recorded"))
            .collect();
        assert_eq!(psi[0], 0.0);
        for w in psi.windows(2) {
            assert!(w[1] >= w[0]);
        }

        // The modified profile stays Cauchy: its table maximum is no larger
        // than the unmodified one.
        let u = crate::scattering::max_pairwise(&report.cauchy_unmodified);
        let m = crate::scattering::max_pairwise(&report.cauchy_modified);
        assert!(m <= u + 1e-12, "modified {m} vs unmodified {u}");
    }

    #[test]
    fn abort_dumps_the_last_good_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let mut config = tiny_scattering_config();
        // A coupling so large the step-size phase guard must trip on the
        // very first chunk.
        config.potential.mu = 50_000.0;
        config.diagnostics.scattering = false;
        let err = run(&config, &out, 1).unwrap_err();
        assert_eq!(err.exit_code(), 3, "expected a numeric abort, got {err}");
        assert!(out.join("snapshots/last_good.snap").is_file());
        let (state, _) = read_snapshot(&out.join("snapshots/last_good.snap")).unwrap();
        assert_eq!(state.time(), 1.0, "initial state is the last good one");
        assert!(out.join("diagnostics.csv").is_file());
    }

    #[test]
    fn analyze_matches_in_run_fits_and_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let config = tiny_scattering_config();
        run(&config, &out, 1).unwrap();

        let report = analyze(&out).unwrap();
        let in_run = std::fs::read_to_string(out.join("fits.csv")).unwrap();
        let recomputed = std::fs::read_to_string(out.join("analysis/report.csv")).unwrap();
        assert_eq!(in_run, recomputed, "analyze must reproduce the in-run fits");
        assert!(!report.cauchy_unmodified.is_empty());
        assert!(!report.cauchy_modified.is_empty());
        assert!(out.join("analysis/decay.svg").is_file());
        assert!(out.join("analysis/psi_sup.dat").is_file());

        let first = std::fs::read(out.join("analysis/report.csv")).unwrap();
        analyze(&out).unwrap();
        let second = std::fs::read(out.join("analysis/report.csv")).unwrap();
        assert_eq!(first, second, "analyze must be idempotent");
    }

    #[test]
    fn analyze_reports_corrupted_snapshots() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        run(&tiny_scattering_config(), &out, 1).unwrap();

        let victim = out.join("snapshots/state_00000.snap");
        let mut bytes = std::fs::read(&victim).unwrap();
        bytes[2] = b'!';
        std::fs::write(&victim, &bytes).unwrap();
        match analyze(&out) {
            Err(Error::MissingSnapshot { path, .. }) => assert_eq!(path, victim),
            other => panic!("expected MissingSnapshot, got {other:?}"),
        }
    }

    #[test]
    fn compare_reports_config_and_data_differences() {
        let dir = tempfile::tempdir().unwrap();
        let out_a = dir.path().join("a");
        let out_b = dir.path().join("b");
        let mut config_a = tiny_scattering_config();
        config_a.diagnostics.scattering = false;
        config_a.frame.end = 0.5;
        config_a.diagnostics.samples = 6;
        let mut config_b = config_a.clone();
        config_b.time.dt = Some(0.004);
        run(&config_a, &out_a, 1).unwrap();
        run(&config_b, &out_b, 1).unwrap();

        let cmp_dir = dir.path().join("cmp");
        let report = compare(&out_a, &out_b, &cmp_dir).unwrap();
        assert_eq!(report.config_diffs.len(), 1);
        assert_eq!(report.config_diffs[0].0, "time.dt");
        assert!(report
            .column_diffs
            .iter()
            .any(|(name, diff)| name == "rho_linf" && *diff > 0.0));
        let distance = report.final_state_distance.expect("comparable finals");
        assert!(distance > 0.0);
        assert!(cmp_dir.join("compare.csv").is_file());

        // Identical runs: everything must agree exactly.
        let out_c = dir.path().join("c");
        run(&config_a, &out_c, 1).unwrap();
        let report = compare(&out_a, &out_c, &cmp_dir).unwrap();
        assert!(report.config_diffs.is_empty());
        assert!(report.column_diffs.iter().all(|(_, d)| *d == 0.0));
        assert_eq!(report.final_state_distance, Some(0.0));
    }

    #[test]
    fn sweep_records_failures_and_step_order() {
        use crate::config::SweepSection;

        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("sweep");
        let mut config = tiny_scattering_config();
        config.frame.end = 0.5;
        config.diagnostics.samples = 6;
        config.diagnostics.scattering = false;
        config.output.checkpoint_every = 0;
        config.sweep = Some(SweepSection {
            epsilon0: vec![0.8, 1.0e9],
            dt: vec![0.02, 0.01, 0.005],
            ..SweepSection::default()
        });
        let summary = sweep(&config, &out, 1).unwrap();
        assert_eq!(summary.rows.len(), 6);
        assert!(summary.csv_path.is_file());

        // The absurd amplitude trips the step-size guard in every one of
        // its three points; the sane group still runs.
        let failed = summary.rows.iter().filter(|r| r.status == "failed").count();
        assert_eq!(failed, 3);
        let ok = summary.rows.iter().filter(|r| r.status == "ok").count();
        assert_eq!(ok, 3);
        assert!(summary.rows[3].error.is_some());

        // Observed order from the sane dt triple: the coarsest point gets
        // the entry, and second-order splitting should land near 2.
        let order = summary.rows[0]
            .observed_order
            .expect("coarsest point carries the order");
        assert!(
            (1.5..=2.5).contains(&order),
            "observed order {order} is far from 2"
        );
        assert!(summary.rows[1].observed_order.is_none());
        assert!(summary.rows[2].observed_order.is_none());

        let text = std::fs::read_to_string(&summary.csv_path).unwrap();
        assert!(text.starts_with("point,status,lambda"));
        assert_eq!(text.lines().count(), 7);
    }

    #[test]
    fn cauchy_index_selection_is_bounded_and_keeps_endpoints() {
        let times: Vec<f64> = (0..40).map(|k| 1.0 * 0.9_f64.powi(k)).collect();
        let picked = cauchy_sample_indices(&times, 12);
        assert!(picked.len() <= 12);
        assert_eq!(*picked.last().unwrap(), 39);
        let cutoff = times[39] * 10.0;
        for &k in &picked {
            assert!(times[k] <= cutoff * (1.0 + 1e-9));
        }
    }
}
