//! Seeded Monte Carlo trials and sweeps.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use crate::anm::{regularization_weight, solve_anm, SolverOptions};
use crate::aoa::{estimate_aoa, AoaEstimate};
use crate::config::{Estimator, ExperimentConfig};
use crate::crlb::{fim_position, PebReport};
use crate::error::{Error, Result};
use crate::geometry::{angles_between, AnglePair, FacingSide, Position3};
use crate::locator::{ls_intersection_weighted, ml_refine, MlOptions, MlProblem};
use crate::scalar::CMatrix;
use crate::sounding::{scene_schedules, simulate_sounding, ProfileSchedule, SceneConfig};
use crate::zf::{balance_report, build_bs_response_matrix, separate, zf_weights};

/// CSV header, in column order.
pub const CSV_HEADER: &str =
    "sweep_variable,sweep_value,trials,failures,rmse_m,rmse_x_m,rmse_y_m,rmse_z_m,peb_m,mean_angle_err_rad,wall_time_s";

/// Seed of trial `trial` at sweep point `point`.
pub fn trial_seed(master: u64, point: u64, trial: u64) -> u64 {
    fn splitmix(mut x: u64) -> u64 {
        x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
        x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        x ^ (x >> 31)
    }
    splitmix(splitmix(splitmix(master) ^ point) ^ trial)
}

/// Everything a trial needs that does not depend on the noise draw.
#[derive(Debug, Clone)]
pub struct OperatingPoint {
    pub scene: SceneConfig<f64>,
    pub schedules: Vec<ProfileSchedule<f64>>,
    pub combiner: CMatrix<f64>,
    aods: Vec<AnglePair<f64>>,
    sides: Vec<FacingSide>,
    mus: Vec<f64>,
    pub solver: SolverOptions<f64>,
    pub estimator: Estimator,
}

impl OperatingPoint {
    pub fn new(
        scene: SceneConfig<f64>,
        solver: SolverOptions<f64>,
        mu_scale: f64,
        estimator: Estimator,
    ) -> Result<Self> {
        scene.validate()?;
        let schedules = scene_schedules(&scene);
        let combiner = zf_weights(&build_bs_response_matrix(&scene)?)?;
        let mut aods = Vec::new();
        let mut sides = Vec::new();
        let mut mus = Vec::new();
        for (m, r) in scene.ris.iter().enumerate() {
            aods.push(angles_between(&r.position, &scene.bs_position)?);
            sides.push(scene.facing_side(m)?);
            mus.push(regularization_weight(
                scene.radio.noise_var,
                combiner.column(m).norm(),
                r.layout.len(),
                mu_scale,
            )?);
        }
        Ok(Self {
            scene,
            schedules,
            combiner,
            aods,
            sides,
            mus,
            solver,
            estimator,
        })
    }

    /// `max ||w_m|| / min ||w_m||` of the ZF combiners.
    pub fn balance_ratio(&self) -> f64 {
        balance_report(&self.combiner).ratio
    }

    /// Position error bound at this point, if the FIM is invertible.
    pub fn peb(&self) -> Result<PebReport<f64>> {
        fim_position(&self.scene, &self.schedules)
    }

    /// Simulate and localize once with noise seed `seed`.
    pub fn run_trial(&self, seed: u64) -> Result<TrialRecord> {
        let scene = &self.scene;
        let record = simulate_sounding(scene, &self.schedules, seed)?;
        let separated = separate(&record, &self.combiner, scene.radio.noise_var)?;
        let mut aoa = Vec::with_capacity(separated.len());
        let mut anm_iterations = Vec::with_capacity(separated.len());
        for (m, obs) in separated.iter().enumerate() {
            let layout = &scene.ris[m].layout;
            let sol = solve_anm(
                &obs.z,
                &self.schedules[m].omega,
                scene.radio.tx_power,
                self.mus[m],
                (layout.n_first, layout.n_second),
                &self.solver,
            )?;
            if !sol.converged {
                log::debug!(
                    "ANM for RIS {m} stopped after {} iterations without converging",
                    sol.iterations
                );
            }
            anm_iterations.push(sol.iterations);
            aoa.push(estimate_aoa(&sol, &self.aods[m], layout, self.sides[m])?);
        }
        let lines: Vec<_> = aoa
            .iter()
            .zip(&scene.ris)
            .map(|(a, r)| (a.angles, r.position))
            .collect();
        let fix = ls_intersection_weighted(&lines, None)?;
        let p_ml = match self.estimator {
            Estimator::Ls => None,
            Estimator::Ml => {
                let problem = MlProblem::new(scene, &separated, &self.schedules)?;
                Some(ml_refine(&fix.position, &problem, &MlOptions::default())?.position)
            }
        };
        let angle_errors = aoa
            .iter()
            .zip(&record.truth)
            .map(|(a, t)| a.angles.distance(&t.ris_aoa))
            .collect();
        Ok(TrialRecord {
            seed,
            p_ls: fix.position,
            p_ml,
            aoa,
            angle_errors,
            condition_number: fix.condition_number,
            anm_iterations,
        })
    }
}

/// Outcome of one trial.
#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub seed: u64,
    pub p_ls: Position3<f64>,
    pub p_ml: Option<Position3<f64>>,
    pub aoa: Vec<AoaEstimate<f64>>,
    /// Angular distance of each RIS estimate from the truth, radians.
    pub angle_errors: Vec<f64>,
    pub condition_number: f64,
    pub anm_iterations: Vec<usize>,
}

impl TrialRecord {
    /// The estimate selected by `estimator` (ML falls back to LS when absent).
    pub fn estimate(&self, estimator: Estimator) -> Position3<f64> {
        match estimator {
            Estimator::Ml => self.p_ml.unwrap_or(self.p_ls),
            Estimator::Ls => self.p_ls,
        }
    }
}

/// One sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub sweep_variable: String,
    pub sweep_value: f64,
    pub trials: usize,
    pub failures: usize,
    pub rmse_m: Option<f64>,
    pub rmse_axes_m: Option<[f64; 3]>,
    pub peb_m: Option<f64>,
    pub mean_angle_err_rad: Option<f64>,
    /// Mean angle error of each RIS over successful trials.
    pub angle_err_per_ris: Vec<f64>,
    pub wall_time_s: f64,
}

impl ResultRow {
    pub fn trials_used(&self) -> usize {
        self.trials - self.failures
    }

    pub fn to_csv_line(&self) -> String {
        fn opt(v: Option<f64>) -> String {
            v.map(|x| format!("{x:e}")).unwrap_or_default()
        }
        let axes = self.rmse_axes_m.map(|a| a.map(Some)).unwrap_or([None; 3]);
        format!(
            "{},{},{},{},{},{},{},{},{},{},{:.3}",
            self.sweep_variable,
            self.sweep_value,
            self.trials,
            self.failures,
            opt(self.rmse_m),
            opt(axes[0]),
            opt(axes[1]),
            opt(axes[2]),
            opt(self.peb_m),
            opt(self.mean_angle_err_rad),
            self.wall_time_s
        )
    }
}

/// Summary statistics of a batch of trials at one operating point.
pub fn summarize(
    sweep_variable: &str,
    sweep_value: f64,
    truth: &Position3<f64>,
    results: &[Result<TrialRecord>],
    estimator: Estimator,
    peb: Option<f64>,
    wall_time_s: f64,
) -> ResultRow {
    let ok: Vec<&TrialRecord> = results.iter().filter_map(|r| r.as_ref().ok()).collect();
    let n = ok.len();
    let (mut rmse_m, mut rmse_axes_m, mut mean_angle_err_rad) = (None, None, None);
    let mut angle_err_per_ris = Vec::new();
    if n > 0 {
        let mut sq = [0.0; 3];
        for r in &ok {
            let d = r.estimate(estimator).to_vector() - truth.to_vector();
            for i in 0..3 {
                sq[i] += d[i] * d[i];
            }
        }
        let axes = sq.map(|s| (s / n as f64).sqrt());
        rmse_m = Some(((sq[0] + sq[1] + sq[2]) / n as f64).sqrt());
        rmse_axes_m = Some(axes);
        let m = ok[0].angle_errors.len();
        angle_err_per_ris = (0..m)
            .map(|k| ok.iter().map(|r| r.angle_errors[k]).sum::<f64>() / n as f64)
            .collect();
        mean_angle_err_rad = Some(angle_err_per_ris.iter().sum::<f64>() / m as f64);
    }
    ResultRow {
        sweep_variable: sweep_variable.to_string(),
        sweep_value,
        trials: results.len(),
        failures: results.len() - n,
        rmse_m,
        rmse_axes_m,
        peb_m: peb,
        mean_angle_err_rad,
        angle_err_per_ris,
        wall_time_s,
    }
}

/// Operating point of sweep value `index` of `config`.
pub fn operating_point(config: &ExperimentConfig, index: usize) -> Result<OperatingPoint> {
    let value = *config
        .values
        .get(index)
        .ok_or_else(|| Error::InvalidInput(format!("sweep index {index} out of range")))?;
    let point = OperatingPoint::new(
        config.scene_for(value)?,
        config.solver.clone(),
        config.mu_scale,
        config.estimator,
    )?;
    let ratio = point.balance_ratio();
    if ratio > config.balance_warn_ratio {
        log::warn!(
            "{} = {value}: ZF combiner norms spread by {ratio:.1}x; weak RIS paths will be noise-dominated",
            config.sweep_variable.name()
        );
    }
    Ok(point)
}

/// Trial `trial` at sweep index `index`; deterministic in `(seed, index, trial)`.
pub fn run_single_trial(config: &ExperimentConfig, index: usize, trial: usize) -> Result<TrialRecord> {
    operating_point(config, index)?.run_trial(trial_seed(config.seed, index as u64, trial as u64))
}

/// Run `trials` trials at one point; results are in trial order.
pub fn run_point(point: &OperatingPoint, master_seed: u64, index: usize, trials: usize) -> Vec<Result<TrialRecord>> {
    (0..trials)
        .into_par_iter()
        .map(|t| point.run_trial(trial_seed(master_seed, index as u64, t as u64)))
        .collect()
}

/// Run the whole sweep of `config`, one row per value.
pub fn run_sweep(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let work = || -> Result<Vec<ResultRow>> {
        let mut rows = Vec::with_capacity(config.values.len());
        for (i, &value) in config.values.iter().enumerate() {
            let start = Instant::now();
            let point = match operating_point(config, i) {
                Ok(p) => p,
                Err(e @ Error::Config(_)) => return Err(e),
                Err(e) => {
                    log::warn!("{} = {value}: {e}", config.sweep_variable.name());
                    let results = vec![Err(e); config.trials];
                    rows.push(summarize(
                        config.sweep_variable.name(),
                        value,
                        &config.scene.ue_position,
                        &results,
                        config.estimator,
                        None,
                        start.elapsed().as_secs_f64(),
                    ));
                    continue;
                }
            };
            let results = run_point(&point, config.seed, i, config.trials);
            for (t, r) in results.iter().enumerate() {
                if let Err(e) = r {
                    log::debug!("{} = {value}, trial {t}: {e}", config.sweep_variable.name());
                }
            }
            let peb = point.peb().ok().map(|r| r.peb);
            let row = summarize(
                config.sweep_variable.name(),
                value,
                &point.scene.ue_position,
                &results,
                config.estimator,
                peb,
                start.elapsed().as_secs_f64(),
            );
            log::info!(
                "{} = {value}: rmse {:?} m, peb {:?} m, {} failures",
                config.sweep_variable.name(),
                row.rmse_m,
                row.peb_m,
                row.failures
            );
            rows.push(row);
        }
        Ok(rows)
    };
    match config.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?
            .install(work),
        None => work(),
    }
}

/// PEB-only rows (no Monte Carlo), one per sweep value.
pub fn peb_sweep(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    config
        .values
        .iter()
        .enumerate()
        .map(|(i, &value)| {
            let start = Instant::now();
            let point = operating_point(config, i)?;
            let peb = point.peb()?.peb;
            Ok(ResultRow {
                sweep_variable: config.sweep_variable.name().to_string(),
                sweep_value: value,
                trials: 0,
                failures: 0,
                rmse_m: None,
                rmse_axes_m: None,
                peb_m: Some(peb),
                mean_angle_err_rad: None,
                angle_err_per_ris: vec![],
                wall_time_s: start.elapsed().as_secs_f64(),
            })
        })
        .collect()
}

/// Write rows as CSV with the fixed header.
pub fn write_csv<W: Write>(mut out: W, rows: &[ResultRow]) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", r.to_csv_line())?;
    }
    Ok(())
}

pub fn write_csv_file(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    write_csv(std::io::BufWriter::new(f), rows)
}
