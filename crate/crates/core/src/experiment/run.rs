use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use crate::block::{MeshEngine, MeshOptions, PartitionPlan};
use crate::error::Result;
use crate::solver::{fit, fit_with_engine, restart_seed, FitResult, SolverConfig};
use crate::tensor::{rfe, TensorData};

use super::als::als_baseline;
use super::config::{EngineChoice, ExperimentSpec};
use super::generate::generate;

/// Outcome of one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub realization: usize,
    pub rfe: f64,
    /// `‖E‖_F / ‖X‖_F` of the generated noise.
    pub noise_rfe: f64,
    pub wall_time: f64,
    pub iterations: usize,
    pub restarts: usize,
    pub converged: bool,
    /// Per-iteration RFE of the returned attempt, when requested.
    pub trajectory: Vec<f64>,
}

/// Aggregates over all realizations.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub realizations: usize,
    pub mean_rfe: f64,
    pub std_rfe: f64,
    pub mean_time: f64,
    pub std_time: f64,
    pub mean_iterations: f64,
    pub mean_restarts: f64,
    pub converged: usize,
}

fn mean_std(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let var = if n > 1.0 { xs.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

impl Summary {
    pub fn of(records: &[RunRecord]) -> Self {
        let (mean_rfe, std_rfe) = mean_std(records.iter().map(|r| r.rfe));
        let (mean_time, std_time) = mean_std(records.iter().map(|r| r.wall_time));
        let (mean_iterations, _) = mean_std(records.iter().map(|r| r.iterations as f64));
        let (mean_restarts, _) = mean_std(records.iter().map(|r| r.restarts as f64));
        Self {
            realizations: records.len(),
            mean_rfe,
            std_rfe,
            mean_time,
            std_time,
            mean_iterations,
            mean_restarts,
            converged: records.iter().filter(|r| r.converged).count(),
        }
    }
}

/// Seeds of realization `r`: one for the data, one for the solver.
pub fn realization_seeds(seed: u64, r: usize) -> (u64, u64) {
    (restart_seed(seed, 2 * r + 1), restart_seed(seed, 2 * r + 2))
}

fn solve(spec: &ExperimentSpec, t: &crate::DenseTensor, solver: &SolverConfig) -> Result<FitResult> {
    match spec.engine {
        EngineChoice::Centralized => fit(t, spec.fit_rank, &spec.constraints, solver),
        EngineChoice::Als => als_baseline(t, spec.fit_rank, solver),
        EngineChoice::Mesh(n) => {
            let plan = PartitionPlan::even(t.dims(), n)?;
            let mut engine = MeshEngine::new(t, spec.fit_rank, &spec.constraints, solver, &plan, MeshOptions::default())?;
            fit_with_engine(&mut engine, t, spec.fit_rank, &spec.constraints, solver, |_, _| {})
        }
    }
}

/// Runs realization `r` of `spec`.
pub fn run_realization(spec: &ExperimentSpec, r: usize) -> Result<RunRecord> {
    let (data_seed, solver_seed) = realization_seeds(spec.solver.seed, r);
    let (t, truth) = generate(&spec.dims, spec.rank, spec.sigma2, data_seed)?;
    let noise_rfe = rfe(&t, &truth)?;
    let solver = SolverConfig { seed: solver_seed, record_rfe: spec.trajectories || spec.solver.record_rfe, ..spec.solver.clone() };
    let start = Instant::now();
    let result = solve(spec, &t, &solver)?;
    let wall_time = start.elapsed().as_secs_f64();
    Ok(RunRecord {
        realization: r,
        rfe: t.rfe(&result.model)?,
        noise_rfe,
        wall_time,
        iterations: result.iterations,
        restarts: result.restarts,
        converged: result.converged,
        trajectory: result.rfe_history,
    })
}

/// Runs every realization, in parallel on the current rayon pool. Records
/// come back ordered by realization index.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<RunRecord>> {
    spec.validate()?;
    (0..spec.realizations).into_par_iter().map(|r| run_realization(spec, r)).collect()
}

/// Per-realization CSV; contains no timing so that it is reproducible.
pub fn write_records<W: Write>(out: W, records: &[RunRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["realization", "rfe", "noise_rfe", "iterations", "restarts", "converged"])?;
    for r in records {
        w.write_record([
            r.realization.to_string(),
            r.rfe.to_string(),
            r.noise_rfe.to_string(),
            r.iterations.to_string(),
            r.restarts.to_string(),
            r.converged.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_timings<W: Write>(out: W, records: &[RunRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["realization", "wall_time_s"])?;
    for r in records {
        w.write_record([r.realization.to_string(), r.wall_time.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trajectories<W: Write>(out: W, records: &[RunRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["realization", "iteration", "rfe"])?;
    for r in records {
        for (k, v) in r.trajectory.iter().enumerate() {
            w.write_record([r.realization.to_string(), (k + 1).to_string(), v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary<W: Write>(out: W, s: &Summary) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "realizations",
        "mean_rfe",
        "std_rfe",
        "mean_time_s",
        "std_time_s",
        "mean_iterations",
        "mean_restarts",
        "converged",
    ])?;
    w.write_record([
        s.realizations.to_string(),
        s.mean_rfe.to_string(),
        s.std_rfe.to_string(),
        s.mean_time.to_string(),
        s.std_time.to_string(),
        s.mean_iterations.to_string(),
        s.mean_restarts.to_string(),
        s.converged.to_string(),
    ])?;
    w.flush()?;
    Ok(())
}

/// Writes `records.csv`, `timing.csv`, `summary.csv` and, if any trajectory
/// was recorded, `trajectories.csv` into `dir`.
pub fn write_outputs(dir: &Path, records: &[RunRecord]) -> Result<Summary> {
    fs::create_dir_all(dir)?;
    let summary = Summary::of(records);
    write_records(fs::File::create(dir.join("records.csv"))?, records)?;
    write_timings(fs::File::create(dir.join("timing.csv"))?, records)?;
    write_summary(fs::File::create(dir.join("summary.csv"))?, &summary)?;
    if records.iter().any(|r| !r.trajectory.is_empty()) {
        write_trajectories(fs::File::create(dir.join("trajectories.csv"))?, records)?;
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> ExperimentSpec {
        ExperimentSpec {
            dims: vec![8, 7, 6],
            rank: 2,
            fit_rank: 2,
            sigma2: 1e-3,
            realizations: 3,
            solver: SolverConfig { seed: 9, ..Default::default() },
            trajectories: true,
            ..Default::default()
        }
    }

    #[test]
    fn records_are_ordered_and_reproducible() {
        let spec = small_spec();
        let a = run_experiment(&spec).unwrap();
        let b = run_experiment(&spec).unwrap();
        assert_eq!(a.iter().map(|r| r.realization).collect::<Vec<_>>(), [0, 1, 2]);
        let (mut ca, mut cb) = (Vec::new(), Vec::new());
        write_records(&mut ca, &a).unwrap();
        write_records(&mut cb, &b).unwrap();
        assert_eq!(ca, cb);
        assert!(a.iter().all(|r| r.trajectory.len() == r.iterations - r.restarts * spec.solver.n_max));
    }

    #[test]
    fn summary_recomputes_from_records() {
        let records = run_experiment(&small_spec()).unwrap();
        let mut buf = Vec::new();
        write_records(&mut buf, &records).unwrap();
        let mut rdr = csv::Reader::from_reader(buf.as_slice());
        let rfes: Vec<f64> = rdr.records().map(|r| r.unwrap()[1].parse().unwrap()).collect();
        let s = Summary::of(&records);
        assert_eq!(s.mean_rfe, rfes.iter().sum::<f64>() / rfes.len() as f64);
        assert_eq!(s.realizations, 3);
    }

    #[test]
    fn engines_agree_on_a_realization() {
        let mut spec = small_spec();
        spec.trajectories = false;
        let central = run_realization(&spec, 1).unwrap();
        spec.engine = EngineChoice::Mesh(2);
        let mesh = run_realization(&spec, 1).unwrap();
        assert_eq!(central.iterations, mesh.iterations);
        assert!((central.rfe - mesh.rfe).abs() <= 1e-10);
        spec.engine = EngineChoice::Als;
        assert!(run_realization(&spec, 1).unwrap().rfe.is_finite());
    }

    #[test]
    fn outputs_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let records = run_experiment(&small_spec()).unwrap();
        write_outputs(dir.path(), &records).unwrap();
        for f in ["records.csv", "timing.csv", "summary.csv", "trajectories.csv"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
    }
}
