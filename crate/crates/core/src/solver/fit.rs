use crate::constraints::ConstraintSpec;
use crate::error::{Error, Result};
use crate::tensor::{KruskalModel, TensorData};

use super::config::restart_seed;
use super::state::{init_state, Residuals, SolverState};
use super::update::{adapt_penalties, check_stop, iterate};
use super::SolverConfig;

/// Outcome of a factorization. The model holds the auxiliary (feasible)
/// factor copies; histories belong to the reported attempt.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: KruskalModel,
    pub rfe: f64,
    /// Iterations summed over all attempts.
    pub iterations: usize,
    pub restarts: usize,
    pub converged: bool,
    pub residual_history: Vec<Residuals>,
    /// Filled when `SolverConfig::record_rfe` is set.
    pub rfe_history: Vec<f64>,
    /// Final state of the reported attempt.
    pub state: SolverState,
}

/// Something that can run ADMM iterations on a state.
pub trait Engine {
    /// Replaces the current state, e.g. at a restart.
    fn reset(&mut self, state: SolverState) -> Result<()>;

    /// One full iteration; returns the residuals it produced.
    fn step(&mut self) -> Result<Residuals>;

    fn state(&self) -> &SolverState;

    fn state_mut(&mut self) -> &mut SolverState;
}

/// The single-process solver.
pub struct CentralizedEngine<'a, T: TensorData + ?Sized> {
    tensor: &'a T,
    specs: Vec<ConstraintSpec>,
    config: SolverConfig,
    state: Option<SolverState>,
}

impl<'a, T: TensorData + ?Sized> CentralizedEngine<'a, T> {
    pub fn new(tensor: &'a T, specs: &[ConstraintSpec], config: &SolverConfig) -> Self {
        Self {
            tensor,
            specs: specs.to_vec(),
            config: config.clone(),
            state: None,
        }
    }
}

impl<T: TensorData + ?Sized> Engine for CentralizedEngine<'_, T> {
    fn reset(&mut self, state: SolverState) -> Result<()> {
        state.check_shapes()?;
        self.state = Some(state);
        Ok(())
    }

    fn step(&mut self) -> Result<Residuals> {
        let state = self.state.as_mut().expect("engine used before reset");
        iterate(state, self.tensor, &self.specs, &self.config)
    }

    fn state(&self) -> &SolverState {
        self.state.as_ref().expect("engine used before reset")
    }

    fn state_mut(&mut self) -> &mut SolverState {
        self.state.as_mut().expect("engine used before reset")
    }
}

pub(crate) fn check_fit_inputs<T: TensorData + ?Sized>(
    t: &T,
    rank: usize,
    specs: &[ConstraintSpec],
    config: &SolverConfig,
) -> Result<()> {
    config.validate()?;
    if rank == 0 {
        return Err(Error::Config("rank must be at least 1".into()));
    }
    if specs.len() != t.dims().len() {
        return Err(Error::Config(format!(
            "{} constraint specs for an order-{} tensor",
            specs.len(),
            t.dims().len()
        )));
    }
    if t.norm() == 0.0 {
        return Err(Error::ZeroTensor);
    }
    Ok(())
}

struct Attempt {
    state: SolverState,
    rfe: f64,
    converged: bool,
    residual_history: Vec<Residuals>,
    rfe_history: Vec<f64>,
}

/// Runs the restart loop on any engine. `observe` sees the state after every
/// iteration together with the attempt number.
pub fn fit_with_engine<T, E>(
    engine: &mut E,
    t: &T,
    rank: usize,
    specs: &[ConstraintSpec],
    config: &SolverConfig,
    mut observe: impl FnMut(usize, &SolverState),
) -> Result<FitResult>
where
    T: TensorData + ?Sized,
    E: Engine + ?Sized,
{
    check_fit_inputs(t, rank, specs, config)?;
    let mut iterations = 0;
    let mut best: Option<Attempt> = None;
    let mut attempts = 0;
    for attempt in 0..=config.max_restarts {
        attempts = attempt + 1;
        let attempt_config = SolverConfig {
            seed: restart_seed(config.seed, attempt),
            ..config.clone()
        };
        engine.reset(init_state(t.dims(), rank, specs, &attempt_config)?)?;
        let mut residual_history = Vec::new();
        let mut rfe_history = Vec::new();
        let mut converged = false;
        for _ in 0..config.n_max {
            let res = engine.step()?;
            iterations += 1;
            observe(attempt, engine.state());
            if config.record_rfe {
                rfe_history.push(t.rfe(&engine.state().aux_model())?);
            }
            converged = check_stop(&res, engine.state(), config);
            if !converged && config.adapt_penalties {
                let state = engine.state_mut();
                state.penalties = adapt_penalties(&state.penalties, &res, config);
            }
            residual_history.push(res);
            if converged {
                break;
            }
        }
        let current = Attempt {
            rfe: t.rfe(&engine.state().aux_model())?,
            state: engine.state().clone(),
            converged,
            residual_history,
            rfe_history,
        };
        if converged {
            best = Some(current);
            break;
        }
        if best.as_ref().map_or(true, |b| current.rfe < b.rfe) {
            best = Some(current);
        }
    }
    let best = best.expect("at least one attempt runs");
    Ok(FitResult {
        model: best.state.aux_model(),
        rfe: best.rfe,
        iterations,
        restarts: attempts - 1,
        converged: best.converged,
        residual_history: best.residual_history,
        rfe_history: best.rfe_history,
        state: best.state,
    })
}

/// Centralized constrained CP factorization with restarts.
pub fn fit<T: TensorData + ?Sized>(
    t: &T,
    rank: usize,
    specs: &[ConstraintSpec],
    config: &SolverConfig,
) -> Result<FitResult> {
    let mut engine = CentralizedEngine::new(t, specs, config);
    fit_with_engine(&mut engine, t, rank, specs, config, |_, _| {})
}
