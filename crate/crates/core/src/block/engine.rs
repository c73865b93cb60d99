use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc::{channel, Receiver, RecvTimeoutError, Sender};
use std::time::Duration;

use ndarray::{s, Array2};

use crate::constraints::ConstraintSpec;
use crate::error::{Error, Result};
use crate::solver::{
    aux_from, check_fit_inputs, dual_from, fit_with_engine, init_state, residuals, Engine, FitResult, Residuals,
    SolverConfig, SolverState,
};
use crate::tensor::DenseTensor;

use super::mesh::{Message, Node, Payload, Pe, TraceRecord, Wave};
use super::partition::{column_mode, partition, PartitionPlan};

/// How processing elements are executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheduler {
    /// One FIFO queue, messages delivered one at a time.
    #[default]
    Sequential,
    /// One thread per processing element, connected by channels.
    Threaded,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MeshOptions {
    pub scheduler: Scheduler,
    /// Record every message (sequential scheduler only).
    pub trace: bool,
}

const STALL_TIMEOUT: Duration = Duration::from_secs(120);

trait Transport {
    fn send(&mut self, msg: Message) -> Result<()>;
    fn recv_host(&mut self) -> Result<Message>;
}

struct Sequential<'a> {
    pes: &'a mut [Pe],
    n: usize,
    queue: VecDeque<Message>,
    messages: &'a mut usize,
    trace: Option<&'a mut Vec<TraceRecord>>,
}

impl Sequential<'_> {
    fn deliver(&mut self, msg: Message) -> Result<()> {
        let Node::Pe(i, j) = msg.dst else {
            unreachable!("host messages are returned, not delivered")
        };
        if i >= self.n || j >= self.n {
            return Err(Error::Protocol(format!("no element at {}", msg.dst)));
        }
        for out in self.pes[i * self.n + j].handle(msg)? {
            self.send(out)?;
        }
        Ok(())
    }

    /// Delivers everything still queued; nothing may be addressed to the host.
    fn drain(&mut self) -> Result<()> {
        while let Some(msg) = self.queue.pop_front() {
            if msg.dst == Node::Host {
                return Err(Error::Protocol(format!("unexpected {} from {}", msg.payload.kind(), msg.src)));
            }
            self.deliver(msg)?;
        }
        Ok(())
    }
}

impl Transport for Sequential<'_> {
    fn send(&mut self, msg: Message) -> Result<()> {
        *self.messages += 1;
        if let Some(trace) = self.trace.as_deref_mut() {
            trace.push(TraceRecord::of(&msg));
        }
        self.queue.push_back(msg);
        Ok(())
    }

    fn recv_host(&mut self) -> Result<Message> {
        loop {
            let msg = self
                .queue
                .pop_front()
                .ok_or_else(|| Error::Protocol("host is waiting on an idle mesh".into()))?;
            if msg.dst == Node::Host {
                return Ok(msg);
            }
            self.deliver(msg)?;
        }
    }
}

enum Envelope {
    Msg(Message),
    Shutdown,
}

struct Threaded<'a> {
    inboxes: &'a [Sender<Envelope>],
    host: Receiver<Result<Message>>,
    n: usize,
    messages: &'a AtomicUsize,
}

fn route(inboxes: &[Sender<Envelope>], n: usize, msg: Message) -> Result<()> {
    let Node::Pe(i, j) = msg.dst else {
        unreachable!("host messages use the host channel")
    };
    if i >= n || j >= n {
        return Err(Error::Protocol(format!("no element at {}", msg.dst)));
    }
    // A closed inbox means that element already failed and reported it.
    let _ = inboxes[i * n + j].send(Envelope::Msg(msg));
    Ok(())
}

impl Transport for Threaded<'_> {
    fn send(&mut self, msg: Message) -> Result<()> {
        self.messages.fetch_add(1, Ordering::Relaxed);
        route(self.inboxes, self.n, msg)
    }

    fn recv_host(&mut self) -> Result<Message> {
        match self.host.recv_timeout(STALL_TIMEOUT) {
            Ok(r) => r,
            Err(RecvTimeoutError::Timeout) => Err(Error::Protocol("mesh stalled".into())),
            Err(RecvTimeoutError::Disconnected) => Err(Error::Protocol("all elements exited".into())),
        }
    }
}

fn run_pe(
    pe: &mut Pe,
    inbox: Receiver<Envelope>,
    inboxes: Vec<Sender<Envelope>>,
    host: Sender<Result<Message>>,
    n: usize,
    messages: &AtomicUsize,
) {
    while let Ok(Envelope::Msg(msg)) = inbox.recv() {
        let outcome = pe.handle(msg).and_then(|outs| {
            for out in outs {
                messages.fetch_add(1, Ordering::Relaxed);
                if out.dst == Node::Host {
                    let _ = host.send(Ok(out));
                } else {
                    route(&inboxes, n, out)?;
                }
            }
            Ok(())
        });
        if let Err(e) = outcome {
            let _ = host.send(Err(e));
            return;
        }
    }
}

/// Host side of the mesh: owns the authoritative solver state and drives one
/// wave per factor update.
struct Host {
    plan: PartitionPlan,
    n: usize,
    specs: Vec<ConstraintSpec>,
    inner_sweeps: usize,
    state: SolverState,
    seq: u64,
}

impl Host {
    fn iteration(&mut self, tx: &mut dyn Transport) -> Result<()> {
        let order = self.state.order();
        for sweep in 0..self.inner_sweeps {
            for mode in 0..order {
                self.wave(tx, sweep, mode)?;
            }
        }
        self.state.iter += 1;
        Ok(())
    }

    fn wave(&mut self, tx: &mut dyn Transport, sweep: usize, mode: usize) -> Result<()> {
        self.seq += 1;
        let n = self.n;
        let order = self.state.order();
        let wave = Wave {
            seq: self.seq,
            iteration: self.state.iter,
            sweep,
            mode,
            rho: self.state.penalties[mode],
            last_sweep: sweep + 1 == self.inner_sweeps,
        };
        let p = column_mode(mode, order);
        for j in 0..n {
            for f in (0..order).filter(|&f| f != mode) {
                let (block, matrix) = if f == p {
                    (Some(j), self.state.factors[f].slice(s![self.plan.range(p, j), ..]).to_owned())
                } else {
                    (None, self.state.factors[f].clone())
                };
                tx.send(Message {
                    wave,
                    src: Node::Host,
                    dst: Node::Pe(0, j),
                    payload: Payload::FactorBroadcast { mode: f, block, matrix },
                })?;
            }
        }
        let spec = self.specs[mode];
        let local_aux = wave.last_sweep && spec.is_row_separable();
        let mut seen = vec![false; n];
        for _ in 0..n {
            let msg = tx.recv_host()?;
            let Payload::BlockResult { mode: m, block, factor, aux_dual } = msg.payload else {
                return Err(Error::Protocol(format!("host received {} from {}", msg.payload.kind(), msg.src)));
            };
            let valid = msg.wave.seq == wave.seq
                && m == mode
                && block < n
                && !seen[block]
                && msg.src == Node::Pe(block, n - 1)
                && aux_dual.is_some() == local_aux;
            if !valid {
                return Err(Error::Protocol(format!("unexpected block result from {} in wave {}", msg.src, wave.seq)));
            }
            seen[block] = true;
            let rows = self.plan.range(mode, block);
            assign_rows(&mut self.state.factors[mode], rows.clone(), &factor)?;
            if let Some((aux, dual)) = aux_dual {
                assign_rows(&mut self.state.aux[mode], rows.clone(), &aux)?;
                assign_rows(&mut self.state.duals[mode], rows, &dual)?;
            }
        }
        if wave.last_sweep && !local_aux {
            let aux = aux_from(&self.state.factors[mode], &self.state.duals[mode], wave.rho, spec);
            let dual = dual_from(&self.state.duals[mode], &self.state.factors[mode], &aux, wave.rho);
            for i in 0..n {
                let rows = self.plan.range(mode, i);
                tx.send(Message {
                    wave,
                    src: Node::Host,
                    dst: Node::Pe(i, n - 1),
                    payload: Payload::AuxDualUpdate {
                        mode,
                        block: i,
                        aux: aux.slice(s![rows.clone(), ..]).to_owned(),
                        dual: dual.slice(s![rows, ..]).to_owned(),
                    },
                })?;
            }
            self.state.aux[mode] = aux;
            self.state.duals[mode] = dual;
        }
        Ok(())
    }
}

fn assign_rows(target: &mut Array2<f64>, rows: std::ops::Range<usize>, block: &Array2<f64>) -> Result<()> {
    if block.dim() != (rows.len(), target.ncols()) {
        return Err(Error::Protocol(format!(
            "block of shape {:?} for {} rows of a {:?} matrix",
            block.dim(),
            rows.len(),
            target.dim()
        )));
    }
    target.slice_mut(s![rows, ..]).assign(block);
    Ok(())
}

/// Distributed engine: an `n × n` mesh of processing elements, each storing
/// one block of every unfolding, exchanging explicit messages.
pub struct MeshEngine {
    host: Host,
    pes: Vec<Pe>,
    options: MeshOptions,
    messages: usize,
    trace: Vec<TraceRecord>,
}

impl MeshEngine {
    pub fn new(
        t: &DenseTensor,
        rank: usize,
        specs: &[ConstraintSpec],
        config: &SolverConfig,
        plan: &PartitionPlan,
        options: MeshOptions,
    ) -> Result<Self> {
        check_fit_inputs(t, rank, specs, config)?;
        if options.trace && options.scheduler != Scheduler::Sequential {
            return Err(Error::Config("message traces need the sequential scheduler".into()));
        }
        let grid = partition(t, plan)?;
        let pes = Pe::build(&grid, rank, specs)?;
        let n = plan.mesh_size().expect("checked when building the mesh");
        let state = init_state(t.dims(), rank, specs, config)?;
        let mut engine = Self {
            host: Host {
                plan: plan.clone(),
                n,
                specs: specs.to_vec(),
                inner_sweeps: config.inner_sweeps,
                state: state.clone(),
                seq: 0,
            },
            pes,
            options,
            messages: 0,
            trace: Vec::new(),
        };
        engine.reset(state)?;
        Ok(engine)
    }

    /// Mesh side length.
    pub fn size(&self) -> usize {
        self.host.n
    }

    /// Total messages exchanged so far.
    pub fn message_count(&self) -> usize {
        self.messages
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    fn step_sequential(&mut self) -> Result<()> {
        let mut tx = Sequential {
            pes: &mut self.pes,
            n: self.host.n,
            queue: VecDeque::new(),
            messages: &mut self.messages,
            trace: self.options.trace.then_some(&mut self.trace),
        };
        self.host.iteration(&mut tx)?;
        tx.drain()
    }

    fn step_threaded(&mut self) -> Result<()> {
        let n = self.host.n;
        let counter = AtomicUsize::new(0);
        let host = &mut self.host;
        let pes = &mut self.pes;
        let result = std::thread::scope(|scope| {
            let (host_tx, host_rx) = channel();
            let (inboxes, receivers): (Vec<_>, Vec<_>) = (0..pes.len()).map(|_| channel()).unzip();
            let workers: Vec<_> = pes
                .iter_mut()
                .zip(receivers)
                .map(|(pe, rx)| {
                    let (inboxes, host_tx, counter) = (inboxes.clone(), host_tx.clone(), &counter);
                    scope.spawn(move || run_pe(pe, rx, inboxes, host_tx, n, counter))
                })
                .collect();
            drop(host_tx);
            let mut tx = Threaded { inboxes: &inboxes, host: host_rx, n, messages: &counter };
            let outcome = host.iteration(&mut tx);
            for inbox in &inboxes {
                let _ = inbox.send(Envelope::Shutdown);
            }
            for w in workers {
                w.join().expect("processing element panicked");
            }
            outcome?;
            match tx.host.try_recv() {
                Ok(Err(e)) => Err(e),
                Ok(Ok(msg)) => Err(Error::Protocol(format!("unexpected {} from {}", msg.payload.kind(), msg.src))),
                Err(_) => Ok(()),
            }
        });
        self.messages += counter.into_inner();
        result
    }
}

impl Engine for MeshEngine {
    fn reset(&mut self, state: SolverState) -> Result<()> {
        if state.dims() != self.host.state.dims() || state.rank() != self.host.state.rank() {
            return Err(Error::DimensionMismatch("state does not match the partitioned tensor".into()));
        }
        state.check_shapes()?;
        for pe in self.pes.iter_mut().filter(|pe| pe.is_rightmost()) {
            let block = |m: &Array2<f64>, mode: usize| m.slice(s![self.host.plan.range(mode, pe.row()), ..]).to_owned();
            let aux = state.aux.iter().enumerate().map(|(mode, a)| block(a, mode)).collect();
            let duals = state.duals.iter().enumerate().map(|(mode, y)| block(y, mode)).collect();
            pe.load_aux_duals(aux, duals);
        }
        self.host.state = state;
        Ok(())
    }

    fn step(&mut self) -> Result<Residuals> {
        let prev_aux = self.host.state.aux.clone();
        match self.options.scheduler {
            Scheduler::Sequential => self.step_sequential()?,
            Scheduler::Threaded => self.step_threaded()?,
        }
        Ok(residuals(&self.host.state, &prev_aux))
    }

    fn state(&self) -> &SolverState {
        &self.host.state
    }

    fn state_mut(&mut self) -> &mut SolverState {
        &mut self.host.state
    }
}

/// Constrained CP factorization on a simulated mesh, with restarts.
pub fn distributed_fit(
    t: &DenseTensor,
    rank: usize,
    specs: &[ConstraintSpec],
    config: &SolverConfig,
    plan: &PartitionPlan,
) -> Result<FitResult> {
    let mut engine = MeshEngine::new(t, rank, specs, config, plan, MeshOptions::default())?;
    fit_with_engine(&mut engine, t, rank, specs, config, |_, _| {})
}
