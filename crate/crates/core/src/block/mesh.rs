use std::fmt;

use ndarray::Array2;

use crate::constraints::ConstraintSpec;
use crate::error::{Error, Result};
use crate::solver::{aux_from, dual_from, solve_factor_rows};

use super::math::{accumulate, local_gram, local_mttkrp};
use super::partition::{column_mode, BlockGrid};
use crate::tensor::DenseTensor;

/// A mesh endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Node {
    Host,
    Pe(usize, usize),
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Host => f.write_str("host"),
            Node::Pe(i, j) => write!(f, "pe({i},{j})"),
        }
    }
}

/// Identifies one factor-update wave. `seq` increases by one per wave over
/// the whole run; `rho` is the penalty used by the solving elements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wave {
    pub seq: u64,
    pub iteration: usize,
    pub sweep: usize,
    pub mode: usize,
    pub rho: f64,
    /// Auxiliary and dual variables are updated in this wave.
    pub last_sweep: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    /// Factor `mode`, either in full or as row block `block`.
    FactorBroadcast { mode: usize, block: Option<usize>, matrix: Array2<f64> },
    /// Running sum of the local MTTKRPs of one block row.
    PartialMttkrp(Array2<f64>),
    /// Running sum of the local Gram terms.
    PartialGram(Array2<f64>),
    /// New factor row block, plus auxiliary and dual blocks when they were
    /// updated locally.
    BlockResult {
        mode: usize,
        block: usize,
        factor: Array2<f64>,
        aux_dual: Option<(Array2<f64>, Array2<f64>)>,
    },
    /// Auxiliary and dual row blocks computed by the host for constraints that
    /// couple rows.
    AuxDualUpdate { mode: usize, block: usize, aux: Array2<f64>, dual: Array2<f64> },
}

impl Payload {
    pub fn kind(&self) -> &'static str {
        match self {
            Payload::FactorBroadcast { .. } => "FactorBroadcast",
            Payload::PartialMttkrp(_) => "PartialMttkrp",
            Payload::PartialGram(_) => "PartialGram",
            Payload::BlockResult { .. } => "BlockResult",
            Payload::AuxDualUpdate { .. } => "AuxDualUpdate",
        }
    }

    /// Shape of the main matrix carried.
    pub fn dims(&self) -> (usize, usize) {
        match self {
            Payload::FactorBroadcast { matrix, .. } => matrix.dim(),
            Payload::PartialMttkrp(m) | Payload::PartialGram(m) => m.dim(),
            Payload::BlockResult { factor, .. } => factor.dim(),
            Payload::AuxDualUpdate { aux, .. } => aux.dim(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub wave: Wave,
    pub src: Node,
    pub dst: Node,
    pub payload: Payload,
}

/// One row of the optional schedule trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    pub iteration: usize,
    pub wave: u64,
    pub kind: &'static str,
    pub src: Node,
    pub dst: Node,
    pub rows: usize,
    pub cols: usize,
}

impl TraceRecord {
    pub(crate) fn of(m: &Message) -> Self {
        let (rows, cols) = m.payload.dims();
        Self { iteration: m.wave.iteration, wave: m.wave.seq, kind: m.payload.kind(), src: m.src, dst: m.dst, rows, cols }
    }
}

/// Writes a trace as CSV with a header row.
pub fn write_trace<W: std::io::Write>(out: W, trace: &[TraceRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iteration", "wave", "kind", "src", "dst", "payload_dims"])?;
    for r in trace {
        w.write_record([
            r.iteration.to_string(),
            r.wave.to_string(),
            r.kind.to_string(),
            r.src.to_string(),
            r.dst.to_string(),
            format!("{}x{}", r.rows, r.cols),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Number of messages one iteration exchanges on an `n × n` mesh.
///
/// Per wave: every factor other than the one being updated reaches the top
/// of each column and is forwarded down it (`(order − 1) n²`), two running
/// sums travel along each block row (`2 n (n − 1)`), and each rightmost
/// element returns its block (`n`). Constraints that couple rows cost another
/// `n` messages per mode per iteration.
pub fn messages_per_iteration(order: usize, n: usize, inner_sweeps: usize, coupled_modes: usize) -> usize {
    let per_wave = (order - 1) * n * n + 2 * n * (n - 1) + n;
    order * inner_sweeps * per_wave + coupled_modes * n
}

fn violation(at: Node, what: impl fmt::Display) -> Error {
    Error::Protocol(format!("{at}: {what}"))
}

/// Per-wave scratch state of a processing element.
#[derive(Debug, Default)]
struct WaveInbox {
    factors: Vec<Option<Array2<f64>>>,
    received: usize,
    local: Option<(Array2<f64>, Array2<f64>)>,
    incoming_mttkrp: Option<Array2<f64>>,
    incoming_gram: Option<Array2<f64>>,
    done: bool,
}

/// A processing element: stores block `(i, j)` of every unfolding; the
/// rightmost column additionally owns the auxiliary and dual row blocks.
#[derive(Debug)]
pub(crate) struct Pe {
    i: usize,
    j: usize,
    n: usize,
    rank: usize,
    blocks: Vec<DenseTensor>,
    specs: Vec<ConstraintSpec>,
    aux: Vec<Array2<f64>>,
    duals: Vec<Array2<f64>>,
    wave: Option<Wave>,
    inbox: WaveInbox,
}

impl Pe {
    pub(crate) fn build(grid: &BlockGrid, rank: usize, specs: &[ConstraintSpec]) -> Result<Vec<Pe>> {
        let n = grid
            .plan()
            .mesh_size()
            .ok_or_else(|| Error::Partition("the mesh needs the same number of blocks in every mode".into()))?;
        let order = grid.order();
        let mut pes = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                pes.push(Pe {
                    i,
                    j,
                    n,
                    rank,
                    blocks: (0..order).map(|m| grid.block(m, i, j).clone()).collect(),
                    specs: specs.to_vec(),
                    aux: Vec::new(),
                    duals: Vec::new(),
                    wave: None,
                    inbox: WaveInbox::default(),
                });
            }
        }
        Ok(pes)
    }

    fn node(&self) -> Node {
        Node::Pe(self.i, self.j)
    }

    pub(crate) fn is_rightmost(&self) -> bool {
        self.j == self.n - 1
    }

    pub(crate) fn row(&self) -> usize {
        self.i
    }

    pub(crate) fn load_aux_duals(&mut self, aux: Vec<Array2<f64>>, duals: Vec<Array2<f64>>) {
        self.aux = aux;
        self.duals = duals;
    }

    fn order(&self) -> usize {
        self.blocks.len()
    }

    fn send(&self, wave: Wave, dst: Node, payload: Payload) -> Message {
        Message { wave, src: self.node(), dst, payload }
    }

    /// Advances the wave bookkeeping for an incoming message.
    fn enter(&mut self, msg: &Message) -> Result<()> {
        let at = self.node();
        match self.wave {
            Some(w) if w.seq == msg.wave.seq => {
                if w != msg.wave {
                    return Err(violation(at, format!("inconsistent header in wave {}", w.seq)));
                }
                Ok(())
            }
            Some(w) if msg.wave.seq < w.seq => Err(violation(
                at,
                format!("stale wave {} message after wave {}", msg.wave.seq, w.seq),
            )),
            current => {
                if let Some(w) = current {
                    if !self.inbox.done {
                        return Err(violation(
                            at,
                            format!("wave {} started before wave {} obligations were met", msg.wave.seq, w.seq),
                        ));
                    }
                }
                if msg.wave.mode >= self.order() {
                    return Err(violation(at, format!("wave for mode {}", msg.wave.mode)));
                }
                self.wave = Some(msg.wave);
                self.inbox = WaveInbox { factors: vec![None; self.order()], ..Default::default() };
                Ok(())
            }
        }
    }

    /// Consumes one message and returns the messages it triggers.
    pub(crate) fn handle(&mut self, msg: Message) -> Result<Vec<Message>> {
        let at = self.node();
        if msg.dst != at {
            return Err(violation(at, format!("received a message addressed to {}", msg.dst)));
        }
        if let Payload::AuxDualUpdate { mode, block, aux, dual } = msg.payload {
            let expected = self.wave.map_or(false, |w| w.seq == msg.wave.seq && w.mode == mode);
            if !expected || !self.inbox.done || !self.is_rightmost() || block != self.i {
                return Err(violation(at, "unexpected auxiliary update"));
            }
            self.aux[mode] = aux;
            self.duals[mode] = dual;
            return Ok(Vec::new());
        }
        self.enter(&msg)?;
        let wave = msg.wave;
        if self.inbox.done {
            return Err(violation(at, format!("extra {} in finished wave {}", msg.payload.kind(), wave.seq)));
        }
        let mut out = Vec::new();
        let p = column_mode(wave.mode, self.order());
        match msg.payload {
            Payload::FactorBroadcast { mode, block, matrix } => {
                let from_above = if self.i == 0 { Node::Host } else { Node::Pe(self.i - 1, self.j) };
                let expected_block = if mode == p { Some(self.j) } else { None };
                if msg.src != from_above || mode == wave.mode || block != expected_block {
                    return Err(violation(at, format!("unexpected broadcast of factor {mode} from {}", msg.src)));
                }
                if self.inbox.factors[mode].is_some() {
                    return Err(violation(at, format!("factor {mode} broadcast twice")));
                }
                if self.i + 1 < self.n {
                    out.push(self.send(
                        wave,
                        Node::Pe(self.i + 1, self.j),
                        Payload::FactorBroadcast { mode, block, matrix: matrix.clone() },
                    ));
                }
                self.inbox.factors[mode] = Some(matrix);
                self.inbox.received += 1;
                if self.inbox.received == self.order() - 1 {
                    self.compute_local(wave.mode)?;
                }
            }
            Payload::PartialMttkrp(m) => {
                self.check_from_left(&msg.src, self.inbox.incoming_mttkrp.is_some())?;
                self.inbox.incoming_mttkrp = Some(m);
            }
            Payload::PartialGram(g) => {
                self.check_from_left(&msg.src, self.inbox.incoming_gram.is_some())?;
                self.inbox.incoming_gram = Some(g);
            }
            Payload::BlockResult { .. } | Payload::AuxDualUpdate { .. } => {
                return Err(violation(at, format!("{} sent to a processing element", msg.payload.kind())));
            }
        }
        self.try_finish(wave, &mut out)?;
        Ok(out)
    }

    fn check_from_left(&self, src: &Node, duplicate: bool) -> Result<()> {
        if self.j == 0 || *src != Node::Pe(self.i, self.j - 1) || duplicate {
            return Err(violation(self.node(), format!("unexpected partial sum from {src}")));
        }
        Ok(())
    }

    fn compute_local(&mut self, mode: usize) -> Result<()> {
        let empty = Array2::<f64>::zeros((0, self.rank));
        let views: Vec<_> = self
            .inbox
            .factors
            .iter()
            .map(|f| f.as_ref().map_or(empty.view(), |m| m.view()))
            .collect();
        let m = local_mttkrp(&self.blocks[mode], &views, mode)?;
        let g = local_gram(self.rank, &views, mode);
        self.inbox.local = Some((m, g));
        Ok(())
    }

    fn try_finish(&mut self, wave: Wave, out: &mut Vec<Message>) -> Result<()> {
        let ready = self.inbox.local.is_some()
            && (self.j == 0 || (self.inbox.incoming_mttkrp.is_some() && self.inbox.incoming_gram.is_some()));
        if !ready {
            return Ok(());
        }
        let (m, g) = match (self.inbox.incoming_mttkrp.take(), self.inbox.incoming_gram.take()) {
            (Some(mut acc_m), Some(mut acc_g)) => {
                let (lm, lg) = self.inbox.local.take().expect("checked above");
                accumulate(&mut acc_m, &lm)?;
                accumulate(&mut acc_g, &lg)?;
                (acc_m, acc_g)
            }
            _ => self.inbox.local.take().expect("checked above"),
        };
        self.inbox.done = true;
        self.inbox.factors.clear();
        if !self.is_rightmost() {
            let right = Node::Pe(self.i, self.j + 1);
            out.push(self.send(wave, right, Payload::PartialMttkrp(m)));
            out.push(self.send(wave, right, Payload::PartialGram(g)));
            return Ok(());
        }
        let mode = wave.mode;
        let spec = self.specs[mode];
        let factor = solve_factor_rows(&m, &g, self.aux[mode].view(), self.duals[mode].view(), wave.rho, spec)?;
        let aux_dual = if wave.last_sweep && spec.is_row_separable() {
            let aux = aux_from(&factor, &self.duals[mode], wave.rho, spec);
            let dual = dual_from(&self.duals[mode], &factor, &aux, wave.rho);
            self.aux[mode] = aux.clone();
            self.duals[mode] = dual.clone();
            Some((aux, dual))
        } else {
            None
        };
        out.push(self.send(wave, Node::Host, Payload::BlockResult { mode, block: self.i, factor, aux_dual }));
        Ok(())
    }
}
