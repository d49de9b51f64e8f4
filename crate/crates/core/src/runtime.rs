//! Bulk-synchronous worker runtime.
//!
//! A stage runs one closure per logical worker. Workers talk only through
//! messages; everything sent during a stage is delivered at the barrier that
//! ends it, ordered by source id and then by send order, so the next stage
//! sees the same inbox contents whether workers ran one after another
//! (emulated mode) or on a thread pool (parallel mode).

use std::collections::{BTreeMap, VecDeque};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::str::FromStr;

use thiserror::Error;

use crate::bandlinalg::RowBlock;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RuntimeError {
    #[error("worker {worker} blocked on an empty inbox (deadlock)")]
    Deadlock { worker: usize },
    #[error("worker {worker} panicked: {message}")]
    WorkerPanic { worker: usize, message: String },
    #[error("message to unknown worker {dest} from worker {sender}")]
    UnknownWorker { sender: usize, dest: usize },
    #[error("worker {worker} received {got:?} while expecting {expected:?}")]
    UnexpectedMessage {
        worker: usize,
        expected: MessageKind,
        got: MessageKind,
    },
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("unknown mode '{0}' (expected emulated or parallel)")]
    UnknownMode(String),
    #[error("could not build thread pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Emulated,
    Parallel,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Emulated => "emulated",
            Mode::Parallel => "parallel",
        }
    }
}

impl FromStr for Mode {
    type Err = RuntimeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "emulated" => Ok(Mode::Emulated),
            "parallel" => Ok(Mode::Parallel),
            other => Err(RuntimeError::UnknownMode(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WorkerTopology {
    /// Logical workers, normally one per fine time level.
    pub num_workers: usize,
    pub mode: Mode,
    /// OS threads in parallel mode; logical workers are multiplexed on them.
    pub physical_workers: usize,
}

impl WorkerTopology {
    pub fn new(num_workers: usize, mode: Mode, physical_workers: usize) -> Self {
        WorkerTopology {
            num_workers,
            mode,
            physical_workers,
        }
    }

    /// Mode and thread count from `PARADIN_MODE` and `PARADIN_WORKERS`, falling
    /// back to emulation and the available parallelism.
    pub fn from_env(num_workers: usize) -> Result<Self, RuntimeError> {
        let mode = match std::env::var("PARADIN_MODE") {
            Ok(s) => s.parse()?,
            Err(_) => Mode::Emulated,
        };
        let physical = match std::env::var("PARADIN_WORKERS") {
            Ok(s) => s
                .trim()
                .parse()
                .map_err(|_| RuntimeError::InvalidTopology(format!("PARADIN_WORKERS={s}")))?,
            Err(_) => default_threads(),
        };
        Ok(Self::new(num_workers, mode, physical))
    }
}

pub fn default_threads() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MessageKind {
    RowBlock,
    CouplingVector,
    NormContribution,
    Control,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Rows(RowBlock),
    Vector(Vec<f64>),
    Scalar(f64),
    Control(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub kind: MessageKind,
    pub source: usize,
    pub dest: usize,
    /// Monotone per `(source, dest)` pair over the life of the runtime.
    pub sequence: u64,
    /// Free-form label, e.g. a level or job index.
    pub tag: u64,
    pub payload: Payload,
}

/// Handle given to a worker for the duration of one stage.
pub struct WorkerCtx {
    id: usize,
    num_workers: usize,
    inbox: VecDeque<Message>,
    outbox: Vec<Message>,
}

impl WorkerCtx {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn num_workers(&self) -> usize {
        self.num_workers
    }

    pub fn send(
        &mut self,
        dest: usize,
        kind: MessageKind,
        tag: u64,
        payload: Payload,
    ) -> Result<(), RuntimeError> {
        if dest >= self.num_workers {
            return Err(RuntimeError::UnknownWorker {
                sender: self.id,
                dest,
            });
        }
        self.outbox.push(Message {
            kind,
            source: self.id,
            dest,
            sequence: 0,
            tag,
            payload,
        });
        Ok(())
    }

    /// Next message in delivery order.
    pub fn recv(&mut self) -> Result<Message, RuntimeError> {
        self.inbox
            .pop_front()
            .ok_or(RuntimeError::Deadlock { worker: self.id })
    }

    /// First message of the given kind and tag.
    pub fn recv_tagged(&mut self, kind: MessageKind, tag: u64) -> Result<Message, RuntimeError> {
        let pos = self
            .inbox
            .iter()
            .position(|m| m.kind == kind && m.tag == tag)
            .ok_or(RuntimeError::Deadlock { worker: self.id })?;
        Ok(self.inbox.remove(pos).expect("position is in range"))
    }

    /// Vector payload of the first matching coupling message.
    pub fn recv_vector(&mut self, tag: u64) -> Result<Vec<f64>, RuntimeError> {
        let m = self.recv_tagged(MessageKind::CouplingVector, tag)?;
        match m.payload {
            Payload::Vector(v) => Ok(v),
            _ => Err(RuntimeError::UnexpectedMessage {
                worker: self.id,
                expected: MessageKind::CouplingVector,
                got: m.kind,
            }),
        }
    }

    pub fn has_message(&self, kind: MessageKind, tag: u64) -> bool {
        self.inbox.iter().any(|m| m.kind == kind && m.tag == tag)
    }

    pub fn pending(&self) -> usize {
        self.inbox.len()
    }
}

pub struct Runtime {
    topology: WorkerTopology,
    #[cfg(feature = "parallel")]
    pool: Option<rayon::ThreadPool>,
    mailboxes: Vec<VecDeque<Message>>,
    sequences: BTreeMap<(usize, usize), u64>,
    stages: u64,
    messages: u64,
}

impl Runtime {
    pub fn new(topology: WorkerTopology) -> Result<Self, RuntimeError> {
        if topology.num_workers == 0 {
            return Err(RuntimeError::InvalidTopology("no workers".into()));
        }
        if topology.physical_workers == 0 {
            return Err(RuntimeError::InvalidTopology("zero physical workers".into()));
        }
        #[cfg(feature = "parallel")]
        let pool = match topology.mode {
            Mode::Parallel => Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(topology.physical_workers)
                    .build()
                    .map_err(|e| RuntimeError::Pool(e.to_string()))?,
            ),
            Mode::Emulated => None,
        };
        Ok(Runtime {
            topology,
            #[cfg(feature = "parallel")]
            pool,
            mailboxes: vec![VecDeque::new(); topology.num_workers],
            sequences: BTreeMap::new(),
            stages: 0,
            messages: 0,
        })
    }

    pub fn emulated(num_workers: usize) -> Result<Self, RuntimeError> {
        Self::new(WorkerTopology::new(num_workers, Mode::Emulated, 1))
    }

    pub fn topology(&self) -> WorkerTopology {
        self.topology
    }

    pub fn num_workers(&self) -> usize {
        self.topology.num_workers
    }

    pub fn mode(&self) -> Mode {
        self.topology.mode
    }

    /// Stages run and messages delivered so far.
    pub fn counters(&self) -> (u64, u64) {
        (self.stages, self.messages)
    }

    /// Messages delivered but not yet received.
    pub fn undelivered(&self) -> usize {
        self.mailboxes.iter().map(|m| m.len()).sum()
    }

    /// Runs `stage` on every worker and returns the outputs in worker order.
    /// If several workers fail, the error of the lowest id is returned.
    pub fn run_stage<T, E, F>(&mut self, stage: F) -> Result<Vec<T>, E>
    where
        T: Send,
        E: Send + From<RuntimeError>,
        F: Fn(&mut WorkerCtx) -> Result<T, E> + Sync,
    {
        let n = self.topology.num_workers;
        let inboxes = std::mem::take(&mut self.mailboxes);
        let run_one = |id: usize, inbox: VecDeque<Message>| {
            let mut ctx = WorkerCtx {
                id,
                num_workers: n,
                inbox,
                outbox: Vec::new(),
            };
            let out = catch_unwind(AssertUnwindSafe(|| stage(&mut ctx)));
            (out, ctx)
        };

        let results: Vec<_> = match self.topology.mode {
            #[cfg(feature = "parallel")]
            Mode::Parallel => {
                use rayon::prelude::*;
                let pool = self.pool.as_ref().expect("parallel runtime has a pool");
                pool.install(|| {
                    inboxes
                        .into_par_iter()
                        .enumerate()
                        .map(|(id, inbox)| run_one(id, inbox))
                        .collect()
                })
            }
            _ => inboxes
                .into_iter()
                .enumerate()
                .map(|(id, inbox)| run_one(id, inbox))
                .collect(),
        };

        // barrier: leftover inbox contents stay queued, new messages follow in
        // ascending source order
        let mut mailboxes: Vec<VecDeque<Message>> = Vec::with_capacity(n);
        let mut outputs = Vec::with_capacity(n);
        let mut outboxes = Vec::with_capacity(n);
        for (out, ctx) in results {
            mailboxes.push(ctx.inbox);
            outboxes.push(ctx.outbox);
            outputs.push(out);
        }
        for outbox in outboxes {
            for mut m in outbox {
                let seq = self.sequences.entry((m.source, m.dest)).or_insert(0);
                m.sequence = *seq;
                *seq += 1;
                self.messages += 1;
                mailboxes[m.dest].push_back(m);
            }
        }
        self.mailboxes = mailboxes;
        self.stages += 1;

        let mut values = Vec::with_capacity(n);
        for (id, out) in outputs.into_iter().enumerate() {
            match out {
                Ok(Ok(v)) => values.push(v),
                Ok(Err(e)) => return Err(e),
                Err(panic) => {
                    let message = panic
                        .downcast_ref::<&str>()
                        .map(|s| s.to_string())
                        .or_else(|| panic.downcast_ref::<String>().cloned())
                        .unwrap_or_else(|| "unknown panic".into());
                    return Err(RuntimeError::WorkerPanic { worker: id, message }.into());
                }
            }
        }
        Ok(values)
    }

    /// Drops any queued messages, e.g. after a failed stage.
    pub fn clear_mailboxes(&mut self) {
        for m in &mut self.mailboxes {
            m.clear();
        }
    }
}

/// Sum of per-worker contributions in ascending worker order.
pub fn reduce_norm(contributions: &[f64]) -> f64 {
    contributions.iter().fold(0.0, |acc, &c| acc + c)
}
