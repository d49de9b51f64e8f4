//! Prefix-product chains executed on the worker runtime.
//!
//! A family holds one or more independent chains ("jobs"). Each level of a
//! job has an owning worker; the same workers also split the rows of the
//! product matrices among themselves. Building a family costs two stages:
//! row blocks are formed and sent to the level owners, then every owner
//! gathers its product and factors it. Right-hand sides are accumulated on
//! the cached row blocks with one more stage whenever they change.

use crate::bandlinalg::{
    accumulate_rhs_rows, chain_row_blocks, gather, row_ranges, BandedLu, BandedMatrix, RowBlock,
    SparseRows,
};
use crate::runtime::{MessageKind, Payload, Runtime, RuntimeError, WorkerCtx};

use super::{Result, SolverError};

pub(crate) struct ChainFamily {
    n: usize,
    sparse: Vec<SparseRows>,
    /// Per job, the level indices in chain order.
    jobs: Vec<Vec<usize>>,
    /// Owner worker of every level.
    owner: Vec<usize>,
    /// `(job, position)` of every worker taking part.
    member: Vec<Option<(usize, usize)>>,
    /// Offset that keeps this family's message tags apart from others.
    tag_base: u64,
}

pub(crate) struct Factored {
    /// LU factors of the prefix product of every level.
    pub lus: Vec<BandedLu>,
    /// Row blocks kept by each worker, one per level of its job.
    blocks: Vec<Vec<RowBlock>>,
    pub max_ops: u64,
}

impl ChainFamily {
    /// `jobs[j]` lists `(level, worker)` pairs in chain order.
    pub fn new(
        mats: &[BandedMatrix],
        jobs: &[Vec<(usize, usize)>],
        num_workers: usize,
        tag_base: u64,
    ) -> Result<Self> {
        let n = mats.first().map(|m| m.dim()).unwrap_or(0);
        let mut owner = vec![usize::MAX; mats.len()];
        let mut member = vec![None; num_workers];
        for (j, job) in jobs.iter().enumerate() {
            for (pos, &(level, worker)) in job.iter().enumerate() {
                if worker >= num_workers || member[worker].is_some() || owner[level] != usize::MAX
                {
                    return Err(SolverError::Config(format!(
                        "bad chain assignment of level {level} to worker {worker}"
                    )));
                }
                owner[level] = worker;
                member[worker] = Some((j, pos));
            }
        }
        if owner.contains(&usize::MAX) {
            return Err(SolverError::Config("chain level without owner".into()));
        }
        Ok(ChainFamily {
            n,
            sparse: mats.iter().map(|m| m.sparse_rows()).collect(),
            jobs: jobs
                .iter()
                .map(|j| j.iter().map(|&(l, _)| l).collect())
                .collect(),
            owner,
            member,
            tag_base,
        })
    }

    pub fn levels(&self) -> usize {
        self.owner.len()
    }

    /// Level owned by `worker`, if any.
    pub fn owned_level(&self, worker: usize) -> Option<usize> {
        let (j, pos) = self.member.get(worker).copied().flatten()?;
        Some(self.jobs[j][pos])
    }

    pub fn owner(&self, level: usize) -> usize {
        self.owner[level]
    }

    /// Workers of the job containing `level`, in chain order.
    pub fn job_workers(&self, level: usize) -> Vec<usize> {
        let (j, _) = self.member[self.owner[level]].expect("owner is a member");
        self.jobs[j].iter().map(|&l| self.owner[l]).collect()
    }

    fn tag(&self, level: usize) -> u64 {
        self.tag_base + level as u64
    }

    fn my_rows(&self, worker: usize) -> Option<(usize, usize, std::ops::Range<usize>)> {
        let (j, pos) = self.member[worker]?;
        let range = row_ranges(self.n, self.jobs[j].len())[pos].clone();
        Some((j, pos, range))
    }

    /// Forms, distributes and factors all prefix products.
    pub fn factor(&self, rt: &mut Runtime) -> Result<Factored> {
        let built = rt.run_stage(|ctx| -> Result<(Vec<RowBlock>, u64)> {
            let Some((j, pos, range)) = self.my_rows(ctx.id()) else {
                return Ok((Vec::new(), 0));
            };
            let mats: Vec<&SparseRows> = self.jobs[j].iter().map(|&l| &self.sparse[l]).collect();
            let (blocks, ops) = chain_row_blocks(&mats, pos + 1, range)?;
            for (b, &level) in blocks.iter().zip(&self.jobs[j]) {
                ctx.send(
                    self.owner[level],
                    MessageKind::RowBlock,
                    self.tag(level),
                    Payload::Rows(b.clone()),
                )?;
            }
            Ok((blocks, ops))
        });
        let built = match built {
            Ok(b) => b,
            Err(e) => {
                rt.clear_mailboxes();
                return Err(e);
            }
        };
        let lus = rt.run_stage(|ctx| -> Result<Option<(usize, BandedLu)>> {
            let Some(level) = self.owned_level(ctx.id()) else {
                return Ok(None);
            };
            let count = self.job_workers(level).len();
            let mut blocks = Vec::with_capacity(count);
            for _ in 0..count {
                let m = ctx.recv_tagged(MessageKind::RowBlock, self.tag(level))?;
                match m.payload {
                    Payload::Rows(b) => blocks.push(b),
                    _ => {
                        return Err(RuntimeError::UnexpectedMessage {
                            worker: ctx.id(),
                            expected: MessageKind::RowBlock,
                            got: m.kind,
                        }
                        .into())
                    }
                }
            }
            let (p, _) = gather(&blocks)?;
            let lu = BandedLu::factor_owned(p)
                .map_err(|source| SolverError::IllConditioned { level: level + 1, source })?;
            Ok(Some((level, lu)))
        });
        let lus = match lus {
            Ok(l) => l,
            Err(e) => {
                rt.clear_mailboxes();
                return Err(e);
            }
        };
        let mut by_level: Vec<Option<BandedLu>> = (0..self.levels()).map(|_| None).collect();
        for (level, lu) in lus.into_iter().flatten() {
            by_level[level] = Some(lu);
        }
        let max_ops = built.iter().map(|(_, ops)| *ops).max().unwrap_or(0);
        Ok(Factored {
            lus: by_level.into_iter().map(|l| l.expect("every level owned")).collect(),
            blocks: built.into_iter().map(|(b, _)| b).collect(),
            max_ops,
        })
    }

    /// Worker-side half of the right-hand-side accumulation: sends this
    /// worker's rows of every accumulated level rhs to the level owners.
    pub fn send_rhs_rows(&self, ctx: &mut WorkerCtx, f: &Factored, rhs: &[&[f64]]) -> Result<()> {
        let Some((j, _, _)) = self.my_rows(ctx.id()) else {
            return Ok(());
        };
        let blocks = &f.blocks[ctx.id()];
        let job_rhs: Vec<&[f64]> = self.jobs[j].iter().map(|&l| rhs[l]).collect();
        let rows = accumulate_rhs_rows(blocks, &job_rhs)?;
        for (r, &level) in rows.into_iter().zip(&self.jobs[j]) {
            ctx.send(
                self.owner[level],
                MessageKind::CouplingVector,
                self.tag(level),
                Payload::Vector(r),
            )?;
        }
        Ok(())
    }

    /// One stage of [`Self::send_rhs_rows`] on all workers with shared rhs.
    pub fn accumulate(&self, rt: &mut Runtime, f: &Factored, rhs: &[Vec<f64>]) -> Result<()> {
        let slices: Vec<&[f64]> = rhs.iter().map(|r| r.as_slice()).collect();
        rt.run_stage(|ctx| self.send_rhs_rows(ctx, f, &slices))
            .map(|_| ())
    }

    /// Owner-side half: the full accumulated rhs of `level`, assembled from
    /// the row pieces in chain-position order.
    pub fn take_rhs(&self, ctx: &mut WorkerCtx, level: usize) -> Result<Vec<f64>> {
        let workers = self.job_workers(level);
        let mut pieces: Vec<(usize, Vec<f64>)> = Vec::with_capacity(workers.len());
        for _ in 0..workers.len() {
            let m = ctx.recv_tagged(MessageKind::CouplingVector, self.tag(level))?;
            let pos = workers
                .iter()
                .position(|&w| w == m.source)
                .ok_or(RuntimeError::Deadlock { worker: ctx.id() })?;
            match m.payload {
                Payload::Vector(v) => pieces.push((pos, v)),
                _ => {
                    return Err(RuntimeError::UnexpectedMessage {
                        worker: ctx.id(),
                        expected: MessageKind::CouplingVector,
                        got: m.kind,
                    }
                    .into())
                }
            }
        }
        pieces.sort_by_key(|(pos, _)| *pos);
        Ok(pieces.into_iter().flat_map(|(_, v)| v).collect())
    }
}
