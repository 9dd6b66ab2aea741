//! Asynchronous parallel basket decompression.
//!
//! When sequential reading enters a new event cluster, the reader splits
//! that cluster's baskets (and the next cluster's, for lookahead) into tasks
//! of roughly [`DEFAULT_TASK_TARGET_BYTES`] compressed bytes and queues them
//! on a fixed worker pool, then returns immediately. The consumer blocks in
//! [`BasketCell::wait`] only when it asks for a basket whose decompression
//! is still queued or running. A basket that was never scheduled is
//! decompressed inline on the calling thread.
//!
//! Status transitions are monotone:
//! `Unscheduled -> Queued -> Running -> Ready | Failed`, plus
//! `Unscheduled -> Running` for the inline path and `Queued -> Failed` when
//! the pool shuts down with the task still queued.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use crossbeam_channel::{Receiver, Sender};
use rand::Rng;

use crate::error::{Error, Result};
use crate::reader::basket::{Basket, UnzipContext};
use crate::types::{BasketKey, BasketMeta};

pub const DEFAULT_TASK_TARGET_BYTES: u64 = 102_400;

/// Baskets decompressed together by one worker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnzipTask {
    pub baskets: Vec<BasketKey>,
    pub compressed_bytes: u64,
}

/// Greedy packing in file-offset order: baskets are added to the current
/// task until its compressed size reaches `target`; a non-empty remainder
/// forms the last task.
pub fn partition_baskets(baskets: &[BasketMeta], target: u64) -> Vec<UnzipTask> {
    let mut order: Vec<&BasketMeta> = baskets.iter().collect();
    order.sort_by_key(|m| m.file_offset);

    let mut tasks = Vec::new();
    let mut current = UnzipTask {
        baskets: Vec::new(),
        compressed_bytes: 0,
    };
    for m in order {
        current.baskets.push(m.key());
        current.compressed_bytes += u64::from(m.compressed_size);
        if current.compressed_bytes >= target {
            tasks.push(std::mem::replace(
                &mut current,
                UnzipTask {
                    baskets: Vec::new(),
                    compressed_bytes: 0,
                },
            ));
        }
    }
    if !current.baskets.is_empty() {
        tasks.push(current);
    }
    tasks
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnzipConfig {
    pub workers: usize,
    pub task_target_bytes: u64,
    /// Clusters scheduled ahead of the one being read.
    pub lookahead_clusters: usize,
    /// Upper bound of a random sleep before each task. Stress testing only.
    pub max_task_delay: Option<Duration>,
}

impl Default for UnzipConfig {
    fn default() -> Self {
        Self {
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            task_target_bytes: DEFAULT_TASK_TARGET_BYTES,
            lookahead_clusters: 1,
            max_task_delay: None,
        }
    }
}

impl UnzipConfig {
    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers.max(1);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasketStatus {
    Unscheduled,
    Queued,
    Running,
    Ready,
    Failed,
}

#[derive(Debug)]
enum CellState {
    Unscheduled,
    Queued,
    Running,
    Ready(Arc<Basket>),
    Failed(Error),
}

impl CellState {
    fn status(&self) -> BasketStatus {
        match self {
            CellState::Unscheduled => BasketStatus::Unscheduled,
            CellState::Queued => BasketStatus::Queued,
            CellState::Running => BasketStatus::Running,
            CellState::Ready(_) => BasketStatus::Ready,
            CellState::Failed(_) => BasketStatus::Failed,
        }
    }
}

/// Decompression slot for one basket, with a ready signal.
#[derive(Debug)]
pub(crate) struct BasketCell {
    pub(crate) meta: BasketMeta,
    /// Unique per slot; views compare it to detect eviction.
    pub(crate) stamp: u64,
    state: Mutex<CellState>,
    ready: Condvar,
}

impl BasketCell {
    pub(crate) fn new(meta: BasketMeta, stamp: u64) -> Self {
        Self {
            meta,
            stamp,
            state: Mutex::new(CellState::Unscheduled),
            ready: Condvar::new(),
        }
    }

    pub(crate) fn status(&self) -> BasketStatus {
        self.state.lock().expect("cell lock").status()
    }

    /// `Unscheduled -> Queued`. Returns false if the basket was already
    /// picked up by someone.
    pub(crate) fn try_queue(&self) -> bool {
        let mut s = self.state.lock().expect("cell lock");
        if matches!(*s, CellState::Unscheduled) {
            *s = CellState::Queued;
            true
        } else {
            false
        }
    }

    /// Undoes `try_queue` when the task could not be submitted.
    fn unqueue(&self) {
        let mut s = self.state.lock().expect("cell lock");
        if matches!(*s, CellState::Queued) {
            *s = CellState::Unscheduled;
            self.ready.notify_all();
        }
    }

    /// `Queued -> Running` for a worker picking up its task.
    fn start(&self) -> bool {
        let mut s = self.state.lock().expect("cell lock");
        if matches!(*s, CellState::Queued) {
            *s = CellState::Running;
            true
        } else {
            false
        }
    }

    fn finish(&self, result: Result<Basket>) {
        let mut s = self.state.lock().expect("cell lock");
        *s = match result {
            Ok(b) => CellState::Ready(Arc::new(b)),
            Err(e) => CellState::Failed(e),
        };
        self.ready.notify_all();
    }

    fn cancel(&self) {
        let mut s = self.state.lock().expect("cell lock");
        if matches!(*s, CellState::Queued) {
            *s = CellState::Failed(Error::PoolShutdown);
            self.ready.notify_all();
        }
    }

    /// Returns the basket once it is ready, blocking while a worker holds it.
    /// An unscheduled basket is decompressed on the calling thread.
    pub(crate) fn wait(&self, ctx: &UnzipContext) -> Result<Arc<Basket>> {
        let mut s = self.state.lock().expect("cell lock");
        loop {
            match &*s {
                CellState::Ready(b) => return Ok(Arc::clone(b)),
                CellState::Failed(e) => return Err(e.clone()),
                CellState::Unscheduled => {
                    *s = CellState::Running;
                    drop(s);
                    self.finish(ctx.unzip(&self.meta));
                    s = self.state.lock().expect("cell lock");
                }
                CellState::Queued | CellState::Running => {
                    s = self.ready.wait(s).expect("cell lock");
                }
            }
        }
    }
}

struct Job {
    cells: Vec<Arc<BasketCell>>,
    ctx: Arc<UnzipContext>,
}

/// Fixed pool of decompression workers fed from one queue.
pub(crate) struct UnzipPool {
    sender: Mutex<Option<Sender<Job>>>,
    handles: Mutex<Vec<JoinHandle<()>>>,
    shut_down: Arc<AtomicBool>,
}

impl UnzipPool {
    pub(crate) fn new(config: &UnzipConfig) -> Result<Self> {
        let (tx, rx) = crossbeam_channel::unbounded::<Job>();
        let shut_down = Arc::new(AtomicBool::new(false));
        let mut handles = Vec::with_capacity(config.workers.max(1));
        for i in 0..config.workers.max(1) {
            let rx = rx.clone();
            let flag = Arc::clone(&shut_down);
            let max_delay = config.max_task_delay;
            let handle = std::thread::Builder::new()
                .name(format!("bkio-unzip-{i}"))
                .spawn(move || worker_loop(rx, flag, max_delay))?;
            handles.push(handle);
        }
        Ok(Self {
            sender: Mutex::new(Some(tx)),
            handles: Mutex::new(handles),
            shut_down,
        })
    }

    /// Queues one task. Cells must already be in `Queued` state.
    pub(crate) fn submit(&self, cells: Vec<Arc<BasketCell>>, ctx: Arc<UnzipContext>) -> Result<()> {
        let guard = self.sender.lock().expect("pool lock");
        let Some(tx) = guard.as_ref().filter(|_| !self.shut_down.load(Ordering::Acquire)) else {
            for c in &cells {
                c.unqueue();
            }
            return Err(Error::PoolShutdown);
        };
        tx.send(Job { cells, ctx }).map_err(|e| {
            for c in &e.0.cells {
                c.unqueue();
            }
            Error::PoolShutdown
        })
    }

    pub(crate) fn is_shut_down(&self) -> bool {
        self.shut_down.load(Ordering::Acquire)
    }

    /// Stops accepting tasks, cancels queued ones and joins the workers.
    /// Tasks already running complete normally.
    pub(crate) fn shutdown(&self) {
        self.shut_down.store(true, Ordering::Release);
        drop(self.sender.lock().expect("pool lock").take());
        let handles = std::mem::take(&mut *self.handles.lock().expect("pool lock"));
        for h in handles {
            let _ = h.join();
        }
    }
}

impl Drop for UnzipPool {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn worker_loop(rx: Receiver<Job>, shut_down: Arc<AtomicBool>, max_delay: Option<Duration>) {
    let mut rng = rand::thread_rng();
    for job in rx {
        if shut_down.load(Ordering::Acquire) {
            job.cells.iter().for_each(|c| c.cancel());
            continue;
        }
        if let Some(max) = max_delay.filter(|d| !d.is_zero()) {
            std::thread::sleep(rng.gen_range(Duration::ZERO..max));
        }
        for cell in &job.cells {
            if cell.start() {
                cell.finish(job.ctx.unzip(&cell.meta));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::CompressionSpec;

    fn basket(branch_id: u32, offset: u64, size: u32) -> BasketMeta {
        BasketMeta {
            branch_id,
            first_entry: offset,
            entry_count: 1,
            file_offset: offset,
            compressed_size: size,
            uncompressed_size: size,
            spec: CompressionSpec::NONE,
        }
    }

    #[test]
    fn greedy_packing() {
        let kb = 1024;
        let b = vec![basket(0, 0, 60 * kb), basket(1, 100, 60 * kb), basket(2, 200, 60 * kb)];
        let tasks = partition_baskets(&b, 100 * 1024);
        let keys: Vec<Vec<u32>> = tasks.iter().map(|t| t.baskets.iter().map(|k| k.branch_id).collect()).collect();
        assert_eq!(keys, vec![vec![0, 1], vec![2]]);
        assert_eq!(tasks[0].compressed_bytes, 120 * 1024);
    }

    #[test]
    fn one_large_basket() {
        let tasks = partition_baskets(&[basket(0, 0, 400 * 1024)], DEFAULT_TASK_TARGET_BYTES);
        assert_eq!(tasks.len(), 1);
        assert_eq!(tasks[0].baskets.len(), 1);
    }

    #[test]
    fn empty_cluster() {
        assert!(partition_baskets(&[], DEFAULT_TASK_TARGET_BYTES).is_empty());
    }

    #[test]
    fn file_offset_order() {
        let b = vec![basket(0, 300, 10), basket(1, 100, 10), basket(2, 200, 10)];
        let tasks = partition_baskets(&b, 1 << 20);
        let ids: Vec<u32> = tasks[0].baskets.iter().map(|k| k.branch_id).collect();
        assert_eq!(ids, vec![1, 2, 0]);
    }

    mod props {
        use proptest::prelude::*;

        use super::*;

        proptest! {
            #[test]
            fn partition_is_complete(sizes in prop::collection::vec(1u32..300_000, 0..60), target in 1u64..400_000) {
                let baskets: Vec<BasketMeta> = sizes.iter().enumerate()
                    .map(|(i, &s)| basket(i as u32, i as u64 * 1000, s))
                    .collect();
                let tasks = partition_baskets(&baskets, target);
                let mut seen: Vec<u32> = tasks.iter().flat_map(|t| t.baskets.iter().map(|k| k.branch_id)).collect();
                seen.sort_unstable();
                let expected: Vec<u32> = (0..baskets.len() as u32).collect();
                prop_assert_eq!(seen, expected);
                for (i, t) in tasks.iter().enumerate() {
                    prop_assert!(!t.baskets.is_empty());
                    if i + 1 < tasks.len() {
                        prop_assert!(t.compressed_bytes >= target);
                        // the task closed as soon as it reached the target
                        let last = t.baskets.last().unwrap().branch_id as usize;
                        prop_assert!(t.compressed_bytes - u64::from(sizes[last]) < target);
                    }
                }
            }
        }
    }
}
