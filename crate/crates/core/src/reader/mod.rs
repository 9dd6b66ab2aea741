//! Read path.
//!
//! Two access styles share one decompressed-basket cache:
//!
//! - per entry: [`Reader::get_entry`] / [`Reader::get_entry_into`] decode the
//!   requested branches of one entry into an [`EntryProxy`];
//! - bulk: [`Reader::read_basket_bulk`] delivers a whole basket in one call,
//!   either as raw big-endian bytes or as host-native values, as a view into
//!   the cache or as an owned copy. [`Reader::read_range_aligned`] composes
//!   baskets into index-aligned arrays over an arbitrary entry range,
//!   stitching copies where branch baskets are not aligned.
//!
//! The cache holds the baskets of at most `1 + lookahead` clusters. Views
//! carry the stamp of the cache slot they alias; once the slot is evicted
//! every access through the view fails with [`Error::StaleView`].
//!
//! One reader serves one consumer thread. The cache itself is synchronized
//! because prefetch workers fill it concurrently.

pub(crate) mod basket;
mod cache;
mod decode;
mod slice;

use std::fs::File;
use std::ops::Range;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

pub use basket::{Basket, CounterSnapshot, Counters};
pub use decode::decode_elements;
pub use slice::{AlignedColumn, BulkSlice, Delivery, Ownership};

use basket::{FileSource, UnzipContext};
use cache::BasketCache;
use slice::ViewGuard;

use crate::error::{Error, Result};
use crate::format::{decode_file, FileIndex};
use crate::types::{
    BasketKey, BasketMeta, BranchDescriptor, BranchShape, ClusterIndex, ColumnValues,
};
use crate::unzip::{partition_baskets, BasketStatus, UnzipConfig, UnzipPool};

#[derive(Debug, Clone, Default)]
pub struct ReaderOptions {
    /// Enables parallel unzipping with the given pool settings.
    pub prefetch: Option<UnzipConfig>,
    /// Branches whose baskets the pool unzips ahead; all when `None`.
    /// Other branches are still read inline on demand.
    pub prefetch_branches: Option<Vec<String>>,
}

impl ReaderOptions {
    pub fn prefetch(config: UnzipConfig) -> Self {
        Self {
            prefetch: Some(config),
            prefetch_branches: None,
        }
    }

    pub fn prefetch_branches<S: Into<String>>(mut self, names: impl IntoIterator<Item = S>) -> Self {
        self.prefetch_branches = Some(names.into_iter().map(Into::into).collect());
        self
    }
}

struct Prefetcher {
    pool: UnzipPool,
    config: UnzipConfig,
    /// Indexed by branch id.
    active: Vec<bool>,
}

/// Values of the requested branches for one entry.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EntryProxy {
    entry: u64,
    columns: Vec<(u32, ColumnValues)>,
}

impl EntryProxy {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entry(&self) -> u64 {
        self.entry
    }

    /// Values of `branch_id` for this entry: one element for scalars, the
    /// array for fixed and variable arrays.
    pub fn get(&self, branch_id: u32) -> Option<&ColumnValues> {
        self.columns
            .iter()
            .find(|(id, _)| *id == branch_id)
            .map(|(_, v)| v)
    }

    /// Values in the order the branches were requested.
    pub fn columns(&self) -> impl Iterator<Item = (u32, &ColumnValues)> {
        self.columns.iter().map(|(id, v)| (*id, v))
    }

    /// Values of the `i`-th requested branch.
    pub fn column(&self, i: usize) -> Option<&ColumnValues> {
        self.columns.get(i).map(|(_, v)| v)
    }

    /// First element of the `i`-th requested branch, for f32 scalars.
    pub fn f32(&self, i: usize) -> Option<f32> {
        self.column(i)?.as_f32()?.first().copied()
    }
}

pub struct Reader {
    index: FileIndex,
    ctx: Arc<UnzipContext>,
    /// Baskets of each branch, by first entry.
    per_branch: Vec<Vec<BasketMeta>>,
    /// Baskets of each cluster, in file order.
    per_cluster: Vec<Vec<BasketMeta>>,
    cache: Arc<BasketCache>,
    prefetch: Option<Prefetcher>,
    current_cluster: AtomicUsize,
}

impl std::fmt::Debug for Reader {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Reader")
            .field("branches", &self.index.branches.len())
            .field("baskets", &self.index.baskets.len())
            .field("total_entries", &self.index.total_entries)
            .field("prefetch", &self.prefetch.is_some())
            .finish()
    }
}

const NO_CLUSTER: usize = usize::MAX;

impl Reader {
    /// Opens a file and decodes its index. No basket is read yet.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        Self::open_with(path, ReaderOptions::default())
    }

    pub fn open_with(path: impl AsRef<Path>, options: ReaderOptions) -> Result<Self> {
        let mut file = File::open(path)?;
        let index = decode_file(&mut file)?;

        let mut per_branch = vec![Vec::new(); index.branches.len()];
        for m in &index.baskets {
            per_branch[m.branch_id as usize].push(*m);
        }
        for list in &mut per_branch {
            list.sort_by_key(|m: &BasketMeta| m.first_entry);
        }
        let mut per_cluster = vec![Vec::new(); index.clusters.len()];
        for m in &index.baskets {
            let k = index
                .clusters
                .cluster_of(m.first_entry)
                .expect("validated: every basket lies inside a cluster");
            per_cluster[k].push(*m);
        }

        let lookahead = options.prefetch.as_ref().map_or(1, |c| c.lookahead_clusters);
        let mut active = vec![options.prefetch_branches.is_none(); index.branches.len()];
        for name in options.prefetch_branches.iter().flatten() {
            let b = index
                .branches
                .iter()
                .find(|b| &b.name == name)
                .ok_or_else(|| Error::UnknownBranch(name.clone()))?;
            active[b.branch_id as usize] = true;
        }
        let prefetch = match options.prefetch {
            Some(config) => Some(Prefetcher {
                pool: UnzipPool::new(&config)?,
                config,
                active,
            }),
            None => None,
        };

        let ctx = Arc::new(UnzipContext {
            source: FileSource::new(file),
            branches: index.branches.clone(),
            counters: Arc::new(Counters::default()),
        });
        Ok(Self {
            index,
            ctx,
            per_branch,
            per_cluster,
            cache: Arc::new(BasketCache::new(1 + lookahead)),
            prefetch,
            current_cluster: AtomicUsize::new(NO_CLUSTER),
        })
    }

    pub fn branches(&self) -> &[BranchDescriptor] {
        &self.index.branches
    }

    pub fn branch(&self, branch_id: u32) -> Result<&BranchDescriptor> {
        self.index
            .branches
            .get(branch_id as usize)
            .ok_or_else(|| Error::UnknownBranch(branch_id.to_string()))
    }

    pub fn branch_id(&self, name: &str) -> Result<u32> {
        self.index
            .branches
            .iter()
            .find(|b| b.name == name)
            .map(|b| b.branch_id)
            .ok_or_else(|| Error::UnknownBranch(name.to_owned()))
    }

    pub fn total_entries(&self) -> u64 {
        self.index.total_entries
    }

    pub fn clusters(&self) -> &ClusterIndex {
        &self.index.clusters
    }

    pub fn index(&self) -> &FileIndex {
        &self.index
    }

    /// Baskets of one branch, ordered by first entry.
    pub fn baskets(&self, branch_id: u32) -> Result<&[BasketMeta]> {
        self.branch(branch_id)?;
        Ok(&self.per_branch[branch_id as usize])
    }

    pub fn counters(&self) -> CounterSnapshot {
        self.ctx.counters.snapshot()
    }

    pub fn reset_counters(&self) {
        self.ctx.counters.reset();
    }

    /// Drops every cached basket, invalidating all outstanding views.
    pub fn clear_cache(&self) {
        self.cache.clear();
        self.current_cluster.store(NO_CLUSTER, Ordering::Relaxed);
    }

    /// Clusters currently held by the cache, least recently used first.
    pub fn cached_clusters(&self) -> Vec<usize> {
        self.cache.cached_clusters()
    }

    pub fn prefetch_enabled(&self) -> bool {
        self.prefetch.is_some()
    }

    fn basket_index(&self, branch_id: u32, entry: u64) -> usize {
        let list = &self.per_branch[branch_id as usize];
        list.partition_point(|m| m.first_entry <= entry) - 1
    }

    fn find_basket(&self, key: &BasketKey) -> Option<&BasketMeta> {
        let list = self.per_branch.get(key.branch_id as usize)?;
        let i = list.binary_search_by_key(&key.first_entry, |m| m.first_entry).ok()?;
        Some(&list[i])
    }

    /// Decompressed basket for `meta`, from cache, prefetch or inline.
    fn fetch(&self, meta: &BasketMeta) -> Result<(u64, Arc<Basket>)> {
        let cluster = self
            .index
            .clusters
            .cluster_of(meta.first_entry)
            .expect("validated: every basket lies inside a cluster");
        self.enter_cluster(cluster);
        let cell = self.cache.cell(meta, cluster);
        let basket = cell.wait(&self.ctx)?;
        Ok((cell.stamp, basket))
    }

    fn enter_cluster(&self, cluster: usize) {
        if self.current_cluster.swap(cluster, Ordering::Relaxed) == cluster {
            return;
        }
        let Some(p) = &self.prefetch else { return };
        let last = (cluster + p.config.lookahead_clusters).min(self.per_cluster.len() - 1);
        for k in cluster..=last {
            // A shut-down pool leaves baskets unscheduled; they are then
            // decompressed inline.
            if self.schedule_cluster(k).is_err() {
                break;
            }
        }
    }

    /// Queues the not-yet-scheduled baskets of cluster `k` on the worker
    /// pool and returns the number of tasks submitted. Returns immediately.
    /// Fails with [`Error::PoolShutdown`] when prefetching is disabled or
    /// the pool was shut down.
    pub fn schedule_cluster(&self, k: usize) -> Result<usize> {
        let p = self.prefetch.as_ref().ok_or(Error::PoolShutdown)?;
        if p.pool.is_shut_down() {
            return Err(Error::PoolShutdown);
        }
        let baskets = self.per_cluster.get(k).ok_or(Error::ClusterOutOfRange {
            cluster: k,
            count: self.per_cluster.len(),
        })?;

        let cells: Vec<_> = baskets
            .iter()
            .filter(|m| p.active[m.branch_id as usize])
            .map(|m| self.cache.cell(m, k))
            .filter(|c| c.try_queue())
            .collect();
        let metas: Vec<BasketMeta> = cells.iter().map(|c| c.meta).collect();
        let tasks = partition_baskets(&metas, p.config.task_target_bytes);
        let n = tasks.len();
        let mut cells: std::collections::HashMap<BasketKey, _> =
            cells.into_iter().map(|c| (c.meta.key(), c)).collect();
        for task in tasks {
            let task_cells = task
                .baskets
                .iter()
                .map(|k| cells.remove(k).expect("queued above"))
                .collect();
            p.pool.submit(task_cells, Arc::clone(&self.ctx))?;
            self.ctx.counters.add_tasks(1);
        }
        Ok(n)
    }

    /// Blocks until the basket is decompressed, decompressing it on this
    /// thread if it was never scheduled.
    pub fn wait_basket(&self, key: BasketKey) -> Result<Arc<Basket>> {
        let meta = *self
            .find_basket(&key)
            .ok_or(Error::EntryOutOfRange {
                entry: key.first_entry,
                total: self.index.total_entries,
            })?;
        self.fetch(&meta).map(|(_, b)| b)
    }

    pub fn basket_status(&self, key: BasketKey) -> BasketStatus {
        self.cache
            .peek(&key)
            .map_or(BasketStatus::Unscheduled, |c| c.status())
    }

    /// Stops the prefetch pool. Queued baskets fail with
    /// [`Error::PoolShutdown`]; later reads of unscheduled baskets run inline.
    pub fn shutdown_prefetch(&self) {
        if let Some(p) = &self.prefetch {
            p.pool.shutdown();
        }
    }

    /// Values of `branches` at `entry`.
    pub fn get_entry(&self, branches: &[u32], entry: u64) -> Result<EntryProxy> {
        let mut proxy = EntryProxy::new();
        self.get_entry_into(branches, entry, &mut proxy)?;
        Ok(proxy)
    }

    /// Refills `proxy` with the values of `branches` at `entry`, reusing its
    /// buffers.
    pub fn get_entry_into(&self, branches: &[u32], entry: u64, proxy: &mut EntryProxy) -> Result<()> {
        if entry >= self.index.total_entries {
            return Err(Error::EntryOutOfRange {
                entry,
                total: self.index.total_entries,
            });
        }
        proxy.entry = entry;
        proxy.columns.truncate(branches.len());
        for (i, &branch_id) in branches.iter().enumerate() {
            let element = self.branch(branch_id)?.element;
            let meta = self.per_branch[branch_id as usize][self.basket_index(branch_id, entry)];
            let (_, basket) = self.fetch(&meta)?;
            let local = (entry - meta.first_entry) as usize;

            if i == proxy.columns.len() {
                proxy.columns.push((branch_id, ColumnValues::with_capacity(element, 1)));
            }
            let slot = &mut proxy.columns[i];
            if slot.0 != branch_id || slot.1.element_type() != element {
                *slot = (branch_id, ColumnValues::with_capacity(element, 1));
            }
            slot.1.clear();
            basket.decode_entries_into(local..local + 1, &mut slot.1);
        }
        self.ctx.counters.add_proxy_fill();
        Ok(())
    }

    /// Delivers every entry of one basket in a single call. Only scalar and
    /// fixed-array branches are supported.
    pub fn read_basket_bulk(
        &self,
        branch_id: u32,
        basket_index: usize,
        mode: Delivery,
        ownership: Ownership,
    ) -> Result<BulkSlice> {
        let branch = self.branch(branch_id)?;
        let Some(per_entry) = branch.shape.fixed_len() else {
            return Err(Error::UnsupportedShape {
                branch: branch.name.clone(),
                message: "bulk delivery needs scalar or fixed-array elements".into(),
            });
        };
        let list = &self.per_branch[branch_id as usize];
        let meta = list.get(basket_index).ok_or(Error::BasketOutOfRange {
            branch_id,
            index: basket_index,
            count: list.len(),
        })?;
        let (stamp, basket) = self.fetch(meta)?;
        let counters = &self.ctx.counters;
        Ok(match (mode, ownership) {
            (Delivery::RawSerialized, Ownership::Copy) => {
                BulkSlice::raw_copy(&basket, branch.element, per_entry)
            }
            (Delivery::DecodedNative, Ownership::Copy) => {
                let values = match basket.decoded_slice() {
                    Some(v) => v.to_owned(),
                    None => {
                        counters.add_decode_pass();
                        decode_elements(basket.element_bytes(), branch.element)?
                    }
                };
                BulkSlice::decoded_copy(&basket, values, per_entry)
            }
            (mode, Ownership::View) => {
                if mode == Delivery::DecodedNative {
                    basket.decoded(counters);
                }
                let guard = ViewGuard {
                    basket,
                    stamp,
                    cache: Arc::clone(&self.cache),
                };
                BulkSlice::view(guard, mode, branch.element, per_entry)
            }
        })
    }

    /// Host-native arrays of `branches` covering exactly `range`, index
    /// aligned across branches. A branch whose range lies inside one basket
    /// is returned as a view unless `force_copy`; otherwise the overlapping
    /// baskets are stitched into an owned array. Var-array branches are
    /// always copied and carry per-entry offsets.
    pub fn read_range_aligned(
        &self,
        branches: &[u32],
        range: Range<u64>,
        force_copy: bool,
    ) -> Result<Vec<AlignedColumn>> {
        if range.start > range.end || range.end > self.index.total_entries {
            return Err(Error::RangeOutOfBounds {
                start: range.start,
                end: range.end,
                total: self.index.total_entries,
            });
        }
        branches
            .iter()
            .map(|&id| self.read_branch_range(id, range.clone(), force_copy))
            .collect()
    }

    fn read_branch_range(&self, branch_id: u32, range: Range<u64>, force_copy: bool) -> Result<AlignedColumn> {
        let branch = self.branch(branch_id)?;
        let var = branch.shape == BranchShape::VarArray;
        if range.is_empty() {
            return Ok(AlignedColumn::owned(
                branch_id,
                ColumnValues::with_capacity(branch.element, 0),
                var.then(|| vec![0]),
            ));
        }

        let list = &self.per_branch[branch_id as usize];
        let first = self.basket_index(branch_id, range.start);
        let meta = list[first];
        if !force_copy && !var && range.end <= meta.end_entry() {
            let (stamp, basket) = self.fetch(&meta)?;
            basket.decoded(&self.ctx.counters);
            let local = (range.start - meta.first_entry) as usize..(range.end - meta.first_entry) as usize;
            let elements = basket.element_range(local);
            let guard = ViewGuard {
                basket,
                stamp,
                cache: Arc::clone(&self.cache),
            };
            return Ok(AlignedColumn::view(branch_id, guard, elements));
        }

        let estimate = branch
            .shape
            .fixed_len()
            .map_or(0, |n| n * (range.end - range.start) as usize);
        let mut values = ColumnValues::with_capacity(branch.element, estimate);
        let mut offsets = var.then(|| {
            let mut v = Vec::with_capacity((range.end - range.start) as usize + 1);
            v.push(0u32);
            v
        });
        for meta in list[first..].iter().take_while(|m| m.first_entry < range.end) {
            let (_, basket) = self.fetch(meta)?;
            let lo = range.start.max(meta.first_entry) - meta.first_entry;
            let hi = range.end.min(meta.end_entry()) - meta.first_entry;
            let local = lo as usize..hi as usize;
            basket.decode_entries_into(local.clone(), &mut values);
            if let Some(offsets) = offsets.as_mut() {
                let mut total = *offsets.last().expect("starts with 0");
                for len in basket.entry_lengths(local).expect("var_array basket") {
                    total += len;
                    offsets.push(total);
                }
            }
        }
        Ok(AlignedColumn::owned(branch_id, values, offsets))
    }
}
