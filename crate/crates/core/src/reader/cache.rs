use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use crate::types::{BasketKey, BasketMeta};
use crate::unzip::BasketCell;

/// Decompressed baskets of at most `capacity` clusters, evicted LRU by
/// cluster. Workers and the consumer share it.
#[derive(Debug)]
pub(crate) struct BasketCache {
    inner: Mutex<CacheInner>,
    capacity: usize,
    next_stamp: AtomicU64,
}

#[derive(Debug, Default)]
struct CacheInner {
    /// Least recently used cluster first.
    lru: VecDeque<usize>,
    cells: HashMap<BasketKey, Arc<BasketCell>>,
    by_cluster: HashMap<usize, Vec<BasketKey>>,
}

impl BasketCache {
    pub(crate) fn new(capacity: usize) -> Self {
        Self {
            inner: Mutex::new(CacheInner::default()),
            capacity: capacity.max(1),
            next_stamp: AtomicU64::new(1),
        }
    }

    /// Returns the slot for `meta`, creating it if needed, and marks
    /// `cluster` most recently used.
    pub(crate) fn cell(&self, meta: &BasketMeta, cluster: usize) -> Arc<BasketCell> {
        let mut inner = self.inner.lock().expect("cache lock");
        self.touch_locked(&mut inner, cluster);
        let key = meta.key();
        if let Some(c) = inner.cells.get(&key) {
            return Arc::clone(c);
        }
        let stamp = self.next_stamp.fetch_add(1, Ordering::Relaxed);
        let cell = Arc::new(BasketCell::new(*meta, stamp));
        inner.cells.insert(key, Arc::clone(&cell));
        inner.by_cluster.entry(cluster).or_default().push(key);
        cell
    }

    /// Existing slot for `key`, without touching the LRU order.
    pub(crate) fn peek(&self, key: &BasketKey) -> Option<Arc<BasketCell>> {
        self.inner
            .lock()
            .expect("cache lock")
            .cells
            .get(key)
            .cloned()
    }

    fn touch_locked(&self, inner: &mut CacheInner, cluster: usize) {
        if let Some(pos) = inner.lru.iter().position(|&c| c == cluster) {
            if pos + 1 == inner.lru.len() {
                return;
            }
            inner.lru.remove(pos);
        }
        inner.lru.push_back(cluster);
        while inner.lru.len() > self.capacity {
            let evicted = inner.lru.pop_front().expect("non-empty");
            for key in inner.by_cluster.remove(&evicted).unwrap_or_default() {
                inner.cells.remove(&key);
            }
        }
    }

    /// True while the slot that produced `stamp` is still cached.
    pub(crate) fn is_live(&self, key: &BasketKey, stamp: u64) -> bool {
        self.inner
            .lock()
            .expect("cache lock")
            .cells
            .get(key)
            .is_some_and(|c| c.stamp == stamp)
    }

    pub(crate) fn cached_clusters(&self) -> Vec<usize> {
        self.inner.lock().expect("cache lock").lru.iter().copied().collect()
    }

    pub(crate) fn clear(&self) {
        let mut inner = self.inner.lock().expect("cache lock");
        inner.lru.clear();
        inner.cells.clear();
        inner.by_cluster.clear();
    }
}
