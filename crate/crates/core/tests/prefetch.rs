mod common;

use std::time::Duration;

use bkio::{BasketKey, BasketStatus, CompressionSpec, Delivery, Error, Ownership, Reader, ReaderOptions, UnzipConfig};
use common::{be, dimuon_config, write_random};

fn write_dimuon(dir: &tempfile::TempDir, entries: usize, every: u64) -> std::path::PathBuf {
    let path = dir.path().join("d.bkio");
    write_random(&path, &dimuon_config(CompressionSpec::deflate(6).unwrap(), true, every), entries, 9);
    path
}

fn prefetching(path: &std::path::Path, workers: usize, delay: Option<Duration>) -> Reader {
    let cfg = UnzipConfig {
        max_task_delay: delay,
        ..UnzipConfig::default().with_workers(workers)
    };
    Reader::open_with(path, ReaderOptions::prefetch(cfg)).unwrap()
}

/// Every branch read basket by basket, decoded, as big-endian bytes.
fn dump(r: &Reader) -> Vec<Vec<u8>> {
    (0..r.branches().len() as u32)
        .map(|b| {
            let mut out = Vec::new();
            for k in 0..r.baskets(b).unwrap().len() {
                let s = r.read_basket_bulk(b, k, Delivery::DecodedNative, Ownership::Copy).unwrap();
                out.extend(be(s.values().unwrap()));
            }
            out
        })
        .collect()
}

fn dump_entries(r: &Reader) -> Vec<u8> {
    let mut out = Vec::new();
    for e in 0..r.total_entries() {
        let p = r.get_entry(&[0, 1, 2, 3], e).unwrap();
        for (_, v) in p.columns() {
            out.extend(be(v.as_slice()));
        }
    }
    out
}

#[test]
fn parallel_results_match_serial() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_dimuon(&dir, 30_000, 4_000);
    let serial = Reader::open(&path).unwrap();
    let parallel = prefetching(&path, 4, None);
    assert!(parallel.prefetch_enabled());
    assert_eq!(dump(&serial), dump(&parallel));
    assert!(parallel.counters().tasks_scheduled > 0);
    assert_eq!(dump_entries(&Reader::open(&path).unwrap()), dump_entries(&prefetching(&path, 3, None)));
}

#[test]
fn jittered_workers_stay_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_dimuon(&dir, 12_000, 1_500);
    let want = dump(&Reader::open(&path).unwrap());
    for i in 0..100 {
        let r = prefetching(&path, 1 + i % 4, Some(Duration::from_micros(300)));
        assert_eq!(dump(&r), want, "iteration {i}");
    }
}

#[test]
fn scheduling_a_cluster_twice_submits_nothing_new() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_dimuon(&dir, 10_000, 2_000);
    let r = prefetching(&path, 2, None);
    let n = r.schedule_cluster(1).unwrap();
    assert!(n > 0);
    assert_eq!(r.schedule_cluster(1).unwrap(), 0);
    assert!(matches!(r.schedule_cluster(99), Err(Error::ClusterOutOfRange { .. })));

    let key = r.baskets(0).unwrap().iter().find(|m| m.first_entry >= 2_000).unwrap().key();
    r.wait_basket(key).unwrap();
    assert_eq!(r.basket_status(key), BasketStatus::Ready);
    assert_eq!(r.schedule_cluster(1).unwrap(), 0);
}

#[test]
fn schedule_without_prefetch_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_dimuon(&dir, 1_000, 500);
    let r = Reader::open(&path).unwrap();
    assert!(matches!(r.schedule_cluster(0), Err(Error::PoolShutdown)));
}

#[test]
fn unscheduled_wait_decompresses_inline() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_dimuon(&dir, 5_000, 5_000);
    let r = prefetching(&path, 2, None);
    let serial = Reader::open(&path).unwrap();
    let key = BasketKey { branch_id: 3, first_entry: 0 };
    assert_eq!(r.basket_status(key), BasketStatus::Unscheduled);
    let got = r.wait_basket(key).unwrap();
    let want = serial.wait_basket(key).unwrap();
    assert_eq!(got.raw(), want.raw());
    assert_eq!(r.basket_status(key), BasketStatus::Ready);
}

#[test]
fn corrupt_basket_fails_and_reports_codec_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_dimuon(&dir, 8_000, 2_000);
    let meta = Reader::open(&path).unwrap().baskets(1).unwrap()[1];
    let mut bytes = std::fs::read(&path).unwrap();
    let start = meta.file_offset as usize + 26 + 2;
    for b in &mut bytes[start..start + 24] {
        *b = !*b;
    }
    std::fs::write(&path, &bytes).unwrap();

    let r = prefetching(&path, 2, None);
    r.schedule_cluster(0).unwrap();
    let err = r.wait_basket(meta.key()).unwrap_err();
    assert!(matches!(err, Error::CorruptFrame { .. } | Error::SizeMismatch { .. }), "{err}");
    assert_eq!(r.basket_status(meta.key()), BasketStatus::Failed);
    assert!(r.get_entry(&[1], meta.first_entry).is_err());
    assert!(r.get_entry(&[0], meta.first_entry).is_ok());
}

#[test]
fn wait_after_shutdown_returns_instead_of_hanging() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_dimuon(&dir, 20_000, 20_000);
    let cfg = UnzipConfig {
        task_target_bytes: 1,
        max_task_delay: Some(Duration::from_millis(20)),
        ..UnzipConfig::default().with_workers(1)
    };
    let r = Reader::open_with(&path, ReaderOptions::prefetch(cfg)).unwrap();
    let tasks = r.schedule_cluster(0).unwrap();
    assert!(tasks > 3);
    r.shutdown_prefetch();

    let mut cancelled = 0;
    for b in 0..4 {
        for m in r.baskets(b).unwrap().to_vec() {
            match r.wait_basket(m.key()) {
                Ok(_) => {}
                Err(Error::PoolShutdown) => cancelled += 1,
                Err(e) => panic!("{e}"),
            }
        }
    }
    assert!(cancelled > 0);
    assert!(matches!(r.schedule_cluster(0), Err(Error::PoolShutdown)));
}

#[test]
fn reads_after_shutdown_fall_back_to_inline() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_dimuon(&dir, 6_000, 1_000);
    let r = prefetching(&path, 2, None);
    r.shutdown_prefetch();
    assert_eq!(dump(&r), dump(&Reader::open(&path).unwrap()));
}

#[test]
fn prefetch_can_be_limited_to_some_branches() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_dimuon(&dir, 6_000, 3_000);
    let opts = ReaderOptions::prefetch(UnzipConfig::default().with_workers(2)).prefetch_branches(["px", "py"]);
    let r = Reader::open_with(&path, opts).unwrap();
    r.schedule_cluster(0).unwrap();
    let px = r.baskets(0).unwrap()[0].key();
    let mass = r.baskets(3).unwrap()[0].key();
    assert_ne!(r.basket_status(px), BasketStatus::Unscheduled);
    assert_eq!(r.basket_status(mass), BasketStatus::Unscheduled);
    assert_eq!(dump(&r), dump(&Reader::open(&path).unwrap()));

    let bad = ReaderOptions::prefetch(UnzipConfig::default()).prefetch_branches(["energy"]);
    assert!(matches!(Reader::open_with(&path, bad), Err(Error::UnknownBranch(_))));
}
