mod common;

use bkio::{CompressionSpec, Delivery, EntryProxy, Error, Ownership, Reader};
use common::{dimuon_config, write_random};

fn dimuon(spec: CompressionSpec, misaligned: bool, entries: usize, every: u64) -> (tempfile::TempDir, Reader, Vec<common::Column>) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dimuon.bkio");
    let cols = write_random(&path, &dimuon_config(spec, misaligned, every), entries, 42);
    let r = Reader::open(&path).unwrap();
    (dir, r, cols)
}

#[test]
fn bulk_path_counts_one_decompress_and_decode_per_basket() {
    let (_d, r, _) = dimuon(CompressionSpec::deflate(6).unwrap(), true, 20_000, 5_000);
    let baskets: usize = (0..4).map(|b| r.baskets(b).unwrap().len()).sum();
    r.reset_counters();
    for b in 0..4u32 {
        for k in 0..r.baskets(b).unwrap().len() {
            let s = r.read_basket_bulk(b, k, Delivery::DecodedNative, Ownership::View).unwrap();
            assert_eq!(s.as_f32().unwrap().len(), s.entry_count as usize);
        }
    }
    let c = r.counters();
    assert_eq!(c.decompress_calls, baskets as u64);
    assert_eq!(c.decode_passes, baskets as u64);
    assert_eq!(c.proxy_fills, 0);
}

#[test]
fn per_entry_path_counts_one_proxy_fill_per_entry() {
    let (_d, r, _) = dimuon(CompressionSpec::NONE, false, 20_000, 5_000);
    let baskets: usize = (0..4).map(|b| r.baskets(b).unwrap().len()).sum();
    r.reset_counters();
    let mut proxy = EntryProxy::new();
    for e in 0..r.total_entries() {
        r.get_entry_into(&[0, 1, 2, 3], e, &mut proxy).unwrap();
    }
    let c = r.counters();
    assert_eq!(c.proxy_fills, 20_000);
    assert_eq!(c.decompress_calls, baskets as u64);
}

#[test]
fn raw_bulk_slice_of_thousand_floats_is_4000_bytes() {
    let (_d, r, cols) = dimuon(CompressionSpec::lz4(), false, 3_000, 3_000);
    let s = r.read_basket_bulk(0, 0, Delivery::RawSerialized, Ownership::Copy).unwrap();
    assert_eq!(s.entry_count, 1000);
    assert_eq!(s.raw().unwrap().len(), 4000);
    assert_eq!(s.raw().unwrap(), &cols[0].range_be(0..1000)[..]);
    assert!(matches!(s.as_f32(), Err(Error::ModeMismatch { .. })));
}

#[test]
fn views_go_stale_after_eviction_and_copies_do_not() {
    let (_d, r, cols) = dimuon(CompressionSpec::NONE, false, 5_000, 1_000);
    let view = r.read_basket_bulk(0, 0, Delivery::DecodedNative, Ownership::View).unwrap();
    let copy = r.read_basket_bulk(0, 0, Delivery::DecodedNative, Ownership::Copy).unwrap();
    let range = r.read_range_aligned(&[1], 10..20, false).unwrap().remove(0);
    assert_eq!(range.ownership, Ownership::View);
    assert!(view.is_valid());

    r.get_entry(&[0], 1_500).unwrap();
    r.get_entry(&[0], 2_500).unwrap();
    assert_eq!(r.cached_clusters().len(), 2);

    assert!(!view.is_valid());
    assert!(matches!(view.values(), Err(Error::StaleView { branch_id: 0, first_entry: 0 })));
    assert!(matches!(range.values(), Err(Error::StaleView { .. })));
    assert!(range.into_owned().is_err());
    assert_eq!(common::be(copy.values().unwrap()), cols[0].range_be(0..1000));

    let fresh = r.read_basket_bulk(0, 0, Delivery::DecodedNative, Ownership::View).unwrap();
    assert!(fresh.is_valid());
    assert!(!view.is_valid());
}

#[test]
fn misaligned_mass_range_copies_mass_and_views_momenta() {
    let (_d, r, cols) = dimuon(CompressionSpec::NONE, true, 4_000, 4_000);
    let mass_first: Vec<u64> = r.baskets(3).unwrap().iter().map(|m| m.first_entry).collect();
    let px_first: Vec<u64> = r.baskets(0).unwrap().iter().map(|m| m.first_entry).collect();
    assert!(mass_first.iter().any(|f| !px_first.contains(f)));

    // 700 starts a mass basket inside the first px basket.
    let got = r.read_range_aligned(&[0, 3], 650..750, false).unwrap();
    assert_eq!(got[0].ownership, Ownership::View);
    assert_eq!(got[1].ownership, Ownership::Copy);
    assert_eq!(common::be(got[0].values().unwrap()), cols[0].range_be(650..750));
    assert_eq!(common::be(got[1].values().unwrap()), cols[3].range_be(650..750));

    let forced = r.read_range_aligned(&[0], 650..750, true).unwrap();
    assert_eq!(forced[0].ownership, Ownership::Copy);
}

#[test]
fn out_of_range_access_is_an_error() {
    let (_d, r, _) = dimuon(CompressionSpec::NONE, false, 100, 50);
    assert!(matches!(r.get_entry(&[0], 100), Err(Error::EntryOutOfRange { entry: 100, total: 100 })));
    assert!(r.get_entry(&[0], 99).is_ok());
    assert!(matches!(r.read_range_aligned(&[0], 90..101, false), Err(Error::RangeOutOfBounds { .. })));
    assert!(matches!(r.read_basket_bulk(0, 9, Delivery::RawSerialized, Ownership::Copy), Err(Error::BasketOutOfRange { .. })));
    assert!(r.get_entry(&[7], 0).is_err());
    assert!(r.read_range_aligned(&[0], 100..100, false).unwrap()[0].values().unwrap().is_empty());
}

#[test]
fn empty_file_opens_with_zero_entries() {
    let (_d, r, _) = dimuon(CompressionSpec::lz4(), false, 0, 10);
    assert_eq!(r.total_entries(), 0);
    assert!(r.clusters().is_empty());
    assert!(r.get_entry(&[0], 0).is_err());
}

#[test]
fn damaged_files_fail_to_open() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(Reader::open(dir.path().join("missing")), Err(Error::Io(_))));

    let zero = dir.path().join("zero");
    std::fs::write(&zero, b"").unwrap();
    assert!(Reader::open(&zero).is_err());

    let path = dir.path().join("ok.bkio");
    write_random(&path, &dimuon_config(CompressionSpec::NONE, false, 100), 500, 3);
    let bytes = std::fs::read(&path).unwrap();

    let cut = dir.path().join("cut.bkio");
    std::fs::write(&cut, &bytes[..bytes.len() / 2]).unwrap();
    assert!(Reader::open(&cut).is_err());

    let mut bad = bytes.clone();
    let n = bad.len();
    bad[n - 1] ^= 0xff;
    let tail = dir.path().join("tail.bkio");
    std::fs::write(&tail, &bad).unwrap();
    assert!(matches!(Reader::open(&tail), Err(Error::BadTrailer(_))));

    let mut v2 = bytes;
    v2[7] = 2;
    let ver = dir.path().join("v2.bkio");
    std::fs::write(&ver, &v2).unwrap();
    assert!(matches!(Reader::open(&ver), Err(Error::UnsupportedVersion(2))));
}
