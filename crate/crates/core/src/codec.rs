//! Basket payload compression.
//!
//! All codecs are block codecs over one basket payload. Timing covers the
//! raw codec call only; output buffers are allocated before the clock starts.

use std::io::Write;
use std::time::{Duration, Instant};

use flate2::{Compression, Decompress, FlushDecompress, Status};

use crate::error::{Error, Result};
use crate::types::{Codec, CompressionSpec};

/// Byte counts and wall time of one codec call.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CodecStats {
    pub bytes_in: u64,
    pub bytes_out: u64,
    pub elapsed: Duration,
}

/// Output of [`compress`]. `spec` is what must be recorded for the basket:
/// it is [`CompressionSpec::NONE`] when the payload was stored verbatim.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Compressed {
    pub bytes: Vec<u8>,
    pub spec: CompressionSpec,
}

/// Compresses `payload`. If the encoded frame is not strictly smaller than
/// the payload, the payload is stored verbatim with codec `none`.
pub fn compress(payload: &[u8], spec: CompressionSpec) -> Result<(Compressed, CodecStats)> {
    spec.validate()?;
    let start = Instant::now();
    let frame = match spec.codec {
        Codec::None => None,
        Codec::Deflate => Some(deflate(payload, spec.level)?),
        Codec::Lz4 => Some(lz4_block(payload, lz4::block::CompressionMode::DEFAULT, spec.codec)?),
        Codec::Lz4Hc => Some(lz4_block(
            payload,
            lz4::block::CompressionMode::HIGHCOMPRESSION(i32::from(spec.level)),
            spec.codec,
        )?),
    };
    let elapsed = start.elapsed();

    let out = match frame {
        Some(bytes) if bytes.len() < payload.len() => Compressed { bytes, spec },
        _ => Compressed {
            bytes: payload.to_vec(),
            spec: CompressionSpec::NONE,
        },
    };
    let stats = CodecStats {
        bytes_in: payload.len() as u64,
        bytes_out: out.bytes.len() as u64,
        elapsed,
    };
    Ok((out, stats))
}

fn deflate(payload: &[u8], level: u8) -> Result<Vec<u8>> {
    let mut enc = flate2::write::ZlibEncoder::new(
        Vec::with_capacity(payload.len() / 2 + 64),
        Compression::new(u32::from(level)),
    );
    enc.write_all(payload)
        .and_then(|_| enc.finish())
        .map_err(|e| Error::CodecFailure {
            codec: Codec::Deflate,
            message: e.to_string(),
        })
}

fn lz4_block(payload: &[u8], mode: lz4::block::CompressionMode, codec: Codec) -> Result<Vec<u8>> {
    lz4::block::compress(payload, Some(mode), false).map_err(|e| Error::CodecFailure {
        codec,
        message: e.to_string(),
    })
}

/// Decompresses `frame` into a fresh buffer of exactly `expected_size` bytes.
pub fn decompress(
    frame: &[u8],
    spec: CompressionSpec,
    expected_size: usize,
) -> Result<(Vec<u8>, CodecStats)> {
    let mut out = Vec::new();
    let stats = decompress_into(frame, spec, expected_size, &mut out)?;
    Ok((out, stats))
}

/// Like [`decompress`], reusing `out`'s allocation. On success `out` holds
/// exactly `expected_size` bytes.
pub fn decompress_into(
    frame: &[u8],
    spec: CompressionSpec,
    expected_size: usize,
    out: &mut Vec<u8>,
) -> Result<CodecStats> {
    out.clear();
    // One spare byte detects frames that inflate past the expected size.
    out.reserve(expected_size + 1);
    let elapsed = match spec.codec {
        Codec::None => {
            if frame.len() != expected_size {
                return Err(Error::SizeMismatch {
                    expected: expected_size,
                    actual: frame.len(),
                });
            }
            let start = Instant::now();
            out.extend_from_slice(frame);
            start.elapsed()
        }
        Codec::Deflate => inflate(frame, expected_size, out)?,
        Codec::Lz4 | Codec::Lz4Hc => {
            out.resize(expected_size + 1, 0);
            let start = Instant::now();
            let res = lz4::block::decompress_to_buffer(frame, Some(expected_size as i32 + 1), out);
            let elapsed = start.elapsed();
            let n = res.map_err(|e| Error::CorruptFrame {
                codec: spec.codec,
                message: e.to_string(),
            })?;
            out.truncate(n);
            if n != expected_size {
                return Err(Error::SizeMismatch {
                    expected: expected_size,
                    actual: n,
                });
            }
            elapsed
        }
    };
    Ok(CodecStats {
        bytes_in: frame.len() as u64,
        bytes_out: out.len() as u64,
        elapsed,
    })
}

fn inflate(frame: &[u8], expected_size: usize, out: &mut Vec<u8>) -> Result<Duration> {
    let corrupt = |message: String| Error::CorruptFrame {
        codec: Codec::Deflate,
        message,
    };
    let mut z = Decompress::new(true);
    let start = Instant::now();
    let status = z.decompress_vec(frame, out, FlushDecompress::Finish);
    let elapsed = start.elapsed();
    match status.map_err(|e| corrupt(e.to_string()))? {
        Status::StreamEnd => {
            if out.len() != expected_size {
                return Err(Error::SizeMismatch {
                    expected: expected_size,
                    actual: out.len(),
                });
            }
            if z.total_in() as usize != frame.len() {
                return Err(corrupt(format!(
                    "{} trailing bytes after stream end",
                    frame.len() - z.total_in() as usize
                )));
            }
        }
        Status::Ok | Status::BufError => {
            if out.len() > expected_size {
                return Err(Error::SizeMismatch {
                    expected: expected_size,
                    actual: out.len(),
                });
            }
            return Err(corrupt("stream ended early".into()));
        }
    }
    Ok(elapsed)
}

/// One row of a codec comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct CodecRow {
    pub spec: CompressionSpec,
    pub uncompressed_bytes: u64,
    pub compressed_bytes: u64,
    /// uncompressed / compressed
    pub ratio: f64,
    /// Uncompressed bytes produced per second of decompression.
    pub decompress_throughput: f64,
    pub compress_elapsed: Duration,
    /// `ratio` divided by the deflate-6 ratio.
    pub relative_ratio: f64,
    /// `decompress_throughput` divided by the deflate-6 throughput.
    pub relative_throughput: f64,
}

pub const REFERENCE_SPEC: CompressionSpec = CompressionSpec {
    codec: Codec::Deflate,
    level: 6,
};

/// Block size used by [`ratio_and_speed`], matching a typical basket.
pub const DEFAULT_BLOCK_BYTES: usize = 256 * 1024;

/// Compression ratio and decompression throughput for each spec, normalized
/// to deflate level 6. The dataset is cut into `DEFAULT_BLOCK_BYTES` blocks
/// that are compressed independently, as baskets are.
pub fn ratio_and_speed(dataset: &[u8], specs: &[CompressionSpec]) -> Result<Vec<CodecRow>> {
    ratio_and_speed_with(dataset, specs, DEFAULT_BLOCK_BYTES, 3)
}

/// [`ratio_and_speed`] with explicit block size and number of timed
/// decompression passes (the fastest pass is kept).
pub fn ratio_and_speed_with(
    dataset: &[u8],
    specs: &[CompressionSpec],
    block_bytes: usize,
    passes: usize,
) -> Result<Vec<CodecRow>> {
    if dataset.is_empty() {
        return Err(Error::InvalidSpec("dataset is empty".into()));
    }
    let block_bytes = block_bytes.max(1);
    let passes = passes.max(1);

    let measure = |spec: CompressionSpec| -> Result<(u64, f64, Duration)> {
        let mut frames = Vec::new();
        let mut compress_elapsed = Duration::ZERO;
        for block in dataset.chunks(block_bytes) {
            let (c, stats) = compress(block, spec)?;
            compress_elapsed += stats.elapsed;
            frames.push((c, block.len()));
        }
        let compressed: u64 = frames.iter().map(|(c, _)| c.bytes.len() as u64).sum();
        let mut out = Vec::with_capacity(block_bytes + 1);
        let mut best = Duration::MAX;
        for _ in 0..passes {
            let mut pass = Duration::ZERO;
            for (c, n) in &frames {
                pass += decompress_into(&c.bytes, c.spec, *n, &mut out)?.elapsed;
            }
            best = best.min(pass);
        }
        let secs = best.as_secs_f64().max(1e-9);
        Ok((compressed, dataset.len() as f64 / secs, compress_elapsed))
    };

    let measured = specs
        .iter()
        .map(|&spec| measure(spec).map(|m| (spec, m)))
        .collect::<Result<Vec<_>>>()?;
    let (ref_size, ref_speed, _) = match measured.iter().find(|(s, _)| *s == REFERENCE_SPEC) {
        Some(&(_, m)) => m,
        None => measure(REFERENCE_SPEC)?,
    };
    let ref_ratio = dataset.len() as f64 / ref_size as f64;

    Ok(measured
        .into_iter()
        .map(|(spec, (size, speed, compress_elapsed))| {
            let ratio = dataset.len() as f64 / size as f64;
            CodecRow {
                spec,
                uncompressed_bytes: dataset.len() as u64,
                compressed_bytes: size,
                ratio,
                decompress_throughput: speed,
                compress_elapsed,
                relative_ratio: ratio / ref_ratio,
                relative_throughput: speed / ref_speed,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn all_specs() -> Vec<CompressionSpec> {
        vec![
            CompressionSpec::NONE,
            CompressionSpec::deflate(1).unwrap(),
            CompressionSpec::deflate(6).unwrap(),
            CompressionSpec::deflate(9).unwrap(),
            CompressionSpec::lz4(),
            CompressionSpec::lz4hc(9).unwrap(),
        ]
    }

    fn compressible(n: usize) -> Vec<u8> {
        (0..n).map(|i| ((i / 7) % 13) as u8).collect()
    }

    #[test]
    fn empty_payload() {
        let (c, stats) = compress(&[], CompressionSpec::deflate(6).unwrap()).unwrap();
        assert_eq!(stats.bytes_in, 0);
        let (out, _) = decompress(&c.bytes, c.spec, 0).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn zeros_collapse_under_lz4() {
        let payload = vec![0u8; 1 << 20];
        let (c, _) = compress(&payload, CompressionSpec::lz4()).unwrap();
        assert_eq!(c.spec, CompressionSpec::lz4());
        // LZ4 spends one length byte per 255 matched bytes, so ~len/255 is
        // the floor. Measured with the bundled liblz4.
        assert_eq!(c.bytes.len(), 4122);
    }

    #[test]
    fn random_bytes_fall_back_to_stored() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let payload: Vec<u8> = (0..64 * 1024).map(|_| rng.gen()).collect();
        let (c, stats) = compress(&payload, CompressionSpec::deflate(6).unwrap()).unwrap();
        assert_eq!(c.spec, CompressionSpec::NONE);
        assert_eq!(c.bytes, payload);
        assert_eq!(stats.bytes_out, payload.len() as u64);
        let (out, _) = decompress(&c.bytes, c.spec, payload.len()).unwrap();
        assert_eq!(out, payload);
    }

    #[test]
    fn round_trip_every_spec() {
        let payload = compressible(100_000);
        for spec in all_specs() {
            let (c, _) = compress(&payload, spec).unwrap();
            assert_eq!(c.spec, spec, "compressible data should not fall back");
            let (out, stats) = decompress(&c.bytes, c.spec, payload.len()).unwrap();
            assert_eq!(out, payload, "{spec}");
            assert_eq!(stats.bytes_out, payload.len() as u64);
        }
    }

    #[test]
    fn truncated_frames_are_corrupt() {
        let payload = compressible(50_000);
        for spec in [CompressionSpec::deflate(6).unwrap(), CompressionSpec::lz4(), CompressionSpec::lz4hc(9).unwrap()] {
            let (c, _) = compress(&payload, spec).unwrap();
            let cut = &c.bytes[..c.bytes.len() / 2];
            let err = decompress(cut, spec, payload.len()).unwrap_err();
            assert!(matches!(err, Error::CorruptFrame { .. }), "{spec}: {err}");
        }
    }

    #[test]
    fn off_by_one_sizes() {
        let payload = compressible(10_000);
        for spec in all_specs() {
            let (c, _) = compress(&payload, spec).unwrap();
            for expected in [payload.len() - 1, payload.len() + 1] {
                let err = decompress(&c.bytes, c.spec, expected).unwrap_err();
                assert!(matches!(err, Error::SizeMismatch { .. }), "{spec} {expected}: {err}");
            }
        }
    }

    #[test]
    fn deterministic_output() {
        let payload = compressible(30_000);
        for spec in all_specs() {
            assert_eq!(compress(&payload, spec).unwrap().0, compress(&payload, spec).unwrap().0);
        }
    }

    #[test]
    fn normalization_identity() {
        let data = compressible(600_000);
        let rows = ratio_and_speed_with(&data, &[REFERENCE_SPEC, CompressionSpec::NONE, CompressionSpec::lz4()], 64 * 1024, 1).unwrap();
        assert!((rows[0].relative_ratio - 1.0).abs() < 1e-12);
        assert_eq!(rows[0].relative_throughput, 1.0);
        assert!(rows[1].relative_ratio < rows[2].relative_ratio);
        assert!((rows[1].ratio - 1.0).abs() < 1e-12);
        assert!(ratio_and_speed(&[], &[REFERENCE_SPEC]).is_err());
    }

    #[test]
    fn concurrent_calls() {
        let payload = compressible(200_000);
        std::thread::scope(|s| {
            for spec in all_specs() {
                let payload = &payload;
                s.spawn(move || {
                    for _ in 0..5 {
                        let (c, _) = compress(payload, spec).unwrap();
                        let (out, _) = decompress(&c.bytes, c.spec, payload.len()).unwrap();
                        assert_eq!(&out, payload);
                    }
                });
            }
        });
    }

    mod props {
        use proptest::prelude::*;

        use super::super::*;

        fn spec_strategy() -> impl Strategy<Value = CompressionSpec> {
            prop_oneof![
                Just(CompressionSpec::NONE),
                Just(CompressionSpec::deflate(1).unwrap()),
                Just(CompressionSpec::deflate(6).unwrap()),
                Just(CompressionSpec::deflate(9).unwrap()),
                Just(CompressionSpec::lz4()),
                Just(CompressionSpec::lz4hc(9).unwrap()),
            ]
        }

        proptest! {
            #[test]
            fn lossless(spec in spec_strategy(), payload in prop::collection::vec(0u8..8, 0..5000)) {
                let (c, stats) = compress(&payload, spec).unwrap();
                prop_assert!(c.bytes.len() <= payload.len());
                prop_assert_eq!(stats.bytes_out as usize, c.bytes.len());
                let (out, _) = decompress(&c.bytes, c.spec, payload.len()).unwrap();
                prop_assert_eq!(out, payload);
            }
        }
    }
}
