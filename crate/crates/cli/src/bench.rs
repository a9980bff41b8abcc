//! Benchmark harness: times keygen/sign/verify/puncture over an
//! (n, pr) parameter grid at puncture counts {0, n/2, n}, reporting
//! mean/median/stddev nanoseconds per operation plus serialized sizes.
//!
//! Methodology: monotonic clock, 5 warm-up calls discarded, then the
//! requested number of timed samples (at least 30). Operations that
//! complete in under a microsecond are timed in batches and the batch
//! time divided out, so clock granularity does not dominate.
//!
//! CSV column order is fixed:
//!
//! ```text
//! op,n,pr,ell,k,puncture_count,iterations,mean_ns,median_ns,stddev_ns,sk_bytes,vk_bytes,sig_bytes
//! ```
//!
//! JSON output mirrors the same rows and field order. Two derived rows
//! per grid point, `ratio_sign_mid_over_zero` and
//! `ratio_puncture_mid_over_zero`, carry the mid-load/zero-load mean (and
//! median) time ratios in the `*_ns` columns as dimensionless values,
//! with `iterations` 0 marking them as derived.

use crate::{write_output, CliError};
use clap::{Args, ValueEnum};
use psig::algebra::GroupContext;
use psig::bloom;
use psig::codec;
use psig::ps::{self, PrefixExtractor, Signature};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::Serialize;
use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

#[derive(Args)]
pub struct BenchArgs {
    /// Puncture capacities to benchmark (comma-separated list).
    #[arg(long, value_delimiter = ',', default_value = "1000")]
    n: Vec<u64>,
    /// False-positive rates to benchmark (comma-separated list).
    #[arg(long, value_delimiter = ',', default_value = "0.001")]
    pr: Vec<f64>,
    /// Timed samples per operation (minimum 30).
    #[arg(long, default_value_t = 100)]
    iterations: u64,
    /// Write results here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Seed for key generation and signing randomness.
    #[arg(long, default_value_t = 0xB5EED)]
    seed: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

/// One benchmark row; field order is the CSV column order.
#[derive(Debug, Clone, Serialize)]
pub struct BenchRecord {
    pub op: String,
    pub n: u64,
    pub pr: f64,
    pub ell: u32,
    pub k: u32,
    pub puncture_count: u64,
    pub iterations: u64,
    pub mean_ns: f64,
    pub median_ns: f64,
    pub stddev_ns: f64,
    pub sk_bytes: u64,
    pub vk_bytes: u64,
    pub sig_bytes: u64,
}

pub const CSV_HEADER: &str =
    "op,n,pr,ell,k,puncture_count,iterations,mean_ns,median_ns,stddev_ns,sk_bytes,vk_bytes,sig_bytes";

pub fn cmd_bench(a: BenchArgs) -> Result<(), CliError> {
    if a.iterations < 30 {
        return Err(CliError::Config("--iterations must be at least 30".into()));
    }
    if a.n.is_empty() || a.pr.is_empty() {
        return Err(CliError::Config("parameter grid must be nonempty".into()));
    }
    let mut records = Vec::new();
    for &n in &a.n {
        for &pr in &a.pr {
            records.extend(bench_point(n, pr, a.iterations, a.seed)?);
        }
    }
    let text = match a.format {
        Format::Csv => to_csv(&records),
        Format::Json => serde_json::to_string_pretty(&records).expect("records serialize"),
    };
    write_output(&a.out, &text)
}

fn to_csv(records: &[BenchRecord]) -> String {
    let mut s = String::from(CSV_HEADER);
    for r in records {
        write!(
            s,
            "\n{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.op,
            r.n,
            r.pr,
            r.ell,
            r.k,
            r.puncture_count,
            r.iterations,
            r.mean_ns,
            r.median_ns,
            r.stddev_ns,
            r.sk_bytes,
            r.vk_bytes,
            r.sig_bytes
        )
        .expect("writing to a String cannot fail");
    }
    s
}

/// Time an operation: 5 warm-up calls, one calibration call that sizes a
/// batch so each sample spans at least ~20 µs, then `iterations` samples
/// of per-call nanoseconds.
fn measure<F: FnMut()>(iterations: u64, mut op: F) -> Vec<f64> {
    for _ in 0..5 {
        op();
    }
    let probe_start = Instant::now();
    op();
    let probe_ns = probe_start.elapsed().as_nanos().max(1);
    let batch = if probe_ns < 1_000 { (20_000 / probe_ns).clamp(1, 20_000) as u32 } else { 1 };
    let mut samples = Vec::with_capacity(iterations as usize);
    for _ in 0..iterations {
        let start = Instant::now();
        for _ in 0..batch {
            op();
        }
        samples.push(start.elapsed().as_nanos() as f64 / batch as f64);
    }
    samples
}

struct Stats {
    mean: f64,
    median: f64,
    stddev: f64,
}

fn stats(mut samples: Vec<f64>) -> Stats {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    samples.sort_by(|a, b| a.total_cmp(b));
    let median = if samples.len() % 2 == 1 {
        samples[samples.len() / 2]
    } else {
        (samples[samples.len() / 2 - 1] + samples[samples.len() / 2]) / 2.0
    };
    let stddev = if samples.len() > 1 {
        (samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Stats { mean, median, stddev }
}

/// Prefix namespaces keep preload punctures, signing prefixes, and
/// puncture-timing prefixes disjoint under the fixed-length-8 extractor.
fn prefixed_message(namespace: u64, i: u64, suffix: &[u8]) -> Vec<u8> {
    let mut m = (namespace | i).to_be_bytes().to_vec();
    m.extend_from_slice(suffix);
    m
}

const NS_PRELOAD: u64 = 0;
const NS_SIGN: u64 = 1 << 62;
const NS_PUNCTURE: u64 = 2 << 62;

fn bench_point(n: u64, pr: f64, iterations: u64, seed: u64) -> Result<Vec<BenchRecord>, CliError> {
    let params = bloom::derive_params(n, pr).map_err(|e| CliError::Config(e.to_string()))?;
    let ctx = GroupContext::bls12_381();
    let extractor = PrefixExtractor::FixedLength { len: 8 };
    let mut rng = ChaCha12Rng::seed_from_u64(seed);

    let record = |op: &str, count: u64, iters: u64, st: Stats, sk_bytes: usize| BenchRecord {
        op: op.into(),
        n,
        pr,
        ell: params.ell,
        k: params.k,
        puncture_count: count,
        iterations: iters,
        mean_ns: st.mean,
        median_ns: st.median,
        stddev_ns: st.stddev,
        sk_bytes: sk_bytes as u64,
        vk_bytes: 0, // filled below once the sizes are known
        sig_bytes: Signature::ENCODED_LEN as u64,
    };

    let (base_sk, vk) =
        ps::setup(&ctx, n, pr, extractor, &mut rng).map_err(|e| CliError::Config(e.to_string()))?;
    let vk_bytes = codec::public_key_bytes(&vk).len() as u64;
    let mut records = Vec::new();

    // Key generation.
    let keygen_stats = stats(measure(iterations, || {
        let _ = ps::setup(&ctx, n, pr, extractor, &mut rng);
    }));
    records.push(record(
        "keygen",
        0,
        iterations,
        keygen_stats,
        codec::secret_key_bytes(&base_sk).len(),
    ));

    // Sign / verify / puncture at each load point.
    let counts: BTreeSet<u64> = [0, n / 2, n].into_iter().collect();
    let mut sign_means = std::collections::BTreeMap::new();
    let mut sign_medians = std::collections::BTreeMap::new();
    let mut punct_means = std::collections::BTreeMap::new();
    let mut punct_medians = std::collections::BTreeMap::new();
    for &count in &counts {
        let mut sk = base_sk.clone();
        for j in 0..count {
            sk.puncture(&(NS_PRELOAD | j).to_be_bytes());
        }
        let sk_bytes = codec::secret_key_bytes(&sk).len();

        // Live signing prefixes, pre-screened so a filter false positive
        // never lands inside a timed sample.
        let needed = (iterations + 10) as usize;
        let sign_msgs: Vec<Vec<u8>> = (0u64..)
            .map(|i| prefixed_message(NS_SIGN, i, b" bench payload"))
            .filter(|m| !sk.punctured(&m[..8]))
            .take(needed)
            .collect();

        let mut i = 0usize;
        let sign_stats = stats(measure(iterations, || {
            let m = &sign_msgs[i % sign_msgs.len()];
            i += 1;
            sk.sign(m, &mut rng).expect("prefix pre-screened live");
        }));
        sign_means.insert(count, sign_stats.mean);
        sign_medians.insert(count, sign_stats.median);
        records.push(record("sign", count, iterations, sign_stats, sk_bytes));

        let pairs: Vec<(&Vec<u8>, Signature)> = sign_msgs
            .iter()
            .take(32)
            .map(|m| (m, sk.sign(m, &mut rng).expect("prefix pre-screened live")))
            .collect();
        let mut i = 0usize;
        let verify_stats = stats(measure(iterations, || {
            let (m, sig) = &pairs[i % pairs.len()];
            i += 1;
            assert!(vk.verify(m, sig), "honest signature must verify");
        }));
        records.push(record("verify", count, iterations, verify_stats, sk_bytes));

        // Puncturing fresh prefixes mutates the key, so it runs last; the
        // per-call cost is load-independent (k hashes + k share writes).
        let mut j = 0u64;
        let punct_stats = stats(measure(iterations, || {
            sk.puncture(&(NS_PUNCTURE | j).to_be_bytes());
            j += 1;
        }));
        punct_means.insert(count, punct_stats.mean);
        punct_medians.insert(count, punct_stats.median);
        records.push(record("puncture", count, iterations, punct_stats, sk_bytes));
    }

    // Derived mid-load/zero-load ratios.
    let mid = n / 2;
    if mid != 0 {
        for (op, means, medians) in [
            ("ratio_sign_mid_over_zero", &sign_means, &sign_medians),
            ("ratio_puncture_mid_over_zero", &punct_means, &punct_medians),
        ] {
            records.push(record(
                op,
                mid,
                0,
                Stats {
                    mean: means[&mid] / means[&0],
                    median: medians[&mid] / medians[&0],
                    stddev: 0.0,
                },
                0,
            ));
        }
    }

    for r in &mut records {
        r.vk_bytes = vk_bytes;
        if r.iterations == 0 {
            // Ratio rows carry dimensionless values; sizes do not apply.
            r.vk_bytes = 0;
            r.sig_bytes = 0;
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats_of_known_samples() {
        let st = stats(vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(st.mean, 2.5);
        assert_eq!(st.median, 2.5);
        assert!((st.stddev - 1.2909944).abs() < 1e-6);
        let st = stats(vec![5.0, 1.0, 3.0]);
        assert_eq!(st.median, 3.0);
    }

    #[test]
    fn csv_has_fixed_header_and_one_line_per_record() {
        let rec = BenchRecord {
            op: "sign".into(),
            n: 8,
            pr: 0.01,
            ell: 77,
            k: 7,
            puncture_count: 4,
            iterations: 30,
            mean_ns: 1.5,
            median_ns: 1.0,
            stddev_ns: 0.5,
            sk_bytes: 100,
            vk_bytes: 200,
            sig_bytes: 84,
        };
        let csv = to_csv(&[rec.clone(), rec]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines[1], "sign,8,0.01,77,7,4,30,1.5,1,0.5,100,200,84");
        assert_eq!(lines[0].split(',').count(), lines[1].split(',').count());
    }

    #[test]
    fn namespaces_do_not_collide() {
        // 2^62-wide namespaces: a billion indices stay disjoint.
        let a = prefixed_message(NS_SIGN, 5, b"");
        let b = (NS_PUNCTURE | 5).to_be_bytes().to_vec();
        let c = (NS_PRELOAD | 5).to_be_bytes().to_vec();
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_ne!(b, c);
    }
}
