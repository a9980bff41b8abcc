//! `psig` — command-line frontend for the puncturable-signature library.
//!
//! Subcommands cover the key lifecycle (`keygen`, `sign`, `puncture`,
//! `verify`), a benchmark harness (`bench`), and the proof-of-stake
//! simulator (`simulate`, `lrsl`).
//!
//! Exit codes are stable and scriptable:
//!
//! | code | meaning                                             |
//! |------|-----------------------------------------------------|
//! | 0    | success                                             |
//! | 2    | unparsable input: bad flags, unreadable/corrupt files |
//! | 3    | signing refused: the message's prefix is punctured  |
//! | 4    | verification or scenario property rejected          |
//! | 5    | semantically invalid configuration                  |

mod bench;

use clap::{Args, Parser, Subcommand};
use psig::chainsim::{lrsl_scenario, run_simulation, LrslConfig, SimConfig};
use psig::codec;
use psig::ps::{self, PrefixExtractor, SignError};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::fmt;
use std::fs;
use std::io::{Read as _, Write as _};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Puncturable signatures over BLS12-381: keys, signatures, benchmarks,
/// and a proof-of-stake chain simulator.
#[derive(Parser)]
#[command(name = "psig", version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a key pair able to absorb a given number of punctures.
    Keygen(KeygenArgs),
    /// Sign a message; optionally puncture its prefix in the same step.
    Sign(SignArgs),
    /// Puncture a secret key at a message's prefix.
    Puncture(PunctureArgs),
    /// Verify a signature file or base64 envelope.
    Verify(VerifyArgs),
    /// Benchmark keygen/sign/verify/puncture over a parameter grid.
    Bench(bench::BenchArgs),
    /// Run the proof-of-stake simulator from a JSON config.
    Simulate(SimulateArgs),
    /// Run the long-range key-leak attack scenario from a JSON config.
    Lrsl(LrslArgs),
}

#[derive(Args)]
struct KeygenArgs {
    /// Number of punctures the key must support.
    #[arg(long, default_value_t = 1000)]
    n: u64,
    /// Target false-positive (spurious signing-failure) rate.
    #[arg(long, default_value_t = 1e-3)]
    pr: f64,
    /// Prefix scheme: first LEN bytes of the message.
    #[arg(long, default_value_t = 8, conflicts_with_all = ["prefix_delimiter", "prefix_range"])]
    prefix_len: u32,
    /// Prefix scheme: everything before the first occurrence of this byte.
    #[arg(long, value_parser = parse_byte)]
    prefix_delimiter: Option<u8>,
    /// Prefix scheme: START:LEN byte range of the message.
    #[arg(long, value_parser = parse_range, conflicts_with = "prefix_delimiter")]
    prefix_range: Option<(u32, u32)>,
    /// Pairing curve; only bls12-381 is supported.
    #[arg(long, env = "PSIG_CURVE", default_value = "bls12-381")]
    curve: String,
    /// Deterministic key generation from this seed (omit for OS entropy).
    #[arg(long)]
    seed: Option<u64>,
    /// Where to write the secret key.
    #[arg(long, default_value = "sk.psig")]
    sk: PathBuf,
    /// Where to write the public key.
    #[arg(long, default_value = "vk.psig")]
    vk: PathBuf,
}

#[derive(Args)]
struct SignArgs {
    /// Secret-key file (rewritten in place when --puncture is given).
    #[arg(long)]
    sk: PathBuf,
    /// Message to sign, as a UTF-8 string.
    #[arg(short, long, required_unless_present = "message_file", conflicts_with = "message_file")]
    message: Option<String>,
    /// Message to sign, read as raw bytes from a file.
    #[arg(long)]
    message_file: Option<PathBuf>,
    /// Also write the signature as a binary container to this path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Puncture the message's prefix immediately after signing, updating
    /// the key file atomically.
    #[arg(long)]
    puncture: bool,
    /// Deterministic signing randomness (omit for OS entropy).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct PunctureArgs {
    /// Secret-key file, rewritten in place (atomically).
    #[arg(long)]
    sk: PathBuf,
    /// Message whose prefix to puncture.
    #[arg(short, long, required_unless_present = "message_file", conflicts_with = "message_file")]
    message: Option<String>,
    /// Message read as raw bytes from a file.
    #[arg(long)]
    message_file: Option<PathBuf>,
    /// Treat the message bytes as the prefix itself, bypassing the key's
    /// extractor.
    #[arg(long)]
    raw: bool,
}

#[derive(Args)]
struct VerifyArgs {
    /// Public-key file.
    #[arg(long)]
    vk: PathBuf,
    /// Message, as a UTF-8 string.
    #[arg(short, long, required_unless_present = "message_file", conflicts_with = "message_file")]
    message: Option<String>,
    /// Message read as raw bytes from a file.
    #[arg(long)]
    message_file: Option<PathBuf>,
    /// Signature: binary container or base64 envelope ("-" reads stdin).
    #[arg(long)]
    sig: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Simulation config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Monte-Carlo sweep: run this many seeds (config seed, seed+1, ...)
    /// and emit an array of reports.
    #[arg(long, default_value_t = 1)]
    runs: u64,
    /// Run the sweep on one thread per seed.
    #[arg(long)]
    parallel: bool,
}

#[derive(Args)]
struct LrslArgs {
    /// Attack-scenario config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

// ---------------------------------------------------------------------------
// Errors and exit codes
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub enum CliError {
    /// Unreadable or undecodable input (exit 2).
    Parse(String),
    /// The message's prefix is punctured; signing refused (exit 3).
    PrefixUnavailable,
    /// Verification failed or a scenario property did not hold (exit 4).
    Reject(String),
    /// Structurally valid but semantically bad configuration (exit 5).
    Config(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Parse(_) => 2,
            CliError::PrefixUnavailable => 3,
            CliError::Reject(_) => 4,
            CliError::Config(_) => 5,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Parse(m) => write!(f, "{m}"),
            CliError::PrefixUnavailable => {
                write!(f, "prefix unavailable: already punctured (or filter false positive)")
            }
            CliError::Reject(m) => write!(f, "{m}"),
            CliError::Config(m) => write!(f, "invalid configuration: {m}"),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Parse(format!("i/o error: {e}"))
    }
}

impl From<codec::CodecError> for CliError {
    fn from(e: codec::CodecError) -> Self {
        CliError::Parse(format!("cannot decode file: {e}"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.cmd {
        Cmd::Keygen(a) => cmd_keygen(a),
        Cmd::Sign(a) => cmd_sign(a),
        Cmd::Puncture(a) => cmd_puncture(a),
        Cmd::Verify(a) => cmd_verify(a),
        Cmd::Bench(a) => bench::cmd_bench(a),
        Cmd::Simulate(a) => cmd_simulate(a),
        Cmd::Lrsl(a) => cmd_lrsl(a),
    }
}

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

fn parse_byte(s: &str) -> Result<u8, String> {
    if let Some(hex) = s.strip_prefix("0x") {
        u8::from_str_radix(hex, 16).map_err(|e| e.to_string())
    } else if s.len() == 1 && s.is_ascii() {
        Ok(s.as_bytes()[0])
    } else {
        s.parse::<u8>().map_err(|_| {
            format!("expected a single ASCII character, a decimal byte, or 0xNN, got {s:?}")
        })
    }
}

fn parse_range(s: &str) -> Result<(u32, u32), String> {
    let (start, len) = s
        .split_once(':')
        .ok_or_else(|| format!("expected START:LEN, got {s:?}"))?;
    let start = start.parse().map_err(|e| format!("bad range start: {e}"))?;
    let len = len.parse().map_err(|e| format!("bad range length: {e}"))?;
    if len == 0 {
        return Err("range length must be nonzero".into());
    }
    Ok((start, len))
}

fn rng_from(seed: Option<u64>) -> ChaCha12Rng {
    match seed {
        Some(s) => ChaCha12Rng::seed_from_u64(s),
        None => ChaCha12Rng::from_entropy(),
    }
}

fn message_bytes(
    message: &Option<String>,
    file: &Option<PathBuf>,
) -> Result<Vec<u8>, CliError> {
    match (message, file) {
        (Some(m), None) => Ok(m.clone().into_bytes()),
        (None, Some(p)) => Ok(fs::read(p)?),
        _ => unreachable!("clap enforces exactly one message source"),
    }
}

/// Replace a file's contents atomically: write a sibling temp file, sync,
/// rename over the original.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let tmp = dir.join(format!(
        ".psig-tmp-{}-{:x}",
        std::process::id(),
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_nanos())
            .unwrap_or(0)
    ));
    let result = (|| -> Result<(), CliError> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)?;
        Ok(())
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

/// Print a line to stdout, treating a closed pipe (e.g. `psig ... | head`)
/// as a clean early exit rather than a panic.
fn print_line(contents: &str) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{contents}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => std::process::exit(0),
        r => Ok(r?),
    }
}

fn write_output(out: &Option<PathBuf>, contents: &str) -> Result<(), CliError> {
    match out {
        Some(p) => {
            fs::write(p, contents)?;
            Ok(())
        }
        None => print_line(contents),
    }
}

fn read_json_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Parse(format!("cannot parse {}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

fn cmd_keygen(a: KeygenArgs) -> Result<(), CliError> {
    match a.curve.to_ascii_lowercase().replace('_', "-").as_str() {
        "bls12-381" => {}
        other => {
            return Err(CliError::Config(format!(
                "unsupported curve {other:?}; this build provides bls12-381 only"
            )))
        }
    }
    let extractor = if let Some(d) = a.prefix_delimiter {
        PrefixExtractor::Delimiter { byte: d }
    } else if let Some((start, len)) = a.prefix_range {
        PrefixExtractor::Range { start, len }
    } else {
        if a.prefix_len == 0 {
            return Err(CliError::Config("prefix length must be nonzero".into()));
        }
        PrefixExtractor::FixedLength { len: a.prefix_len }
    };
    let ctx = psig::algebra::GroupContext::bls12_381();
    let mut rng = rng_from(a.seed);
    let (sk, vk) = ps::setup(&ctx, a.n, a.pr, extractor, &mut rng)
        .map_err(|e| CliError::Config(e.to_string()))?;

    let sk_bytes = codec::secret_key_bytes(&sk);
    let vk_bytes = codec::public_key_bytes(&vk);
    write_atomic(&a.sk, &sk_bytes)?;
    write_atomic(&a.vk, &vk_bytes)?;
    let p = sk.params();
    println!(
        "wrote {} ({} bytes) and {} ({} bytes): n={} pr={:e} ell={} k={}",
        a.sk.display(),
        sk_bytes.len(),
        a.vk.display(),
        vk_bytes.len(),
        p.n,
        p.pr,
        p.ell,
        p.k
    );
    Ok(())
}

fn cmd_sign(a: SignArgs) -> Result<(), CliError> {
    let mut sk = codec::read_secret_key(&fs::read(&a.sk)?)?;
    let msg = message_bytes(&a.message, &a.message_file)?;
    let mut rng = rng_from(a.seed);
    let result = if a.puncture {
        sk.sign_and_puncture(&msg, &mut rng).map(|(sig, outcome)| (sig, Some(outcome)))
    } else {
        sk.sign(&msg, &mut rng).map(|sig| (sig, None))
    };
    let (sig, outcome) = match result {
        Ok(v) => v,
        Err(SignError::PrefixUnavailable) => return Err(CliError::PrefixUnavailable),
        Err(SignError::Extract(e)) => {
            return Err(CliError::Parse(format!("message does not fit the key's prefix scheme: {e}")))
        }
    };
    if let Some(outcome) = outcome {
        write_atomic(&a.sk, &codec::secret_key_bytes(&sk))?;
        if outcome.over_capacity {
            eprintln!(
                "warning: key is past its rated capacity ({} punctures); \
                 spurious signing failures will exceed the configured rate",
                sk.puncture_count()
            );
        }
    }
    let meta = codec::KeyMeta::of_secret(&sk);
    if let Some(out) = &a.out {
        write_atomic(out, &codec::signature_bytes(&sig, &meta))?;
    }
    print_line(&codec::signature_envelope(&sig, &meta))?;
    Ok(())
}

fn cmd_puncture(a: PunctureArgs) -> Result<(), CliError> {
    let mut sk = codec::read_secret_key(&fs::read(&a.sk)?)?;
    let msg = message_bytes(&a.message, &a.message_file)?;
    let prefix: &[u8] = if a.raw {
        &msg
    } else {
        sk.extractor()
            .extract(&msg)
            .map_err(|e| CliError::Parse(format!("message does not fit the key's prefix scheme: {e}")))?
    };
    let prefix = prefix.to_vec();
    let outcome = sk.puncture(&prefix);
    write_atomic(&a.sk, &codec::secret_key_bytes(&sk))?;
    println!(
        "punctured; key now holds {} punctures ({} live shares)",
        outcome.punctures,
        sk.live_share_count()
    );
    if outcome.over_capacity {
        eprintln!("warning: key is past its rated capacity of {} punctures", sk.params().n);
    }
    Ok(())
}

fn cmd_verify(a: VerifyArgs) -> Result<(), CliError> {
    let vk = codec::read_public_key(&fs::read(&a.vk)?)?;
    let msg = message_bytes(&a.message, &a.message_file)?;
    let raw = if a.sig.as_os_str() == "-" {
        let mut buf = Vec::new();
        std::io::stdin().read_to_end(&mut buf)?;
        buf
    } else {
        fs::read(&a.sig)?
    };
    // Binary container or single-line base64 envelope, detected by magic.
    let (sig, meta) = if raw.starts_with(codec::MAGIC) {
        codec::read_signature(&raw)?
    } else {
        let text = std::str::from_utf8(&raw)
            .map_err(|_| CliError::Parse("signature is neither a psig container nor text".into()))?;
        codec::read_signature_envelope(text.trim())?
    };
    if meta != codec::KeyMeta::of_public(&vk) {
        print_line("reject")?;
        return Err(CliError::Reject(
            "signature metadata does not match the public key".into(),
        ));
    }
    if vk.verify(&msg, &sig) {
        print_line("accept")
    } else {
        print_line("reject")?;
        Err(CliError::Reject("signature rejected".into()))
    }
}

fn cmd_simulate(a: SimulateArgs) -> Result<(), CliError> {
    let cfg: SimConfig = read_json_config(&a.config)?;
    if a.runs == 0 {
        return Err(CliError::Config("--runs must be at least 1".into()));
    }
    // Surface config errors before spawning any sweep.
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;

    let run_seed = |offset: u64| {
        let cfg = SimConfig { seed: cfg.seed.wrapping_add(offset), ..cfg.clone() };
        run_simulation(&cfg).map_err(|e| CliError::Config(e.to_string()))
    };
    let reports = if a.runs == 1 {
        vec![run_seed(0)?]
    } else if a.parallel {
        let run_seed = &run_seed;
        std::thread::scope(|scope| {
            let handles: Vec<_> =
                (0..a.runs).map(|i| scope.spawn(move || run_seed(i))).collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("sim thread panicked"))
                .collect::<Vec<_>>()
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?
    } else {
        (0..a.runs).map(run_seed).collect::<Result<Vec<_>, _>>()?
    };

    let json = if reports.len() == 1 {
        serde_json::to_string_pretty(&reports[0]).expect("report serializes")
    } else {
        serde_json::to_string_pretty(&reports).expect("reports serialize")
    };
    write_output(&a.out, &json)
}

fn cmd_lrsl(a: LrslArgs) -> Result<(), CliError> {
    let cfg: LrslConfig = read_json_config(&a.config)?;
    let report = lrsl_scenario(&cfg).map_err(|e| CliError::Config(e.to_string()))?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    write_output(&a.out, &json)?;
    if report.accepted_forgeries > 0 {
        return Err(CliError::Reject(format!(
            "{} forged block(s) passed honest validation",
            report.accepted_forgeries
        )));
    }
    if !report.control_sign_succeeded || !report.control_block_accepted {
        return Err(CliError::Reject(
            "control branch failed: pre-puncture corruption should have succeeded".into(),
        ));
    }
    Ok(())
}
