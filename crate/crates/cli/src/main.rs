use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use vfhe_core::adversary::{TamperKind, TamperSpec};
use vfhe_core::backend::{BackendId, BackendRegistry, CipherMatrix, PlainMatrix};
use vfhe_core::bench::{emit_report, run_benchmark, BenchConfig, ReportFormat};
use vfhe_core::checksum::{CheckMode, HashMode, SquareStrategy, VerificationReport};
use vfhe_core::matrix::parse_text;
use vfhe_core::protocol::client::{client_execute, protect, unprotect, verify_offline, ClientSecrets, OperandB, TaskSpec};
use vfhe_core::protocol::{ServerConfig, SessionStore};
use vfhe_core::Error;

mod config;

use config::CliConfig;

/// Process exit status, stable across subcommands.
#[derive(Debug)]
pub enum Failure {
    /// Exit 1.
    Io(String),
    /// Exit 2.
    Usage(String),
    /// Exit 3.
    Integrity(Box<VerificationReport>),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Io(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Integrity(_) => 3,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::IntegrityViolation(out) => Failure::Integrity(Box::new(out.report)),
            Error::Config(m) | Error::TamperSpec(m) => Failure::Usage(m),
            Error::InvalidParams(_) | Error::InvalidErrorConfig(_) | Error::ModeMismatch(_) => {
                Failure::Usage(e.to_string())
            }
            other => Failure::Io(other.to_string()),
        }
    }
}

type CmdResult = Result<(), Failure>;

#[derive(Parser)]
#[command(name = "vfhe", version, about = "Verifiable matrix multiplication over encrypted data")]
struct Cli {
    /// Flat key=value defaults (keys: t, mode, backend, host, port, seed, hash_mode, error_r, output).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Plaintext modulus (exact backend).
    #[arg(long)]
    t: Option<u64>,
    /// Check mode: plain, with_error or dual.
    #[arg(long)]
    mode: Option<CheckMode>,
    /// Backend: exact or approximate.
    #[arg(long)]
    backend: Option<BackendId>,
    #[arg(long)]
    seed: Option<u64>,
    /// Hash entries: uniform or pow2.
    #[arg(long, value_parser = config::parse_hash_mode)]
    hash_mode: Option<HashMode>,
    /// Residue modulus for with_error checks; must divide t.
    #[arg(long)]
    error_r: Option<u64>,
    /// Output path; standard output when absent.
    #[arg(long, short)]
    output: Option<String>,
}

#[derive(Args, Clone, Default)]
struct Endpoint {
    #[arg(long)]
    host: Option<String>,
    #[arg(long)]
    port: Option<u16>,
}

#[derive(Subcommand)]
enum Command {
    /// Attach a checksum to a matrix and encrypt it; secrets go to a separate file.
    Protect {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        secret: PathBuf,
        /// How square inputs are reshaped: row_split or pad.
        #[arg(long, default_value = "row_split")]
        square: SquareStrategy,
        #[command(flatten)]
        common: Common,
    },
    /// Decrypt a protected matrix file with its secret file.
    Decrypt {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        secret: PathBuf,
        #[arg(long, short)]
        output: Option<String>,
    },
    /// Run the frame server (and the HTTP API).
    Serve {
        #[command(flatten)]
        endpoint: Endpoint,
        /// HTTP/JSON API port.
        #[arg(long, default_value_t = vfhe_server::DEFAULT_PORT + 1)]
        http_port: u16,
        #[arg(long)]
        no_http: bool,
        /// Server-owned matrix as name=path; repeatable.
        #[arg(long = "resident", value_name = "NAME=PATH")]
        residents: Vec<String>,
        /// Largest accepted frame payload in bytes.
        #[arg(long)]
        max_payload: Option<usize>,
    },
    /// Outsource A·B to a server and verify the answer.
    Compute {
        #[arg(long)]
        a: PathBuf,
        /// Right operand file; ownership set by --b-owner.
        #[arg(long)]
        b: Option<PathBuf>,
        /// public (sent in the clear), secret (sent encrypted) or resident.
        #[arg(long, default_value = "public")]
        b_owner: String,
        /// Name of a server-resident right operand.
        #[arg(long)]
        resident: Option<String>,
        /// Server URL (tcp://host:port or http://host:port); overrides host/port.
        #[arg(long)]
        url: Option<String>,
        #[arg(long, default_value = "row_split")]
        square: SquareStrategy,
        /// Where to keep the client secrets of this run.
        #[arg(long)]
        secret_out: Option<PathBuf>,
        #[command(flatten)]
        endpoint: Endpoint,
        #[command(flatten)]
        common: Common,
    },
    /// Tampering proxy between clients and a server.
    Attack {
        /// Tamper kind: additive, replace, fabricate, bitflip or forge_known_hash.
        #[arg(long)]
        kind: TamperKind,
        /// Proxy listen address.
        #[arg(long, default_value = "127.0.0.1:7410")]
        listen: String,
        /// Server to forward to; defaults to host:port.
        #[arg(long)]
        upstream: Option<String>,
        /// Matrix added to (additive, forge) or substituted for (replace) the result.
        #[arg(long)]
        payload: Option<PathBuf>,
        /// Bit offset for bitflip.
        #[arg(long)]
        bit: Option<u64>,
        /// Secret file whose first row hash has leaked (forge only).
        #[arg(long)]
        leaked_secret: Option<PathBuf>,
        /// Proof columns in each response (1 for dual mode).
        #[arg(long, default_value_t = 0)]
        proof_cols: usize,
        #[command(flatten)]
        endpoint: Endpoint,
        #[command(flatten)]
        common: Common,
    },
    /// Measure checksum overheads.
    Bench {
        /// Cubic sizes, e.g. 8,64,512.
        #[arg(long, value_delimiter = ',')]
        sweep: Vec<usize>,
        /// Explicit points as MxNxK; repeatable.
        #[arg(long = "point", value_name = "MxNxK")]
        points: Vec<String>,
        #[arg(long, default_value_t = 5)]
        trials: usize,
        #[arg(long, default_value = "table")]
        format: ReportFormat,
        /// Modes to measure, comma separated.
        #[arg(long, value_delimiter = ',')]
        modes: Vec<CheckMode>,
        #[arg(long, value_delimiter = ',')]
        backends: Vec<BackendId>,
        /// Diagonal left operand.
        #[arg(long)]
        diagonal: bool,
        /// Count operations only, in parallel, without timing.
        #[arg(long)]
        counters_only: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Check a decrypted result against its proof rows offline.
    Verify {
        #[arg(long)]
        result: PathBuf,
        /// One proof row per protected block.
        #[arg(long)]
        proof: PathBuf,
        #[arg(long)]
        secret: PathBuf,
    },
}

impl Common {
    fn config(&self, endpoint: Option<&Endpoint>) -> CliConfig {
        CliConfig {
            t: self.t,
            mode: self.mode,
            backend: self.backend,
            host: endpoint.and_then(|e| e.host.clone()),
            port: endpoint.and_then(|e| e.port),
            seed: self.seed,
            hash_mode: self.hash_mode,
            error_r: self.error_r,
            output: self.output.clone(),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

fn read_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn write_out(output: Option<&str>, bytes: &[u8]) -> CmdResult {
    match output {
        None | Some("-") => {
            use std::io::Write;
            std::io::stdout()
                .write_all(bytes)
                .map_err(|e| Failure::Io(format!("stdout: {e}")))
        }
        Some(p) => std::fs::write(p, bytes).map_err(|e| io_err(Path::new(p), e)),
    }
}

fn read_matrix(path: &Path, exact: bool) -> Result<PlainMatrix, Failure> {
    let text = read_text(path)?;
    let parsed = if exact {
        parse_text::<u64>(&text).map(PlainMatrix::Int)
    } else {
        parse_text::<f64>(&text).map(PlainMatrix::Real)
    };
    parsed.map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

/// Integer if every entry parses as one, real otherwise.
fn read_any_matrix(path: &Path) -> Result<PlainMatrix, Failure> {
    let text = read_text(path)?;
    match parse_text::<u64>(&text) {
        Ok(m) => Ok(PlainMatrix::Int(m)),
        Err(_) => parse_text::<f64>(&text)
            .map(PlainMatrix::Real)
            .map_err(|e| Failure::Io(format!("{}: {e}", path.display()))),
    }
}

fn read_secrets(path: &Path) -> Result<ClientSecrets, Failure> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn write_secrets(path: &Path, secrets: &ClientSecrets) -> CmdResult {
    let json = serde_json::to_string_pretty(secrets).map_err(|e| Failure::Io(e.to_string()))?;
    std::fs::write(path, json + "\n").map_err(|e| io_err(path, e))
}

fn print_report(report: &VerificationReport) {
    if report.passed() {
        println!("verdict: pass ({} mode, {} client ops)", report.mode.as_str(), report.client_ops);
    } else {
        println!(
            "verdict: FAIL ({} mode, {} mismatching proof entries, columns {:?}, rows {:?})",
            report.mode.as_str(),
            report.mismatch_count,
            report.failing_columns,
            report.failing_rows
        );
    }
}

fn protect_cmd(cfg: CliConfig, input: &Path, secret: &Path, square: SquareStrategy) -> CmdResult {
    let params = cfg.params()?;
    let a = read_matrix(input, params.is_exact())?;
    let mut task = TaskSpec::new(a, OperandB::Resident(String::new()));
    task.mode = match cfg.mode() {
        // Column checksums belong to B; protecting A alone gets the row check.
        CheckMode::Dual => CheckMode::Plain,
        m => m,
    };
    task.params = params;
    task.backend = cfg.backend();
    task.hash = cfg.hash();
    task.error_r = cfg.error_r();
    task.square = square;
    task.seed = cfg.seed.unwrap_or_else(rand_seed);
    let protected = protect(&task, &BackendRegistry::with_defaults())?;
    let bytes: Vec<u8> = protected.blocks.iter().flat_map(CipherMatrix::to_bytes).collect();
    write_secrets(secret, &protected.secrets)?;
    write_out(cfg.output.as_deref(), &bytes)
}

fn rand_seed() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_nanos() as u64)
        .unwrap_or(0)
        ^ std::process::id() as u64
}

fn read_ciphertexts(path: &Path) -> Result<Vec<CipherMatrix>, Failure> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    let mut rest = &bytes[..];
    let mut out = Vec::new();
    while !rest.is_empty() {
        let (ct, used) = CipherMatrix::read(rest).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
        out.push(ct);
        rest = &rest[used..];
    }
    Ok(out)
}

fn decrypt_cmd(input: &Path, secret: &Path, output: Option<&str>) -> CmdResult {
    let secrets = read_secrets(secret)?;
    let blocks = read_ciphertexts(input)?;
    let plain = unprotect(&secrets, &blocks, &BackendRegistry::with_defaults())?;
    write_out(output, plain.to_text().as_bytes())
}

fn serve_cmd(
    cfg: CliConfig,
    http_port: Option<u16>,
    residents: &[String],
    max_payload: Option<usize>,
) -> CmdResult {
    let mut config = ServerConfig::default();
    if let Some(m) = max_payload {
        config.max_payload = m;
    }
    let mut store = SessionStore::new(BackendRegistry::with_defaults(), config);
    for r in residents {
        let (name, path) = r
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("--resident expects NAME=PATH, got {r:?}")))?;
        store = store.with_resident(name, read_any_matrix(Path::new(path))?);
    }
    let parse_addr = |port: u16| -> Result<std::net::SocketAddr, Failure> {
        use std::net::ToSocketAddrs;
        (cfg.host(), port)
            .to_socket_addrs()
            .map_err(|e| Failure::Usage(format!("{}: {e}", cfg.host())))?
            .next()
            .ok_or_else(|| Failure::Usage(format!("{} does not resolve", cfg.host())))
    };
    let tcp = parse_addr(cfg.port())?;
    let http = http_port.map(parse_addr).transpose()?;
    let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::Io(e.to_string()))?;
    rt.block_on(vfhe_server::run(tcp, http, Arc::new(store)))
        .map_err(|e| Failure::Io(e.to_string()))
}

#[allow(clippy::too_many_arguments)]
fn compute_cmd(
    cfg: CliConfig,
    a: &Path,
    b: Option<&Path>,
    b_owner: &str,
    resident: Option<String>,
    url: Option<String>,
    square: SquareStrategy,
    secret_out: Option<&Path>,
) -> CmdResult {
    let params = cfg.params()?;
    let exact = params.is_exact();
    let a = read_matrix(a, exact)?;
    let need_b = || -> Result<PlainMatrix, Failure> {
        let path = b.ok_or_else(|| Failure::Usage(format!("--b is required when --b-owner is {b_owner}")))?;
        read_matrix(path, exact)
    };
    let operand = match b_owner {
        "public" => OperandB::Public(need_b()?),
        "secret" => OperandB::Secret(need_b()?),
        "resident" => OperandB::Resident(
            resident.ok_or_else(|| Failure::Usage("--resident NAME is required with --b-owner resident".into()))?,
        ),
        other => return Err(Failure::Usage(format!("unknown --b-owner {other:?}"))),
    };
    let mut task = TaskSpec::new(a, operand);
    task.mode = cfg.mode();
    task.params = params;
    task.backend = cfg.backend();
    task.hash = cfg.hash();
    task.error_r = cfg.error_r();
    task.square = square;
    task.seed = cfg.seed.unwrap_or_else(rand_seed);

    let url = url.unwrap_or_else(|| format!("tcp://{}:{}", cfg.host(), cfg.port()));
    let mut channel = vfhe_client::connect(&url)?;
    match client_execute(&task, &BackendRegistry::with_defaults(), &mut channel) {
        Ok(outcome) => {
            if let Some(p) = secret_out {
                write_secrets(p, &outcome.secrets)?;
            }
            write_out(cfg.output.as_deref(), outcome.result.to_text().as_bytes())?;
            print_report(&outcome.report);
            Ok(())
        }
        Err(Error::IntegrityViolation(outcome)) => {
            print_report(&outcome.report);
            Err(Failure::Integrity(Box::new(outcome.report)))
        }
        Err(e) => Err(e.into()),
    }
}

#[allow(clippy::too_many_arguments)]
fn attack_cmd(
    cfg: CliConfig,
    kind: TamperKind,
    listen: &str,
    upstream: Option<String>,
    payload: Option<&Path>,
    bit: Option<u64>,
    leaked: Option<&Path>,
    proof_cols: usize,
) -> CmdResult {
    let mut spec = TamperSpec::new(kind, cfg.seed.unwrap_or_else(rand_seed));
    spec.bit = bit;
    spec.proof_cols = proof_cols;
    if let Some(p) = payload {
        spec.payload = Some(read_matrix(p, cfg.backend() == BackendId::EXACT)?);
    }
    if let Some(p) = leaked {
        let secrets = read_secrets(p)?;
        let block = secrets
            .blocks
            .first()
            .ok_or_else(|| Failure::Usage("leaked secret file has no blocks".into()))?;
        spec.leaked_hash = Some(block.hash.clone());
    }
    spec.validate()?;
    let upstream = upstream.unwrap_or_else(|| format!("{}:{}", cfg.host(), cfg.port()));
    let resolve = |s: &str| -> Result<std::net::SocketAddr, Failure> {
        use std::net::ToSocketAddrs;
        s.to_socket_addrs()
            .map_err(|e| Failure::Usage(format!("{s}: {e}")))?
            .next()
            .ok_or_else(|| Failure::Usage(format!("{s} does not resolve")))
    };
    let (listen, upstream) = (resolve(listen)?, resolve(&upstream)?);
    let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::Io(e.to_string()))?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(listen).await?;
        vfhe_server::serve_proxy(listener, upstream, spec).await
    })
    .map_err(|e| Failure::Io(e.to_string()))
}

fn parse_point(s: &str) -> Result<(usize, usize, usize), Failure> {
    let dims: Vec<usize> = s
        .split('x')
        .map(|d| d.trim().parse())
        .collect::<Result<_, _>>()
        .map_err(|_| Failure::Usage(format!("point {s:?} is not MxNxK")))?;
    match dims[..] {
        [m, n, k] => Ok((m, n, k)),
        _ => Err(Failure::Usage(format!("point {s:?} is not MxNxK"))),
    }
}

#[allow(clippy::too_many_arguments)]
fn bench_cmd(
    cfg: CliConfig,
    sweep: &[usize],
    points: &[String],
    trials: usize,
    format: ReportFormat,
    modes: Vec<CheckMode>,
    backends: Vec<BackendId>,
    diagonal: bool,
    counters_only: bool,
) -> CmdResult {
    let mut bench = BenchConfig::sweep(sweep);
    for p in points {
        bench.points.push(parse_point(p)?);
    }
    if bench.points.is_empty() {
        bench.points.push((64, 64, 64));
    }
    bench.trials = trials;
    bench.modes = if modes.is_empty() { vec![cfg.mode()] } else { modes };
    bench.backends = if backends.is_empty() { vec![cfg.backend()] } else { backends };
    bench.diagonal = diagonal;
    bench.counters_only = counters_only;
    bench.seed = cfg.seed.unwrap_or(0);
    if let Some(t) = cfg.t {
        bench.t = t;
        bench.error_t = t;
    }
    if let Some(r) = cfg.error_r {
        bench.error_r = r;
    }
    let report = run_benchmark(&bench)?;
    write_out(cfg.output.as_deref(), &emit_report(&report, format))
}

fn verify_cmd(result: &Path, proof: &Path, secret: &Path) -> CmdResult {
    let secrets = read_secrets(secret)?;
    let exact = secrets.params.is_exact();
    let c = read_matrix(result, exact)?;
    let p = read_matrix(proof, exact)?;
    let report = verify_offline(&secrets, &c, &p)?;
    print_report(&report);
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Integrity(Box::new(report)))
    }
}

fn run(cli: Cli) -> CmdResult {
    let file = match &cli.config {
        Some(p) => CliConfig::load(p)?,
        None => CliConfig::default(),
    };
    match cli.command {
        Command::Protect {
            input,
            secret,
            square,
            common,
        } => protect_cmd(file.overlay(common.config(None)), &input, &secret, square),
        Command::Decrypt { input, secret, output } => {
            decrypt_cmd(&input, &secret, output.as_deref().or(file.output.as_deref()))
        }
        Command::Serve {
            endpoint,
            http_port,
            no_http,
            residents,
            max_payload,
        } => {
            let cfg = file.overlay(Common::default().config(Some(&endpoint)));
            serve_cmd(cfg, (!no_http).then_some(http_port), &residents, max_payload)
        }
        Command::Compute {
            a,
            b,
            b_owner,
            resident,
            url,
            square,
            secret_out,
            endpoint,
            common,
        } => compute_cmd(
            file.overlay(common.config(Some(&endpoint))),
            &a,
            b.as_deref(),
            &b_owner,
            resident,
            url,
            square,
            secret_out.as_deref(),
        ),
        Command::Attack {
            kind,
            listen,
            upstream,
            payload,
            bit,
            leaked_secret,
            proof_cols,
            endpoint,
            common,
        } => attack_cmd(
            file.overlay(common.config(Some(&endpoint))),
            kind,
            &listen,
            upstream,
            payload.as_deref(),
            bit,
            leaked_secret.as_deref(),
            proof_cols,
        ),
        Command::Bench {
            sweep,
            points,
            trials,
            format,
            modes,
            backends,
            diagonal,
            counters_only,
            common,
        } => bench_cmd(
            file.overlay(common.config(None)),
            &sweep,
            &points,
            trials,
            format,
            modes,
            backends,
            diagonal,
            counters_only,
        ),
        Command::Verify { result, proof, secret } => verify_cmd(&result, &proof, &secret),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Io(m) => eprintln!("error: {m}"),
                Failure::Usage(m) => eprintln!("usage error: {m}"),
                Failure::Integrity(_) => eprintln!("error: integrity violation"),
            }
            ExitCode::from(f.code())
        }
    }
}
