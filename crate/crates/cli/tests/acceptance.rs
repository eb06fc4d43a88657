//! Acceptance suite. Each test checks one criterion end to end and writes a
//! single `PASS` / `FAIL` line to stdout (uncaptured), then fails the test on
//! `FAIL`. Tests share a lock so the timing criteria run on a quiet machine.
//!
//! Expected values are computed here by independent brute-force oracles, not
//! by the library under test.

use std::io::Write;
use std::net::SocketAddr;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::{Arc, Mutex, OnceLock};
use std::time::{Duration, Instant};

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use vfhe_client::{HttpTransport, TcpTransport};
use vfhe_core::adversary::{forge_with_known_hash, TamperKind, TamperSpec, TamperTransport, Tamperer};
use vfhe_core::backend::{BackendId, BackendRegistry, CipherMatrix, PlainMatrix, SecretKey};
use vfhe_core::bench::{run_benchmark, BenchConfig, BenchRow};
use vfhe_core::checksum::{
    attach_checksum, compute_checksum, compute_checksum_muladd, compute_checksum_with_error, gen_hash_vector,
    normalize_square, proof_residual, recombine, verify, verify_with_error, CheckMode, ErrorConfig, HashOptions,
    HashVector, ModRing, RealRing, ResultBundle, Ring, RowMeta, SquareStrategy,
};
use vfhe_core::params::{PlainParams, DEFAULT_SCALE};
use vfhe_core::protocol::client::{client_execute, protect, AnyHash, OperandB, TaskSpec};
use vfhe_core::protocol::{
    CaptureTransport, LoopbackTransport, Message, ServerConfig, SessionStore, Transport,
};
use vfhe_core::{Error, Matrix};

static SERIAL: Mutex<()> = Mutex::new(());

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if $cond {
        } else {
            return Err(format!($($fmt)+));
        }
    };
}

fn lib<T>(r: vfhe_core::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn criterion(n: u8, title: &str, budget: Option<Duration>, body: impl FnOnce() -> Check) {
    let _quiet = SERIAL.lock().unwrap_or_else(|p| p.into_inner());
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(body)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    });
    let elapsed = start.elapsed();
    let outcome = match (outcome, budget) {
        (Ok(detail), Some(b)) if elapsed > b => Err(format!("{detail}; took {elapsed:.1?}, budget {b:?}")),
        (o, _) => o,
    };
    let line = match &outcome {
        Ok(detail) => format!("PASS criterion {n} ({title}): {detail} [{:.2}s]\n", elapsed.as_secs_f64()),
        Err(why) => format!("FAIL criterion {n} ({title}): {why} [{:.2}s]\n", elapsed.as_secs_f64()),
    };
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    if let Err(why) = outcome {
        panic!("criterion {n} failed: {why}");
    }
}

// ---- oracles ----

fn oracle_matmul(a: &Matrix<u64>, b: &Matrix<u64>, t: u64) -> Matrix<u64> {
    Matrix::from_fn(a.rows(), b.cols(), |i, j| {
        (0..a.cols()).fold(0u128, |acc, p| (acc + a.get(i, p) as u128 * b.get(p, j) as u128) % t as u128) as u64
    })
}

fn oracle_vec_mat(v: &[u64], a: &Matrix<u64>, t: u64) -> Vec<u64> {
    (0..a.cols())
        .map(|j| v.iter().enumerate().fold(0u128, |acc, (i, &w)| (acc + w as u128 * a.get(i, j) as u128) % t as u128) as u64)
        .collect()
}

fn oracle_matmul_real(a: &Matrix<f64>, b: &Matrix<f64>) -> Matrix<f64> {
    Matrix::from_fn(a.rows(), b.cols(), |i, j| (0..a.cols()).map(|p| a.get(i, p) * b.get(p, j)).sum())
}

fn random_mod(rng: &mut impl Rng, rows: usize, cols: usize, t: u64) -> Matrix<u64> {
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(0..t))
}

fn int_hash(secrets: &vfhe_core::protocol::ClientSecrets) -> Vec<u64> {
    match &secrets.blocks[0].hash {
        AnyHash::Int(h) => h.entries.clone(),
        AnyHash::Real(_) => unreachable!("exact runs use integer hashes"),
    }
}

/// Single row of `got` that differs from `want`, if exactly one does.
fn differing_row(got: &Matrix<u64>, want: &Matrix<u64>) -> Option<usize> {
    let rows: Vec<usize> = (0..want.rows()).filter(|&i| got.row(i) != want.row(i)).collect();
    (rows.len() == 1).then(|| rows[0])
}

// ---- 1 ----

#[test]
fn c1_soundness_identity_exhaustive_mod5() {
    criterion(1, "soundness identity mod 5, exhaustive", Some(Duration::from_secs(120)), || {
        let t = 5;
        let ring = ModRing::new(t);
        let mats: Vec<Matrix<u64>> = (0..625u64)
            .map(|code| Matrix::from_fn(2, 2, |i, j| code / 5u64.pow((2 * i + j) as u32) % 5))
            .collect();
        let hashes: Vec<HashVector<u64>> = (0..25u64).map(|c| HashVector::from_entries(vec![c % 5, c / 5])).collect();
        let products: Vec<Vec<Matrix<u64>>> =
            mats.iter().map(|a| mats.iter().map(|b| oracle_matmul(a, b, t)).collect()).collect();

        let mut cases = 0u64;
        let mut violations = 0u64;
        for (ai, a) in mats.iter().enumerate() {
            for h in &hashes {
                let ha = lib(compute_checksum(&ring, a, h))?;
                ensure!(ha == oracle_vec_mat(&h.entries, a, t), "h·A wrong for A#{ai}");
                let stacked = lib(attach_checksum(a, std::slice::from_ref(&ha), vec![RowMeta::plain("h")]))?.stacked();
                for (bi, b) in mats.iter().enumerate() {
                    cases += 1;
                    let c = &products[ai][bi];
                    // (h·A)·B against h·(A·B), both by oracle.
                    let lhs = oracle_vec_mat(&ha, b, t);
                    let rhs = oracle_vec_mat(&h.entries, c, t);
                    // The library's stacked product and verdict must agree.
                    let product = lib(ring.matmul(&stacked, b))?;
                    let bundle = lib(ResultBundle::split(&product, 1, 0))?;
                    let passed = lib(verify(&ring, &bundle, h))?.passed();
                    if lhs != rhs || bundle.result != *c || bundle.proof_rows.row(0) != lhs.as_slice() || !passed {
                        violations += 1;
                    }
                }
            }
        }
        ensure!(cases == 5u64.pow(10), "enumerated {cases} cases");
        ensure!(violations == 0, "{violations} violations in {cases} cases");
        Ok(format!("{cases} (A, B, h) triples, 0 violations"))
    });
}

// ---- 2 (and the capture half of 9) ----

struct Service {
    tcp: SocketAddr,
    http: SocketAddr,
    _rt: tokio::runtime::Runtime,
}

fn service() -> Service {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()
        .expect("runtime");
    let store = Arc::new(SessionStore::new(BackendRegistry::with_defaults(), ServerConfig::default()));
    let (tcp, http) = rt.block_on(async {
        let tcp = tokio::net::TcpListener::bind("127.0.0.1:0").await.expect("bind");
        let http = tokio::net::TcpListener::bind("127.0.0.1:0").await.expect("bind");
        let addrs = (tcp.local_addr().unwrap(), http.local_addr().unwrap());
        tokio::spawn(vfhe_server::serve_tcp(tcp, store.clone()));
        tokio::spawn(vfhe_server::serve_http(http, store));
        addrs
    });
    Service { tcp, http, _rt: rt }
}

struct HonestRuns {
    runs: usize,
    per_combo: Vec<(BackendId, CheckMode, usize)>,
    failures: Vec<String>,
    elapsed: Duration,
    /// Client-to-server frames and bytes inspected, and secret patterns found.
    frames: usize,
    bytes: usize,
    patterns_checked: usize,
    leaks: Vec<String>,
    approx_with_error: String,
}

const COMBOS: [(BackendId, CheckMode); 5] = [
    (BackendId::EXACT, CheckMode::Plain),
    (BackendId::EXACT, CheckMode::WithError),
    (BackendId::EXACT, CheckMode::Dual),
    (BackendId::APPROXIMATE, CheckMode::Plain),
    (BackendId::APPROXIMATE, CheckMode::Dual),
];

/// Real operands kept for the approximate error bound.
type Reals = Option<(Matrix<f64>, Matrix<f64>)>;

fn honest_task(run: usize, rng: &mut ChaCha20Rng) -> (TaskSpec, PlainMatrix, Reals) {
    let (backend, mode) = COMBOS[run % COMBOS.len()];
    // At least two hashed rows per block and two entries per error or column
    // hash, so a secret vector is never a short, collision-prone byte string.
    let (m, n, k) = (rng.gen_range(4..=32), rng.gen_range(2..=32), rng.gen_range(2..=32));
    let secret_b = mode == CheckMode::Dual;
    let wrap = |b: PlainMatrix| if secret_b { OperandB::Secret(b) } else { OperandB::Public(b) };
    let (mut task, expected, reals) = if backend == BackendId::EXACT {
        let t = if mode == CheckMode::WithError { 1 << 20 } else { 65537 };
        let (a, b) = (random_mod(rng, m, n, t), random_mod(rng, n, k, t));
        let want = oracle_matmul(&a, &b, t);
        let mut task = TaskSpec::new(a, wrap(b.into()));
        task.params = PlainParams::exact(t).unwrap();
        (task, PlainMatrix::Int(want), None)
    } else {
        let a = Matrix::from_fn(m, n, |_, _| rng.gen_range(-2.0..2.0));
        let b = Matrix::from_fn(n, k, |_, _| rng.gen_range(-2.0..2.0));
        let want = oracle_matmul_real(&a, &b);
        let mut task = TaskSpec::new(a.clone(), wrap(b.clone().into()));
        task.params = PlainParams::approximate(DEFAULT_SCALE).unwrap();
        (task, PlainMatrix::Real(want), Some((a, b)))
    };
    task.backend = backend;
    task.mode = mode;
    task.seed = 1_000 + run as u64;
    task.error_r = 1 << 10;
    task.hash = if run.is_multiple_of(2) { HashOptions::uniform() } else { HashOptions::pow2() };
    task.square = if run % 4 < 2 { SquareStrategy::RowSplit } else { SquareStrategy::Pad };
    (task, expected, reals)
}

fn matches_oracle(got: &PlainMatrix, want: &PlainMatrix, reals: &Reals) -> bool {
    match (got, want, reals) {
        (PlainMatrix::Int(g), PlainMatrix::Int(w), _) => g == w,
        (PlainMatrix::Real(g), PlainMatrix::Real(w), Some((a, b))) => {
            let bound = a.cols() as f64 / DEFAULT_SCALE * (1.0 + a.max_abs() + b.max_abs());
            g.rows() == w.rows()
                && g.cols() == w.cols()
                && g.as_slice().iter().zip(w.as_slice()).all(|(x, y)| (x - y).abs() <= bound)
        }
        _ => false,
    }
}

fn honest_runs() -> &'static HonestRuns {
    static RUNS: OnceLock<HonestRuns> = OnceLock::new();
    RUNS.get_or_init(|| {
        let svc = service();
        let registry = BackendRegistry::with_defaults();
        let mut rng = ChaCha20Rng::seed_from_u64(0xacce97);
        let mut out = HonestRuns {
            runs: 0,
            per_combo: COMBOS.iter().map(|&(b, m)| (b, m, 0)).collect(),
            failures: Vec::new(),
            elapsed: Duration::ZERO,
            frames: 0,
            bytes: 0,
            patterns_checked: 0,
            leaks: Vec::new(),
            approx_with_error: String::new(),
        };
        let start = Instant::now();
        for run in 0..200 {
            let (task, expected, reals) = honest_task(run, &mut rng);
            let inner: Box<dyn Transport> = if run % 2 == 0 {
                Box::new(TcpTransport::connect(svc.tcp).expect("tcp connect"))
            } else {
                Box::new(HttpTransport::new(format!("http://{}", svc.http)).expect("http client"))
            };
            let mut cap = CaptureTransport::new(inner);
            out.runs += 1;
            match client_execute(&task, &registry, &mut cap) {
                Ok(o) if o.report.passed() && matches_oracle(&o.result, &expected, &reals) => {
                    out.per_combo[run % COMBOS.len()].2 += 1;
                    for p in o.secrets.sensitive_patterns() {
                        out.patterns_checked += 1;
                        if cap.outbound_contains(&p) {
                            out.leaks.push(format!("run {run}: {} secret bytes on the wire", p.len()));
                        }
                    }
                }
                Ok(_) => out.failures.push(format!("run {run}: result differs from the oracle")),
                Err(e) => out.failures.push(format!("run {run} ({:?} {:?}): {e}", task.backend, task.mode)),
            }
            out.frames += cap.outbound.len();
            out.bytes += cap.outbound.iter().map(Vec::len).sum::<usize>();
        }
        out.elapsed = start.elapsed();

        // Error-augmented checks have no residue modulus over reals; the
        // client must refuse the combination rather than run it unchecked.
        let mut task = honest_task(3, &mut rng).0;
        task.mode = CheckMode::WithError;
        out.approx_with_error = match client_execute(&task, &registry, &mut LoopbackTransport::new(Arc::new(
            SessionStore::new(BackendRegistry::with_defaults(), ServerConfig::default()),
        ))) {
            Err(Error::ModeMismatch(_)) => "rejected".into(),
            other => format!("not rejected: {:?}", other.map(|o| o.report.verdict)),
        };
        out
    })
}

#[test]
fn c2_honest_completeness() {
    criterion(2, "honest completeness, 200 end-to-end runs", None, || {
        let r = honest_runs();
        ensure!(r.runs == 200, "only {} runs", r.runs);
        ensure!(r.failures.is_empty(), "{} failed: {:?}", r.failures.len(), &r.failures[..r.failures.len().min(3)]);
        ensure!(r.elapsed <= Duration::from_secs(60), "runs took {:?}, budget 60s", r.elapsed);
        ensure!(r.approx_with_error == "rejected", "approximate with_error {}", r.approx_with_error);
        let mix: Vec<String> = r
            .per_combo
            .iter()
            .map(|(b, m, c)| format!("{}/{}={c}", b.name(), m.as_str()))
            .collect();
        Ok(format!(
            "200/200 pass over TCP and HTTP in {:.1}s [{}]; approximate/with_error rejected",
            r.elapsed.as_secs_f64(),
            mix.join(" ")
        ))
    });
}

// ---- 3 ----

fn loopback() -> LoopbackTransport {
    LoopbackTransport::new(Arc::new(SessionStore::new(BackendRegistry::with_defaults(), ServerConfig::default())))
}

/// Non-square so the whole of `A` is covered by one hash vector.
fn small_task(rng: &mut ChaCha20Rng, seed: u64) -> (TaskSpec, Matrix<u64>) {
    let t = 65537;
    let m = rng.gen_range(2..=8);
    let n = loop {
        let n = rng.gen_range(2..=8);
        if n != m {
            break n;
        }
    };
    let k = rng.gen_range(1..=8);
    let (a, b) = (random_mod(rng, m, n, t), random_mod(rng, n, k, t));
    let want = oracle_matmul(&a, &b, t);
    let mut task = TaskSpec::new(a, OperandB::Public(b.into()));
    task.seed = seed;
    (task, want)
}

#[test]
fn c3_tamper_detection() {
    criterion(3, "tamper detection at t=65537", Some(Duration::from_secs(120)), || {
        let registry = BackendRegistry::with_defaults();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let mut transport = loopback();

        let mut detected = 0;
        let mut misses = Vec::new();
        for i in 0..10_000u64 {
            let (task, want) = small_task(&mut rng, 30_000 + i);
            let tamperer = lib(Tamperer::new(TamperSpec::new(TamperKind::Additive, i), BackendRegistry::with_defaults()))?;
            let mut ch = TamperTransport::new(&mut transport, tamperer);
            match client_execute(&task, &registry, &mut ch) {
                Err(Error::IntegrityViolation(_)) => detected += 1,
                Ok(o) => {
                    // A miss is only possible where the hash entry of the
                    // tampered row is zero.
                    let got = lib(o.result.into_int())?;
                    let row = differing_row(&got, &want).ok_or(format!("run {i}: undetected tamper not in one row"))?;
                    misses.push((i, int_hash(&o.secrets)[row]));
                }
                Err(e) => return Err(format!("run {i}: {e}")),
            }
            ensure!(ch.tampered() == 1, "run {i}: {} responses tampered", ch.tampered());
        }
        ensure!(misses.iter().all(|&(_, h)| h == 0), "misses with a nonzero hash entry: {misses:?}");
        let rate = detected as f64 / 10_000.0;
        ensure!(rate >= 0.999, "additive detection rate {rate}");

        let mut fabricated = 0;
        for i in 0..1_000u64 {
            let (task, _) = small_task(&mut rng, 50_000 + i);
            let tamperer = lib(Tamperer::new(TamperSpec::new(TamperKind::Fabricate, i), BackendRegistry::with_defaults()))?;
            let mut ch = TamperTransport::new(&mut transport, tamperer);
            if let Err(Error::IntegrityViolation(_)) = client_execute(&task, &registry, &mut ch) {
                fabricated += 1;
            }
        }
        ensure!(fabricated == 1_000, "fabricate detected {fabricated}/1000");
        Ok(format!(
            "additive {detected}/10000 ({:.4}%, {} misses, all on zero hash entries); fabricate 1000/1000",
            rate * 100.0,
            misses.len()
        ))
    });
}

// ---- 4 ----

#[test]
fn c4_forgery_negative_control() {
    criterion(4, "forgery with known vs guessed hash", None, || {
        let registry = BackendRegistry::with_defaults();
        let ring = ModRing::new(65537);
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let mut transport = loopback();

        let mut accepted = 0;
        for i in 0..1_000u64 {
            let (task, want) = small_task(&mut rng, 70_000 + i);
            let leaked = lib(protect(&task, &registry))?.secrets.blocks[0].hash.clone();
            let spec = TamperSpec::new(TamperKind::ForgeKnownHash, i).with_leaked_hash(leaked.clone());
            let mut ch = TamperTransport::new(&mut transport, lib(Tamperer::new(spec, BackendRegistry::with_defaults()))?);
            let o = client_execute(&task, &registry, &mut ch).map_err(|e| format!("forgery {i} rejected: {e}"))?;
            let got = lib(o.result.into_int())?;
            ensure!(got != want, "forgery {i} left the result unchanged");
            accepted += 1;

            // The plaintext forgery helper, checked against the oracle.
            let AnyHash::Int(h) = leaked else { unreachable!() };
            let c = want.clone();
            let proof = oracle_vec_mat(&h.entries, &c, 65537);
            let m = random_mod(&mut rng, c.rows(), c.cols(), 65537);
            let (c2, p2) = lib(forge_with_known_hash(&ring, &c, &proof, &h, &m))?;
            let want_c2 = Matrix::from_fn(c.rows(), c.cols(), |r, s| (c.get(r, s) + m.get(r, s)) % 65537);
            ensure!(c2 == want_c2, "forged result {i} differs from C + M");
            ensure!(p2 == oracle_vec_mat(&h.entries, &c2, 65537), "forged proof {i} differs from h·(C + M)");
        }

        let mut rejected = 0;
        let mut unexplained = Vec::new();
        for i in 0..10_000u64 {
            let (task, want) = small_task(&mut rng, 90_000 + i);
            let m = match &task.a {
                PlainMatrix::Int(a) => a.rows(),
                PlainMatrix::Real(_) => unreachable!(),
            };
            let guess: Vec<u64> = (0..m).map(|_| rng.gen_range(0..65537)).collect();
            let spec = TamperSpec::new(TamperKind::ForgeKnownHash, i)
                .with_leaked_hash(AnyHash::Int(HashVector::from_entries(guess.clone())));
            let mut ch = TamperTransport::new(&mut transport, lib(Tamperer::new(spec, BackendRegistry::with_defaults()))?);
            match client_execute(&task, &registry, &mut ch) {
                Err(Error::IntegrityViolation(_)) => rejected += 1,
                Ok(o) => {
                    // Accepted only if the guess hit the true entry of the
                    // perturbed row.
                    let got = lib(o.result.into_int())?;
                    let row = differing_row(&got, &want).ok_or(format!("guess {i}: forged rows"))?;
                    if guess[row] != int_hash(&o.secrets)[row] {
                        unexplained.push(i);
                    }
                }
                Err(e) => return Err(format!("guess {i}: {e}")),
            }
        }
        ensure!(unexplained.is_empty(), "guessed forgeries accepted without a hash hit: {unexplained:?}");
        let rate = rejected as f64 / 10_000.0;
        ensure!(rate >= 0.999, "guessed-hash rejection rate {rate}");
        Ok(format!(
            "known hash accepted {accepted}/1000; guessed hash rejected {rejected}/10000 ({:.2}%)",
            rate * 100.0
        ))
    });
}

// ---- 5 ----

fn bench(points: &[(usize, usize, usize)], modes: &[CheckMode], trials: usize, counters_only: bool) -> Result<Vec<BenchRow>, String> {
    let cfg = BenchConfig {
        points: points.to_vec(),
        modes: modes.to_vec(),
        trials,
        counters_only,
        seed: 5,
        ..BenchConfig::default()
    };
    Ok(lib(run_benchmark(&cfg))?.rows)
}

#[test]
fn c5_overhead_formulas() {
    criterion(5, "overhead formulas", None, || {
        let points = [(8, 8, 8), (64, 64, 64), (512, 512, 512), (16, 48, 24), (100, 30, 70), (3, 17, 5)];
        let rows = bench(&points, &[CheckMode::Plain, CheckMode::WithError], 1, true)?;
        ensure!(rows.len() == points.len() * 2, "{} rows", rows.len());
        for r in &rows {
            let (m, n, k) = (r.m as u64, r.n as u64, r.k as u64);
            let at = format!("{}x{}x{} {}", m, n, k, r.mode.as_str());
            ensure!(r.passed, "{at}: verification failed");
            ensure!(r.multadds_plain == m * n * k, "{at}: plain mult-adds {}", r.multadds_plain);
            ensure!(r.multadds_checked == (m + 1) * n * k, "{at}: checked mult-adds {}", r.multadds_checked);
            ensure!(r.ratio_measured == Ratio::new(m + 1, m), "{at}: ratio {}", r.ratio_measured);
            ensure!(r.ratio_predicted == r.ratio_measured, "{at}: predicted {}", r.ratio_predicted);
            ensure!(r.pt_expansion == Ratio::new(1, m), "{at}: plaintext expansion {}", r.pt_expansion);
            ensure!(
                (r.ct_bytes_checked as u64) * m <= (r.ct_bytes_plain as u64) * (m + 1),
                "{at}: ciphertext bytes {} vs {}",
                r.ct_bytes_checked,
                r.ct_bytes_plain
            );
            ensure!(r.verify_ops == m * k + k, "{at}: verify ops {}", r.verify_ops);
        }

        let timed = bench(&[(64, 64, 64)], &[CheckMode::Plain], 41, false)?;
        let wall = timed[0].server_ms_checked / timed[0].server_ms_plain;
        ensure!(wall <= 1.05, "wall-clock ratio {wall:.4} at 64");
        Ok(format!(
            "{} sweep points exact (ratio (m+1)/m, expansion 1/m, bytes <= 1+1/m, ops mk+k); wall clock 64^3 ratio {wall:.4}",
            rows.len()
        ))
    });
}

// ---- 6 ----

#[test]
fn c6_vanishing_overhead_trend() {
    criterion(6, "vanishing overhead trend", Some(Duration::from_secs(180)), || {
        let sizes = [8, 16, 32, 64, 128, 256, 512];
        let cube = |s: &[usize]| s.iter().map(|&d| (d, d, d)).collect::<Vec<_>>();
        let mut rows = bench(&cube(&sizes[..6]), &[CheckMode::Plain], 31, false)?;
        rows.extend(bench(&cube(&sizes[6..]), &[CheckMode::Plain], 15, false)?);
        let predicted: Vec<Ratio<u64>> = rows.iter().map(|r| r.ratio_predicted).collect();
        ensure!(predicted.windows(2).all(|w| w[1] <= w[0]), "predicted ratios not monotone: {predicted:?}");
        let at = |d: usize| rows.iter().find(|r| r.m == d).map(BenchRow::wall_clock_overhead).unwrap();
        let (o64, o512) = (at(64), at(512));
        ensure!(o64 <= 0.10, "median overhead {:.2}% at 64", o64 * 100.0);
        ensure!(o512 <= 0.03, "median overhead {:.2}% at 512", o512 * 100.0);
        let trend: Vec<String> = rows.iter().map(|r| format!("{}:{:+.2}%", r.m, r.wall_clock_overhead() * 100.0)).collect();
        Ok(format!("median overhead 64: {:.2}%, 512: {:.2}%; measured [{}]", o64 * 100.0, o512 * 100.0, trend.join(" ")))
    });
}

// ---- 7 ----

#[test]
fn c7_error_mode_algebra() {
    criterion(7, "error-mode algebra, t=2^20 r=2^10", None, || {
        let (t, r) = (1u64 << 20, 1u64 << 10);
        let ring = ModRing::new(t);
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let (mut iff_detected, mut iff_passed) = (0, 0);
        for run in 0..1_000u64 {
            let (m, n, k) = (rng.gen_range(1..=16), rng.gen_range(1..=16), rng.gen_range(1..=16));
            let (a, b) = (random_mod(&mut rng, m, n, t), random_mod(&mut rng, n, k, t));
            let h = lib(gen_hash_vector(&ring, m, HashOptions::uniform(), run))?;
            let err = lib(ErrorConfig::generate(n, r, t, run))?;
            ensure!(err.vector.iter().all(|&e| e % r == 0 && e < t), "run {run}: error entries not multiples of r");

            let row = lib(compute_checksum_with_error(&ring, &a, &h, &err))?;
            let stacked = lib(attach_checksum(&a, &[row], vec![RowMeta::with_error("h")]))?.stacked();
            let product = lib(ring.matmul(&stacked, &b))?;
            let bundle = lib(ResultBundle::split(&product, 1, 0))?;
            ensure!(bundle.result == oracle_matmul(&a, &b, t), "run {run}: product wrong");

            let residual = lib(proof_residual(&ring, &bundle, &h))?;
            let r_b = oracle_vec_mat(&err.vector, &b, t);
            ensure!(residual == r_b, "run {run}: residual differs from r^A·B");
            ensure!(residual.iter().all(|&d| d % r == 0), "run {run}: residual not divisible by r");
            ensure!(lib(verify_with_error(&ring, &bundle, &h, &err))?.passed(), "run {run}: honest run failed");

            let j = rng.gen_range(0..k);
            let deltas = [1, rng.gen_range(1..t), rng.gen_range(1..t / r) * r];
            for delta in deltas {
                let mut bad = bundle.clone();
                let v = bad.proof_rows.get(0, j);
                bad.proof_rows.set(0, j, (v + delta) % t);
                let detected = !lib(verify_with_error(&ring, &bad, &h, &err))?.passed();
                ensure!(detected == (delta % r != 0), "run {run}: perturbation {delta} detected = {detected}");
                if detected {
                    iff_detected += 1;
                } else {
                    iff_passed += 1;
                }
            }
        }
        Ok(format!(
            "1000 runs: residual = r^A·B ≡ 0 (mod r); perturbations {iff_detected} detected (≢ 0 mod r), {iff_passed} accepted (≡ 0 mod r)"
        ))
    });
}

// ---- 8 ----

#[test]
fn c8_pow2_and_square_normalization() {
    criterion(8, "pow2 equivalence and square normalization", None, || {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        for (i, t) in (0..1_000u64).zip([65537u64, 1 << 20, 65535].into_iter().cycle()) {
            let ring = ModRing::new(t);
            let (m, n) = (rng.gen_range(1..=32), rng.gen_range(1..=32));
            let a = random_mod(&mut rng, m, n, t);
            let h = lib(gen_hash_vector(&ring, m, HashOptions::pow2(), i))?;
            ensure!(h.exponents.len() == m, "vector {i} carries no exponents");
            ensure!(h.entries.iter().zip(&h.exponents).all(|(&e, &x)| e == 1 << x && e < t), "vector {i} not powers of two");
            let shifted = lib(compute_checksum(&ring, &a, &h))?;
            ensure!(shifted == lib(compute_checksum_muladd(&ring, &a, &h))?, "vector {i}: shift-add != mult-add");
            ensure!(shifted == oracle_vec_mat(&h.entries, &a, t), "vector {i}: differs from oracle");
        }
        let real = RealRing::default();
        for i in 0..1_000u64 {
            let (m, n) = (rng.gen_range(1..=32), rng.gen_range(1..=32));
            let a = Matrix::from_fn(m, n, |_, _| rng.gen_range(-1e3..1e3));
            let h = lib(gen_hash_vector(&real, m, HashOptions::pow2(), i))?;
            let shifted = lib(compute_checksum(&real, &a, &h))?;
            let muladd = lib(compute_checksum_muladd(&real, &a, &h))?;
            ensure!(
                shifted.iter().zip(&muladd).all(|(x, y)| x.to_bits() == y.to_bits()),
                "real vector {i}: not bit-exact"
            );
        }

        let t = 65537;
        let ring = ModRing::new(t);
        let mut checked = 0;
        for d in 1..=16usize {
            for _ in 0..8 {
                let a = random_mod(&mut rng, d, d, t);
                let k = rng.gen_range(1..=16);
                let b = random_mod(&mut rng, d, k, t);
                let want = oracle_matmul(&a, &b, t);
                for strategy in [SquareStrategy::RowSplit, SquareStrategy::Pad] {
                    let norm = match normalize_square(&a, strategy) {
                        Err(Error::CannotSplit { rows: 1, cols: 1 }) if d == 1 => continue,
                        other => lib(other)?,
                    };
                    ensure!(norm.blocks.iter().all(|blk| !blk.is_square()), "{d}x{d} {strategy:?}: square block");
                    let parts = norm.blocks.iter().map(|blk| ring.matmul(blk, &b)).collect::<Result<Vec<_>, _>>();
                    let got = lib(recombine(&norm.plan, lib(parts)?))?;
                    ensure!(got == want, "{d}x{d} {strategy:?}: recombined product differs");
                    checked += 1;
                }
            }
        }
        Ok(format!(
            "2000 pow2 vectors bit-exact (exact and real); {checked} square normalizations up to 16x16 exact"
        ))
    });
}

// ---- 9 ----

type Malformed = (&'static str, Vec<u8>, fn(&Error) -> bool);

fn malformed_inputs() -> Vec<Malformed> {
    let frame = |ty: u8, payload: &[u8]| {
        let mut f = b"VFHE\x01".to_vec();
        f.push(ty);
        f.extend_from_slice(&(payload.len() as u32).to_be_bytes());
        f.extend_from_slice(payload);
        f
    };
    let mut init = vec![0x01, 0x00];
    init.extend_from_slice(&65537u64.to_be_bytes());
    init.extend_from_slice(&8192u32.to_be_bytes());
    let with = |base: &[u8], at: usize, v: u8| {
        let mut p = base.to_vec();
        p[at] = v;
        p
    };
    let compute = |tail: &[u8]| {
        let mut p = 7u64.to_be_bytes().to_vec();
        p.extend_from_slice(tail);
        p
    };
    let plain_upload = |rows: u32, cols: u32, entries: usize| {
        let mut p = 7u64.to_be_bytes().to_vec();
        p.extend_from_slice(&1u32.to_be_bytes());
        p.extend_from_slice(&[0x01, 0x00]);
        p.extend_from_slice(&rows.to_be_bytes());
        p.extend_from_slice(&cols.to_be_bytes());
        p.extend(std::iter::repeat_n(0u8, entries * 8));
        p
    };
    let mut cipher_result = 7u64.to_be_bytes().to_vec();
    cipher_result.extend_from_slice(b"VFC1\x01\x00");
    cipher_result.extend_from_slice(&65537u64.to_le_bytes());
    cipher_result.extend_from_slice(&[1, 0, 0, 0, 1, 0, 0, 0, 200, 0, 0, 0, 1, 2, 3]);

    macro_rules! at {
        ($o:expr) => {
            |e: &Error| matches!(e, Error::Protocol { offset, .. } if *offset == $o)
        };
    }
    vec![
        ("empty input", vec![], |e| matches!(e, Error::IncompleteFrame { needed: 10 })),
        ("nine header bytes", b"VFHE\x01\x00\x00\x00\x00".to_vec(), |e| matches!(e, Error::IncompleteFrame { needed: 1 })),
        ("bad magic first byte", b"XFHE\x01\x00\x00\x00\x00\x00".to_vec(), at!(0)),
        ("bad magic third byte", b"VFXE\x01\x00\x00\x00\x00\x00".to_vec(), at!(2)),
        ("version 2", b"VFHE\x02\x00\x00\x00\x00\x00".to_vec(), at!(4)),
        ("version 0", b"VFHE\x00\x00\x00\x00\x00\x00".to_vec(), at!(4)),
        ("unknown type 0x42", frame(0x42, &[]), at!(5)),
        ("declared length beyond input", frame(0x00, &[1, 2, 3, 4, 5])[..12].to_vec(), |e| {
            matches!(e, Error::IncompleteFrame { needed: 3 })
        }),
        ("ping with payload", frame(0x00, &[0]), at!(10)),
        ("bytes after the frame", [frame(0x00, &[]), vec![0xFF]].concat(), at!(10)),
        ("truncated session init", frame(0x01, &init[..5]), at!(12)),
        ("unknown params mode", frame(0x01, &with(&init, 1, 0x07)), at!(11)),
        ("plaintext modulus 1", frame(0x01, &{
            let mut p = init.clone();
            p[2..10].copy_from_slice(&1u64.to_be_bytes());
            p
        }), at!(12)),
        ("unknown operand kind", frame(0x03, &with(&plain_upload(1, 1, 1), 12, 0x09)), at!(22)),
        ("plain operand short of entries", frame(0x03, &plain_upload(2, 2, 3)), |e| matches!(e, Error::Protocol { .. })),
        ("plain operand with 2^62 entries", frame(0x03, &plain_upload(1 << 31, 1 << 31, 0)), |e| {
            matches!(e, Error::Protocol { .. })
        }),
        ("unknown compute op", frame(0x05, &compute(&[0x02, 0, 0, 0, 1, 0, 0, 0, 0, 2])), at!(18)),
        ("unknown rhs reference", frame(0x05, &compute(&[0x01, 0, 0, 0, 1, 0x07])), at!(23)),
        ("resident name not utf-8", frame(0x05, &compute(&[0x01, 0, 0, 0, 1, 0x01, 0, 2, 0xC3, 0x28])), at!(26)),
        ("error message longer than payload", frame(0x7F, &[0, 1, 0, 9, b'x']), at!(14)),
        ("result ciphertext cut short", frame(0x06, &cipher_result), |e| matches!(e, Error::Protocol { .. })),
    ]
}

#[test]
fn c9_wire_format_goldens() {
    criterion(9, "wire-format goldens, malformed inputs, hash secrecy", None, || {
        // Frame headers: magic, version, type, big-endian length.
        let ping = lib(Message::Ping.encode())?;
        ensure!(ping == [0x56, 0x46, 0x48, 0x45, 0x01, 0x00, 0, 0, 0, 0], "ping frame {ping:02x?}");
        let init = lib(Message::SessionInit { backend: BackendId::EXACT, params: PlainParams::exact(65537).unwrap() }.encode())?;
        let want_init = [
            b"VFHE".as_slice(),
            &[0x01, 0x01, 0, 0, 0, 14],
            &[0x01, 0x00, 0, 0, 0, 0, 0, 0x01, 0x00, 0x01],
            &8192u32.to_be_bytes(),
        ]
        .concat();
        ensure!(init == want_init, "session init frame {init:02x?}");
        let req = lib(Message::ComputeRequest {
            session: 0x0102030405060708,
            lhs: 9,
            rhs: vfhe_core::protocol::OperandRef::Resident("w".into()),
        }
        .encode())?;
        let want_req = [
            b"VFHE\x01\x05\x00\x00\x00\x11".as_slice(),
            &[1, 2, 3, 4, 5, 6, 7, 8, 0x01, 0, 0, 0, 9, 0x01, 0, 1, b'w'],
        ]
        .concat();
        ensure!(req == want_req, "compute request frame {req:02x?}");
        for (ty, msg) in [(0x02u8, "init ack"), (0x04, "operand ack"), (0x06, "result"), (0x7F, "error")] {
            ensure!(vfhe_core::protocol::MsgType::try_from(ty).is_ok(), "{msg} type byte {ty:#04x} unknown");
        }

        // Ciphertext container: magic, backend, mode, LE parameter, LE dims, LE length.
        let registry = BackendRegistry::with_defaults();
        let key = SecretKey::from_seed(9);
        let exact = lib(registry.create(BackendId::EXACT, PlainParams::exact(65537).unwrap()))?;
        let ct = lib(exact.encrypt(&Matrix::from_fn(3, 2, |i, j| (i * 2 + j) as u64).into(), &key))?;
        let bytes = ct.to_bytes();
        let mut want = b"VFC1\x01\x00".to_vec();
        want.extend_from_slice(&[0x01, 0x00, 0x01, 0, 0, 0, 0, 0, 3, 0, 0, 0, 2, 0, 0, 0]);
        want.extend_from_slice(&(ct.payload.len() as u32).to_le_bytes());
        ensure!(bytes[..26] == want[..], "exact ciphertext header {:02x?}", &bytes[..26]);
        ensure!(bytes.len() == 26 + ct.payload.len(), "container length {}", bytes.len());
        ensure!(lib(CipherMatrix::from_bytes(&bytes))? == ct, "ciphertext round trip");
        let approx = lib(registry.create(BackendId::APPROXIMATE, PlainParams::approximate(DEFAULT_SCALE).unwrap()))?;
        let act = lib(approx.encrypt(&Matrix::from_fn(1, 4, |_, j| j as f64).into(), &key))?;
        let abytes = act.to_bytes();
        ensure!(abytes[4..6] == [0x02, 0x01], "approximate id/mode bytes {:02x?}", &abytes[4..6]);
        ensure!(abytes[6..14] == DEFAULT_SCALE.to_bits().to_le_bytes(), "scale bytes {:02x?}", &abytes[6..14]);
        ensure!(abytes[14..22] == [1, 0, 0, 0, 4, 0, 0, 0], "approximate dims {:02x?}", &abytes[14..22]);

        // Malformed inputs: each rejected with the expected structured error.
        let cases = malformed_inputs();
        ensure!(cases.len() >= 20, "only {} malformed inputs", cases.len());
        for (name, input, expected) in &cases {
            match Message::decode(input) {
                Ok(m) => return Err(format!("{name}: decoded as {:?}", m.msg_type())),
                Err(e) if expected(&e) => {}
                Err(e) => return Err(format!("{name}: unexpected error {e}")),
            }
        }
        let cipher_cases: [(&str, Vec<u8>); 3] = [
            ("ciphertext bad magic", [b"VFC2".as_slice(), &bytes[4..]].concat()),
            ("ciphertext header cut", bytes[..20].to_vec()),
            ("ciphertext payload cut", bytes[..bytes.len() - 1].to_vec()),
        ];
        for (name, input) in &cipher_cases {
            match CipherMatrix::from_bytes(input) {
                Err(Error::Protocol { .. } | Error::IncompleteFrame { .. }) => {}
                other => return Err(format!("{name}: {:?}", other.map(|c| c.rows))),
            }
        }

        // No hash, error vector or key bytes in any client-to-server frame of
        // the honest runs.
        let runs = honest_runs();
        ensure!(runs.leaks.is_empty(), "leaks: {:?}", runs.leaks);
        ensure!(runs.frames > 0 && runs.patterns_checked > 0, "nothing captured");
        Ok(format!(
            "goldens match; {} malformed inputs rejected; {} secret patterns absent from {} frames ({} bytes) of the {} honest runs",
            cases.len() + cipher_cases.len(),
            runs.patterns_checked,
            runs.frames,
            runs.bytes,
            runs.runs
        ))
    });
}
