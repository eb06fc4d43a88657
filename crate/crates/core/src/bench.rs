//! Overhead measurement: operation counters, wall-clock medians and
//! ciphertext sizes for plain versus checksum-augmented products.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use num_rational::Ratio;
use rand::Rng;
use serde::Serialize;

use crate::backend::{BackendId, BackendRegistry, HeBackend, Operand, PlainMatrix, SecretKey};
use crate::checksum::{
    attach_checksum, attach_checksum_cols, compute_checksum, compute_checksum_with_error, compute_column_checksum,
    gen_hash_vector, predict_overheads, HashVector, verify, verify_dual, verify_with_error, CheckMode, ErrorConfig, HashOptions,
    ModRing, OverheadModel, RealRing, ResultBundle, Ring, RowMeta, VerificationReport,
};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::params::{PlainParams, DEFAULT_ERROR_MODULUS, DEFAULT_ERROR_R, DEFAULT_PLAIN_MODULUS, DEFAULT_SCALE};
use crate::seed;

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub points: Vec<(usize, usize, usize)>,
    pub modes: Vec<CheckMode>,
    pub backends: Vec<BackendId>,
    pub trials: usize,
    pub seed: u64,
    /// Use a diagonal left operand.
    pub diagonal: bool,
    /// Plaintext modulus for plain and dual runs; error-mode runs use
    /// `error_t` and `error_r`.
    pub t: u64,
    pub error_t: u64,
    pub error_r: u64,
    pub scale: f64,
    /// Skip timing and evaluate points on parallel threads.
    pub counters_only: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            points: vec![(64, 64, 64)],
            modes: vec![CheckMode::Plain],
            backends: vec![BackendId::EXACT],
            trials: 5,
            seed: 0,
            diagonal: false,
            t: DEFAULT_PLAIN_MODULUS,
            error_t: DEFAULT_ERROR_MODULUS,
            error_r: DEFAULT_ERROR_R,
            scale: DEFAULT_SCALE,
            counters_only: false,
        }
    }
}

impl BenchConfig {
    /// Cubic points `(s, s, s)`.
    pub fn sweep(sizes: &[usize]) -> Self {
        BenchConfig {
            points: sizes.iter().map(|&s| (s, s, s)).collect(),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if let Some(p) = self.points.iter().find(|(m, n, k)| *m == 0 || *n == 0 || *k == 0) {
            return Err(Error::Config(format!("dimensions must be positive, got {p:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchRow {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub mode: CheckMode,
    pub backend: BackendId,
    pub multadds_plain: u64,
    pub multadds_checked: u64,
    pub ratio_measured: Ratio<u64>,
    pub ratio_predicted: Ratio<u64>,
    pub enc_ms: f64,
    pub dec_ms: f64,
    pub verify_ms: f64,
    pub server_ms_plain: f64,
    pub server_ms_checked: f64,
    pub pt_expansion: Ratio<u64>,
    pub ct_bytes_plain: usize,
    pub ct_bytes_checked: usize,
    pub verify_ops: u64,
    pub predicted: OverheadModel,
    pub passed: bool,
}

impl BenchRow {
    /// `server_ms_checked / server_ms_plain - 1`.
    pub fn wall_clock_overhead(&self) -> f64 {
        self.server_ms_checked / self.server_ms_plain - 1.0
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub trials: usize,
    /// Parameter set the numbers were measured under.
    pub params: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Table,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "table" => Ok(ReportFormat::Table),
            other => Err(Error::Config(format!("unknown report format {other:?}"))),
        }
    }
}

pub const CSV_COLUMNS: [&str; 17] = [
    "m",
    "n",
    "k",
    "mode",
    "backend",
    "multadds_plain",
    "multadds_checked",
    "ratio_measured",
    "ratio_predicted",
    "enc_ms",
    "dec_ms",
    "verify_ms",
    "server_ms_plain",
    "server_ms_checked",
    "pt_expansion",
    "ct_bytes_plain",
    "ct_bytes_checked",
];

fn ratio(r: Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn cells(r: &BenchRow) -> [String; 17] {
    [
        r.m.to_string(),
        r.n.to_string(),
        r.k.to_string(),
        r.mode.as_str().to_string(),
        r.backend.name().to_string(),
        r.multadds_plain.to_string(),
        r.multadds_checked.to_string(),
        format!("{:.6}", ratio(r.ratio_measured)),
        format!("{:.6}", ratio(r.ratio_predicted)),
        format!("{:.4}", r.enc_ms),
        format!("{:.4}", r.dec_ms),
        format!("{:.4}", r.verify_ms),
        format!("{:.4}", r.server_ms_plain),
        format!("{:.4}", r.server_ms_checked),
        format!("{:.6}", ratio(r.pt_expansion)),
        r.ct_bytes_plain.to_string(),
        r.ct_bytes_checked.to_string(),
    ]
}

pub fn emit_report(report: &BenchReport, format: ReportFormat) -> Vec<u8> {
    let mut out = String::new();
    match format {
        ReportFormat::Csv => {
            out.push_str(&CSV_COLUMNS.join(","));
            out.push('\n');
            for r in &report.rows {
                out.push_str(&cells(r).join(","));
                out.push('\n');
            }
        }
        ReportFormat::Table => {
            let rows: Vec<[String; 17]> = report.rows.iter().map(cells).collect();
            let widths: Vec<usize> = (0..CSV_COLUMNS.len())
                .map(|c| rows.iter().map(|r| r[c].len()).chain([CSV_COLUMNS[c].len()]).max().unwrap())
                .collect();
            let line = |cols: &mut dyn Iterator<Item = &str>, out: &mut String| {
                let parts: Vec<String> = cols.zip(&widths).map(|(s, w)| format!("{s:>w$}")).collect();
                out.push_str(parts.join("  ").trim_end());
                out.push('\n');
            };
            line(&mut CSV_COLUMNS.iter().copied(), &mut out);
            for r in &rows {
                line(&mut r.iter().map(String::as_str), &mut out);
            }
            if !report.params.is_empty() {
                let _ = writeln!(out, "# {}; median of {} trials", report.params, report.trials);
            }
        }
    }
    out.into_bytes()
}

fn median(mut xs: Vec<Duration>) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.sort_unstable();
    let mid = xs.len() / 2;
    let d = if xs.len() % 2 == 1 {
        xs[mid]
    } else {
        (xs[mid - 1] + xs[mid]) / 2
    };
    d.as_secs_f64() * 1e3
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, Duration)> {
    let start = Instant::now();
    let v = f()?;
    Ok((v, start.elapsed()))
}

/// Bridges a ring and the backend plaintext type for benchmarking.
trait BenchDomain: Ring {
    fn wrap(m: Matrix<Self::Elem>) -> PlainMatrix;
    fn unwrap(p: PlainMatrix) -> Result<Matrix<Self::Elem>>;
    fn random(&self, rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix<Self::Elem>;
    fn checksum_with_error(&self, a: &Matrix<Self::Elem>, h: &HashVector<Self::Elem>, err: &ErrorConfig)
        -> Result<Vec<Self::Elem>>;
    fn verify_with_error(
        &self,
        bundle: &ResultBundle<Self::Elem>,
        h: &HashVector<Self::Elem>,
        err: &ErrorConfig,
    ) -> Result<VerificationReport>;
}

impl BenchDomain for ModRing {
    fn wrap(m: Matrix<u64>) -> PlainMatrix {
        m.into()
    }

    fn unwrap(p: PlainMatrix) -> Result<Matrix<u64>> {
        p.into_int()
    }

    fn random(&self, rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix<u64> {
        Matrix::from_fn(rows, cols, |_, _| rng.gen_range(0..self.modulus()))
    }

    fn checksum_with_error(&self, a: &Matrix<u64>, h: &HashVector<u64>, err: &ErrorConfig) -> Result<Vec<u64>> {
        compute_checksum_with_error(self, a, h, err)
    }

    fn verify_with_error(
        &self,
        bundle: &ResultBundle<u64>,
        h: &HashVector<u64>,
        err: &ErrorConfig,
    ) -> Result<VerificationReport> {
        verify_with_error(self, bundle, h, err)
    }
}

impl BenchDomain for RealRing {
    fn wrap(m: Matrix<f64>) -> PlainMatrix {
        m.into()
    }

    fn unwrap(p: PlainMatrix) -> Result<Matrix<f64>> {
        p.into_real()
    }

    fn random(&self, rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix<f64> {
        Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn checksum_with_error(&self, _: &Matrix<f64>, _: &HashVector<f64>, _: &ErrorConfig) -> Result<Vec<f64>> {
        Err(Error::ModeMismatch("error-augmented checks need an exact backend".into()))
    }

    fn verify_with_error(&self, _: &ResultBundle<f64>, _: &HashVector<f64>, _: &ErrorConfig) -> Result<VerificationReport> {
        Err(Error::ModeMismatch("error-augmented checks need an exact backend".into()))
    }
}

struct Point {
    m: usize,
    n: usize,
    k: usize,
    mode: CheckMode,
    backend: BackendId,
}

pub fn run_benchmark(cfg: &BenchConfig) -> Result<BenchReport> {
    cfg.validate()?;
    let registry = BackendRegistry::with_defaults();
    let mut points = Vec::new();
    for &backend in &cfg.backends {
        if registry.name(backend).is_none() {
            return Err(Error::Config(format!("backend {:#04x} is not available", backend.0)));
        }
        for &mode in &cfg.modes {
            if mode == CheckMode::WithError && backend != BackendId::EXACT {
                return Err(Error::Config("error-augmented checks run on the exact backend only".into()));
            }
            for &(m, n, k) in &cfg.points {
                points.push(Point { m, n, k, mode, backend });
            }
        }
    }
    let rows = if cfg.counters_only {
        std::thread::scope(|s| {
            let handles: Vec<_> = points
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let registry = &registry;
                    s.spawn(move || run_point(cfg, registry, p, i as u64, 1))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err(Error::Backend("benchmark thread panicked".into()))))
                .collect::<Result<Vec<_>>>()
        })?
    } else {
        points
            .iter()
            .enumerate()
            .map(|(i, p)| run_point(cfg, &registry, p, i as u64, cfg.trials))
            .collect::<Result<Vec<_>>>()?
    };
    Ok(BenchReport {
        rows,
        trials: if cfg.counters_only { 1 } else { cfg.trials },
        params: format!(
            "exact t={} (error mode t={} r={}), approximate scale=2^{}, reference linear-encoding backends",
            cfg.t,
            cfg.error_t,
            cfg.error_r,
            cfg.scale.log2()
        ),
    })
}

fn run_point(cfg: &BenchConfig, registry: &BackendRegistry, p: &Point, index: u64, trials: usize) -> Result<BenchRow> {
    let params = match (p.backend, p.mode) {
        (BackendId::EXACT, CheckMode::WithError) => PlainParams::exact(cfg.error_t)?,
        (BackendId::EXACT, _) => PlainParams::exact(cfg.t)?,
        _ => PlainParams::approximate(cfg.scale)?,
    };
    let backend = registry.create(p.backend, params)?;
    let point_seed = seed::derive_u64(cfg.seed, &format!("bench-point-{index}"));
    if params.is_exact() {
        measure(&ModRing::new(params.modulus()?), cfg, &*backend, p, point_seed, trials)
    } else {
        measure(&RealRing::default(), cfg, &*backend, p, point_seed, trials)
    }
}

fn measure<R: BenchDomain>(
    ring: &R,
    cfg: &BenchConfig,
    backend: &dyn HeBackend,
    p: &Point,
    point_seed: u64,
    trials: usize,
) -> Result<BenchRow> {
    let (m, n, k) = (p.m, p.n, p.k);
    let mut rng = seed::rng(point_seed, "bench-operands");
    let mut a = ring.random(m, n, &mut rng);
    if cfg.diagonal {
        a = Matrix::from_fn(m, n, |i, j| if i == j { a.get(i, j) } else { Default::default() });
    }
    let b = ring.random(n, k, &mut rng);
    let key = SecretKey::from_seed(point_seed);
    let h = gen_hash_vector(ring, m, HashOptions::uniform(), seed::derive_u64(point_seed, "row-hash"))?;
    let dual = p.mode == CheckMode::Dual;

    // Right operand: plaintext, or encrypted (with a column checksum) in dual mode.
    let (hb, b_plain_ct, b_checked_ct) = if dual {
        let hb = gen_hash_vector(ring, k, HashOptions::uniform(), seed::derive_u64(point_seed, "col-hash"))?;
        let col = compute_column_checksum(ring, &b, &hb)?;
        let b_checked = attach_checksum_cols(&b, &[col])?.stacked();
        (
            Some(hb),
            Some(backend.encrypt(&R::wrap(b.clone()), &key)?),
            Some(backend.encrypt(&R::wrap(b_checked), &key)?),
        )
    } else {
        (None, None, None)
    };
    let b_plain = R::wrap(b.clone());
    let rhs = |checked: bool| match (&b_plain_ct, &b_checked_ct) {
        (Some(pc), Some(cc)) => Operand::Cipher(if checked { cc } else { pc }),
        _ => Operand::Plain(&b_plain),
    };

    let err = if p.mode == CheckMode::WithError {
        Some(ErrorConfig::generate(
            n,
            cfg.error_r,
            cfg.error_t,
            seed::derive_u64(point_seed, "error"),
        )?)
    } else {
        None
    };
    let protect = |a: &Matrix<R::Elem>| -> Result<PlainMatrix> {
        let row = match &err {
            Some(e) => ring.checksum_with_error(a, &h, e)?,
            None => compute_checksum(ring, a, &h)?,
        };
        let meta = if err.is_some() { RowMeta::with_error("h") } else { RowMeta::plain("h") };
        Ok(R::wrap(attach_checksum(a, &[row], vec![meta])?.stacked()))
    };

    let ct_plain = backend.encrypt(&R::wrap(a.clone()), &key)?;
    let mut enc = Vec::new();
    let mut dec = Vec::new();
    let mut ver = Vec::new();
    let mut srv_plain = Vec::new();
    let mut srv_checked = Vec::new();
    let mut last: Option<(usize, u64, u64, VerificationReport)> = None;

    for trial in 0..trials {
        let (ct_checked, t_enc) = timed(|| backend.encrypt(&protect(&a)?, &key))?;
        enc.push(t_enc);

        // Alternate the order to cancel drift between the two runs.
        let run_plain = || -> Result<(u64, Duration)> {
            backend.reset_counters();
            let (_, t) = timed(|| backend.eval_matmul(&ct_plain, rhs(false)))?;
            Ok((backend.counters().scalar_multadds, t))
        };
        let run_checked = || -> Result<(u64, crate::backend::CipherMatrix, Duration)> {
            backend.reset_counters();
            let (out, t) = timed(|| backend.eval_matmul(&ct_checked, rhs(true)))?;
            Ok((backend.counters().scalar_multadds, out, t))
        };
        let ((mp, tp), (mc, out, tc)) = if trial % 2 == 0 {
            let x = run_plain()?;
            (x, run_checked()?)
        } else {
            let y = run_checked()?;
            (run_plain()?, y)
        };
        srv_plain.push(tp);
        srv_checked.push(tc);

        let (product, t_dec) = timed(|| R::unwrap(backend.decrypt(&out, &key)?))?;
        dec.push(t_dec);
        let (report, t_ver) = timed(|| {
            let bundle = ResultBundle::split(&product, 1, usize::from(dual))?;
            match (&err, &hb) {
                (Some(e), _) => ring.verify_with_error(&bundle, &h, e),
                (None, Some(hb)) => verify_dual(ring, &bundle, &h, hb),
                (None, None) => verify(ring, &bundle, &h),
            }
        })?;
        ver.push(t_ver);
        last = Some((ct_checked.encoded_len(), mp, mc, report));
    }

    let (ct_bytes_checked, mp, mc, report) = last.expect("at least one trial");
    let predicted = predict_overheads(m as u64, n as u64, k as u64)?;
    let ratio_predicted = if dual {
        Ratio::new(((m + 1) * (k + 1)) as u64, (m * k) as u64)
    } else {
        predicted.server_ratio()
    };
    Ok(BenchRow {
        m,
        n,
        k,
        mode: p.mode,
        backend: p.backend,
        multadds_plain: mp,
        multadds_checked: mc,
        ratio_measured: Ratio::new(mc, mp),
        ratio_predicted,
        enc_ms: median(enc),
        dec_ms: median(dec),
        verify_ms: median(ver),
        server_ms_plain: median(srv_plain),
        server_ms_checked: median(srv_checked),
        pt_expansion: predicted.plaintext_expansion,
        ct_bytes_plain: ct_plain.encoded_len(),
        ct_bytes_checked,
        verify_ops: report.client_ops,
        passed: report.passed(),
        predicted,
    })
}
