use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use vfhe_core::adversary::{TamperKind, TamperSpec, TamperTransport, Tamperer};
use vfhe_core::backend::{BackendId, BackendRegistry, PlainMatrix};
use vfhe_core::checksum::{CheckMode, HashOptions, SquareStrategy};
use vfhe_core::params::PlainParams;
use vfhe_core::protocol::client::{client_execute, OperandB, TaskSpec};
use vfhe_core::protocol::{CaptureTransport, LoopbackTransport, Message, ServerConfig, SessionStore};
use vfhe_core::{Error, Matrix};

fn store() -> Arc<SessionStore> {
    Arc::new(
        SessionStore::new(BackendRegistry::with_defaults(), ServerConfig::default())
            .with_resident("weights", Matrix::from_fn(3, 2, |i, j| (i + j) as u64).into()),
    )
}

fn brute(a: &Matrix<u64>, b: &Matrix<u64>, t: u64) -> Matrix<u64> {
    Matrix::from_fn(a.rows(), b.cols(), |i, j| {
        (0..a.cols()).fold(0u128, |acc, p| (acc + a.get(i, p) as u128 * b.get(p, j) as u128) % t as u128) as u64
    })
}

#[test]
fn randomized_exact_runs_pass_and_hide_the_hash() {
    let registry = BackendRegistry::with_defaults();
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    for run in 0..30u64 {
        let (m, n, k) = (rng.gen_range(1..12), rng.gen_range(1..12), rng.gen_range(1..12));
        let t = if run % 3 == 1 { 1 << 20 } else { 65537 };
        let a = Matrix::from_fn(m, n, |_, _| rng.gen_range(0..t));
        let b = Matrix::from_fn(n, k, |_, _| rng.gen_range(0..t));
        let mut task = TaskSpec::new(
            a.clone(),
            if run % 3 == 2 { OperandB::Secret(b.clone().into()) } else { OperandB::Public(b.clone().into()) },
        );
        task.seed = run;
        task.params = PlainParams::exact(t).unwrap();
        task.mode = [CheckMode::Plain, CheckMode::WithError, CheckMode::Dual][run as usize % 3];
        task.hash = if run % 2 == 0 { HashOptions::uniform() } else { HashOptions::pow2() };
        task.square = if m == 1 { SquareStrategy::Pad } else { SquareStrategy::RowSplit };
        let mut cap = CaptureTransport::new(LoopbackTransport::new(store()));
        let out = client_execute(&task, &registry, &mut cap).unwrap();
        assert_eq!(out.result, PlainMatrix::Int(brute(&a, &b, t)), "run {run}");
        for p in out.secrets.sensitive_patterns() {
            assert!(!cap.outbound_contains(&p), "run {run} leaked a secret");
        }
    }
}

#[test]
fn approximate_runs_pass() {
    let registry = BackendRegistry::with_defaults();
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    for run in 0..10 {
        let (m, n, k) = (rng.gen_range(2..10), rng.gen_range(1..10), rng.gen_range(1..10));
        let a = Matrix::from_fn(m, n, |_, _| rng.gen_range(-4.0..4.0));
        let b = Matrix::from_fn(n, k, |_, _| rng.gen_range(-4.0..4.0));
        let mut task = TaskSpec::new(a.clone(), OperandB::Secret(b.clone().into()));
        task.backend = BackendId::APPROXIMATE;
        task.params = PlainParams::approximate(vfhe_core::params::DEFAULT_SCALE).unwrap();
        task.mode = if run % 2 == 0 { CheckMode::Dual } else { CheckMode::Plain };
        let out = client_execute(&task, &registry, &mut LoopbackTransport::new(store())).unwrap();
        let want = vfhe_core::matrix::matmul_real(&a, &b).unwrap();
        let got = out.result.into_real().unwrap();
        for (x, y) in got.as_slice().iter().zip(want.as_slice()) {
            assert!((x - y).abs() < 1e-6);
        }
    }
}

#[test]
fn tampered_runs_raise_integrity_violation() {
    let registry = BackendRegistry::with_defaults();
    let a = Matrix::from_rows(&[[1u64, 2, 3], [4, 5, 6]]).unwrap();
    let b = Matrix::from_rows(&[[1u64, 0], [0, 1], [1, 1]]).unwrap();
    for kind in [TamperKind::Additive, TamperKind::Replace, TamperKind::Fabricate, TamperKind::Bitflip] {
        let task = TaskSpec::new(a.clone(), OperandB::Public(b.clone().into()));
        let tamperer = Tamperer::new(TamperSpec::new(kind, 3), BackendRegistry::with_defaults()).unwrap();
        let mut t = TamperTransport::new(LoopbackTransport::new(store()), tamperer);
        match client_execute(&task, &registry, &mut t) {
            Err(Error::IntegrityViolation(out)) => assert!(!out.report.passed()),
            other => panic!("{kind:?}: {other:?}"),
        }
        assert_eq!(t.tampered(), 1);
    }
}

#[test]
fn resident_operand() {
    let registry = BackendRegistry::with_defaults();
    let a = Matrix::from_rows(&[[1u64, 2, 3], [0, 1, 0]]).unwrap();
    let task = TaskSpec::new(a.clone(), OperandB::Resident("weights".into()));
    let out = client_execute(&task, &registry, &mut LoopbackTransport::new(store())).unwrap();
    let w = Matrix::from_fn(3, 2, |i, j| (i + j) as u64);
    assert_eq!(out.result, brute(&a, &w, 65537).into());
}

#[test]
fn interleaved_sessions_are_isolated() {
    let s = store();
    let init = |s: &SessionStore| match s.handle(Message::SessionInit {
        backend: BackendId::EXACT,
        params: PlainParams::default(),
    }) {
        Message::InitAck { session, .. } => session,
        other => panic!("{other:?}"),
    };
    let (x, y) = (init(&s), init(&s));
    assert_ne!(x, y);
    let upload = |session, handle| Message::UploadOperand {
        session,
        handle,
        operand: vfhe_core::protocol::OperandBlob::Plain(Matrix::from_rows(&[[1u64]]).unwrap().into()),
    };
    assert!(matches!(s.handle(upload(x, 1)), Message::OperandAck { .. }));
    // Same handle in another session is independent; reuse within a session is not.
    assert!(matches!(s.handle(upload(y, 1)), Message::OperandAck { .. }));
    assert!(matches!(s.handle(upload(x, 1)), Message::Error { .. }));
    assert!(matches!(s.handle(upload(99, 1)), Message::Error { .. }));

    // Run two full client tasks on threads against the shared store.
    let registry = Arc::new(BackendRegistry::with_defaults());
    let handles: Vec<_> = (0..4u64)
        .map(|i| {
            let (s, registry) = (s.clone(), registry.clone());
            std::thread::spawn(move || {
                let a = Matrix::from_fn(3, 4, |r, c| (r * 4 + c) as u64 + i);
                let b = Matrix::from_fn(4, 2, |r, c| (r + c) as u64 * (i + 1));
                let mut task = TaskSpec::new(a.clone(), OperandB::Public(b.clone().into()));
                task.seed = i;
                let out = client_execute(&task, &registry, &mut LoopbackTransport::new(s)).unwrap();
                assert_eq!(out.result, brute(&a, &b, 65537).into());
            })
        })
        .collect();
    handles.into_iter().for_each(|h| h.join().unwrap());
}
