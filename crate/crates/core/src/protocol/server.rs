use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use crate::backend::{BackendId, BackendRegistry, CipherMatrix, HeBackend, OpCounters, Operand, PlainMatrix};
use crate::error::Error;
use crate::params::PlainParams;

use super::frame::{self, Frame};
use super::message::{ErrorCode, Message, OperandBlob, OperandRef};

/// Largest accepted frame payload by default (64 MiB).
pub const DEFAULT_MAX_PAYLOAD: usize = 64 << 20;

#[derive(Clone, Debug)]
pub struct ServerConfig {
    pub max_payload: usize,
    /// Live sessions kept before the oldest is evicted.
    pub max_sessions: usize,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            max_payload: DEFAULT_MAX_PAYLOAD,
            max_sessions: 4096,
        }
    }
}

enum Stored {
    Cipher(CipherMatrix),
    Plain(PlainMatrix),
}

pub struct SessionState {
    pub id: u64,
    pub backend_id: BackendId,
    pub params: PlainParams,
    backend: Arc<dyn HeBackend>,
    operands: HashMap<u32, Stored>,
}

impl SessionState {
    pub fn counters(&self) -> OpCounters {
        self.backend.counters()
    }

    pub fn operand_count(&self) -> usize {
        self.operands.len()
    }
}

/// Server-side state shared by every connection. Each session has its own
/// backend instance and lock, so frames for one session are processed in
/// order while distinct sessions proceed concurrently.
pub struct SessionStore {
    registry: BackendRegistry,
    resident: BTreeMap<String, PlainMatrix>,
    /// Ordered by id, so the first entry is the oldest session.
    sessions: Mutex<BTreeMap<u64, Arc<Mutex<SessionState>>>>,
    next_id: AtomicU64,
    config: ServerConfig,
}

impl SessionStore {
    pub fn new(registry: BackendRegistry, config: ServerConfig) -> Self {
        SessionStore {
            registry,
            resident: BTreeMap::new(),
            sessions: Mutex::new(BTreeMap::new()),
            next_id: AtomicU64::new(1),
            config,
        }
    }

    /// Registers a named server-owned matrix usable as a right operand.
    pub fn with_resident(mut self, name: impl Into<String>, m: PlainMatrix) -> Self {
        self.resident.insert(name.into(), m);
        self
    }

    pub fn config(&self) -> &ServerConfig {
        &self.config
    }

    pub fn resident_names(&self) -> impl Iterator<Item = &str> {
        self.resident.keys().map(String::as_str)
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().unwrap().len()
    }

    pub fn counters(&self, session: u64) -> Option<OpCounters> {
        let s = self.session(session)?;
        let c = s.lock().unwrap().counters();
        Some(c)
    }

    pub fn close(&self, session: u64) -> bool {
        self.sessions.lock().unwrap().remove(&session).is_some()
    }

    fn session(&self, id: u64) -> Option<Arc<Mutex<SessionState>>> {
        self.sessions.lock().unwrap().get(&id).cloned()
    }

    /// Processes one request message and returns the response message.
    pub fn handle(&self, msg: Message) -> Message {
        match msg {
            Message::Ping => Message::Ping,
            Message::SessionInit { backend, params } => self.init(backend, params),
            Message::UploadOperand {
                session,
                handle,
                operand,
            } => self.with_session(session, |s| {
                if s.operands.contains_key(&handle) {
                    return Message::error(
                        ErrorCode::PROTOCOL,
                        format!("handle {handle} already in use"),
                    );
                }
                let stored = match operand {
                    OperandBlob::Cipher(ct) => {
                        if ct.backend_id != s.backend_id || ct.params.mode != s.params.mode {
                            return Message::error(
                                ErrorCode::BACKEND,
                                "ciphertext does not match the session parameters",
                            );
                        }
                        Stored::Cipher(ct)
                    }
                    OperandBlob::Plain(p) => Stored::Plain(p),
                };
                s.operands.insert(handle, stored);
                Message::OperandAck { session, handle }
            }),
            Message::ComputeRequest { session, lhs, rhs } => self.with_session(session, |s| {
                let Some(Stored::Cipher(lhs_ct)) = s.operands.get(&lhs) else {
                    return Message::error(
                        ErrorCode::UNKNOWN_HANDLE,
                        format!("no encrypted operand under handle {lhs}"),
                    );
                };
                let rhs = match &rhs {
                    OperandRef::Handle(h) => match s.operands.get(h) {
                        Some(Stored::Cipher(ct)) => Operand::Cipher(ct),
                        Some(Stored::Plain(p)) => Operand::Plain(p),
                        None => {
                            return Message::error(ErrorCode::UNKNOWN_HANDLE, format!("no operand under handle {h}"))
                        }
                    },
                    OperandRef::Resident(name) => match self.resident.get(name) {
                        Some(p) => Operand::Plain(p),
                        None => {
                            return Message::error(
                                ErrorCode::UNKNOWN_HANDLE,
                                format!("no resident matrix named {name:?}"),
                            )
                        }
                    },
                };
                match s.backend.eval_matmul(lhs_ct, rhs) {
                    Ok(ciphertext) => Message::Result {
                        session,
                        ciphertext,
                    },
                    Err(e) => error_message(&e),
                }
            }),
            other => Message::error(
                ErrorCode::UNSUPPORTED,
                format!("{:?} is not a request", other.msg_type()),
            ),
        }
    }

    fn init(&self, backend: BackendId, params: PlainParams) -> Message {
        let instance = match self.registry.create(backend, params) {
            Ok(b) => b,
            Err(e) => return Message::error(ErrorCode::UNSUPPORTED, e.to_string()),
        };
        let mut sessions = self.sessions.lock().unwrap();
        while sessions.len() >= self.config.max_sessions.max(1) {
            // Clients never close sessions over the frame protocol; the
            // oldest one makes room.
            sessions.pop_first();
        }
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        sessions.insert(
            id,
            Arc::new(Mutex::new(SessionState {
                id,
                backend_id: backend,
                params,
                backend: instance,
                operands: HashMap::new(),
            })),
        );
        Message::InitAck {
            session: id,
            backend,
            params,
        }
    }

    fn with_session(&self, id: u64, f: impl FnOnce(&mut SessionState) -> Message) -> Message {
        match self.session(id) {
            Some(s) => {
                let mut guard = s.lock().unwrap_or_else(|p| p.into_inner());
                f(&mut guard)
            }
            None => Message::error(ErrorCode::UNKNOWN_SESSION, format!("no session {id}")),
        }
    }

    /// Checks a frame header before its payload is read off a stream.
    pub fn admit_header(&self, header: &[u8]) -> Result<usize, Message> {
        match frame::decode_header(header) {
            Ok((_, len)) if len > self.config.max_payload => Err(Message::error(
                ErrorCode::OVERSIZE,
                format!("payload of {len} bytes exceeds limit {}", self.config.max_payload),
            )),
            Ok((_, len)) => Ok(len),
            Err(e) => Err(error_message(&e)),
        }
    }

    /// Bytes-in, bytes-out entry point used by every transport.
    pub fn handle_bytes(&self, request: &[u8]) -> Vec<u8> {
        let response = match frame::decode_exact(request) {
            Ok(f) => server_handle(self, &f),
            Err(e) => error_message(&e),
        };
        response
            .encode()
            .unwrap_or_else(|_| Message::error(ErrorCode::OVERSIZE, "response too large").encode().unwrap())
    }
}

/// Decodes a request frame and produces the response.
pub fn server_handle(store: &SessionStore, frame: &Frame) -> Message {
    if frame.payload.len() > store.config.max_payload {
        return Message::error(
            ErrorCode::OVERSIZE,
            format!("payload of {} bytes exceeds limit {}", frame.payload.len(), store.config.max_payload),
        );
    }
    match Message::from_frame(frame) {
        Ok(msg) => store.handle(msg),
        Err(e) => error_message(&e),
    }
}

pub fn error_message(e: &Error) -> Message {
    let code = match e {
        Error::Protocol { .. } | Error::IncompleteFrame { .. } => ErrorCode::PROTOCOL,
        Error::InvalidDimension(_) => ErrorCode::DIMENSION,
        Error::InvalidParams(_) | Error::Config(_) => ErrorCode::UNSUPPORTED,
        _ => ErrorCode::BACKEND,
    };
    Message::error(code, e.to_string())
}
