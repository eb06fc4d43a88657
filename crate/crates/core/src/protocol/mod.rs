//! Framed request/response protocol between the data owner and the
//! computation server.

pub mod client;
pub mod frame;
pub mod message;
pub mod server;
pub mod transport;

pub use client::{client_execute, AnyHash, ClientSecrets, OperandB, Outcome, Protected, TaskSpec};
pub use frame::{decode_frame, encode_frame, Frame, MsgType};
pub use message::{ErrorCode, Message, OperandBlob, OperandRef};
pub use server::{server_handle, ServerConfig, SessionStore};
pub use transport::{CaptureTransport, LoopbackTransport, Transport};
