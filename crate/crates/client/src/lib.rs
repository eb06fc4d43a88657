//! Blocking transports that carry protocol frames to a remote server.
//!
//! ```no_run
//! use vfhe_client::connect;
//! use vfhe_core::backend::BackendRegistry;
//! use vfhe_core::protocol::client::{client_execute, OperandB, TaskSpec};
//! use vfhe_core::Matrix;
//!
//! let a = Matrix::from_rows(&[[1u64, 2, 3], [4, 5, 6]]).unwrap();
//! let b = Matrix::from_rows(&[[1u64, 0], [0, 1], [1, 1]]).unwrap();
//! let task = TaskSpec::new(a, OperandB::Public(b.into()));
//! let mut channel = connect("tcp://127.0.0.1:7407").unwrap();
//! let outcome = client_execute(&task, &BackendRegistry::with_defaults(), &mut channel).unwrap();
//! assert!(outcome.report.passed());
//! ```

use std::io::Write;
use std::net::{TcpStream, ToSocketAddrs};
use std::time::Duration;

use vfhe_core::checksum::OverheadModel;
use vfhe_core::protocol::frame::read_frame;
use vfhe_core::protocol::server::DEFAULT_MAX_PAYLOAD;
use vfhe_core::protocol::Transport;
use vfhe_core::{Error, Result};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);

/// Frames over a persistent TCP connection.
pub struct TcpTransport {
    stream: TcpStream,
    max_payload: usize,
}

impl TcpTransport {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        stream.set_read_timeout(Some(DEFAULT_TIMEOUT))?;
        Ok(TcpTransport {
            stream,
            max_payload: DEFAULT_MAX_PAYLOAD,
        })
    }
}

impl Transport for TcpTransport {
    fn exchange(&mut self, request: &[u8]) -> Result<Vec<u8>> {
        self.stream.write_all(request)?;
        read_frame(&mut self.stream, self.max_payload)
    }
}

/// Frames posted to the HTTP API's `/v1/frame` endpoint.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
    base: String,
}

fn http_err(e: reqwest::Error) -> Error {
    Error::Channel(std::io::Error::other(e))
}

impl HttpTransport {
    pub fn new(base: impl Into<String>) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(DEFAULT_TIMEOUT)
            .build()
            .map_err(http_err)?;
        Ok(HttpTransport {
            client,
            base: base.into().trim_end_matches('/').to_string(),
        })
    }

    fn get_json(&self, path: &str) -> Result<serde_json::Value> {
        let resp = self.client.get(format!("{}{path}", self.base)).send().map_err(http_err)?;
        let status = resp.status();
        let body: serde_json::Value = resp.json().map_err(http_err)?;
        if !status.is_success() {
            return Err(Error::Remote {
                code: body["code"].as_u64().unwrap_or(0) as u16,
                message: body["message"].as_str().unwrap_or_default().to_string(),
            });
        }
        Ok(body)
    }

    pub fn health(&self) -> Result<serde_json::Value> {
        self.get_json("/healthz")
    }

    /// Server-side evaluation of the closed-form cost model.
    pub fn overheads(&self, m: u64, n: u64, k: u64) -> Result<OverheadModel> {
        let v = self.get_json(&format!("/v1/overheads?m={m}&n={n}&k={k}"))?;
        serde_json::from_value(v).map_err(|e| Error::Channel(std::io::Error::other(e)))
    }
}

impl Transport for HttpTransport {
    fn exchange(&mut self, request: &[u8]) -> Result<Vec<u8>> {
        let resp = self
            .client
            .post(format!("{}/v1/frame", self.base))
            .header("content-type", "application/octet-stream")
            .body(request.to_vec())
            .send()
            .map_err(http_err)?;
        if !resp.status().is_success() {
            return Err(Error::Channel(std::io::Error::other(format!("http status {}", resp.status()))));
        }
        Ok(resp.bytes().map_err(http_err)?.to_vec())
    }
}

/// Opens a transport from `tcp://host:port`, `http://host:port` or a bare
/// `host:port` (TCP).
pub fn connect(url: &str) -> Result<Box<dyn Transport>> {
    if url.starts_with("http://") {
        Ok(Box::new(HttpTransport::new(url)?))
    } else {
        let addr = url.strip_prefix("tcp://").unwrap_or(url);
        Ok(Box::new(TcpTransport::connect(addr)?))
    }
}
