//! Network front ends for a [`SessionStore`]: the binary frame protocol over
//! TCP, a JSON API over HTTP, and a tampering proxy for testing.

mod http;
mod proxy;
mod tcp;

use std::net::SocketAddr;
use std::sync::Arc;

use tokio::net::TcpListener;
use tracing::info;
use vfhe_core::protocol::SessionStore;

pub use http::{router, ComputeRequest, ComputeResponse, OperandRequest, SessionRequest, SessionResponse};
pub use proxy::serve_proxy;
pub use tcp::serve_tcp;

pub const DEFAULT_PORT: u16 = 7407;

/// Serves the JSON API until the listener fails.
pub async fn serve_http(listener: TcpListener, store: Arc<SessionStore>) -> std::io::Result<()> {
    axum::serve(listener, router(store)).await
}

/// Binds both front ends and runs them until either stops.
pub async fn run(tcp: SocketAddr, http: Option<SocketAddr>, store: Arc<SessionStore>) -> std::io::Result<()> {
    let frames = TcpListener::bind(tcp).await?;
    info!(addr = %frames.local_addr()?, "frame server listening");
    match http {
        Some(addr) => {
            let api = TcpListener::bind(addr).await?;
            info!(addr = %api.local_addr()?, "http api listening");
            tokio::select! {
                r = serve_tcp(frames, store.clone()) => r,
                r = serve_http(api, store) => r,
            }
        }
        None => serve_tcp(frames, store).await,
    }
}
