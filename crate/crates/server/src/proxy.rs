use std::net::SocketAddr;

use tokio::io::AsyncWriteExt;
use tokio::net::{TcpListener, TcpStream};
use tracing::{debug, info, warn};
use vfhe_core::adversary::{TamperSpec, Tamperer};
use vfhe_core::backend::BackendRegistry;
use vfhe_core::protocol::frame::decode_header;
use vfhe_core::protocol::server::DEFAULT_MAX_PAYLOAD;

use crate::tcp::read_frame;

fn admit(h: &[u8]) -> Result<usize, Vec<u8>> {
    match decode_header(h) {
        Ok((_, len)) if len <= DEFAULT_MAX_PAYLOAD => Ok(len),
        _ => Err(Vec::new()),
    }
}

async fn relay(mut client: TcpStream, upstream: SocketAddr, mut tamperer: Tamperer) -> std::io::Result<()> {
    let mut server = TcpStream::connect(upstream).await?;
    loop {
        let request = match read_frame(&mut client, admit).await? {
            Some(Ok(f)) => f,
            Some(Err(_)) | None => return Ok(()),
        };
        server.write_all(&request).await?;
        let reply = match read_frame(&mut server, admit).await? {
            Some(Ok(f)) => f,
            Some(Err(_)) | None => return Ok(()),
        };
        let reply = tamperer.tamper_reply(&reply).unwrap_or_else(|e| {
            warn!(error = %e, "tamper failed, forwarding reply unchanged");
            reply
        });
        client.write_all(&reply).await?;
    }
}

/// Man-in-the-middle between frame clients and `upstream`, tampering every
/// result. Each connection gets its own tamper stream.
pub async fn serve_proxy(listener: TcpListener, upstream: SocketAddr, spec: TamperSpec) -> std::io::Result<()> {
    spec.validate().map_err(std::io::Error::other)?;
    info!(kind = spec.kind.as_str(), %upstream, "tamper proxy ready");
    let mut connection = 0u64;
    loop {
        let (stream, peer) = listener.accept().await?;
        debug!(%peer, "proxy connection");
        let mut spec = spec.clone();
        spec.seed = spec.seed.wrapping_add(connection);
        connection += 1;
        let tamperer = Tamperer::new(spec, BackendRegistry::with_defaults()).map_err(std::io::Error::other)?;
        tokio::spawn(async move {
            if let Err(e) = relay(stream, upstream, tamperer).await {
                warn!(%peer, error = %e, "proxy connection failed");
            }
        });
    }
}
