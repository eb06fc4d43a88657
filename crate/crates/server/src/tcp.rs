use std::sync::Arc;

use tokio::io::{AsyncRead, AsyncReadExt, AsyncWrite, AsyncWriteExt};
use tokio::net::TcpListener;
use tracing::{debug, warn};
use vfhe_core::protocol::frame::HEADER_LEN;
use vfhe_core::protocol::SessionStore;

/// Reads one frame. `Ok(None)` on a clean close between frames; `Err` with
/// a ready-to-send error reply when the header is rejected.
pub(crate) async fn read_frame<R: AsyncRead + Unpin>(
    r: &mut R,
    admit: impl Fn(&[u8]) -> Result<usize, Vec<u8>>,
) -> std::io::Result<Option<Result<Vec<u8>, Vec<u8>>>> {
    let mut buf = vec![0u8; HEADER_LEN];
    match r.read_exact(&mut buf).await {
        Ok(_) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let len = match admit(&buf) {
        Ok(len) => len,
        Err(reply) => return Ok(Some(Err(reply))),
    };
    buf.resize(HEADER_LEN + len, 0);
    r.read_exact(&mut buf[HEADER_LEN..]).await?;
    Ok(Some(Ok(buf)))
}

async fn serve_connection<S: AsyncRead + AsyncWrite + Unpin>(mut stream: S, store: Arc<SessionStore>) -> std::io::Result<()> {
    let admit = |h: &[u8]| store.admit_header(h).map_err(|m| m.encode().unwrap_or_default());
    loop {
        match read_frame(&mut stream, admit).await? {
            None => return Ok(()),
            Some(Ok(request)) => {
                let store = store.clone();
                let reply = tokio::task::spawn_blocking(move || store.handle_bytes(&request))
                    .await
                    .map_err(std::io::Error::other)?;
                stream.write_all(&reply).await?;
            }
            Some(Err(reply)) => {
                // The stream position is unknown after a rejected header.
                stream.write_all(&reply).await?;
                return Ok(());
            }
        }
    }
}

/// Accepts frame connections until the listener fails.
pub async fn serve_tcp(listener: TcpListener, store: Arc<SessionStore>) -> std::io::Result<()> {
    loop {
        let (stream, peer) = listener.accept().await?;
        debug!(%peer, "frame connection");
        let store = store.clone();
        tokio::spawn(async move {
            if let Err(e) = serve_connection(stream, store).await {
                warn!(%peer, error = %e, "connection closed with error");
            }
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use vfhe_core::backend::BackendRegistry;
    use vfhe_core::protocol::{Message, ServerConfig};

    #[tokio::test]
    async fn frames_split_across_writes() {
        let (mut client, server) = tokio::io::duplex(64);
        let store = Arc::new(SessionStore::new(BackendRegistry::with_defaults(), ServerConfig::default()));
        let task = tokio::spawn(serve_connection(server, store));
        let ping = Message::Ping.encode().unwrap();
        client.write_all(&ping[..3]).await.unwrap();
        client.write_all(&ping[3..]).await.unwrap();
        let mut reply = vec![0u8; ping.len()];
        client.read_exact(&mut reply).await.unwrap();
        assert_eq!(reply, ping);
        drop(client);
        task.await.unwrap().unwrap();
    }

    #[tokio::test]
    async fn clean_close_and_truncated_payload() {
        let admit = |_: &[u8]| Ok(4);
        assert!(read_frame(&mut &b""[..], admit).await.unwrap().is_none());
        let short = b"VFHE\x01\x00\x00\x00\x00\x04ab";
        assert!(read_frame(&mut &short[..], admit).await.is_err());
        let reject = |_: &[u8]| Err(vec![7]);
        assert_eq!(read_frame(&mut &short[..], reject).await.unwrap(), Some(Err(vec![7])));
    }
}
