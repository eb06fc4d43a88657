use std::sync::Arc;

use crate::error::Result;

use super::server::SessionStore;

/// A request/response channel carrying whole frames.
pub trait Transport {
    fn exchange(&mut self, request: &[u8]) -> Result<Vec<u8>>;
}

impl<T: Transport + ?Sized> Transport for &mut T {
    fn exchange(&mut self, request: &[u8]) -> Result<Vec<u8>> {
        (**self).exchange(request)
    }
}

impl<T: Transport + ?Sized> Transport for Box<T> {
    fn exchange(&mut self, request: &[u8]) -> Result<Vec<u8>> {
        (**self).exchange(request)
    }
}

/// In-process channel straight into a [`SessionStore`].
#[derive(Clone)]
pub struct LoopbackTransport {
    store: Arc<SessionStore>,
}

impl LoopbackTransport {
    pub fn new(store: Arc<SessionStore>) -> Self {
        LoopbackTransport { store }
    }

    pub fn store(&self) -> &Arc<SessionStore> {
        &self.store
    }
}

impl Transport for LoopbackTransport {
    fn exchange(&mut self, request: &[u8]) -> Result<Vec<u8>> {
        Ok(self.store.handle_bytes(request))
    }
}

/// Records every byte sent and received through the inner transport.
pub struct CaptureTransport<T> {
    inner: T,
    pub outbound: Vec<Vec<u8>>,
    pub inbound: Vec<Vec<u8>>,
}

impl<T> CaptureTransport<T> {
    pub fn new(inner: T) -> Self {
        CaptureTransport {
            inner,
            outbound: Vec::new(),
            inbound: Vec::new(),
        }
    }

    pub fn into_inner(self) -> T {
        self.inner
    }

    /// Whether `needle` occurs anywhere in the client-to-server traffic.
    pub fn outbound_contains(&self, needle: &[u8]) -> bool {
        !needle.is_empty()
            && self
                .outbound
                .iter()
                .any(|f| f.windows(needle.len()).any(|w| w == needle))
    }
}

impl<T: Transport> Transport for CaptureTransport<T> {
    fn exchange(&mut self, request: &[u8]) -> Result<Vec<u8>> {
        self.outbound.push(request.to_vec());
        let reply = self.inner.exchange(request)?;
        self.inbound.push(reply.clone());
        Ok(reply)
    }
}
