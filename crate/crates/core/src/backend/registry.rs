use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::params::PlainParams;

use super::{ApproxBackend, BackendId, ExactBackend, HeBackend};

pub type Constructor = Arc<dyn Fn(PlainParams) -> Result<Arc<dyn HeBackend>> + Send + Sync>;

/// Maps backend ids to constructors.
#[derive(Clone, Default)]
pub struct BackendRegistry {
    entries: BTreeMap<BackendId, (String, Constructor)>,
}

impl BackendRegistry {
    pub fn new() -> Self {
        BackendRegistry::default()
    }

    /// The exact and approximate reference backends.
    pub fn with_defaults() -> Self {
        let mut r = BackendRegistry::new();
        r.register(
            BackendId::EXACT,
            "exact",
            Arc::new(|p| Ok(Arc::new(ExactBackend::new(p)?) as Arc<dyn HeBackend>)),
        )
        .expect("fresh registry");
        r.register(
            BackendId::APPROXIMATE,
            "approximate",
            Arc::new(|p| Ok(Arc::new(ApproxBackend::new(p)?) as Arc<dyn HeBackend>)),
        )
        .expect("fresh registry");
        r
    }

    pub fn register(&mut self, id: BackendId, name: &str, ctor: Constructor) -> Result<()> {
        if self.entries.contains_key(&id) {
            return Err(Error::Backend(format!("backend id {:#04x} already registered", id.0)));
        }
        self.entries.insert(id, (name.to_string(), ctor));
        Ok(())
    }

    pub fn create(&self, id: BackendId, params: PlainParams) -> Result<Arc<dyn HeBackend>> {
        let (_, ctor) = self
            .entries
            .get(&id)
            .ok_or_else(|| Error::Backend(format!("no backend registered under id {:#04x}", id.0)))?;
        ctor(params)
    }

    pub fn ids(&self) -> impl Iterator<Item = BackendId> + '_ {
        self.entries.keys().copied()
    }

    pub fn name(&self, id: BackendId) -> Option<&str> {
        self.entries.get(&id).map(|(n, _)| n.as_str())
    }
}

impl std::fmt::Debug for BackendRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_map()
            .entries(self.entries.iter().map(|(k, (n, _))| (k, n)))
            .finish()
    }
}
