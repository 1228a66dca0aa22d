use std::sync::Arc;

use parking_lot::RwLock;

use super::checkpoint::ModelCheckpoint;

/// A checkpoint that readers can snapshot while a writer swaps in a new one.
#[derive(Clone)]
pub struct SharedModel {
    inner: Arc<RwLock<Arc<ModelCheckpoint>>>,
}

impl SharedModel {
    pub fn new(checkpoint: ModelCheckpoint) -> Self {
        Self { inner: Arc::new(RwLock::new(Arc::new(checkpoint))) }
    }

    /// The current checkpoint. Later swaps do not affect the returned handle.
    pub fn snapshot(&self) -> Arc<ModelCheckpoint> {
        self.inner.read().clone()
    }

    /// Replaces the checkpoint, returning the previous one.
    pub fn swap(&self, checkpoint: ModelCheckpoint) -> Arc<ModelCheckpoint> {
        std::mem::replace(&mut *self.inner.write(), Arc::new(checkpoint))
    }
}
