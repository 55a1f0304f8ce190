use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};

/// Shared flag polled between outer iterations.
#[derive(Debug, Clone, Default)]
pub struct CancelToken(Arc<AtomicBool>);

impl CancelToken {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cancel(&self) {
        self.0.store(true, Ordering::SeqCst);
    }

    pub fn is_cancelled(&self) -> bool {
        self.0.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProgressEvent {
    Iteration {
        column: Option<usize>,
        ell: usize,
        iteration: usize,
        residual_norm: f64,
    },
    EllFinished {
        column: Option<usize>,
        ell: usize,
        completed: usize,
        total: usize,
    },
    ColumnFinished {
        column: usize,
        completed: usize,
        total: usize,
        ok: bool,
    },
}

pub type ProgressFn = Arc<dyn Fn(&ProgressEvent) + Send + Sync>;

/// Cancellation and progress reporting for a run.
#[derive(Clone, Default)]
pub struct RunControl {
    pub cancel: CancelToken,
    pub progress: Option<ProgressFn>,
    /// Section column being processed, if any.
    pub column: Option<usize>,
}

impl std::fmt::Debug for RunControl {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RunControl")
            .field("cancel", &self.cancel)
            .field("progress", &self.progress.is_some())
            .field("column", &self.column)
            .finish()
    }
}

impl RunControl {
    pub fn with_cancel(cancel: CancelToken) -> Self {
        Self {
            cancel,
            ..Self::default()
        }
    }

    pub fn with_progress(mut self, f: impl Fn(&ProgressEvent) + Send + Sync + 'static) -> Self {
        self.progress = Some(Arc::new(f));
        self
    }

    pub(crate) fn for_column(&self, column: usize) -> Self {
        Self {
            column: Some(column),
            ..self.clone()
        }
    }

    pub(crate) fn check(&self) -> Result<()> {
        if self.cancel.is_cancelled() {
            Err(Error::Cancelled)
        } else {
            Ok(())
        }
    }

    pub(crate) fn emit(&self, event: ProgressEvent) {
        if let Some(f) = &self.progress {
            f(&event);
        }
    }
}
