//! Error-objective providers.
//!
//! Everything that can score a pruned sub-network implements [`Evaluator`]:
//! the analytic [`SurrogateEvaluator`], the [`ExternalEvaluator`] that talks to
//! a training worker, and the memoizing [`CachedEvaluator`] wrapper.

mod cache;
mod external;
mod surrogate;

pub(crate) use cache::cache_file_schema;
pub use cache::CachedEvaluator;
pub use external::{
    EvalRequest, EvalResult, EvalStatus, ExternalEvaluator, ProtocolError, Transport, WorkerClient, DEFAULT_TIMEOUT,
    PROTOCOL,
};
pub use surrogate::{fnv1a_jitter_hash, SurrogateEvaluator, SurrogateParams};

use crate::exec::Exec;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("invalid coding: {0}")]
    InvalidCoding(String),
    #[error("evaluation failed: {0}")]
    Failed(String),
    #[error("non-finite or negative error {0}")]
    BadValue(f64),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

/// Scores pruned sub-networks. Implementations must be deterministic per
/// `(subnet, genes)` for caching and reproducibility to hold.
pub trait Evaluator: Sync {
    fn evaluate(&self, subnet: usize, genes: &[u32]) -> Result<f64, EvalError>;

    /// Scores a batch; results are in input order. The default runs
    /// [`Evaluator::evaluate`] over the batch in parallel when available.
    fn evaluate_batch(&self, subnet: usize, batch: &[Vec<u32>]) -> Vec<Result<f64, EvalError>> {
        Exec::Parallel.map(batch, |g| self.evaluate(subnet, g))
    }

    /// Stable identity of the evaluator's configuration, used to key caches.
    fn fingerprint(&self) -> String;
}

impl<E: Evaluator + ?Sized> Evaluator for &E {
    fn evaluate(&self, subnet: usize, genes: &[u32]) -> Result<f64, EvalError> {
        (**self).evaluate(subnet, genes)
    }

    fn evaluate_batch(&self, subnet: usize, batch: &[Vec<u32>]) -> Vec<Result<f64, EvalError>> {
        (**self).evaluate_batch(subnet, batch)
    }

    fn fingerprint(&self) -> String {
        (**self).fingerprint()
    }
}

impl<E: Evaluator + ?Sized> Evaluator for Box<E> {
    fn evaluate(&self, subnet: usize, genes: &[u32]) -> Result<f64, EvalError> {
        (**self).evaluate(subnet, genes)
    }

    fn evaluate_batch(&self, subnet: usize, batch: &[Vec<u32>]) -> Vec<Result<f64, EvalError>> {
        (**self).evaluate_batch(subnet, batch)
    }

    fn fingerprint(&self) -> String {
        (**self).fingerprint()
    }
}
