//! Translation backends used by model-driven selection.
//!
//! A [`Bridge`] owns one backend per direction: `fwd` translates source to
//! target and `rev` scores the reconstruction of the source from a target
//! sentence. The bridge enforces the scoring contract (one non-positive
//! log-probability per target token) whatever the backend.

mod external;
mod mock;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::{ParallelCorpus, Sentence};
use crate::error::{Error, Result};

pub use external::{conformance, serve, ExternalBackend, ExternalProcess, Request, Response};
pub use mock::{train_mock, Fallback, LexicalMockBackend};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Fwd,
    Rev,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Fwd => "fwd",
            Direction::Rev => "rev",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Capabilities {
    pub translate: bool,
    pub score: bool,
    pub direction: Direction,
}

pub trait TranslationBackend: Send + Sync {
    fn capabilities(&self) -> Capabilities;

    fn translate(&self, source: &[String]) -> Result<Sentence>;

    /// Log-probability of each target token given the source.
    fn token_logprobs(&self, source: &[String], target: &[String]) -> Result<Vec<f64>>;
}

/// A pair of directional backends.
#[derive(Clone)]
pub struct Bridge {
    forward: Arc<dyn TranslationBackend>,
    reverse: Arc<dyn TranslationBackend>,
}

impl fmt::Debug for Bridge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Bridge")
            .field("forward", &self.forward.capabilities())
            .field("reverse", &self.reverse.capabilities())
            .finish()
    }
}

impl Bridge {
    pub fn new(forward: Arc<dyn TranslationBackend>, reverse: Arc<dyn TranslationBackend>) -> Self {
        Bridge { forward, reverse }
    }

    /// Mock pair trained on `pairs` in both directions.
    pub fn train_mock(pairs: &ParallelCorpus) -> Result<Self> {
        Ok(Bridge::new(
            Arc::new(LexicalMockBackend::train(pairs, Direction::Fwd)?),
            Arc::new(LexicalMockBackend::train(pairs, Direction::Rev)?),
        ))
    }

    /// Both directions served by one external process.
    pub fn external(process: Arc<ExternalProcess>) -> Self {
        Bridge::new(
            Arc::new(ExternalBackend::new(process.clone(), Direction::Fwd)),
            Arc::new(ExternalBackend::new(process, Direction::Rev)),
        )
    }

    pub fn backend(&self, direction: Direction) -> &dyn TranslationBackend {
        match direction {
            Direction::Fwd => self.forward.as_ref(),
            Direction::Rev => self.reverse.as_ref(),
        }
    }

    pub fn supports_scoring_round_trip(&self) -> bool {
        self.forward.capabilities().translate && self.reverse.capabilities().score
    }

    pub fn translate(&self, direction: Direction, source: &[String]) -> Result<Sentence> {
        let backend = self.backend(direction);
        if !backend.capabilities().translate {
            return Err(Error::Backend(format!(
                "{direction} backend does not support translation"
            )));
        }
        if source.is_empty() {
            return Ok(Vec::new());
        }
        backend.translate(source)
    }

    pub fn token_logprobs(
        &self,
        direction: Direction,
        source: &[String],
        target: &[String],
    ) -> Result<Vec<f64>> {
        if target.is_empty() {
            return Err(Error::InvalidArgument(
                "cannot score an empty target".into(),
            ));
        }
        let backend = self.backend(direction);
        if !backend.capabilities().score {
            return Err(Error::Backend(format!(
                "{direction} backend does not support scoring"
            )));
        }
        let logprobs = backend.token_logprobs(source, target)?;
        if logprobs.len() != target.len() {
            return Err(Error::ScoringLengthMismatch {
                expected: target.len(),
                got: logprobs.len(),
            });
        }
        if let Some(bad) = logprobs.iter().find(|lp| lp.is_nan() || **lp > 0.0) {
            return Err(Error::Protocol(format!(
                "log-probability {bad} is not <= 0"
            )));
        }
        Ok(logprobs)
    }
}
