use std::fmt;

use semseq_core::clustering::ClusterError;
use semseq_core::explain::ExplainError;
use semseq_core::indicators::IndicatorError;
use semseq_core::{CorpusError, MetricError, OntologyError};

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Success = 0,
    Validation = 1,
    Io = 2,
    Config = 3,
}

/// An error together with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub exit: Exit,
    pub error: anyhow::Error,
}

pub type Outcome<T = ()> = Result<T, Failure>;

impl Failure {
    pub fn new(exit: Exit, error: impl Into<anyhow::Error>) -> Self {
        Failure {
            exit,
            error: error.into(),
        }
    }

    pub fn config(msg: impl fmt::Display) -> Self {
        Failure::new(Exit::Config, anyhow::anyhow!("{msg}"))
    }

    pub fn validation(msg: impl fmt::Display) -> Self {
        Failure::new(Exit::Validation, anyhow::anyhow!("{msg}"))
    }

    pub fn context(mut self, msg: impl fmt::Display + Send + Sync + 'static) -> Self {
        self.error = self.error.context(msg);
        self
    }
}

fn csv_exit(e: &csv::Error) -> Exit {
    if e.is_io_error() {
        Exit::Io
    } else {
        Exit::Validation
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::new(Exit::Io, e)
    }
}

impl From<OntologyError> for Failure {
    fn from(e: OntologyError) -> Self {
        let exit = match e {
            OntologyError::Io(_) => Exit::Io,
            _ => Exit::Validation,
        };
        Failure::new(exit, e)
    }
}

impl From<CorpusError> for Failure {
    fn from(e: CorpusError) -> Self {
        let exit = match &e {
            CorpusError::Io(_) => Exit::Io,
            CorpusError::Csv(c) => csv_exit(c),
            CorpusError::Ontology(OntologyError::Io(_)) => Exit::Io,
            _ => Exit::Validation,
        };
        Failure::new(exit, e)
    }
}

impl From<MetricError> for Failure {
    fn from(e: MetricError) -> Self {
        let exit = match &e {
            MetricError::Io(_) => Exit::Io,
            MetricError::Csv(c) => csv_exit(c),
            MetricError::Alpha(_) | MetricError::Sigma(_) | MetricError::Pool(_) => Exit::Config,
            MetricError::EmptyCorpus | MetricError::Malformed(_) => Exit::Validation,
        };
        Failure::new(exit, e)
    }
}

impl From<ClusterError> for Failure {
    fn from(e: ClusterError) -> Self {
        let exit = match e {
            ClusterError::KOutOfRange { .. } | ClusterError::TooFew(_) => Exit::Config,
            _ => Exit::Validation,
        };
        Failure::new(exit, e)
    }
}

impl From<IndicatorError> for Failure {
    fn from(e: IndicatorError) -> Self {
        let exit = match e {
            IndicatorError::Breakpoints => Exit::Config,
            _ => Exit::Validation,
        };
        Failure::new(exit, e)
    }
}

impl From<ExplainError> for Failure {
    fn from(e: ExplainError) -> Self {
        let exit = match &e {
            ExplainError::Io(_) | ExplainError::Json(_) => Exit::Io,
            ExplainError::Csv(c) => csv_exit(c),
            ExplainError::Cluster(ClusterError::KOutOfRange { .. } | ClusterError::TooFew(_)) => Exit::Config,
            _ => Exit::Validation,
        };
        Failure::new(exit, e)
    }
}
