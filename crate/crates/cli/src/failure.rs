use std::fmt::Display;

/// Exit-code class of a failed command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Usage,
    Data,
    Compute,
}

impl Kind {
    pub fn code(self) -> u8 {
        match self {
            Kind::Usage => 1,
            Kind::Data => 2,
            Kind::Compute => 3,
        }
    }
}

#[derive(Debug)]
pub struct Failure {
    pub kind: Kind,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn usage(error: impl Into<anyhow::Error>) -> Self {
        Self { kind: Kind::Usage, error: error.into() }
    }

    pub fn data(error: impl Into<anyhow::Error>) -> Self {
        Self { kind: Kind::Data, error: error.into() }
    }

    pub fn compute(error: impl Into<anyhow::Error>) -> Self {
        Self { kind: Kind::Compute, error: error.into() }
    }
}

/// Tags an error with its exit-code class and a context message.
pub trait Classify<T> {
    fn data(self, what: impl Display) -> Result<T, Failure>;
    fn compute(self, what: impl Display) -> Result<T, Failure>;
    fn usage(self, what: impl Display) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn data(self, what: impl Display) -> Result<T, Failure> {
        self.map_err(|e| Failure::data(e.into().context(what.to_string())))
    }

    fn compute(self, what: impl Display) -> Result<T, Failure> {
        self.map_err(|e| Failure::compute(e.into().context(what.to_string())))
    }

    fn usage(self, what: impl Display) -> Result<T, Failure> {
        self.map_err(|e| Failure::usage(e.into().context(what.to_string())))
    }
}
