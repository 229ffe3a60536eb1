use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// `h_n = 0`: no permutation of `n` elements has positive weight.
    #[error("model undefined at n = {n}: h_n = 0")]
    UndefinedModel { n: usize },

    #[error("hypothesis not satisfied: {0}")]
    Hypothesis(String),

    #[error("invalid weight configuration: {0}")]
    Config(String),

    #[error("{what}: n = {n} exceeds the cap {cap}")]
    CapExceeded {
        what: &'static str,
        n: usize,
        cap: usize,
    },

    #[error("index {n} beyond table length {max}")]
    OutOfTable { n: usize, max: usize },

    #[error("cannot certify truncation: {0}")]
    Uncertified(String),

    #[error("malformed cache file: {0}")]
    Cache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
