use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid extent: {0}")]
    InvalidExtent(&'static str),
    #[error("polyline needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("degenerate polyline: zero arclength")]
    ZeroLength,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("channel count {0} is not divisible by 6")]
    Channels(usize),
    #[error("no prior available: SD map is empty")]
    NoPrior,
    #[error("value out of range: {0}")]
    OutOfRange(String),
    #[error("way w{way}: unknown node {node}")]
    UnknownNode { way: i64, node: i64 },
    #[error("way w{0}: needs at least 2 nodes")]
    ShortWay(i64),
    #[error("invalid parameter: {0}")]
    Param(String),
}
