use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("packet size must be nonzero")]
    ZeroSize,
    #[error("packet size {size} exceeds maximum wire size {max}")]
    OversizedPacket { size: i64, max: u32 },
    #[error("trace has no packets")]
    EmptyTrace,
    #[error("label {index} out of range for {classes} classes")]
    LabelOutOfRange { index: usize, classes: usize },
    #[error("closed-world dataset contains an unmonitored trace")]
    UnmonitoredInClosedWorld,

    #[error("not a classic pcap file (magic {0:#010x})")]
    BadMagic(u32),
    #[error("truncated pcap: {0}")]
    Truncated(String),
    #[error("pcap link type {0} is not Ethernet")]
    UnsupportedLinkType(u32),

    #[error("malformed row {line}: {reason}")]
    MalformedRow { line: usize, reason: String },

    #[error("dataset is empty")]
    EmptyDataset,
    #[error("X = {x} out of range (1..={distinct} distinct sizes)")]
    XOutOfRange { x: usize, distinct: usize },
    #[error("filter list is empty")]
    EmptyFilterList,

    #[error("bad size range [{min}, {max}]")]
    BadRange { min: u32, max: u32 },
    #[error("invalid configuration: {0}")]
    BadConfig(String),

    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    DivergedLoss { epoch: usize, loss: f64 },

    #[error("all sweep accuracies are zero and no test size is available to clamp them")]
    ZeroAccuracy,
    #[error("datasets are misaligned: {0}")]
    MisalignedDatasets(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
