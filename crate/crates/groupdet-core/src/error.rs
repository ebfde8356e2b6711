use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("draft contains no artboards")]
    EmptyDraft,

    #[error("missing image file: {0}")]
    MissingImage(PathBuf),

    #[error("image {path} is {got_w}x{got_h}, artboard {artboard} declares {want_w}x{want_h}")]
    ImageMismatch {
        path: PathBuf,
        artboard: String,
        got_w: u32,
        got_h: u32,
        want_w: u32,
        want_h: u32,
    },

    #[error("invalid synth spec: {0}")]
    InvalidSpec(String),

    #[error("corpus has {packages} packages but {splits} splits need at least one package each")]
    FewerPackagesThanSplits { packages: usize, splits: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("weight mismatch: {0}")]
    WeightMismatch(String),

    #[error("training diverged at iteration {iteration}: loss = {loss}")]
    DivergenceDetected { iteration: usize, loss: f64 },

    #[error("detections reference unknown image id {0}")]
    UnknownImageId(i64),

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("image codec: {0}")]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;
