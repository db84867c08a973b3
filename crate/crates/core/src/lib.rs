//! Single-pixel-camera acquisition with reversible, key-protected embedding
//! of part of the measurement stream.

pub mod capacity;
pub mod error;
pub mod eval;
pub mod format;
pub mod fwht;
pub mod keystream;
pub mod par;
pub mod rdh;
pub mod recon;
pub mod scene;
pub mod sensing;
pub mod synthetic;

pub use error::{Error, Result};
pub use keystream::{ConstantKey, KeySource, KeySpec, Keystream};
pub use rdh::{embed_stream, extract_stream, EmbedParams, MarkedStream};
pub use scene::SceneImage;
pub use sensing::{build_operator, MatrixKind, MeasurementStream, OperatorDescriptor, SensingOperator};
