//! Sharded, cluster-mean-approximated InfoNCE t-SNE for 2-D data maps.

pub mod affinity;
pub mod ann;
pub mod cli;
pub mod error;
pub mod io;
pub mod objective;
pub mod metrics;
pub mod optimizer;
pub mod plot;

pub use error::{NomadError, Result};
pub use io::{LayoutMatrix, VectorDataset, VectorFormat};
pub use optimizer::{fit, fit_with, FitOptions, FitResult, TrainConfig};
