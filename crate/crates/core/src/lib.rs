pub mod certify;
pub mod cones;
pub mod cover;
pub mod cutset;
pub mod error;
pub mod instances;
pub mod oracle;
pub mod relax;
pub mod rounding;
pub mod sparsify;

pub use cutset::CutSet;
pub use error::{Error, Result};
