//! Reference lists the versioned list is compared against.

mod harris_michael;
mod lazy;
mod sequential;

pub use harris_michael::HarrisMichaelSet;
pub use lazy::LazySet;
pub use sequential::SequentialSet;
