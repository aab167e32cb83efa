//! Service-time and preparation-time laws, the law of X = B' - A, and the
//! textual spec grammar used by the command line.

mod law;
mod parse;
mod prep;
mod service;
mod xdist;

pub use law::{MixedErlangLaw, TimeLaw};
pub use prep::PrepTimeModel;
pub use service::{ServiceTimeModel, MAX_LST_ORDER};
pub use xdist::XDistribution;

pub(crate) use xdist::prep_exceeds;
