use serde::{Deserialize, Serialize};

use crate::distributions::MixedErlangLaw;

/// Law of the first waiting time W1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InitialCondition {
    /// W1 = w1 almost surely.
    Fixed(f64),
    /// W1 = B1: the server waits a full preparation time first.
    EqualsB1,
    /// W1 follows the limiting law, so that {W_n} is stationary.
    Stationary,
    /// W1 follows an explicit atom-plus-mixed-Erlang law.
    Law(MixedErlangLaw),
}

impl InitialCondition {
    pub fn zero() -> Self {
        InitialCondition::Fixed(0.0)
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, InitialCondition::Fixed(w) if *w == 0.0)
    }
}
