//! Exact integer cost values with an explicit infinity.

use std::fmt;

/// A cost is either an exact non-negative integer or unreachable.
///
/// `Finite` sorts below `Infinite`, so `min`/`<` treat infinity as losing
/// every comparison against a finite value. Addition with infinity is
/// absorbing; finite addition is checked so overflow is never silent.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Cost {
    Finite(u64),
    Infinite,
}

pub const INFINITY: Cost = Cost::Infinite;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("cost arithmetic overflowed u64")]
pub struct CostOverflow;

impl Cost {
    pub const ZERO: Cost = Cost::Finite(0);

    pub fn is_finite(self) -> bool {
        matches!(self, Cost::Finite(_))
    }

    /// The finite value, if any.
    pub fn finite(self) -> Option<u64> {
        match self {
            Cost::Finite(v) => Some(v),
            Cost::Infinite => None,
        }
    }

    /// Finite value or panic; callers assert reachability first.
    pub fn unwrap_finite(self) -> u64 {
        self.finite().expect("expected a finite cost")
    }

    pub fn try_add(self, other: Cost) -> Result<Cost, CostOverflow> {
        match (self, other) {
            (Cost::Finite(a), Cost::Finite(b)) => {
                a.checked_add(b).map(Cost::Finite).ok_or(CostOverflow)
            }
            _ => Ok(Cost::Infinite),
        }
    }

    /// Addition for sums known to stay in range (e.g. DAG sums over a
    /// load-validated e-graph, where the total of all node costs fits u64).
    pub fn add_in_range(self, other: Cost) -> Cost {
        self.try_add(other)
            .expect("cost sum exceeded the load-time bound")
    }
}

impl fmt::Display for Cost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cost::Finite(v) => write!(f, "{v}"),
            Cost::Infinite => write!(f, "inf"),
        }
    }
}

impl fmt::Debug for Cost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl From<u64> for Cost {
    fn from(v: u64) -> Self {
        Cost::Finite(v)
    }
}
