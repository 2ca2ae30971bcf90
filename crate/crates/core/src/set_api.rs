//! The set interface shared by every implementation, and construction by name.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::baseline_sets::{HarrisMichaelSet, LazySet, SequentialSet};
use crate::probe::{NoProbe, Probe};
use crate::versioned_set::VersionedSet;

/// Key reserved for the head sentinel.
pub const HEAD_KEY: i64 = i64::MIN;
/// Key reserved for the tail sentinel.
pub const TAIL_KEY: i64 = i64::MAX;

#[inline]
#[track_caller]
pub(crate) fn check_key(key: i64) {
    assert!(
        key != HEAD_KEY && key != TAIL_KEY,
        "key {key} is reserved for a sentinel"
    );
}

/// insert/remove/contains over `i64` keys. The two sentinel keys
/// ([`HEAD_KEY`], [`TAIL_KEY`]) are rejected with a panic.
pub trait SetOps {
    /// Adds `key`; true iff it was absent.
    fn insert(&self, key: i64) -> bool;
    /// Removes `key`; true iff it was present.
    fn remove(&self, key: i64) -> bool;
    fn contains(&self, key: i64) -> bool;
    /// Keys in ascending order. Only meaningful while no update is running.
    fn keys(&self) -> Vec<i64>;

    fn len(&self) -> usize {
        self.keys().len()
    }

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A set that may be shared between threads.
pub trait ConcurrentSet: SetOps + Send + Sync {}

impl<T: SetOps + Send + Sync> ConcurrentSet for T {}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ImplKind {
    Versioned,
    Lazy,
    HarrisMichael,
    Sequential,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SetError {
    #[error(
        "unknown implementation `{0}` (expected versioned, lazy, harris-michael or sequential)"
    )]
    UnknownImpl(String),
    #[error("the {0} set is single-threaded and cannot be shared")]
    NotConcurrent(ImplKind),
}

impl ImplKind {
    pub const ALL: [ImplKind; 4] = [
        ImplKind::Versioned,
        ImplKind::Lazy,
        ImplKind::HarrisMichael,
        ImplKind::Sequential,
    ];

    pub const CONCURRENT: [ImplKind; 3] =
        [ImplKind::Versioned, ImplKind::Lazy, ImplKind::HarrisMichael];

    pub fn name(self) -> &'static str {
        match self {
            ImplKind::Versioned => "versioned",
            ImplKind::Lazy => "lazy",
            ImplKind::HarrisMichael => "harris-michael",
            ImplKind::Sequential => "sequential",
        }
    }

    pub fn is_concurrent(self) -> bool {
        self != ImplKind::Sequential
    }

    pub fn build(self) -> Box<dyn SetOps> {
        self.build_with(NoProbe)
    }

    pub fn build_with<P: Probe + Send + Sync + 'static>(self, probe: P) -> Box<dyn SetOps> {
        match self {
            ImplKind::Sequential => Box::new(SequentialSet::with_probe(probe)),
            _ => match self.build_shared_with(probe) {
                Ok(set) => Box::new(SharedBox(set)),
                Err(_) => unreachable!(),
            },
        }
    }

    pub fn build_shared(self) -> Result<Arc<dyn ConcurrentSet>, SetError> {
        self.build_shared_with(NoProbe)
    }

    pub fn build_shared_with<P: Probe + Send + Sync + 'static>(
        self,
        probe: P,
    ) -> Result<Arc<dyn ConcurrentSet>, SetError> {
        Ok(match self {
            ImplKind::Versioned => Arc::new(VersionedSet::with_probe(probe)),
            ImplKind::Lazy => Arc::new(LazySet::with_probe(probe)),
            ImplKind::HarrisMichael => Arc::new(HarrisMichaelSet::with_probe(probe)),
            ImplKind::Sequential => return Err(SetError::NotConcurrent(self)),
        })
    }
}

struct SharedBox(Arc<dyn ConcurrentSet>);

impl SetOps for SharedBox {
    fn insert(&self, key: i64) -> bool {
        self.0.insert(key)
    }
    fn remove(&self, key: i64) -> bool {
        self.0.remove(key)
    }
    fn contains(&self, key: i64) -> bool {
        self.0.contains(key)
    }
    fn keys(&self) -> Vec<i64> {
        self.0.keys()
    }
}

impl fmt::Display for ImplKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ImplKind {
    type Err = SetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "versioned" => Ok(ImplKind::Versioned),
            "lazy" => Ok(ImplKind::Lazy),
            "harris-michael" | "hm" => Ok(ImplKind::HarrisMichael),
            "sequential" => Ok(ImplKind::Sequential),
            _ => Err(SetError::UnknownImpl(s.to_owned())),
        }
    }
}

/// The three operations of the set type.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpKind {
    Insert,
    Remove,
    Contains,
}

impl OpKind {
    pub fn name(self) -> &'static str {
        match self {
            OpKind::Insert => "insert",
            OpKind::Remove => "remove",
            OpKind::Contains => "contains",
        }
    }

    pub fn apply<S: SetOps + ?Sized>(self, set: &S, key: i64) -> bool {
        match self {
            OpKind::Insert => set.insert(key),
            OpKind::Remove => set.remove(key),
            OpKind::Contains => set.contains(key),
        }
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OpKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "insert" => Ok(OpKind::Insert),
            "remove" => Ok(OpKind::Remove),
            "contains" => Ok(OpKind::Contains),
            _ => Err(format!("unknown operation `{s}`")),
        }
    }
}
