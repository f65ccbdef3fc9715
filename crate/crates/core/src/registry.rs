//! Name-keyed registries of interchangeable strategies.
//!
//! Scoring kernels, poolers and metrics are each selected at runtime by a
//! selector string of the form `name` or `name@arg` (e.g. `blocked`,
//! `split@16`, `ndcg@5`).

use crate::error::{Error, Result};

pub type Factory<T> = fn(Option<&str>) -> Result<Box<T>>;

struct Entry<T: ?Sized> {
    names: &'static [&'static str],
    summary: &'static str,
    factory: Factory<T>,
}

pub struct Registry<T: ?Sized> {
    kind: &'static str,
    entries: Vec<Entry<T>>,
}

impl<T: ?Sized> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            entries: Vec::new(),
        }
    }

    /// Register a factory under a primary name and optional aliases.
    pub fn register(
        &mut self,
        names: &'static [&'static str],
        summary: &'static str,
        factory: Factory<T>,
    ) -> &mut Self {
        assert!(!names.is_empty());
        for name in names {
            assert!(
                self.lookup(name).is_none(),
                "{} '{name}' registered twice",
                self.kind
            );
        }
        self.entries.push(Entry {
            names,
            summary,
            factory,
        });
        self
    }

    fn lookup(&self, name: &str) -> Option<&Entry<T>> {
        self.entries
            .iter()
            .find(|e| e.names.iter().any(|n| n.eq_ignore_ascii_case(name)))
    }

    /// Instantiate the strategy named by `selector`.
    pub fn create(&self, selector: &str) -> Result<Box<T>> {
        let (name, arg) = match selector.split_once('@') {
            Some((n, a)) => (n.trim(), Some(a.trim())),
            None => (selector.trim(), None),
        };
        let entry = self.lookup(name).ok_or_else(|| Error::UnknownStrategy {
            kind: self.kind,
            name: selector.to_string(),
            available: self.names().join(", "),
        })?;
        (entry.factory)(arg)
    }

    /// Primary names in registration order.
    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|e| e.names[0]).collect()
    }

    pub fn describe(&self) -> Vec<(&'static str, &'static str)> {
        self.entries.iter().map(|e| (e.names[0], e.summary)).collect()
    }
}

/// Parse the `@arg` part of a selector as a positive count.
pub(crate) fn count_arg(kind: &str, arg: Option<&str>, default: Option<usize>) -> Result<usize> {
    match arg {
        None => default.ok_or_else(|| Error::Config(format!("{kind} requires an @count argument"))),
        Some(a) => match a.parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(Error::Config(format!("{kind}: '{a}' is not a positive count"))),
        },
    }
}
