//! Name → constructor tables for the pluggable strategies.
//!
//! Every variant of a micro-architectural mechanism (chaining scheme, VRF
//! layout, address map, write priority, reduction, kernel) implements a common
//! trait and is registered here under a stable name. The engine never names a
//! concrete type; it asks the registry for whatever the configuration selects.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no {family} named `{name}` (known: {known})")]
pub struct UnknownStrategy {
    pub family: &'static str,
    pub name: String,
    pub known: String,
}

/// A constructor for a boxed strategy object.
pub type Constructor<T> = fn() -> Box<T>;

pub struct Registry<T: ?Sized> {
    family: &'static str,
    entries: Vec<(&'static str, Constructor<T>)>,
}

impl<T: ?Sized> Registry<T> {
    pub fn new(family: &'static str) -> Self {
        Registry {
            family,
            entries: Vec::new(),
        }
    }

    /// Register `ctor` under `name`. Later registrations shadow earlier ones.
    pub fn register(&mut self, name: &'static str, ctor: Constructor<T>) -> &mut Self {
        self.entries.retain(|(n, _)| *n != name);
        self.entries.push((name, ctor));
        self
    }

    pub fn with(mut self, name: &'static str, ctor: Constructor<T>) -> Self {
        self.register(name, ctor);
        self
    }

    pub fn create(&self, name: &str) -> Result<Box<T>, UnknownStrategy> {
        self.entries
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, ctor)| ctor())
            .ok_or_else(|| UnknownStrategy {
                family: self.family,
                name: name.to_string(),
                known: self.names().join(", "),
            })
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.iter().any(|(n, _)| *n == name)
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|(n, _)| *n).collect()
    }

    pub fn family(&self) -> &'static str {
        self.family
    }
}

impl<T: ?Sized> fmt::Debug for Registry<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Registry")
            .field("family", &self.family)
            .field("names", &self.names())
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    trait Shape {
        fn sides(&self) -> u32;
    }
    struct Tri;
    struct Quad;
    impl Shape for Tri {
        fn sides(&self) -> u32 {
            3
        }
    }
    impl Shape for Quad {
        fn sides(&self) -> u32 {
            4
        }
    }

    #[test]
    fn lookup_by_name() {
        let reg: Registry<dyn Shape> = Registry::<dyn Shape>::new("shape")
            .with("tri", || Box::new(Tri))
            .with("quad", || Box::new(Quad));
        assert_eq!(reg.create("quad").unwrap().sides(), 4);
        assert_eq!(reg.names(), vec!["tri", "quad"]);
        let err = reg.create("hex").err().unwrap();
        assert_eq!(err.known, "tri, quad");
    }

    #[test]
    fn reregistration_replaces() {
        let mut reg: Registry<dyn Shape> = Registry::new("shape");
        reg.register("x", || Box::new(Tri));
        reg.register("x", || Box::new(Quad));
        assert_eq!(reg.names().len(), 1);
        assert_eq!(reg.create("x").unwrap().sides(), 4);
    }
}
