//! Name-keyed constructors for runtime-selected strategies.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{CoreError, Result};

type Ctor<T, C> = Box<dyn Fn(&C) -> Result<Box<T>> + Send + Sync>;

/// Maps a strategy name to a constructor taking a build context `C`.
pub struct Registry<T: ?Sized, C> {
    what: &'static str,
    entries: BTreeMap<String, Ctor<T, C>>,
}

impl<T: ?Sized, C> Registry<T, C> {
    pub fn new(what: &'static str) -> Self {
        Self {
            what,
            entries: BTreeMap::new(),
        }
    }

    /// Later registrations under the same name replace earlier ones.
    pub fn register<F>(&mut self, name: &str, ctor: F) -> &mut Self
    where
        F: Fn(&C) -> Result<Box<T>> + Send + Sync + 'static,
    {
        self.entries.insert(name.to_string(), Box::new(ctor));
        self
    }

    pub fn build(&self, name: &str, ctx: &C) -> Result<Box<T>> {
        match self.entries.get(name) {
            Some(ctor) => ctor(ctx),
            None => Err(CoreError::validation(format!(
                "unknown {} `{name}`; registered: {}",
                self.what,
                self.names().join(", ")
            ))),
        }
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }
}

impl<T: ?Sized, C> fmt::Debug for Registry<T, C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Registry")
            .field("what", &self.what)
            .field("names", &self.names())
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    trait Greeter {
        fn hi(&self) -> String;
    }

    struct Plain(String);

    impl Greeter for Plain {
        fn hi(&self) -> String {
            format!("hi {}", self.0)
        }
    }

    #[test]
    fn build_by_name() {
        let mut r: Registry<dyn Greeter, String> = Registry::new("greeter");
        r.register("plain", |who: &String| Ok(Box::new(Plain(who.clone()))));
        assert_eq!(r.build("plain", &"bob".to_string()).unwrap().hi(), "hi bob");
        let err = r.build("fancy", &String::new()).err().unwrap().to_string();
        assert!(err.contains("unknown greeter `fancy`"));
        assert!(err.contains("plain"));
    }
}
