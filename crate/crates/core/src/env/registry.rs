use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock, RwLock};

use super::environment::Environment;
use super::types::EnvSpec;
use super::EnvError;

/// Builds an environment from a (possibly customised) spec.
pub type EnvFactory = Arc<dyn Fn(EnvSpec) -> Result<Environment, EnvError> + Send + Sync>;

#[derive(Clone)]
struct Entry {
    spec: EnvSpec,
    factory: EnvFactory,
}

/// Maps environment ids to their default spec and factory.
#[derive(Clone, Default)]
pub struct Registry {
    entries: BTreeMap<String, Entry>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    /// A registry pre-populated with the planar simulator environments.
    pub fn with_builtins() -> Self {
        let mut reg = Self::new();
        crate::sim2d::register_builtins(&mut reg).expect("builtin env ids are unique");
        reg
    }

    pub fn register(&mut self, spec: EnvSpec, factory: EnvFactory) -> Result<(), EnvError> {
        spec.validate()?;
        if self.entries.contains_key(&spec.env_id) {
            return Err(EnvError::DuplicateId(spec.env_id));
        }
        self.entries.insert(spec.env_id.clone(), Entry { spec, factory });
        Ok(())
    }

    pub fn make(&self, env_id: &str) -> Result<Environment, EnvError> {
        let entry = self.entries.get(env_id).ok_or_else(|| EnvError::UnknownId(env_id.to_string()))?;
        (entry.factory)(entry.spec.clone())
    }

    /// Builds `spec.env_id` with a caller-provided spec, e.g. one restored from
    /// a dataset or model file.
    pub fn make_with_spec(&self, spec: EnvSpec) -> Result<Environment, EnvError> {
        let entry = self.entries.get(&spec.env_id).ok_or_else(|| EnvError::UnknownId(spec.env_id.clone()))?;
        spec.validate()?;
        (entry.factory)(spec)
    }

    pub fn spec(&self, env_id: &str) -> Option<&EnvSpec> {
        self.entries.get(env_id).map(|e| &e.spec)
    }

    pub fn ids(&self) -> Vec<String> {
        self.entries.keys().cloned().collect()
    }
}

fn global() -> &'static RwLock<Registry> {
    static REGISTRY: OnceLock<RwLock<Registry>> = OnceLock::new();
    REGISTRY.get_or_init(|| RwLock::new(Registry::with_builtins()))
}

/// Adds an environment to the process-wide registry.
pub fn register_env(spec: EnvSpec, factory: EnvFactory) -> Result<(), EnvError> {
    global().write().expect("registry lock poisoned").register(spec, factory)
}

pub fn make_env(env_id: &str) -> Result<Environment, EnvError> {
    global().read().expect("registry lock poisoned").make(env_id)
}

pub fn make_env_with_spec(spec: EnvSpec) -> Result<Environment, EnvError> {
    global().read().expect("registry lock poisoned").make_with_spec(spec)
}

pub fn env_spec(env_id: &str) -> Option<EnvSpec> {
    global().read().expect("registry lock poisoned").spec(env_id).cloned()
}

pub fn registered_ids() -> Vec<String> {
    global().read().expect("registry lock poisoned").ids()
}
