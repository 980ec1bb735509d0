//! Shared server state: datasets with their active schema, the iceberg
//! cache and stored permalinks.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use tagcube::{Aggregator, FactTable, IcebergCuboid, Schema};

/// An uploaded table and its current schema.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub id: String,
    pub table: Arc<FactTable<f64>>,
    /// Active schema and its version; versions start at 1 and increase with
    /// every successful replacement.
    pub schema: Option<(u64, Arc<Schema>)>,
}

/// Datasets by id behind a reader/writer lock.
#[derive(Debug, Default)]
pub struct Registry {
    datasets: RwLock<BTreeMap<String, Dataset>>,
    next_id: AtomicU64,
}

impl Registry {
    /// Stores a table under a fresh id. Identical uploads get distinct ids.
    pub fn insert(&self, table: FactTable<f64>) -> String {
        let id = format!("ds-{}", self.next_id.fetch_add(1, Ordering::Relaxed) + 1);
        let ds = Dataset { id: id.clone(), table: Arc::new(table), schema: None };
        self.datasets.write().insert(id.clone(), ds);
        id
    }

    pub fn get(&self, id: &str) -> Option<Dataset> {
        self.datasets.read().get(id).cloned()
    }

    pub fn list(&self) -> Vec<Dataset> {
        self.datasets.read().values().cloned().collect()
    }

    /// Replaces the active schema and returns its version, or `None` when the
    /// dataset is unknown.
    pub fn set_schema(&self, id: &str, schema: Schema) -> Option<u64> {
        let mut guard = self.datasets.write();
        let ds = guard.get_mut(id)?;
        let version = ds.schema.as_ref().map_or(1, |(v, _)| v + 1);
        ds.schema = Some((version, Arc::new(schema)));
        Some(version)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IcebergKey {
    pub dataset: String,
    pub schema_version: u64,
    pub dims: Vec<String>,
    pub aggregator: Aggregator,
    pub limit: usize,
}

#[derive(Debug)]
enum Slot {
    Building,
    Ready(Arc<IcebergCuboid<f64>>),
}

/// Outcome of asking the cache for an iceberg.
#[derive(Debug)]
pub enum Lookup {
    Ready(Arc<IcebergCuboid<f64>>),
    /// Another request is materializing this iceberg.
    Busy,
    /// The caller must build it and then call [`BuildTicket::finish`].
    Build(BuildTicket),
}

/// Exclusive right to materialize one key. Dropping it without finishing
/// frees the key for another attempt.
#[derive(Debug)]
pub struct BuildTicket {
    key: Option<IcebergKey>,
    cache: Arc<IcebergCache>,
}

impl BuildTicket {
    pub fn finish(mut self, iceberg: IcebergCuboid<f64>) -> Arc<IcebergCuboid<f64>> {
        let key = self.key.take().expect("unfinished ticket");
        let ice = Arc::new(iceberg);
        self.cache.slots.lock().insert(key, Slot::Ready(Arc::clone(&ice)));
        ice
    }
}

impl Drop for BuildTicket {
    fn drop(&mut self) {
        if let Some(key) = self.key.take() {
            self.cache.slots.lock().remove(&key);
        }
    }
}

/// Single-flight cache: the first request for a key builds it, concurrent
/// requests for the same key are told to retry.
#[derive(Debug, Default)]
pub struct IcebergCache {
    slots: Mutex<HashMap<IcebergKey, Slot>>,
}

impl IcebergCache {
    pub fn lookup(self: &Arc<Self>, key: IcebergKey) -> Lookup {
        let mut slots = self.slots.lock();
        match slots.get(&key) {
            Some(Slot::Ready(ice)) => Lookup::Ready(Arc::clone(ice)),
            Some(Slot::Building) => Lookup::Busy,
            None => {
                slots.insert(key.clone(), Slot::Building);
                Lookup::Build(BuildTicket { key: Some(key), cache: Arc::clone(self) })
            }
        }
    }

    pub fn len(&self) -> usize {
        self.slots.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Rendered responses by permalink id. The first response stored under an
/// id is kept forever so replays are byte-identical.
#[derive(Debug, Default)]
pub struct CloudStore {
    clouds: RwLock<HashMap<String, Arc<Vec<u8>>>>,
}

impl CloudStore {
    pub fn insert_if_absent(&self, id: &str, json: Vec<u8>) {
        self.clouds.write().entry(id.to_owned()).or_insert_with(|| Arc::new(json));
    }

    pub fn get(&self, id: &str) -> Option<Arc<Vec<u8>>> {
        self.clouds.read().get(id).cloned()
    }
}
