//! Content-addressed trajectory store: `<dir>/<first 2 hex>/<id>.traj`.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use diffscope::pipeline::{deserialize_trajectory, serialize_trajectory};
use diffscope::{generate, Engine, GenerationConfig, Trajectory};
use tokio::sync::OnceCell;

pub const CACHE_DIR_ENV: &str = "DIFFSCOPE_CACHE_DIR";
pub const DEFAULT_CACHE_DIR: &str = "cache";

/// Why a lookup or computation failed.
#[derive(Debug, Clone)]
pub enum CacheError {
    /// The generation request itself is invalid (bad prompt, out-of-range scale).
    Rejected(String),
    /// Engine, I/O or a corrupt cache file.
    Internal(String),
}

impl std::fmt::Display for CacheError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CacheError::Rejected(m) | CacheError::Internal(m) => f.write_str(m),
        }
    }
}

impl From<diffscope::Error> for CacheError {
    fn from(e: diffscope::Error) -> Self {
        if e.is_validation() {
            CacheError::Rejected(e.to_string())
        } else {
            CacheError::Internal(e.to_string())
        }
    }
}

impl From<std::io::Error> for CacheError {
    fn from(e: std::io::Error) -> Self {
        CacheError::Internal(e.to_string())
    }
}

type Slot = Arc<OnceCell<Result<(), CacheError>>>;

/// On-disk store plus an in-flight table so each id is computed at most once
/// at a time.
#[derive(Debug)]
pub struct TrajectoryCache {
    dir: PathBuf,
    inflight: Mutex<HashMap<String, Slot>>,
}

/// Resolves the cache directory: explicit flag, then environment, then `./cache`.
pub fn resolve_cache_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(CACHE_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_CACHE_DIR))
}

/// Trajectory ids are lowercase hex SHA-256 digests.
pub fn is_valid_id(id: &str) -> bool {
    id.len() == 64 && id.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

impl TrajectoryCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: dir.into(),
            inflight: Mutex::new(HashMap::new()),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// File location for `id`, or `None` if `id` is not a digest.
    pub fn path(&self, id: &str) -> Option<PathBuf> {
        is_valid_id(id).then(|| self.dir.join(&id[..2]).join(format!("{id}.traj")))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.path(id).is_some_and(|p| p.is_file())
    }

    /// Raw file bytes, `Ok(None)` if absent.
    pub fn read_raw(&self, id: &str) -> Result<Option<Vec<u8>>, CacheError> {
        let Some(path) = self.path(id) else {
            return Ok(None);
        };
        match std::fs::read(&path) {
            Ok(b) => Ok(Some(b)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    pub fn load(&self, id: &str) -> Result<Option<Trajectory>, CacheError> {
        let Some(bytes) = self.read_raw(id)? else {
            return Ok(None);
        };
        let t = deserialize_trajectory(&bytes)
            .map_err(|e| CacheError::Internal(format!("cache entry {id}: {e}")))?;
        if t.id != id {
            return Err(CacheError::Internal(format!("cache entry {id} holds trajectory {}", t.id)));
        }
        Ok(Some(t))
    }

    pub fn store(&self, t: &Trajectory) -> Result<PathBuf, CacheError> {
        let path = self
            .path(&t.id)
            .ok_or_else(|| CacheError::Internal(format!("bad trajectory id {:?}", t.id)))?;
        write_atomic(&path, &serialize_trajectory(t))?;
        Ok(path)
    }

    /// Returns the id for `cfg` and whether it was already on disk. Concurrent
    /// calls for the same id share one computation.
    pub async fn ensure(
        &self,
        engine: &Arc<Engine>,
        cfg: &GenerationConfig,
    ) -> Result<(String, bool), CacheError> {
        cfg.validate()?;
        let id = cfg.trajectory_id(engine.version());
        if self.contains(&id) {
            return Ok((id, true));
        }
        let slot = self
            .inflight
            .lock()
            .expect("in-flight table lock")
            .entry(id.clone())
            .or_default()
            .clone();
        let owner = AtomicBool::new(false);
        let generated = AtomicBool::new(false);
        let result = slot
            .get_or_init(|| async {
                owner.store(true, Ordering::Relaxed);
                // A previous holder of this id may have finished in between.
                if self.contains(&id) {
                    return Ok(());
                }
                generated.store(true, Ordering::Relaxed);
                self.compute(engine.clone(), cfg.clone()).await
            })
            .await
            .clone();
        if owner.load(Ordering::Relaxed) {
            self.inflight.lock().expect("in-flight table lock").remove(&id);
        }
        result.map(|()| (id, !generated.load(Ordering::Relaxed)))
    }

    async fn compute(&self, engine: Arc<Engine>, cfg: GenerationConfig) -> Result<(), CacheError> {
        let dir = self.dir.clone();
        tokio::task::spawn_blocking(move || {
            let t = generate(&engine, &cfg)?;
            TrajectoryCache::new(dir).store(&t)?;
            Ok(())
        })
        .await
        .map_err(|e| CacheError::Internal(format!("generation task failed: {e}")))?
    }
}
