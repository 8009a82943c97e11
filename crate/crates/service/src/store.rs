//! Gallery persistence: one JSON-lines append log plus an in-memory index.
//!
//! Each line is a full entry; a later line with the same id replaces the
//! earlier one. The log is replayed on open. Writes go through a single
//! mutex and are fsynced before the index is updated.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use gencolor_core::evaluation::Category;
use gencolor_core::{fingerprint, ConceptSpec, PaletteComposition};

pub const DATA_DIR_VAR: &str = "GENCOLOR_DATA_DIR";
pub const LOG_FILE: &str = "gallery.jsonl";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("storage failure: {0}")]
    StorageFailure(#[from] std::io::Error),
    #[error("corrupt gallery log at line {line}: {reason}")]
    Corrupt { line: usize, reason: String },
    #[error("an entry needs at least one palette")]
    NoPalettes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GalleryEntry {
    pub id: String,
    pub spec: ConceptSpec,
    pub palettes: Vec<PaletteComposition>,
    /// Style or evaluation condition, e.g. "G" or "flat".
    #[serde(default)]
    pub tag: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<Category>,
    /// Milliseconds since the Unix epoch.
    pub created_at: u64,
    pub spec_fingerprint: String,
    pub param_fingerprint: String,
    /// Paths or URLs of sample images.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub thumbnails: Vec<String>,
}

pub fn now_millis() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

impl GalleryEntry {
    /// Builds an entry whose id is derived from the two fingerprints, so
    /// the same spec run with the same parameters always maps to one id.
    pub fn new(
        spec: ConceptSpec,
        palettes: Vec<PaletteComposition>,
        tag: impl Into<String>,
        param_fingerprint: impl Into<String>,
    ) -> Self {
        let spec_fingerprint = fingerprint(&spec);
        let param_fingerprint = param_fingerprint.into();
        Self {
            id: entry_id(&spec_fingerprint, &param_fingerprint),
            spec,
            palettes,
            tag: tag.into(),
            category: None,
            created_at: now_millis(),
            spec_fingerprint,
            param_fingerprint,
            thumbnails: Vec::new(),
        }
    }

    fn key(&self) -> (String, String) {
        (self.spec_fingerprint.clone(), self.param_fingerprint.clone())
    }
}

pub fn entry_id(spec_fingerprint: &str, param_fingerprint: &str) -> String {
    fingerprint(&(spec_fingerprint, param_fingerprint))
}

#[derive(Default)]
struct Index {
    entries: BTreeMap<String, GalleryEntry>,
    by_key: HashMap<(String, String), String>,
}

impl Index {
    fn insert(&mut self, entry: GalleryEntry) {
        if let Some(old) = self.entries.get(&entry.id) {
            self.by_key.remove(&old.key());
        }
        self.by_key.insert(entry.key(), entry.id.clone());
        self.entries.insert(entry.id.clone(), entry);
    }
}

pub struct GalleryStore {
    path: PathBuf,
    index: RwLock<Index>,
    log: Mutex<File>,
}

impl std::fmt::Debug for GalleryStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GalleryStore").field("path", &self.path).finish()
    }
}

impl GalleryStore {
    /// Opens (creating if needed) the gallery under `dir`.
    pub fn open(dir: &Path) -> Result<Self, StoreError> {
        fs::create_dir_all(dir)?;
        let path = dir.join(LOG_FILE);
        let mut index = Index::default();
        if path.exists() {
            let text = fs::read_to_string(&path)?;
            let mut offset = 0usize;
            let mut lines = text.split_inclusive('\n').enumerate().peekable();
            while let Some((i, line)) = lines.next() {
                let is_last = lines.peek().is_none();
                if !line.trim().is_empty() {
                    match serde_json::from_str::<GalleryEntry>(line) {
                        Ok(entry) => index.insert(entry),
                        // A torn final write from a crash: drop it so the
                        // next append starts on a clean line.
                        Err(e) if is_last => {
                            log::warn!("dropping truncated last line of {}: {e}", path.display());
                            OpenOptions::new().write(true).open(&path)?.set_len(offset as u64)?;
                            break;
                        }
                        Err(e) => {
                            return Err(StoreError::Corrupt {
                                line: i + 1,
                                reason: e.to_string(),
                            })
                        }
                    }
                }
                offset += line.len();
            }
        }
        let log = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self {
            path,
            index: RwLock::new(index),
            log: Mutex::new(log),
        })
    }

    /// `$GENCOLOR_DATA_DIR`, or `./gencolor-data`.
    pub fn default_dir() -> PathBuf {
        std::env::var_os(DATA_DIR_VAR)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("gencolor-data"))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Writes `entry` durably. An entry with the same (spec, parameter)
    /// fingerprint pair is replaced and keeps its id.
    pub fn put(&self, mut entry: GalleryEntry) -> Result<String, StoreError> {
        if entry.palettes.is_empty() {
            return Err(StoreError::NoPalettes);
        }
        let mut log = self.log.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(existing) = self.index.read().unwrap().by_key.get(&entry.key()) {
            entry.id = existing.clone();
        }
        let mut line = serde_json::to_string(&entry).expect("entry serialises");
        line.push('\n');
        log.write_all(line.as_bytes())?;
        log.sync_data()?;
        let id = entry.id.clone();
        self.index.write().unwrap().insert(entry);
        Ok(id)
    }

    pub fn get(&self, id: &str) -> Option<GalleryEntry> {
        self.index.read().unwrap().entries.get(id).cloned()
    }

    /// All entries in id order.
    pub fn list(&self) -> Vec<GalleryEntry> {
        self.index.read().unwrap().entries.values().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.index.read().unwrap().entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Runs `f` over the entries without cloning them.
    pub fn with_entries<R>(&self, f: impl FnOnce(&mut dyn Iterator<Item = &GalleryEntry>) -> R) -> R {
        let index = self.index.read().unwrap();
        f(&mut index.entries.values())
    }
}
