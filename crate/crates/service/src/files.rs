//! Reading palette files and evaluation inputs from disk.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use gencolor_core::evaluation::{Condition, MethodPrimaries};
use gencolor_core::{ConceptSpec, PaletteComposition};

/// Anything with ranked palettes: a palette set, a gallery entry, or one
/// bare palette.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum PaletteFile {
    Set {
        spec: ConceptSpec,
        palettes: Vec<PaletteComposition>,
    },
    Single(PaletteComposition),
}

#[derive(Debug, Clone)]
pub struct LoadedPalettes {
    pub spec: Option<ConceptSpec>,
    pub palettes: Vec<PaletteComposition>,
}

pub fn load_palettes(path: &Path) -> Result<LoadedPalettes> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let file: PaletteFile = serde_json::from_slice(&bytes)
        .with_context(|| format!("{} is not a palette file", path.display()))?;
    Ok(match file {
        PaletteFile::Set { spec, palettes } => LoadedPalettes {
            spec: Some(spec),
            palettes,
        },
        PaletteFile::Single(p) => LoadedPalettes {
            spec: None,
            palettes: vec![p],
        },
    })
}

/// Reads `<dir>/<condition>/*.json`. Each file contributes its top-ranked
/// primary under the concept label of its spec (context + concept), or
/// the file stem for a bare palette.
pub fn load_method_primaries(dir: &Path, conditions: &[Condition]) -> Result<MethodPrimaries> {
    let mut out = MethodPrimaries::default();
    for &condition in conditions {
        let sub = dir.join(condition.name());
        if !sub.is_dir() {
            log::warn!("no palettes for condition {condition} ({} missing)", sub.display());
            continue;
        }
        let mut paths: Vec<_> = fs::read_dir(&sub)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "json"))
            .collect();
        paths.sort();
        for path in paths {
            let loaded = load_palettes(&path)?;
            let Some(top) = loaded.palettes.iter().min_by_key(|p| p.group_rank) else {
                log::warn!("{} has no palettes", path.display());
                continue;
            };
            let concept = match &loaded.spec {
                Some(spec) => spec.label(),
                None => path
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .unwrap_or_default()
                    .to_owned(),
            };
            out.insert(condition, concept, top.primary);
        }
    }
    if out.by_condition.is_empty() {
        bail!("no palette files found under {}", dir.display());
    }
    Ok(out)
}

pub fn parse_conditions(list: &str) -> Result<Vec<Condition>> {
    let mut out = Vec::new();
    for part in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let c: Condition = part
            .parse()
            .map_err(|e| anyhow::anyhow!("bad condition {part:?}: {e}"))?;
        if !out.contains(&c) {
            out.push(c);
        }
    }
    if out.is_empty() {
        bail!("no conditions given");
    }
    Ok(out)
}
