use std::collections::BTreeMap;

use serde::Deserialize;

use super::SearchSpace;
use crate::codec::CodebookKind;
use crate::error::{Error, Result};

/// A named search space, optionally with the MAE it is known to reach.
#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: String,
    pub space: SearchSpace,
    pub reference_mae: Option<f64>,
}

const SMALL: &[u32] = &[1225, 1600];
const WIDE6: &[u32] = &[1600, 2500, 3600, 6400, 8100, 10000];
const WIDE7: &[u32] = &[1600, 2500, 3600, 6400, 8100, 10000, 22500];
const WIDE8: &[u32] = &[1600, 2500, 3600, 6400, 8100, 10000, 22500, 40000];

// name, reference MAE, U candidates; every row uses l = [0.1], M = [1, 2, 3]
const TABLE: &[(&str, f64, &[u32])] = &[
    ("sam-b", 0.0019, &[1600]),
    ("sam-l", 0.0019, SMALL),
    ("sam-h", 0.0019, SMALL),
    ("sam-hq-tiny", 0.0015, WIDE8),
    ("sam-hq-b", 0.0020, SMALL),
    ("sam-hq-l", 0.0019, SMALL),
    ("sam-hq-h", 0.0019, SMALL),
    ("sam2-tiny", 0.0010, WIDE6),
    ("sam2-s", 0.0010, WIDE8),
    ("sam2-b", 0.0010, WIDE7),
    ("sam2-l", 0.0012, WIDE8),
    ("mobilesam", 0.0016, WIDE8),
    ("mobilesamv2", 0.0014, SMALL),
    ("edgesam", 0.0011, WIDE8),
    ("edgesam-rpn", 0.0011, WIDE8),
    ("efficientsam-ti", 0.0013, SMALL),
    ("efficientsam-s", 0.0013, SMALL),
    ("tinysam", 0.0012, WIDE8),
];

/// Presets shipped with the crate, one per reference model.
pub fn builtin_presets() -> Vec<Preset> {
    TABLE
        .iter()
        .map(|&(name, mae, u)| Preset {
            name: name.to_string(),
            space: SearchSpace {
                box_lens: vec![0.1],
                codebook_sizes: u.to_vec(),
                categories: vec![1, 2, 3],
                kind: CodebookKind::GridLattice,
            },
            reference_mae: Some(mae),
        })
        .collect()
}

/// Name-indexed preset collection.
#[derive(Debug, Clone, Default)]
pub struct PresetRegistry {
    presets: BTreeMap<String, Preset>,
}

impl PresetRegistry {
    pub fn builtin() -> Self {
        let mut r = Self::default();
        r.extend(builtin_presets());
        r
    }

    /// Adds or replaces presets by name.
    pub fn extend(&mut self, presets: impl IntoIterator<Item = Preset>) {
        for p in presets {
            self.presets.insert(p.name.clone(), p);
        }
    }

    pub fn names(&self) -> Vec<&str> {
        self.presets.keys().map(String::as_str).collect()
    }

    pub fn get(&self, name: &str) -> Result<&Preset> {
        self.presets.get(&name.to_ascii_lowercase()).ok_or_else(|| {
            Error::param(format!("unknown preset '{name}'; available: {}", self.names().join(", ")))
        })
    }
}

/// Looks a preset up in the built-in table.
pub fn find_preset(name: &str) -> Result<Preset> {
    PresetRegistry::builtin().get(name).cloned()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PresetEntry {
    l: Vec<f64>,
    #[serde(rename = "U")]
    u: Vec<u32>,
    #[serde(rename = "M")]
    m: Vec<u32>,
    #[serde(default)]
    mae: Option<f64>,
    #[serde(default)]
    codebook: Option<CodebookKind>,
}

/// Parses a preset file: one TOML table per preset name holding the
/// candidate lists `l`, `U`, `M` and optionally `mae` and `codebook`.
///
/// ```toml
/// [my-model]
/// l = [0.1]
/// U = [1225, 1600]
/// M = [1, 2, 3]
/// ```
pub fn parse_presets(text: &str) -> Result<Vec<Preset>> {
    let table: BTreeMap<String, PresetEntry> =
        toml::from_str(text).map_err(|e| Error::format(format!("preset file: {e}")))?;
    table
        .into_iter()
        .map(|(name, e)| {
            let space = SearchSpace {
                box_lens: e.l,
                codebook_sizes: e.u,
                categories: e.m,
                kind: e.codebook.unwrap_or_default(),
            };
            space
                .validate()
                .map_err(|err| Error::param(format!("preset '{name}': {err}")))?;
            Ok(Preset { name: name.to_ascii_lowercase(), space, reference_mae: e.mae })
        })
        .collect()
}
