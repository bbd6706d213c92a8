//! Built-in handcrafted feature extractors, k-means pseudo-labels and the
//! extractor selection type.

mod extract;
mod kmeans;

pub use extract::{
    extract_global64, extract_spatial48, global64_row, sobel_magnitude, spatial_row, GLOBAL64_DIM,
    GLOBAL64_TAG,
};
pub use kmeans::{fit_kmeans, pseudo_class_probs, KMeansModel};

use alloc::collections::BTreeMap;
use alloc::string::String;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum ExtractorKind {
    Global64,
    Spatial48,
    /// Embeddings produced outside this crate and loaded from a file.
    External,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ExtractorSpec {
    pub kind: ExtractorKind,
    #[cfg_attr(feature = "serde", serde(default))]
    pub params: BTreeMap<String, String>,
}

impl ExtractorSpec {
    pub fn global64() -> Self {
        Self {
            kind: ExtractorKind::Global64,
            params: BTreeMap::new(),
        }
    }

    pub fn spatial(grid: usize) -> Self {
        let mut params = BTreeMap::new();
        params.insert("grid".into(), alloc::format!("{grid}"));
        Self {
            kind: ExtractorKind::Spatial48,
            params,
        }
    }

    /// Spatial grid size, default 4.
    pub fn grid(&self) -> Result<usize> {
        let g = match self.params.get("grid") {
            Some(v) => v
                .parse::<usize>()
                .map_err(|_| Error::param("grid", alloc::format!("`{v}` is not an integer")))?,
            None => 4,
        };
        if g < 2 {
            return Err(Error::param("grid", "must be at least 2"));
        }
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            ExtractorKind::Spatial48 => self.grid().map(|_| ()),
            ExtractorKind::External if !self.params.contains_key("path") => {
                Err(Error::param("path", "external extractor needs a file path"))
            }
            _ => Ok(()),
        }
    }
}
