//! Grayscale images, ordered image sets and dataset partitioning.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use rand::seq::SliceRandom;

use crate::stats::{apportion, check_fractions};
use crate::{Error, Result, RngStream};

/// A single 2-D grayscale slice with intensities normalised to `[0, 1]`.
///
/// Pixels are stored row-major. The optional mask marks a region of
/// interest (a lesion for the phantom data) and has the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageVolume {
    id: String,
    width: usize,
    height: usize,
    pixels: Vec<f64>,
    mask: Option<Vec<bool>>,
    class_label: Option<u32>,
    source_label: Option<u32>,
}

impl ImageVolume {
    pub fn new(id: impl Into<String>, width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        let id = id.into();
        if width == 0 || height == 0 {
            return Err(Error::image(&id, "width and height must be positive"));
        }
        if pixels.len() != width * height {
            return Err(Error::image(
                &id,
                alloc::format!("expected {} pixels, got {}", width * height, pixels.len()),
            ));
        }
        if let Some(bad) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::image(&id, alloc::format!("intensity {bad} outside [0, 1]")));
        }
        Ok(Self {
            id,
            width,
            height,
            pixels,
            mask: None,
            class_label: None,
            source_label: None,
        })
    }

    pub fn with_mask(mut self, mask: Option<Vec<bool>>) -> Result<Self> {
        if let Some(m) = &mask {
            if m.len() != self.pixels.len() {
                return Err(Error::image(&self.id, "mask shape differs from image shape"));
            }
        }
        self.mask = mask;
        Ok(self)
    }

    pub fn with_class_label(mut self, label: Option<u32>) -> Self {
        self.class_label = label;
        self
    }

    pub fn with_source_label(mut self, label: Option<u32>) -> Self {
        self.source_label = label;
        self
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    /// Same metadata, new intensities. Values must stay inside `[0, 1]`.
    pub fn with_pixels(&self, pixels: Vec<f64>) -> Result<Self> {
        let fresh = ImageVolume::new(self.id.clone(), self.width, self.height, pixels)?;
        Ok(Self {
            pixels: fresh.pixels,
            ..self.clone()
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn pixel(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.mask.as_deref()
    }

    pub fn class_label(&self) -> Option<u32> {
        self.class_label
    }

    pub fn source_label(&self) -> Option<u32> {
        self.source_label
    }
}

/// Ordered collection of images with unique ids.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSet {
    name: String,
    images: Vec<ImageVolume>,
}

impl ImageSet {
    pub fn new(name: impl Into<String>, images: Vec<ImageVolume>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for img in &images {
            if !seen.insert(img.id()) {
                return Err(Error::image(img.id(), "duplicate id in image set"));
            }
        }
        Ok(Self {
            name: name.into(),
            images,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn images(&self) -> &[ImageVolume] {
        &self.images
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.images.iter().map(|i| i.id())
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn into_images(self) -> Vec<ImageVolume> {
        self.images
    }
}

/// Splits `set` into disjoint parts sized by `fractions`.
///
/// Sizes are `floor(f * n)` with the remainder given to the largest fraction.
/// Membership is a seeded shuffle; each part keeps the input order.
pub fn partition_dataset(set: &ImageSet, fractions: &[f64], rng: &RngStream) -> Result<Vec<ImageSet>> {
    if set.is_empty() {
        return Err(Error::Empty("image set"));
    }
    check_fractions("fractions", fractions)?;
    let sizes = apportion(fractions, set.len());
    let mut order: Vec<usize> = (0..set.len()).collect();
    order.shuffle(&mut rng.rng());

    let mut parts = Vec::with_capacity(sizes.len());
    let mut start = 0;
    for (k, size) in sizes.into_iter().enumerate() {
        let mut idx = order[start..start + size].to_vec();
        idx.sort_unstable();
        start += size;
        let images = idx.into_iter().map(|i| set.images[i].clone()).collect();
        parts.push(ImageSet::new(alloc::format!("{}/part{k}", set.name), images)?);
    }
    Ok(parts)
}

/// Min-max normalisation of a raw buffer in place. Constant buffers become zero.
pub(crate) fn normalize_buffer(values: &mut [f64]) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite pixel".to_string()));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    if !(range > 0.0) {
        values.iter_mut().for_each(|v| *v = 0.0);
        return Ok(());
    }
    for v in values.iter_mut() {
        *v = ((*v - lo) / range).clamp(0.0, 1.0);
    }
    Ok(())
}

/// Affinely maps the image's minimum to 0 and maximum to 1.
pub fn normalize_intensity(img: &ImageVolume) -> Result<ImageVolume> {
    let mut px = img.pixels.clone();
    normalize_buffer(&mut px)?;
    img.with_pixels(px)
}
