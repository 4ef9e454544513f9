use std::path::PathBuf;

use rayon::prelude::*;

use crate::error::Result;
use crate::imageio::{load_gray, resize, DatasetIndex, GrayImage};

/// Decoded dataset: `images[c]` holds every image of class `classes[c]`,
/// already resized to the working side.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub classes: Vec<String>,
    pub images: Vec<Vec<GrayImage>>,
    /// Source files, parallel to `images`; empty for in-memory datasets.
    pub paths: Vec<Vec<PathBuf>>,
}

impl Dataset {
    pub fn from_images(classes: Vec<String>, images: Vec<Vec<GrayImage>>) -> Self {
        let paths = images.iter().map(|_| Vec::new()).collect();
        Self {
            classes,
            images,
            paths,
        }
    }

    pub fn num_images(&self) -> usize {
        self.images.iter().map(Vec::len).sum()
    }

    /// Every image with its class index, class-major.
    pub fn flatten(&self) -> (Vec<GrayImage>, Vec<usize>) {
        let mut images = Vec::with_capacity(self.num_images());
        let mut labels = Vec::with_capacity(self.num_images());
        for (c, imgs) in self.images.iter().enumerate() {
            images.extend(imgs.iter().cloned());
            labels.extend(std::iter::repeat_n(c, imgs.len()));
        }
        (images, labels)
    }
}

/// Decodes every file of `index` and resizes it to `side x side`.
pub fn load_dataset(index: &DatasetIndex, side: usize) -> Result<Dataset> {
    let images = index
        .samples
        .iter()
        .map(|files| {
            files
                .par_iter()
                .map(|p| load_gray(p).map(|img| resize(&img, side)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        classes: index.classes.clone(),
        images,
        paths: index.samples.clone(),
    })
}
