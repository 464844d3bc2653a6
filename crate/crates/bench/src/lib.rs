//! Shared inputs for the criterion benches.

use ctaug_core::compositor::{HealthySample, HealthySource, LesionSample};
use ctaug_core::synthetic::{self, LESION_CLASS};
use ctaug_core::{derive_stream, Mask, Raster, Sample};

/// A synthetic CT-like slice with two lesions.
pub fn slice(size: usize, seed: u64) -> Sample {
    let (image, mask) = synthetic::slice(size, size, 2, &mut derive_stream(seed, "bench", 0, 0));
    Sample::new(image, mask, "bench", format!("b{seed}")).expect("matching dims")
}

/// A healthy/lesion pair whose lung areas are close enough to compose.
pub fn composite_pair(size: usize) -> (HealthySample, LesionSample) {
    let s = slice(size, 1);
    let (w, h) = s.mask.dims();
    let lung = Mask::new(w, h, s.mask.labels().iter().map(|&v| u8::from(v != 0)).collect()).expect("dims");
    let lesion = Mask::new(w, h, s.mask.labels().iter().map(|&v| u8::from(v == LESION_CLASS)).collect()).expect("dims");
    (
        HealthySample::new("h", s.image.clone(), lung.clone(), HealthySource::Other).expect("lung present"),
        LesionSample::new("l", s.image, lesion, lung).expect("dims"),
    )
}
