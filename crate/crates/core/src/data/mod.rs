//! Masks, image files, datasets and quality metrics.

pub mod dataset;
pub mod io;
pub mod mask;
pub mod metrics;

pub use dataset::{stack, synthetic_image, Dataset, Sample};
pub use io::{load_image, load_mask, save_image, save_mask};
pub use mask::{generate_mask, Bucket, MaskKind, MaskSpec, MaskedImage};
pub use metrics::{masked_l1, mean_abs, psnr, ssim};
