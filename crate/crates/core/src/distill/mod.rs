//! Feature distillation: reference-map preparation, the decode head, and the
//! joint color/feature training loop.

mod adam;
mod densify;
mod head;
mod loss;
mod map;
mod train;

pub use adam::Adam;
pub use densify::{densify_and_prune, DensifyConfig, GradStats};
pub use head::{DecodeHead, HeadCache};
pub use loss::{color_loss, cosine_distance, l1, psnr, ssim};
pub use map::{enhance, masked_average_pool, upsample_bilinear, EnhancedFeatureMap};
pub use train::{
    clip_loss_on_views, prepare_targets, train, train_with_targets, write_loss_csv, IterRecord, LearningRates, TrainConfig,
    TrainOutput, ViewTargets,
};
