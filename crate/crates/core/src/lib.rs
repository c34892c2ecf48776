pub mod error;
pub mod gradcheck;
pub mod kitti;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod projection;
pub mod tensor;
pub mod tensorfile;

pub use error::{Error, Result};
pub use losses::{LossConfig, LossOutput};
pub use metrics::ConfusionMatrix;
pub use model::{model_forward, ModelConfig, ModelOutput, ModelWeights};
pub use projection::{knn_refine, project, unproject, KnnConfig, LabelImage, PointCloud, ProjectionConfig, RangeImage};
pub use tensor::{ConvSpec, Shape4, Tensor4};
pub use tensorfile::{NamedTensor, TensorFile};
