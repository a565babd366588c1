//! The user-taught model: joint classification and segmentation training,
//! class activation maps and saliency blending.

mod cam;
mod loss;
mod model;
mod train;

pub use cam::{blend_saliency, cam_from_features};
pub use loss::{argmax, joint_loss, joint_loss_grad, joint_loss_tensor, softmax, JointLoss, SegTerm};
pub use model::{
    validate_classes, ClassDef, PredictionResult, UserModel, UserModelMetrics, UserTrainConfig, CLASSES_FILE,
    CONFIG_FILE, DEFAULT_LAMBDA_BLEND, DEFAULT_LAMBDA_LOSS, METRICS_FILE, WEIGHTS_FILE,
};
pub use train::{
    evaluate_user_model, train_user_model, train_user_model_with_classes, UserEval, UserTrainer,
};
