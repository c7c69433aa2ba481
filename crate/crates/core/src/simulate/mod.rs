//! Seeded synthetic scenes and reference oracles.

mod oracle;
mod scene;

pub use oracle::{oracle_auc, oracle_map, oracle_nms, OracleLocalization, MAX_BOXES_PER_IMAGE, MAX_IMAGES, MAX_NMS_BOXES, MAX_SCORES};
pub use scene::{ellipse_mask, generate_scene, perturb_to_detections, NoiseModel, Scene, SceneSpec};
