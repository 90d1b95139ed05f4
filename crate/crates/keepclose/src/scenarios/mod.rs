//! Bundled case-study fixtures: plants, reference models, ideal
//! controllers, uncertainty classes, operating boxes, and frozen trained
//! controllers.

pub mod apollo;
pub mod arm;
