//! Hierarchical point-language alignment for 3D visual grounding.
//!
//! The crate covers the forward path from a raw point cloud and a referring
//! expression to a chosen bounding box:
//!
//! - [`sampling`]: D-FPS, F-FPS, fusion and concentration sampling of key
//!   points, and proposal selection.
//! - [`language`]: tokenization, embeddings, the GRU encoder and prompt
//!   transforms (word masking, intra- and inter-sentence ensembles).
//! - [`attention`]: masked multi-head attention and the PLACM block.
//! - [`smgm`]: the `r^3` space partition and the global/local PLACM branches.
//! - [`head`]: matching scores, losses, Acc@IoU and identification adaptation.
//! - [`pipeline`]: the composed forward pass and evaluation.
//!
//! ```
//! use ham_core::scene::{iou3d, Box3};
//!
//! let a = Box3::new([0.0, 0.0, 0.0], [2.0, 2.0, 2.0]).unwrap();
//! let b = Box3::new([1.0, 0.0, 0.0], [2.0, 2.0, 2.0]).unwrap();
//! assert!((iou3d(&a, &b) - 1.0 / 3.0).abs() < 1e-12);
//! ```

// `!(x > 0.0)` deliberately rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attention;
pub mod container;
pub mod error;
pub mod head;
pub mod language;
pub mod oracle;
pub mod pipeline;
pub mod rng;
pub mod sampling;
pub mod scene;
pub mod smgm;
pub mod tensor;

pub use error::{Error, Result};
pub use rng::Rng;
pub use tensor::Mat;
