//! Data preparation and evaluation toolkit for nuclei instance segmentation
//! under domain adaptation.
//!
//! * [`mask`] and [`io`]: raster types, connected components, PNG formats
//! * [`binarize`]: Otsu thresholding
//! * [`inpaint`]: fast-marching inpainting
//! * [`pipeline`]: the nuclei inpainting mechanism and patch preprocessing
//! * [`metrics`]: AJI, pixel F1, object F1, entropy maps
//! * [`schedule`]: task re-weighting, adversarial ramp, learning rate
//! * [`netspec`]: discriminator shape tables
//! * [`batch`]: directory-level drivers used by the CLI

pub mod batch;
pub mod binarize;
pub mod error;
pub mod inpaint;
pub mod io;
pub mod mask;
pub mod metrics;
pub mod netspec;
pub mod pipeline;
pub mod provenance;
pub mod schedule;

pub use error::{Error, Result};
pub use provenance::version_and_provenance;
