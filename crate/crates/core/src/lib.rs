//! Photoacoustic computed tomography reconstruction from channel-subsampled
//! ring-array data.
//!
//! Three reconstruction routes share one discrete forward model:
//!
//! * [`ubp::ubp`]: universal back-projection, the direct inversion used as a
//!   shape prior,
//! * [`tv::recon_tv`]: proximal-gradient total-variation compressed sensing,
//! * [`dip::dip_reconstruct`]: an untrained convolutional decoder fitted to
//!   the measurements, with optional TV and shape-prior penalties.

pub mod decoder;
pub mod dip;
pub mod error;
pub mod forward;
pub mod geometry;
pub mod image;
pub mod io;
pub mod mask;
pub mod metrics;
pub mod noise;
pub mod phantom;
pub mod tv;
pub mod ubp;

pub use error::{PactError, Result};
pub use forward::{ForwardGeometry, PaOperator};
pub use geometry::{make_grid, make_sensor_array, Grid, Point, SensorArray};
pub use image::{Image, Normalization, Sinogram};
pub use mask::{apply_mask, embed_mask, make_mask, ChannelMask, MaskScheme};
