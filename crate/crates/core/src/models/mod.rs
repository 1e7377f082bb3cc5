//! Recurrent sequence-to-sequence forecasters on grids and graphs.
//!
//! An encoder runs a stack of convolutional recurrent cells over the
//! history; a decoder with its own weights continues from the encoder
//! state and emits one frame per horizon step through a dense head.

mod cell;
mod config;
mod forecaster;
#[cfg(test)]
mod tests;

pub use cell::{cell_step, spatial_apply, CellWeights};
pub use config::{CellKind, Gating, HeadKind, ModelConfig, SpatialLayout};
pub use forecaster::{
    apply_dropout_masks, parameter_shapes, teacher_forcing_probability, DecoderFeed, ForecastOutput, HeadSeries,
    ModelCheckpoint, RecurrentForecaster, StepOutput,
};
