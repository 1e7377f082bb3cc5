use super::config::{Gating, ModelConfig, SpatialLayout};
use crate::diffcore::{Tape, Var};
use crate::error::{Error, Result};
use crate::spatial::graph_conv;

/// Weights of one recurrent cell, already bound to a tape.
///
/// Spatial weights are `[rows, c_out]` with `rows` given by the layout
/// (`k * k * c_in` on a grid, `supports * K * c_in` on a graph).
#[derive(Clone, Copy, Debug)]
pub enum CellWeights {
    Plain { wx: Var, wh: Var },
    /// `gate_*` produce the reset and update gates side by side
    /// (`2U` columns), `cand_*` the candidate state.
    Gru { gate_wx: Var, gate_wh: Var, gate_b: Var, cand_wx: Var, cand_wh: Var, cand_b: Var },
}

/// The spatial operator `W * X`: a 2-D convolution on grids, diffusion
/// convolution on graphs.
pub fn spatial_apply(tape: &mut Tape, layout: &SpatialLayout, config: &ModelConfig, x: Var, w: Var) -> Result<Var> {
    match layout {
        SpatialLayout::Graph { supports } => graph_conv(tape, w, x, supports, config.diffusion_steps),
        SpatialLayout::Grid { width, height, padding } => {
            tape.conv2d(x, w, *width, *height, config.kernel_size, *padding)
        }
    }
}

/// One recurrent update `h_{t+1} = cell(h_t, x_t)` for a batch of fields
/// laid out as `[B * P, channels]`.
pub fn cell_step(
    tape: &mut Tape,
    layout: &SpatialLayout,
    config: &ModelConfig,
    weights: &CellWeights,
    h: Var,
    x: Var,
) -> Result<Var> {
    let (hr, xr) = (tape.value(h).rows(), tape.value(x).rows());
    if hr != xr || hr % layout.node_count() != 0 {
        return Err(Error::shape("cell_step", format!("state has {hr} rows, input {xr}, {} locations", layout.node_count())));
    }
    match (*weights, config.gating) {
        (CellWeights::Plain { wx, wh }, Gating::Plain) => {
            let a = spatial_apply(tape, layout, config, h, wh)?;
            let b = spatial_apply(tape, layout, config, x, wx)?;
            let pre = tape.add(a, b)?;
            tape.sigmoid(pre)
        }
        (CellWeights::Gru { gate_wx, gate_wh, gate_b, cand_wx, cand_wh, cand_b }, Gating::Gru) => {
            let u = tape.value(h).cols();
            let gx = spatial_apply(tape, layout, config, x, gate_wx)?;
            let gh = spatial_apply(tape, layout, config, h, gate_wh)?;
            let g = tape.add(gx, gh)?;
            let g = tape.add_bias(g, gate_b)?;
            let g = tape.sigmoid(g)?;
            let reset = tape.slice_cols(g, 0, u)?;
            let update = tape.slice_cols(g, u, 2 * u)?;
            let rh = tape.mul(reset, h)?;
            let cx = spatial_apply(tape, layout, config, x, cand_wx)?;
            let ch = spatial_apply(tape, layout, config, rh, cand_wh)?;
            let c = tape.add(cx, ch)?;
            let c = tape.add_bias(c, cand_b)?;
            let c = tape.tanh(c)?;
            // h' = z h + (1 - z) c = c + z (h - c)
            let diff = tape.sub(h, c)?;
            let keep = tape.mul(update, diff)?;
            tape.add(c, keep)
        }
        _ => Err(Error::Config("cell weights do not match the configured gating".into())),
    }
}
