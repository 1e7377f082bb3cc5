//! Spatial supports consumed by the forecasters: graph adjacency and
//! diffusion matrices, diffusion convolution, and station-to-grid
//! interpolation.

mod graph;
mod interp;
mod io;

pub use graph::{
    gaussian_kernel_adjacency, graph_conv, graph_conv_weight_rows, normalized_laplacian_support,
    random_walk_support, reverse_random_walk_support, GraphSupport, SpatialGraph, SupportKind,
};
pub use interp::{inverse_distance_interpolate, Station, StationSet, DEFAULT_EPSILON};
pub use io::{load_matrix_csv, load_stations_csv, read_matrix_csv, read_stations_csv};
