//! Builds a sensor graph from pairwise distances, derives diffusion
//! supports, and spreads point observations onto a grid.

use stuq::diffcore::Tensor;
use stuq::spatial::{
    gaussian_kernel_adjacency, inverse_distance_interpolate, normalized_laplacian_support, random_walk_support,
    reverse_random_walk_support, Station, StationSet, DEFAULT_EPSILON,
};

fn print_matrix(name: &str, m: &Tensor) {
    println!("{name}:");
    for i in 0..m.rows() {
        let row: Vec<String> = (0..m.cols()).map(|j| format!("{:6.3}", m.get2(i, j))).collect();
        println!("  {}", row.join(" "));
    }
}

fn main() -> stuq::Result<()> {
    let positions: [[f64; 2]; 4] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [3.0, 3.0]];
    let n = positions.len();
    let mut dist = Tensor::zeros(&[n, n]);
    for i in 0..n {
        for j in 0..n {
            let (dx, dy) = (positions[i][0] - positions[j][0], positions[i][1] - positions[j][1]);
            dist.set2(i, j, (dx * dx + dy * dy).sqrt());
        }
    }
    let graph = gaussian_kernel_adjacency(&dist, 1.0, 0.1)?;
    print_matrix("adjacency", graph.adjacency());
    print_matrix("random walk", random_walk_support(&graph).matrix());
    print_matrix("reverse random walk", reverse_random_walk_support(&graph).matrix());
    print_matrix("normalized Laplacian", normalized_laplacian_support(&graph).matrix());

    let stations = StationSet::new(
        positions.iter().zip([10.0, 12.0, 11.0, 20.0]).map(|(&p, v)| Station { position: p, values: vec![v] }).collect(),
    )?;
    let cells: Vec<[f64; 2]> = (0..4).flat_map(|y| (0..4).map(move |x| [x as f64, y as f64])).collect();
    let grid = inverse_distance_interpolate(&stations, &cells, DEFAULT_EPSILON)?;
    println!("interpolated 4x4 grid:");
    for row in grid.chunks(4) {
        println!("  {}", row.iter().map(|v| format!("{:6.2}", v[0])).collect::<Vec<_>>().join(" "));
    }
    Ok(())
}
