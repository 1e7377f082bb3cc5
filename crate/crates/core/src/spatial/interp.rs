use crate::error::{Error, Result};

pub const DEFAULT_EPSILON: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct Station {
    pub position: [f64; 2],
    /// One entry per feature.
    pub values: Vec<f64>,
}

/// Point observations to be spread onto a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct StationSet {
    stations: Vec<Station>,
}

impl StationSet {
    pub fn new(stations: Vec<Station>) -> Result<Self> {
        let features = stations.first().map(|s| s.values.len()).unwrap_or(0);
        for (i, s) in stations.iter().enumerate() {
            if s.values.len() != features {
                return Err(Error::invalid(format!(
                    "station {i} has {} values, expected {features}",
                    s.values.len()
                )));
            }
            for (j, t) in stations[..i].iter().enumerate() {
                let d = (s.position[0] - t.position[0]).hypot(s.position[1] - t.position[1]);
                if d <= 1e-12 {
                    return Err(Error::invalid(format!("stations {j} and {i} share a position")));
                }
            }
        }
        Ok(StationSet { stations })
    }

    pub fn stations(&self) -> &[Station] {
        &self.stations
    }

    pub fn len(&self) -> usize {
        self.stations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stations.is_empty()
    }
}

/// Normalized inverse-distance-squared weighting:
/// `v_k = sum_i w_ik v_i / sum_i w_ik`, `w_ik = 1 / (d_ik^2 + epsilon)`.
///
/// Returns one row of feature values per cell. With `epsilon = 0` a cell
/// sitting exactly on a station takes that station's values.
pub fn inverse_distance_interpolate(
    stations: &StationSet,
    cells: &[[f64; 2]],
    epsilon: f64,
) -> Result<Vec<Vec<f64>>> {
    if stations.is_empty() {
        return Err(Error::invalid("interpolation needs at least one station"));
    }
    if !(epsilon >= 0.0) {
        return Err(Error::invalid(format!("epsilon must be >= 0, got {epsilon}")));
    }
    let features = stations.stations[0].values.len();
    let mut out = Vec::with_capacity(cells.len());
    for cell in cells {
        let mut acc = vec![0.0; features];
        let mut total = 0.0;
        let mut exact = None;
        for s in &stations.stations {
            let dx = s.position[0] - cell[0];
            let dy = s.position[1] - cell[1];
            let denom = dx * dx + dy * dy + epsilon;
            if denom == 0.0 {
                exact = Some(s.values.clone());
                break;
            }
            let w = 1.0 / denom;
            total += w;
            acc.iter_mut().zip(&s.values).for_each(|(a, v)| *a += w * v);
        }
        out.push(match exact {
            Some(v) => v,
            None => acc.into_iter().map(|a| a / total).collect(),
        });
    }
    Ok(out)
}
