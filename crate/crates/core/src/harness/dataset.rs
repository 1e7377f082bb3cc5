use std::collections::{BTreeMap, HashMap};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diffcore::{Padding, Tensor};
use crate::error::{Error, Result};
use crate::models::SpatialLayout;
use crate::scoring::MaskedTarget;
use crate::spatial::{
    normalized_laplacian_support, random_walk_support, read_matrix_csv, reverse_random_walk_support, SpatialGraph,
    SupportKind,
};

/// Per-feature affine normalization fitted on training frames only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn identity(features: usize) -> Self {
        Normalizer { mean: vec![0.0; features], std: vec![1.0; features] }
    }

    pub fn normalize(&self, value: f64, feature: usize) -> f64 {
        (value - self.mean[feature]) / self.std[feature]
    }

    pub fn denormalize(&self, value: f64, feature: usize) -> f64 {
        value * self.std[feature] + self.mean[feature]
    }
}

/// Where the locations of a dataset live.
#[derive(Clone, Debug, PartialEq)]
pub enum SpatialDomain {
    Graph(SpatialGraph),
    Grid { width: usize, height: usize },
}

/// Window start indices per split.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Generative parameters of a synthetic dataset, kept for oracle checks.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub generator: String,
    pub params: BTreeMap<String, f64>,
}

/// A batch of windows ready for a forecaster: `input_len` history frames
/// and `horizon` masked targets, each `[B * P, D]` in normalized units.
#[derive(Clone, Debug)]
pub struct Batch {
    pub history: Vec<Tensor>,
    pub targets: Vec<MaskedTarget>,
}

/// A spatiotemporal series `[T, P, D]` with its mask, spatial domain,
/// normalization and windowing.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub name: String,
    pub node_ids: Vec<String>,
    pub timestamps: Vec<String>,
    steps: usize,
    nodes: usize,
    features: usize,
    values: Vec<f64>,
    observed: Vec<bool>,
    normalized: Vec<f64>,
    pub domain: SpatialDomain,
    pub normalizer: Normalizer,
    pub input_len: usize,
    pub horizon: usize,
    pub splits: Splits,
    pub truth: Option<GroundTruth>,
}

/// Fractions of the timeline given to train, validation and test.
pub fn check_split(fractions: [f64; 3]) -> Result<()> {
    let sum: f64 = fractions.iter().sum();
    if fractions.iter().any(|f| !(*f > 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split fractions must be positive and sum to 1, got {fractions:?}")));
    }
    Ok(())
}

/// Cuts `[0, steps)` into three consecutive segments and keeps every
/// window that fits entirely inside one of them.
pub fn chronological_splits(steps: usize, input_len: usize, horizon: usize, fractions: [f64; 3]) -> Result<Splits> {
    check_split(fractions)?;
    let t1 = (fractions[0] * steps as f64).round() as usize;
    let t2 = ((fractions[0] + fractions[1]) * steps as f64).round() as usize;
    let span = input_len + horizon;
    let windows = |lo: usize, hi: usize| -> Vec<usize> { if hi >= lo + span { (lo..=hi - span).collect() } else { Vec::new() } };
    let splits = Splits { train: windows(0, t1), validation: windows(t1, t2), test: windows(t2, steps) };
    if splits.train.is_empty() || splits.validation.is_empty() || splits.test.is_empty() {
        return Err(Error::Config(format!(
            "{steps} steps leave an empty split for windows of length {span} under fractions {fractions:?}"
        )));
    }
    Ok(splits)
}

impl Dataset {
    /// Builds a dataset from raw values laid out `[T, P, D]`. The
    /// normalizer is fitted on the frames touched by training windows.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        node_ids: Vec<String>,
        timestamps: Vec<String>,
        features: usize,
        values: Vec<f64>,
        observed: Vec<bool>,
        domain: SpatialDomain,
        input_len: usize,
        horizon: usize,
        splits: Splits,
    ) -> Result<Self> {
        let (steps, nodes) = (timestamps.len(), node_ids.len());
        if steps == 0 || nodes == 0 || features == 0 {
            return Err(Error::invalid("dataset needs at least one step, node and feature"));
        }
        if values.len() != steps * nodes * features || observed.len() != values.len() {
            return Err(Error::shape("dataset", format!("{} values for [{steps}, {nodes}, {features}]", values.len())));
        }
        let domain_nodes = match &domain {
            SpatialDomain::Graph(g) => g.node_count(),
            SpatialDomain::Grid { width, height } => width * height,
        };
        if domain_nodes != nodes {
            return Err(Error::invalid(format!("spatial domain has {domain_nodes} locations, series has {nodes}")));
        }
        if input_len == 0 || horizon == 0 {
            return Err(Error::Config("input_len and horizon must be positive".into()));
        }
        let span = input_len + horizon;
        for &s in splits.train.iter().chain(&splits.validation).chain(&splits.test) {
            if s + span > steps {
                return Err(Error::invalid(format!("window at {s} runs past the {steps} steps")));
            }
        }
        if splits.train.is_empty() {
            return Err(Error::invalid("no training windows"));
        }
        let mut train_frame = vec![false; steps];
        for &s in &splits.train {
            train_frame[s..s + span].iter_mut().for_each(|f| *f = true);
        }
        let mut mean = vec![0.0; features];
        let mut sq = vec![0.0; features];
        let mut count = vec![0usize; features];
        for t in (0..steps).filter(|&t| train_frame[t]) {
            for p in 0..nodes {
                for d in 0..features {
                    let i = (t * nodes + p) * features + d;
                    if observed[i] {
                        mean[d] += values[i];
                        sq[d] += values[i] * values[i];
                        count[d] += 1;
                    }
                }
            }
        }
        let mut std = vec![1.0; features];
        for d in 0..features {
            if count[d] > 0 {
                mean[d] /= count[d] as f64;
                let var = (sq[d] / count[d] as f64 - mean[d] * mean[d]).max(0.0);
                if var.sqrt() > 1e-8 * mean[d].abs().max(1.0) {
                    std[d] = var.sqrt();
                }
            }
        }
        let normalizer = Normalizer { mean, std };
        let normalized = values
            .iter()
            .zip(&observed)
            .enumerate()
            .map(|(i, (&v, &o))| if o { normalizer.normalize(v, i % features) } else { 0.0 })
            .collect();
        Ok(Dataset {
            name: name.into(),
            node_ids,
            timestamps,
            steps,
            nodes,
            features,
            values,
            observed,
            normalized,
            domain,
            normalizer,
            input_len,
            horizon,
            splits,
            truth: None,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn features(&self) -> usize {
        self.features
    }

    /// Raw values `[T, P, D]`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn observed(&self) -> &[bool] {
        &self.observed
    }

    pub fn value(&self, t: usize, p: usize, d: usize) -> f64 {
        self.values[(t * self.nodes + p) * self.features + d]
    }

    pub fn is_observed(&self, t: usize, p: usize, d: usize) -> bool {
        self.observed[(t * self.nodes + p) * self.features + d]
    }

    /// Every window a contiguous series admits: `T - T_in - H + 1`.
    pub fn window_count(&self) -> usize {
        (self.steps + 1).saturating_sub(self.input_len + self.horizon)
    }

    /// Normalized frame `[P, D]`, missing entries at zero.
    pub fn frame(&self, t: usize) -> Tensor {
        let w = self.nodes * self.features;
        Tensor::from_vec(vec![self.nodes, self.features], self.normalized[t * w..(t + 1) * w].to_vec())
            .expect("frame shape")
    }

    /// Stacks the windows starting at `starts` into one batch.
    pub fn batch(&self, starts: &[usize]) -> Batch {
        let w = self.nodes * self.features;
        let dims = vec![starts.len() * self.nodes, self.features];
        let stack = |offset: usize, src: &dyn Fn(usize) -> f64| -> Tensor {
            let mut data = Vec::with_capacity(starts.len() * w);
            for &s in starts {
                let base = (s + offset) * w;
                data.extend((base..base + w).map(src));
            }
            Tensor::from_vec(dims.clone(), data).expect("batch shape")
        };
        let norm = |i: usize| self.normalized[i];
        let mask = |i: usize| if self.observed[i] { 1.0 } else { 0.0 };
        let history = (0..self.input_len).map(|t| stack(t, &norm)).collect();
        let targets = (0..self.horizon)
            .map(|h| {
                let off = self.input_len + h;
                MaskedTarget { target: stack(off, &norm), mask: stack(off, &mask) }
            })
            .collect();
        Batch { history, targets }
    }

    /// Normalized history frames of raw-unit windows: a thin wrapper for
    /// callers holding physical values `[T_in][P * D]`.
    pub fn normalize_history(&self, raw: &[Vec<f64>]) -> Result<Vec<Tensor>> {
        let w = self.nodes * self.features;
        raw.iter()
            .map(|frame| {
                if frame.len() != w {
                    return Err(Error::shape("history", format!("{} values, expected {w}", frame.len())));
                }
                let data = frame.iter().enumerate().map(|(i, &v)| self.normalizer.normalize(v, i % self.features)).collect();
                Tensor::from_vec(vec![self.nodes, self.features], data)
            })
            .collect()
    }

    /// Spatial layout for a forecaster on this dataset.
    pub fn layout(&self, supports: &[SupportKind]) -> Result<SpatialLayout> {
        match &self.domain {
            SpatialDomain::Graph(g) => {
                if supports.is_empty() {
                    return Err(Error::Config("graph datasets need at least one support kind".into()));
                }
                let supports = supports
                    .iter()
                    .map(|k| match k {
                        SupportKind::RandomWalk => random_walk_support(g),
                        SupportKind::ReverseRandomWalk => reverse_random_walk_support(g),
                        SupportKind::NormalizedLaplacian => normalized_laplacian_support(g),
                    })
                    .collect();
                Ok(SpatialLayout::Graph { supports })
            }
            SpatialDomain::Grid { width, height } => {
                Ok(SpatialLayout::Grid { width: *width, height: *height, padding: Padding::Zero })
            }
        }
    }

    /// Writes the series in the `timestamp,node_id,feat_0..` schema.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["timestamp".to_string(), "node_id".to_string()];
        header.extend((0..self.features).map(|d| format!("feat_{d}")));
        w.write_record(&header)?;
        for t in 0..self.steps {
            for p in 0..self.nodes {
                let mut rec = vec![self.timestamps[t].clone(), self.node_ids[p].clone()];
                for d in 0..self.features {
                    rec.push(if self.is_observed(t, p, d) { format!("{}", self.value(t, p, d)) } else { String::new() });
                }
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// How a CSV series is windowed and where its locations live.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvSchema {
    pub input_len: usize,
    pub horizon: usize,
    pub split: [f64; 3],
    /// Grid datasets give `(width, height)`; graph datasets an adjacency.
    pub grid: Option<(usize, usize)>,
}

/// Parses a `timestamp,node_id,feat_0..feat_{D-1}` series. Empty cells
/// and absent `(timestamp, node)` rows are masked.
pub fn read_series_csv<R: Read>(
    reader: R,
    adjacency: Option<(Vec<String>, Tensor)>,
    schema: &CsvSchema,
) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
    if header.len() < 3 || header[0] != "timestamp" || header[1] != "node_id" {
        return Err(Error::Parse { line: 1, msg: "header must be timestamp,node_id,feat_0,...".into() });
    }
    let features = header.len() - 2;
    let mut timestamps: Vec<String> = Vec::new();
    let mut t_index: HashMap<String, usize> = HashMap::new();
    let mut node_ids: Vec<String> = Vec::new();
    let mut p_index: HashMap<String, usize> = HashMap::new();
    let mut last_t: HashMap<usize, usize> = HashMap::new();
    let mut cells: Vec<(usize, usize, Vec<Option<f64>>)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() != header.len() {
            return Err(Error::Parse { line, msg: format!("expected {} columns, found {}", header.len(), rec.len()) });
        }
        let ts = rec[0].trim().to_string();
        let t = *t_index.entry(ts.clone()).or_insert_with(|| {
            timestamps.push(ts);
            timestamps.len() - 1
        });
        let id = rec[1].trim().to_string();
        let p = *p_index.entry(id.clone()).or_insert_with(|| {
            node_ids.push(id);
            node_ids.len() - 1
        });
        if let Some(&prev) = last_t.get(&p) {
            if t <= prev {
                return Err(Error::Parse { line, msg: format!("timestamps for node `{}` are not strictly increasing", &rec[1]) });
            }
        }
        last_t.insert(p, t);
        let mut vals = Vec::with_capacity(features);
        for c in 2..rec.len() {
            let raw = rec[c].trim();
            vals.push(if raw.is_empty() {
                None
            } else {
                Some(raw.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Parse {
                    line,
                    msg: format!("column {c}: `{raw}` is not a finite number"),
                })?)
            });
        }
        cells.push((t, p, vals));
    }
    let (steps, nodes) = (timestamps.len(), node_ids.len());
    if steps == 0 {
        return Err(Error::Parse { line: 2, msg: "no data rows".into() });
    }
    let mut values = vec![0.0; steps * nodes * features];
    let mut observed = vec![false; values.len()];
    for (t, p, vals) in cells {
        for (d, v) in vals.into_iter().enumerate() {
            if let Some(v) = v {
                let i = (t * nodes + p) * features + d;
                values[i] = v;
                observed[i] = true;
            }
        }
    }
    let domain = match (schema.grid, adjacency) {
        (Some((width, height)), _) => {
            if width * height != nodes {
                return Err(Error::Config(format!("grid {width}x{height} does not hold {nodes} locations")));
            }
            SpatialDomain::Grid { width, height }
        }
        (None, Some((ids, adj))) => {
            if ids.len() != nodes {
                return Err(Error::Parse { line: 1, msg: format!("adjacency has {} nodes, expected P = {nodes}", ids.len()) });
            }
            let order: Vec<usize> = node_ids
                .iter()
                .map(|id| {
                    ids.iter().position(|a| a == id).ok_or_else(|| Error::Parse {
                        line: 1,
                        msg: format!("node `{id}` is missing from the adjacency header"),
                    })
                })
                .collect::<Result<_>>()?;
            let mut m = Tensor::zeros(&[nodes, nodes]);
            for i in 0..nodes {
                for j in 0..nodes {
                    m.set2(i, j, adj.get2(order[i], order[j]));
                }
            }
            SpatialDomain::Graph(SpatialGraph::new(m)?)
        }
        (None, None) => return Err(Error::Config("a series needs an adjacency matrix or a grid shape".into())),
    };
    let splits = chronological_splits(steps, schema.input_len, schema.horizon, schema.split)?;
    Dataset::new(
        "csv",
        node_ids,
        timestamps,
        features,
        values,
        observed,
        domain,
        schema.input_len,
        schema.horizon,
        splits,
    )
}

/// Loads a series CSV and an optional adjacency CSV from disk.
pub fn load_dataset(path: impl AsRef<Path>, adjacency: Option<&Path>, schema: &CsvSchema) -> Result<Dataset> {
    let adj = match adjacency {
        Some(p) => Some(read_matrix_csv(std::fs::File::open(p)?)?),
        None => None,
    };
    let mut ds = read_series_csv(std::fs::File::open(path.as_ref())?, adj, schema)?;
    ds.name = path.as_ref().file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "csv".into());
    Ok(ds)
}
