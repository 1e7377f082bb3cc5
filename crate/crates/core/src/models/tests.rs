use super::*;
use crate::diffcore::{Padding, Tape, Tensor, Var};
use crate::spatial::{random_walk_support, GraphSupport, SpatialGraph, SupportKind};

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn graph_layout(m: Tensor) -> SpatialLayout {
    SpatialLayout::Graph { supports: vec![GraphSupport::custom(SupportKind::RandomWalk, m).unwrap()] }
}

fn plain(cell: CellKind, k: usize) -> ModelConfig {
    ModelConfig {
        cell,
        hidden_units: 1,
        diffusion_steps: 1,
        kernel_size: k,
        gating: Gating::Plain,
        ..Default::default()
    }
}

fn lcg(seed: &mut u64) -> f64 {
    *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    ((*seed >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
}

fn rand_tensor(dims: &[usize], seed: &mut u64) -> Tensor {
    let n = dims.iter().product();
    Tensor::from_vec(dims.to_vec(), (0..n).map(|_| lcg(seed)).collect()).unwrap()
}

#[test]
fn zero_weights_give_half() {
    let layout = SpatialLayout::Grid { width: 3, height: 2, padding: Padding::Zero };
    let cfg = ModelConfig { hidden_units: 2, ..plain(CellKind::GridConv, 3) };
    let mut tape = Tape::new();
    let wx = tape.leaf(Tensor::zeros(&[9, 2]));
    let wh = tape.leaf(Tensor::zeros(&[18, 2]));
    let h = tape.constant(Tensor::full(&[6, 2], 0.7));
    let x = tape.constant(Tensor::full(&[6, 1], -3.0));
    let out = cell_step(&mut tape, &layout, &cfg, &CellWeights::Plain { wx, wh }, h, x).unwrap();
    assert!(tape.value(out).data().iter().all(|&v| v == 0.5));
}

#[test]
fn one_cell_grid_is_scalar_rnn() {
    let layout = SpatialLayout::Grid { width: 1, height: 1, padding: Padding::Zero };
    let cfg = plain(CellKind::GridConv, 1);
    let mut tape = Tape::new();
    let wx = tape.leaf(Tensor::matrix(1, 1, vec![0.8]).unwrap());
    let wh = tape.leaf(Tensor::matrix(1, 1, vec![-1.3]).unwrap());
    let h = tape.constant(Tensor::matrix(1, 1, vec![0.4]).unwrap());
    let x = tape.constant(Tensor::matrix(1, 1, vec![2.0]).unwrap());
    let out = cell_step(&mut tape, &layout, &cfg, &CellWeights::Plain { wx, wh }, h, x).unwrap();
    assert!((tape.value(out).data()[0] - sigmoid(-1.3 * 0.4 + 0.8 * 2.0)).abs() < 1e-15);
}

#[test]
fn periodic_convolution_commutes_with_translation() {
    let (w, hgt) = (4, 3);
    let layout = SpatialLayout::Grid { width: w, height: hgt, padding: Padding::Periodic };
    let cfg = ModelConfig { hidden_units: 2, ..plain(CellKind::GridConv, 3) };
    let mut seed = 7;
    let field = rand_tensor(&[w * hgt, 1], &mut seed);
    let kernel = rand_tensor(&[9, 2], &mut seed);
    let shift = |t: &Tensor| {
        let mut s = t.clone();
        for m in 0..w {
            for n in 0..hgt {
                for c in 0..t.cols() {
                    s.set2(((m + 1) % w) * hgt + (n + 2) % hgt, c, t.get2(m * hgt + n, c));
                }
            }
        }
        s
    };
    let run = |x: Tensor| {
        let mut tape = Tape::new();
        let xv = tape.constant(x);
        let kv = tape.constant(kernel.clone());
        let out = spatial_apply(&mut tape, &layout, &cfg, xv, kv).unwrap();
        tape.value(out).clone()
    };
    let a = shift(&run(field.clone()));
    let b = run(shift(&field));
    for (x, y) in a.data().iter().zip(b.data()) {
        assert!((x - y).abs() < 1e-14);
    }
}

#[test]
fn identity_support_is_dense_rnn_per_node() {
    let layout = graph_layout(Tensor::identity(3));
    let cfg = ModelConfig { hidden_units: 2, ..plain(CellKind::GraphConv, 3) };
    let mut seed = 11;
    let (wxt, wht) = (rand_tensor(&[1, 2], &mut seed), rand_tensor(&[2, 2], &mut seed));
    let (ht, xt) = (rand_tensor(&[3, 2], &mut seed), rand_tensor(&[3, 1], &mut seed));
    let mut tape = Tape::new();
    let (wx, wh) = (tape.leaf(wxt.clone()), tape.leaf(wht.clone()));
    let (h, x) = (tape.constant(ht.clone()), tape.constant(xt.clone()));
    let out = cell_step(&mut tape, &layout, &cfg, &CellWeights::Plain { wx, wh }, h, x).unwrap();
    let dense = ht.matmul(&wht).unwrap();
    let drive = xt.matmul(&wxt).unwrap();
    for i in 0..6 {
        let want = sigmoid(dense.data()[i] + drive.data()[i]);
        assert!((tape.value(out).data()[i] - want).abs() < 1e-15);
    }
}

#[test]
fn two_node_swap_by_hand() {
    let layout = graph_layout(Tensor::matrix(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap());
    let cfg = plain(CellKind::GraphConv, 3);
    let mut tape = Tape::new();
    let wx = tape.leaf(Tensor::matrix(1, 1, vec![0.5]).unwrap());
    let wh = tape.leaf(Tensor::matrix(1, 1, vec![2.0]).unwrap());
    let h = tape.constant(Tensor::matrix(2, 1, vec![0.1, -0.3]).unwrap());
    let x = tape.constant(Tensor::matrix(2, 1, vec![1.0, 4.0]).unwrap());
    let out = cell_step(&mut tape, &layout, &cfg, &CellWeights::Plain { wx, wh }, h, x).unwrap();
    let v = tape.value(out).data();
    assert!((v[0] - sigmoid(2.0 * -0.3 + 0.5 * 4.0)).abs() < 1e-12);
    assert!((v[1] - sigmoid(2.0 * 0.1 + 0.5 * 1.0)).abs() < 1e-12);
}

#[test]
fn gru_cell_is_permutation_equivariant() {
    let p = 4;
    let mut seed = 3;
    let adj = rand_tensor(&[p, p], &mut seed).map(f64::abs);
    let perm = [2, 0, 3, 1];
    let mut adj_p = adj.clone();
    for i in 0..p {
        for j in 0..p {
            adj_p.set2(i, j, adj.get2(perm[i], perm[j]));
        }
    }
    let cfg = ModelConfig { hidden_units: 3, diffusion_steps: 2, ..Default::default() };
    let weights: Vec<Tensor> = [[2usize, 6], [6, 6], [0, 6], [2, 3], [6, 3], [0, 3]]
        .iter()
        .map(|d| if d[0] == 0 { rand_tensor(&[d[1]], &mut seed) } else { rand_tensor(&[d[0], d[1]], &mut seed) })
        .collect();
    let ht = rand_tensor(&[p, 3], &mut seed);
    let xt = rand_tensor(&[p, 1], &mut seed);
    let permute = |t: &Tensor| {
        let mut s = t.clone();
        for i in 0..p {
            for c in 0..t.cols() {
                s.set2(i, c, t.get2(perm[i], c));
            }
        }
        s
    };
    let run = |a: &Tensor, h: Tensor, x: Tensor| {
        let layout = SpatialLayout::Graph { supports: vec![random_walk_support(&SpatialGraph::new(a.clone()).unwrap())] };
        let mut tape = Tape::new();
        let v: Vec<Var> = weights.iter().map(|w| tape.leaf(w.clone())).collect();
        let w = CellWeights::Gru { gate_wx: v[0], gate_wh: v[1], gate_b: v[2], cand_wx: v[3], cand_wh: v[4], cand_b: v[5] };
        let (h, x) = (tape.constant(h), tape.constant(x));
        let out = cell_step(&mut tape, &layout, &cfg, &w, h, x).unwrap();
        tape.value(out).clone()
    };
    let a = permute(&run(&adj, ht.clone(), xt.clone()));
    let b = run(&adj_p, permute(&ht), permute(&xt));
    for (x, y) in a.data().iter().zip(b.data()) {
        assert!((x - y).abs() < 1e-13);
    }
}

#[test]
fn parameter_count_golden() {
    let two = SpatialLayout::Graph {
        supports: vec![
            GraphSupport::custom(SupportKind::RandomWalk, Tensor::identity(3)).unwrap(),
            GraphSupport::custom(SupportKind::ReverseRandomWalk, Tensor::identity(3)).unwrap(),
        ],
    };
    let cfg = ModelConfig { hidden_units: 4, diffusion_steps: 2, ..Default::default() };
    assert_eq!(RecurrentForecaster::new(cfg, two, 0).unwrap().params().numel(), 509);

    let grid = SpatialLayout::Grid { width: 2, height: 2, padding: Padding::Zero };
    let cfg = ModelConfig { hidden_units: 2, ..plain(CellKind::GridConv, 3) };
    assert_eq!(RecurrentForecaster::new(cfg.clone(), grid.clone(), 0).unwrap().params().numel(), 111);
    let spline = ModelConfig { head: HeadKind::Spline11, ..cfg };
    assert_eq!(RecurrentForecaster::new(spline, grid, 0).unwrap().params().numel(), 141);
}

fn small_model(head: HeadKind) -> RecurrentForecaster {
    let layout = graph_layout(Tensor::matrix(3, 3, vec![0.5, 0.5, 0.0, 0.3, 0.4, 0.3, 0.0, 0.5, 0.5]).unwrap());
    let cfg = ModelConfig { hidden_units: 4, horizon: 2, diffusion_steps: 1, head, ..Default::default() };
    RecurrentForecaster::new(cfg, layout, 42).unwrap()
}

#[test]
fn head_shapes() {
    let hist = vec![Tensor::full(&[3, 1], 0.2); 3];
    let point = small_model(HeadKind::Point).forecast(&hist, DecoderFeed::FreeRunning).unwrap();
    assert_eq!(point.heads.len(), 1);
    assert_eq!(point.heads[0].steps.len(), 2);
    let q = small_model(HeadKind::Quantile3).forecast(&hist, DecoderFeed::FreeRunning).unwrap();
    assert_eq!(q.heads.iter().map(|h| h.label).collect::<Vec<_>>(), ["q-lower", "q-median", "q-upper"]);
    let s = small_model(HeadKind::Spline11).forecast(&hist, DecoderFeed::FreeRunning).unwrap();
    assert_eq!(s.heads[0].steps[0].dims(), &[3, 11]);
}

#[test]
fn feedback_modes_agree_on_own_outputs() {
    let model = small_model(HeadKind::Point);
    let hist = vec![Tensor::full(&[6, 1], 0.3); 2];
    let free = model.forecast(&hist, DecoderFeed::FreeRunning).unwrap();
    let targets = free.heads[0].steps.clone();
    let forced = model.forecast(&hist, DecoderFeed::TeacherForced { targets: &targets, truth_steps: None }).unwrap();
    assert_eq!(free, forced);
}

#[test]
fn horizon_mismatch_is_error() {
    let model = small_model(HeadKind::Point);
    let hist = vec![Tensor::full(&[3, 1], 0.3)];
    let targets = vec![Tensor::zeros(&[3, 1])];
    assert!(model.forecast(&hist, DecoderFeed::TeacherForced { targets: &targets, truth_steps: None }).is_err());
}

#[test]
fn dropout_masks() {
    let base = small_model(HeadKind::Point);
    assert_eq!(apply_dropout_masks(&base, 0.0, 1).unwrap().params(), base.params());
    assert!(apply_dropout_masks(&base, 1.0, 1).is_err());

    let layout = graph_layout(Tensor::identity(2));
    let cfg = ModelConfig { hidden_units: 32, diffusion_steps: 2, ..Default::default() };
    let big = RecurrentForecaster::new(cfg, layout, 5).unwrap();
    let n = big.params().numel();
    assert!(n >= 10_000);
    let nonzero_before = big.params().flatten().iter().filter(|v| **v != 0.0).count();
    let a = apply_dropout_masks(&big, 0.05, 9).unwrap();
    let b = apply_dropout_masks(&big, 0.05, 9).unwrap();
    assert_eq!(a.params(), b.params());
    let dropped = nonzero_before - a.params().flatten().iter().filter(|v| **v != 0.0).count();
    let frac = dropped as f64 / nonzero_before as f64;
    assert!((0.04..=0.06).contains(&frac), "{frac}");
    assert_eq!(big.params().numel(), n);
}

#[test]
fn checkpoint_round_trip() {
    let model = small_model(HeadKind::Interval3);
    let ckpt = model.checkpoint();
    let json = serde_json::to_string(&ckpt).unwrap();
    let back: ModelCheckpoint = serde_json::from_str(&json).unwrap();
    let restored = RecurrentForecaster::from_checkpoint(&back, model.layout().clone()).unwrap();
    assert_eq!(restored.params(), model.params());
}

#[test]
fn scheduled_sampling_decays_linearly() {
    assert_eq!(teacher_forcing_probability(0, 10), 1.0);
    assert_eq!(teacher_forcing_probability(5, 10), 0.5);
    assert_eq!(teacher_forcing_probability(20, 10), 0.0);
}
