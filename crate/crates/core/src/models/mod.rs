//! Network variants and per-region baselines.
//!
//! | variant          | temporal stage                  | body         | head                  |
//! |------------------|---------------------------------|--------------|-----------------------|
//! | `lc_st_fcn`      | 3D convs, depths `k_d`          | 2D convs     | 2 locally connected   |
//! | `lc_st_fcn_diff` | same, on differenced input      | 2D convs     | 2 locally connected   |
//! | `lc_fcn`         | 2D convs, time as channels      | 2D convs     | 2 locally connected   |
//! | `fcn`            | 2D convs, time as channels      | 2D convs     | 2 shared 2D convs     |
//! | `cnn`            | 2D convs, time as channels      | 2D convs     | 2 dense               |
//! | `ann`            | one network per region on `[1, 1, T_d]` | -    | 2 dense               |

mod checkpoint;
mod graph;
mod region;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use graph::{Gradients, Layer, ModelGraph, Tape};
pub use region::{AdditiveModel, RegionModel};

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{Activation, Conv2d, Conv3d, Dense, LocallyConnected2d};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    LcStFcn,
    LcStFcnDiff,
    LcFcn,
    Fcn,
    Cnn,
    Ann,
    /// Hand-assembled graph.
    Custom,
}

impl Variant {
    pub const GRID: [Variant; 5] = [
        Variant::LcStFcn,
        Variant::LcStFcnDiff,
        Variant::LcFcn,
        Variant::Fcn,
        Variant::Cnn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::LcStFcn => "lc_st_fcn",
            Variant::LcStFcnDiff => "lc_st_fcn_diff",
            Variant::LcFcn => "lc_fcn",
            Variant::Fcn => "fcn",
            Variant::Cnn => "cnn",
            Variant::Ann => "ann",
            Variant::Custom => "custom",
        }
    }

    /// Whether the model expects seasonally-then-first differenced input.
    pub fn differenced(self) -> bool {
        self == Variant::LcStFcnDiff
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Variant::LcStFcn,
            Variant::LcStFcnDiff,
            Variant::LcFcn,
            Variant::Fcn,
            Variant::Cnn,
            Variant::Ann,
            Variant::Custom,
        ]
        .into_iter()
        .find(|v| v.name() == s)
        .ok_or_else(|| Error::Config(format!("unknown variant `{s}`")))
    }
}

/// Architecture hyperparameters shared by every variant.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub rows: usize,
    pub cols: usize,
    pub recent: usize,
    pub period: usize,
    /// Temporal kernel depth of each 3D layer.
    pub kernel_depths: Vec<usize>,
    /// Filters in each layer of the temporal stage (3D, or 2D for the
    /// time-as-channels variants).
    pub temporal_filters: usize,
    pub conv2d_filters: usize,
    pub conv2d_layers: usize,
    /// Channels of the first of the two head layers.
    pub head_filters: usize,
    pub cnn_hidden: usize,
    pub ann_hidden: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            rows: 16,
            cols: 16,
            recent: 10,
            period: 10,
            kernel_depths: vec![3, 5, 7, 8],
            temporal_filters: 32,
            conv2d_filters: 32,
            conv2d_layers: 4,
            head_filters: 16,
            cnn_hidden: 256,
            ann_hidden: 16,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn input_depth(&self) -> usize {
        self.recent + self.period
    }

    fn validate(&self) -> Result<()> {
        let positive = [
            ("rows", self.rows),
            ("cols", self.cols),
            ("recent", self.recent),
            ("period", self.period),
            ("temporal_filters", self.temporal_filters),
            ("conv2d_filters", self.conv2d_filters),
            ("head_filters", self.head_filters),
            ("cnn_hidden", self.cnn_hidden),
            ("ann_hidden", self.ann_hidden),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("`{name}` must be >= 1")));
        }
        if self.kernel_depths.is_empty() || self.kernel_depths.contains(&0) {
            return Err(Error::Config("kernel depths must be a non-empty list of positive values".into()));
        }
        Ok(())
    }
}

/// Builds the named variant with freshly initialised parameters.
pub fn build_variant<T: Scalar>(variant: Variant, cfg: &ModelConfig) -> Result<ModelGraph<T>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (rows, cols, depth) = (cfg.rows, cfg.cols, cfg.input_depth());
    let relu = Activation::Relu;
    let mut layers = Vec::new();

    if variant == Variant::Ann {
        layers.push(Layer::Reshape(vec![depth]));
        layers.push(Layer::Dense(Dense::init(depth, cfg.ann_hidden, relu, &mut rng)?));
        layers.push(Layer::Dense(Dense::init(cfg.ann_hidden, 1, Activation::Linear, &mut rng)?));
        layers.push(Layer::Reshape(vec![1, 1]));
        return ModelGraph::new(variant, layers, [1, 1, depth], [1, 1]);
    }
    if variant == Variant::Custom {
        return Err(Error::Config("`custom` graphs are assembled with ModelGraph::new".into()));
    }

    // Temporal stage.
    let mut channels;
    match variant {
        Variant::LcStFcn | Variant::LcStFcnDiff => {
            let total: usize = cfg.kernel_depths.iter().sum();
            let needed = total + 1 - cfg.kernel_depths.len();
            if depth < needed {
                return Err(Error::Depth {
                    kernel: needed,
                    input: depth,
                });
            }
            layers.push(Layer::Reshape(vec![rows, cols, depth, 1]));
            let (mut t, mut c) = (depth, 1);
            for &kd in &cfg.kernel_depths {
                layers.push(Layer::Conv3d(Conv3d::init(kd, c, cfg.temporal_filters, relu, &mut rng)?));
                t = t + 1 - kd;
                c = cfg.temporal_filters;
            }
            // Remaining depth folds into channels; with the standard schedule it is 1.
            channels = t * c;
            layers.push(Layer::Reshape(vec![rows, cols, channels]));
        }
        _ => {
            channels = depth;
            for _ in &cfg.kernel_depths {
                layers.push(Layer::Conv2d(Conv2d::init(channels, cfg.temporal_filters, relu, &mut rng)?));
                channels = cfg.temporal_filters;
            }
        }
    }

    for _ in 0..cfg.conv2d_layers {
        layers.push(Layer::Conv2d(Conv2d::init(channels, cfg.conv2d_filters, relu, &mut rng)?));
        channels = cfg.conv2d_filters;
    }

    let h = cfg.head_filters;
    match variant {
        Variant::LcStFcn | Variant::LcStFcnDiff | Variant::LcFcn => {
            layers.push(Layer::Local(LocallyConnected2d::init(rows, cols, channels, h, relu, &mut rng)?));
            layers.push(Layer::Local(LocallyConnected2d::init(
                rows,
                cols,
                h,
                1,
                Activation::Linear,
                &mut rng,
            )?));
            layers.push(Layer::Reshape(vec![rows, cols]));
        }
        Variant::Fcn => {
            layers.push(Layer::Conv2d(Conv2d::init(channels, h, relu, &mut rng)?));
            layers.push(Layer::Conv2d(Conv2d::init(h, 1, Activation::Linear, &mut rng)?));
            layers.push(Layer::Reshape(vec![rows, cols]));
        }
        Variant::Cnn => {
            let flat = rows * cols * channels;
            layers.push(Layer::Reshape(vec![flat]));
            layers.push(Layer::Dense(Dense::init(flat, cfg.cnn_hidden, relu, &mut rng)?));
            layers.push(Layer::Dense(Dense::init(
                cfg.cnn_hidden,
                rows * cols,
                Activation::Linear,
                &mut rng,
            )?));
            layers.push(Layer::Reshape(vec![rows, cols]));
        }
        Variant::Ann | Variant::Custom => unreachable!(),
    }
    ModelGraph::new(variant, layers, [rows, cols, depth], [rows, cols])
}

/// Parameter count of the last two parameterised layers.
pub fn head_param_count<T: Scalar>(model: &ModelGraph<T>) -> usize {
    model
        .layers
        .iter()
        .rev()
        .filter(|l| !matches!(l, Layer::Reshape(_)))
        .take(2)
        .map(|l| l.param_count())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use rand::Rng;

    fn small(seed: u64) -> ModelConfig {
        ModelConfig {
            rows: 5,
            cols: 4,
            temporal_filters: 3,
            conv2d_filters: 3,
            conv2d_layers: 1,
            head_filters: 2,
            cnn_hidden: 6,
            ann_hidden: 4,
            seed,
            ..ModelConfig::default()
        }
    }

    fn random_input(shape: [usize; 3], seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(&shape, |_| rng.random_range(0.0..5.0)).unwrap()
    }

    #[test]
    fn depth_chain_of_standard_schedule() {
        let m = build_variant::<f64>(Variant::LcStFcn, &ModelConfig::default()).unwrap();
        let depths: Vec<usize> = m
            .shape_chain()
            .unwrap()
            .iter()
            .zip(std::iter::once(&Layer::Reshape(vec![])).chain(&m.layers))
            .filter(|(_, l)| matches!(l, Layer::Conv3d(_)))
            .map(|(s, _)| s[2])
            .collect();
        assert_eq!(depths, vec![18, 14, 8, 1]);
        assert_eq!(m.output_spec, [16, 16]);
    }

    #[test]
    fn short_input_is_depth_error() {
        let cfg = ModelConfig {
            recent: 5,
            period: 4,
            ..small(0)
        };
        assert!(matches!(
            build_variant::<f64>(Variant::LcStFcn, &cfg),
            Err(Error::Depth { .. })
        ));
        // Time-as-channels variants do not depend on the depth chain.
        assert!(build_variant::<f64>(Variant::LcFcn, &cfg).is_ok());
    }

    #[test]
    fn unknown_variant_name() {
        assert!(matches!("lstm".parse::<Variant>(), Err(Error::Config(_))));
        assert_eq!("lc_fcn".parse::<Variant>().unwrap(), Variant::LcFcn);
    }

    #[test]
    fn layer_schedule() {
        let m = build_variant::<f64>(Variant::LcStFcn, &ModelConfig::default()).unwrap();
        let kinds: Vec<_> = m.layers.iter().map(|l| l.kind()).filter(|k| *k != "reshape").collect();
        assert_eq!(
            kinds,
            ["conv3d", "conv3d", "conv3d", "conv3d", "conv2d", "conv2d", "conv2d", "conv2d", "lc2d", "lc2d"]
        );
        match m.layers.iter().rev().nth(1) {
            Some(Layer::Local(l)) => assert_eq!(l.out_channels, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn fcn_and_lc_fcn_differ_only_in_head() {
        let cfg = ModelConfig::default();
        let fcn = build_variant::<f64>(Variant::Fcn, &cfg).unwrap();
        let lc = build_variant::<f64>(Variant::LcFcn, &cfg).unwrap();
        let n = fcn.layers.len();
        assert_eq!(n, lc.layers.len());
        for (a, b) in fcn.layers[..n - 3].iter().zip(&lc.layers[..n - 3]) {
            assert_eq!(a.param_count(), b.param_count());
        }
        let cells = cfg.rows * cfg.cols;
        for k in [n - 3, n - 2] {
            let (pa, pb) = (fcn.layers[k].params(), lc.layers[k].params());
            assert_eq!(pb[0].len(), cells * pa[0].len());
            assert_eq!(pb[1].len(), cells * pa[1].len());
        }
    }

    #[test]
    fn cnn_head_dwarfs_fcn_head() {
        let cfg = ModelConfig::default();
        let fcn = build_variant::<f64>(Variant::Fcn, &cfg).unwrap();
        let cnn = build_variant::<f64>(Variant::Cnn, &cfg).unwrap();
        let ratio = head_param_count(&cnn) as f64 / head_param_count(&fcn) as f64;
        // Exact counts hinge on filter widths; only the order of magnitude
        // (10^3 to 10^4 after rounding log10) is checked.
        let order = ratio.log10().round();
        assert!((3.0..=4.0).contains(&order), "ratio {ratio}");
    }

    #[test]
    fn zero_params_zero_output() {
        for v in Variant::GRID {
            let mut m = build_variant::<f64>(v, &small(1)).unwrap();
            for p in m.params_mut() {
                p.fill(0.0);
            }
            let y = m.forward(&random_input(m.input_spec, 2)).unwrap();
            assert_eq!(y.shape(), &[5, 4]);
            assert!(y.data().iter().all(|&v| v == 0.0), "{v}");
        }
    }

    #[test]
    fn same_seed_same_output() {
        for v in Variant::GRID {
            let a = build_variant::<f64>(v, &small(9)).unwrap();
            let b = build_variant::<f64>(v, &small(9)).unwrap();
            let x = random_input(a.input_spec, 3);
            let (ya, yb) = (a.forward(&x).unwrap(), b.forward(&x).unwrap());
            assert!(ya.data().iter().zip(yb.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
    }

    #[test]
    fn input_shape_checked() {
        let m = build_variant::<f64>(Variant::Fcn, &small(0)).unwrap();
        let x = Tensor::zeros(&[5, 4, 19]).unwrap();
        assert!(matches!(m.forward(&x), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn backward_without_tape_is_state_error() {
        let m = build_variant::<f64>(Variant::LcFcn, &small(0)).unwrap();
        let tape = Tape::empty(Tensor::zeros(&[5, 4]).unwrap());
        let g = Tensor::zeros(&[5, 4]).unwrap();
        assert!(matches!(m.backward(&tape, &g), Err(Error::State(_))));
    }

    #[test]
    fn graph_gradients_match_finite_differences() {
        for v in [Variant::LcStFcn, Variant::LcFcn, Variant::Fcn, Variant::Cnn, Variant::Ann] {
            let mut m = build_variant::<f64>(v, &small(4)).unwrap();
            m.scale = 2.5;
            let x = random_input(m.input_spec, 5);
            let mut rng = ChaCha8Rng::seed_from_u64(6);
            let r = Tensor::from_fn(&m.output_spec, |_| rng.random_range(-1.0..1.0)).unwrap();
            let tape = m.forward_train(&x).unwrap();
            let grads = m.backward(&tape, &r).unwrap();
            let objective =
                |m: &ModelGraph<f64>| -> f64 { m.forward(&x).unwrap().data().iter().zip(r.data()).map(|(a, b)| a * b).sum() };
            let eps = 1e-5;
            let n = m.params().len();
            for p in 0..n {
                let len = m.params()[p].len();
                for k in (0..len).step_by(1 + len / 25) {
                    let orig = m.params()[p].data()[k];
                    m.params_mut()[p].data_mut()[k] = orig + eps;
                    let up = objective(&m);
                    m.params_mut()[p].data_mut()[k] = orig - eps;
                    let down = objective(&m);
                    m.params_mut()[p].data_mut()[k] = orig;
                    let num = (up - down) / (2.0 * eps);
                    let ana = grads.tensors[p].data()[k];
                    let rel = (num - ana).abs() / num.abs().max(ana.abs()).max(1e-3);
                    assert!(rel < 1e-4, "{v} param {p}[{k}]: {ana} vs {num}");
                }
            }
        }
    }

    #[test]
    fn convolutional_variants_are_local() {
        // Receptive radius = number of 3×3 layers = 4 + 1 + 2 = 7 cells.
        let cfg = ModelConfig {
            rows: 18,
            cols: 18,
            ..small(5)
        };
        for v in [Variant::LcStFcn, Variant::LcFcn, Variant::Fcn] {
            let m = build_variant::<f64>(v, &cfg).unwrap();
            let x = random_input(m.input_spec, 7);
            let mut xp = x.clone();
            for t in 0..20 {
                xp.set(&[0, 0, t], x.get(&[0, 0, t]) + 3.0);
            }
            let (a, b) = (m.forward(&x).unwrap(), m.forward(&xp).unwrap());
            for i in 0..18 {
                for j in 0..18 {
                    if i.max(j) > 7 {
                        assert_eq!(a.get(&[i, j]), b.get(&[i, j]), "{v} at ({i},{j})");
                    }
                }
            }
        }
        // The dense head sees the whole grid.
        let m = build_variant::<f64>(Variant::Cnn, &cfg).unwrap();
        let x = random_input(m.input_spec, 7);
        let mut xp = x.clone();
        xp.set(&[0, 0, 0], 50.0);
        let (a, b) = (m.forward(&x).unwrap(), m.forward(&xp).unwrap());
        assert_ne!(a.get(&[17, 17]), b.get(&[17, 17]));
    }
}
