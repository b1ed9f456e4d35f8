//! Forward inference of the dual-branch descriptor network.
//!
//! [`forward`] produces raw logits; sigmoids for the mask and minutia map are
//! applied when a template is built ([`template_from_output`]), so loss code
//! can consume the logits directly.

pub mod graph;
pub mod ops;
pub mod weights;

use std::collections::HashMap;

use crate::align::AlignedImage;
use crate::error::{FddError, Result};
use crate::mask::{CellMask, CELLS, GRID};
use crate::posenc::{add_embedding, make_embedding, PositionalEmbedding};
use crate::scalar::Scalar;
use crate::template::{FddTemplate, Metadata, MinutiaMap};
use crate::tensor::DenseTensor;

pub use crate::template::binarize_template;
pub use graph::{build_graph, ConvSpec, Graph, Node, Op, ResidualSpec, ShapeTrace};
pub use weights::{ParamTensor, WeightStore};

use ops::{batch_norm, conv2d, deconv2d, relu_inplace, sigmoid};

/// Default foreground threshold on the sigmoid mask probability.
pub const DEFAULT_MASK_THRESHOLD: f64 = 0.5;

/// Raw network outputs for one image.
#[derive(Clone, Debug, PartialEq)]
pub struct NetOutput<T> {
    /// Texture-branch descriptor, `(c, 16, 16)`.
    pub f_t: DenseTensor<T>,
    /// Minutia-branch descriptor, `(c, 16, 16)`.
    pub f_m: DenseTensor<T>,
    /// Foreground logits, `(1, 16, 16)`.
    pub mask_logits: DenseTensor<T>,
    /// Minutia heatmap logits, `(6, 128, 128)`.
    pub minutia_logits: DenseTensor<T>,
}

impl<T: Scalar> NetOutput<T> {
    pub fn mask_probabilities(&self) -> [f64; CELLS] {
        let mut out = [0.0; CELLS];
        for (o, v) in out.iter_mut().zip(self.mask_logits.data()) {
            *o = sigmoid(v.as_f64());
        }
        out
    }

    pub fn minutia_map(&self) -> MinutiaMap<T> {
        let grid = self.minutia_logits.map(|v| T::of(sigmoid(v.as_f64())));
        MinutiaMap::new(grid).expect("sigmoid output is in [0, 1] with the head's dims")
    }
}

/// A graph bound to validated weights, ready for repeated inference.
#[derive(Clone, Debug)]
pub struct Network<T> {
    graph: Graph,
    weights: WeightStore<T>,
    posenc: PositionalEmbedding<T>,
}

impl<T: Scalar> Network<T> {
    pub fn new(c: usize, weights: WeightStore<T>) -> Result<Self> {
        if c == 0 {
            return Err(FddError::param("descriptor width c must be at least 1"));
        }
        let graph = build_graph(c);
        weights.validate(&graph)?;
        let side = graph::INPUT_SIDE / 4;
        let posenc = make_embedding(graph::ENCODER_CHANNELS, side, side)?;
        Ok(Self { graph, weights, posenc })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn c(&self) -> usize {
        self.graph.c()
    }

    pub fn forward(&self, img: &AlignedImage<T>) -> Result<NetOutput<T>> {
        self.run(img, None)
    }

    /// Like [`forward`](Self::forward), also returning the dims of every node output.
    pub fn forward_traced(&self, img: &AlignedImage<T>) -> Result<(NetOutput<T>, ShapeTrace)> {
        let mut trace = Vec::new();
        let out = self.run(img, Some(&mut trace))?;
        Ok((out, trace))
    }

    fn conv_block(
        &self,
        prefix: &str,
        spec: &ConvSpec,
        x: &DenseTensor<T>,
        transposed: bool,
    ) -> Result<DenseTensor<T>> {
        let k = spec.kernel;
        let wdims = if transposed {
            [spec.in_ch, spec.out_ch, k, k]
        } else {
            [spec.out_ch, spec.in_ch, k, k]
        };
        let w = self.weights.get(&format!("{prefix}.weight"), &wdims)?;
        let bias = if spec.bias {
            Some(self.weights.get(&format!("{prefix}.bias"), &[spec.out_ch])?)
        } else {
            None
        };
        let mut y = if transposed {
            deconv2d(x, w, bias, spec)
        } else {
            conv2d(x, w, bias, spec)
        };
        if spec.norm {
            let p = |f: &str| self.weights.get(&format!("{prefix}.bn.{f}"), &[spec.out_ch]);
            batch_norm(&mut y, p("weight")?, p("bias")?, p("running_mean")?, p("running_var")?);
        }
        if spec.relu {
            relu_inplace(&mut y);
        }
        Ok(y)
    }

    fn residual(&self, prefix: &str, spec: &ResidualSpec, x: &DenseTensor<T>) -> Result<DenseTensor<T>> {
        let h = self.conv_block(&format!("{prefix}.conv1"), &spec.conv1(), x, false)?;
        let mut y = self.conv_block(&format!("{prefix}.conv2"), &spec.conv2(), &h, false)?;
        let shortcut = match spec.downsample() {
            Some(ds) => Some(self.conv_block(&format!("{prefix}.downsample"), &ds, x, false)?),
            None => None,
        };
        let skip = shortcut.as_ref().unwrap_or(x);
        for (a, b) in y.data_mut().iter_mut().zip(skip.data()) {
            *a += *b;
        }
        relu_inplace(&mut y);
        Ok(y)
    }

    fn run(&self, img: &AlignedImage<T>, mut trace: Option<&mut ShapeTrace>) -> Result<NetOutput<T>> {
        let side = graph::INPUT_SIDE;
        let input = DenseTensor::from_parts((1, side, side), img.pixels().to_vec());

        // Remaining consumers per node, so activations are freed early.
        let mut pending: HashMap<&str, usize> = HashMap::new();
        for node in self.graph.nodes() {
            *pending.entry(node.input.as_str()).or_default() += 1;
        }
        let keep = [
            graph::outputs::TEXTURE_DESCRIPTOR,
            graph::outputs::MINUTIA_DESCRIPTOR,
            graph::outputs::MASK,
            graph::outputs::MINUTIA_MAP,
        ];
        let mut values: HashMap<&str, DenseTensor<T>> = HashMap::new();
        values.insert(Graph::INPUT, input);

        for node in self.graph.nodes() {
            let x = &values[node.input.as_str()];
            let y = match &node.op {
                Op::Conv(spec) => self.conv_block(&node.name, spec, x, false)?,
                Op::Deconv(spec) => self.conv_block(&node.name, spec, x, true)?,
                Op::Residual(spec) => self.residual(&node.name, spec, x)?,
                Op::AddPositional { .. } => add_embedding(x, &self.posenc)?,
            };
            if let Some(t) = trace.as_deref_mut() {
                t.push((node.name.clone(), y.dims()));
            }
            let left = pending.get_mut(node.input.as_str()).expect("counted above");
            *left -= 1;
            if *left == 0 {
                values.remove(node.input.as_str());
            }
            values.insert(node.name.as_str(), y);
        }

        let mut take = |name: &str| values.remove(name).expect("graph output present");
        let out = NetOutput {
            f_t: take(keep[0]),
            f_m: take(keep[1]),
            mask_logits: take(keep[2]),
            minutia_logits: take(keep[3]),
        };
        for (name, t) in [
            ("f_t", &out.f_t),
            ("f_m", &out.f_m),
            ("mask logits", &out.mask_logits),
            ("minutia logits", &out.minutia_logits),
        ] {
            if !t.all_finite() {
                return Err(FddError::Input(format!("network produced non-finite {name}")));
            }
        }
        Ok(out)
    }
}

/// One-shot inference: validates `weights` against the graph for `c` and runs it.
pub fn forward<T: Scalar>(img: &AlignedImage<T>, weights: &WeightStore<T>, c: usize) -> Result<NetOutput<T>> {
    Network::new(c, weights.clone())?.forward(img)
}

/// Thresholds the mask, concatenates `f_t ⊕ f_m` and masks the result.
/// An empty mask is not an error; check [`FddTemplate::has_empty_mask`].
pub fn template_from_output<T: Scalar>(out: &NetOutput<T>, mask_threshold: f64) -> Result<FddTemplate<T>> {
    if !(mask_threshold > 0.0 && mask_threshold < 1.0) {
        return Err(FddError::param(format!(
            "mask threshold must lie in (0, 1), got {mask_threshold}"
        )));
    }
    let c = out.f_t.channels();
    for (name, t, ch) in [
        ("f_t", &out.f_t, c),
        ("f_m", &out.f_m, c),
        ("mask", &out.mask_logits, 1),
    ] {
        if t.dims() != (ch, GRID, GRID) {
            return Err(FddError::shape(format!("{name} has dims {:?}", t.dims())));
        }
    }
    let probs = out.mask_probabilities();
    let mask = CellMask::from_fn(|r, col| probs[r * GRID + col] >= mask_threshold);
    let desc = out.f_t.concat_channels(&out.f_m)?;
    FddTemplate::from_unmasked(c, &desc, mask, Metadata::new())
}

impl<T: Scalar> Network<T> {
    pub fn extract_template(&self, img: &AlignedImage<T>, mask_threshold: f64) -> Result<FddTemplate<T>> {
        template_from_output(&self.forward(img)?, mask_threshold)
    }
}

pub fn extract_template<T: Scalar>(
    img: &AlignedImage<T>,
    weights: &WeightStore<T>,
    c: usize,
    mask_threshold: f64,
) -> Result<FddTemplate<T>> {
    template_from_output(&forward(img, weights, c)?, mask_threshold)
}
