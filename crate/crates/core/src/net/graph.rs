//! Static description of the dual-branch descriptor network.
//!
//! ```text
//! input 1×256×256
//! encoder.conv1        7×7/2 → 64          /2
//! encoder.layer1.0-2   residual → 64       /2
//! encoder.layer2.0-3   residual → 128      /4   (first block stride 2)
//! encoder.posenc       + 2-D sinusoidal embedding
//! {texture,minutia}.layer3.0-5  → 256      /8   (first block stride 2)
//! {texture,minutia}.layer4.0-2  → 512      /16  (first block stride 2)
//! minutia_decoder.conv0-5  3×3 → 128 on minutia.layer3   /8
//! minutia_decoder.deconv0-1 4×4/2 → 64                   /4, /2
//! minutia_decoder.out  3×3 → 6 (linear)                  /2
//! mask_decoder.conv0   3×3 → 512 on texture.layer4, .out 1×1 → 1 (linear)
//! {texture,minutia}_descriptor.conv0 3×3 → 512, .out 1×1 → c (linear)
//! ```
//!
//! No max pooling follows the stem, so descriptors sit at 1/16 of the input.
//! Every non-final convolution is conv → batch norm → ReLU without bias;
//! final projections carry a bias and no activation.

/// Side of the network input the shape table refers to.
pub const INPUT_SIDE: usize = 256;
/// Channels of the shared encoder output, where the positional embedding is added.
pub const ENCODER_CHANNELS: usize = 128;
/// Channels of the minutia map head.
pub const MINUTIA_CHANNELS: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    /// Learned bias; only on final projections.
    pub bias: bool,
    /// Batch norm after the convolution.
    pub norm: bool,
    pub relu: bool,
}

impl ConvSpec {
    fn hidden(in_ch: usize, out_ch: usize, kernel: usize, stride: usize) -> Self {
        Self {
            in_ch,
            out_ch,
            kernel,
            stride,
            padding: kernel / 2,
            bias: false,
            norm: true,
            relu: true,
        }
    }

    fn projection(in_ch: usize, out_ch: usize, kernel: usize) -> Self {
        Self {
            in_ch,
            out_ch,
            kernel,
            stride: 1,
            padding: kernel / 2,
            bias: true,
            norm: false,
            relu: false,
        }
    }

    /// Output side for a square input of side `side`.
    pub fn conv_out(&self, side: usize) -> usize {
        (side + 2 * self.padding - self.kernel) / self.stride + 1
    }

    /// Output side of the transposed convolution.
    pub fn deconv_out(&self, side: usize) -> usize {
        (side - 1) * self.stride + self.kernel - 2 * self.padding
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ResidualSpec {
    pub in_ch: usize,
    pub out_ch: usize,
    pub stride: usize,
}

impl ResidualSpec {
    pub fn conv1(&self) -> ConvSpec {
        ConvSpec::hidden(self.in_ch, self.out_ch, 3, self.stride)
    }

    pub fn conv2(&self) -> ConvSpec {
        ConvSpec {
            relu: false,
            ..ConvSpec::hidden(self.out_ch, self.out_ch, 3, 1)
        }
    }

    /// 1×1 projection shortcut, present when the block changes shape.
    pub fn downsample(&self) -> Option<ConvSpec> {
        (self.stride != 1 || self.in_ch != self.out_ch).then(|| ConvSpec {
            padding: 0,
            relu: false,
            ..ConvSpec::hidden(self.in_ch, self.out_ch, 1, self.stride)
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    Conv(ConvSpec),
    Deconv(ConvSpec),
    Residual(ResidualSpec),
    AddPositional { channels: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Node {
    pub name: String,
    pub op: Op,
    /// Producer node, or [`Graph::INPUT`].
    pub input: String,
}

/// Node names with their `(channels, height, width)` outputs, in execution order.
pub type ShapeTrace = Vec<(String, (usize, usize, usize))>;

/// Topologically ordered inference graph for a given descriptor width `c`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    c: usize,
    nodes: Vec<Node>,
}

/// Node names whose outputs form the network result.
pub mod outputs {
    pub const TEXTURE_DESCRIPTOR: &str = "texture_descriptor.out";
    pub const MINUTIA_DESCRIPTOR: &str = "minutia_descriptor.out";
    pub const MASK: &str = "mask_decoder.out";
    pub const MINUTIA_MAP: &str = "minutia_decoder.out";
}

struct Builder {
    nodes: Vec<Node>,
}

impl Builder {
    fn push(&mut self, name: String, op: Op, input: &str) -> String {
        self.nodes.push(Node {
            name: name.clone(),
            op,
            input: input.to_string(),
        });
        name
    }

    fn stage(
        &mut self,
        prefix: &str,
        blocks: usize,
        in_ch: usize,
        out_ch: usize,
        stride: usize,
        input: &str,
    ) -> String {
        let mut last = input.to_string();
        for i in 0..blocks {
            let spec = if i == 0 {
                ResidualSpec { in_ch, out_ch, stride }
            } else {
                ResidualSpec {
                    in_ch: out_ch,
                    out_ch,
                    stride: 1,
                }
            };
            last = self.push(format!("{prefix}.{i}"), Op::Residual(spec), &last);
        }
        last
    }
}

/// Builds the graph. `c` is the per-branch descriptor width.
pub fn build_graph(c: usize) -> Graph {
    assert!(c >= 1, "descriptor width must be at least 1");
    let mut b = Builder { nodes: Vec::new() };

    let stem = b.push(
        "encoder.conv1".into(),
        Op::Conv(ConvSpec::hidden(1, 64, 7, 2)),
        Graph::INPUT,
    );
    let l1 = b.stage("encoder.layer1", 3, 64, 64, 1, &stem);
    let l2 = b.stage("encoder.layer2", 4, 64, ENCODER_CHANNELS, 2, &l1);
    let shared = b.push(
        "encoder.posenc".into(),
        Op::AddPositional {
            channels: ENCODER_CHANNELS,
        },
        &l2,
    );

    let mut branch_tops = Vec::new();
    let mut minutia_mid = String::new();
    for branch in ["texture", "minutia"] {
        let l3 = b.stage(&format!("{branch}.layer3"), 6, ENCODER_CHANNELS, 256, 2, &shared);
        let l4 = b.stage(&format!("{branch}.layer4"), 3, 256, 512, 2, &l3);
        if branch == "minutia" {
            minutia_mid = l3;
        }
        branch_tops.push(l4);
    }
    let (texture_top, minutia_top) = (branch_tops[0].clone(), branch_tops[1].clone());

    let mut last = minutia_mid;
    for i in 0..6 {
        let in_ch = if i == 0 { 256 } else { 128 };
        last = b.push(
            format!("minutia_decoder.conv{i}"),
            Op::Conv(ConvSpec::hidden(in_ch, 128, 3, 1)),
            &last,
        );
    }
    for i in 0..2 {
        let in_ch = if i == 0 { 128 } else { 64 };
        last = b.push(
            format!("minutia_decoder.deconv{i}"),
            Op::Deconv(ConvSpec {
                padding: 1,
                ..ConvSpec::hidden(in_ch, 64, 4, 2)
            }),
            &last,
        );
    }
    b.push(
        outputs::MINUTIA_MAP.into(),
        Op::Conv(ConvSpec::projection(64, MINUTIA_CHANNELS, 3)),
        &last,
    );

    let mask_hidden = b.push(
        "mask_decoder.conv0".into(),
        Op::Conv(ConvSpec::hidden(512, 512, 3, 1)),
        &texture_top,
    );
    b.push(
        outputs::MASK.into(),
        Op::Conv(ConvSpec::projection(512, 1, 1)),
        &mask_hidden,
    );

    for (head, top) in [
        ("texture_descriptor", &texture_top),
        ("minutia_descriptor", &minutia_top),
    ] {
        let hidden = b.push(format!("{head}.conv0"), Op::Conv(ConvSpec::hidden(512, 512, 3, 1)), top);
        b.push(
            format!("{head}.out"),
            Op::Conv(ConvSpec::projection(512, c, 1)),
            &hidden,
        );
    }

    Graph { c, nodes: b.nodes }
}

fn conv_params(prefix: &str, spec: &ConvSpec, transposed: bool, out: &mut Vec<(String, Vec<usize>)>) {
    let k = spec.kernel;
    let dims = if transposed {
        vec![spec.in_ch, spec.out_ch, k, k]
    } else {
        vec![spec.out_ch, spec.in_ch, k, k]
    };
    out.push((format!("{prefix}.weight"), dims));
    if spec.bias {
        out.push((format!("{prefix}.bias"), vec![spec.out_ch]));
    }
    if spec.norm {
        for field in BN_FIELDS {
            out.push((format!("{prefix}.bn.{field}"), vec![spec.out_ch]));
        }
    }
}

/// Batch-norm parameter suffixes, in manifest order.
pub const BN_FIELDS: [&str; 4] = ["weight", "bias", "running_mean", "running_var"];

impl Graph {
    pub const INPUT: &'static str = "input";

    pub fn c(&self) -> usize {
        self.c
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Every parameter tensor the graph reads, with its exact dims, in
    /// execution order.
    pub fn manifest(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for node in &self.nodes {
            match &node.op {
                Op::Conv(spec) => conv_params(&node.name, spec, false, &mut out),
                Op::Deconv(spec) => conv_params(&node.name, spec, true, &mut out),
                Op::Residual(spec) => {
                    conv_params(&format!("{}.conv1", node.name), &spec.conv1(), false, &mut out);
                    conv_params(&format!("{}.conv2", node.name), &spec.conv2(), false, &mut out);
                    if let Some(ds) = spec.downsample() {
                        conv_params(&format!("{}.downsample", node.name), &ds, false, &mut out);
                    }
                }
                Op::AddPositional { .. } => {}
            }
        }
        out
    }

    /// Output dims of every node for a square single-channel input.
    pub fn expected_shapes(&self, side: usize) -> ShapeTrace {
        let mut shapes: Vec<(String, (usize, usize, usize))> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let (in_ch, in_side, _) = if node.input == Self::INPUT {
                (1, side, side)
            } else {
                shapes
                    .iter()
                    .find(|(n, _)| *n == node.input)
                    .map(|(_, d)| *d)
                    .expect("graph is topologically ordered")
            };
            let dims = match &node.op {
                Op::Conv(s) => (s.out_ch, s.conv_out(in_side), s.conv_out(in_side)),
                Op::Deconv(s) => (s.out_ch, s.deconv_out(in_side), s.deconv_out(in_side)),
                Op::Residual(s) => {
                    let o = s.conv1().conv_out(in_side);
                    (s.out_ch, o, o)
                }
                Op::AddPositional { .. } => (in_ch, in_side, in_side),
            };
            shapes.push((node.name.clone(), dims));
        }
        shapes
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn descriptor_heads_land_on_16x16() {
        let g = build_graph(6);
        let shapes = g.expected_shapes(INPUT_SIDE);
        let get = |n: &str| shapes.iter().find(|(k, _)| k == n).unwrap().1;
        assert_eq!(get(outputs::TEXTURE_DESCRIPTOR), (6, 16, 16));
        assert_eq!(get(outputs::MINUTIA_DESCRIPTOR), (6, 16, 16));
        assert_eq!(get(outputs::MASK), (1, 16, 16));
        assert_eq!(get(outputs::MINUTIA_MAP), (6, 128, 128));
        assert_eq!(get("encoder.posenc"), (128, 64, 64));
    }

    #[test]
    fn manifest_names_are_unique() {
        let m = build_graph(3).manifest();
        let mut names: Vec<_> = m.iter().map(|(n, _)| n.clone()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), m.len());
        assert!(m
            .iter()
            .any(|(n, d)| n == "encoder.conv1.weight" && *d == vec![64, 1, 7, 7]));
        assert!(m
            .iter()
            .any(|(n, d)| n == "texture.layer3.0.downsample.weight" && *d == vec![256, 128, 1, 1]));
        assert!(m
            .iter()
            .any(|(n, d)| n == "minutia_decoder.deconv0.weight" && *d == vec![128, 64, 4, 4]));
        assert!(m
            .iter()
            .any(|(n, d)| n == "texture_descriptor.out.bias" && *d == vec![3]));
        assert!(!m.iter().any(|(n, _)| n.starts_with("encoder.layer1.0.downsample")));
    }
}
