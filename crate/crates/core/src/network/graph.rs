//! The realized layer graph.
//!
//! The graph is a flat node list executed in order. `Save` nodes stash the
//! current tensor in a slot; `Residual` nodes add a stashed tensor back. The
//! backward pass walks the list in reverse, parks each shortcut gradient in
//! its slot and adds it back when it reaches the matching `Save`.

use serde::{Deserialize, Serialize};

use super::spec::{DropoutPlacement, NetworkSpec, OutputOption, ResidualMode};
use crate::layers::{
    ActivationKind, ActivationLayer, BatchNormLayer, DenseLayer, DropoutLayer, Init, Mode,
    ResidualAddNode,
};
use crate::numeric::{Matrix, Rng};
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub(crate) enum Node {
    Dense { label: String, layer: DenseLayer },
    Activation { layer: ActivationLayer },
    BatchNorm { layer: BatchNormLayer },
    Dropout { layer: DropoutLayer },
    Save { slot: usize },
    Residual { slot: usize, node: ResidualAddNode },
}

/// One available shortcut pair. Index 0 is the input-level pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct Shortcut {
    width: usize,
    save_node: usize,
    residual_node: usize,
}

/// Public view of a wired shortcut.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShortcutEntry {
    /// Nesting depth, 0 = outermost (input level).
    pub depth: usize,
    pub encode: String,
    pub decode: String,
    pub width: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub kind: String,
    pub label: String,
    /// `[in, out]` for dense layers, `[width]` for batch normalization.
    pub shape: Vec<usize>,
}

/// Layer shapes plus active wiring; two networks with equal structure have
/// the same computation graph up to parameter values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkStructure {
    pub layers: Vec<LayerShape>,
    pub wiring: Vec<ShortcutEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    /// `batch × k` target predictions (logits for classification).
    pub outputs: Matrix,
    /// `batch × m` input reconstruction for output option 2.
    pub reconstruction: Option<Matrix>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamKind {
    Weight,
    Bias,
    BatchNormScale,
    BatchNormShift,
}

/// Gradients aligned with [`Network::parameters`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGradients {
    pub tensors: Vec<Vec<f64>>,
}

impl ParamGradients {
    pub fn zeros_like(net: &Network) -> Self {
        ParamGradients {
            tensors: net
                .parameters()
                .iter()
                .map(|p| vec![0.0; p.len()])
                .collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.tensors.iter().flatten().all(|&g| g == 0.0)
    }

    pub fn flat(&self) -> Vec<f64> {
        self.tensors.iter().flatten().copied().collect()
    }
}

/// Gradients observed on both sides of one shortcut during the last backward
/// pass.
#[derive(Debug, Clone)]
pub struct ShortcutGradients {
    /// Total gradient reaching the saved encode-side tensor `x_l`.
    pub encode: Matrix,
    /// Gradient with respect to the sum `y_L = x_l + F(x_L)`.
    pub decode_sum: Matrix,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Network {
    spec: NetworkSpec,
    nodes: Vec<Node>,
    shortcuts: Vec<Shortcut>,
    #[serde(skip, default = "dropout_rng")]
    rng: Rng,
    #[serde(skip)]
    last_forward: Option<Mode>,
    #[serde(skip)]
    shortcut_grads: Vec<Option<ShortcutGradients>>,
}

fn dropout_rng() -> Rng {
    Rng::new(0)
}

fn init_for(act: ActivationKind) -> Init {
    match act {
        ActivationKind::Relu | ActivationKind::Elu { .. } => Init::He,
        ActivationKind::Tanh | ActivationKind::Linear => Init::Xavier,
    }
}

struct Builder<'a> {
    spec: &'a NetworkSpec,
    rng: Rng,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn dense(&mut self, label: String, input: usize, output: usize, act: ActivationKind) {
        let layer = DenseLayer::new(input, output, init_for(act), &mut self.rng);
        self.nodes.push(Node::Dense { label, layer });
    }

    fn post_ops(&mut self, act: ActivationKind, width: usize) {
        self.nodes.push(Node::Activation {
            layer: ActivationLayer::new(act),
        });
        if self.spec.use_batchnorm {
            self.nodes.push(Node::BatchNorm {
                layer: BatchNormLayer::new(width),
            });
        }
    }

    fn dropout(&mut self) -> Result<()> {
        let layer = DropoutLayer::new(self.spec.dropout_rate)?;
        self.nodes.push(Node::Dropout { layer });
        Ok(())
    }
}

/// Builds the nested-residual network with the shortcuts selected by
/// `spec.residual`.
///
/// Encode layers follow `nnode`; every encode layer before the code layer is
/// saved for a shortcut and dropout follows the code layer. Decode layers
/// mirror `nnode[..len-1]` back to front, each joined to its saved encode
/// layer, and a final `nfea`-wide layer is joined to the input itself. The
/// head is a dense layer of `k` (option 1) or `k + nfea` (option 2) outputs.
pub fn build_rdrn(spec: &NetworkSpec, seed: u64) -> Result<Network> {
    spec.validate()?;
    let depth = spec.nnode.len();
    let master = Rng::new(seed);
    let mut b = Builder {
        spec,
        rng: master.derive(0),
        nodes: Vec::new(),
    };
    let mut stack: Vec<(usize, usize, String)> = Vec::new();
    let mut shortcuts: Vec<Option<Shortcut>> = vec![None; spec.available_shortcuts()];
    let all_hidden = spec.dropout_placement == DropoutPlacement::AllHidden;

    b.nodes.push(Node::Save { slot: 0 });
    stack.push((0, spec.nfea, "input".to_string()));
    let mut width = spec.nfea;

    for (i, &w) in spec.nnode.iter().enumerate() {
        let act = spec.activation(i);
        b.dense(format!("encode[{i}]"), width, w, act);
        b.post_ops(act, w);
        width = w;
        if i + 1 < depth {
            if all_hidden {
                b.dropout()?;
            }
            let slot = i + 1;
            b.nodes.push(Node::Save { slot });
            stack.push((slot, w, format!("encode[{i}]")));
        } else {
            b.dropout()?;
        }
    }

    let decode_widths = spec.nnode[..depth - 1]
        .iter()
        .rev()
        .copied()
        .chain(std::iter::once(spec.nfea));
    for (step, w) in decode_widths.enumerate() {
        let act = spec.activation(depth + step);
        let (slot, saved_width, encode_label) = stack
            .pop()
            .ok_or_else(|| Error::Builder(format!("shortcut stack empty at decode step {step}")))?;
        if saved_width != w {
            return Err(Error::Builder(format!(
                "decode step {step} has width {w} but {encode_label} has width {saved_width}"
            )));
        }
        let decode_label = if slot == 0 {
            "decode[out]".to_string()
        } else {
            format!("decode[{}]", slot - 1)
        };
        b.dense(decode_label.clone(), width, w, act);
        b.post_ops(act, w);
        if all_hidden && slot != 0 {
            b.dropout()?;
        }
        let save_node = b
            .nodes
            .iter()
            .position(|n| matches!(n, Node::Save { slot: s } if *s == slot))
            .ok_or_else(|| Error::Builder(format!("no save node for slot {slot}")))?;
        let node = ResidualAddNode::new(spec.residual_option, act, w, encode_label, decode_label);
        b.nodes.push(Node::Residual { slot, node });
        shortcuts[slot] = Some(Shortcut {
            width: w,
            save_node,
            residual_node: b.nodes.len() - 1,
        });
        width = w;
    }
    if !stack.is_empty() {
        return Err(Error::Builder(format!(
            "{} shortcut(s) left unpaired",
            stack.len()
        )));
    }

    b.dense(
        "head".into(),
        width,
        spec.head_width(),
        spec.output_activation,
    );
    b.nodes.push(Node::Activation {
        layer: ActivationLayer::new(spec.output_activation),
    });

    let shortcuts = shortcuts
        .into_iter()
        .enumerate()
        .map(|(i, s)| s.ok_or_else(|| Error::Builder(format!("shortcut {i} never wired"))))
        .collect::<Result<Vec<_>>>()?;

    let mut net = Network {
        spec: spec.clone(),
        nodes: b.nodes,
        shortcuts,
        rng: master.derive(1),
        last_forward: None,
        shortcut_grads: Vec::new(),
    };
    net.set_active_shortcuts(spec.residual.active_count(spec.available_shortcuts()));
    Ok(net)
}

/// The same topology and initial parameters as [`build_rdrn`] with every
/// shortcut removed.
pub fn build_regular(spec: &NetworkSpec, seed: u64) -> Result<Network> {
    let mut spec = spec.clone();
    spec.residual = ResidualMode::Off;
    build_rdrn(&spec, seed)
}

/// Copy of `net` keeping only the `n_outermost` outermost shortcuts.
pub fn truncate_residuals(net: &Network, n_outermost: usize) -> Result<Network> {
    let total = net.shortcuts.len();
    if n_outermost > total {
        return Err(Error::InvalidArgument(format!(
            "cannot keep {n_outermost} shortcuts, network has {total}"
        )));
    }
    let mut out = net.clone();
    out.set_active_shortcuts(n_outermost);
    out.spec.residual = if n_outermost == total {
        ResidualMode::Full
    } else if n_outermost == 0 {
        ResidualMode::Off
    } else {
        ResidualMode::Outermost(n_outermost)
    };
    out.clear_caches();
    Ok(out)
}

impl Network {
    fn set_active_shortcuts(&mut self, n: usize) {
        for (i, s) in self.shortcuts.iter().enumerate() {
            if let Node::Residual { node, .. } = &mut self.nodes[s.residual_node] {
                node.enabled = i < n;
            }
        }
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn available_shortcuts(&self) -> usize {
        self.shortcuts.len()
    }

    fn residual_node(&self, shortcut: usize) -> &ResidualAddNode {
        match &self.nodes[self.shortcuts[shortcut].residual_node] {
            Node::Residual { node, .. } => node,
            _ => unreachable!("shortcut table points at a residual node"),
        }
    }

    /// Active shortcuts, outermost first.
    pub fn wiring_table(&self) -> Vec<ShortcutEntry> {
        (0..self.shortcuts.len())
            .filter_map(|i| {
                let node = self.residual_node(i);
                node.enabled.then(|| ShortcutEntry {
                    depth: i,
                    encode: node.encode_label.clone(),
                    decode: node.decode_label.clone(),
                    width: self.shortcuts[i].width,
                })
            })
            .collect()
    }

    pub fn layer_shapes(&self) -> Vec<LayerShape> {
        let mut out = Vec::new();
        for node in &self.nodes {
            match node {
                Node::Dense { label, layer } => out.push(LayerShape {
                    kind: "dense".into(),
                    label: label.clone(),
                    shape: vec![layer.input_dim(), layer.output_dim()],
                }),
                Node::BatchNorm { layer } => out.push(LayerShape {
                    kind: "batchnorm".into(),
                    label: String::new(),
                    shape: vec![layer.width()],
                }),
                Node::Residual { node, .. } => {
                    if let Some(bn) = node.batchnorm() {
                        out.push(LayerShape {
                            kind: "residual_batchnorm".into(),
                            label: node.decode_label.clone(),
                            shape: vec![bn.width()],
                        });
                    }
                }
                _ => {}
            }
        }
        out
    }

    pub fn structure(&self) -> NetworkStructure {
        NetworkStructure {
            layers: self.layer_shapes(),
            wiring: self.wiring_table(),
        }
    }

    /// Output widths of the decode dense layers in execution order.
    pub fn decode_widths(&self) -> Vec<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Dense { label, layer } if label.starts_with("decode") => {
                    Some(layer.output_dim())
                }
                _ => None,
            })
            .collect()
    }

    pub fn parameters(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for node in &self.nodes {
            match node {
                Node::Dense { layer, .. } => {
                    out.push(layer.weights().data());
                    out.push(layer.bias().data());
                }
                Node::BatchNorm { layer } => {
                    out.push(&layer.gamma);
                    out.push(&layer.beta);
                }
                Node::Residual { node, .. } => {
                    if let Some(bn) = node.batchnorm() {
                        out.push(&bn.gamma);
                        out.push(&bn.beta);
                    }
                }
                _ => {}
            }
        }
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for node in &mut self.nodes {
            match node {
                Node::Dense { layer, .. } => {
                    let (w, b) = layer.parameters_mut();
                    out.push(w);
                    out.push(b);
                }
                Node::BatchNorm { layer } => {
                    out.push(&mut layer.gamma);
                    out.push(&mut layer.beta);
                }
                Node::Residual { node, .. } => {
                    if let Some(bn) = node.batchnorm_mut() {
                        out.push(&mut bn.gamma);
                        out.push(&mut bn.beta);
                    }
                }
                _ => {}
            }
        }
        out
    }

    pub fn parameter_kinds(&self) -> Vec<ParamKind> {
        let mut out = Vec::new();
        for node in &self.nodes {
            match node {
                Node::Dense { .. } => out.extend([ParamKind::Weight, ParamKind::Bias]),
                Node::BatchNorm { .. } => {
                    out.extend([ParamKind::BatchNormScale, ParamKind::BatchNormShift])
                }
                Node::Residual { node, .. } if node.batchnorm().is_some() => {
                    out.extend([ParamKind::BatchNormScale, ParamKind::BatchNormShift])
                }
                _ => {}
            }
        }
        out
    }

    /// Trainable scalars: dense weights and biases plus batch-norm scale and
    /// shift. Shortcuts contribute nothing.
    pub fn count_parameters(&self) -> usize {
        self.parameters().iter().map(|p| p.len()).sum()
    }

    pub fn flat_parameters(&self) -> Vec<f64> {
        self.parameters()
            .iter()
            .flat_map(|p| p.iter().copied())
            .collect()
    }

    /// Zeros every dense weight and bias strictly inside shortcut `depth`,
    /// i.e. the deep branch `F` between the saved encode tensor and its
    /// residual addition.
    pub fn zero_deep_branch(&mut self, depth: usize) -> Result<()> {
        let s = self
            .shortcuts
            .get(depth)
            .ok_or_else(|| Error::InvalidArgument(format!("no shortcut at depth {depth}")))?;
        let (start, end) = (s.save_node, s.residual_node);
        for node in &mut self.nodes[start..end] {
            if let Node::Dense { layer, .. } = node {
                layer.weights_mut().data_mut().fill(0.0);
                layer.bias_mut().data_mut().fill(0.0);
            }
        }
        Ok(())
    }

    /// Re-seeds the dropout mask generator.
    pub fn reseed_dropout(&mut self, seed: u64) {
        self.rng = Rng::new(seed);
    }

    pub fn clear_caches(&mut self) {
        for node in &mut self.nodes {
            match node {
                Node::Dense { layer, .. } => layer.clear_cache(),
                Node::Activation { layer } => layer.clear_cache(),
                Node::BatchNorm { layer } => layer.clear_cache(),
                Node::Dropout { layer } => layer.clear_cache(),
                Node::Residual { node, .. } => node.clear_cache(),
                Node::Save { .. } => {}
            }
        }
        self.last_forward = None;
        self.shortcut_grads.clear();
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.spec.nfea {
            return Err(Error::shape(
                "network forward",
                x.shape(),
                (x.rows(), self.spec.nfea),
            ));
        }
        Ok(())
    }

    fn split_head(&self, head: Matrix) -> Result<Predictions> {
        match self.spec.output_option {
            OutputOption::Opt1 => Ok(Predictions {
                outputs: head,
                reconstruction: None,
            }),
            OutputOption::Opt2 => Ok(Predictions {
                outputs: head.column_slice(0, self.spec.k)?,
                reconstruction: Some(head.column_slice(self.spec.k, head.cols())?),
            }),
        }
    }

    /// Runs the whole network, caching what `backward` needs. `mode` selects
    /// batch statistics and dropout (train) or running statistics and no
    /// dropout (infer).
    pub fn forward(&mut self, x: &Matrix, mode: Mode) -> Result<Predictions> {
        self.check_input(x)?;
        self.last_forward = None;
        let mut slots: Vec<Option<Matrix>> = vec![None; self.shortcuts.len()];
        let mut h = x.clone();
        for node in &mut self.nodes {
            h = match node {
                Node::Save { slot } => {
                    slots[*slot] = Some(h.clone());
                    h
                }
                Node::Dense { layer, .. } => layer.forward(&h)?,
                Node::Activation { layer } => layer.forward(&h),
                Node::BatchNorm { layer } => layer.forward(&h, mode)?,
                Node::Dropout { layer } => layer.forward(&h, mode, &mut self.rng),
                Node::Residual { slot, node } => {
                    let saved = slots[*slot]
                        .take()
                        .ok_or_else(|| Error::Builder(format!("slot {slot} read before save")))?;
                    node.forward(&saved, &h, mode)?
                }
            };
        }
        self.last_forward = Some(mode);
        self.split_head(h)
    }

    /// Side-effect free infer-mode forward pass.
    pub fn predict(&self, x: &Matrix) -> Result<Predictions> {
        self.check_input(x)?;
        let mut slots: Vec<Option<Matrix>> = vec![None; self.shortcuts.len()];
        let mut h = x.clone();
        for node in &self.nodes {
            h = match node {
                Node::Save { slot } => {
                    slots[*slot] = Some(h.clone());
                    h
                }
                Node::Dense { layer, .. } => layer.infer(&h)?,
                Node::Activation { layer } => layer.infer(&h),
                Node::BatchNorm { layer } => layer.infer(&h)?,
                Node::Dropout { .. } => h,
                Node::Residual { slot, node } => {
                    let saved = slots[*slot]
                        .take()
                        .ok_or_else(|| Error::Builder(format!("slot {slot} read before save")))?;
                    node.infer(&saved, &h)?
                }
            };
        }
        self.split_head(h)
    }

    /// The tensor fed into the head (the decoder output) in infer mode.
    pub fn decoder_output(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let head_start = self
            .nodes
            .iter()
            .rposition(|n| matches!(n, Node::Dense { label, .. } if label == "head"))
            .ok_or_else(|| Error::Builder("no head layer".into()))?;
        let mut slots: Vec<Option<Matrix>> = vec![None; self.shortcuts.len()];
        let mut h = x.clone();
        for node in &self.nodes[..head_start] {
            h = match node {
                Node::Save { slot } => {
                    slots[*slot] = Some(h.clone());
                    h
                }
                Node::Dense { layer, .. } => layer.infer(&h)?,
                Node::Activation { layer } => layer.infer(&h),
                Node::BatchNorm { layer } => layer.infer(&h)?,
                Node::Dropout { .. } => h,
                Node::Residual { slot, node } => {
                    let saved = slots[*slot]
                        .take()
                        .ok_or_else(|| Error::Builder(format!("slot {slot} read before save")))?;
                    node.infer(&saved, &h)?
                }
            };
        }
        Ok(h)
    }

    /// Backpropagates `head_gradient` (gradient of the loss with respect to
    /// the full head output, `batch × head_width`) through the graph cached by
    /// the last train-mode [`Network::forward`].
    pub fn backward(&mut self, head_gradient: &Matrix) -> Result<ParamGradients> {
        if self.last_forward != Some(Mode::Train) {
            return Err(Error::MissingCache("network"));
        }
        let n_slots = self.shortcuts.len();
        let mut slot_grads: Vec<Option<Matrix>> = vec![None; n_slots];
        let mut at_sum: Vec<Option<Matrix>> = vec![None; n_slots];
        let mut traces: Vec<Option<ShortcutGradients>> = vec![None; n_slots];
        let mut rev: Vec<Vec<f64>> = Vec::new();
        let mut grad = head_gradient.clone();

        for node in self.nodes.iter().rev() {
            match node {
                Node::Dense { layer, .. } => {
                    let g = layer.backward(&grad)?;
                    rev.push(g.bias.into_data());
                    rev.push(g.weights.into_data());
                    grad = g.input;
                }
                Node::Activation { layer } => grad = layer.backward(&grad)?,
                Node::BatchNorm { layer } => {
                    let g = layer.backward(&grad)?;
                    rev.push(g.beta);
                    rev.push(g.gamma);
                    grad = g.input;
                }
                Node::Dropout { layer } => grad = layer.backward(&grad)?,
                Node::Residual { slot, node } => {
                    let g = node.backward(&grad)?;
                    if let Some(bn) = g.batchnorm {
                        rev.push(bn.beta);
                        rev.push(bn.gamma);
                    }
                    if g.shallow.is_some() {
                        at_sum[*slot] = Some(g.at_sum);
                    }
                    slot_grads[*slot] = g.shallow;
                    grad = g.deep;
                }
                Node::Save { slot } => {
                    if let Some(shortcut) = slot_grads[*slot].take() {
                        grad.add_assign(&shortcut)?;
                        if let Some(decode_sum) = at_sum[*slot].take() {
                            traces[*slot] = Some(ShortcutGradients {
                                encode: grad.clone(),
                                decode_sum,
                            });
                        }
                    }
                }
            }
        }
        rev.reverse();
        self.shortcut_grads = traces;
        Ok(ParamGradients { tensors: rev })
    }

    /// Per-shortcut gradients from the last backward pass (`None` for
    /// inactive shortcuts), outermost first.
    pub fn shortcut_gradients(&self) -> &[Option<ShortcutGradients>] {
        &self.shortcut_grads
    }

    /// Sign pattern of every kinked activation input from the last forward
    /// pass. A change between two parameter settings means a finite
    /// difference straddles a kink.
    pub fn kink_signature(&self) -> Vec<bool> {
        let mut sig = Vec::new();
        let mut push = |layer: &ActivationLayer| {
            if layer.kind.has_kink() {
                if let Some(z) = layer.cached_input() {
                    sig.extend(z.data().iter().map(|&v| v > 0.0));
                }
            }
        };
        for node in &self.nodes {
            match node {
                Node::Activation { layer } => push(layer),
                Node::Residual { node, .. }
                    if node.option != crate::layers::ResidualOption::None =>
                {
                    push(node.activation())
                }
                _ => {}
            }
        }
        sig
    }
}
