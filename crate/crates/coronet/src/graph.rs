//! Layer DAG with cached-activation forward passes and reverse-mode
//! backpropagation.
//!
//! Nodes are stored in topological order (an edge may only point at an
//! earlier node), so the forward pass is a single sweep and the backward pass
//! visits each node exactly once in reverse, accumulating output gradients at
//! fan-out points (residual skips).

use crate::error::{Error, Result};
use crate::layers::norm::{BatchStats, MovingUpdate};
use crate::layers::{self, LayerSpec, ParamTensor};
use crate::rng;
use crate::tensor::Tensor;

pub type NodeId = usize;

#[derive(Debug, Clone)]
pub struct Node {
    pub name: String,
    pub spec: LayerSpec,
    /// Predecessor nodes; empty means the node reads the graph input.
    pub inputs: Vec<NodeId>,
    /// Cleared when the node is frozen for fine-tuning. A frozen batch-norm
    /// layer also normalizes with its moving statistics during training.
    pub trainable: bool,
}

/// Declarative layer sequence with skip edges.
#[derive(Debug, Clone)]
pub struct Graph {
    nodes: Vec<Node>,
    /// Per-sample input extents (H, W, C for image networks).
    input_dims: Vec<usize>,
}

impl Graph {
    pub fn new(input_dims: Vec<usize>) -> Self {
        Graph {
            nodes: Vec::new(),
            input_dims,
        }
    }

    pub fn add(&mut self, name: &str, spec: LayerSpec, inputs: &[NodeId]) -> Result<NodeId> {
        spec.validate()?;
        let id = self.nodes.len();
        for &i in inputs {
            if i >= id {
                return Err(Error::input(format!(
                    "node {name} references node {i}, which is not an earlier node"
                )));
            }
        }
        if self.nodes.iter().any(|n| n.name == name) {
            return Err(Error::input(format!("duplicate node name {name}")));
        }
        self.nodes.push(Node {
            name: name.to_string(),
            spec,
            inputs: inputs.to_vec(),
            trainable: true,
        });
        Ok(id)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn input_dims(&self) -> &[usize] {
        &self.input_dims
    }

    pub fn output_id(&self) -> NodeId {
        self.nodes.len() - 1
    }

    pub fn node_id(&self, name: &str) -> Option<NodeId> {
        self.nodes.iter().position(|n| n.name == name)
    }

    pub fn set_trainable(&mut self, id: NodeId, trainable: bool) {
        self.nodes[id].trainable = trainable;
    }

    /// Replace a node's spec in place (used when swapping the classifier head).
    pub fn replace_spec(&mut self, id: NodeId, spec: LayerSpec) -> Result<()> {
        spec.validate()?;
        self.nodes[id].spec = spec;
        Ok(())
    }

    /// Output extents of every node for a batch of `n` samples.
    pub fn infer_shapes(&self, batch: usize) -> Result<Vec<Vec<usize>>> {
        let mut input = vec![batch];
        input.extend_from_slice(&self.input_dims);
        let mut shapes: Vec<Vec<usize>> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let dims = if node.inputs.is_empty() {
                node.spec.output_dims(&[&input])
            } else {
                let ins: Vec<&[usize]> =
                    node.inputs.iter().map(|&i| shapes[i].as_slice()).collect();
                node.spec.output_dims(&ins)
            };
            shapes.push(dims.map_err(|e| {
                Error::Shape(format!("at node {}: {e}", node.name))
            })?);
        }
        Ok(shapes)
    }
}

/// Per-layer named weights, index-aligned with the graph's nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterStore {
    params: Vec<Vec<ParamTensor>>,
}

impl ParameterStore {
    /// Seeded initialization in node order; the same (graph, seed) pair always
    /// produces identical values.
    pub fn init(graph: &Graph, seed: u64) -> Self {
        let mut rng = rng::rng_from_seed(rng::derive_seed(seed, 0x696e_6974, 0, 0));
        let params = graph
            .nodes()
            .iter()
            .map(|n| n.spec.init_params(&mut rng))
            .collect();
        ParameterStore { params }
    }

    pub fn node_params(&self, id: NodeId) -> &[ParamTensor] {
        &self.params[id]
    }

    pub fn node_params_mut(&mut self, id: NodeId) -> &mut Vec<ParamTensor> {
        &mut self.params[id]
    }

    pub fn get(&self, id: NodeId, name: &str) -> Option<&Tensor> {
        self.params[id]
            .iter()
            .find(|p| p.name == name)
            .map(|p| &p.values)
    }

    fn get_required(&self, id: NodeId, name: &str) -> &Tensor {
        self.get(id, name).expect("parameter present by layout")
    }

    pub fn set(&mut self, id: NodeId, name: &str, values: Tensor) {
        if let Some(p) = self.params[id].iter_mut().find(|p| p.name == name) {
            p.values = values;
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.params.len()
    }

    /// Re-initialize one node's parameters from a dedicated seed.
    pub fn reinit_node(&mut self, graph: &Graph, id: NodeId, seed: u64) {
        let mut rng = rng::rng_from_seed(seed);
        self.params[id] = graph.nodes()[id].spec.init_params(&mut rng);
    }
}

/// Forward/inference mode. Train mode carries the dropout seed for the pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    Train { dropout_seed: u64 },
    Infer,
}

impl Mode {
    fn is_train(&self) -> bool {
        matches!(self, Mode::Train { .. })
    }
}

/// Side data a layer's backward pass needs beyond the cached activations.
#[derive(Debug, Clone)]
pub enum LayerAux {
    None,
    /// Depthwise output of a separable convolution.
    SeparableMid(Tensor),
    /// Batch statistics used to normalize (train mode only).
    BatchNorm(BatchStats),
    /// Flat input index of each window winner.
    MaxPool(Vec<usize>),
    /// Multiplier applied per element (train mode only).
    Dropout(Vec<f32>),
}

/// Cached activations of one forward pass; consumed by `backward`.
pub struct ForwardTrace {
    pub outputs: Vec<Tensor>,
    aux: Vec<LayerAux>,
    /// Pending moving-statistics updates from train-mode batch norm,
    /// index-aligned with nodes. The training loop applies them.
    pub bn_updates: Vec<Option<MovingUpdate>>,
    batch: usize,
}

impl ForwardTrace {
    pub fn output(&self) -> &Tensor {
        self.outputs.last().expect("graph has nodes")
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

/// Gradients for every parameter tensor, aligned with the store layout.
/// Entries are `None` for non-trainable parameters.
pub struct Gradients {
    pub by_node: Vec<Vec<Option<Tensor>>>,
    /// Gradient w.r.t. the graph input.
    pub input: Option<Tensor>,
}

/// Run the graph on a batch. Pure: train mode reports batch-norm moving
/// updates in the trace instead of mutating the store.
pub fn forward(
    graph: &Graph,
    store: &ParameterStore,
    input: &Tensor,
    mode: Mode,
) -> Result<ForwardTrace> {
    if input.dims().len() != graph.input_dims().len() + 1
        || input.dims()[1..] != *graph.input_dims()
    {
        return Err(Error::input(format!(
            "graph expects input of shape [N, {}], got {}",
            graph
                .input_dims()
                .iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join(", "),
            input.shape()
        )));
    }
    let batch = input.dims()[0];
    let mut outputs: Vec<Tensor> = Vec::with_capacity(graph.nodes().len());
    let mut aux: Vec<LayerAux> = Vec::with_capacity(graph.nodes().len());
    let mut bn_updates: Vec<Option<MovingUpdate>> = vec![None; graph.nodes().len()];

    for (id, node) in graph.nodes().iter().enumerate() {
        let input_of = |slot: usize| -> &Tensor {
            if node.inputs.is_empty() {
                input
            } else {
                &outputs[node.inputs[slot]]
            }
        };
        let x = input_of(0);
        let (out, a) = match &node.spec {
            LayerSpec::Conv2D(c) => {
                let kernel = store.get_required(id, "kernel");
                let bias = c.use_bias.then(|| store.get_required(id, "bias"));
                (
                    layers::conv::conv2d_forward(x, c, kernel, bias)
                        .map_err(|e| amend(&node.name, e))?,
                    LayerAux::None,
                )
            }
            LayerSpec::SeparableConv2D(c) => {
                let dk = store.get_required(id, "depthwise_kernel");
                let pk = store.get_required(id, "pointwise_kernel");
                let bias = c.use_bias.then(|| store.get_required(id, "bias"));
                let (out, mid) = layers::conv::separable_forward(x, c, dk, pk, bias)
                    .map_err(|e| amend(&node.name, e))?;
                (out, LayerAux::SeparableMid(mid))
            }
            LayerSpec::BatchNorm(b) => {
                let gamma = store.get_required(id, "gamma");
                let beta = store.get_required(id, "beta");
                let mm = store.get_required(id, "moving_mean");
                let mv = store.get_required(id, "moving_variance");
                if mode.is_train() && node.trainable {
                    let (out, stats, update) =
                        layers::norm::batchnorm_forward_train(x, b, gamma, beta, mm, mv)
                            .map_err(|e| amend(&node.name, e))?;
                    bn_updates[id] = Some(update);
                    (out, LayerAux::BatchNorm(stats))
                } else {
                    (
                        layers::norm::batchnorm_forward_infer(x, b, gamma, beta, mm, mv)
                            .map_err(|e| amend(&node.name, e))?,
                        LayerAux::None,
                    )
                }
            }
            LayerSpec::ReLU => (layers::activation::relu(x), LayerAux::None),
            LayerSpec::MaxPool2D(p) => {
                let (out, argmax) =
                    layers::pool::maxpool2d_forward(x, p).map_err(|e| amend(&node.name, e))?;
                (out, LayerAux::MaxPool(argmax))
            }
            LayerSpec::GlobalAvgPool2D => (
                layers::pool::global_avg_pool_forward(x).map_err(|e| amend(&node.name, e))?,
                LayerAux::None,
            ),
            LayerSpec::Dense(d) => {
                let w = store.get_required(id, "weight");
                let bias = d.use_bias.then(|| store.get_required(id, "bias"));
                (
                    layers::dense::dense_forward(x, d, w, bias)
                        .map_err(|e| amend(&node.name, e))?,
                    LayerAux::None,
                )
            }
            LayerSpec::Dropout(d) => match mode {
                Mode::Train { dropout_seed } => {
                    let seed = rng::derive_seed(dropout_seed, 0x64726f70, id as u64, 0);
                    let (out, mask) = layers::dropout::dropout_forward_train(x, d, seed);
                    (out, LayerAux::Dropout(mask))
                }
                Mode::Infer => (x.clone(), LayerAux::None),
            },
            LayerSpec::Flatten => {
                let n = x.dims()[0];
                let features = x.numel() / n.max(1);
                (
                    x.reshape([n, features]).map_err(|e| amend(&node.name, e))?,
                    LayerAux::None,
                )
            }
            LayerSpec::ResidualAdd => {
                if node.inputs.len() != 2 {
                    return Err(Error::shape(format!(
                        "residual add node {} needs two inputs",
                        node.name
                    )));
                }
                (
                    layers::residual_add(input_of(0), input_of(1))
                        .map_err(|e| amend(&node.name, e))?,
                    LayerAux::None,
                )
            }
            LayerSpec::Softmax => (
                layers::activation::softmax(x).map_err(|e| amend(&node.name, e))?,
                LayerAux::None,
            ),
        };
        outputs.push(out);
        aux.push(a);
    }
    Ok(ForwardTrace {
        outputs,
        aux,
        bn_updates,
        batch,
    })
}

fn amend(name: &str, e: Error) -> Error {
    match e {
        Error::Shape(m) => Error::Shape(format!("at node {name}: {m}")),
        Error::Input(m) => Error::Input(format!("at node {name}: {m}")),
        other => other,
    }
}

/// Reverse sweep: propagate `grad_output` (the gradient at the last node's
/// output) back through every node, returning parameter gradients.
///
/// Non-trainable parameters and parameters of frozen nodes get `None`.
pub fn backward(
    graph: &Graph,
    store: &ParameterStore,
    input: &Tensor,
    trace: &ForwardTrace,
    grad_output: Tensor,
) -> Result<Gradients> {
    if trace.outputs.len() != graph.nodes().len() {
        return Err(Error::State(
            "forward trace does not match the graph".to_string(),
        ));
    }
    if grad_output.shape() != trace.output().shape() {
        return Err(Error::shape(format!(
            "gradient shape {} does not match output shape {}",
            grad_output.shape(),
            trace.output().shape()
        )));
    }
    let n_nodes = graph.nodes().len();
    let mut grad_at: Vec<Option<Tensor>> = vec![None; n_nodes];
    grad_at[n_nodes - 1] = Some(grad_output);
    let mut grad_input_acc: Option<Tensor> = None;
    let mut by_node: Vec<Vec<Option<Tensor>>> = graph
        .nodes()
        .iter()
        .map(|n| vec![None; n.spec.param_layout().len()])
        .collect();

    for id in (0..n_nodes).rev() {
        let node = &graph.nodes()[id];
        let g = match grad_at[id].take() {
            Some(g) => g,
            None => continue, // no consumer contributed gradient
        };
        let x = if node.inputs.is_empty() {
            input
        } else {
            &trace.outputs[node.inputs[0]]
        };
        let wants_params = node.trainable;
        let push_input = |grad_at: &mut Vec<Option<Tensor>>,
                              grad_input_acc: &mut Option<Tensor>,
                              slot: usize,
                              grad: Tensor|
         -> Result<()> {
            if node.inputs.is_empty() {
                *grad_input_acc = Some(match grad_input_acc.take() {
                    Some(acc) => acc.add(&grad)?,
                    None => grad,
                });
            } else {
                let target = node.inputs[slot];
                grad_at[target] = Some(match grad_at[target].take() {
                    Some(acc) => acc.add(&grad)?,
                    None => grad,
                });
            }
            Ok(())
        };

        match &node.spec {
            LayerSpec::Conv2D(c) => {
                let kernel = store.get_required(id, "kernel");
                let (gi, gk, gb) = layers::conv::conv2d_backward(x, c, kernel, &g)?;
                if wants_params {
                    by_node[id][0] = Some(gk);
                    if c.use_bias {
                        by_node[id][1] = gb;
                    }
                }
                push_input(&mut grad_at, &mut grad_input_acc, 0, gi)?;
            }
            LayerSpec::SeparableConv2D(c) => {
                let dk = store.get_required(id, "depthwise_kernel");
                let pk = store.get_required(id, "pointwise_kernel");
                let mid = match &trace.aux[id] {
                    LayerAux::SeparableMid(t) => t,
                    _ => return Err(Error::State("missing separable trace".to_string())),
                };
                let (gi, gdk, gpk, gb) =
                    layers::conv::separable_backward(x, c, dk, pk, mid, &g)?;
                if wants_params {
                    by_node[id][0] = Some(gdk);
                    by_node[id][1] = Some(gpk);
                    if c.use_bias {
                        by_node[id][2] = gb;
                    }
                }
                push_input(&mut grad_at, &mut grad_input_acc, 0, gi)?;
            }
            LayerSpec::BatchNorm(b) => {
                let gamma = store.get_required(id, "gamma");
                let (gi, ggamma, gbeta) = match &trace.aux[id] {
                    LayerAux::BatchNorm(stats) => {
                        layers::norm::batchnorm_backward_train(x, b, gamma, stats, &g)?
                    }
                    _ => {
                        let mm = store.get_required(id, "moving_mean");
                        let mv = store.get_required(id, "moving_variance");
                        layers::norm::batchnorm_backward_infer(x, b, gamma, mm, mv, &g)?
                    }
                };
                if wants_params {
                    by_node[id][0] = Some(ggamma);
                    by_node[id][1] = Some(gbeta);
                    // moving statistics never receive gradients
                }
                push_input(&mut grad_at, &mut grad_input_acc, 0, gi)?;
            }
            LayerSpec::ReLU => {
                let gi = layers::activation::relu_backward(x, &g);
                push_input(&mut grad_at, &mut grad_input_acc, 0, gi)?;
            }
            LayerSpec::MaxPool2D(_) => {
                let argmax = match &trace.aux[id] {
                    LayerAux::MaxPool(a) => a,
                    _ => return Err(Error::State("missing pool trace".to_string())),
                };
                let gi = layers::pool::maxpool2d_backward(x.dims(), argmax, &g);
                push_input(&mut grad_at, &mut grad_input_acc, 0, gi)?;
            }
            LayerSpec::GlobalAvgPool2D => {
                let gi = layers::pool::global_avg_pool_backward(x.dims(), &g);
                push_input(&mut grad_at, &mut grad_input_acc, 0, gi)?;
            }
            LayerSpec::Dense(d) => {
                let w = store.get_required(id, "weight");
                let (gi, gw, gb) = layers::dense::dense_backward(x, d, w, &g)?;
                if wants_params {
                    by_node[id][0] = Some(gw);
                    if d.use_bias {
                        by_node[id][1] = gb;
                    }
                }
                push_input(&mut grad_at, &mut grad_input_acc, 0, gi)?;
            }
            LayerSpec::Dropout(_) => {
                let gi = match &trace.aux[id] {
                    LayerAux::Dropout(mask) => layers::dropout::dropout_backward(mask, &g),
                    _ => g.clone(), // inference: identity
                };
                push_input(&mut grad_at, &mut grad_input_acc, 0, gi)?;
            }
            LayerSpec::Flatten => {
                let gi = g.reshape(x.dims().to_vec())?;
                push_input(&mut grad_at, &mut grad_input_acc, 0, gi)?;
            }
            LayerSpec::ResidualAdd => {
                push_input(&mut grad_at, &mut grad_input_acc, 0, g.clone())?;
                push_input(&mut grad_at, &mut grad_input_acc, 1, g)?;
            }
            LayerSpec::Softmax => {
                let gi = layers::activation::softmax_backward(&trace.outputs[id], &g);
                push_input(&mut grad_at, &mut grad_input_acc, 0, gi)?;
            }
        }
    }
    Ok(Gradients {
        by_node,
        input: grad_input_acc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::{Dense, Dropout};

    fn tiny_graph() -> (Graph, ParameterStore) {
        let mut g = Graph::new(vec![3]);
        let d = g
            .add(
                "dense",
                LayerSpec::Dense(Dense {
                    in_features: 3,
                    out_features: 3,
                    use_bias: true,
                }),
                &[],
            )
            .unwrap();
        let r = g.add("act", LayerSpec::ReLU, &[d]).unwrap();
        let _ = g.add("skip", LayerSpec::ResidualAdd, &[r, d]).unwrap();
        let store = ParameterStore::init(&g, 3);
        (g, store)
    }

    #[test]
    fn forward_caches_every_node() {
        let (g, store) = tiny_graph();
        let x = Tensor::from_values([2, 3], vec![1., -1., 0.5, 0., 2., -2.]).unwrap();
        let trace = forward(&g, &store, &x, Mode::Infer).unwrap();
        assert_eq!(trace.outputs.len(), 3);
        assert_eq!(trace.output().dims(), &[2, 3]);
    }

    #[test]
    fn residual_fanout_accumulates_gradient() {
        // skip = relu(dense(x)) + dense(x): d skip / d dense-out = relu' + 1
        let (g, mut store) = tiny_graph();
        store.set(0, "weight", Tensor::identity(3));
        let x = Tensor::from_values([1, 3], vec![2.0, -3.0, 4.0]).unwrap();
        let trace = forward(&g, &store, &x, Mode::Infer).unwrap();
        let seed = Tensor::full([1, 3], 1.0);
        let grads = backward(&g, &store, &x, &trace, seed).unwrap();
        let gi = grads.input.unwrap();
        // positive lanes get 2 (relu passes + skip), negative lanes get 1
        assert_eq!(gi.data(), &[2.0, 1.0, 2.0]);
    }

    #[test]
    fn frozen_node_gets_no_parameter_gradients() {
        let (mut g, store) = tiny_graph();
        g.set_trainable(0, false);
        let x = Tensor::from_values([1, 3], vec![1.0, 2.0, 3.0]).unwrap();
        let trace = forward(&g, &store, &x, Mode::Infer).unwrap();
        let grads = backward(&g, &store, &x, &trace, Tensor::full([1, 3], 1.0)).unwrap();
        assert!(grads.by_node[0].iter().all(|g| g.is_none()));
    }

    #[test]
    fn bad_gradient_shape_is_rejected() {
        let (g, store) = tiny_graph();
        let x = Tensor::from_values([1, 3], vec![1.0, 2.0, 3.0]).unwrap();
        let trace = forward(&g, &store, &x, Mode::Infer).unwrap();
        assert!(backward(&g, &store, &x, &trace, Tensor::zeros([2, 3])).is_err());
    }

    #[test]
    fn dropout_infer_is_identity_in_graph() {
        let mut g = Graph::new(vec![4]);
        g.add("drop", LayerSpec::Dropout(Dropout { rate: 0.9 }), &[])
            .unwrap();
        let store = ParameterStore::init(&g, 0);
        let x = Tensor::from_values([1, 4], vec![1., 2., 3., 4.]).unwrap();
        let trace = forward(&g, &store, &x, Mode::Infer).unwrap();
        assert_eq!(trace.output(), &x);
    }
}
