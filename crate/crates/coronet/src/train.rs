//! Loss, optimizer and the training loop.

use crate::error::{Error, Result};
use crate::graph::{backward, forward, Graph, Mode, ParameterStore};
use crate::layers::{Dense, LayerSpec};
use crate::rng;
use crate::tensor::Tensor;

const PROB_FLOOR: f64 = 1e-12;

/// Mean over the batch of `-ln(p[label])`, with the probability clamped to
/// `1e-12` before the log.
pub fn cross_entropy_loss(probabilities: &Tensor, labels: &[usize]) -> Result<f64> {
    let (n, classes) = check_prob_matrix(probabilities, labels)?;
    let p = probabilities.data();
    let mut acc = 0.0f64;
    for (i, &label) in labels.iter().enumerate() {
        let q = (p[i * classes + label] as f64).max(PROB_FLOOR);
        acc -= q.ln();
    }
    Ok(acc / n as f64)
}

/// Gradient of `cross_entropy_loss` w.r.t. the probabilities.
pub fn cross_entropy_grad(probabilities: &Tensor, labels: &[usize]) -> Result<Tensor> {
    let (n, classes) = check_prob_matrix(probabilities, labels)?;
    let p = probabilities.data();
    let mut grad = vec![0.0f32; probabilities.numel()];
    for (i, &label) in labels.iter().enumerate() {
        let q = (p[i * classes + label] as f64).max(PROB_FLOOR);
        grad[i * classes + label] = (-1.0 / (n as f64 * q)) as f32;
    }
    Tensor::from_values(probabilities.shape().clone(), grad)
}

fn check_prob_matrix(probabilities: &Tensor, labels: &[usize]) -> Result<(usize, usize)> {
    let dims = probabilities.dims();
    if dims.len() != 2 {
        return Err(Error::input(format!(
            "expected [N, classes] probabilities, got {}",
            probabilities.shape()
        )));
    }
    let (n, classes) = (dims[0], dims[1]);
    if labels.len() != n {
        return Err(Error::input(format!(
            "{} labels for a batch of {n}",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::input(format!(
            "label {bad} out of range for {classes} classes"
        )));
    }
    Ok((n, classes))
}

/// Adam hyperparameters and per-parameter moment estimates.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Step counter; increments once per `step` call.
    pub t: u64,
    moments: Vec<Vec<Option<(Tensor, Tensor)>>>,
}

impl AdamState {
    pub fn new(learning_rate: f64) -> Self {
        AdamState {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            t: 0,
            moments: Vec::new(),
        }
    }

    /// Apply one Adam update with bias correction to every parameter that
    /// received a gradient.
    pub fn step(&mut self, store: &mut ParameterStore, grads: &crate::graph::Gradients) {
        if self.moments.len() != store.num_nodes() {
            self.moments = (0..store.num_nodes())
                .map(|id| vec![None; store.node_params(id).len()])
                .collect();
        }
        self.t += 1;
        for node in 0..store.num_nodes() {
            for (slot, grad) in grads.by_node[node].iter().enumerate() {
                let Some(grad) = grad else { continue };
                let param = &mut store.node_params_mut(node)[slot];
                let (m, v) = self.moments[node][slot].get_or_insert_with(|| {
                    (
                        Tensor::zeros(param.values.shape().clone()),
                        Tensor::zeros(param.values.shape().clone()),
                    )
                });
                adam_update(
                    &mut param.values,
                    m,
                    v,
                    grad,
                    self.t,
                    self.learning_rate,
                    self.beta1,
                    self.beta2,
                    self.epsilon,
                );
            }
        }
    }
}

/// Single-tensor Adam update:
/// `m <- b1*m + (1-b1)*g; v <- b2*v + (1-b2)*g^2;`
/// `theta <- theta - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)`.
#[allow(clippy::too_many_arguments)]
pub fn adam_update(
    param: &mut Tensor,
    m: &mut Tensor,
    v: &mut Tensor,
    grad: &Tensor,
    t: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
) {
    let bc1 = 1.0 - beta1.powi(t as i32);
    let bc2 = 1.0 - beta2.powi(t as i32);
    let pd = param.data_mut();
    let md = m.data_mut();
    let vd = v.data_mut();
    for i in 0..pd.len() {
        let g = grad.data()[i] as f64;
        let mi = beta1 * md[i] as f64 + (1.0 - beta1) * g;
        let vi = beta2 * vd[i] as f64 + (1.0 - beta2) * g * g;
        md[i] = mi as f32;
        vd[i] = vi as f32;
        let m_hat = mi / bc1;
        let v_hat = vi / bc2;
        let update = lr * m_hat / (v_hat.sqrt() + epsilon);
        if update != 0.0 {
            pd[i] = (pd[i] as f64 - update) as f32;
        }
    }
}

/// Training-run configuration. Defaults: Adam at 1e-4, batches of 10,
/// 80 epochs, shuffling before each epoch.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub shuffle_each_epoch: bool,
    pub rng_seed: u64,
    pub freeze_backbone: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            batch_size: 10,
            epochs: 80,
            shuffle_each_epoch: true,
            rng_seed: 0,
            freeze_backbone: false,
        }
    }
}

/// One history row per epoch; validation columns are present only when a
/// validation set was supplied.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: Option<f64>,
    pub val_acc: Option<f64>,
}

/// Index of the row maximum (first winner on ties).
pub fn argmax_rows(probabilities: &Tensor) -> Vec<usize> {
    let dims = probabilities.dims();
    let (n, classes) = (dims[0], dims[1]);
    let p = probabilities.data();
    (0..n)
        .map(|i| {
            let row = &p[i * classes..(i + 1) * classes];
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

fn gather_batch(images: &Tensor, indices: &[usize]) -> Tensor {
    let dims = images.dims();
    let sample: usize = dims[1..].iter().product();
    let mut out_dims = dims.to_vec();
    out_dims[0] = indices.len();
    let mut data = Vec::with_capacity(indices.len() * sample);
    for &i in indices {
        data.extend_from_slice(&images.data()[i * sample..(i + 1) * sample]);
    }
    Tensor::from_values(out_dims, data).expect("gather layout")
}

/// Inference-mode loss and accuracy over a dataset, evaluated in
/// `batch_size` chunks.
pub fn evaluate(
    graph: &Graph,
    store: &ParameterStore,
    images: &Tensor,
    labels: &[usize],
    batch_size: usize,
) -> Result<(f64, f64)> {
    let n = images.dims()[0];
    let mut loss_acc = 0.0f64;
    let mut correct = 0usize;
    let mut start = 0;
    while start < n {
        let end = (start + batch_size).min(n);
        let idx: Vec<usize> = (start..end).collect();
        let batch = gather_batch(images, &idx);
        let batch_labels = &labels[start..end];
        let trace = forward(graph, store, &batch, Mode::Infer)?;
        let probs = trace.output();
        loss_acc += cross_entropy_loss(probs, batch_labels)? * (end - start) as f64;
        for (p, &l) in argmax_rows(probs).iter().zip(batch_labels) {
            if *p == l {
                correct += 1;
            }
        }
        start = end;
    }
    Ok((loss_acc / n as f64, correct as f64 / n as f64))
}

/// Mini-batch Adam over the dataset: shuffles before each epoch (seeded),
/// trains the incomplete final batch as a smaller batch, applies batch-norm
/// moving updates after each step, and reports one history row per epoch.
///
/// Fully deterministic given (seed, dataset, initial parameters).
pub fn fit(
    graph: &Graph,
    store: &mut ParameterStore,
    images: &Tensor,
    labels: &[usize],
    validation: Option<(&Tensor, &[usize])>,
    config: &TrainConfig,
) -> Result<Vec<EpochRecord>> {
    let n = images.dims()[0];
    if n == 0 {
        return Err(Error::input("empty training dataset".to_string()));
    }
    if labels.len() != n {
        return Err(Error::input(format!(
            "{} labels for {n} training samples",
            labels.len()
        )));
    }
    if config.batch_size == 0 {
        return Err(Error::input("batch size must be at least 1".to_string()));
    }
    let head_arity = *graph.infer_shapes(1)?.last().expect("nonempty graph").last().unwrap();
    if let Some(&bad) = labels.iter().find(|&&l| l >= head_arity) {
        return Err(Error::input(format!(
            "label {bad} out of range for a {head_arity}-way head"
        )));
    }

    let mut adam = AdamState::new(config.learning_rate);
    let mut history = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 1..=config.epochs {
        if config.shuffle_each_epoch {
            let mut rng = rng::rng_from_seed(rng::derive_seed(
                config.rng_seed,
                0x7368_7566,
                epoch as u64,
                0,
            ));
            rng::shuffle(&mut order, &mut rng);
        }
        let mut loss_sum = 0.0f64;
        let mut correct = 0usize;
        for (step, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch = gather_batch(images, chunk);
            let batch_labels: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let dropout_seed =
                rng::derive_seed(config.rng_seed, 0x6472_6f70, epoch as u64, step as u64);
            let trace = forward(graph, store, &batch, Mode::Train { dropout_seed })?;
            let probs = trace.output();
            loss_sum += cross_entropy_loss(probs, &batch_labels)? * chunk.len() as f64;
            for (p, &l) in argmax_rows(probs).iter().zip(&batch_labels) {
                if *p == l {
                    correct += 1;
                }
            }
            let grad = cross_entropy_grad(probs, &batch_labels)?;
            let grads = backward(graph, store, &batch, &trace, grad)?;
            adam.step(store, &grads);
            for (id, update) in trace.bn_updates.iter().enumerate() {
                if let Some(u) = update {
                    store.set(id, "moving_mean", u.moving_mean.clone());
                    store.set(id, "moving_variance", u.moving_variance.clone());
                }
            }
        }
        let (val_loss, val_acc) = match validation {
            Some((vx, vy)) => {
                let (l, a) = evaluate(graph, store, vx, vy, config.batch_size)?;
                (Some(l), Some(a))
            }
            None => (None, None),
        };
        history.push(EpochRecord {
            epoch,
            train_loss: loss_sum / n as f64,
            train_acc: correct as f64 / n as f64,
            val_loss,
            val_acc,
        });
    }
    Ok(history)
}

/// Swap the classifier head for a freshly initialized dense layer of
/// `new_num_classes` outputs; optionally freeze every layer below the head.
///
/// The head boundary is the last Flatten/GlobalAvgPool node (the backbone is
/// everything before it).
pub fn fine_tune(
    graph: &mut Graph,
    store: &mut ParameterStore,
    new_num_classes: usize,
    config: &TrainConfig,
) -> Result<()> {
    if new_num_classes < 2 {
        return Err(Error::input(format!(
            "classification head needs at least 2 classes, got {new_num_classes}"
        )));
    }
    let head_dense = graph
        .nodes()
        .iter()
        .rposition(|n| matches!(n.spec, LayerSpec::Dense(_)))
        .ok_or_else(|| Error::input("graph has no classification head".to_string()))?;
    let in_features = match &graph.nodes()[head_dense].spec {
        LayerSpec::Dense(d) => d.in_features,
        _ => unreachable!(),
    };
    graph.replace_spec(
        head_dense,
        LayerSpec::Dense(Dense {
            in_features,
            out_features: new_num_classes,
            use_bias: true,
        }),
    )?;
    store.reinit_node(
        graph,
        head_dense,
        rng::derive_seed(config.rng_seed, 0x6865_6164, new_num_classes as u64, 0),
    );
    if config.freeze_backbone {
        let boundary = graph
            .nodes()
            .iter()
            .rposition(|n| {
                matches!(n.spec, LayerSpec::Flatten | LayerSpec::GlobalAvgPool2D)
            })
            .unwrap_or(head_dense);
        for id in 0..boundary {
            graph.set_trainable(id, false);
        }
    }
    Ok(())
}
