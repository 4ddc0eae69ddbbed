//! The CoroNet architecture: an Xception-style separable-convolution backbone
//! (entry, middle and exit flows with residual skips) under a
//! Flatten -> Dropout -> Dense -> Dense -> Softmax head, plus exact parameter
//! accounting, batch prediction and the weights file format.

use crate::error::{Error, Result};
use crate::graph::{forward, Graph, Mode, NodeId, ParameterStore};
use crate::layers::{
    BatchNorm, Conv2D, Dense, Dropout, LayerSpec, MaxPool2D, Padding, SeparableConv2D,
};
use crate::tensor::Tensor;
use crate::train::argmax_rows;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const WEIGHTS_MAGIC: &[u8; 8] = b"CORONET1";

/// Backbone scale. `Mini` divides every channel width by 8 and keeps two
/// middle-flow blocks instead of eight, for desk-scale tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Full,
    Mini,
}

#[derive(Debug, Clone)]
pub struct ArchitectureConfig {
    pub variant: Variant,
    pub input_height: usize,
    pub input_width: usize,
    pub input_channels: usize,
    pub num_classes: usize,
    pub head_dropout_rate: f64,
    pub head_dense_width: usize,
}

impl ArchitectureConfig {
    pub fn new(variant: Variant, num_classes: usize) -> Self {
        ArchitectureConfig {
            variant,
            input_height: 224,
            input_width: 224,
            input_channels: 3,
            num_classes,
            head_dropout_rate: 0.5,
            head_dense_width: 256,
        }
    }

    pub fn with_input(mut self, height: usize, width: usize) -> Self {
        self.input_height = height;
        self.input_width = width;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(2..=4).contains(&self.num_classes) {
            return Err(Error::config(format!(
                "num_classes must be 2, 3 or 4, got {}",
                self.num_classes
            )));
        }
        if self.input_channels == 0 || self.input_height == 0 || self.input_width == 0 {
            return Err(Error::config("input extents must be positive".to_string()));
        }
        if !(0.0..=1.0).contains(&self.head_dropout_rate) {
            return Err(Error::config("dropout rate outside [0, 1]".to_string()));
        }
        Ok(())
    }

    fn widths(&self) -> BackboneWidths {
        match self.variant {
            Variant::Full => BackboneWidths {
                stem: [32, 64],
                entry: [128, 256, 728],
                middle: 728,
                middle_blocks: 8,
                exit_residual: 1024,
                exit_tail: [1536, 2048],
            },
            Variant::Mini => BackboneWidths {
                stem: [4, 8],
                entry: [16, 32, 91],
                middle: 91,
                middle_blocks: 2,
                exit_residual: 128,
                exit_tail: [192, 256],
            },
        }
    }
}

struct BackboneWidths {
    stem: [usize; 2],
    entry: [usize; 3],
    middle: usize,
    middle_blocks: usize,
    exit_residual: usize,
    exit_tail: [usize; 2],
}

/// Exact integer parameter counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParameterCount {
    pub total: usize,
    pub trainable: usize,
    pub non_trainable: usize,
}

/// Per-layer row of the accounting table.
#[derive(Debug, Clone)]
pub struct LayerCountRow {
    pub name: String,
    pub output: Vec<usize>,
    pub params: usize,
    pub trainable: usize,
}

fn conv(cin: usize, cout: usize, k: usize, stride: usize, padding: Padding) -> LayerSpec {
    LayerSpec::Conv2D(Conv2D {
        in_channels: cin,
        out_channels: cout,
        kernel_h: k,
        kernel_w: k,
        stride,
        padding,
        use_bias: false,
    })
}

fn sepconv(cin: usize, cout: usize) -> LayerSpec {
    LayerSpec::SeparableConv2D(SeparableConv2D {
        in_channels: cin,
        out_channels: cout,
        kernel_h: 3,
        kernel_w: 3,
        stride: 1,
        padding: Padding::Same,
        use_bias: false,
    })
}

fn pool3x3() -> LayerSpec {
    LayerSpec::MaxPool2D(MaxPool2D {
        pool_h: 3,
        pool_w: 3,
        stride: 2,
        padding: Padding::Same,
    })
}

fn bn(channels: usize) -> LayerSpec {
    LayerSpec::BatchNorm(BatchNorm::with_defaults(channels))
}

/// Build the layer graph only (no parameter tensors); cheap enough for pure
/// accounting queries.
pub fn build_coronet_graph(config: &ArchitectureConfig) -> Result<Graph> {
    config.validate()?;
    let w = config.widths();
    let mut g = Graph::new(vec![
        config.input_height,
        config.input_width,
        config.input_channels,
    ]);

    // entry flow: two strided stem convolutions
    let mut trunk = g.add(
        "block1_conv1",
        conv(config.input_channels, w.stem[0], 3, 2, Padding::Valid),
        &[],
    )?;
    trunk = g.add("block1_conv1_bn", bn(w.stem[0]), &[trunk])?;
    trunk = g.add("block1_conv1_act", LayerSpec::ReLU, &[trunk])?;
    trunk = g.add(
        "block1_conv2",
        conv(w.stem[0], w.stem[1], 3, 1, Padding::Valid),
        &[trunk],
    )?;
    trunk = g.add("block1_conv2_bn", bn(w.stem[1]), &[trunk])?;
    trunk = g.add("block1_conv2_act", LayerSpec::ReLU, &[trunk])?;

    // entry flow: three residual downsampling blocks
    let mut cin = w.stem[1];
    let mut block = 2;
    for &width in &w.entry {
        trunk = downsample_block(&mut g, block, trunk, cin, width, block > 2)?;
        cin = width;
        block += 1;
    }

    // middle flow: identical residual blocks at constant width
    for _ in 0..w.middle_blocks {
        let prefix = format!("block{block}");
        let mut x = trunk;
        for i in 1..=3 {
            x = g.add(&format!("{prefix}_sepconv{i}_act"), LayerSpec::ReLU, &[x])?;
            x = g.add(
                &format!("{prefix}_sepconv{i}"),
                sepconv(w.middle, w.middle),
                &[x],
            )?;
            x = g.add(&format!("{prefix}_sepconv{i}_bn"), bn(w.middle), &[x])?;
        }
        trunk = g.add(&format!("{prefix}_add"), LayerSpec::ResidualAdd, &[x, trunk])?;
        block += 1;
    }

    // exit flow: one more downsampling block, then two widening sepconvs
    let prefix = format!("block{block}");
    let res = g.add(
        &format!("{prefix}_res_conv"),
        conv(w.middle, w.exit_residual, 1, 2, Padding::Same),
        &[trunk],
    )?;
    let res = g.add(&format!("{prefix}_res_conv_bn"), bn(w.exit_residual), &[res])?;
    let mut x = g.add(&format!("{prefix}_sepconv1_act"), LayerSpec::ReLU, &[trunk])?;
    x = g.add(&format!("{prefix}_sepconv1"), sepconv(w.middle, w.middle), &[x])?;
    x = g.add(&format!("{prefix}_sepconv1_bn"), bn(w.middle), &[x])?;
    x = g.add(&format!("{prefix}_sepconv2_act"), LayerSpec::ReLU, &[x])?;
    x = g.add(
        &format!("{prefix}_sepconv2"),
        sepconv(w.middle, w.exit_residual),
        &[x],
    )?;
    x = g.add(&format!("{prefix}_sepconv2_bn"), bn(w.exit_residual), &[x])?;
    x = g.add(&format!("{prefix}_pool"), pool3x3(), &[x])?;
    trunk = g.add(&format!("{prefix}_add"), LayerSpec::ResidualAdd, &[x, res])?;
    block += 1;

    let prefix = format!("block{block}");
    trunk = g.add(
        &format!("{prefix}_sepconv1"),
        sepconv(w.exit_residual, w.exit_tail[0]),
        &[trunk],
    )?;
    trunk = g.add(&format!("{prefix}_sepconv1_bn"), bn(w.exit_tail[0]), &[trunk])?;
    trunk = g.add(&format!("{prefix}_sepconv1_act"), LayerSpec::ReLU, &[trunk])?;
    trunk = g.add(
        &format!("{prefix}_sepconv2"),
        sepconv(w.exit_tail[0], w.exit_tail[1]),
        &[trunk],
    )?;
    trunk = g.add(&format!("{prefix}_sepconv2_bn"), bn(w.exit_tail[1]), &[trunk])?;
    trunk = g.add(&format!("{prefix}_sepconv2_act"), LayerSpec::ReLU, &[trunk])?;

    // classification head
    trunk = g.add("flatten", LayerSpec::Flatten, &[trunk])?;
    trunk = g.add(
        "dropout",
        LayerSpec::Dropout(Dropout {
            rate: config.head_dropout_rate,
        }),
        &[trunk],
    )?;
    let shapes = g.infer_shapes(1).map_err(|e| {
        Error::config(format!(
            "input {}x{} too small for the stride chain: {e}",
            config.input_height, config.input_width
        ))
    })?;
    let flat = shapes[g.node_id("flatten").unwrap()][1];
    trunk = g.add(
        "dense",
        LayerSpec::Dense(Dense {
            in_features: flat,
            out_features: config.head_dense_width,
            use_bias: true,
        }),
        &[trunk],
    )?;
    trunk = g.add("dense_act", LayerSpec::ReLU, &[trunk])?;
    trunk = g.add(
        "dense_1",
        LayerSpec::Dense(Dense {
            in_features: config.head_dense_width,
            out_features: config.num_classes,
            use_bias: true,
        }),
        &[trunk],
    )?;
    g.add("predictions", LayerSpec::Softmax, &[trunk])?;
    Ok(g)
}

fn downsample_block(
    g: &mut Graph,
    block: usize,
    trunk: NodeId,
    cin: usize,
    width: usize,
    leading_act: bool,
) -> Result<NodeId> {
    let prefix = format!("block{block}");
    let res = g.add(
        &format!("{prefix}_res_conv"),
        conv(cin, width, 1, 2, Padding::Same),
        &[trunk],
    )?;
    let res = g.add(&format!("{prefix}_res_conv_bn"), bn(width), &[res])?;
    let mut x = trunk;
    if leading_act {
        x = g.add(&format!("{prefix}_sepconv1_act"), LayerSpec::ReLU, &[x])?;
    }
    x = g.add(&format!("{prefix}_sepconv1"), sepconv(cin, width), &[x])?;
    x = g.add(&format!("{prefix}_sepconv1_bn"), bn(width), &[x])?;
    x = g.add(&format!("{prefix}_sepconv2_act"), LayerSpec::ReLU, &[x])?;
    x = g.add(&format!("{prefix}_sepconv2"), sepconv(width, width), &[x])?;
    x = g.add(&format!("{prefix}_sepconv2_bn"), bn(width), &[x])?;
    x = g.add(&format!("{prefix}_pool"), pool3x3(), &[x])?;
    g.add(&format!("{prefix}_add"), LayerSpec::ResidualAdd, &[x, res])
}

/// Build the graph and seeded initial parameters.
pub fn build_coronet(config: &ArchitectureConfig, seed: u64) -> Result<(Graph, ParameterStore)> {
    let graph = build_coronet_graph(config)?;
    let store = ParameterStore::init(&graph, seed);
    Ok((graph, store))
}

/// Exact parameter accounting from spec-derived tensor shapes and trainable
/// flags, with one table row per parameterized layer.
pub fn count_parameters(graph: &Graph) -> Result<(ParameterCount, Vec<LayerCountRow>)> {
    let shapes = graph.infer_shapes(1)?;
    let mut total = 0;
    let mut trainable = 0;
    let mut rows = Vec::new();
    for (id, node) in graph.nodes().iter().enumerate() {
        let (node_total, node_trainable) = node.spec.param_count();
        let effective_trainable = if node.trainable { node_trainable } else { 0 };
        total += node_total;
        trainable += effective_trainable;
        rows.push(LayerCountRow {
            name: node.name.clone(),
            output: shapes[id][1..].to_vec(),
            params: node_total,
            trainable: effective_trainable,
        });
    }
    Ok((
        ParameterCount {
            total,
            trainable,
            non_trainable: total - trainable,
        },
        rows,
    ))
}

/// Accounting rolled up the way the layer table is usually printed: one row
/// for the whole backbone, then the head layers.
pub fn count_parameters_summary(graph: &Graph) -> Result<(ParameterCount, Vec<LayerCountRow>)> {
    let (count, rows) = count_parameters(graph)?;
    let head_start = graph
        .node_id("flatten")
        .ok_or_else(|| Error::input("graph has no flatten head".to_string()))?;
    let backbone_params: usize = rows[..head_start].iter().map(|r| r.params).sum();
    let backbone_trainable: usize = rows[..head_start].iter().map(|r| r.trainable).sum();
    let mut summary = vec![LayerCountRow {
        name: "xception (Backbone)".to_string(),
        output: rows[head_start - 1].output.clone(),
        params: backbone_params,
        trainable: backbone_trainable,
    }];
    for row in &rows[head_start..] {
        let type_name = match &graph.nodes()[graph.node_id(&row.name).unwrap()].spec {
            LayerSpec::Flatten => "Flatten",
            LayerSpec::Dropout(_) => "Dropout",
            LayerSpec::Dense(_) => "Dense",
            LayerSpec::ReLU => continue,
            LayerSpec::Softmax => continue,
            _ => continue,
        };
        summary.push(LayerCountRow {
            name: format!("{} ({})", row.name, type_name),
            output: row.output.clone(),
            params: row.params,
            trainable: row.trainable,
        });
    }
    Ok((count, summary))
}

/// Class probabilities and argmax labels for a batch of images, evaluated in
/// inference mode (dropout off, batch norm on moving statistics).
pub fn predict(
    graph: &Graph,
    store: &ParameterStore,
    images: &Tensor,
) -> Result<(Tensor, Vec<usize>)> {
    let dims = images.dims();
    if dims.len() != graph.input_dims().len() + 1 || dims[1..] != *graph.input_dims() {
        return Err(Error::input(format!(
            "images of shape {} do not match the network input {:?}",
            images.shape(),
            graph.input_dims()
        )));
    }
    let n = dims[0];
    let sample: usize = dims[1..].iter().product();
    // the forward trace caches every node output (roughly two orders of
    // magnitude more than the input), so chunk aggressively on large inputs
    let chunk = (250_000 / sample.max(1)).clamp(1, 64);
    let classes = *graph.infer_shapes(1)?.last().unwrap().last().unwrap();
    let mut probs = Vec::with_capacity(n * classes);
    let mut start = 0;
    while start < n {
        let end = (start + chunk).min(n);
        let mut dims_chunk = dims.to_vec();
        dims_chunk[0] = end - start;
        let batch = Tensor::from_values(
            dims_chunk,
            images.data()[start * sample..end * sample].to_vec(),
        )?;
        let trace = forward(graph, store, &batch, Mode::Infer)?;
        probs.extend_from_slice(trace.output().data());
        start = end;
    }
    let probs = Tensor::from_values([n, classes], probs)?;
    let labels = argmax_rows(&probs);
    Ok((probs, labels))
}

/// Write every parameter tensor with a manifest of
/// (layer, tensor, shape, trainable), then the raw little-endian f32 payload.
/// The round trip through `load_weights` is bit-exact.
pub fn save_weights(graph: &Graph, store: &ParameterStore, path: &Path) -> Result<()> {
    save_weights_subset(graph, store, path, |_| true)
}

/// Like [`save_weights`] but keeps only layers accepted by the filter; a
/// backbone-only export (`|name| name comes before the head`) is how
/// pretrained feature extractors move between differently headed models.
pub fn save_weights_subset(
    graph: &Graph,
    store: &ParameterStore,
    path: &Path,
    keep_layer: impl Fn(&str) -> bool,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(WEIGHTS_MAGIC)?;
    let entries: Vec<(usize, usize)> = (0..graph.nodes().len())
        .filter(|&id| keep_layer(&graph.nodes()[id].name))
        .flat_map(|id| (0..store.node_params(id).len()).map(move |slot| (id, slot)))
        .collect();
    w.write_all(&(entries.len() as u32).to_le_bytes())?;
    for &(id, slot) in &entries {
        let node = &graph.nodes()[id];
        let param = &store.node_params(id)[slot];
        write_str(&mut w, &node.name)?;
        write_str(&mut w, &param.name)?;
        let dims = param.values.dims();
        w.write_all(&[dims.len() as u8])?;
        for &d in dims {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        w.write_all(&[param.trainable as u8])?;
    }
    for &(id, slot) in &entries {
        for &v in store.node_params(id)[slot].values.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Load weights into a store built for `graph`. Every file entry must match a
/// graph tensor of identical shape; graph tensors absent from the file are
/// left untouched (this is how a backbone-only file initializes a fresh
/// head). Returns the number of tensors loaded.
pub fn load_weights(graph: &Graph, store: &mut ParameterStore, path: &Path) -> Result<usize> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| Error::format("weights file truncated before magic".to_string()))?;
    if &magic != WEIGHTS_MAGIC {
        return Err(Error::format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&magic),
            String::from_utf8_lossy(WEIGHTS_MAGIC)
        )));
    }
    let count = read_u32(&mut r)? as usize;
    struct Entry {
        node: usize,
        slot: usize,
        numel: usize,
    }
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let layer = read_str(&mut r)?;
        let tensor = read_str(&mut r)?;
        let mut rank = [0u8; 1];
        r.read_exact(&mut rank)
            .map_err(|_| Error::format(format!("layer {layer}: truncated manifest")))?;
        let mut dims = Vec::with_capacity(rank[0] as usize);
        for _ in 0..rank[0] {
            dims.push(read_u32(&mut r)? as usize);
        }
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag)
            .map_err(|_| Error::format(format!("layer {layer}: truncated manifest")))?;
        let node = graph.node_id(&layer).ok_or_else(|| {
            Error::format(format!("layer {layer}: not present in this network"))
        })?;
        let slot = store.node_params(node)
            .iter()
            .position(|p| p.name == tensor)
            .ok_or_else(|| {
                Error::format(format!("layer {layer}: unknown tensor {tensor}"))
            })?;
        let expected = store.node_params(node)[slot].values.dims();
        if expected != dims.as_slice() {
            return Err(Error::format(format!(
                "layer {layer}: tensor {tensor} has shape {dims:?} in the file, network expects {expected:?}"
            )));
        }
        entries.push(Entry {
            node,
            slot,
            numel: dims.iter().product(),
        });
    }
    for e in &entries {
        let mut buf = vec![0u8; e.numel * 4];
        r.read_exact(&mut buf).map_err(|_| {
            Error::format(format!(
                "layer {}: truncated payload",
                graph.nodes()[e.node].name
            ))
        })?;
        let values: Vec<f32> = buf
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        let param = &mut store.node_params_mut(e.node)[e.slot];
        let shape = param.values.shape().clone();
        param.values = Tensor::from_values(shape, values)?;
    }
    Ok(entries.len())
}

/// Read only the manifest of a weights file and report the output arity of
/// the classifier head (`dense_1`/`weight`), or `None` for backbone-only
/// files.
pub fn weights_file_head_arity(path: &Path) -> Result<Option<usize>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| Error::format("weights file truncated before magic".to_string()))?;
    if &magic != WEIGHTS_MAGIC {
        return Err(Error::format("bad weights file magic".to_string()));
    }
    let count = read_u32(&mut r)? as usize;
    let mut arity = None;
    for _ in 0..count {
        let layer = read_str(&mut r)?;
        let tensor = read_str(&mut r)?;
        let mut rank = [0u8; 1];
        r.read_exact(&mut rank)
            .map_err(|_| Error::format("truncated manifest".to_string()))?;
        let mut dims = Vec::with_capacity(rank[0] as usize);
        for _ in 0..rank[0] {
            dims.push(read_u32(&mut r)? as usize);
        }
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag)
            .map_err(|_| Error::format("truncated manifest".to_string()))?;
        if layer == "dense_1" && tensor == "weight" && dims.len() == 2 {
            arity = Some(dims[1]);
        }
    }
    Ok(arity)
}

fn write_str(w: &mut impl Write, s: &str) -> Result<()> {
    let bytes = s.as_bytes();
    w.write_all(&(bytes.len() as u16).to_le_bytes())?;
    w.write_all(bytes)?;
    Ok(())
}

fn read_str(r: &mut impl Read) -> Result<String> {
    let mut len = [0u8; 2];
    r.read_exact(&mut len)
        .map_err(|_| Error::format("truncated manifest string".to_string()))?;
    let mut buf = vec![0u8; u16::from_le_bytes(len) as usize];
    r.read_exact(&mut buf)
        .map_err(|_| Error::format("truncated manifest string".to_string()))?;
    String::from_utf8(buf).map_err(|_| Error::format("manifest string is not UTF-8".to_string()))
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|_| Error::format("truncated weights file".to_string()))?;
    Ok(u32::from_le_bytes(buf))
}
