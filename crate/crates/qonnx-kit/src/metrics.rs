//! MAC, BOPs, and weight-footprint statistics for quantized models.
//!
//! BOPs for one layer follow
//!   m * n * k^2 * (b_a*b_w + b_a + b_w + log2(n * k^2))
//! with k = 1 for fully connected layers. The formula counts a layer once;
//! a spatially scaled figure (formula x output positions) is reported
//! alongside under its own name since convolutional reuse multiplies the
//! actual bit operations by the number of output positions.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::ir::{Model, NodeDef, QONNX_DOMAIN};
use crate::passes::{inferred_shapes, TensorInfo};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv,
    FullyConnected,
}

impl std::fmt::Display for LayerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LayerKind::Conv => write!(f, "conv"),
            LayerKind::FullyConnected => write!(f, "fully_connected"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LayerStats {
    pub layer_name: String,
    pub kind: LayerKind,
    /// Input channels (per group for grouped convolutions).
    pub n: u64,
    /// Output channels.
    pub m: u64,
    /// Kernel size (1 for fully connected).
    pub k: u64,
    pub macs: u64,
    pub b_w: f64,
    pub b_a: f64,
    pub bops: f64,
    /// bops scaled by the number of output spatial positions.
    pub bops_per_position: f64,
    pub weights: u64,
    pub weight_bits: u64,
}

#[derive(Debug, Clone, Default)]
pub struct ModelStats {
    pub layers: Vec<LayerStats>,
    pub total_macs: u64,
    pub total_bops: f64,
    pub total_bops_per_position: f64,
    pub total_weights: u64,
    pub total_weight_bits: u64,
}

/// Bit operations for one layer (Eq. 5-style closed form).
pub fn layer_bops(m: u64, n: u64, k: u64, b_a: f64, b_w: f64) -> Result<f64> {
    if m < 1 || n < 1 || k < 1 || b_a < 1.0 || b_w < 1.0 {
        return Err(Error::Arg(format!(
            "layer_bops arguments must be >= 1 (m={m}, n={n}, k={k}, b_a={b_a}, b_w={b_w})"
        )));
    }
    Ok(bops_kernel(m, n, k * k, b_a, b_w))
}

/// Shared form with an explicit kernel area (supports non-square kernels).
fn bops_kernel(m: u64, n: u64, k2: u64, b_a: f64, b_w: f64) -> f64 {
    let nk2 = (n * k2) as f64;
    (m * n * k2) as f64 * (b_a * b_w + b_a + b_w + nk2.log2())
}

struct Analysis<'m> {
    model: &'m Model,
    info: HashMap<String, TensorInfo>,
    producer: HashMap<&'m str, &'m NodeDef>,
    graph_inputs: std::collections::HashSet<&'m str>,
}

impl<'m> Analysis<'m> {
    fn scalar_init(&self, name: &str) -> Option<f64> {
        let t = self.model.graph.initializers.get(name)?;
        (t.len() == 1).then(|| t.to_f64_vec()[0])
    }

    /// Bit width of the quantizer producing `name`, if any.
    fn quant_bits(&self, name: &str) -> Option<f64> {
        let node = self.producer.get(name)?;
        if node.domain != QONNX_DOMAIN {
            return match (node.domain.as_str(), node.op_type.as_str()) {
                ("" | "ai.onnx", "DequantizeLinear") => Some(8.0),
                _ => None,
            };
        }
        match node.op_type.as_str() {
            "Quant" => self.scalar_init(node.inputs.get(3)?),
            "BipolarQuant" => Some(1.0),
            "Trunc" => self.scalar_init(node.inputs.get(4)?),
            _ => None,
        }
    }

    /// Activation bits: the quantizer feeding the activation input, looking
    /// through data-preserving reshapes. Graph inputs default to 8
    /// (quantized input convention); anything else defaults to 32.
    fn activation_bits(&self, mut name: &'m str) -> f64 {
        loop {
            if let Some(b) = self.quant_bits(name) {
                return b;
            }
            let Some(node) = self.producer.get(name) else {
                return if self.graph_inputs.contains(name) { 8.0 } else { 32.0 };
            };
            let transparent = (node.domain.is_empty() || node.domain == "ai.onnx")
                && matches!(
                    node.op_type.as_str(),
                    "Reshape" | "Flatten" | "Transpose" | "Squeeze" | "Unsqueeze" | "Identity"
                );
            if !transparent {
                return 32.0;
            }
            name = &node.inputs[0];
        }
    }

    /// Resolve a weight operand: the initializer name (possibly behind a
    /// quantizer) and the weight bit width.
    fn weight_of(&self, name: &str) -> Option<(Vec<usize>, f64)> {
        if let Some(t) = self.model.graph.initializers.get(name) {
            return Some((t.shape.clone(), 32.0));
        }
        let node = self.producer.get(name)?;
        if node.domain != QONNX_DOMAIN {
            return None;
        }
        let src = self.model.graph.initializers.get(node.inputs.first()?)?;
        let bits = self.quant_bits(name)?;
        Some((src.shape.clone(), bits))
    }

    fn known_shape(&self, name: &str) -> Result<Vec<usize>> {
        self.info
            .get(name)
            .and_then(|ti| ti.known_dims())
            .ok_or_else(|| Error::Shape(format!("shape of '{name}' is not statically known")))
    }
}

pub fn model_stats(model: &Model) -> Result<ModelStats> {
    let info = inferred_shapes(model)?;
    let a = Analysis {
        model,
        info,
        producer: model
            .graph
            .nodes
            .iter()
            .flat_map(|n| n.outputs.iter().map(move |o| (o.as_str(), n)))
            .collect(),
        graph_inputs: model.graph.inputs.iter().map(|vi| vi.name.as_str()).collect(),
    };

    let mut stats = ModelStats::default();
    for (idx, node) in model.graph.nodes.iter().enumerate() {
        if !(node.domain.is_empty() || node.domain == "ai.onnx") {
            continue;
        }
        let layer = match node.op_type.as_str() {
            "Conv" => conv_stats(&a, node, idx)?,
            "MatMul" | "Gemm" => fc_stats(&a, node, idx),
            _ => None,
        };
        if let Some(layer) = layer {
            stats.total_macs += layer.macs;
            stats.total_bops += layer.bops;
            stats.total_bops_per_position += layer.bops_per_position;
            stats.total_weights += layer.weights;
            stats.total_weight_bits += layer.weight_bits;
            stats.layers.push(layer);
        }
    }
    Ok(stats)
}

fn layer_name(node: &NodeDef, idx: usize) -> String {
    if node.name.is_empty() {
        format!("{}_{idx}", node.op_type)
    } else {
        node.name.clone()
    }
}

fn conv_stats(a: &Analysis<'_>, node: &NodeDef, idx: usize) -> Result<Option<LayerStats>> {
    let Some(w_name) = node.inputs.get(1) else { return Ok(None) };
    let Some((w_shape, b_w)) = a.weight_of(w_name) else { return Ok(None) };
    if w_shape.len() != 4 {
        return Ok(None);
    }
    let (m, n, kh, kw) = (w_shape[0], w_shape[1], w_shape[2], w_shape[3]);

    let out_shape = a.known_shape(&node.outputs[0])?;
    if out_shape.len() != 4 {
        return Err(Error::Shape(format!(
            "Conv output '{}' is not 4-D",
            node.outputs[0]
        )));
    }
    let positions = if node.attr_str("layout") == Some("NHWC") {
        out_shape[1] * out_shape[2]
    } else {
        out_shape[2] * out_shape[3]
    };

    let b_a = a.activation_bits(&node.inputs[0]);
    let weights = (m * n * kh * kw) as u64;
    let macs = (m * n * kh * kw * positions) as u64;
    let bops = bops_kernel(m as u64, n as u64, (kh * kw) as u64, b_a, b_w);
    Ok(Some(LayerStats {
        layer_name: layer_name(node, idx),
        kind: LayerKind::Conv,
        n: n as u64,
        m: m as u64,
        k: kh as u64,
        macs,
        b_w,
        b_a,
        bops,
        bops_per_position: bops * positions as f64,
        weights,
        weight_bits: (weights as f64 * b_w).round() as u64,
    }))
}

fn fc_stats(a: &Analysis<'_>, node: &NodeDef, idx: usize) -> Option<LayerStats> {
    let w_name = node.inputs.get(1)?;
    let (w_shape, b_w) = a.weight_of(w_name)?;
    if w_shape.len() != 2 {
        return None;
    }
    let trans_b = node.op_type == "Gemm" && node.attr_i64("transB").unwrap_or(0) != 0;
    let (n, m) = if trans_b {
        (w_shape[1], w_shape[0])
    } else {
        (w_shape[0], w_shape[1])
    };
    let b_a = a.activation_bits(&node.inputs[0]);
    let weights = (n * m) as u64;
    let bops = bops_kernel(m as u64, n as u64, 1, b_a, b_w);
    Some(LayerStats {
        layer_name: layer_name(node, idx),
        kind: LayerKind::FullyConnected,
        n: n as u64,
        m: m as u64,
        k: 1,
        macs: weights,
        b_w,
        b_a,
        bops,
        bops_per_position: bops,
        weights,
        weight_bits: (weights as f64 * b_w).round() as u64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{AttrValue, DType, Graph, NodeDef, TensorValue, ValueInfo};

    #[test]
    fn closed_form_values() {
        // frozen against independent evaluation of the formula
        let v = layer_bops(16, 8, 3, 4.0, 4.0).unwrap();
        assert!((v - 34755.75360166154).abs() / v < 1e-12);
        assert_eq!(layer_bops(1, 1, 1, 1.0, 1.0).unwrap(), 3.0);
        let fc = layer_bops(64, 784, 1, 1.0, 1.0).unwrap();
        assert!((fc - 632955.6811383247).abs() / fc < 1e-12);
    }

    #[test]
    fn rejects_nonpositive() {
        assert!(matches!(layer_bops(0, 1, 1, 1.0, 1.0), Err(Error::Arg(_))));
        assert!(matches!(layer_bops(1, 1, 1, 0.5, 1.0), Err(Error::Arg(_))));
    }

    #[test]
    fn strictly_increasing_in_each_argument() {
        let base = layer_bops(4, 8, 2, 3.0, 3.0).unwrap();
        assert!(layer_bops(5, 8, 2, 3.0, 3.0).unwrap() > base);
        assert!(layer_bops(4, 9, 2, 3.0, 3.0).unwrap() > base);
        assert!(layer_bops(4, 8, 3, 3.0, 3.0).unwrap() > base);
        assert!(layer_bops(4, 8, 2, 3.5, 3.0).unwrap() > base);
        assert!(layer_bops(4, 8, 2, 3.0, 3.5).unwrap() > base);
    }

    fn quantized_fc(g: &mut Graph, idx: usize, x: &str, rows: usize, cols: usize, bw: f32) -> String {
        let w = format!("w{idx}");
        let wq = format!("wq{idx}");
        let y = format!("h{idx}");
        g.initializers
            .insert(w.clone(), TensorValue::f32(vec![rows, cols], vec![0.5; rows * cols]));
        for (suffix, v) in [("s", 1.0_f32), ("z", 0.0), ("b", bw)] {
            g.initializers
                .insert(format!("{w}_{suffix}"), TensorValue::scalar_f32(v));
        }
        g.nodes.push(
            NodeDef::new(
                "Quant",
                vec![&w, &format!("{w}_s"), &format!("{w}_z"), &format!("{w}_b")],
                vec![&wq],
            )
            .with_domain(crate::ir::QONNX_DOMAIN)
            .with_attr("signed", AttrValue::Int(1)),
        );
        g.nodes
            .push(NodeDef::new("MatMul", vec![x, &wq], vec![&y]).with_name(&format!("fc{idx}")));
        y
    }

    fn tfc(bw: f32) -> Model {
        let mut g = Graph::default();
        g.inputs.push(ValueInfo::tensor("x", DType::F32, vec![1, 784]));
        let mut cur = "x".to_string();
        for (i, (rows, cols)) in [(784, 64), (64, 64), (64, 64), (64, 10)].iter().enumerate() {
            cur = quantized_fc(&mut g, i, &cur, *rows, *cols, bw);
        }
        g.outputs.push(ValueInfo::tensor(cur, DType::F32, vec![1, 10]));
        Model::for_graph(g)
    }

    #[test]
    fn tfc_macs_and_weights() {
        let stats = model_stats(&tfc(2.0)).unwrap();
        assert_eq!(stats.layers.len(), 4);
        assert_eq!(stats.total_macs, 59_008);
        assert_eq!(stats.total_weights, 59_008);
        assert_eq!(stats.total_weight_bits, 118_016);
    }

    #[test]
    fn conv_macs_count_output_positions() {
        let mut g = Graph::default();
        g.inputs.push(ValueInfo::tensor("x", DType::F32, vec![1, 3, 32, 32]));
        g.outputs.push(ValueInfo { name: "y".into(), elem_type: DType::F32, shape: None });
        g.initializers
            .insert("w".into(), TensorValue::f32(vec![8, 3, 3, 3], vec![0.1; 8 * 27]));
        g.nodes.push(
            NodeDef::new("Conv", vec!["x", "w"], vec!["y"])
                .with_name("conv0")
                .with_attr("kernel_shape", AttrValue::Ints(vec![3, 3])),
        );
        let stats = model_stats(&Model::for_graph(g)).unwrap();
        assert_eq!(stats.layers.len(), 1);
        let l = &stats.layers[0];
        assert_eq!(l.macs, 8 * 3 * 9 * 900);
        assert_eq!(l.weights, 8 * 3 * 9);
        assert_eq!(l.kind, LayerKind::Conv);
        // default activation bits for a graph-input activation
        assert_eq!(l.b_a, 8.0);
        let expected = layer_bops(8, 3, 3, 8.0, 32.0).unwrap();
        assert_eq!(l.bops, expected);
        assert_eq!(l.bops_per_position, expected * 900.0);
    }

    #[test]
    fn totals_are_sums() {
        let stats = model_stats(&tfc(4.0)).unwrap();
        let macs: u64 = stats.layers.iter().map(|l| l.macs).sum();
        let bops: f64 = stats.layers.iter().map(|l| l.bops).sum();
        assert_eq!(stats.total_macs, macs);
        assert_eq!(stats.total_bops, bops);
    }
}
