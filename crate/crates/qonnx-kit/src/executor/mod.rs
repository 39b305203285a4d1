//! Node-level reference interpreter for QONNX graphs.
//!
//! This is a correctness oracle, not a performance engine: kernels are
//! written for clarity, accumulate in f64, and are fully deterministic.

mod ops;

pub use ops::transpose_tensor;

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::ir::{topological_order, Dim, Model, NodeDef, TensorValue, QONNX_DOMAIN};

/// Per-run binding table. Exclusive to one execution.
pub struct ExecutionContext<'m> {
    pub model: &'m Model,
    pub bindings: HashMap<String, TensorValue>,
}

impl<'m> ExecutionContext<'m> {
    pub fn get(&self, name: &str) -> Option<&TensorValue> {
        self.bindings.get(name)
    }
}

type Kernel = fn(&NodeDef, &[Option<&TensorValue>]) -> Result<Vec<TensorValue>>;

/// Kernel lookup for (domain, op_type). The supported standard subset is
/// fixed; anything else is an unsupported-op error at execution time.
pub fn kernel_for(domain: &str, op_type: &str) -> Option<Kernel> {
    if domain == QONNX_DOMAIN {
        return match op_type {
            "Quant" => Some(ops::quant as Kernel),
            "BipolarQuant" => Some(ops::bipolar_quant as Kernel),
            "Trunc" => Some(ops::trunc as Kernel),
            _ => None,
        };
    }
    if !(domain.is_empty() || domain == "ai.onnx") {
        return None;
    }
    let k: Kernel = match op_type {
        "Add" | "Sub" | "Mul" | "Div" => ops::binary_elementwise,
        "MatMul" => ops::matmul,
        "Gemm" => ops::gemm,
        "Conv" => ops::conv,
        "Relu" => ops::relu,
        "Clip" => ops::clip,
        "MaxPool" => ops::max_pool,
        "AveragePool" => ops::average_pool,
        "GlobalAveragePool" => ops::global_average_pool,
        "BatchNormalization" => ops::batch_norm,
        "Reshape" => ops::reshape,
        "Transpose" => ops::transpose,
        "Flatten" => ops::flatten,
        "Squeeze" => ops::squeeze,
        "Unsqueeze" => ops::unsqueeze,
        "Concat" => ops::concat,
        "Gather" => ops::gather,
        "Shape" => ops::shape,
        "Pad" => ops::pad,
        "Identity" => ops::identity,
        "Sign" => ops::sign,
        "QuantizeLinear" => ops::quantize_linear,
        "DequantizeLinear" => ops::dequantize_linear,
        _ => return None,
    };
    Some(k)
}

pub fn has_kernel(domain: &str, op_type: &str) -> bool {
    kernel_for(domain, op_type).is_some()
}

/// Execute one node against already-bound inputs.
pub fn execute_node(node: &NodeDef, ctx: &ExecutionContext<'_>) -> Result<Vec<TensorValue>> {
    let kernel = kernel_for(&node.domain, &node.op_type)
        .ok_or_else(|| Error::UnsupportedOp(node.domain.clone(), node.op_type.clone()))?;
    let mut inputs: Vec<Option<&TensorValue>> = Vec::with_capacity(node.inputs.len());
    for name in &node.inputs {
        if name.is_empty() {
            inputs.push(None);
        } else {
            let t = ctx.get(name).ok_or_else(|| Error::UnboundInput(name.clone()))?;
            inputs.push(Some(t));
        }
    }
    kernel(node, &inputs)
}

/// Execute the full graph: nodes are evaluated in topological order and the
/// bindings for every declared graph output are returned.
pub fn execute(
    model: &Model,
    inputs: &HashMap<String, TensorValue>,
) -> Result<HashMap<String, TensorValue>> {
    let g = &model.graph;
    let mut ctx = ExecutionContext { model, bindings: HashMap::new() };

    for (name, t) in &g.initializers {
        ctx.bindings.insert(name.clone(), t.clone());
    }
    for vi in &g.inputs {
        if g.initializers.contains_key(&vi.name) {
            continue; // initializer doubles as a default binding
        }
        let t = inputs
            .get(&vi.name)
            .ok_or_else(|| Error::UnboundInput(vi.name.clone()))?;
        if t.elem_type() != vi.elem_type {
            return Err(Error::Shape(format!(
                "input '{}' expects {:?}, got {:?}",
                vi.name,
                vi.elem_type,
                t.elem_type()
            )));
        }
        if let Some(dims) = &vi.shape {
            if dims.len() != t.shape.len()
                || dims.iter().zip(&t.shape).any(|(d, &s)| matches!(d, Dim::Known(k) if *k != s))
            {
                return Err(Error::Shape(format!(
                    "input '{}' expects shape {:?}, got {:?}",
                    vi.name, dims, t.shape
                )));
            }
        }
        ctx.bindings.insert(vi.name.clone(), t.clone());
    }

    for idx in topological_order(g)? {
        let node = &g.nodes[idx];
        let outputs = execute_node(node, &ctx)?;
        for (name, value) in node.outputs.iter().zip(outputs) {
            if !name.is_empty() {
                ctx.bindings.insert(name.clone(), value);
            }
        }
    }

    let mut result = HashMap::new();
    for vi in &g.outputs {
        let t = ctx
            .bindings
            .get(&vi.name)
            .ok_or_else(|| Error::UnboundInput(vi.name.clone()))?;
        result.insert(vi.name.clone(), t.clone());
    }
    Ok(result)
}
