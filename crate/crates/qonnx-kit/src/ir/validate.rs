//! Structural and QONNX-specific model validation, plus topological ordering.

use std::collections::{HashMap, HashSet};

use crate::error::{Diagnostic, Error, Result};

use super::{Graph, Model, TensorData, TensorValue};

/// Deterministic topological order over the graph's nodes. Independent
/// nodes keep their original relative position (stable tie-break).
pub fn topological_order(g: &Graph) -> Result<Vec<usize>> {
    let mut producer: HashMap<&str, usize> = HashMap::new();
    for (idx, node) in g.nodes.iter().enumerate() {
        for out in &node.outputs {
            producer.insert(out.as_str(), idx);
        }
    }

    // Edges only between nodes; initializers and graph inputs are always ready.
    let mut deps: Vec<Vec<usize>> = vec![Vec::new(); g.nodes.len()];
    for (idx, node) in g.nodes.iter().enumerate() {
        for input in &node.inputs {
            if input.is_empty() || g.initializers.contains_key(input) {
                continue;
            }
            if let Some(&p) = producer.get(input.as_str()) {
                deps[idx].push(p);
            }
        }
    }

    let mut order = Vec::with_capacity(g.nodes.len());
    let mut placed = vec![false; g.nodes.len()];
    for _ in 0..g.nodes.len() {
        let next = (0..g.nodes.len())
            .find(|&i| !placed[i] && deps[i].iter().all(|&p| placed[p]))
            .ok_or(Error::Cycle)?;
        placed[next] = true;
        order.push(next);
    }
    Ok(order)
}

fn scalar_f64s(t: &TensorValue) -> Vec<f64> {
    t.to_f64_vec()
}

/// Run all graph and QONNX checks, returning every finding.
pub fn validate_model(m: &Model) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    let g = &m.graph;

    if !m.opset_imports.iter().any(|(d, _)| d.is_empty() || d == "ai.onnx") {
        diags.push(Diagnostic::error("model", "missing default ONNX domain opset import"));
    }

    // Single assignment: no two producers for one name.
    let mut produced: HashMap<&str, usize> = HashMap::new();
    for (idx, node) in g.nodes.iter().enumerate() {
        if node.op_type.is_empty() {
            diags.push(Diagnostic::error(node_label(g, idx), "empty op_type"));
        }
        if node.outputs.is_empty() {
            diags.push(Diagnostic::error(node_label(g, idx), "node has no outputs"));
        }
        for out in &node.outputs {
            if g.initializers.contains_key(out) {
                diags.push(Diagnostic::error(
                    out.clone(),
                    "tensor produced by a node shadows an initializer",
                ));
            }
            if produced.insert(out.as_str(), idx).is_some() {
                diags.push(Diagnostic::error(out.clone(), "tensor produced by more than one node"));
            }
        }
    }

    // Every input must come from an initializer, a graph input, or a
    // preceding node.
    let graph_inputs: HashSet<&str> = g.inputs.iter().map(|vi| vi.name.as_str()).collect();
    let mut available: HashSet<&str> = graph_inputs.clone();
    available.extend(g.initializers.keys().map(|k| k.as_str()));
    let mut seen_outputs: HashSet<&str> = HashSet::new();
    for (idx, node) in g.nodes.iter().enumerate() {
        for input in &node.inputs {
            if input.is_empty() {
                continue;
            }
            if available.contains(input.as_str()) || seen_outputs.contains(input.as_str()) {
                continue;
            }
            if produced.contains_key(input.as_str()) {
                diags.push(Diagnostic::error(
                    node_label(g, idx),
                    format!("input '{input}' is produced by a later node (graph not topologically sorted)"),
                ));
            } else {
                diags.push(Diagnostic::error(
                    node_label(g, idx),
                    format!("input '{input}' is not produced by any initializer, graph input, or node"),
                ));
            }
        }
        for out in &node.outputs {
            seen_outputs.insert(out.as_str());
        }
    }

    if topological_order(g).is_err() {
        diags.push(Diagnostic::error(g.name.clone(), "graph contains a cycle"));
    }

    for vi in g.inputs.iter().chain(&g.outputs).chain(&g.value_info) {
        if vi.name.is_empty() {
            diags.push(Diagnostic::error("graph", "value info with empty name"));
        }
    }

    // QONNX operator checks.
    for (idx, node) in g.nodes.iter().enumerate() {
        if !node.is_qonnx() {
            continue;
        }
        let label = node_label(g, idx);
        let arity = match node.op_type.as_str() {
            "Quant" => 4,
            "BipolarQuant" => 2,
            "Trunc" => 5,
            _ => unreachable!(),
        };
        if node.inputs.len() != arity {
            diags.push(Diagnostic::error(
                label.clone(),
                format!("{} expects {} inputs, found {}", node.op_type, arity, node.inputs.len()),
            ));
            continue;
        }
        if node.outputs.len() != 1 {
            diags.push(Diagnostic::error(
                label.clone(),
                format!("{} expects 1 output, found {}", node.op_type, node.outputs.len()),
            ));
        }

        let constant = |i: usize| node.inputs.get(i).and_then(|n| g.initializers.get(n));

        // scale is input 1 for all three ops
        if let Some(scale) = constant(1) {
            if scalar_f64s(scale).iter().any(|&s| s.is_nan() || s <= 0.0) {
                diags.push(Diagnostic::error(
                    label.clone(),
                    "scale must be a positive scale factor",
                ));
            }
        }

        let check_bw = |diags: &mut Vec<Diagnostic>, t: Option<&TensorValue>, what: &str| {
            if let Some(bw) = t {
                if scalar_f64s(bw).iter().any(|&b| b < 2.0) {
                    diags.push(Diagnostic::error(
                        label.clone(),
                        format!("{what} is restricted to be >= 2"),
                    ));
                }
            }
        };
        match node.op_type.as_str() {
            "Quant" => {
                check_bw(&mut diags, constant(3), "bit_width");
                if let Some(zp) = constant(2) {
                    if scalar_f64s(zp).iter().any(|&z| z.fract() != 0.0) {
                        diags.push(Diagnostic::warning(
                            label.clone(),
                            "constant zero_point is not integer-valued",
                        ));
                    }
                }
            }
            "Trunc" => {
                check_bw(&mut diags, constant(3), "in_bit_width");
                check_bw(&mut diags, constant(4), "out_bit_width");
            }
            _ => {}
        }
    }

    // Materialized tensors must satisfy the shape/count invariant by
    // construction; double-check anyway so hand-built graphs are covered.
    for (name, t) in &g.initializers {
        let count: usize = t.shape.iter().product();
        if count != t.len() {
            diags.push(Diagnostic::error(
                name.clone(),
                format!("initializer shape {:?} does not match element count {}", t.shape, t.len()),
            ));
        }
        if let TensorData::Bool(_) = t.data {
            // fine; listed for completeness
        }
    }

    diags
}

fn node_label(g: &Graph, idx: usize) -> String {
    let node = &g.nodes[idx];
    if node.name.is_empty() {
        format!("{}#{}", node.op_type, idx)
    } else {
        node.name.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{AttrValue, DType, Model, NodeDef, ValueInfo};

    fn quant_node(inputs: Vec<&str>, output: &str) -> NodeDef {
        NodeDef::new("Quant", inputs, vec![output])
            .with_domain(crate::ir::QONNX_DOMAIN)
            .with_attr("signed", AttrValue::Int(1))
            .with_attr("narrow", AttrValue::Int(0))
            .with_attr("rounding_mode", AttrValue::Str("ROUND".into()))
    }

    fn base_graph() -> Graph {
        let mut g = Graph::default();
        g.inputs.push(ValueInfo::tensor("x", DType::F32, vec![1, 4]));
        g.outputs.push(ValueInfo::tensor("y", DType::F32, vec![1, 4]));
        g.initializers.insert("s".into(), TensorValue::scalar_f32(0.5));
        g.initializers.insert("z".into(), TensorValue::scalar_f32(0.0));
        g.initializers.insert("b".into(), TensorValue::scalar_f32(4.0));
        g.nodes.push(quant_node(vec!["x", "s", "z", "b"], "y"));
        g
    }

    #[test]
    fn valid_fixture_is_clean() {
        let m = Model::for_graph(base_graph());
        assert!(validate_model(&m).is_empty(), "{:?}", validate_model(&m));
    }

    #[test]
    fn bit_width_below_two_flagged() {
        let mut g = base_graph();
        g.initializers.insert("b".into(), TensorValue::scalar_f32(1.0));
        let diags = validate_model(&Model::for_graph(g));
        assert!(diags.iter().any(|d| d.message.contains(">= 2")), "{diags:?}");
    }

    #[test]
    fn negative_scale_flagged() {
        let mut g = base_graph();
        g.initializers.insert("s".into(), TensorValue::scalar_f32(-0.5));
        let diags = validate_model(&Model::for_graph(g));
        assert!(diags.iter().any(|d| d.message.contains("positive")), "{diags:?}");
    }

    #[test]
    fn undefined_tensor_flagged() {
        let mut g = base_graph();
        g.nodes[0].inputs[0] = "missing".into();
        let diags = validate_model(&Model::for_graph(g));
        assert!(diags.iter().any(|d| d.message.contains("not produced")), "{diags:?}");
    }

    #[test]
    fn topo_identity_when_sorted() {
        let g = base_graph();
        assert_eq!(topological_order(&g).unwrap(), vec![0]);
    }

    #[test]
    fn topo_stable_for_independent_nodes() {
        let mut g = Graph::default();
        g.inputs.push(ValueInfo::tensor("a", DType::F32, vec![1]));
        g.inputs.push(ValueInfo::tensor("b", DType::F32, vec![1]));
        g.nodes.push(NodeDef::new("Relu", vec!["b"], vec!["rb"]));
        g.nodes.push(NodeDef::new("Relu", vec!["a"], vec!["ra"]));
        assert_eq!(topological_order(&g).unwrap(), vec![0, 1]);
    }

    #[test]
    fn topo_resorts_reversed_chain() {
        let mut g = Graph::default();
        g.inputs.push(ValueInfo::tensor("a", DType::F32, vec![1]));
        g.nodes.push(NodeDef::new("Relu", vec!["mid"], vec!["out"]));
        g.nodes.push(NodeDef::new("Relu", vec!["a"], vec!["mid"]));
        assert_eq!(topological_order(&g).unwrap(), vec![1, 0]);
    }

    #[test]
    fn self_reference_is_cycle() {
        let mut g = Graph::default();
        g.nodes.push(NodeDef::new("Relu", vec!["t"], vec!["t"]));
        assert!(matches!(topological_order(&g), Err(Error::Cycle)));
    }

    #[test]
    fn two_node_cycle() {
        let mut g = Graph::default();
        g.nodes.push(NodeDef::new("Relu", vec!["b2"], vec!["a2"]));
        g.nodes.push(NodeDef::new("Relu", vec!["a2"], vec!["b2"]));
        assert!(matches!(topological_order(&g), Err(Error::Cycle)));
        let diags = validate_model(&Model::for_graph(g));
        assert!(diags.iter().any(|d| d.message.contains("cycle")));
    }
}
