//! Graph cleanup: Shape materialization, constant folding, Identity
//! removal, and dead code elimination, iterated to a fixpoint.

use std::collections::{HashMap, HashSet};

use crate::error::Result;
use crate::ir::{Model, TensorData, TensorValue};

use super::fold::fold_constants;
use super::shapes::inferred_shapes;
use super::PassReport;

pub fn cleanup(m: &Model) -> Result<(Model, PassReport)> {
    let mut report = PassReport::new("cleanup", m.graph.nodes.len());
    let mut cur = m.clone();

    loop {
        let mut changed = 0usize;
        changed += materialize_shapes(&mut cur)?;

        let (folded, frep) = fold_constants(&cur)?;
        changed += frep.rewrites_applied;
        for note in frep.notes {
            if !report.notes.contains(&note) {
                report.notes.push(note);
            }
        }
        cur = folded;

        changed += remove_identities(&mut cur, &mut report);
        changed += eliminate_dead(&mut cur);

        report.rewrites_applied += changed;
        if changed == 0 {
            break;
        }
    }

    prune_value_info(&mut cur);
    report.nodes_after = cur.graph.nodes.len();
    log::debug!(
        "cleanup: {} rewrite(s), {} -> {} nodes",
        report.rewrites_applied,
        report.nodes_before,
        report.nodes_after
    );
    Ok((cur, report))
}

/// Replace Shape nodes whose input shape is fully known with an i64
/// initializer, so downstream Gather/Concat/Reshape chains become constant.
fn materialize_shapes(m: &mut Model) -> Result<usize> {
    let info = inferred_shapes(m)?;
    let g = &mut m.graph;
    let mut removed = 0usize;
    let mut keep = Vec::with_capacity(g.nodes.len());
    for node in g.nodes.drain(..) {
        let simple = (node.domain.is_empty() || node.domain == "ai.onnx")
            && node.op_type == "Shape"
            && node.attributes.is_empty();
        let dims = simple
            .then(|| info.get(node.inputs.first()?.as_str()))
            .flatten()
            .and_then(|ti| ti.known_dims());
        match dims {
            Some(dims) if !node.outputs.is_empty() && !node.outputs[0].is_empty() => {
                let data: Vec<i64> = dims.iter().map(|&d| d as i64).collect();
                g.initializers.insert(
                    node.outputs[0].clone(),
                    TensorValue::new(vec![dims.len()], TensorData::I64(data))?,
                );
                removed += 1;
            }
            _ => keep.push(node),
        }
    }
    g.nodes = keep;
    Ok(removed)
}

fn remove_identities(m: &mut Model, report: &mut PassReport) -> usize {
    let g = &mut m.graph;
    let graph_outputs: HashSet<String> = g.outputs.iter().map(|vi| vi.name.clone()).collect();
    let graph_inputs: HashSet<String> = g.inputs.iter().map(|vi| vi.name.clone()).collect();

    let mut removed = 0usize;
    loop {
        let mut rename: Option<(String, String, usize)> = None; // (from, to, node idx)
        for (idx, node) in g.nodes.iter().enumerate() {
            if !((node.domain.is_empty() || node.domain == "ai.onnx")
                && node.op_type == "Identity")
            {
                continue;
            }
            let (Some(inp), Some(out)) = (node.inputs.first(), node.outputs.first()) else {
                continue;
            };
            if inp.is_empty() || out.is_empty() {
                continue;
            }
            if graph_outputs.contains(out) {
                // keep the declared output name: pull the producer forward
                let producible = !graph_inputs.contains(inp)
                    && !g.initializers.contains_key(inp)
                    && !graph_outputs.contains(inp);
                if producible {
                    rename = Some((inp.clone(), out.clone(), idx));
                    break;
                }
                let note = format!("identity '{}' kept: feeds a graph output from '{inp}'", node.name);
                if !report.notes.contains(&note) {
                    report.notes.push(note);
                }
            } else {
                rename = Some((out.clone(), inp.clone(), idx));
                break;
            }
        }
        let Some((from, to, idx)) = rename else { break };
        g.nodes.remove(idx);
        for node in g.nodes.iter_mut() {
            for name in node.inputs.iter_mut().chain(node.outputs.iter_mut()) {
                if *name == from {
                    *name = to.clone();
                }
            }
        }
        removed += 1;
    }
    removed
}

/// Drop nodes whose outputs are unreachable from the graph outputs, then
/// initializers no remaining node or output refers to.
fn eliminate_dead(m: &mut Model) -> usize {
    let g = &mut m.graph;
    let mut live: HashSet<String> = g.outputs.iter().map(|vi| vi.name.clone()).collect();
    let producer: HashMap<&str, usize> = g
        .nodes
        .iter()
        .enumerate()
        .flat_map(|(i, n)| n.outputs.iter().map(move |o| (o.as_str(), i)))
        .collect();

    let mut live_nodes = vec![false; g.nodes.len()];
    let mut stack: Vec<String> = live.iter().cloned().collect();
    while let Some(name) = stack.pop() {
        let Some(&idx) = producer.get(name.as_str()) else { continue };
        if live_nodes[idx] {
            continue;
        }
        live_nodes[idx] = true;
        for inp in &g.nodes[idx].inputs {
            if !inp.is_empty() && live.insert(inp.clone()) {
                stack.push(inp.clone());
            }
        }
    }

    let before = g.nodes.len() + g.initializers.len();
    let mut it = live_nodes.iter();
    g.nodes.retain(|_| *it.next().unwrap());

    let graph_inputs: HashSet<String> = g.inputs.iter().map(|vi| vi.name.clone()).collect();
    g.initializers
        .retain(|name, _| live.contains(name) || graph_inputs.contains(name));
    before - (g.nodes.len() + g.initializers.len())
}

fn prune_value_info(m: &mut Model) {
    let g = &mut m.graph;
    let present: HashSet<&String> = g
        .nodes
        .iter()
        .flat_map(|n| n.inputs.iter().chain(&n.outputs))
        .collect();
    g.value_info.retain(|vi| present.contains(&vi.name));
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{DType, Dim, Graph, NodeDef, ValueInfo};

    /// Dynamic-reshape idiom: Shape -> Gather -> Unsqueeze -> Concat feeding
    /// a Reshape, which must collapse to a single Reshape with a constant
    /// shape input.
    fn reshape_chain_model() -> Model {
        let mut g = Graph::default();
        g.inputs.push(ValueInfo::tensor("x", DType::F32, vec![1, 4, 7, 7]));
        g.outputs.push(ValueInfo {
            name: "y".into(),
            elem_type: DType::F32,
            shape: None,
        });
        g.initializers.insert(
            "idx".into(),
            TensorValue::new(vec![], TensorData::I64(vec![0])).unwrap(),
        );
        g.initializers.insert(
            "rest".into(),
            TensorValue::new(vec![1], TensorData::I64(vec![-1])).unwrap(),
        );
        g.nodes.push(NodeDef::new("Shape", vec!["x"], vec!["xs"]));
        g.nodes.push(NodeDef::new("Gather", vec!["xs", "idx"], vec!["n"]));
        g.nodes.push(
            NodeDef::new("Unsqueeze", vec!["n"], vec!["n1"])
                .with_attr("axes", crate::ir::AttrValue::Ints(vec![0])),
        );
        g.nodes.push(
            NodeDef::new("Concat", vec!["n1", "rest"], vec!["spec"])
                .with_attr("axis", crate::ir::AttrValue::Int(0)),
        );
        g.nodes.push(NodeDef::new("Reshape", vec!["x", "spec"], vec!["y"]));
        Model::for_graph(g)
    }

    #[test]
    fn reshape_chain_collapses() {
        let m = reshape_chain_model();
        let (clean, report) = cleanup(&m).unwrap();
        assert_eq!(clean.graph.nodes.len(), 1);
        assert_eq!(clean.graph.nodes[0].op_type, "Reshape");
        let spec = &clean.graph.initializers[&clean.graph.nodes[0].inputs[1]];
        assert_eq!(spec.to_i64_vec().unwrap(), vec![1, -1]);
        assert!(report.rewrites_applied > 0);
    }

    #[test]
    fn cleanup_is_idempotent() {
        let m = reshape_chain_model();
        let (once, _) = cleanup(&m).unwrap();
        let (twice, second) = cleanup(&once).unwrap();
        assert_eq!(once, twice);
        assert_eq!(second.rewrites_applied, 0);
    }

    #[test]
    fn identity_chain_removed() {
        let mut g = Graph::default();
        g.inputs.push(ValueInfo::tensor("x", DType::F32, vec![2]));
        g.outputs.push(ValueInfo::tensor("y", DType::F32, vec![2]));
        g.nodes.push(NodeDef::new("Identity", vec!["x"], vec!["a"]));
        g.nodes.push(NodeDef::new("Relu", vec!["a"], vec!["b"]));
        g.nodes.push(NodeDef::new("Identity", vec!["b"], vec!["y"]));
        let (clean, _) = cleanup(&Model::for_graph(g)).unwrap();
        assert_eq!(clean.graph.nodes.len(), 1);
        assert_eq!(clean.graph.nodes[0].op_type, "Relu");
        assert_eq!(clean.graph.nodes[0].inputs, vec!["x"]);
        assert_eq!(clean.graph.nodes[0].outputs, vec!["y"]);
    }

    #[test]
    fn passthrough_identity_kept_with_note() {
        let mut g = Graph::default();
        g.inputs.push(ValueInfo::tensor("x", DType::F32, vec![2]));
        g.outputs.push(ValueInfo::tensor("y", DType::F32, vec![2]));
        g.nodes.push(NodeDef::new("Identity", vec!["x"], vec!["y"]));
        let (clean, report) = cleanup(&Model::for_graph(g)).unwrap();
        assert_eq!(clean.graph.nodes.len(), 1);
        assert!(!report.notes.is_empty());
    }

    #[test]
    fn dead_branch_and_initializer_removed() {
        let mut g = Graph::default();
        g.inputs.push(ValueInfo::tensor("x", DType::F32, vec![2]));
        g.outputs.push(ValueInfo::tensor("y", DType::F32, vec![2]));
        g.initializers.insert("unused".into(), TensorValue::scalar_f32(1.0));
        g.nodes.push(NodeDef::new("Relu", vec!["x"], vec!["y"]));
        g.nodes.push(NodeDef::new("Relu", vec!["x"], vec!["dead"]));
        g.value_info.push(ValueInfo::tensor("dead", DType::F32, vec![2]));
        let (clean, _) = cleanup(&Model::for_graph(g)).unwrap();
        assert_eq!(clean.graph.nodes.len(), 1);
        assert!(clean.graph.initializers.is_empty());
        assert!(clean.graph.value_info.is_empty());
    }

    #[test]
    fn symbolic_shape_left_dynamic() {
        let mut m = reshape_chain_model();
        m.graph.inputs[0].shape = Some(vec![
            Dim::Symbolic("N".into()),
            Dim::Known(4),
            Dim::Known(7),
            Dim::Known(7),
        ]);
        let (clean, _) = cleanup(&m).unwrap();
        // the Shape node cannot be materialized, so the chain survives
        assert!(clean.graph.nodes.iter().any(|n| n.op_type == "Shape"));
    }
}
