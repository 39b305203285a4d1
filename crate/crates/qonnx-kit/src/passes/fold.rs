//! Constant folding: nodes whose inputs are all initializers are evaluated
//! with the reference executor and replaced by initializers.

use std::collections::HashMap;

use crate::error::Result;
use crate::executor::{execute_node, has_kernel, ExecutionContext};
use crate::ir::{topological_order, Model};

use super::PassReport;

pub fn fold_constants(m: &Model) -> Result<(Model, PassReport)> {
    let mut report = PassReport::new("fold-constants", m.graph.nodes.len());
    let mut out = m.clone();

    let order = topological_order(&out.graph)?;
    let mut folded: Vec<usize> = Vec::new();
    {
        let graph_inputs: std::collections::HashSet<&str> =
            out.graph.inputs.iter().map(|vi| vi.name.as_str()).collect();

        // bindings start from the initializers and grow as nodes fold
        let mut bindings: HashMap<String, crate::ir::TensorValue> = out
            .graph
            .initializers
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();

        for idx in order {
            let node = &out.graph.nodes[idx];
            let all_constant = !node.inputs.is_empty()
                && node.inputs.iter().all(|n| {
                    n.is_empty() || (bindings.contains_key(n) && !graph_inputs.contains(n.as_str()))
                });
            if !all_constant {
                continue;
            }
            if !has_kernel(&node.domain, &node.op_type) {
                report.notes.push(format!(
                    "constant node '{}' ({}) left unfolded: no kernel",
                    node.name, node.op_type
                ));
                continue;
            }
            let ctx = ExecutionContext { model: m, bindings: std::mem::take(&mut bindings) };
            let values = execute_node(node, &ctx)?;
            bindings = ctx.bindings;
            for (name, value) in node.outputs.iter().zip(values) {
                if !name.is_empty() {
                    bindings.insert(name.clone(), value);
                }
            }
            folded.push(idx);
        }

        for &idx in &folded {
            let node = &out.graph.nodes[idx];
            for name in &node.outputs {
                if !name.is_empty() {
                    out.graph
                        .initializers
                        .insert(name.clone(), bindings[name].clone());
                }
            }
        }
    }

    let keep: Vec<bool> = {
        let mut keep = vec![true; out.graph.nodes.len()];
        for &idx in &folded {
            keep[idx] = false;
        }
        keep
    };
    let mut iter = keep.iter();
    out.graph.nodes.retain(|_| *iter.next().unwrap());

    report.rewrites_applied = folded.len();
    report.nodes_after = out.graph.nodes.len();
    log::debug!(
        "fold-constants: folded {} node(s), {} -> {}",
        report.rewrites_applied,
        report.nodes_before,
        report.nodes_after
    );
    Ok((out, report))
}
