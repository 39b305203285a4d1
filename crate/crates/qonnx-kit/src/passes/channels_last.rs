//! Channels-first (NCHW) to channels-last (NHWC) layout conversion.
//!
//! Layout-sensitive ops keep their standard op_type and gain a
//! `layout = "NHWC"` attribute that the executor honours; Transpose nodes
//! are inserted at graph boundaries and wherever a layout-agnostic region
//! meets a shape-dependent op, then adjacent inverse pairs are cancelled.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::ir::{
    topological_order, AttrValue, Model, NodeDef, TensorValue, QONNX_DOMAIN,
};

use super::shapes::inferred_shapes;
use super::PassReport;

const TO_NHWC: [usize; 4] = [0, 2, 3, 1];
const TO_NCHW: [usize; 4] = [0, 3, 1, 2];
/// NCHW axis index -> NHWC axis index.
const AXIS_MAP: [usize; 4] = [0, 3, 1, 2];

/// Per-tensor layout annotation after conversion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayoutTag {
    ChannelsFirst,
    ChannelsLast,
    /// Rank < 3: the tensor has no spatial/channel structure to permute.
    RankLt3Neutral,
}

fn is_standard(domain: &str) -> bool {
    domain.is_empty() || domain == "ai.onnx"
}

fn is_sensitive(node: &NodeDef) -> bool {
    is_standard(&node.domain)
        && matches!(
            node.op_type.as_str(),
            "Conv"
                | "MaxPool"
                | "AveragePool"
                | "GlobalAveragePool"
                | "BatchNormalization"
                | "Pad"
        )
}

fn is_converted(node: &NodeDef) -> bool {
    node.attr_str("layout") == Some("NHWC")
}

/// Ops that carry no layout meaning of their own: a channels-last tensor
/// flows straight through and constants are permuted to match.
fn is_agnostic(node: &NodeDef) -> bool {
    if node.domain == QONNX_DOMAIN {
        return matches!(node.op_type.as_str(), "Quant" | "BipolarQuant" | "Trunc");
    }
    is_standard(&node.domain)
        && matches!(
            node.op_type.as_str(),
            "Add" | "Sub" | "Mul" | "Div" | "Relu" | "Clip" | "Identity" | "Sign"
                | "QuantizeLinear" | "DequantizeLinear"
        )
}

pub fn to_channels_last(m: &Model) -> Result<(Model, PassReport)> {
    to_channels_last_with(m, true)
}

struct Converter<'a> {
    g: &'a mut crate::ir::Graph,
    /// true = channels-last
    cl: HashMap<String, bool>,
    ranks: HashMap<String, usize>,
    /// (tensor, to_channels_last) -> name of the transposed copy
    converted: HashMap<(String, bool), String>,
    nodes: Vec<NodeDef>,
    fresh: usize,
    rewrites: usize,
}

impl Converter<'_> {
    fn rank(&self, name: &str) -> Option<usize> {
        self.ranks.get(name).copied()
    }

    fn is_cl(&self, name: &str) -> bool {
        self.cl.get(name).copied().unwrap_or(false)
    }

    /// Return a name holding `name`'s data in the requested layout,
    /// inserting a Transpose when needed.
    fn ensure(&mut self, name: &str, want_cl: bool) -> String {
        if self.is_cl(name) == want_cl {
            return name.to_string();
        }
        let key = (name.to_string(), want_cl);
        if let Some(existing) = self.converted.get(&key) {
            return existing.clone();
        }
        let (suffix, perm) = if want_cl { ("nhwc", TO_NHWC) } else { ("nchw", TO_NCHW) };
        let out = format!("{name}_{suffix}");
        self.fresh += 1;
        self.nodes.push(
            NodeDef::new("Transpose", vec![name], vec![out.as_str()])
                .with_name(&format!("transpose_{suffix}_{}", self.fresh))
                .with_attr("perm", AttrValue::Ints(perm.iter().map(|&p| p as i64).collect())),
        );
        self.cl.insert(out.clone(), want_cl);
        if let Some(r) = self.rank(name) {
            self.ranks.insert(out.clone(), r);
        }
        self.converted.insert(key, out.clone());
        self.rewrites += 1;
        out
    }

    /// Permute a non-scalar constant so it broadcasts correctly against
    /// channels-last activations; rewires the given input slot.
    fn permute_constant(&mut self, node: &mut NodeDef, slot: usize) -> Result<()> {
        let name = node.inputs[slot].clone();
        let Some(t) = self.g.initializers.get(&name) else { return Ok(()) };
        if t.len() <= 1 {
            return Ok(());
        }
        if t.shape.len() > 4 {
            return Err(Error::Rank(format!(
                "constant '{}' has rank {} > 4",
                name,
                t.shape.len()
            )));
        }
        let key = (name.clone(), true);
        if let Some(existing) = self.converted.get(&key) {
            node.inputs[slot] = existing.clone();
            return Ok(());
        }
        let mut shape = vec![1usize; 4 - t.shape.len()];
        shape.extend_from_slice(&t.shape);
        let padded = TensorValue { shape, data: t.data.clone() };
        let permuted = crate::executor::transpose_tensor(&padded, &TO_NHWC)?;
        let new_name = format!("{name}_nhwc");
        self.g.initializers.insert(new_name.clone(), permuted);
        self.converted.insert(key, new_name.clone());
        node.inputs[slot] = new_name;
        self.rewrites += 1;
        Ok(())
    }

    fn variable_inputs(&self, node: &NodeDef) -> Vec<usize> {
        node.inputs
            .iter()
            .enumerate()
            .filter(|(_, n)| !n.is_empty() && !self.g.initializers.contains_key(*n))
            .map(|(i, _)| i)
            .collect()
    }

    /// Force every channels-last input back to channels-first.
    fn demote_inputs(&mut self, node: &mut NodeDef) {
        for i in 0..node.inputs.len() {
            let name = node.inputs[i].clone();
            if !name.is_empty() && self.is_cl(&name) {
                node.inputs[i] = self.ensure(&name, false);
            }
        }
    }
}

pub fn to_channels_last_with(m: &Model, keep_io_layout: bool) -> Result<(Model, PassReport)> {
    let mut report = PassReport::new("to-channels-last", m.graph.nodes.len());

    let pending = m
        .graph
        .nodes
        .iter()
        .any(|n| is_sensitive(n) && !is_converted(n));
    if !pending {
        report.notes.push("no channels-first layout-sensitive nodes".into());
        return Ok((m.clone(), report));
    }

    let info = inferred_shapes(m)?;
    let order = topological_order(&m.graph)?;

    let mut out = m.clone();
    let mut conv = Converter {
        g: &mut out.graph,
        cl: HashMap::new(),
        ranks: info.iter().map(|(k, v)| (k.clone(), v.dims.len())).collect(),
        converted: HashMap::new(),
        nodes: Vec::new(),
        fresh: 0,
        rewrites: 0,
    };

    if !keep_io_layout {
        for vi in conv.g.inputs.iter_mut() {
            let Some(dims) = &mut vi.shape else { continue };
            if dims.len() == 4 {
                *dims = TO_NHWC.iter().map(|&p| dims[p].clone()).collect();
                conv.cl.insert(vi.name.clone(), true);
            }
        }
    }

    let source_nodes: Vec<NodeDef> = order.iter().map(|&i| m.graph.nodes[i].clone()).collect();
    conv.g.nodes.clear();

    for mut node in source_nodes {
        if is_sensitive(&node) && !is_converted(&node) {
            convert_sensitive(&mut conv, &mut node)?;
        } else if is_agnostic(&node) {
            propagate_agnostic(&mut conv, &mut node)?;
        } else if is_standard(&node.domain) && node.op_type == "Concat" {
            convert_concat(&mut conv, &mut node);
        } else {
            conv.demote_inputs(&mut node);
        }
        conv.nodes.push(node);
    }

    // graph outputs: either restore channels-first at the boundary or
    // re-declare the output shape as channels-last
    let output_names: Vec<String> = conv.g.outputs.iter().map(|vi| vi.name.clone()).collect();
    for name in output_names {
        if !conv.is_cl(&name) {
            continue;
        }
        if keep_io_layout {
            let inner = format!("{name}_nhwc");
            for n in conv.nodes.iter_mut() {
                for t in n.inputs.iter_mut().chain(n.outputs.iter_mut()) {
                    if *t == name {
                        *t = inner.clone();
                    }
                }
            }
            conv.fresh += 1;
            conv.nodes.push(
                NodeDef::new("Transpose", vec![inner.as_str()], vec![name.as_str()])
                    .with_name(&format!("transpose_nchw_{}", conv.fresh))
                    .with_attr(
                        "perm",
                        AttrValue::Ints(TO_NCHW.iter().map(|&p| p as i64).collect()),
                    ),
            );
            conv.rewrites += 1;
        } else if let Some(vi) = conv.g.outputs.iter_mut().find(|vi| vi.name == name) {
            if let Some(dims) = &mut vi.shape {
                if dims.len() == 4 {
                    *dims = TO_NHWC.iter().map(|&p| dims[p].clone()).collect();
                }
            }
        }
    }

    let rewrites = conv.rewrites;
    let nodes = std::mem::take(&mut conv.nodes);
    drop(conv);
    out.graph.nodes = nodes;
    cancel_transposes(&mut out);

    out.graph.value_info.clear();
    let out = super::shapes::infer_shapes(&out)?;

    report.rewrites_applied = rewrites;
    report.nodes_after = out.graph.nodes.len();
    log::debug!(
        "to-channels-last: {} rewrite(s), {} -> {} nodes",
        report.rewrites_applied,
        report.nodes_before,
        report.nodes_after
    );
    Ok((out, report))
}

fn convert_sensitive(conv: &mut Converter<'_>, node: &mut NodeDef) -> Result<()> {
    let data = node.inputs[0].clone();
    let rank = conv.rank(&data);
    if rank != Some(4) {
        if node.op_type == "BatchNormalization" || node.op_type == "Pad" {
            // rank-2 BatchNorm / generic Pad carry no spatial layout
            conv.demote_inputs(node);
            return Ok(());
        }
        return Err(Error::Rank(format!(
            "'{}' input '{}' has rank {:?}, need 4",
            node.op_type, data, rank
        )));
    }
    if node.op_type == "Pad" {
        // opset-18 Pad with an axes input is axis-relative; leave it alone
        if node.inputs.get(3).is_some_and(|n| !n.is_empty()) {
            conv.demote_inputs(node);
            return Ok(());
        }
        permute_pads(conv, node)?;
    }
    node.inputs[0] = conv.ensure(&data, true);
    node.attributes.insert("layout".into(), AttrValue::Str("NHWC".into()));
    for out in &node.outputs {
        if !out.is_empty() {
            conv.cl.insert(out.clone(), true);
            conv.ranks.insert(out.clone(), 4);
        }
    }
    conv.rewrites += 1;
    Ok(())
}

fn permute_pads(conv: &mut Converter<'_>, node: &mut NodeDef) -> Result<()> {
    const PERM8: [usize; 8] = [0, 2, 3, 1, 4, 6, 7, 5];
    if let Some(p) = node.attr_ints("pads") {
        if p.len() == 8 {
            let permuted: Vec<i64> = PERM8.iter().map(|&i| p[i]).collect();
            node.attributes.insert("pads".into(), AttrValue::Ints(permuted));
        }
        return Ok(());
    }
    let Some(name) = node.inputs.get(1).filter(|n| !n.is_empty()).cloned() else {
        return Ok(());
    };
    let Some(t) = conv.g.initializers.get(&name) else {
        return Err(Error::DynamicParam(format!("Pad pads '{name}'")));
    };
    let pads = t.to_i64_vec()?;
    if pads.len() != 8 {
        return Err(Error::Rank(format!("Pad pads length {}", pads.len())));
    }
    let permuted: Vec<i64> = PERM8.iter().map(|&i| pads[i]).collect();
    let new_name = format!("{name}_nhwc");
    conv.g.initializers.insert(
        new_name.clone(),
        TensorValue::new(vec![8], crate::ir::TensorData::I64(permuted))?,
    );
    node.inputs[1] = new_name;
    Ok(())
}

fn propagate_agnostic(conv: &mut Converter<'_>, node: &mut NodeDef) -> Result<()> {
    let vars = conv.variable_inputs(node);
    let any_cl = vars.iter().any(|&i| conv.is_cl(&node.inputs[i]));
    if !any_cl {
        return Ok(());
    }
    // a non-4D variable operand cannot be re-aligned by transposition;
    // fall back to channels-first for the whole node
    let compatible = vars.iter().all(|&i| {
        let name = &node.inputs[i];
        conv.is_cl(name) || conv.rank(name).is_some_and(|r| r == 4) || {
            // scalars broadcast identically in either layout
            conv.rank(name) == Some(0)
        }
    });
    if !compatible {
        conv.demote_inputs(node);
        return Ok(());
    }
    for &i in &vars {
        let name = node.inputs[i].clone();
        node.inputs[i] = conv.ensure(&name, true);
    }
    for i in 0..node.inputs.len() {
        if !vars.contains(&i) && !node.inputs[i].is_empty() {
            conv.permute_constant(node, i)?;
        }
    }
    if matches!(node.op_type.as_str(), "QuantizeLinear" | "DequantizeLinear") {
        if let Some(axis) = node.attr_i64("axis") {
            if (0..4).contains(&axis) {
                node.attributes
                    .insert("axis".into(), AttrValue::Int(AXIS_MAP[axis as usize] as i64));
            }
        }
    }
    for out in &node.outputs {
        if !out.is_empty() {
            conv.cl.insert(out.clone(), true);
            if let Some(r) = conv.rank(&node.inputs[vars[0]]) {
                conv.ranks.insert(out.clone(), r);
            }
        }
    }
    Ok(())
}

fn convert_concat(conv: &mut Converter<'_>, node: &mut NodeDef) {
    let vars = conv.variable_inputs(node);
    let all_cl = !vars.is_empty()
        && vars.iter().all(|&i| {
            conv.is_cl(&node.inputs[i]) && conv.rank(&node.inputs[i]) == Some(4)
        })
        && vars.len() == node.inputs.len();
    if !all_cl {
        conv.demote_inputs(node);
        return;
    }
    let axis = node.attr_i64("axis").unwrap_or(0);
    let axis = if axis < 0 { axis + 4 } else { axis };
    if (0..4).contains(&axis) {
        node.attributes
            .insert("axis".into(), AttrValue::Int(AXIS_MAP[axis as usize] as i64));
    }
    for out in &node.outputs {
        conv.cl.insert(out.clone(), true);
        conv.ranks.insert(out.clone(), 4);
    }
    conv.rewrites += 1;
}

fn transpose_perm(node: &NodeDef) -> Option<Vec<usize>> {
    if !(is_standard(&node.domain) && node.op_type == "Transpose") {
        return None;
    }
    node.attr_ints("perm")
        .map(|p| p.iter().map(|&v| v as usize).collect())
}

/// Remove adjacent inverse Transpose pairs (and identity Transposes) until
/// a fixpoint, bounded by the node count.
fn cancel_transposes(m: &mut Model) {
    let g = &mut m.graph;
    for _ in 0..g.nodes.len() + 1 {
        let outputs: std::collections::HashSet<&str> =
            g.outputs.iter().map(|vi| vi.name.as_str()).collect();

        let mut consumers: HashMap<&str, Vec<usize>> = HashMap::new();
        for (i, n) in g.nodes.iter().enumerate() {
            for inp in &n.inputs {
                consumers.entry(inp.as_str()).or_default().push(i);
            }
        }

        let mut action: Option<(Vec<usize>, String, String)> = None; // (remove, from, to)
        'scan: for (ai, a) in g.nodes.iter().enumerate() {
            let Some(p) = transpose_perm(a) else { continue };
            let a_out = &a.outputs[0];
            if (0..p.len()).all(|i| p[i] == i) && !outputs.contains(a_out.as_str()) {
                action = Some((vec![ai], a_out.clone(), a.inputs[0].clone()));
                break;
            }
            if outputs.contains(a_out.as_str()) {
                continue;
            }
            let cons = consumers.get(a_out.as_str()).cloned().unwrap_or_default();
            if cons.len() != 1 {
                continue;
            }
            let bi = cons[0];
            let b = &g.nodes[bi];
            let Some(q) = transpose_perm(b) else { continue };
            if p.len() != q.len() || !(0..p.len()).all(|i| p[q[i]] == i) {
                continue;
            }
            let b_out = &b.outputs[0];
            if outputs.contains(b_out.as_str()) {
                continue 'scan;
            }
            action = Some((vec![ai, bi], b_out.clone(), a.inputs[0].clone()));
            break;
        }

        let Some((mut remove, from, to)) = action else { break };
        remove.sort_unstable_by(|a, b| b.cmp(a));
        for idx in remove {
            g.nodes.remove(idx);
        }
        for n in g.nodes.iter_mut() {
            for inp in n.inputs.iter_mut() {
                if *inp == from {
                    *inp = to.clone();
                }
            }
        }
    }
}

/// Per-tensor layout annotation for a (possibly converted) model.
pub fn layout_tags(m: &Model) -> Result<HashMap<String, LayoutTag>> {
    let info = inferred_shapes(m)?;
    let rank = |name: &str| info.get(name).map(|ti| ti.dims.len());
    let mut tags: HashMap<String, LayoutTag> = HashMap::new();
    let tag_of = |tags: &HashMap<String, LayoutTag>, name: &str| {
        tags.get(name).copied().unwrap_or(match rank(name) {
            Some(r) if r < 3 => LayoutTag::RankLt3Neutral,
            _ => LayoutTag::ChannelsFirst,
        })
    };

    for name in m
        .graph
        .inputs
        .iter()
        .map(|vi| vi.name.clone())
        .chain(m.graph.initializers.keys().cloned())
    {
        let t = tag_of(&tags, &name);
        tags.insert(name, t);
    }

    for idx in topological_order(&m.graph)? {
        let node = &m.graph.nodes[idx];
        let out_tag = if is_converted(node) {
            LayoutTag::ChannelsLast
        } else if let Some(p) = transpose_perm(node) {
            let src = tag_of(&tags, &node.inputs[0]);
            match (src, p.as_slice()) {
                (LayoutTag::ChannelsFirst, p) if p == TO_NHWC => LayoutTag::ChannelsLast,
                (LayoutTag::ChannelsLast, p) if p == TO_NCHW => LayoutTag::ChannelsFirst,
                _ => src,
            }
        } else if is_agnostic(node) || node.op_type == "Concat" {
            let any_cl = node
                .inputs
                .iter()
                .filter(|n| !n.is_empty())
                .any(|n| tag_of(&tags, n) == LayoutTag::ChannelsLast);
            if any_cl {
                LayoutTag::ChannelsLast
            } else {
                LayoutTag::ChannelsFirst
            }
        } else {
            LayoutTag::ChannelsFirst
        };
        for out in &node.outputs {
            if out.is_empty() {
                continue;
            }
            let t = match rank(out) {
                Some(r) if r < 3 => LayoutTag::RankLt3Neutral,
                _ => out_tag,
            };
            tags.insert(out.clone(), t);
        }
    }
    Ok(tags)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{DType, Dim, Graph, TensorData, ValueInfo};

    fn conv_node(x: &str, w: &str, y: &str) -> NodeDef {
        NodeDef::new("Conv", vec![x, w, ""], vec![y])
            .with_attr("kernel_shape", AttrValue::Ints(vec![3, 3]))
            .with_attr("pads", AttrValue::Ints(vec![1, 1, 1, 1]))
    }

    fn conv_chain() -> Model {
        let mut g = Graph::default();
        g.inputs.push(ValueInfo::tensor("x", DType::F32, vec![1, 3, 8, 8]));
        g.outputs.push(ValueInfo::tensor("y", DType::F32, vec![1, 4, 8, 8]));
        g.initializers
            .insert("w1".into(), TensorValue::f32(vec![4, 3, 3, 3], vec![0.1; 4 * 3 * 9]));
        g.initializers
            .insert("w2".into(), TensorValue::f32(vec![4, 4, 3, 3], vec![0.1; 4 * 4 * 9]));
        g.nodes.push(conv_node("x", "w1", "c1"));
        g.nodes.push(NodeDef::new("Relu", vec!["c1"], vec!["r1"]));
        g.nodes.push(conv_node("r1", "w2", "y"));
        Model::for_graph(g)
    }

    #[test]
    fn conv_chain_gets_two_boundary_transposes() {
        let (out, report) = to_channels_last(&conv_chain()).unwrap();
        let transposes: Vec<_> =
            out.graph.nodes.iter().filter(|n| n.op_type == "Transpose").collect();
        assert_eq!(transposes.len(), 2);
        assert!(report.rewrites_applied > 0);
        assert!(out
            .graph
            .nodes
            .iter()
            .filter(|n| n.op_type == "Conv")
            .all(|n| n.attr_str("layout") == Some("NHWC")));
    }

    #[test]
    fn activation_shape_moves_channels_last() {
        let (out, _) = to_channels_last(&conv_chain()).unwrap();
        // internal conv output is annotated NHWC by shape inference
        let vi = out
            .graph
            .value_info
            .iter()
            .find(|vi| vi.name == "c1")
            .expect("c1 annotated");
        assert_eq!(
            vi.shape.as_deref(),
            Some(&[Dim::Known(1), Dim::Known(8), Dim::Known(8), Dim::Known(4)][..])
        );
    }

    #[test]
    fn mlp_unchanged() {
        let mut g = Graph::default();
        g.inputs.push(ValueInfo::tensor("x", DType::F32, vec![1, 16]));
        g.outputs.push(ValueInfo::tensor("y", DType::F32, vec![1, 8]));
        g.initializers
            .insert("w".into(), TensorValue::f32(vec![16, 8], vec![0.0; 128]));
        g.nodes.push(NodeDef::new("MatMul", vec!["x", "w"], vec!["y"]));
        let m = Model::for_graph(g);
        let (out, report) = to_channels_last(&m).unwrap();
        assert_eq!(out, m);
        assert_eq!(report.rewrites_applied, 0);
    }

    #[test]
    fn idempotent() {
        let (once, _) = to_channels_last(&conv_chain()).unwrap();
        let (twice, report) = to_channels_last(&once).unwrap();
        assert_eq!(once, twice);
        assert_eq!(report.rewrites_applied, 0);
    }

    #[test]
    fn io_layout_flag_changes_declared_shapes() {
        let (out, _) = to_channels_last_with(&conv_chain(), false).unwrap();
        assert_eq!(
            out.graph.inputs[0].shape.as_deref(),
            Some(&[Dim::Known(1), Dim::Known(8), Dim::Known(8), Dim::Known(3)][..])
        );
        assert_eq!(
            out.graph.outputs[0].shape.as_deref(),
            Some(&[Dim::Known(1), Dim::Known(8), Dim::Known(8), Dim::Known(4)][..])
        );
        assert!(!out.graph.nodes.iter().any(|n| n.op_type == "Transpose"));
    }

    #[test]
    fn rank3_conv_rejected() {
        let mut g = Graph::default();
        g.inputs.push(ValueInfo::tensor("x", DType::F32, vec![1, 3, 8]));
        g.outputs.push(ValueInfo { name: "y".into(), elem_type: DType::F32, shape: None });
        g.initializers
            .insert("w".into(), TensorValue::f32(vec![4, 3, 3], vec![0.0; 36]));
        g.nodes.push(NodeDef::new("Conv", vec!["x", "w"], vec!["y"]));
        let m = Model::for_graph(g);
        assert!(matches!(to_channels_last(&m), Err(Error::Rank(_))));
    }

    #[test]
    fn pad_pads_are_permuted() {
        let mut g = Graph::default();
        g.inputs.push(ValueInfo::tensor("x", DType::F32, vec![1, 3, 8, 8]));
        g.outputs.push(ValueInfo { name: "y".into(), elem_type: DType::F32, shape: None });
        g.initializers.insert(
            "p".into(),
            TensorValue::new(vec![8], TensorData::I64(vec![0, 0, 1, 2, 0, 0, 3, 4])).unwrap(),
        );
        g.nodes.push(NodeDef::new("Pad", vec!["x", "p"], vec!["py"]));
        g.nodes.push(
            NodeDef::new("GlobalAveragePool", vec!["py"], vec!["y"]),
        );
        let m = Model::for_graph(g);
        let (out, _) = to_channels_last(&m).unwrap();
        let pad = out.graph.nodes.iter().find(|n| n.op_type == "Pad").unwrap();
        let pads = out.graph.initializers[&pad.inputs[1]].to_i64_vec().unwrap();
        assert_eq!(pads, vec![0, 1, 2, 0, 0, 3, 4, 0]);
    }

    #[test]
    fn tags_assigned_along_edges() {
        let (out, _) = to_channels_last(&conv_chain()).unwrap();
        let tags = layout_tags(&out).unwrap();
        assert_eq!(tags["c1"], LayoutTag::ChannelsLast);
        assert_eq!(tags["r1"], LayoutTag::ChannelsLast);
        assert_eq!(tags["y"], LayoutTag::ChannelsFirst);
        assert_eq!(tags["x"], LayoutTag::ChannelsFirst);
    }
}
