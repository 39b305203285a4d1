//! Shared fixture builders for the integration suites.

#![allow(dead_code)]

use qonnx_kit::ir::{
    AttrValue, DType, Graph, Model, NodeDef, TensorData, TensorValue, ValueInfo, QONNX_DOMAIN,
};

pub fn scalar(v: f32) -> TensorValue {
    TensorValue::scalar_f32(v)
}

/// A single Quant node over one graph input.
pub fn quant_model(scale: f32, zero_point: f32, bit_width: f32, signed: bool, narrow: bool, dims: Vec<usize>) -> Model {
    let mut g = Graph::default();
    g.inputs.push(ValueInfo::tensor("x", DType::F32, dims.clone()));
    g.outputs.push(ValueInfo::tensor("y", DType::F32, dims));
    g.initializers.insert("s".into(), scalar(scale));
    g.initializers.insert("z".into(), scalar(zero_point));
    g.initializers.insert("b".into(), scalar(bit_width));
    g.nodes.push(
        NodeDef::new("Quant", vec!["x", "s", "z", "b"], vec!["y"])
            .with_domain(QONNX_DOMAIN)
            .with_name("q0")
            .with_attr("signed", AttrValue::Int(i64::from(signed)))
            .with_attr("narrow", AttrValue::Int(i64::from(narrow)))
            .with_attr("rounding_mode", AttrValue::Str("ROUND".into())),
    );
    Model::for_graph(g)
}

/// Quant -> MatMul -> Quant: an activation quantizer, a quantized weight
/// matrix, and an output quantizer.
pub fn quant_matmul_quant(
    rows: usize,
    cols: usize,
    weights: Vec<f32>,
    act_bits: f32,
    w_bits: f32,
    out_bits: f32,
) -> Model {
    let mut g = Graph::default();
    g.inputs.push(ValueInfo::tensor("x", DType::F32, vec![1, rows]));
    g.outputs.push(ValueInfo::tensor("y", DType::F32, vec![1, cols]));
    g.initializers.insert("w".into(), TensorValue::f32(vec![rows, cols], weights));
    for (name, v) in [
        ("s_a", 0.125), ("z_a", 0.0),
        ("s_w", 0.25), ("z_w", 0.0),
        ("s_o", 0.5), ("z_o", 0.0),
    ] {
        g.initializers.insert(name.into(), scalar(v));
    }
    g.initializers.insert("b_a".into(), scalar(act_bits));
    g.initializers.insert("b_w".into(), scalar(w_bits));
    g.initializers.insert("b_o".into(), scalar(out_bits));
    let quant = |name: &str, ins: Vec<&str>, out: &str| {
        NodeDef::new("Quant", ins, vec![out])
            .with_domain(QONNX_DOMAIN)
            .with_name(name)
            .with_attr("signed", AttrValue::Int(1))
    };
    g.nodes.push(quant("qa", vec!["x", "s_a", "z_a", "b_a"], "xq"));
    g.nodes.push(quant("qw", vec!["w", "s_w", "z_w", "b_w"], "wq"));
    g.nodes.push(NodeDef::new("MatMul", vec!["xq", "wq"], vec!["h"]).with_name("mm"));
    g.nodes.push(quant("qo", vec!["h", "s_o", "z_o", "b_o"], "y"));
    Model::for_graph(g)
}

/// The dynamic-reshape idiom: Shape -> Gather -> Unsqueeze -> Concat
/// computing a [N, -1] target feeding a Reshape before a MatMul.
pub fn reshape_chain_mlp() -> Model {
    let mut g = Graph::default();
    g.inputs.push(ValueInfo::tensor("x", DType::F32, vec![1, 4, 7, 7]));
    g.outputs.push(ValueInfo { name: "y".into(), elem_type: DType::F32, shape: None });
    g.initializers.insert(
        "idx".into(),
        TensorValue::new(vec![], TensorData::I64(vec![0])).unwrap(),
    );
    g.initializers.insert(
        "rest".into(),
        TensorValue::new(vec![1], TensorData::I64(vec![-1])).unwrap(),
    );
    let w: Vec<f32> = (0..4 * 7 * 7 * 3).map(|i| (i % 13) as f32 * 0.1 - 0.6).collect();
    g.initializers.insert("w".into(), TensorValue::f32(vec![4 * 7 * 7, 3], w));
    g.nodes.push(NodeDef::new("Shape", vec!["x"], vec!["xs"]).with_name("shape"));
    g.nodes.push(NodeDef::new("Gather", vec!["xs", "idx"], vec!["n"]).with_name("gather"));
    g.nodes.push(
        NodeDef::new("Unsqueeze", vec!["n"], vec!["n1"])
            .with_name("unsqueeze")
            .with_attr("axes", AttrValue::Ints(vec![0])),
    );
    g.nodes.push(
        NodeDef::new("Concat", vec!["n1", "rest"], vec!["spec"])
            .with_name("concat")
            .with_attr("axis", AttrValue::Int(0)),
    );
    g.nodes.push(NodeDef::new("Reshape", vec!["x", "spec"], vec!["flat"]).with_name("reshape"));
    g.nodes.push(NodeDef::new("MatMul", vec!["flat", "w"], vec!["y"]).with_name("mm"));
    Model::for_graph(g)
}

/// Conv -> Relu -> Conv over a small image; weights deterministic.
pub fn conv_chain(channels_in: usize, channels_mid: usize, channels_out: usize) -> Model {
    let mut g = Graph::default();
    g.inputs.push(ValueInfo::tensor("x", DType::F32, vec![1, channels_in, 8, 8]));
    g.outputs.push(ValueInfo::tensor("y", DType::F32, vec![1, channels_out, 8, 8]));
    let weight = |o: usize, i: usize| -> Vec<f32> {
        (0..o * i * 9).map(|n| ((n * 7 + 3) % 11) as f32 * 0.05 - 0.25).collect()
    };
    g.initializers.insert(
        "w1".into(),
        TensorValue::f32(vec![channels_mid, channels_in, 3, 3], weight(channels_mid, channels_in)),
    );
    g.initializers.insert(
        "w2".into(),
        TensorValue::f32(vec![channels_out, channels_mid, 3, 3], weight(channels_out, channels_mid)),
    );
    let conv = |name: &str, x: &str, w: &str, y: &str| {
        NodeDef::new("Conv", vec![x, w, ""], vec![y])
            .with_name(name)
            .with_attr("kernel_shape", AttrValue::Ints(vec![3, 3]))
            .with_attr("pads", AttrValue::Ints(vec![1, 1, 1, 1]))
    };
    g.nodes.push(conv("conv1", "x", "w1", "c1"));
    g.nodes.push(NodeDef::new("Relu", vec!["c1"], vec!["r1"]).with_name("relu"));
    g.nodes.push(conv("conv2", "r1", "w2", "y"));
    Model::for_graph(g)
}

/// TFC-style MLP 784 -> 64 -> 64 -> 64 -> 10. Weights are quantized with
/// BipolarQuant when `bit_width` is 1, otherwise with a signed Quant.
pub fn tfc(bit_width: f32) -> Model {
    let mut g = Graph::default();
    g.inputs.push(ValueInfo::tensor("x", DType::F32, vec![1, 784]));
    let dims = [(784usize, 64usize), (64, 64), (64, 64), (64, 10)];
    let mut cur = "x".to_string();
    for (i, (rows, cols)) in dims.iter().enumerate() {
        let w = format!("w{i}");
        let wq = format!("wq{i}");
        let y = format!("h{i}");
        let data: Vec<f32> = (0..rows * cols).map(|n| if n % 2 == 0 { 0.7 } else { -0.7 }).collect();
        g.initializers.insert(w.clone(), TensorValue::f32(vec![*rows, *cols], data));
        if bit_width == 1.0 {
            let s = format!("w{i}_s");
            g.initializers.insert(s.clone(), scalar(1.0));
            g.nodes.push(
                NodeDef::new("BipolarQuant", vec![&w, &s], vec![&wq])
                    .with_domain(QONNX_DOMAIN)
                    .with_name(&format!("wq_node{i}")),
            );
        } else {
            for (suffix, v) in [("s", 0.5), ("z", 0.0), ("b", bit_width)] {
                g.initializers.insert(format!("w{i}_{suffix}"), scalar(v));
            }
            g.nodes.push(
                NodeDef::new(
                    "Quant",
                    vec![&w, &format!("w{i}_s"), &format!("w{i}_z"), &format!("w{i}_b")],
                    vec![&wq],
                )
                .with_domain(QONNX_DOMAIN)
                .with_name(&format!("wq_node{i}"))
                .with_attr("signed", AttrValue::Int(1)),
            );
        }
        g.nodes.push(NodeDef::new("MatMul", vec![&cur, &wq], vec![&y]).with_name(&format!("fc{i}")));
        cur = y;
    }
    g.outputs.push(ValueInfo::tensor(cur, DType::F32, vec![1, 10]));
    Model::for_graph(g)
}
