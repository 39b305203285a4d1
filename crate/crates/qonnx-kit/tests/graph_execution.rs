//! End-to-end executor tests: composed graphs, QDQ consistency,
//! dynamic quantization parameters.

mod common;

use std::collections::HashMap;

use qonnx_kit::executor::execute;
use qonnx_kit::ir::{
    AttrValue, DType, Graph, Model, NodeDef, TensorData, TensorValue, ValueInfo, QONNX_DOMAIN,
};
use qonnx_kit::kernels::{quant_op, QuantParams, RoundingMode};

fn run1(m: &Model, name: &str, t: TensorValue) -> TensorValue {
    let inputs = HashMap::from([(name.to_string(), t)]);
    let mut out = execute(m, &inputs).unwrap();
    let only = m.graph.outputs[0].name.clone();
    out.remove(&only).unwrap()
}

#[test]
fn single_quant_graph_agrees_with_kernel() {
    let m = common::quant_model(0.25, 1.0, 4.0, true, false, vec![5]);
    let x = TensorValue::f32(vec![5], vec![-3.0, -0.1, 0.0, 0.6, 2.9]);
    let got = run1(&m, "x", x.clone());
    let p = QuantParams::new(
        TensorValue::scalar_f32(0.25),
        TensorValue::scalar_f32(1.0),
        TensorValue::scalar_f32(4.0),
        true,
        false,
        RoundingMode::Round,
    )
    .unwrap();
    assert_eq!(got, quant_op(&x, &p).unwrap());
}

#[test]
fn quant_matmul_quant_composes() {
    let w: Vec<f32> = (0..6).map(|i| i as f32 * 0.3 - 0.7).collect();
    let m = common::quant_matmul_quant(2, 3, w.clone(), 6.0, 4.0, 8.0);
    let x = TensorValue::f32(vec![1, 2], vec![0.4, -1.2]);
    let y = run1(&m, "x", x.clone());
    assert_eq!(y.shape, vec![1, 3]);

    // hand-composed reference through the kernels
    let q = |t: &TensorValue, s: f32, b: f32| {
        let p = QuantParams::new(
            TensorValue::scalar_f32(s),
            TensorValue::scalar_f32(0.0),
            TensorValue::scalar_f32(b),
            true,
            false,
            RoundingMode::Round,
        )
        .unwrap();
        quant_op(t, &p).unwrap()
    };
    let xq = q(&x, 0.125, 6.0).to_f64_vec();
    let wq = q(&TensorValue::f32(vec![2, 3], w), 0.25, 4.0).to_f64_vec();
    let mut h = [0f64; 3];
    for col in 0..3 {
        h[col] = xq[0] * wq[col] + xq[1] * wq[3 + col];
    }
    let h32: Vec<f32> = h.iter().map(|&v| v as f32).collect();
    let expected = q(&TensorValue::f32(vec![1, 3], h32), 0.5, 8.0);
    assert_eq!(y, expected);
}

#[test]
fn qdq_pair_matches_eight_bit_quant() {
    // Quant(b=8, signed) must agree with QuantizeLinear + DequantizeLinear
    let quant = common::quant_model(0.1, 0.0, 8.0, true, false, vec![7]);

    let mut g = Graph::default();
    g.inputs.push(ValueInfo::tensor("x", DType::F32, vec![7]));
    g.outputs.push(ValueInfo::tensor("y", DType::F32, vec![7]));
    g.initializers.insert("s".into(), TensorValue::scalar_f32(0.1));
    g.initializers
        .insert("zp".into(), TensorValue::new(vec![], TensorData::I8(vec![0])).unwrap());
    g.nodes.push(NodeDef::new("QuantizeLinear", vec!["x", "s", "zp"], vec!["q"]));
    g.nodes.push(NodeDef::new("DequantizeLinear", vec!["q", "s", "zp"], vec!["y"]));
    let qdq = Model::for_graph(g);

    let x = TensorValue::f32(vec![7], vec![-20.0, -1.04, -0.05, 0.0, 0.05, 1.04, 20.0]);
    let a = run1(&quant, "x", x.clone());
    let b = run1(&qdq, "x", x);
    assert_eq!(a.shape, b.shape);
    // numeric comparison: Quant keeps -0.0 for negatives that round to
    // code zero, the integer round-trip reconstructs +0.0
    assert_eq!(a.to_f64_vec(), b.to_f64_vec());
}

#[test]
fn dynamic_scale_is_an_ordinary_input() {
    // scale fed at run time instead of stored as an initializer
    let mut g = Graph::default();
    g.inputs.push(ValueInfo::tensor("x", DType::F32, vec![3]));
    g.inputs.push(ValueInfo::tensor("s", DType::F32, vec![]));
    g.outputs.push(ValueInfo::tensor("y", DType::F32, vec![3]));
    g.initializers.insert("z".into(), TensorValue::scalar_f32(0.0));
    g.initializers.insert("b".into(), TensorValue::scalar_f32(4.0));
    g.nodes.push(
        NodeDef::new("Quant", vec!["x", "s", "z", "b"], vec!["y"])
            .with_domain(QONNX_DOMAIN)
            .with_attr("signed", AttrValue::Int(1)),
    );
    let m = Model::for_graph(g);

    let x = TensorValue::f32(vec![3], vec![0.3, -0.9, 2.0]);
    for scale in [0.5f32, 0.25, 1.0] {
        let inputs = HashMap::from([
            ("x".to_string(), x.clone()),
            ("s".to_string(), TensorValue::scalar_f32(scale)),
        ]);
        let y = execute(&m, &inputs).unwrap()["y"].clone();
        let p = QuantParams::new(
            TensorValue::scalar_f32(scale),
            TensorValue::scalar_f32(0.0),
            TensorValue::scalar_f32(4.0),
            true,
            false,
            RoundingMode::Round,
        )
        .unwrap();
        assert_eq!(y, quant_op(&x, &p).unwrap());
    }
}

#[test]
fn unbound_input_is_reported() {
    let m = common::quant_model(0.5, 0.0, 4.0, true, false, vec![2]);
    let err = execute(&m, &HashMap::new()).unwrap_err();
    assert!(matches!(err, qonnx_kit::error::Error::UnboundInput(name) if name == "x"));
}

#[test]
fn unsupported_op_is_reported() {
    let mut g = Graph::default();
    g.inputs.push(ValueInfo::tensor("x", DType::F32, vec![2]));
    g.outputs.push(ValueInfo::tensor("y", DType::F32, vec![2]));
    g.nodes.push(NodeDef::new("Erf", vec!["x"], vec!["y"]));
    let m = Model::for_graph(g);
    let inputs = HashMap::from([("x".to_string(), TensorValue::f32(vec![2], vec![0.0, 1.0]))]);
    let err = execute(&m, &inputs).unwrap_err();
    assert!(matches!(err, qonnx_kit::error::Error::UnsupportedOp(_, op) if op == "Erf"));
}
