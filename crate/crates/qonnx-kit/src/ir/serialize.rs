//! Encoding of the in-memory [`Model`] back to ONNX ModelProto bytes.

use crate::proto::Writer;

use super::{AttrValue, Dim, Graph, Model, NodeDef, TensorData, TensorValue, ValueInfo};

pub fn serialize_model(m: &Model) -> Vec<u8> {
    let mut w = Writer::new();
    w.int(1, m.ir_version);
    w.message(7, write_graph(&m.graph));
    for (domain, version) in &m.opset_imports {
        let mut op = Writer::new();
        if !domain.is_empty() {
            op.string(1, domain);
        }
        op.int(2, *version);
        w.message(8, op);
    }
    for (k, v) in &m.metadata {
        let mut e = Writer::new();
        e.string(1, k);
        e.string(2, v);
        w.message(14, e);
    }
    w.into_bytes()
}

fn write_graph(g: &Graph) -> Writer {
    let mut w = Writer::new();
    for node in &g.nodes {
        w.message(1, write_node(node));
    }
    if !g.name.is_empty() {
        w.string(2, &g.name);
    }
    for (name, tensor) in &g.initializers {
        w.message(5, write_tensor(Some(name), tensor));
    }
    for vi in &g.inputs {
        w.message(11, write_value_info(vi));
    }
    for vi in &g.outputs {
        w.message(12, write_value_info(vi));
    }
    for vi in &g.value_info {
        w.message(13, write_value_info(vi));
    }
    w
}

fn write_node(n: &NodeDef) -> Writer {
    let mut w = Writer::new();
    for input in &n.inputs {
        w.string(1, input);
    }
    for output in &n.outputs {
        w.string(2, output);
    }
    if !n.name.is_empty() {
        w.string(3, &n.name);
    }
    w.string(4, &n.op_type);
    for (name, attr) in &n.attributes {
        w.message(5, write_attribute(name, attr));
    }
    if !n.domain.is_empty() {
        w.string(7, &n.domain);
    }
    w
}

const ATTR_FLOAT: u64 = 1;
const ATTR_INT: u64 = 2;
const ATTR_STRING: u64 = 3;
const ATTR_TENSOR: u64 = 4;
const ATTR_FLOATS: u64 = 6;
const ATTR_INTS: u64 = 7;

fn write_attribute(name: &str, attr: &AttrValue) -> Writer {
    let mut w = Writer::new();
    w.string(1, name);
    match attr {
        AttrValue::Float(v) => {
            w.float(2, *v);
            w.uint(20, ATTR_FLOAT);
        }
        AttrValue::Int(v) => {
            w.int(3, *v);
            w.uint(20, ATTR_INT);
        }
        AttrValue::Str(v) => {
            w.string(4, v);
            w.uint(20, ATTR_STRING);
        }
        AttrValue::Tensor(t) => {
            w.message(5, write_tensor(None, t));
            w.uint(20, ATTR_TENSOR);
        }
        AttrValue::Floats(vs) => {
            for v in vs {
                w.float(7, *v);
            }
            w.uint(20, ATTR_FLOATS);
        }
        AttrValue::Ints(vs) => {
            for v in vs {
                w.int(8, *v);
            }
            w.uint(20, ATTR_INTS);
        }
    }
    w
}

/// Serialize a standalone TensorProto (the CLI tensor exchange format).
pub fn serialize_tensor(t: &TensorValue) -> Vec<u8> {
    write_tensor(None, t).into_bytes()
}

fn write_tensor(name: Option<&str>, t: &TensorValue) -> Writer {
    let mut w = Writer::new();
    if !t.shape.is_empty() {
        w.packed_ints(1, &t.shape.iter().map(|&d| d as i64).collect::<Vec<_>>());
    }
    w.int(2, i64::from(t.elem_type().onnx_code()));
    if let Some(name) = name {
        w.string(8, name);
    }
    // raw_data keeps every element type bit-exact
    let mut raw = Vec::new();
    match &t.data {
        TensorData::F32(v) => {
            for x in v {
                raw.extend_from_slice(&x.to_bits().to_le_bytes());
            }
        }
        TensorData::I8(v) => raw.extend(v.iter().map(|&x| x as u8)),
        TensorData::U8(v) => raw.extend_from_slice(v),
        TensorData::I32(v) => {
            for x in v {
                raw.extend_from_slice(&x.to_le_bytes());
            }
        }
        TensorData::I64(v) => {
            for x in v {
                raw.extend_from_slice(&x.to_le_bytes());
            }
        }
        TensorData::Bool(v) => raw.extend(v.iter().map(|&x| u8::from(x))),
    }
    w.bytes(9, &raw);
    w
}

fn write_value_info(vi: &ValueInfo) -> Writer {
    let mut w = Writer::new();
    w.string(1, &vi.name);

    let mut tensor_type = Writer::new();
    tensor_type.int(1, i64::from(vi.elem_type.onnx_code()));
    if let Some(dims) = &vi.shape {
        let mut shape = Writer::new();
        for dim in dims {
            let mut d = Writer::new();
            match dim {
                Dim::Known(v) => d.int(1, *v as i64),
                Dim::Symbolic(s) if !s.is_empty() => d.string(2, s),
                Dim::Symbolic(_) => {} // unnamed unknown: empty Dimension message
            }
            shape.message(1, d);
        }
        tensor_type.message(2, shape);
    }

    let mut ty = Writer::new();
    ty.message(1, tensor_type);
    w.message(2, ty);
    w
}
