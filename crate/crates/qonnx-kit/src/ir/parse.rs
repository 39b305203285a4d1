//! Decoding of ONNX ModelProto bytes into the in-memory [`Model`].
//!
//! Decoding is deliberately permissive: anything structurally readable is
//! accepted and semantic problems are left for `validate_model`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::proto::{packed_f32s, packed_varints, Reader, Value};

use super::{
    is_qonnx_op, AttrValue, DType, Dim, Graph, Model, NodeDef, TensorData, TensorValue, ValueInfo,
    QONNX_DOMAIN,
};

pub fn parse_model(bytes: &[u8]) -> Result<Model> {
    let mut ir_version = 0i64;
    let mut opset_imports = Vec::new();
    let mut graph = None;
    let mut metadata = BTreeMap::new();

    let mut r = Reader::new(bytes);
    while !r.is_empty() {
        let (field, value) = r.next_field()?;
        match field {
            1 => ir_version = value.as_i64()?,
            7 => graph = Some(parse_graph(value.as_bytes()?)?),
            8 => opset_imports.push(parse_opset(value.as_bytes()?)?),
            14 => {
                let (k, v) = parse_string_entry(value.as_bytes()?)?;
                metadata.insert(k, v);
            }
            _ => {} // producer info, doc strings, and unknown fields are ignored
        }
    }

    let mut graph = graph.ok_or_else(|| Error::Decode("model has no graph".into()))?;

    // Normalize lax exporters: QONNX op types in the default domain are
    // moved to the QONNX custom domain.
    let mut has_qonnx = false;
    for node in &mut graph.nodes {
        if node.domain.is_empty() && is_qonnx_op(&node.op_type) {
            node.domain = QONNX_DOMAIN.to_string();
        }
        has_qonnx |= node.is_qonnx();
    }
    if has_qonnx && !opset_imports.iter().any(|(d, _)| d == QONNX_DOMAIN) {
        opset_imports.push((QONNX_DOMAIN.to_string(), 1));
    }

    Ok(Model { ir_version, opset_imports, graph, metadata })
}

fn parse_opset(bytes: &[u8]) -> Result<(String, i64)> {
    let mut domain = String::new();
    let mut version = 0i64;
    let mut r = Reader::new(bytes);
    while !r.is_empty() {
        let (field, value) = r.next_field()?;
        match field {
            1 => domain = value.as_string()?,
            2 => version = value.as_i64()?,
            _ => {}
        }
    }
    Ok((domain, version))
}

fn parse_string_entry(bytes: &[u8]) -> Result<(String, String)> {
    let mut key = String::new();
    let mut val = String::new();
    let mut r = Reader::new(bytes);
    while !r.is_empty() {
        let (field, value) = r.next_field()?;
        match field {
            1 => key = value.as_string()?,
            2 => val = value.as_string()?,
            _ => {}
        }
    }
    Ok((key, val))
}

fn parse_graph(bytes: &[u8]) -> Result<Graph> {
    let mut g = Graph::default();
    let mut r = Reader::new(bytes);
    while !r.is_empty() {
        let (field, value) = r.next_field()?;
        match field {
            1 => g.nodes.push(parse_node(value.as_bytes()?)?),
            2 => g.name = value.as_string()?,
            5 => {
                let (name, tensor) = parse_named_tensor(value.as_bytes()?)?;
                g.initializers.insert(name, tensor);
            }
            11 => g.inputs.push(parse_value_info(value.as_bytes()?)?),
            12 => g.outputs.push(parse_value_info(value.as_bytes()?)?),
            13 => g.value_info.push(parse_value_info(value.as_bytes()?)?),
            _ => {}
        }
    }
    Ok(g)
}

fn parse_node(bytes: &[u8]) -> Result<NodeDef> {
    let mut node = NodeDef {
        op_type: String::new(),
        domain: String::new(),
        name: String::new(),
        inputs: Vec::new(),
        outputs: Vec::new(),
        attributes: BTreeMap::new(),
    };
    let mut r = Reader::new(bytes);
    while !r.is_empty() {
        let (field, value) = r.next_field()?;
        match field {
            1 => node.inputs.push(value.as_string()?),
            2 => node.outputs.push(value.as_string()?),
            3 => node.name = value.as_string()?,
            4 => node.op_type = value.as_string()?,
            5 => {
                let (name, attr) = parse_attribute(value.as_bytes()?)?;
                node.attributes.insert(name, attr);
            }
            7 => node.domain = value.as_string()?,
            _ => {}
        }
    }
    Ok(node)
}

// AttributeProto.AttributeType codes
const ATTR_FLOAT: i64 = 1;
const ATTR_INT: i64 = 2;
const ATTR_STRING: i64 = 3;
const ATTR_TENSOR: i64 = 4;
const ATTR_FLOATS: i64 = 6;
const ATTR_INTS: i64 = 7;

fn parse_attribute(bytes: &[u8]) -> Result<(String, AttrValue)> {
    let mut name = String::new();
    let mut ty = 0i64;
    let mut f = None;
    let mut i = None;
    let mut s = None;
    let mut t = None;
    let mut floats: Vec<f32> = Vec::new();
    let mut ints: Vec<i64> = Vec::new();

    let mut r = Reader::new(bytes);
    while !r.is_empty() {
        let (field, value) = r.next_field()?;
        match field {
            1 => name = value.as_string()?,
            2 => f = Some(value.as_f32()?),
            3 => i = Some(value.as_i64()?),
            4 => s = Some(value.as_string()?),
            5 => t = Some(parse_named_tensor(value.as_bytes()?)?.1),
            7 => match value {
                Value::Fixed32(v) => floats.push(f32::from_bits(v)),
                Value::Bytes(b) => floats.extend(packed_f32s(b)?),
                _ => return Err(Error::Decode("bad floats attribute".into())),
            },
            8 => match value {
                Value::Varint(v) => ints.push(v as i64),
                Value::Bytes(b) => ints.extend(packed_varints(b)?),
                _ => return Err(Error::Decode("bad ints attribute".into())),
            },
            20 => ty = value.as_i64()?,
            _ => {}
        }
    }

    let attr = match ty {
        ATTR_FLOAT => AttrValue::Float(f.unwrap_or(0.0)),
        ATTR_INT => AttrValue::Int(i.unwrap_or(0)),
        ATTR_STRING => AttrValue::Str(s.unwrap_or_default()),
        ATTR_TENSOR => AttrValue::Tensor(
            t.ok_or_else(|| Error::Decode(format!("attribute '{name}' has no tensor payload")))?,
        ),
        ATTR_FLOATS => AttrValue::Floats(floats),
        ATTR_INTS => AttrValue::Ints(ints),
        // no type tag: infer from whichever payload is present
        _ => {
            if let Some(v) = i {
                AttrValue::Int(v)
            } else if let Some(v) = f {
                AttrValue::Float(v)
            } else if let Some(v) = s {
                AttrValue::Str(v)
            } else if let Some(v) = t {
                AttrValue::Tensor(v)
            } else if !ints.is_empty() {
                AttrValue::Ints(ints)
            } else if !floats.is_empty() {
                AttrValue::Floats(floats)
            } else {
                return Err(Error::Decode(format!("attribute '{name}' has no value")));
            }
        }
    };
    Ok((name, attr))
}

/// Parse a standalone TensorProto (also the format of CLI tensor files).
pub fn parse_tensor(bytes: &[u8]) -> Result<TensorValue> {
    Ok(parse_named_tensor(bytes)?.1)
}

fn parse_named_tensor(bytes: &[u8]) -> Result<(String, TensorValue)> {
    let mut name = String::new();
    let mut dims: Vec<i64> = Vec::new();
    let mut data_type = 0i64;
    let mut raw: Option<&[u8]> = None;
    let mut float_data: Vec<f32> = Vec::new();
    let mut int32_data: Vec<i64> = Vec::new();
    let mut int64_data: Vec<i64> = Vec::new();

    let mut r = Reader::new(bytes);
    while !r.is_empty() {
        let (field, value) = r.next_field()?;
        match field {
            1 => match value {
                Value::Varint(v) => dims.push(v as i64),
                Value::Bytes(b) => dims.extend(packed_varints(b)?),
                _ => return Err(Error::Decode("bad tensor dims".into())),
            },
            2 => data_type = value.as_i64()?,
            4 => match value {
                Value::Fixed32(v) => float_data.push(f32::from_bits(v)),
                Value::Bytes(b) => float_data.extend(packed_f32s(b)?),
                _ => return Err(Error::Decode("bad float_data".into())),
            },
            5 => match value {
                Value::Varint(v) => int32_data.push(v as i64),
                Value::Bytes(b) => int32_data.extend(packed_varints(b)?),
                _ => return Err(Error::Decode("bad int32_data".into())),
            },
            7 => match value {
                Value::Varint(v) => int64_data.push(v as i64),
                Value::Bytes(b) => int64_data.extend(packed_varints(b)?),
                _ => return Err(Error::Decode("bad int64_data".into())),
            },
            8 => name = value.as_string()?,
            9 => raw = Some(value.as_bytes()?),
            13 => return Err(Error::Unsupported("external tensor data".into())),
            14 if value.as_i64()? != 0 => {
                return Err(Error::Unsupported("external tensor data".into()))
            }
            _ => {}
        }
    }

    let dtype = DType::from_onnx_code(data_type as i32)?;
    let shape: Vec<usize> = dims
        .iter()
        .map(|&d| usize::try_from(d).map_err(|_| Error::Decode("negative tensor dim".into())))
        .collect::<Result<_>>()?;

    let data = if let Some(raw) = raw {
        decode_raw(dtype, raw)?
    } else {
        match dtype {
            DType::F32 => TensorData::F32(float_data),
            DType::I8 => TensorData::I8(int32_data.iter().map(|&v| v as i8).collect()),
            DType::U8 => TensorData::U8(int32_data.iter().map(|&v| v as u8).collect()),
            DType::I32 => TensorData::I32(int32_data.iter().map(|&v| v as i32).collect()),
            DType::I64 => TensorData::I64(int64_data),
            DType::Bool => TensorData::Bool(int32_data.iter().map(|&v| v != 0).collect()),
        }
    };

    let tensor = TensorValue::new(shape, data)?;
    Ok((name, tensor))
}

fn decode_raw(dtype: DType, raw: &[u8]) -> Result<TensorData> {
    let chunked = |n: usize| -> Result<()> {
        if raw.len().is_multiple_of(n) {
            Ok(())
        } else {
            Err(Error::Decode("raw_data length does not match element type".into()))
        }
    };
    Ok(match dtype {
        DType::F32 => {
            chunked(4)?;
            TensorData::F32(
                raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect(),
            )
        }
        DType::I8 => TensorData::I8(raw.iter().map(|&b| b as i8).collect()),
        DType::U8 => TensorData::U8(raw.to_vec()),
        DType::I32 => {
            chunked(4)?;
            TensorData::I32(
                raw.chunks_exact(4).map(|c| i32::from_le_bytes(c.try_into().unwrap())).collect(),
            )
        }
        DType::I64 => {
            chunked(8)?;
            TensorData::I64(
                raw.chunks_exact(8).map(|c| i64::from_le_bytes(c.try_into().unwrap())).collect(),
            )
        }
        DType::Bool => TensorData::Bool(raw.iter().map(|&b| b != 0).collect()),
    })
}

fn parse_value_info(bytes: &[u8]) -> Result<ValueInfo> {
    let mut name = String::new();
    let mut elem_type = DType::F32;
    let mut shape = None;

    let mut r = Reader::new(bytes);
    while !r.is_empty() {
        let (field, value) = r.next_field()?;
        match field {
            1 => name = value.as_string()?,
            2 => {
                // TypeProto -> tensor_type (field 1)
                let mut tr = Reader::new(value.as_bytes()?);
                while !tr.is_empty() {
                    let (tf, tv) = tr.next_field()?;
                    if tf == 1 {
                        let (et, sh) = parse_tensor_type(tv.as_bytes()?)?;
                        elem_type = et;
                        shape = sh;
                    }
                }
            }
            _ => {}
        }
    }
    Ok(ValueInfo { name, elem_type, shape })
}

fn parse_tensor_type(bytes: &[u8]) -> Result<(DType, Option<Vec<Dim>>)> {
    let mut elem_type = DType::F32;
    let mut shape = None;
    let mut r = Reader::new(bytes);
    while !r.is_empty() {
        let (field, value) = r.next_field()?;
        match field {
            1 => elem_type = DType::from_onnx_code(value.as_i64()? as i32)?,
            2 => {
                let mut dims = Vec::new();
                let mut sr = Reader::new(value.as_bytes()?);
                while !sr.is_empty() {
                    let (sf, sv) = sr.next_field()?;
                    if sf == 1 {
                        dims.push(parse_dim(sv.as_bytes()?)?);
                    }
                }
                shape = Some(dims);
            }
            _ => {}
        }
    }
    Ok((elem_type, shape))
}

fn parse_dim(bytes: &[u8]) -> Result<Dim> {
    let mut dim = Dim::Symbolic(String::new());
    let mut r = Reader::new(bytes);
    while !r.is_empty() {
        let (field, value) = r.next_field()?;
        match field {
            1 => {
                let v = value.as_i64()?;
                dim = if v >= 0 {
                    Dim::Known(v as usize)
                } else {
                    Dim::Symbolic(String::new())
                };
            }
            2 => dim = Dim::Symbolic(value.as_string()?),
            _ => {}
        }
    }
    Ok(dim)
}
