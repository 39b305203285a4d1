//! In-memory representation of ONNX/QONNX models.

mod parse;
mod serialize;
mod validate;

pub use parse::{parse_model, parse_tensor};
pub use serialize::{serialize_model, serialize_tensor};
pub use validate::{topological_order, validate_model};

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Domain string carried by the QONNX custom operators.
pub const QONNX_DOMAIN: &str = "qonnx.custom_op.general";

pub fn is_qonnx_op(op_type: &str) -> bool {
    matches!(op_type, "Quant" | "BipolarQuant" | "Trunc")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DType {
    F32,
    I8,
    U8,
    I32,
    I64,
    Bool,
}

impl DType {
    /// ONNX TensorProto.DataType code.
    pub fn onnx_code(self) -> i32 {
        match self {
            DType::F32 => 1,
            DType::U8 => 2,
            DType::I8 => 3,
            DType::I32 => 6,
            DType::I64 => 7,
            DType::Bool => 9,
        }
    }

    pub fn from_onnx_code(code: i32) -> Result<Self> {
        match code {
            1 => Ok(DType::F32),
            2 => Ok(DType::U8),
            3 => Ok(DType::I8),
            6 => Ok(DType::I32),
            7 => Ok(DType::I64),
            9 => Ok(DType::Bool),
            other => Err(Error::UnsupportedDtype(other)),
        }
    }
}

/// Dense tensor with row-major data. The data enum keeps each supported
/// element type in its natural representation so round-trips are bit-exact.
#[derive(Debug, Clone)]
pub struct TensorValue {
    pub shape: Vec<usize>,
    pub data: TensorData,
}

#[derive(Debug, Clone)]
pub enum TensorData {
    F32(Vec<f32>),
    I8(Vec<i8>),
    U8(Vec<u8>),
    I32(Vec<i32>),
    I64(Vec<i64>),
    Bool(Vec<bool>),
}

impl PartialEq for TensorData {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            // floats compared by bit pattern so NaNs and -0.0 survive equality
            (TensorData::F32(a), TensorData::F32(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            (TensorData::I8(a), TensorData::I8(b)) => a == b,
            (TensorData::U8(a), TensorData::U8(b)) => a == b,
            (TensorData::I32(a), TensorData::I32(b)) => a == b,
            (TensorData::I64(a), TensorData::I64(b)) => a == b,
            (TensorData::Bool(a), TensorData::Bool(b)) => a == b,
            _ => false,
        }
    }
}

impl TensorValue {
    pub fn new(shape: Vec<usize>, data: TensorData) -> Result<Self> {
        let count: usize = shape.iter().product();
        if count != data.len() {
            return Err(Error::Shape(format!(
                "shape {:?} implies {} elements, data has {}",
                shape,
                count,
                data.len()
            )));
        }
        Ok(TensorValue { shape, data })
    }

    pub fn f32(shape: Vec<usize>, data: Vec<f32>) -> Self {
        TensorValue::new(shape, TensorData::F32(data)).expect("shape/data mismatch")
    }

    pub fn i64(shape: Vec<usize>, data: Vec<i64>) -> Self {
        TensorValue::new(shape, TensorData::I64(data)).expect("shape/data mismatch")
    }

    pub fn scalar_f32(v: f32) -> Self {
        TensorValue::f32(vec![], vec![v])
    }

    pub fn elem_type(&self) -> DType {
        match self.data {
            TensorData::F32(_) => DType::F32,
            TensorData::I8(_) => DType::I8,
            TensorData::U8(_) => DType::U8,
            TensorData::I32(_) => DType::I32,
            TensorData::I64(_) => DType::I64,
            TensorData::Bool(_) => DType::Bool,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.len() == 0
    }

    /// All elements widened to f64, for kernel math.
    pub fn to_f64_vec(&self) -> Vec<f64> {
        match &self.data {
            TensorData::F32(v) => v.iter().map(|&x| f64::from(x)).collect(),
            TensorData::I8(v) => v.iter().map(|&x| f64::from(x)).collect(),
            TensorData::U8(v) => v.iter().map(|&x| f64::from(x)).collect(),
            TensorData::I32(v) => v.iter().map(|&x| f64::from(x)).collect(),
            TensorData::I64(v) => v.iter().map(|&x| x as f64).collect(),
            TensorData::Bool(v) => v.iter().map(|&x| if x { 1.0 } else { 0.0 }).collect(),
        }
    }

    /// Elements as i64, for shape-like tensors.
    pub fn to_i64_vec(&self) -> Result<Vec<i64>> {
        match &self.data {
            TensorData::I64(v) => Ok(v.clone()),
            TensorData::I32(v) => Ok(v.iter().map(|&x| i64::from(x)).collect()),
            TensorData::I8(v) => Ok(v.iter().map(|&x| i64::from(x)).collect()),
            TensorData::U8(v) => Ok(v.iter().map(|&x| i64::from(x)).collect()),
            _ => Err(Error::Shape("expected an integer tensor".into())),
        }
    }
}

impl TensorData {
    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::I8(v) => v.len(),
            TensorData::U8(v) => v.len(),
            TensorData::I32(v) => v.len(),
            TensorData::I64(v) => v.len(),
            TensorData::Bool(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl PartialEq for TensorValue {
    fn eq(&self, other: &Self) -> bool {
        self.shape == other.shape && self.data == other.data
    }
}

/// One dimension of a declared tensor shape. `Symbolic("")` is an unnamed
/// unknown dimension.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Dim {
    Known(usize),
    Symbolic(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueInfo {
    pub name: String,
    pub elem_type: DType,
    /// `None` means the model declares no shape at all (unknown rank).
    pub shape: Option<Vec<Dim>>,
}

impl ValueInfo {
    pub fn tensor(name: impl Into<String>, elem_type: DType, dims: Vec<usize>) -> Self {
        ValueInfo {
            name: name.into(),
            elem_type,
            shape: Some(dims.into_iter().map(Dim::Known).collect()),
        }
    }
}

#[derive(Debug, Clone)]
pub enum AttrValue {
    Int(i64),
    Float(f32),
    Str(String),
    Ints(Vec<i64>),
    Floats(Vec<f32>),
    Tensor(TensorValue),
}

impl PartialEq for AttrValue {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (AttrValue::Int(a), AttrValue::Int(b)) => a == b,
            (AttrValue::Float(a), AttrValue::Float(b)) => a.to_bits() == b.to_bits(),
            (AttrValue::Str(a), AttrValue::Str(b)) => a == b,
            (AttrValue::Ints(a), AttrValue::Ints(b)) => a == b,
            (AttrValue::Floats(a), AttrValue::Floats(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            (AttrValue::Tensor(a), AttrValue::Tensor(b)) => a == b,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeDef {
    pub op_type: String,
    pub domain: String,
    pub name: String,
    /// Tensor names; an empty string marks an absent optional input.
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub attributes: BTreeMap<String, AttrValue>,
}

impl NodeDef {
    pub fn new(op_type: impl Into<String>, inputs: Vec<&str>, outputs: Vec<&str>) -> Self {
        NodeDef {
            op_type: op_type.into(),
            domain: String::new(),
            name: String::new(),
            inputs: inputs.into_iter().map(String::from).collect(),
            outputs: outputs.into_iter().map(String::from).collect(),
            attributes: BTreeMap::new(),
        }
    }

    pub fn with_domain(mut self, domain: &str) -> Self {
        self.domain = domain.to_string();
        self
    }

    pub fn with_name(mut self, name: &str) -> Self {
        self.name = name.to_string();
        self
    }

    pub fn with_attr(mut self, name: &str, value: AttrValue) -> Self {
        self.attributes.insert(name.to_string(), value);
        self
    }

    pub fn attr_i64(&self, name: &str) -> Option<i64> {
        match self.attributes.get(name) {
            Some(AttrValue::Int(v)) => Some(*v),
            _ => None,
        }
    }

    pub fn attr_f32(&self, name: &str) -> Option<f32> {
        match self.attributes.get(name) {
            Some(AttrValue::Float(v)) => Some(*v),
            _ => None,
        }
    }

    pub fn attr_str(&self, name: &str) -> Option<&str> {
        match self.attributes.get(name) {
            Some(AttrValue::Str(v)) => Some(v),
            _ => None,
        }
    }

    pub fn attr_ints(&self, name: &str) -> Option<&[i64]> {
        match self.attributes.get(name) {
            Some(AttrValue::Ints(v)) => Some(v),
            _ => None,
        }
    }

    pub fn is_qonnx(&self) -> bool {
        self.domain == QONNX_DOMAIN && is_qonnx_op(&self.op_type)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Graph {
    pub name: String,
    pub nodes: Vec<NodeDef>,
    pub initializers: BTreeMap<String, TensorValue>,
    pub inputs: Vec<ValueInfo>,
    pub outputs: Vec<ValueInfo>,
    pub value_info: Vec<ValueInfo>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub ir_version: i64,
    pub opset_imports: Vec<(String, i64)>,
    pub graph: Graph,
    pub metadata: BTreeMap<String, String>,
}

impl Model {
    /// Wrap a graph with sensible defaults for ir_version and opsets,
    /// adding the QONNX opset import when custom nodes are present.
    pub fn for_graph(graph: Graph) -> Self {
        let mut opset_imports = vec![(String::new(), 13)];
        if graph.nodes.iter().any(|n| n.is_qonnx()) {
            opset_imports.push((QONNX_DOMAIN.to_string(), 1));
        }
        Model { ir_version: 8, opset_imports, graph, metadata: BTreeMap::new() }
    }
}
