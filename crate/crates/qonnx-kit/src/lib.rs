//! Toolkit for QONNX models: neural-network graphs carrying
//! arbitrary-precision uniform quantization through the Quant,
//! BipolarQuant, and Trunc custom operators.
//!
//! The crate parses and serializes ONNX ModelProto files, provides
//! bit-exact reference semantics for the quantization operators, executes
//! whole graphs as a correctness oracle, rewrites graphs (shape inference,
//! constant folding, cleanup, channels-last conversion), lowers Quant
//! nodes to the backward-compatible QuantizeLinear/Clip/DequantizeLinear
//! form, and computes MAC/BOPs complexity statistics.

pub mod error;
pub mod executor;
pub mod ir;
pub mod kernels;
pub mod lowering;
pub mod metrics;
pub mod passes;
pub mod proto;

pub use error::{Diagnostic, Error, Result, Severity};
pub use ir::{
    parse_model, serialize_model, topological_order, validate_model, AttrValue, DType, Dim, Graph,
    Model, NodeDef, TensorData, TensorValue, ValueInfo, QONNX_DOMAIN,
};
