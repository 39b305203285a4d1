//! Bit-exact element-wise reference semantics for uniform quantization:
//! the quantize/dequantize pair, the fused Quant operator, binary
//! quantization, and LSB truncation, all with multidirectional broadcast.
//!
//! All arithmetic runs in f64 and results are stored as f32, so rounding
//! decisions are reproducible across platforms.

use crate::error::{Error, Result};
use crate::ir::{TensorData, TensorValue};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoundingMode {
    /// Round half to even.
    Round,
    /// Truncate toward zero.
    RoundToZero,
    Ceil,
    Floor,
}

impl RoundingMode {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "ROUND" => Ok(RoundingMode::Round),
            "ROUND_TO_ZERO" => Ok(RoundingMode::RoundToZero),
            "CEIL" => Ok(RoundingMode::Ceil),
            "FLOOR" => Ok(RoundingMode::Floor),
            other => Err(Error::Unsupported(format!("rounding mode '{other}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RoundingMode::Round => "ROUND",
            RoundingMode::RoundToZero => "ROUND_TO_ZERO",
            RoundingMode::Ceil => "CEIL",
            RoundingMode::Floor => "FLOOR",
        }
    }

    pub fn apply(self, v: f64) -> f64 {
        match self {
            RoundingMode::Round => v.round_ties_even(),
            RoundingMode::RoundToZero => v.trunc(),
            RoundingMode::Ceil => v.ceil(),
            RoundingMode::Floor => v.floor(),
        }
    }
}

/// Inclusive integer clamp interval for a given bit width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClampBounds {
    pub y_min: f64,
    pub y_max: f64,
}

/// Clamp interval for `bit_width` bits. Non-integer bit widths compute the
/// interval with the real exponent and then integerize the ends inward, so
/// clamped values stay integers.
pub fn clamp_bounds(bit_width: f64, signed: bool, narrow: bool) -> Result<ClampBounds> {
    if bit_width.is_nan() || bit_width < 2.0 {
        return Err(Error::BitWidth(format!("bit_width {bit_width} is restricted to be >= 2")));
    }
    let (y_min, y_max) = if signed {
        let half = 2f64.powf(bit_width - 1.0);
        let y_min = if narrow { -half + 1.0 } else { -half };
        (y_min, half - 1.0)
    } else {
        let full = 2f64.powf(bit_width);
        let y_max = if narrow { full - 2.0 } else { full - 1.0 };
        (0.0, y_max)
    };
    Ok(ClampBounds { y_min: y_min.ceil(), y_max: y_max.floor() })
}

/// The parameter bundle of the Quant operator.
#[derive(Debug, Clone)]
pub struct QuantParams {
    pub scale: TensorValue,
    pub zero_point: TensorValue,
    pub bit_width: TensorValue,
    pub signed: bool,
    pub narrow: bool,
    pub rounding_mode: RoundingMode,
}

impl QuantParams {
    pub fn new(
        scale: TensorValue,
        zero_point: TensorValue,
        bit_width: TensorValue,
        signed: bool,
        narrow: bool,
        rounding_mode: RoundingMode,
    ) -> Result<Self> {
        if scale.to_f64_vec().iter().any(|&s| s.is_nan() || s <= 0.0) {
            return Err(Error::Arg("scale must be a positive scale factor".into()));
        }
        if bit_width.to_f64_vec().iter().any(|&b| b < 2.0) {
            return Err(Error::BitWidth("bit_width is restricted to be >= 2".into()));
        }
        Ok(QuantParams { scale, zero_point, bit_width, signed, narrow, rounding_mode })
    }
}

/// Multidirectional broadcast of two shapes (trailing alignment, 1 stretches).
pub fn broadcast_shapes(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0usize; rank];
    for i in 0..rank {
        let da = if i < rank - a.len() { 1 } else { a[i - (rank - a.len())] };
        let db = if i < rank - b.len() { 1 } else { b[i - (rank - b.len())] };
        out[i] = if da == db {
            da
        } else if da == 1 {
            db
        } else if db == 1 {
            da
        } else {
            return Err(Error::Broadcast(a.to_vec(), b.to_vec()));
        };
    }
    Ok(out)
}

pub fn broadcast_many(shapes: &[&[usize]]) -> Result<Vec<usize>> {
    let mut out: Vec<usize> = Vec::new();
    for s in shapes {
        out = broadcast_shapes(&out, s)?;
    }
    Ok(out)
}

/// Materialize `data` (with `shape`) broadcast to `out_shape`.
pub fn expand_to(data: &[f64], shape: &[usize], out_shape: &[usize]) -> Result<Vec<f64>> {
    let combined = broadcast_shapes(shape, out_shape)?;
    if combined != out_shape {
        return Err(Error::Broadcast(shape.to_vec(), out_shape.to_vec()));
    }
    let out_count: usize = out_shape.iter().product();
    if shape == out_shape {
        return Ok(data.to_vec());
    }
    // strides of the input aligned to the output's trailing dims; stretched
    // dims get stride 0
    let rank = out_shape.len();
    let offset = rank - shape.len();
    let mut strides = vec![0usize; rank];
    let mut acc = 1usize;
    for i in (0..shape.len()).rev() {
        strides[offset + i] = if shape[i] == 1 { 0 } else { acc };
        acc *= shape[i];
    }
    let mut out = Vec::with_capacity(out_count);
    let mut idx = vec![0usize; rank];
    for _ in 0..out_count {
        let flat: usize = idx.iter().zip(&strides).map(|(&i, &s)| i * s).sum();
        out.push(data[flat]);
        for d in (0..rank).rev() {
            idx[d] += 1;
            if idx[d] < out_shape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    Ok(out)
}

fn f32_tensor(shape: Vec<usize>, data: Vec<f64>) -> TensorValue {
    TensorValue::new(shape, TensorData::F32(data.into_iter().map(|v| v as f32).collect()))
        .expect("internal shape mismatch")
}

/// Eq. of uniform affine quantization: clamp(round(x/s + z), y_min, y_max).
/// The result is integer-valued but stored as float32.
pub fn quantize(x: &TensorValue, p: &QuantParams) -> Result<TensorValue> {
    let out_shape = broadcast_many(&[
        &x.shape,
        &p.scale.shape,
        &p.zero_point.shape,
        &p.bit_width.shape,
    ])?;
    let xs = expand_to(&x.to_f64_vec(), &x.shape, &out_shape)?;
    let ss = expand_to(&p.scale.to_f64_vec(), &p.scale.shape, &out_shape)?;
    let zs = expand_to(&p.zero_point.to_f64_vec(), &p.zero_point.shape, &out_shape)?;
    let bs = expand_to(&p.bit_width.to_f64_vec(), &p.bit_width.shape, &out_shape)?;

    let mut out = Vec::with_capacity(xs.len());
    for i in 0..xs.len() {
        let bounds = clamp_bounds(bs[i], p.signed, p.narrow)?;
        let q = p.rounding_mode.apply(xs[i] / ss[i] + zs[i]);
        out.push(q.clamp(bounds.y_min, bounds.y_max));
    }
    Ok(f32_tensor(out_shape, out))
}

/// s * (y - z), element-wise with broadcast.
pub fn dequantize(
    y: &TensorValue,
    scale: &TensorValue,
    zero_point: &TensorValue,
) -> Result<TensorValue> {
    let out_shape = broadcast_many(&[&y.shape, &scale.shape, &zero_point.shape])?;
    let ys = expand_to(&y.to_f64_vec(), &y.shape, &out_shape)?;
    let ss = expand_to(&scale.to_f64_vec(), &scale.shape, &out_shape)?;
    let zs = expand_to(&zero_point.to_f64_vec(), &zero_point.shape, &out_shape)?;
    let out = (0..ys.len()).map(|i| ss[i] * (ys[i] - zs[i])).collect();
    Ok(f32_tensor(out_shape, out))
}

/// The fused Quant operator: quantize then dequantize, never exposing the
/// integer tensor.
pub fn quant_op(x: &TensorValue, p: &QuantParams) -> Result<TensorValue> {
    let q = quantize(x, p)?;
    dequantize(&q, &p.scale, &p.zero_point)
}

/// Binary quantization: s * sign(x), with sign(0) = +1.
pub fn bipolar_quant_op(x: &TensorValue, scale: &TensorValue) -> Result<TensorValue> {
    if scale.to_f64_vec().iter().any(|&s| s.is_nan() || s <= 0.0) {
        return Err(Error::Arg("scale must be a positive scale factor".into()));
    }
    let out_shape = broadcast_shapes(&x.shape, &scale.shape)?;
    let xs = expand_to(&x.to_f64_vec(), &x.shape, &out_shape)?;
    let ss = expand_to(&scale.to_f64_vec(), &scale.shape, &out_shape)?;
    let out = (0..xs.len())
        .map(|i| if xs[i] < 0.0 { -ss[i] } else { ss[i] })
        .collect();
    Ok(f32_tensor(out_shape, out))
}

/// Truncate least-significant bits of an already-quantized value. The
/// input's scale and zero_point parameterize both ends; no clamping.
#[allow(clippy::too_many_arguments)]
pub fn trunc_op(
    x: &TensorValue,
    scale: &TensorValue,
    zero_point: &TensorValue,
    in_bit_width: &TensorValue,
    out_bit_width: &TensorValue,
    mode: RoundingMode,
) -> Result<TensorValue> {
    if mode == RoundingMode::RoundToZero {
        return Err(Error::Unsupported("ROUND_TO_ZERO is not a Trunc rounding mode".into()));
    }
    let out_shape = broadcast_many(&[
        &x.shape,
        &scale.shape,
        &zero_point.shape,
        &in_bit_width.shape,
        &out_bit_width.shape,
    ])?;
    let xs = expand_to(&x.to_f64_vec(), &x.shape, &out_shape)?;
    let ss = expand_to(&scale.to_f64_vec(), &scale.shape, &out_shape)?;
    let zs = expand_to(&zero_point.to_f64_vec(), &zero_point.shape, &out_shape)?;
    let ins = expand_to(&in_bit_width.to_f64_vec(), &in_bit_width.shape, &out_shape)?;
    let outs = expand_to(&out_bit_width.to_f64_vec(), &out_bit_width.shape, &out_shape)?;

    let mut out = Vec::with_capacity(xs.len());
    for i in 0..xs.len() {
        if ins[i] < 2.0 || outs[i] < 2.0 {
            return Err(Error::BitWidth("bit widths are restricted to be >= 2".into()));
        }
        if outs[i] > ins[i] {
            return Err(Error::BitWidth(format!(
                "out_bit_width {} exceeds in_bit_width {}",
                outs[i], ins[i]
            )));
        }
        let q = (xs[i] / ss[i] + zs[i]).round_ties_even();
        let shift = ins[i] - outs[i];
        let shifted = mode.apply(q / 2f64.powf(shift));
        out.push(ss[i] * (shifted - zs[i]));
    }
    Ok(f32_tensor(out_shape, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f32) -> TensorValue {
        TensorValue::scalar_f32(v)
    }

    fn params(s: f32, z: f32, b: f32, signed: bool, narrow: bool, mode: RoundingMode) -> QuantParams {
        QuantParams::new(scalar(s), scalar(z), scalar(b), signed, narrow, mode).unwrap()
    }

    fn one(t: &TensorValue) -> f32 {
        match &t.data {
            TensorData::F32(v) => v[0],
            other => panic!("expected f32 tensor, got {other:?}"),
        }
    }

    #[test]
    fn bounds_table() {
        assert_eq!(clamp_bounds(8.0, true, false).unwrap(), ClampBounds { y_min: -128.0, y_max: 127.0 });
        assert_eq!(clamp_bounds(8.0, true, true).unwrap(), ClampBounds { y_min: -127.0, y_max: 127.0 });
        assert_eq!(clamp_bounds(4.0, true, false).unwrap(), ClampBounds { y_min: -8.0, y_max: 7.0 });
        assert_eq!(clamp_bounds(8.0, false, false).unwrap(), ClampBounds { y_min: 0.0, y_max: 255.0 });
        assert_eq!(clamp_bounds(8.0, false, true).unwrap(), ClampBounds { y_min: 0.0, y_max: 254.0 });
    }

    #[test]
    fn bounds_non_integer_bit_width() {
        // 2^5.5 = 45.2548..., integerized inward
        assert_eq!(clamp_bounds(6.5, true, false).unwrap(), ClampBounds { y_min: -45.0, y_max: 44.0 });
    }

    #[test]
    fn bounds_reject_small_bit_width() {
        assert!(matches!(clamp_bounds(1.0, true, false), Err(Error::BitWidth(_))));
    }

    #[test]
    fn quantize_examples() {
        let p = params(1.0, 0.0, 8.0, true, false, RoundingMode::Round);
        assert_eq!(one(&quantize(&scalar(0.0), &p).unwrap()), 0.0);

        // 1.25/0.5 = 2.5 rounds to even 2
        let p = params(0.5, 0.0, 4.0, true, false, RoundingMode::Round);
        assert_eq!(one(&quantize(&scalar(1.25), &p).unwrap()), 2.0);

        // saturation at y_max
        let p = params(1.0, 0.0, 4.0, true, false, RoundingMode::Round);
        assert_eq!(one(&quantize(&scalar(100.0), &p).unwrap()), 7.0);
    }

    #[test]
    fn dequantize_examples() {
        assert_eq!(one(&dequantize(&scalar(0.0), &scalar(3.7), &scalar(0.0)).unwrap()), 0.0);
        assert_eq!(one(&dequantize(&scalar(3.0), &scalar(0.5), &scalar(0.0)).unwrap()), 1.5);
        assert_eq!(one(&dequantize(&scalar(3.0), &scalar(0.5), &scalar(1.0)).unwrap()), 1.0);
    }

    #[test]
    fn quant_op_examples() {
        let p = params(0.5, 0.0, 4.0, true, false, RoundingMode::Round);
        assert_eq!(one(&quant_op(&scalar(1.3), &p).unwrap()), 1.5);
        assert_eq!(one(&quant_op(&scalar(-2.0), &p).unwrap()), -2.0);

        let p = params(0.5, 2.0, 4.0, true, false, RoundingMode::Round);
        assert_eq!(one(&quant_op(&scalar(1.3), &p).unwrap()), 1.5);
    }

    #[test]
    fn bipolar_examples() {
        assert_eq!(one(&bipolar_quant_op(&scalar(1.0), &scalar(1.0)).unwrap()), 1.0);
        assert_eq!(one(&bipolar_quant_op(&scalar(-0.3), &scalar(2.0)).unwrap()), -2.0);
        assert_eq!(one(&bipolar_quant_op(&scalar(0.0), &scalar(2.0)).unwrap()), 2.0);
    }

    #[test]
    fn trunc_examples() {
        let t = |x: f32, mode| {
            one(&trunc_op(&scalar(x), &scalar(1.0), &scalar(0.0), &scalar(8.0), &scalar(4.0), mode)
                .unwrap())
        };
        assert_eq!(t(10.0, RoundingMode::Floor), 0.0);
        assert_eq!(t(10.0, RoundingMode::Round), 1.0);

        // shift = 0 is the identity
        let id = trunc_op(&scalar(3.0), &scalar(1.0), &scalar(0.0), &scalar(4.0), &scalar(4.0), RoundingMode::Floor)
            .unwrap();
        assert_eq!(one(&id), 3.0);

        // average-pool use case: sum of four 2-bit values right shifted
        let avg = trunc_op(&scalar(14.0), &scalar(1.0), &scalar(0.0), &scalar(6.0), &scalar(4.0), RoundingMode::Floor)
            .unwrap();
        assert_eq!(one(&avg), 3.0);
    }

    #[test]
    fn trunc_rejects_widening() {
        let err = trunc_op(&scalar(1.0), &scalar(1.0), &scalar(0.0), &scalar(4.0), &scalar(6.0), RoundingMode::Floor);
        assert!(matches!(err, Err(Error::BitWidth(_))));
    }

    #[test]
    fn broadcast_examples() {
        assert_eq!(broadcast_shapes(&[2, 3], &[1, 3]).unwrap(), vec![2, 3]);
        assert_eq!(broadcast_shapes(&[4, 1, 5], &[3, 1]).unwrap(), vec![4, 3, 5]);
        assert!(broadcast_shapes(&[2, 3], &[4]).is_err());
    }

    #[test]
    fn per_channel_bit_width_broadcasts() {
        // tensor-wise scale with a channel-wise bit width
        let x = TensorValue::f32(vec![2, 2], vec![30.0, 30.0, 30.0, 30.0]);
        let bw = TensorValue::f32(vec![2, 1], vec![4.0, 8.0]);
        let p = QuantParams::new(scalar(1.0), scalar(0.0), bw, true, false, RoundingMode::Round)
            .unwrap();
        let y = quantize(&x, &p).unwrap();
        match &y.data {
            TensorData::F32(v) => assert_eq!(v, &vec![7.0, 7.0, 30.0, 30.0]),
            _ => unreachable!(),
        }
    }
}
