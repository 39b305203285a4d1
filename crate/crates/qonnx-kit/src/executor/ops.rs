//! Reference kernels for the supported standard-ONNX subset and the three
//! QONNX operators. Clarity over speed throughout: direct loops, f64
//! accumulation, f32 storage.

use crate::error::{Error, Result};
use crate::ir::{NodeDef, TensorData, TensorValue};
use crate::kernels::{
    self, broadcast_shapes, expand_to, QuantParams, RoundingMode,
};

fn req<'a>(inputs: &[Option<&'a TensorValue>], i: usize, what: &str) -> Result<&'a TensorValue> {
    inputs
        .get(i)
        .copied()
        .flatten()
        .ok_or_else(|| Error::Shape(format!("missing required input {i} ({what})")))
}

fn opt<'a>(inputs: &[Option<&'a TensorValue>], i: usize) -> Option<&'a TensorValue> {
    inputs.get(i).copied().flatten()
}

fn f32_out(shape: Vec<usize>, data: Vec<f64>) -> TensorValue {
    TensorValue::new(shape, TensorData::F32(data.into_iter().map(|v| v as f32).collect()))
        .expect("kernel produced mismatched shape")
}

fn norm_axis(axis: i64, rank: usize) -> Result<usize> {
    let a = if axis < 0 { axis + rank as i64 } else { axis };
    if a < 0 || a as usize >= rank.max(1) {
        return Err(Error::Shape(format!("axis {axis} out of range for rank {rank}")));
    }
    Ok(a as usize)
}

/// True when a layout pass marked this node as operating on
/// channels-last (NHWC) tensors.
fn channels_last(node: &NodeDef) -> bool {
    node.attr_str("layout") == Some("NHWC")
}

const TO_NCHW: [usize; 4] = [0, 3, 1, 2];
const TO_NHWC: [usize; 4] = [0, 2, 3, 1];

/// Permute a tensor's axes. `perm[i]` names the source axis landing at `i`.
pub fn transpose_tensor(t: &TensorValue, perm: &[usize]) -> Result<TensorValue> {
    let rank = t.shape.len();
    if perm.len() != rank {
        return Err(Error::Shape(format!("perm {perm:?} does not match rank {rank}")));
    }
    let mut seen = vec![false; rank];
    for &p in perm {
        if p >= rank || seen[p] {
            return Err(Error::Shape(format!("invalid perm {perm:?}")));
        }
        seen[p] = true;
    }
    let out_shape: Vec<usize> = perm.iter().map(|&p| t.shape[p]).collect();
    let in_strides = row_major_strides(&t.shape);
    let count: usize = out_shape.iter().product();
    let mut map = Vec::with_capacity(count);
    let mut idx = vec![0usize; rank];
    for _ in 0..count {
        let flat: usize = (0..rank).map(|d| idx[d] * in_strides[perm[d]]).sum();
        map.push(flat);
        bump(&mut idx, &out_shape);
    }
    Ok(remap_data(t, out_shape, &map))
}

fn row_major_strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1usize; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

fn bump(idx: &mut [usize], shape: &[usize]) {
    for d in (0..shape.len()).rev() {
        idx[d] += 1;
        if idx[d] < shape[d] {
            return;
        }
        idx[d] = 0;
    }
}

fn remap_data(t: &TensorValue, out_shape: Vec<usize>, map: &[usize]) -> TensorValue {
    let data = match &t.data {
        TensorData::F32(v) => TensorData::F32(map.iter().map(|&i| v[i]).collect()),
        TensorData::I8(v) => TensorData::I8(map.iter().map(|&i| v[i]).collect()),
        TensorData::U8(v) => TensorData::U8(map.iter().map(|&i| v[i]).collect()),
        TensorData::I32(v) => TensorData::I32(map.iter().map(|&i| v[i]).collect()),
        TensorData::I64(v) => TensorData::I64(map.iter().map(|&i| v[i]).collect()),
        TensorData::Bool(v) => TensorData::Bool(map.iter().map(|&i| v[i]).collect()),
    };
    TensorValue::new(out_shape, data).expect("remap shape mismatch")
}

// ---------------------------------------------------------------------------
// element-wise arithmetic

pub fn binary_elementwise(
    node: &NodeDef,
    inputs: &[Option<&TensorValue>],
) -> Result<Vec<TensorValue>> {
    let a = req(inputs, 0, "lhs")?;
    let b = req(inputs, 1, "rhs")?;
    if a.elem_type() != b.elem_type() {
        return Err(Error::Shape(format!(
            "{}: operand dtypes differ ({:?} vs {:?})",
            node.op_type,
            a.elem_type(),
            b.elem_type()
        )));
    }
    let out_shape = broadcast_shapes(&a.shape, &b.shape)?;
    match (&a.data, &b.data) {
        (TensorData::I64(_), TensorData::I64(_)) => {
            let av: Vec<i64> = expand_i64(a, &out_shape)?;
            let bv: Vec<i64> = expand_i64(b, &out_shape)?;
            let data: Vec<i64> = av
                .iter()
                .zip(&bv)
                .map(|(&x, &y)| match node.op_type.as_str() {
                    "Add" => Ok(x + y),
                    "Sub" => Ok(x - y),
                    "Mul" => Ok(x * y),
                    "Div" => {
                        if y == 0 {
                            Err(Error::Arg("integer division by zero".into()))
                        } else {
                            Ok(x / y)
                        }
                    }
                    _ => unreachable!(),
                })
                .collect::<Result<_>>()?;
            Ok(vec![TensorValue::new(out_shape, TensorData::I64(data))?])
        }
        _ => {
            let av = expand_to(&a.to_f64_vec(), &a.shape, &out_shape)?;
            let bv = expand_to(&b.to_f64_vec(), &b.shape, &out_shape)?;
            let data: Vec<f64> = av
                .iter()
                .zip(&bv)
                .map(|(&x, &y)| match node.op_type.as_str() {
                    "Add" => x + y,
                    "Sub" => x - y,
                    "Mul" => x * y,
                    "Div" => x / y,
                    _ => unreachable!(),
                })
                .collect();
            Ok(vec![f32_out(out_shape, data)])
        }
    }
}

fn expand_i64(t: &TensorValue, out_shape: &[usize]) -> Result<Vec<i64>> {
    let f = expand_to(&t.to_f64_vec(), &t.shape, out_shape)?;
    // i64 values used in graphs are shape-sized; f64 is exact for them
    Ok(f.into_iter().map(|v| v as i64).collect())
}

pub fn relu(_node: &NodeDef, inputs: &[Option<&TensorValue>]) -> Result<Vec<TensorValue>> {
    let x = req(inputs, 0, "x")?;
    let data = x.to_f64_vec().into_iter().map(|v| v.max(0.0)).collect();
    Ok(vec![f32_out(x.shape.clone(), data)])
}

pub fn sign(_node: &NodeDef, inputs: &[Option<&TensorValue>]) -> Result<Vec<TensorValue>> {
    let x = req(inputs, 0, "x")?;
    let data = x
        .to_f64_vec()
        .into_iter()
        .map(|v| {
            if v > 0.0 {
                1.0
            } else if v < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
        .collect();
    Ok(vec![f32_out(x.shape.clone(), data)])
}

pub fn identity(_node: &NodeDef, inputs: &[Option<&TensorValue>]) -> Result<Vec<TensorValue>> {
    Ok(vec![req(inputs, 0, "x")?.clone()])
}

pub fn clip(node: &NodeDef, inputs: &[Option<&TensorValue>]) -> Result<Vec<TensorValue>> {
    let x = req(inputs, 0, "x")?;
    let scalar = |t: Option<&TensorValue>| -> Result<Option<f64>> {
        match t {
            None => Ok(None),
            Some(t) if t.len() == 1 => Ok(Some(t.to_f64_vec()[0])),
            Some(_) => Err(Error::Unsupported("Clip with non-scalar bounds".into())),
        }
    };
    // bounds arrive as inputs (opset >= 11) or as min/max attributes
    let lo = scalar(opt(inputs, 1))?.or_else(|| node.attr_f32("min").map(f64::from));
    let hi = scalar(opt(inputs, 2))?.or_else(|| node.attr_f32("max").map(f64::from));

    let clamp = |v: f64| -> f64 {
        let v = lo.map_or(v, |l| v.max(l));
        hi.map_or(v, |h| v.min(h))
    };
    let data = match &x.data {
        TensorData::F32(v) => TensorData::F32(v.iter().map(|&e| clamp(f64::from(e)) as f32).collect()),
        TensorData::I8(v) => TensorData::I8(v.iter().map(|&e| clamp(f64::from(e)) as i8).collect()),
        TensorData::U8(v) => TensorData::U8(v.iter().map(|&e| clamp(f64::from(e)) as u8).collect()),
        TensorData::I32(v) => TensorData::I32(v.iter().map(|&e| clamp(f64::from(e)) as i32).collect()),
        TensorData::I64(v) => TensorData::I64(v.iter().map(|&e| clamp(e as f64) as i64).collect()),
        TensorData::Bool(_) => return Err(Error::Shape("Clip on boolean tensor".into())),
    };
    Ok(vec![TensorValue::new(x.shape.clone(), data)?])
}

// ---------------------------------------------------------------------------
// linear algebra

pub fn matmul(_node: &NodeDef, inputs: &[Option<&TensorValue>]) -> Result<Vec<TensorValue>> {
    let a = req(inputs, 0, "A")?;
    let b = req(inputs, 1, "B")?;
    let (ash, drop_m) = if a.shape.len() == 1 {
        (vec![1, a.shape[0]], true)
    } else {
        (a.shape.clone(), false)
    };
    let (bsh, drop_n) = if b.shape.len() == 1 {
        (vec![b.shape[0], 1], true)
    } else {
        (b.shape.clone(), false)
    };
    if ash.len() < 2 || bsh.len() < 2 {
        return Err(Error::Shape("MatMul operands must have rank >= 1".into()));
    }
    let (m, ka) = (ash[ash.len() - 2], ash[ash.len() - 1]);
    let (kb, n) = (bsh[bsh.len() - 2], bsh[bsh.len() - 1]);
    if ka != kb {
        return Err(Error::Shape(format!("MatMul inner dims differ: {ka} vs {kb}")));
    }
    let batch = broadcast_shapes(&ash[..ash.len() - 2], &bsh[..bsh.len() - 2])?;

    let mut a_target = batch.clone();
    a_target.extend([m, ka]);
    let mut b_target = batch.clone();
    b_target.extend([kb, n]);
    let av = expand_to(&a.to_f64_vec(), &ash, &a_target)?;
    let bv = expand_to(&b.to_f64_vec(), &bsh, &b_target)?;

    let batches: usize = batch.iter().product();
    let mut out = vec![0f64; batches * m * n];
    for bi in 0..batches {
        let ao = bi * m * ka;
        let bo = bi * ka * n;
        let oo = bi * m * n;
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0f64;
                for t in 0..ka {
                    acc += av[ao + i * ka + t] * bv[bo + t * n + j];
                }
                out[oo + i * n + j] = acc;
            }
        }
    }

    let mut out_shape = batch;
    if !drop_m {
        out_shape.push(m);
    }
    if !drop_n {
        out_shape.push(n);
    }
    Ok(vec![f32_out(out_shape, out)])
}

pub fn gemm(node: &NodeDef, inputs: &[Option<&TensorValue>]) -> Result<Vec<TensorValue>> {
    let a = req(inputs, 0, "A")?;
    let b = req(inputs, 1, "B")?;
    let c = opt(inputs, 2);
    let alpha = f64::from(node.attr_f32("alpha").unwrap_or(1.0));
    let beta = f64::from(node.attr_f32("beta").unwrap_or(1.0));
    let trans_a = node.attr_i64("transA").unwrap_or(0) != 0;
    let trans_b = node.attr_i64("transB").unwrap_or(0) != 0;
    if a.shape.len() != 2 || b.shape.len() != 2 {
        return Err(Error::Shape("Gemm operands must be 2-D".into()));
    }
    let (m, k) = if trans_a { (a.shape[1], a.shape[0]) } else { (a.shape[0], a.shape[1]) };
    let (kb, n) = if trans_b { (b.shape[1], b.shape[0]) } else { (b.shape[0], b.shape[1]) };
    if k != kb {
        return Err(Error::Shape(format!("Gemm inner dims differ: {k} vs {kb}")));
    }
    let av = a.to_f64_vec();
    let bv = b.to_f64_vec();
    let at = |i: usize, t: usize| if trans_a { av[t * a.shape[1] + i] } else { av[i * a.shape[1] + t] };
    let bt = |t: usize, j: usize| if trans_b { bv[j * b.shape[1] + t] } else { bv[t * b.shape[1] + j] };

    let cv = match c {
        Some(c) => Some(expand_to(&c.to_f64_vec(), &c.shape, &[m, n])?),
        None => None,
    };
    let mut out = vec![0f64; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0f64;
            for t in 0..k {
                acc += at(i, t) * bt(t, j);
            }
            let mut v = alpha * acc;
            if let Some(cv) = &cv {
                v += beta * cv[i * n + j];
            }
            out[i * n + j] = v;
        }
    }
    Ok(vec![f32_out(vec![m, n], out)])
}

// ---------------------------------------------------------------------------
// convolution and pooling

struct Conv2dAttrs {
    strides: [usize; 2],
    pads: [usize; 4], // h_begin, w_begin, h_end, w_end
    dilations: [usize; 2],
    group: usize,
}

fn conv_attrs(node: &NodeDef) -> Result<Conv2dAttrs> {
    if let Some(ap) = node.attr_str("auto_pad") {
        if ap != "NOTSET" {
            return Err(Error::Unsupported(format!("auto_pad '{ap}'")));
        }
    }
    let pair = |name: &str, default: i64| -> [usize; 2] {
        match node.attr_ints(name) {
            Some([a, b]) => [*a as usize, *b as usize],
            _ => [default as usize, default as usize],
        }
    };
    let pads = match node.attr_ints("pads") {
        Some([a, b, c, d]) => [*a as usize, *b as usize, *c as usize, *d as usize],
        _ => [0; 4],
    };
    Ok(Conv2dAttrs {
        strides: pair("strides", 1),
        pads,
        dilations: pair("dilations", 1),
        group: node.attr_i64("group").unwrap_or(1) as usize,
    })
}

pub fn conv(node: &NodeDef, inputs: &[Option<&TensorValue>]) -> Result<Vec<TensorValue>> {
    let x = req(inputs, 0, "X")?;
    let w = req(inputs, 1, "W")?;
    let bias = opt(inputs, 2);
    let nhwc = channels_last(node);
    let x_cf = if nhwc { transpose_tensor(x, &TO_NCHW)? } else { x.clone() };
    let y = conv2d_nchw(node, &x_cf, w, bias)?;
    Ok(vec![if nhwc { transpose_tensor(&y, &TO_NHWC)? } else { y }])
}

fn conv2d_nchw(
    node: &NodeDef,
    x: &TensorValue,
    w: &TensorValue,
    bias: Option<&TensorValue>,
) -> Result<TensorValue> {
    if x.shape.len() != 4 || w.shape.len() != 4 {
        return Err(Error::Shape("Conv supports 4-D (2-D spatial) tensors only".into()));
    }
    let attrs = conv_attrs(node)?;
    let [n, c, h, wd] = [x.shape[0], x.shape[1], x.shape[2], x.shape[3]];
    let [m, cg, kh, kw] = [w.shape[0], w.shape[1], w.shape[2], w.shape[3]];
    let g = attrs.group;
    if c != cg * g || m % g != 0 {
        return Err(Error::Shape(format!(
            "Conv channel mismatch: input {c}, kernel {cg} x group {g}"
        )));
    }
    let [sh, sw] = attrs.strides;
    let [dh, dw] = attrs.dilations;
    let [ph0, pw0, ph1, pw1] = attrs.pads;
    let eff_kh = (kh - 1) * dh + 1;
    let eff_kw = (kw - 1) * dw + 1;
    let oh = (h + ph0 + ph1).checked_sub(eff_kh).map(|v| v / sh + 1).ok_or_else(|| {
        Error::Shape("Conv kernel larger than padded input".into())
    })?;
    let ow = (wd + pw0 + pw1).checked_sub(eff_kw).map(|v| v / sw + 1).ok_or_else(|| {
        Error::Shape("Conv kernel larger than padded input".into())
    })?;

    let xv = x.to_f64_vec();
    let wv = w.to_f64_vec();
    let bv = bias.map(|b| b.to_f64_vec());
    let mg = m / g;
    let mut out = vec![0f64; n * m * oh * ow];
    for ni in 0..n {
        for mi in 0..m {
            let gi = mi / mg;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0f64;
                    for ci in 0..cg {
                        let xc = gi * cg + ci;
                        for ky in 0..kh {
                            let iy = (oy * sh + ky * dh) as isize - ph0 as isize;
                            if iy < 0 || iy as usize >= h {
                                continue;
                            }
                            for kx in 0..kw {
                                let ix = (ox * sw + kx * dw) as isize - pw0 as isize;
                                if ix < 0 || ix as usize >= wd {
                                    continue;
                                }
                                let xi = ((ni * c + xc) * h + iy as usize) * wd + ix as usize;
                                let wi = ((mi * cg + ci) * kh + ky) * kw + kx;
                                acc += xv[xi] * wv[wi];
                            }
                        }
                    }
                    if let Some(bv) = &bv {
                        acc += bv[mi];
                    }
                    out[((ni * m + mi) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    Ok(f32_out(vec![n, m, oh, ow], out))
}

fn pool2d(
    node: &NodeDef,
    inputs: &[Option<&TensorValue>],
    is_max: bool,
) -> Result<Vec<TensorValue>> {
    let x = req(inputs, 0, "X")?;
    let nhwc = channels_last(node);
    let x_cf = if nhwc { transpose_tensor(x, &TO_NCHW)? } else { x.clone() };
    if x_cf.shape.len() != 4 {
        return Err(Error::Shape("pooling supports 4-D tensors only".into()));
    }
    if node.attr_i64("ceil_mode").unwrap_or(0) != 0 {
        return Err(Error::Unsupported("ceil_mode pooling".into()));
    }
    let kernel = node
        .attr_ints("kernel_shape")
        .ok_or_else(|| Error::Shape("pooling requires kernel_shape".into()))?;
    if kernel.len() != 2 {
        return Err(Error::Shape("pooling supports 2-D kernels only".into()));
    }
    let [kh, kw] = [kernel[0] as usize, kernel[1] as usize];
    let strides = match node.attr_ints("strides") {
        Some([a, b]) => [*a as usize, *b as usize],
        _ => [1, 1],
    };
    let pads = match node.attr_ints("pads") {
        Some([a, b, c, d]) => [*a as usize, *b as usize, *c as usize, *d as usize],
        _ => [0; 4],
    };
    let include_pad = node.attr_i64("count_include_pad").unwrap_or(0) != 0;

    let [n, c, h, w] = [x_cf.shape[0], x_cf.shape[1], x_cf.shape[2], x_cf.shape[3]];
    let [sh, sw] = strides;
    let [ph0, pw0, ph1, pw1] = pads;
    let oh = (h + ph0 + ph1 - kh) / sh + 1;
    let ow = (w + pw0 + pw1 - kw) / sw + 1;
    let xv = x_cf.to_f64_vec();
    let mut out = vec![0f64; n * c * oh * ow];
    for ni in 0..n {
        for ci in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = if is_max { f64::NEG_INFINITY } else { 0.0 };
                    let mut count = 0usize;
                    for ky in 0..kh {
                        let iy = (oy * sh + ky) as isize - ph0 as isize;
                        for kx in 0..kw {
                            let ix = (ox * sw + kx) as isize - pw0 as isize;
                            let inside =
                                iy >= 0 && (iy as usize) < h && ix >= 0 && (ix as usize) < w;
                            if inside {
                                let v = xv[((ni * c + ci) * h + iy as usize) * w + ix as usize];
                                if is_max {
                                    acc = acc.max(v);
                                } else {
                                    acc += v;
                                }
                                count += 1;
                            } else if include_pad && !is_max {
                                count += 1;
                            }
                        }
                    }
                    let v = if is_max {
                        acc
                    } else {
                        let denom = if include_pad { kh * kw } else { count };
                        acc / denom as f64
                    };
                    out[((ni * c + ci) * oh + oy) * ow + ox] = v;
                }
            }
        }
    }
    let y = f32_out(vec![n, c, oh, ow], out);
    Ok(vec![if nhwc { transpose_tensor(&y, &TO_NHWC)? } else { y }])
}

pub fn max_pool(node: &NodeDef, inputs: &[Option<&TensorValue>]) -> Result<Vec<TensorValue>> {
    pool2d(node, inputs, true)
}

pub fn average_pool(node: &NodeDef, inputs: &[Option<&TensorValue>]) -> Result<Vec<TensorValue>> {
    pool2d(node, inputs, false)
}

pub fn global_average_pool(
    node: &NodeDef,
    inputs: &[Option<&TensorValue>],
) -> Result<Vec<TensorValue>> {
    let x = req(inputs, 0, "X")?;
    let nhwc = channels_last(node);
    let x_cf = if nhwc && x.shape.len() == 4 { transpose_tensor(x, &TO_NCHW)? } else { x.clone() };
    if x_cf.shape.len() < 3 {
        return Err(Error::Shape("GlobalAveragePool needs rank >= 3".into()));
    }
    let n = x_cf.shape[0];
    let c = x_cf.shape[1];
    let spatial: usize = x_cf.shape[2..].iter().product();
    let xv = x_cf.to_f64_vec();
    let mut out = vec![0f64; n * c];
    for ni in 0..n {
        for ci in 0..c {
            let base = (ni * c + ci) * spatial;
            let sum: f64 = xv[base..base + spatial].iter().sum();
            out[ni * c + ci] = sum / spatial as f64;
        }
    }
    let mut out_shape = vec![n, c];
    out_shape.extend(std::iter::repeat_n(1, x_cf.shape.len() - 2));
    let y = f32_out(out_shape, out);
    Ok(vec![if nhwc && x.shape.len() == 4 { transpose_tensor(&y, &TO_NHWC)? } else { y }])
}

pub fn batch_norm(node: &NodeDef, inputs: &[Option<&TensorValue>]) -> Result<Vec<TensorValue>> {
    let x = req(inputs, 0, "X")?;
    let scale = req(inputs, 1, "scale")?.to_f64_vec();
    let bias = req(inputs, 2, "B")?.to_f64_vec();
    let mean = req(inputs, 3, "mean")?.to_f64_vec();
    let var = req(inputs, 4, "var")?.to_f64_vec();
    let eps = f64::from(node.attr_f32("epsilon").unwrap_or(1e-5));

    let rank = x.shape.len();
    let channel_axis = if channels_last(node) && rank == 4 { 3 } else { 1.min(rank.saturating_sub(1)) };
    let c = x.shape[channel_axis];
    if [scale.len(), bias.len(), mean.len(), var.len()].iter().any(|&l| l != c) {
        return Err(Error::Shape("BatchNormalization parameter length mismatch".into()));
    }

    let strides = row_major_strides(&x.shape);
    let xv = x.to_f64_vec();
    let mut out = Vec::with_capacity(xv.len());
    for (flat, &v) in xv.iter().enumerate() {
        let ci = (flat / strides[channel_axis]) % c;
        out.push((v - mean[ci]) / (var[ci] + eps).sqrt() * scale[ci] + bias[ci]);
    }
    Ok(vec![f32_out(x.shape.clone(), out)])
}

// ---------------------------------------------------------------------------
// shape plumbing

pub fn reshape(node: &NodeDef, inputs: &[Option<&TensorValue>]) -> Result<Vec<TensorValue>> {
    let x = req(inputs, 0, "data")?;
    let shape_spec = req(inputs, 1, "shape")?.to_i64_vec()?;
    if node.attr_i64("allowzero").unwrap_or(0) != 0 {
        return Err(Error::Unsupported("Reshape allowzero".into()));
    }
    let mut dims: Vec<usize> = Vec::with_capacity(shape_spec.len());
    let mut infer_at = None;
    for (i, &d) in shape_spec.iter().enumerate() {
        match d {
            0 => {
                let copied = *x.shape.get(i).ok_or_else(|| {
                    Error::Shape("Reshape dim 0 has no corresponding input dim".into())
                })?;
                dims.push(copied);
            }
            -1 => {
                if infer_at.is_some() {
                    return Err(Error::Shape("Reshape allows at most one -1 dim".into()));
                }
                infer_at = Some(i);
                dims.push(1);
            }
            d if d > 0 => dims.push(d as usize),
            _ => return Err(Error::Shape(format!("invalid Reshape dim {d}"))),
        }
    }
    let known: usize = dims.iter().product();
    if let Some(i) = infer_at {
        if known == 0 || x.len() % known != 0 {
            return Err(Error::Shape("Reshape cannot infer -1 dim".into()));
        }
        dims[i] = x.len() / known;
    } else if known != x.len() {
        return Err(Error::Shape(format!(
            "Reshape target {:?} does not match {} elements",
            dims,
            x.len()
        )));
    }
    Ok(vec![TensorValue::new(dims, x.data.clone())?])
}

pub fn transpose(node: &NodeDef, inputs: &[Option<&TensorValue>]) -> Result<Vec<TensorValue>> {
    let x = req(inputs, 0, "data")?;
    let perm: Vec<usize> = match node.attr_ints("perm") {
        Some(p) => p.iter().map(|&v| v as usize).collect(),
        None => (0..x.shape.len()).rev().collect(),
    };
    Ok(vec![transpose_tensor(x, &perm)?])
}

pub fn flatten(node: &NodeDef, inputs: &[Option<&TensorValue>]) -> Result<Vec<TensorValue>> {
    let x = req(inputs, 0, "data")?;
    let axis = norm_axis(node.attr_i64("axis").unwrap_or(1), x.shape.len() + 1)?;
    let lead: usize = x.shape[..axis.min(x.shape.len())].iter().product();
    let tail: usize = x.shape[axis.min(x.shape.len())..].iter().product();
    Ok(vec![TensorValue::new(vec![lead, tail], x.data.clone())?])
}

fn axes_arg(node: &NodeDef, inputs: &[Option<&TensorValue>]) -> Result<Option<Vec<i64>>> {
    if let Some(a) = node.attr_ints("axes") {
        return Ok(Some(a.to_vec()));
    }
    match opt(inputs, 1) {
        Some(t) => Ok(Some(t.to_i64_vec()?)),
        None => Ok(None),
    }
}

pub fn squeeze(node: &NodeDef, inputs: &[Option<&TensorValue>]) -> Result<Vec<TensorValue>> {
    let x = req(inputs, 0, "data")?;
    let rank = x.shape.len();
    let axes: Vec<usize> = match axes_arg(node, inputs)? {
        Some(a) => a.into_iter().map(|v| norm_axis(v, rank)).collect::<Result<_>>()?,
        None => (0..rank).filter(|&i| x.shape[i] == 1).collect(),
    };
    let mut dims = Vec::new();
    for (i, &d) in x.shape.iter().enumerate() {
        if axes.contains(&i) {
            if d != 1 {
                return Err(Error::Shape(format!("cannot squeeze axis {i} of size {d}")));
            }
        } else {
            dims.push(d);
        }
    }
    Ok(vec![TensorValue::new(dims, x.data.clone())?])
}

pub fn unsqueeze(node: &NodeDef, inputs: &[Option<&TensorValue>]) -> Result<Vec<TensorValue>> {
    let x = req(inputs, 0, "data")?;
    let axes = axes_arg(node, inputs)?
        .ok_or_else(|| Error::Shape("Unsqueeze requires axes".into()))?;
    let out_rank = x.shape.len() + axes.len();
    let axes: Vec<usize> =
        axes.into_iter().map(|v| norm_axis(v, out_rank)).collect::<Result<_>>()?;
    let mut dims = Vec::with_capacity(out_rank);
    let mut src = x.shape.iter();
    for i in 0..out_rank {
        if axes.contains(&i) {
            dims.push(1);
        } else {
            dims.push(*src.next().ok_or_else(|| Error::Shape("bad Unsqueeze axes".into()))?);
        }
    }
    Ok(vec![TensorValue::new(dims, x.data.clone())?])
}

pub fn concat(node: &NodeDef, inputs: &[Option<&TensorValue>]) -> Result<Vec<TensorValue>> {
    let parts: Vec<&TensorValue> = inputs.iter().flatten().copied().collect();
    if parts.is_empty() {
        return Err(Error::Shape("Concat requires at least one input".into()));
    }
    let rank = parts[0].shape.len();
    let axis = norm_axis(
        node.attr_i64("axis").ok_or_else(|| Error::Shape("Concat requires axis".into()))?,
        rank,
    )?;
    let mut out_shape = parts[0].shape.clone();
    out_shape[axis] = 0;
    for p in &parts {
        if p.shape.len() != rank
            || p.elem_type() != parts[0].elem_type()
            || p.shape
                .iter()
                .enumerate()
                .any(|(i, &d)| i != axis && d != parts[0].shape[i])
        {
            return Err(Error::Shape("Concat input shapes are incompatible".into()));
        }
        out_shape[axis] += p.shape[axis];
    }

    // map every output element back to (part, flat index)
    let prefix: usize = out_shape[..axis].iter().product();
    let suffix: usize = out_shape[axis + 1..].iter().product();
    let count: usize = out_shape.iter().product();
    let mut map: Vec<(usize, usize)> = Vec::with_capacity(count);
    for p in 0..prefix {
        for (pi, part) in parts.iter().enumerate() {
            let da = part.shape[axis];
            for a in 0..da {
                for s in 0..suffix {
                    map.push((pi, (p * da + a) * suffix + s));
                }
            }
        }
    }
    macro_rules! splice {
        ($variant:ident) => {{
            let slices: Vec<&[_]> = parts
                .iter()
                .map(|p| match &p.data {
                    TensorData::$variant(v) => v.as_slice(),
                    _ => unreachable!(),
                })
                .collect();
            TensorData::$variant(map.iter().map(|&(pi, i)| slices[pi][i]).collect())
        }};
    }
    let data = match parts[0].data {
        TensorData::F32(_) => splice!(F32),
        TensorData::I8(_) => splice!(I8),
        TensorData::U8(_) => splice!(U8),
        TensorData::I32(_) => splice!(I32),
        TensorData::I64(_) => splice!(I64),
        TensorData::Bool(_) => splice!(Bool),
    };
    Ok(vec![TensorValue::new(out_shape, data)?])
}

pub fn gather(node: &NodeDef, inputs: &[Option<&TensorValue>]) -> Result<Vec<TensorValue>> {
    let data = req(inputs, 0, "data")?;
    let indices = req(inputs, 1, "indices")?;
    let axis = norm_axis(node.attr_i64("axis").unwrap_or(0), data.shape.len())?;
    let dim = data.shape[axis];
    let idx: Vec<usize> = indices
        .to_i64_vec()?
        .into_iter()
        .map(|v| {
            let v = if v < 0 { v + dim as i64 } else { v };
            if v < 0 || v as usize >= dim {
                Err(Error::Shape(format!("Gather index {v} out of range 0..{dim}")))
            } else {
                Ok(v as usize)
            }
        })
        .collect::<Result<_>>()?;

    let mut out_shape: Vec<usize> = data.shape[..axis].to_vec();
    out_shape.extend(&indices.shape);
    out_shape.extend(&data.shape[axis + 1..]);

    let suffix: usize = data.shape[axis + 1..].iter().product();
    let prefix: usize = data.shape[..axis].iter().product();
    let mut map = Vec::with_capacity(prefix * idx.len() * suffix);
    for p in 0..prefix {
        for &i in &idx {
            for s in 0..suffix {
                map.push((p * dim + i) * suffix + s);
            }
        }
    }
    Ok(vec![remap_data(data, out_shape, &map)])
}

pub fn shape(_node: &NodeDef, inputs: &[Option<&TensorValue>]) -> Result<Vec<TensorValue>> {
    let x = req(inputs, 0, "data")?;
    let dims: Vec<i64> = x.shape.iter().map(|&d| d as i64).collect();
    Ok(vec![TensorValue::i64(vec![dims.len()], dims)])
}

pub fn pad(node: &NodeDef, inputs: &[Option<&TensorValue>]) -> Result<Vec<TensorValue>> {
    let x = req(inputs, 0, "data")?;
    if let Some(mode) = node.attr_str("mode") {
        if mode != "constant" {
            return Err(Error::Unsupported(format!("Pad mode '{mode}'")));
        }
    }
    let pads: Vec<i64> = match opt(inputs, 1) {
        Some(t) => t.to_i64_vec()?,
        None => node
            .attr_ints("pads")
            .ok_or_else(|| Error::Shape("Pad requires pads".into()))?
            .to_vec(),
    };
    let rank = x.shape.len();
    if pads.len() != 2 * rank || pads.iter().any(|&p| p < 0) {
        return Err(Error::Shape("Pad expects 2*rank nonnegative pad values".into()));
    }
    let fill = match opt(inputs, 2) {
        Some(t) => t.to_f64_vec()[0],
        None => f64::from(node.attr_f32("value").unwrap_or(0.0)),
    };
    let xv = match &x.data {
        TensorData::F32(v) => v,
        _ => return Err(Error::Unsupported("Pad on non-float tensor".into())),
    };

    let out_shape: Vec<usize> = (0..rank)
        .map(|i| x.shape[i] + pads[i] as usize + pads[rank + i] as usize)
        .collect();
    let in_strides = row_major_strides(&x.shape);
    let count: usize = out_shape.iter().product();
    let mut out = Vec::with_capacity(count);
    let mut idx = vec![0usize; rank];
    for _ in 0..count {
        let mut flat = 0usize;
        let mut inside = true;
        for d in 0..rank {
            let src = idx[d] as isize - pads[d] as isize;
            if src < 0 || src as usize >= x.shape[d] {
                inside = false;
                break;
            }
            flat += src as usize * in_strides[d];
        }
        out.push(if inside { f64::from(xv[flat]) } else { fill });
        bump(&mut idx, &out_shape);
    }
    Ok(vec![f32_out(out_shape, out)])
}

// ---------------------------------------------------------------------------
// quantization ops (standard QDQ and the QONNX custom domain)

fn axis_param_shape(param: &TensorValue, x: &TensorValue, axis: i64) -> Result<Vec<usize>> {
    if param.shape.len() <= 1 && param.len() == 1 {
        return Ok(vec![]);
    }
    if param.shape.len() == 1 {
        let axis = norm_axis(axis, x.shape.len())?;
        if param.len() != x.shape[axis] {
            return Err(Error::Shape(format!(
                "per-axis parameter length {} does not match dim {}",
                param.len(),
                x.shape[axis]
            )));
        }
        let mut shape = vec![1usize; x.shape.len()];
        shape[axis] = param.len();
        return Ok(shape);
    }
    Err(Error::Unsupported("quantization parameters must be scalar or 1-D".into()))
}

pub fn quantize_linear(node: &NodeDef, inputs: &[Option<&TensorValue>]) -> Result<Vec<TensorValue>> {
    let x = req(inputs, 0, "x")?;
    let scale = req(inputs, 1, "y_scale")?;
    let zp = opt(inputs, 2);
    let axis = node.attr_i64("axis").unwrap_or(1);

    let unsigned = match zp {
        None => true,
        Some(t) => match t.data {
            TensorData::U8(_) => true,
            TensorData::I8(_) => false,
            _ => return Err(Error::Unsupported("QuantizeLinear zero_point must be int8/uint8".into())),
        },
    };
    let s_shape = axis_param_shape(scale, x, axis)?;
    let ss = expand_to(&scale.to_f64_vec(), &s_shape, &x.shape)?;
    let zs = match zp {
        Some(t) => expand_to(&t.to_f64_vec(), &axis_param_shape(t, x, axis)?, &x.shape)?,
        None => vec![0.0; x.len()],
    };
    let xs = x.to_f64_vec();
    let (lo, hi) = if unsigned { (0.0, 255.0) } else { (-128.0, 127.0) };
    let q: Vec<f64> = (0..xs.len())
        .map(|i| ((xs[i] / ss[i]).round_ties_even() + zs[i]).clamp(lo, hi))
        .collect();
    let data = if unsigned {
        TensorData::U8(q.into_iter().map(|v| v as u8).collect())
    } else {
        TensorData::I8(q.into_iter().map(|v| v as i8).collect())
    };
    Ok(vec![TensorValue::new(x.shape.clone(), data)?])
}

pub fn dequantize_linear(
    node: &NodeDef,
    inputs: &[Option<&TensorValue>],
) -> Result<Vec<TensorValue>> {
    let x = req(inputs, 0, "x")?;
    let scale = req(inputs, 1, "x_scale")?;
    let zp = opt(inputs, 2);
    let axis = node.attr_i64("axis").unwrap_or(1);

    let ss = expand_to(&scale.to_f64_vec(), &axis_param_shape(scale, x, axis)?, &x.shape)?;
    let zs = match zp {
        Some(t) => expand_to(&t.to_f64_vec(), &axis_param_shape(t, x, axis)?, &x.shape)?,
        None => vec![0.0; x.len()],
    };
    let xs = x.to_f64_vec();
    let out = (0..xs.len()).map(|i| ss[i] * (xs[i] - zs[i])).collect();
    Ok(vec![f32_out(x.shape.clone(), out)])
}

pub fn quant(node: &NodeDef, inputs: &[Option<&TensorValue>]) -> Result<Vec<TensorValue>> {
    let x = req(inputs, 0, "x")?;
    let scale = req(inputs, 1, "scale")?;
    let zp = req(inputs, 2, "zero_point")?;
    let bw = req(inputs, 3, "bit_width")?;
    let mode = RoundingMode::from_name(node.attr_str("rounding_mode").unwrap_or("ROUND"))?;
    let params = QuantParams::new(
        scale.clone(),
        zp.clone(),
        bw.clone(),
        node.attr_i64("signed").unwrap_or(1) != 0,
        node.attr_i64("narrow").unwrap_or(0) != 0,
        mode,
    )?;
    Ok(vec![kernels::quant_op(x, &params)?])
}

pub fn bipolar_quant(_node: &NodeDef, inputs: &[Option<&TensorValue>]) -> Result<Vec<TensorValue>> {
    let x = req(inputs, 0, "x")?;
    let scale = req(inputs, 1, "scale")?;
    Ok(vec![kernels::bipolar_quant_op(x, scale)?])
}

pub fn trunc(node: &NodeDef, inputs: &[Option<&TensorValue>]) -> Result<Vec<TensorValue>> {
    let x = req(inputs, 0, "x")?;
    let scale = req(inputs, 1, "scale")?;
    let zp = req(inputs, 2, "zero_point")?;
    let in_bw = req(inputs, 3, "in_bit_width")?;
    let out_bw = req(inputs, 4, "out_bit_width")?;
    let mode = RoundingMode::from_name(node.attr_str("rounding_mode").unwrap_or("FLOOR"))?;
    Ok(vec![kernels::trunc_op(x, scale, zp, in_bw, out_bw, mode)?])
}
