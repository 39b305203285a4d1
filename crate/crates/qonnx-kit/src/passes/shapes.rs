//! Shape inference for intermediate tensors.
//!
//! Works over a symbolic dimension domain: dims are either known sizes or
//! named/unnamed symbols. Unknown ops simply stop propagation along their
//! outputs; existing annotations are kept and checked for consistency.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::ir::{topological_order, DType, Dim, Model, NodeDef, ValueInfo};

#[derive(Debug, Clone, PartialEq)]
pub struct TensorInfo {
    pub elem_type: DType,
    pub dims: Vec<Dim>,
}

impl TensorInfo {
    fn new(elem_type: DType, dims: Vec<Dim>) -> Self {
        TensorInfo { elem_type, dims }
    }

    pub fn known_dims(&self) -> Option<Vec<usize>> {
        self.dims
            .iter()
            .map(|d| match d {
                Dim::Known(v) => Some(*v),
                Dim::Symbolic(_) => None,
            })
            .collect()
    }
}

fn anon() -> Dim {
    Dim::Symbolic(String::new())
}

/// Symbolic-aware broadcast of two dim lists.
fn bc_dims(a: &[Dim], b: &[Dim]) -> Result<Vec<Dim>> {
    let rank = a.len().max(b.len());
    let mut out = Vec::with_capacity(rank);
    for i in 0..rank {
        let da = if i < rank - a.len() { &Dim::Known(1) } else { &a[i - (rank - a.len())] };
        let db = if i < rank - b.len() { &Dim::Known(1) } else { &b[i - (rank - b.len())] };
        let d = match (da, db) {
            (Dim::Known(1), d) | (d, Dim::Known(1)) => d.clone(),
            (Dim::Known(x), Dim::Known(y)) if x == y => Dim::Known(*x),
            (Dim::Known(_), Dim::Known(_)) => {
                return Err(Error::Shape(format!("dims do not broadcast: {a:?} vs {b:?}")))
            }
            (Dim::Symbolic(x), Dim::Symbolic(y)) if x == y && !x.is_empty() => da.clone(),
            // a symbol against a concrete size (or another symbol) resolves
            // to the concrete side when present, else a fresh unknown
            (Dim::Symbolic(_), Dim::Known(k)) | (Dim::Known(k), Dim::Symbolic(_)) => Dim::Known(*k),
            _ => anon(),
        };
        out.push(d);
    }
    Ok(out)
}

fn consistent(declared: &[Dim], inferred: &[Dim]) -> bool {
    declared.len() == inferred.len()
        && declared.iter().zip(inferred).all(|(d, i)| match (d, i) {
            (Dim::Known(a), Dim::Known(b)) => a == b,
            _ => true,
        })
}

/// Infer (dtype, dims) for every tensor reachable from inputs and
/// initializers. Returns the full map, including the seeded names.
pub fn inferred_shapes(m: &Model) -> Result<HashMap<String, TensorInfo>> {
    let g = &m.graph;
    let mut info: HashMap<String, TensorInfo> = HashMap::new();

    for (name, t) in &g.initializers {
        info.insert(
            name.clone(),
            TensorInfo::new(t.elem_type(), t.shape.iter().map(|&d| Dim::Known(d)).collect()),
        );
    }
    for vi in &g.inputs {
        if let Some(dims) = &vi.shape {
            info.entry(vi.name.clone())
                .or_insert_with(|| TensorInfo::new(vi.elem_type, dims.clone()));
        }
    }

    let declared: HashMap<&str, &ValueInfo> = g
        .value_info
        .iter()
        .chain(&g.outputs)
        .map(|vi| (vi.name.as_str(), vi))
        .collect();

    for idx in topological_order(g)? {
        let node = &g.nodes[idx];
        let outs = infer_node(m, node, &info)?;
        for (name, out) in node.outputs.iter().zip(outs) {
            let Some(out) = out else { continue };
            if let Some(vi) = declared.get(name.as_str()) {
                if let Some(dims) = &vi.shape {
                    if !consistent(dims, &out.dims) {
                        return Err(Error::ShapeConflict(format!(
                            "tensor '{}' declared {:?} but inferred {:?}",
                            name, dims, out.dims
                        )));
                    }
                }
            }
            info.insert(name.clone(), out);
        }
    }
    Ok(info)
}

/// Annotate the model's value_info with inferred shapes.
pub fn infer_shapes(m: &Model) -> Result<Model> {
    let info = inferred_shapes(m)?;
    let mut out = m.clone();
    let g = &mut out.graph;

    let io: std::collections::HashSet<&str> = g
        .inputs
        .iter()
        .chain(&g.outputs)
        .map(|vi| vi.name.as_str())
        .collect();

    let mut annotated: HashMap<String, ValueInfo> = g
        .value_info
        .drain(..)
        .map(|vi| (vi.name.clone(), vi))
        .collect();
    for node in &g.nodes {
        for name in &node.outputs {
            if name.is_empty() || io.contains(name.as_str()) {
                continue;
            }
            if let Some(ti) = info.get(name) {
                annotated.insert(
                    name.clone(),
                    ValueInfo { name: name.clone(), elem_type: ti.elem_type, shape: Some(ti.dims.clone()) },
                );
            }
        }
    }
    let mut vis: Vec<ValueInfo> = annotated.into_values().collect();
    vis.sort_by(|a, b| a.name.cmp(&b.name));
    g.value_info = vis;
    Ok(out)
}

fn nhwc(node: &NodeDef) -> bool {
    node.attr_str("layout") == Some("NHWC")
}

fn infer_node(
    m: &Model,
    node: &NodeDef,
    info: &HashMap<String, TensorInfo>,
) -> Result<Vec<Option<TensorInfo>>> {
    let get = |i: usize| -> Option<&TensorInfo> {
        node.inputs.get(i).filter(|n| !n.is_empty()).and_then(|n| info.get(n))
    };
    let constant = |i: usize| {
        node.inputs.get(i).and_then(|n| m.graph.initializers.get(n))
    };
    let unknown = Ok(vec![None; node.outputs.len()]);
    let one = |ti: TensorInfo| Ok(vec![Some(ti)]);

    match (node.domain.as_str(), node.op_type.as_str()) {
        (crate::ir::QONNX_DOMAIN, "Quant" | "BipolarQuant" | "Trunc") => match get(0) {
            // QONNX ops are float-in/float-out and shape-preserving on x
            Some(x) => one(TensorInfo::new(DType::F32, x.dims.clone())),
            None => unknown,
        },
        ("" | "ai.onnx", op) => match op {
            "Add" | "Sub" | "Mul" | "Div" => match (get(0), get(1)) {
                (Some(a), Some(b)) => one(TensorInfo::new(a.elem_type, bc_dims(&a.dims, &b.dims)?)),
                _ => unknown,
            },
            "Relu" | "Clip" | "Identity" | "Sign" | "BatchNormalization" => match get(0) {
                Some(x) => {
                    let mut outs = vec![Some(TensorInfo::new(x.elem_type, x.dims.clone()))];
                    outs.resize(node.outputs.len(), None);
                    Ok(outs)
                }
                None => unknown,
            },
            "QuantizeLinear" => match get(0) {
                Some(x) => {
                    let dt = match get(2).map(|t| t.elem_type) {
                        Some(DType::I8) => DType::I8,
                        _ => DType::U8,
                    };
                    one(TensorInfo::new(dt, x.dims.clone()))
                }
                None => unknown,
            },
            "DequantizeLinear" => match get(0) {
                Some(x) => one(TensorInfo::new(DType::F32, x.dims.clone())),
                None => unknown,
            },
            "MatMul" => match (get(0), get(1)) {
                (Some(a), Some(b)) if a.dims.len() >= 2 && b.dims.len() >= 2 => {
                    let (ar, br) = (a.dims.len(), b.dims.len());
                    let batch = bc_dims(&a.dims[..ar - 2], &b.dims[..br - 2])?;
                    let mut dims = batch;
                    dims.push(a.dims[ar - 2].clone());
                    dims.push(b.dims[br - 1].clone());
                    one(TensorInfo::new(a.elem_type, dims))
                }
                _ => unknown,
            },
            "Gemm" => match (get(0), get(1)) {
                (Some(a), Some(b)) if a.dims.len() == 2 && b.dims.len() == 2 => {
                    let ta = node.attr_i64("transA").unwrap_or(0) != 0;
                    let tb = node.attr_i64("transB").unwrap_or(0) != 0;
                    let m_ = a.dims[usize::from(ta)].clone();
                    let n_ = b.dims[usize::from(!tb)].clone();
                    one(TensorInfo::new(a.elem_type, vec![m_, n_]))
                }
                _ => unknown,
            },
            "Conv" => conv_like_shape(node, get(0), get(1).map(|w| w.dims.clone()), info),
            "MaxPool" | "AveragePool" => {
                let kernel: Option<Vec<Dim>> = node
                    .attr_ints("kernel_shape")
                    .map(|k| k.iter().map(|&v| Dim::Known(v as usize)).collect());
                match kernel {
                    Some(k) => {
                        // reuse the conv arithmetic with a per-channel kernel
                        pool_shape(node, get(0), &k)
                    }
                    None => unknown,
                }
            }
            "GlobalAveragePool" => match get(0) {
                Some(x) if x.dims.len() >= 3 => {
                    let mut dims = x.dims.clone();
                    let rank = dims.len();
                    if nhwc(node) && rank == 4 {
                        for d in dims.iter_mut().take(3).skip(1) {
                            *d = Dim::Known(1);
                        }
                    } else {
                        for d in dims.iter_mut().take(rank).skip(2) {
                            *d = Dim::Known(1);
                        }
                    }
                    one(TensorInfo::new(x.elem_type, dims))
                }
                _ => unknown,
            },
            "Reshape" => match (get(0), constant(1)) {
                (Some(x), Some(spec)) => {
                    let spec = spec.to_i64_vec()?;
                    match reshape_dims(&x.dims, &spec) {
                        Some(dims) => one(TensorInfo::new(x.elem_type, dims)),
                        None => unknown,
                    }
                }
                _ => unknown,
            },
            "Transpose" => match get(0) {
                Some(x) => {
                    let rank = x.dims.len();
                    let perm: Vec<usize> = match node.attr_ints("perm") {
                        Some(p) => p.iter().map(|&v| v as usize).collect(),
                        None => (0..rank).rev().collect(),
                    };
                    if perm.len() != rank || perm.iter().any(|&p| p >= rank) {
                        return Err(Error::Shape(format!("invalid Transpose perm {perm:?}")));
                    }
                    one(TensorInfo::new(x.elem_type, perm.iter().map(|&p| x.dims[p].clone()).collect()))
                }
                None => unknown,
            },
            "Flatten" => match get(0) {
                Some(x) => {
                    let axis = node.attr_i64("axis").unwrap_or(1).max(0) as usize;
                    let axis = axis.min(x.dims.len());
                    let fold = |dims: &[Dim]| -> Dim {
                        let mut acc = 1usize;
                        for d in dims {
                            match d {
                                Dim::Known(v) => acc *= v,
                                Dim::Symbolic(_) => return anon(),
                            }
                        }
                        Dim::Known(acc)
                    };
                    one(TensorInfo::new(x.elem_type, vec![fold(&x.dims[..axis]), fold(&x.dims[axis..])]))
                }
                None => unknown,
            },
            "Squeeze" => match get(0) {
                Some(x) => {
                    let axes = static_axes(node, constant(1), x.dims.len())?;
                    match axes {
                        Some(axes) => {
                            let dims = x
                                .dims
                                .iter()
                                .enumerate()
                                .filter(|(i, _)| !axes.contains(i))
                                .map(|(_, d)| d.clone())
                                .collect();
                            one(TensorInfo::new(x.elem_type, dims))
                        }
                        None => unknown,
                    }
                }
                None => unknown,
            },
            "Unsqueeze" => match get(0) {
                Some(x) => {
                    let out_rank = x.dims.len() + node.attr_ints("axes").map_or(0, |a| a.len());
                    let axes = static_axes(node, constant(1), out_rank.max(x.dims.len() + 1))?;
                    match axes {
                        Some(axes) => {
                            let out_rank = x.dims.len() + axes.len();
                            let mut dims = Vec::with_capacity(out_rank);
                            let mut src = x.dims.iter();
                            for i in 0..out_rank {
                                if axes.contains(&i) {
                                    dims.push(Dim::Known(1));
                                } else {
                                    dims.push(src.next().cloned().unwrap_or(anon()));
                                }
                            }
                            one(TensorInfo::new(x.elem_type, dims))
                        }
                        None => unknown,
                    }
                }
                None => unknown,
            },
            "Concat" => {
                let parts: Vec<&TensorInfo> =
                    (0..node.inputs.len()).map(&get).collect::<Option<_>>().unwrap_or_default();
                if parts.is_empty() || parts.len() != node.inputs.len() {
                    return unknown;
                }
                let rank = parts[0].dims.len();
                let axis = node.attr_i64("axis").unwrap_or(0);
                let axis = if axis < 0 { (axis + rank as i64) as usize } else { axis as usize };
                if axis >= rank {
                    return Err(Error::Shape("Concat axis out of range".into()));
                }
                let mut dims = parts[0].dims.clone();
                let mut total = Some(0usize);
                for p in &parts {
                    match &p.dims[axis] {
                        Dim::Known(v) => total = total.map(|t| t + v),
                        Dim::Symbolic(_) => total = None,
                    }
                }
                dims[axis] = total.map_or(anon(), Dim::Known);
                one(TensorInfo::new(parts[0].elem_type, dims))
            }
            "Gather" => match (get(0), get(1)) {
                (Some(data), Some(idx)) => {
                    let rank = data.dims.len();
                    let axis = node.attr_i64("axis").unwrap_or(0);
                    let axis = if axis < 0 { (axis + rank as i64) as usize } else { axis as usize };
                    if axis >= rank {
                        return Err(Error::Shape("Gather axis out of range".into()));
                    }
                    let mut dims = data.dims[..axis].to_vec();
                    dims.extend(idx.dims.iter().cloned());
                    dims.extend(data.dims[axis + 1..].iter().cloned());
                    one(TensorInfo::new(data.elem_type, dims))
                }
                _ => unknown,
            },
            "Shape" => match get(0) {
                Some(x) => one(TensorInfo::new(DType::I64, vec![Dim::Known(x.dims.len())])),
                None => unknown,
            },
            "Pad" => match (get(0), constant(1).map(|t| t.to_i64_vec()).transpose()?) {
                (Some(x), Some(pads)) if pads.len() == 2 * x.dims.len() => {
                    let rank = x.dims.len();
                    let dims = x
                        .dims
                        .iter()
                        .enumerate()
                        .map(|(i, d)| match d {
                            Dim::Known(v) => {
                                Dim::Known(v + pads[i] as usize + pads[rank + i] as usize)
                            }
                            Dim::Symbolic(_) => anon(),
                        })
                        .collect();
                    one(TensorInfo::new(x.elem_type, dims))
                }
                _ => unknown,
            },
            _ => unknown,
        },
        _ => unknown,
    }
}

fn static_axes(
    node: &NodeDef,
    constant: Option<&crate::ir::TensorValue>,
    rank: usize,
) -> Result<Option<Vec<usize>>> {
    let raw: Option<Vec<i64>> = if let Some(a) = node.attr_ints("axes") {
        Some(a.to_vec())
    } else {
        constant.map(|t| t.to_i64_vec()).transpose()?
    };
    Ok(raw.map(|axes| {
        axes.into_iter()
            .map(|v| if v < 0 { (v + rank as i64) as usize } else { v as usize })
            .collect()
    }))
}

fn reshape_dims(input: &[Dim], spec: &[i64]) -> Option<Vec<Dim>> {
    let mut dims: Vec<Dim> = Vec::with_capacity(spec.len());
    let mut infer_at = None;
    for (i, &d) in spec.iter().enumerate() {
        match d {
            0 => dims.push(input.get(i)?.clone()),
            -1 => {
                infer_at = Some(i);
                dims.push(Dim::Known(1));
            }
            d if d > 0 => dims.push(Dim::Known(d as usize)),
            _ => return None,
        }
    }
    if let Some(i) = infer_at {
        let total: Option<usize> = input
            .iter()
            .map(|d| match d {
                Dim::Known(v) => Some(*v),
                Dim::Symbolic(_) => None,
            })
            .product::<Option<usize>>();
        let known: Option<usize> = dims
            .iter()
            .map(|d| match d {
                Dim::Known(v) => Some(*v),
                Dim::Symbolic(_) => None,
            })
            .product::<Option<usize>>();
        match (total, known) {
            (Some(t), Some(k)) if k > 0 && t % k == 0 => dims[i] = Dim::Known(t / k),
            _ => dims[i] = anon(),
        }
    }
    Some(dims)
}

fn conv_like_shape(
    node: &NodeDef,
    x: Option<&TensorInfo>,
    w_dims: Option<Vec<Dim>>,
    _info: &HashMap<String, TensorInfo>,
) -> Result<Vec<Option<TensorInfo>>> {
    let (Some(x), Some(w)) = (x, w_dims) else {
        return Ok(vec![None]);
    };
    if x.dims.len() != 4 || w.len() != 4 {
        return Ok(vec![None]);
    }
    let channels_last = nhwc(node);
    let m = w[0].clone();
    let kernel = [&w[2], &w[3]];
    let (h, wd) = if channels_last { (&x.dims[1], &x.dims[2]) } else { (&x.dims[2], &x.dims[3]) };

    let out_spatial = spatial_out(node, [h, wd], [kernel[0], kernel[1]])?;
    let dims = if channels_last {
        vec![x.dims[0].clone(), out_spatial[0].clone(), out_spatial[1].clone(), m]
    } else {
        vec![x.dims[0].clone(), m, out_spatial[0].clone(), out_spatial[1].clone()]
    };
    Ok(vec![Some(TensorInfo::new(DType::F32, dims))])
}

fn pool_shape(
    node: &NodeDef,
    x: Option<&TensorInfo>,
    kernel: &[Dim],
) -> Result<Vec<Option<TensorInfo>>> {
    let Some(x) = x else { return Ok(vec![None]) };
    if x.dims.len() != 4 || kernel.len() != 2 {
        return Ok(vec![None]);
    }
    let channels_last = nhwc(node);
    let (c, h, wd) = if channels_last {
        (&x.dims[3], &x.dims[1], &x.dims[2])
    } else {
        (&x.dims[1], &x.dims[2], &x.dims[3])
    };
    let out_spatial = spatial_out(node, [h, wd], [&kernel[0], &kernel[1]])?;
    let dims = if channels_last {
        vec![x.dims[0].clone(), out_spatial[0].clone(), out_spatial[1].clone(), c.clone()]
    } else {
        vec![x.dims[0].clone(), c.clone(), out_spatial[0].clone(), out_spatial[1].clone()]
    };
    Ok(vec![Some(TensorInfo::new(x.elem_type, dims))])
}

fn spatial_out(node: &NodeDef, input: [&Dim; 2], kernel: [&Dim; 2]) -> Result<[Dim; 2]> {
    let strides = match node.attr_ints("strides") {
        Some([a, b]) => [*a as usize, *b as usize],
        _ => [1, 1],
    };
    let dilations = match node.attr_ints("dilations") {
        Some([a, b]) => [*a as usize, *b as usize],
        _ => [1, 1],
    };
    let pads = match node.attr_ints("pads") {
        Some([a, b, c, d]) => [*a as usize, *b as usize, *c as usize, *d as usize],
        _ => [0; 4],
    };
    let mut out = [anon(), anon()];
    for i in 0..2 {
        if let (Dim::Known(sz), Dim::Known(k)) = (input[i], kernel[i]) {
            let eff = (k - 1) * dilations[i] + 1;
            let padded = sz + pads[i] + pads[i + 2];
            if padded < eff {
                return Err(Error::Shape("kernel larger than padded input".into()));
            }
            out[i] = Dim::Known((padded - eff) / strides[i] + 1);
        }
    }
    Ok(out)
}
