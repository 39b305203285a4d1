//! Lowering between the QONNX custom quantization ops and the
//! backward-compatible QCDQ form (QuantizeLinear -> Clip -> DequantizeLinear),
//! plus the inverse raising transformation.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::ir::{
    AttrValue, Model, NodeDef, TensorData, TensorValue, QONNX_DOMAIN,
};
use crate::kernels::clamp_bounds;
use crate::passes::PassReport;

#[derive(Debug, Clone, Copy)]
pub struct LoweringConfig {
    pub target_opset: i64,
    /// Lower BipolarQuant through a Sign/Clip composition. Off by default:
    /// QCDQ cannot natively express sign(0) = +1.
    pub allow_bipolar: bool,
}

impl Default for LoweringConfig {
    fn default() -> Self {
        LoweringConfig { target_opset: 13, allow_bipolar: false }
    }
}

fn scalar_of(t: &TensorValue) -> Option<f64> {
    (t.len() == 1).then(|| t.to_f64_vec()[0])
}

struct Lowerer<'m> {
    src: &'m Model,
    initializers: std::collections::BTreeMap<String, TensorValue>,
    nodes: Vec<NodeDef>,
    rewrites: usize,
}

impl Lowerer<'_> {
    fn constant(&self, name: &str) -> Result<&TensorValue> {
        self.src
            .graph
            .initializers
            .get(name)
            .ok_or_else(|| Error::DynamicParam(name.to_string()))
    }

    fn add_init(&mut self, name: String, t: TensorValue) -> String {
        self.initializers.insert(name.clone(), t);
        name
    }

    fn lower_quant(&mut self, node: &NodeDef) -> Result<()> {
        let mode = node.attr_str("rounding_mode").unwrap_or("ROUND");
        if mode != "ROUND" {
            return Err(Error::Unsupported(format!(
                "QCDQ lowering supports rounding_mode ROUND only, got {mode}"
            )));
        }
        let x = node.inputs[0].clone();
        let s = self.constant(&node.inputs[1])?.clone();
        let z = self.constant(&node.inputs[2])?.clone();
        let b = self.constant(&node.inputs[3])?.clone();
        let out = node.outputs[0].clone();

        let bw = scalar_of(&b).ok_or_else(|| {
            Error::PerChannelBitWidth(format!("bit_width of '{}'", node.name))
        })?;
        if bw.fract() != 0.0 || !(2.0..=8.0).contains(&bw) {
            return Err(Error::BitWidth(format!(
                "QCDQ lowering needs an integer bit width in [2, 8], got {bw}"
            )));
        }
        let zp = scalar_of(&z).ok_or_else(|| {
            Error::PerChannelBitWidth(format!("zero_point of '{}'", node.name))
        })?;
        if zp.fract() != 0.0 {
            return Err(Error::ZeroPoint(format!("{zp}")));
        }

        let signed = node.attr_i64("signed").unwrap_or(1) != 0;
        let narrow = node.attr_i64("narrow").unwrap_or(0) != 0;
        let in_range = if signed {
            (f64::from(i8::MIN)..=f64::from(i8::MAX)).contains(&zp)
        } else {
            (0.0..=f64::from(u8::MAX)).contains(&zp)
        };
        if !in_range {
            return Err(Error::ZeroPoint(format!(
                "{zp} does not fit the lowered {} storage type",
                if signed { "int8" } else { "uint8" }
            )));
        }

        // per-axis scale needs the QuantizeLinear axis attribute
        let axis: Option<i64> = if s.len() > 1 {
            let non_unit: Vec<usize> =
                (0..s.shape.len()).filter(|&i| s.shape[i] != 1).collect();
            let x_rank = self
                .tensor_rank(&x)
                .ok_or_else(|| Error::Shape(format!("unknown rank for '{x}'")))?;
            match non_unit.as_slice() {
                [i] => Some((x_rank - s.shape.len() + i) as i64),
                _ => {
                    return Err(Error::Unsupported(
                        "scale must be a scalar or vary along a single axis".into(),
                    ))
                }
            }
        } else {
            None
        };
        let s_flat = if s.len() > 1 {
            let vals = match &s.data {
                TensorData::F32(v) => v.clone(),
                _ => return Err(Error::Shape("scale must be float".into())),
            };
            self.add_init(format!("{out}_scale"), TensorValue::f32(vec![s.len()], vals))
        } else {
            self.add_init(format!("{out}_scale"), TensorValue::scalar_f32(s.to_f64_vec()[0] as f32))
        };
        let zp_count = if axis.is_some() { s.len() } else { 1 };
        let zp_shape = if axis.is_some() { vec![zp_count] } else { vec![] };
        let zp_init = if signed {
            TensorValue::new(zp_shape, TensorData::I8(vec![zp as i8; zp_count]))?
        } else {
            TensorValue::new(zp_shape, TensorData::U8(vec![zp as u8; zp_count]))?
        };
        let zp_name = self.add_init(format!("{out}_zero_point"), zp_init);

        let mut ql = NodeDef::new(
            "QuantizeLinear",
            vec![x.as_str(), s_flat.as_str(), zp_name.as_str()],
            vec![],
        )
        .with_name(&format!("{}_quantize", display_name(node)));
        let mut dq_in = format!("{out}_q");
        ql.outputs = vec![dq_in.clone()];
        if let Some(a) = axis {
            ql.attributes.insert("axis".into(), AttrValue::Int(a));
        }
        self.nodes.push(ql);

        // Clip is only needed when the target range is narrower than the
        // native int8/uint8 range
        if !(bw == 8.0 && !narrow) {
            let bounds = clamp_bounds(bw, signed, narrow)?;
            let (lo, hi) = if signed {
                (
                    TensorValue::new(vec![], TensorData::I8(vec![bounds.y_min as i8]))?,
                    TensorValue::new(vec![], TensorData::I8(vec![bounds.y_max as i8]))?,
                )
            } else {
                (
                    TensorValue::new(vec![], TensorData::U8(vec![bounds.y_min as u8]))?,
                    TensorValue::new(vec![], TensorData::U8(vec![bounds.y_max as u8]))?,
                )
            };
            let lo_name = self.add_init(format!("{out}_clip_min"), lo);
            let hi_name = self.add_init(format!("{out}_clip_max"), hi);
            let clipped = format!("{out}_clip");
            self.nodes.push(
                NodeDef::new(
                    "Clip",
                    vec![dq_in.as_str(), lo_name.as_str(), hi_name.as_str()],
                    vec![clipped.as_str()],
                )
                .with_name(&format!("{}_clip", display_name(node))),
            );
            dq_in = clipped;
        }

        let mut dq = NodeDef::new(
            "DequantizeLinear",
            vec![dq_in.as_str(), s_flat.as_str(), zp_name.as_str()],
            vec![out.as_str()],
        )
        .with_name(&format!("{}_dequantize", display_name(node)));
        if let Some(a) = axis {
            dq.attributes.insert("axis".into(), AttrValue::Int(a));
        }
        self.nodes.push(dq);
        self.rewrites += 1;
        Ok(())
    }

    /// BipolarQuant(x, s) = s * sign(x) with sign(0) = +1. Standard-op
    /// image: Sign gives {-1, 0, +1}; 2*sign + 1 gives {-1, 1, 3}; Clip to
    /// [-1, 1] maps the zero case to +1; finally multiply by the scale.
    fn lower_bipolar(&mut self, node: &NodeDef) -> Result<()> {
        let x = node.inputs[0].clone();
        let s = node.inputs[1].clone();
        let out = node.outputs[0].clone();
        let base = display_name(node);

        let two = self.add_init(format!("{out}_two"), TensorValue::scalar_f32(2.0));
        let one = self.add_init(format!("{out}_one"), TensorValue::scalar_f32(1.0));
        let neg_one = self.add_init(format!("{out}_neg_one"), TensorValue::scalar_f32(-1.0));

        let sg = format!("{out}_sign");
        let doubled = format!("{out}_x2");
        let shifted = format!("{out}_plus1");
        let bip = format!("{out}_bipolar");
        self.nodes.push(
            NodeDef::new("Sign", vec![x.as_str()], vec![sg.as_str()])
                .with_name(&format!("{base}_sign")),
        );
        self.nodes.push(
            NodeDef::new("Mul", vec![sg.as_str(), two.as_str()], vec![doubled.as_str()])
                .with_name(&format!("{base}_scale2")),
        );
        self.nodes.push(
            NodeDef::new("Add", vec![doubled.as_str(), one.as_str()], vec![shifted.as_str()])
                .with_name(&format!("{base}_shift")),
        );
        self.nodes.push(
            NodeDef::new(
                "Clip",
                vec![shifted.as_str(), neg_one.as_str(), one.as_str()],
                vec![bip.as_str()],
            )
            .with_name(&format!("{base}_clip")),
        );
        self.nodes.push(
            NodeDef::new("Mul", vec![bip.as_str(), s.as_str()], vec![out.as_str()])
                .with_name(&format!("{base}_rescale")),
        );
        self.rewrites += 1;
        Ok(())
    }

    fn tensor_rank(&self, name: &str) -> Option<usize> {
        crate::passes::inferred_shapes(self.src)
            .ok()
            .and_then(|info| info.get(name).map(|ti| ti.dims.len()))
    }
}

fn display_name(node: &NodeDef) -> String {
    if node.name.is_empty() {
        node.outputs.first().cloned().unwrap_or_default()
    } else {
        node.name.clone()
    }
}

pub fn lower_to_qcdq(m: &Model, cfg: &LoweringConfig) -> Result<(Model, PassReport)> {
    if cfg.target_opset < 10 {
        return Err(Error::Arg(format!(
            "target opset {} predates QuantizeLinear/DequantizeLinear",
            cfg.target_opset
        )));
    }
    let mut report = PassReport::new("lower-to-qcdq", m.graph.nodes.len());

    let mut lw = Lowerer {
        src: m,
        initializers: m.graph.initializers.clone(),
        nodes: Vec::new(),
        rewrites: 0,
    };
    for node in &m.graph.nodes {
        if node.domain != QONNX_DOMAIN {
            lw.nodes.push(node.clone());
            continue;
        }
        match node.op_type.as_str() {
            "Quant" => lw.lower_quant(node)?,
            "BipolarQuant" if cfg.allow_bipolar => lw.lower_bipolar(node)?,
            "BipolarQuant" => {
                return Err(Error::Unsupported(
                    "BipolarQuant lowering disabled (enable allow_bipolar)".into(),
                ))
            }
            "Trunc" => {
                return Err(Error::Unsupported("Trunc has no QCDQ image".into()))
            }
            other => {
                return Err(Error::UnsupportedOp(node.domain.clone(), other.to_string()))
            }
        }
    }

    let mut out = m.clone();
    out.graph.nodes = lw.nodes;
    out.graph.initializers = lw.initializers;
    out.opset_imports.retain(|(d, _)| d != QONNX_DOMAIN);
    for (domain, version) in out.opset_imports.iter_mut() {
        if domain.is_empty() || domain == "ai.onnx" {
            *version = (*version).max(cfg.target_opset);
        }
    }
    report.rewrites_applied = lw.rewrites;
    report.nodes_after = out.graph.nodes.len();
    log::debug!(
        "lower-to-qcdq: {} quantizer(s) lowered, {} -> {} nodes",
        report.rewrites_applied,
        report.nodes_before,
        report.nodes_after
    );
    Ok((out, report))
}

/// Raise QuantizeLinear[->Clip]->DequantizeLinear chains back to Quant.
/// Chains whose parameters don't match on both ends are skipped and noted.
pub fn raise_from_qcdq(m: &Model) -> Result<(Model, PassReport)> {
    let mut report = PassReport::new("raise-from-qcdq", m.graph.nodes.len());
    let g = &m.graph;

    let mut consumers: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, n) in g.nodes.iter().enumerate() {
        for inp in &n.inputs {
            consumers.entry(inp.as_str()).or_default().push(i);
        }
    }
    let graph_outputs: std::collections::HashSet<&str> =
        g.outputs.iter().map(|vi| vi.name.as_str()).collect();
    let sole_consumer = |name: &str| -> Option<usize> {
        if graph_outputs.contains(name) {
            return None;
        }
        match consumers.get(name).map(Vec::as_slice) {
            Some([i]) => Some(*i),
            _ => None,
        }
    };
    let is_std = |n: &NodeDef| n.domain.is_empty() || n.domain == "ai.onnx";

    struct Plan {
        ql: usize,
        mid: Option<usize>,
        dq: usize,
        quant: NodeDef,
        inits: Vec<(String, TensorValue)>,
    }
    let mut plans: Vec<Plan> = Vec::new();
    let mut claimed = vec![false; g.nodes.len()];

    for (qi, ql) in g.nodes.iter().enumerate() {
        if !(is_std(ql) && ql.op_type == "QuantizeLinear") || claimed[qi] {
            continue;
        }
        let mut skip = |why: String| {
            report
                .notes
                .push(format!("QuantizeLinear '{}' left as-is: {why}", display_name(ql)));
        };
        let Some(next) = sole_consumer(&ql.outputs[0]) else {
            skip("output is shared or a graph output".into());
            continue;
        };
        let (mid, di) = if is_std(&g.nodes[next])
            && g.nodes[next].op_type == "Clip"
            && g.nodes[next].inputs[0] == ql.outputs[0]
        {
            let Some(dqi) = sole_consumer(&g.nodes[next].outputs[0]) else {
                skip("Clip output is shared or a graph output".into());
                continue;
            };
            (Some(next), dqi)
        } else {
            (None, next)
        };
        let dq = &g.nodes[di];
        if !(is_std(dq) && dq.op_type == "DequantizeLinear") || claimed[di] {
            skip("no DequantizeLinear tail".into());
            continue;
        }
        if dq.inputs[0] != g.nodes[mid.unwrap_or(qi)].outputs[0] {
            skip("chain is not linear".into());
            continue;
        }

        // scale and zero point must match on both ends, bit-exactly
        let init = |name: &str| g.initializers.get(name);
        let (Some(qs), Some(ds)) = (init(&ql.inputs[1]), init(&dq.inputs[1])) else {
            skip("scale is not a constant".into());
            continue;
        };
        if qs != ds {
            skip("scale differs between quantize and dequantize".into());
            continue;
        }
        let qz = ql.inputs.get(2).filter(|n| !n.is_empty()).map(|n| init(n));
        let dz = dq.inputs.get(2).filter(|n| !n.is_empty()).map(|n| init(n));
        let (zp, signed) = match (qz, dz) {
            (None, None) => (TensorValue::new(vec![], TensorData::U8(vec![0])).unwrap(), false),
            (Some(Some(a)), Some(Some(b))) if a == b => {
                (a.clone(), matches!(a.data, TensorData::I8(_)))
            }
            (Some(Some(a)), None) | (None, Some(Some(a)))
                if a.to_f64_vec().iter().all(|&v| v == 0.0) =>
            {
                (a.clone(), matches!(a.data, TensorData::I8(_)))
            }
            (Some(None), _) | (_, Some(None)) => {
                skip("zero point is not a constant".into());
                continue;
            }
            _ => {
                skip("zero point differs between quantize and dequantize".into());
                continue;
            }
        };
        if zp.len() != 1 {
            skip("per-axis zero point not supported for raising".into());
            continue;
        }

        // recover (bit_width, narrow) from the Clip bounds
        let (bw, narrow) = if let Some(ci) = mid {
            let clip = &g.nodes[ci];
            let bound = |slot: usize| -> Option<i64> {
                clip.inputs
                    .get(slot)
                    .filter(|n| !n.is_empty())
                    .and_then(|n| init(n))
                    .and_then(|t| t.to_i64_vec().ok())
                    .filter(|v| v.len() == 1)
                    .map(|v| v[0])
            };
            let (Some(lo), Some(hi)) = (bound(1), bound(2)) else {
                skip("Clip bounds are not scalar constants".into());
                continue;
            };
            let mut found = None;
            'search: for b in 2..=8 {
                for narrow in [false, true] {
                    let c = clamp_bounds(f64::from(b), signed, narrow)?;
                    if c.y_min as i64 == lo && c.y_max as i64 == hi {
                        found = Some((f64::from(b), narrow));
                        break 'search;
                    }
                }
            }
            let Some(f) = found else {
                skip(format!("Clip bounds [{lo}, {hi}] match no bit width"));
                continue;
            };
            f
        } else {
            (8.0, false)
        };

        let out = dq.outputs[0].clone();
        let x = ql.inputs[0].clone();

        // Quant wants float scale/zero_point/bit_width inputs broadcastable
        // against x; a per-axis scale is reshaped to a broadcast form
        let mut inits: Vec<(String, TensorValue)> = Vec::new();
        let scale_name = if qs.len() > 1 {
            let axis = ql.attr_i64("axis").unwrap_or(1);
            let Some(rank) = inferred_rank(m, &x) else {
                skip("per-axis scale with unknown input rank".into());
                continue;
            };
            let Ok(axis) = usize::try_from(if axis < 0 { axis + rank as i64 } else { axis })
            else {
                skip("invalid axis".into());
                continue;
            };
            if axis >= rank {
                skip("invalid axis".into());
                continue;
            }
            let mut shape = vec![1usize; rank];
            shape[axis] = qs.len();
            let vals = match &qs.data {
                TensorData::F32(v) => v.clone(),
                _ => {
                    skip("scale is not float".into());
                    continue;
                }
            };
            let name = format!("{out}_scale");
            inits.push((name.clone(), TensorValue { shape, data: TensorData::F32(vals) }));
            name
        } else {
            ql.inputs[1].clone()
        };
        let zp_name = format!("{out}_zp_f32");
        inits.push((zp_name.clone(), TensorValue::scalar_f32(zp.to_f64_vec()[0] as f32)));
        let bw_name = format!("{out}_bit_width");
        inits.push((bw_name.clone(), TensorValue::scalar_f32(bw as f32)));

        let quant = NodeDef::new(
            "Quant",
            vec![x.as_str(), scale_name.as_str(), zp_name.as_str(), bw_name.as_str()],
            vec![out.as_str()],
        )
        .with_domain(QONNX_DOMAIN)
        .with_name(&format!("{}_quant", display_name(ql)))
        .with_attr("signed", AttrValue::Int(i64::from(signed)))
        .with_attr("narrow", AttrValue::Int(i64::from(narrow)))
        .with_attr("rounding_mode", AttrValue::Str("ROUND".into()));

        claimed[qi] = true;
        claimed[di] = true;
        if let Some(ci) = mid {
            claimed[ci] = true;
        }
        plans.push(Plan { ql: qi, mid, dq: di, quant, inits });
    }

    let mut out = m.clone();
    let mut remove: Vec<usize> = Vec::new();
    for plan in plans {
        out.graph.nodes[plan.ql] = plan.quant;
        remove.push(plan.dq);
        if let Some(ci) = plan.mid {
            remove.push(ci);
        }
        for (name, t) in plan.inits {
            out.graph.initializers.insert(name, t);
        }
        report.rewrites_applied += 1;
    }
    remove.sort_unstable_by(|a, b| b.cmp(a));
    for idx in remove {
        out.graph.nodes.remove(idx);
    }
    if report.rewrites_applied > 0
        && !out.opset_imports.iter().any(|(d, _)| d == QONNX_DOMAIN)
    {
        out.opset_imports.push((QONNX_DOMAIN.to_string(), 1));
    }
    report.nodes_after = out.graph.nodes.len();
    Ok((out, report))
}

fn inferred_rank(m: &Model, name: &str) -> Option<usize> {
    crate::passes::inferred_shapes(m)
        .ok()
        .and_then(|info| info.get(name).map(|ti| ti.dims.len()))
}
