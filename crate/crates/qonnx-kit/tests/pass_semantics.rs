//! Semantic-preservation and idempotence checks for the graph passes,
//! driven by seeded random inputs.

mod common;

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qonnx_kit::executor::execute;
use qonnx_kit::ir::{Dim, Model, TensorValue};
use qonnx_kit::passes::{cleanup, fold_constants, infer_shapes, to_channels_last};

fn random_inputs(m: &Model, rng: &mut ChaCha8Rng) -> HashMap<String, TensorValue> {
    let mut out = HashMap::new();
    for vi in &m.graph.inputs {
        if m.graph.initializers.contains_key(&vi.name) {
            continue;
        }
        let shape: Vec<usize> = vi
            .shape
            .as_ref()
            .unwrap()
            .iter()
            .map(|d| match d {
                Dim::Known(v) => *v,
                Dim::Symbolic(_) => 1,
            })
            .collect();
        let count = shape.iter().product();
        let data: Vec<f32> = (0..count).map(|_| rng.gen_range(-3.0f32..3.0)).collect();
        out.insert(vi.name.clone(), TensorValue::f32(shape, data));
    }
    out
}

fn assert_equivalent(a: &Model, b: &Model, runs: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..runs {
        let inputs = random_inputs(a, &mut rng);
        let ya = execute(a, &inputs).unwrap();
        let yb = execute(b, &inputs).unwrap();
        assert_eq!(ya, yb);
    }
}

#[test]
fn fold_constants_preserves_semantics() {
    let m = common::quant_matmul_quant(3, 4, vec![0.2; 12], 6.0, 4.0, 8.0);
    let (folded, report) = fold_constants(&m).unwrap();
    assert!(report.rewrites_applied >= 1); // the weight quantizer folds
    assert_equivalent(&m, &folded, 20, 11);
}

#[test]
fn fold_constants_leaves_activation_quantizers() {
    let m = common::quant_matmul_quant(3, 4, vec![0.2; 12], 6.0, 4.0, 8.0);
    let (folded, _) = fold_constants(&m).unwrap();
    let quants: Vec<&str> = folded
        .graph
        .nodes
        .iter()
        .filter(|n| n.op_type == "Quant")
        .map(|n| n.name.as_str())
        .collect();
    assert_eq!(quants, vec!["qa", "qo"]); // weight quantizer folded, rest kept
}

#[test]
fn cleanup_preserves_semantics_and_collapses_reshape_chain() {
    let m = common::reshape_chain_mlp();
    let (clean, _) = cleanup(&m).unwrap();
    let reshapes = clean.graph.nodes.iter().filter(|n| n.op_type == "Reshape").count();
    assert_eq!(reshapes, 1);
    assert!(clean
        .graph
        .nodes
        .iter()
        .all(|n| !matches!(n.op_type.as_str(), "Shape" | "Gather" | "Unsqueeze" | "Concat")));
    assert_equivalent(&m, &clean, 20, 12);
}

#[test]
fn cleanup_never_grows_the_graph() {
    for m in [
        common::reshape_chain_mlp(),
        common::quant_matmul_quant(3, 4, vec![0.2; 12], 6.0, 4.0, 8.0),
        common::conv_chain(3, 4, 2),
        common::tfc(2.0),
    ] {
        let (clean, report) = cleanup(&m).unwrap();
        assert!(clean.graph.nodes.len() <= m.graph.nodes.len());
        assert_eq!(report.nodes_after, clean.graph.nodes.len());
    }
}

#[test]
fn infer_shapes_is_semantics_neutral() {
    let m = common::conv_chain(3, 4, 2);
    let annotated = infer_shapes(&m).unwrap();
    assert!(annotated.graph.value_info.len() >= 2);
    assert_equivalent(&m, &annotated, 5, 13);
}

#[test]
fn channels_last_preserves_io_and_semantics() {
    let m = common::conv_chain(3, 4, 2);
    let (converted, _) = to_channels_last(&m).unwrap();
    // declared I/O stays channels-first by default
    assert_eq!(converted.graph.inputs, m.graph.inputs);
    assert_eq!(converted.graph.outputs, m.graph.outputs);
    assert_equivalent(&m, &converted, 20, 14);
}

#[test]
fn channels_last_then_cleanup_composes() {
    let m = common::conv_chain(2, 3, 2);
    let (converted, _) = to_channels_last(&m).unwrap();
    let (clean, _) = cleanup(&converted).unwrap();
    assert_equivalent(&m, &clean, 10, 15);
}

#[test]
fn stats_are_invariant_under_passes() {
    let m = common::tfc(2.0);
    let before = qonnx_kit::metrics::model_stats(&m).unwrap();
    let (clean, _) = cleanup(&m).unwrap();
    let after = qonnx_kit::metrics::model_stats(&clean).unwrap();
    assert_eq!(before.total_macs, after.total_macs);
    assert_eq!(before.total_weights, after.total_weights);
    // conv model through channels-last
    let cm = common::conv_chain(3, 4, 2);
    let sb = qonnx_kit::metrics::model_stats(&cm).unwrap();
    let (conv, _) = to_channels_last(&cm).unwrap();
    let sa = qonnx_kit::metrics::model_stats(&conv).unwrap();
    assert_eq!(sb.total_macs, sa.total_macs);
    assert_eq!(sb.total_weights, sa.total_weights);
    assert_eq!(sb.total_bops, sa.total_bops);
}
