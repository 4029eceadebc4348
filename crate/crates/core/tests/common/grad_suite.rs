//! Finite-difference checks shared by the gradient tests and the acceptance run.

use super::{check_gradients, check_gradients_eps, project, random, rng};
use perfnet_core::nn::{build_backbone, feature_gate, BackboneConfig, BlockStyle, Bound, Mode, ModelParams, Network, NormKind};
use perfnet_core::tensor::{NormMode, Padding, PoolSpec};
use perfnet_core::{Tape, Tensor, Var};

pub const OP_TOL: f64 = 1e-5;
pub const MODEL_TOL: f64 = 1e-3;
// A whole network has thousands of relu and max-pool kinks; a wide step
// straddles some of them.
const MODEL_EPS: f64 = 1e-6;

type Loss<'a> = Box<dyn Fn(&mut Tape<f64>, &[Var]) -> Var + 'a>;

fn case<'a>(name: &str, f: Loss<'a>, inputs: Vec<Tensor<f64>>) -> (String, f64) {
    (name.to_string(), check_gradients(&*f, &inputs, None))
}

/// Worst gradient error of every differentiable op.
pub fn op_errors() -> Vec<(String, f64)> {
    let mut r = rng(1);
    let a = random(&[2, 3, 4], &mut r);
    let b = random(&[2, 3, 4], &mut r);
    let row = random(&[4], &mut r);
    let mut out = vec![
        case("add", Box::new(|t, v| { let y = t.add(v[0], v[1]).unwrap(); project(t, y, 9) }), vec![a.clone(), b.clone()]),
        case("add broadcast", Box::new(|t, v| { let y = t.add(v[0], v[1]).unwrap(); project(t, y, 9) }), vec![a.clone(), row.clone()]),
        case("sub", Box::new(|t, v| { let y = t.sub(v[1], v[0]).unwrap(); project(t, y, 9) }), vec![a.clone(), row]),
        case("mul", Box::new(|t, v| { let y = t.mul(v[0], v[1]).unwrap(); project(t, y, 9) }), vec![a.clone(), b]),
        case("scale", Box::new(|t, v| { let y = t.scale(v[0], -2.5); project(t, y, 9) }), vec![a.clone()]),
        case("reshape", Box::new(|t, v| { let y = t.reshape(v[0], &[6, 4]).unwrap(); project(t, y, 9) }), vec![a.clone()]),
        case("relu", Box::new(|t, v| { let y = t.relu(v[0]); project(t, y, 9) }), vec![a.clone()]),
        case("sigmoid", Box::new(|t, v| { let y = t.sigmoid(v[0]); project(t, y, 9) }), vec![a.clone()]),
        case("sum_all", Box::new(|t, v| { let y = t.mul(v[0], v[0]).unwrap(); t.sum_all(y) }), vec![a.clone()]),
        case("mean_all", Box::new(|t, v| { let y = t.mul(v[0], v[0]).unwrap(); t.mean_all(y) }), vec![a]),
        case(
            "matmul",
            Box::new(|t, v| { let y = t.matmul(v[0], v[1]).unwrap(); project(t, y, 3) }),
            vec![random(&[3, 5], &mut r), random(&[5, 4], &mut r)],
        ),
    ];

    let x = random(&[2, 3, 5, 6, 2], &mut r);
    let w = random(&[3, 3, 3, 2, 3], &mut r);
    for (stride, padding) in [([1, 1, 1], Padding::Same), ([1, 2, 2], Padding::Same), ([1, 1, 2], Padding::Valid)] {
        out.push(case(
            &format!("conv3d {stride:?} {padding:?}"),
            Box::new(move |t, v| { let y = t.conv3d(v[0], v[1], stride, padding).unwrap(); project(t, y, 4) }),
            vec![x.clone(), w.clone()],
        ));
    }

    let x = random(&[2, 2, 5, 5, 3], &mut r);
    out.push(case(
        "maxpool",
        Box::new(|t, v| { let y = t.maxpool_spatial(v[0], PoolSpec::spatial(3, 2)).unwrap(); project(t, y, 5) }),
        vec![x.clone()],
    ));
    out.push(case("global_avg_pool", Box::new(|t, v| { let y = t.global_avg_pool(v[0]).unwrap(); project(t, y, 5) }), vec![x]));

    let norm_inputs = vec![random(&[2, 2, 3, 3, 4], &mut r), random(&[4], &mut r), random(&[4], &mut r)];
    out.push(case(
        "batch norm train",
        Box::new(|t, v| { let (y, _) = t.norm(v[0], v[1], v[2], NormMode::BatchTrain).unwrap(); project(t, y, 6) }),
        norm_inputs.clone(),
    ));
    out.push(case(
        "batch norm eval",
        Box::new(|t, v| {
            let (mean, var) = ([0.1, -0.2, 0.0, 0.3], [0.5, 1.5, 1.0, 2.0]);
            let (y, _) = t.norm(v[0], v[1], v[2], NormMode::BatchEval { mean: &mean, var: &var }).unwrap();
            project(t, y, 6)
        }),
        norm_inputs.clone(),
    ));
    out.push(case(
        "group norm",
        Box::new(|t, v| { let (y, _) = t.norm(v[0], v[1], v[2], NormMode::Group { groups: 2 }).unwrap(); project(t, y, 6) }),
        norm_inputs,
    ));

    out.push(case(
        "cross entropy",
        Box::new(|t, v| t.softmax_cross_entropy(v[0], &[4, 0, 2]).unwrap()),
        vec![random(&[3, 5], &mut r).map(|v| 3.0 * v)],
    ));
    out.push(case("mse", Box::new(|t, v| t.mse(v[0], v[1]).unwrap()), vec![random(&[3, 5], &mut r), random(&[3, 5], &mut r)]));
    out.push(case(
        "feature gate",
        Box::new(|t, v| { let y = feature_gate(t, v[0], v[1], v[2]).unwrap(); project(t, y, 8) }),
        vec![random(&[2, 2, 3, 3, 4], &mut r), random(&[4, 4], &mut r), random(&[4], &mut r)],
    ));
    out
}

fn model_error(cfg: &BackboneConfig, mode: Mode) -> f64 {
    let params: ModelParams<f64> = build_backbone(cfg, 11).unwrap();
    let names: Vec<String> = params.trainable().map(|(n, _)| n.to_string()).collect();
    let mut inputs: Vec<Tensor<f64>> = params.trainable().map(|(_, t)| t.clone()).collect();
    inputs.push(random(&[2, 4, 32, 32, cfg.in_channels], &mut rng(12)));
    let x_index = inputs.len() - 1;
    let f = |tape: &mut Tape<f64>, vars: &[Var]| {
        let net = Network::new(cfg, &params).unwrap();
        let bound: Bound = names.iter().cloned().zip(vars[..x_index].iter().copied()).collect();
        let fwd = net.forward(tape, &bound, vars[x_index], mode).unwrap();
        tape.softmax_cross_entropy(fwd.logits, &[1, 2]).unwrap()
    };
    let coords = super::sample_coords(&inputs, 2, 13);
    assert!(coords.len() >= 20);
    check_gradients_eps(&f, &inputs, Some(&coords), MODEL_EPS)
}

/// Worst error over sampled parameters and inputs of whole tiny networks.
pub fn model_errors() -> Vec<(String, f64)> {
    let mut variant = BackboneConfig::tiny(2, 3);
    variant.block_style = BlockStyle::Factorized;
    variant.norm = NormKind::Group(4);
    variant.gating_per_cell = true;
    vec![
        ("tiny, batch norm, train mode".to_string(), model_error(&BackboneConfig::tiny(3, 4), Mode::Train)),
        ("tiny, factorized, group norm, per-cell gates".to_string(), model_error(&variant, Mode::Eval)),
    ]
}
