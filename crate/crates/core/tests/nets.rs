mod common;

use capteam::envs::{EnvKind, NUM_ACTIONS};
use capteam::nets::{CriticNet, GraphBatch, PolicyNet, PolicyVariant};
use capteam::Error;
use common::{permuted_batch, random_batch};
use rand::seq::SliceRandom;
use rand::Rng;
use tensorcore::{finite_diff_check, ParamSet, RngStream, Tape, Tensor};

/// Random linear readout of the logits. Its value stays near zero, which keeps
/// central-difference roundoff well below the smallest gradients compared.
fn readout_loss<'t>(
    tape: &'t Tape<f64>,
    logits: tensorcore::Var<'t, f64>,
    weights: &[f64],
) -> tensorcore::Result<tensorcore::Var<'t, f64>> {
    let shape = logits.shape();
    let w = tape.constant(Tensor::matrix(shape[0], shape[1], weights.to_vec())?);
    Ok(logits.mul(w)?.sum())
}

#[test]
fn every_variant_passes_gradient_check_on_three_nodes() {
    let mut rng = RngStream::from_seed(7);
    for kind in [EnvKind::Hmt, EnvKind::Hsn] {
        for variant in PolicyVariant::ALL {
            let (_, batch) = random_batch(kind, 3, &mut rng);
            let (net, params) = PolicyNet::init::<f64>(variant, kind, &mut rng);
            let weights: Vec<f64> = (0..3 * NUM_ACTIONS).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let report = finite_diff_check(&params, 1e-5, |tape, p| {
                readout_loss(tape, net.logits(p, &batch)?, &weights)
            })
            .unwrap();
            assert!(report.max_relative_error < 1e-4, "{kind} {variant}: {report:?}");
            assert!(report.kinks * 1000 < report.checked, "{kind} {variant}: {report:?}");
        }
    }
}

#[test]
fn critic_passes_gradient_check() {
    let mut rng = RngStream::from_seed(8);
    for variant in [PolicyVariant::IdMlp, PolicyVariant::CaCcGnn] {
        let parts: Vec<GraphBatch> = (0..4).map(|_| random_batch(EnvKind::Hmt, 3, &mut rng).1).collect();
        let batch = GraphBatch::stack(&parts).unwrap();
        let (critic, params) = CriticNet::init::<f64>(variant, EnvKind::Hmt, 3, &mut rng);
        let report = finite_diff_check(&params, 1e-5, |_, p| {
            let v = critic.values(p, &batch)?;
            Ok(v.mul(v)?.mean())
        })
        .unwrap();
        assert!(report.max_relative_error < 1e-4, "{variant}: {report:?}");
    }
}

fn logits(net: &PolicyNet, params: &ParamSet<f64>, batch: &GraphBatch) -> Tensor<f64> {
    let tape = Tape::new();
    let p = params.bind_frozen(&tape);
    let out = net.logits(&p, batch).unwrap().value().clone();
    out
}

#[test]
fn gnn_variants_are_permutation_equivariant() {
    let mut rng = RngStream::from_seed(9);
    for variant in PolicyVariant::ALL.into_iter().filter(|v| v.is_gnn()) {
        let (net, params) = PolicyNet::init::<f64>(variant, EnvKind::Hsn, &mut rng);
        for _ in 0..20 {
            let (team, batch) = random_batch(EnvKind::Hsn, 5, &mut rng);
            let mut perm: Vec<usize> = (0..5).collect();
            perm.shuffle(&mut rng);
            let a = logits(&net, &params, &batch);
            let b = logits(&net, &params, &permuted_batch(&team, &batch, &perm));
            for (new, &old) in perm.iter().enumerate() {
                for (x, y) in a.row(old).iter().zip(b.row(new)) {
                    assert!((x - y).abs() < 1e-6);
                }
            }
        }
    }
}

#[test]
fn identical_inputs_give_identical_rows() {
    let mut rng = RngStream::from_seed(10);
    for variant in [PolicyVariant::CaMlp, PolicyVariant::CaGnn, PolicyVariant::CaCcGnn] {
        let (net, params) = PolicyNet::init::<f64>(variant, EnvKind::Hmt, &mut rng);
        let (team, batch) = random_batch(EnvKind::Hmt, 3, &mut rng);
        let perm = [0, 0, 2];
        let twin = permuted_batch(&team, &batch, &perm);
        let l = logits(&net, &params, &twin);
        assert_eq!(l.row(0), l.row(1));
    }
}

#[test]
fn shape_trace_of_gnn_variants() {
    let mut rng = RngStream::from_seed(11);
    let (_, batch) = random_batch(EnvKind::Hmt, 4, &mut rng);
    let (ca, ca_params) = PolicyNet::init::<f32>(PolicyVariant::CaGnn, EnvKind::Hmt, &mut rng);
    let (cc, cc_params) = PolicyNet::init::<f32>(PolicyVariant::CaCcGnn, EnvKind::Hmt, &mut rng);
    let ca = ca.trace(&ca_params, &batch).unwrap();
    let cc = cc.trace(&cc_params, &batch).unwrap();
    assert_eq!(ca.get("input"), Some(&[4, 13][..]));
    assert_eq!(cc.get("input"), Some(&[4, 15][..]));
    for t in [&ca, &cc] {
        assert_eq!(t.get("encoder"), Some(&[4, 64][..]));
        assert_eq!(t.get("gcn"), Some(&[4, 64][..]));
        assert_eq!(t.get("logits"), Some(&[4, 5][..]));
    }
    assert_eq!(cc.get("action_input"), Some(&[4, 128][..]));
    assert_eq!(ca.get("action_input"), Some(&[4, 130][..]));
}

#[test]
fn mlp_has_four_weight_layers_and_names_are_namespaced() {
    let (_, params) = PolicyNet::init::<f32>(PolicyVariant::IdMlp, EnvKind::Hsn, &mut RngStream::from_seed(0));
    let shapes: Vec<Vec<usize>> = params
        .iter()
        .filter(|(n, _)| n.ends_with("weight"))
        .map(|(_, t)| t.shape().to_vec())
        .collect();
    assert_eq!(shapes, vec![vec![22, 64], vec![64, 64], vec![64, 64], vec![64, 5]]);
    assert_eq!(params.names()[0], "id_mlp/mlp/0/weight");
    let (_, params) = CriticNet::init::<f32>(PolicyVariant::CaGnn, EnvKind::Hsn, 4, &mut RngStream::from_seed(0));
    assert_eq!(params.names()[0], "ca_gnn/critic/0/weight");
    assert_eq!(
        params.get(params.find("ca_gnn/critic/0/weight").unwrap()).shape(),
        &[12, 64]
    );
}

#[test]
fn same_parameters_serve_any_team_size() {
    let mut rng = RngStream::from_seed(12);
    for variant in PolicyVariant::ALL {
        let (net, params) = PolicyNet::init::<f64>(variant, EnvKind::Hsn, &mut rng);
        for n in [1, 3, 5, 15] {
            let (_, batch) = random_batch(EnvKind::Hsn, n, &mut rng);
            assert_eq!(logits(&net, &params, &batch).shape(), &[n, 5]);
        }
    }
}

#[test]
fn critic_rejects_other_team_sizes_and_zero_head_gives_zero() {
    let mut rng = RngStream::from_seed(13);
    let (critic, mut params) = CriticNet::init::<f64>(PolicyVariant::CaMlp, EnvKind::Hsn, 4, &mut rng);
    let (_, three) = random_batch(EnvKind::Hsn, 3, &mut rng);
    let tape = Tape::new();
    let p = params.bind_frozen(&tape);
    assert!(matches!(
        critic.values(&p, &three),
        Err(Error::TeamSize { expected: 4, found: 3 })
    ));

    let w = params.find("ca_mlp/critic/2/weight").unwrap();
    *params.get_mut(w) = Tensor::zeros(&[64, 1]);
    let (_, four) = random_batch(EnvKind::Hsn, 4, &mut rng);
    let tape = Tape::new();
    let p = params.bind_frozen(&tape);
    assert_eq!(critic.values(&p, &four).unwrap().value().data(), &[0.0]);
}

#[test]
fn id_variant_without_ids_is_an_error() {
    let mut rng = RngStream::from_seed(14);
    let (net, params) = PolicyNet::init::<f64>(PolicyVariant::IdGnn, EnvKind::Hsn, &mut rng);
    let batch = GraphBatch::new(&[vec![0.0, 0.0]], &[vec![0.3]], None).unwrap();
    let tape = Tape::new();
    let p = params.bind_frozen(&tape);
    assert!(matches!(net.logits(&p, &batch), Err(Error::MissingConditioning { .. })));
    let wrong = GraphBatch::new(&[vec![0.0; 3]], &[vec![0.3]], Some(vec![0])).unwrap();
    assert!(matches!(net.logits(&p, &wrong), Err(Error::Layout { .. })));
}

#[test]
fn forward_is_bitwise_reproducible() {
    let run = || {
        let mut rng = RngStream::from_seed(15);
        let (_, batch) = random_batch(EnvKind::Hmt, 4, &mut rng);
        let (net, params) = PolicyNet::init::<f32>(PolicyVariant::CaCcGnn, EnvKind::Hmt, &mut rng);
        let tape = Tape::new();
        let p = params.bind(&tape);
        let out = net.logits(&p, &batch).unwrap();
        tape.backward(out.sum()).unwrap();
        let bits: Vec<u32> = out
            .value()
            .data()
            .iter()
            .chain(
                p.grads()
                    .iter()
                    .flat_map(|g| g.data().to_vec())
                    .collect::<Vec<_>>()
                    .iter(),
            )
            .map(|v| v.to_bits())
            .collect();
        bits
    };
    assert_eq!(run(), run());
}
