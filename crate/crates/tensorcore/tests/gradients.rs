use proptest::prelude::*;
use rand::Rng;
use tensorcore::{finite_diff_check, ParamSet, RngStream, Tape, Tensor, Var};

fn random_matrix(rows: usize, cols: usize, rng: &mut RngStream) -> Tensor<f64> {
    let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::matrix(rows, cols, data).unwrap()
}

#[test]
fn two_layer_mlp_matches_finite_differences() {
    let mut rng = RngStream::from_seed(11);
    let mut ps = ParamSet::<f64>::new();
    let (w1, b1) = ps.push_linear("mlp/0", 6, 16, &mut rng);
    let (w2, b2) = ps.push_linear("mlp/1", 16, 1, &mut rng);
    // non-zero biases so every bias gradient path is exercised
    for id in [b1, b2] {
        let n = ps.get(id).len();
        *ps.get_mut(id) = Tensor::vector((0..n).map(|_| rng.gen_range(-0.5..0.5)).collect());
    }
    let x = random_matrix(5, 6, &mut rng);

    let report = finite_diff_check(&ps, 1e-5, |tape, p| {
        let input = tape.constant(x.clone());
        let h = input.matmul(p[w1])?.add(p[b1])?.relu();
        let y = h.matmul(p[w2])?.add(p[b2])?.tanh();
        Ok(y.mul(y)?.mean())
    })
    .unwrap();
    assert!(report.max_relative_error < 1e-4, "{report:?}");
}

#[test]
fn every_primitive_matches_finite_differences() {
    let mut rng = RngStream::from_seed(5);
    let mut ps = ParamSet::<f64>::new();
    let a = ps.push("a", random_matrix(4, 3, &mut rng));
    let b = ps.push("b", random_matrix(4, 3, &mut rng));
    let w = ps.push("w", random_matrix(3, 5, &mut rng));
    let bias = ps.push("bias", Tensor::vector(vec![0.1, -0.2, 0.3, 0.05, -0.4]));
    let pos = ps.push(
        "pos",
        Tensor::matrix(4, 3, (0..12).map(|i| 0.5 + 0.1 * i as f64).collect()).unwrap(),
    );

    let report = finite_diff_check(&ps, 1e-5, |_tape, p| {
        let logits = p[a].matmul(p[w])?.add(p[bias])?;
        let sm = logits.softmax();
        let lsm = logits.log_softmax();
        let ent = sm.mul(lsm)?.sum_rows().mean().neg();

        let both = Var::concat(&[p[a], p[b]], 1)?;
        let stacked = Var::concat(&[p[a], p[b]], 0)?;
        let gathered = stacked.gather_rows(&[0, 5, 5, 7])?;
        let scattered = gathered.scatter_add_rows(&[1, 0, 1, 2], 3)?;

        let clamped = p[b].clamp(-0.3, 0.4);
        let smaller = p[a].minimum(clamped)?;
        let logs = p[pos].log().exp().sub(p[b])?;

        let terms = [
            ent,
            both.tanh().sum(),
            scattered.mul(scattered)?.mean(),
            smaller.sum().scale(0.7),
            logs.mul(logs)?.sum(),
        ];
        let total = Var::concat(&terms, 0)?;
        Ok(total.sum())
    })
    .unwrap();
    assert!(report.max_relative_error < 1e-6, "{report:?}");
}

#[test]
fn forward_and_backward_are_bitwise_deterministic() {
    let run = || {
        let mut rng = RngStream::from_seed(99);
        let mut ps = ParamSet::<f32>::new();
        let (w, b) = ps.push_linear("l", 8, 8, &mut rng);
        let x = random_matrix(4, 8, &mut rng).cast::<f32>();
        let tape = Tape::new();
        let p = ps.bind(&tape);
        let y = tape.constant(x).matmul(p[w]).unwrap().add(p[b]).unwrap().softmax();
        let loss = y.log().mean();
        tape.backward(loss).unwrap();
        let bits = |t: &Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        let out = bits(&y.value());
        let grads: Vec<u32> = p.grads().iter().flat_map(bits).collect();
        (out, grads)
    };
    assert_eq!(run(), run());
}

proptest! {
    #[test]
    fn softmax_rows_are_distributions(
        rows in 1usize..5,
        data in prop::collection::vec(-30.0f64..30.0, 1..40),
    ) {
        let cols = data.len().div_ceil(rows).max(1);
        let mut padded = data.clone();
        padded.resize(rows * cols, 0.0);
        let tape = Tape::new();
        let x = tape.leaf(Tensor::matrix(rows, cols, padded).unwrap());
        let y = x.softmax();
        let y = y.value();
        for r in 0..rows {
            let row = y.row(r);
            prop_assert!(row.iter().all(|&p| p > 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn scatter_gather_round_trip_on_disjoint_rows(
        perm in Just((0usize..8).collect::<Vec<_>>()).prop_shuffle(),
        take in 1usize..8,
        values in prop::collection::vec(-5.0f64..5.0, 16),
    ) {
        let index: Vec<usize> = perm[..take].to_vec();
        let tape = Tape::new();
        let x = tape.leaf(Tensor::matrix(take, 2, values[..take * 2].to_vec()).unwrap());
        let back = x.scatter_add_rows(&index, 8).unwrap().gather_rows(&index).unwrap();
        let (got, want) = (back.value().clone(), x.value().clone());
        prop_assert_eq!(got, want);
    }
}
