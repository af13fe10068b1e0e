mod common;

use common::{max_abs_dev, oracle_logits, tiny_model_fixture};
use fairgt::autodiff::{Tape, Tensor};
use fairgt::hops::{hop_aggregate, HopNorm, SensitiveGroupGraph};
use fairgt::linalg::Matrix;
use fairgt::model::{encoder_layer, readout, Model, ModelConfig, Readout};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn forward_matches_dense_oracle() {
    for heads in [1, 2] {
        let (model, stack, nodes, _) = tiny_model_fixture(3, heads, 0.0);
        let logits = model.logits(&stack, &nodes).unwrap().to_rows();
        let want = oracle_logits(&model, &stack, &nodes);
        assert!(max_abs_dev(&logits, &want) <= 1e-8);
    }
}

#[test]
fn deeper_model_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 12;
    let s: Vec<u8> = (0..n).map(|i| (i % 3 == 0) as u8).collect();
    let x = Matrix::new(n, 6, (0..n * 6).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
    let sg = SensitiveGroupGraph::from_sensitive(&s).unwrap();
    let stack = hop_aggregate(&sg, &x, 3, HopNorm::Raw).unwrap();
    let mut cfg = ModelConfig::new(6, 3, 0);
    cfg.d_hidden = 8;
    cfg.layers = 3;
    cfg.heads = 4;
    let model = Model::new(cfg).unwrap();
    let nodes: Vec<usize> = (0..n).collect();
    let got = model.logits(&stack, &nodes).unwrap().to_rows();
    assert!(max_abs_dev(&got, &oracle_logits(&model, &stack, &nodes)) <= 1e-8);
}

#[test]
fn attention_rows_sum_to_one_and_k0_is_trivial() {
    let (model, stack, nodes, _) = tiny_model_fixture(4, 2, 0.0);
    let (_, att, read) = model.logits_with_trace(&stack, &nodes).unwrap();
    for layer in &att {
        for head in layer {
            for row in head.data().chunks(3) {
                assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            }
        }
    }
    for row in read.data().chunks(3) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }

    let sg = SensitiveGroupGraph::from_sensitive(&[0, 1]).unwrap();
    let x = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, -1.0]]).unwrap();
    let st = hop_aggregate(&sg, &x, 0, HopNorm::GroupMean).unwrap();
    let mut cfg = ModelConfig::new(2, 0, 0);
    cfg.d_hidden = 4;
    let m = Model::new(cfg).unwrap();
    let (_, att, read) = m.logits_with_trace(&st, &[0, 1]).unwrap();
    assert_eq!(att[0][0].shape(), &[2, 1, 1]);
    assert!(att[0][0].data().iter().all(|&w| w == 1.0));
    assert!(read.data().iter().all(|&w| w == 1.0));
}

#[test]
fn identical_tokens_give_uniform_weights() {
    let (model, _, _, _) = tiny_model_fixture(5, 1, 0.0);
    let mut tape = Tape::new();
    let w = model.params.map(|t| tape.constant(t.clone()));
    let row: Vec<f64> = (0..8).map(|i| i as f64 * 0.1 - 0.3).collect();
    let x = tape.constant(Tensor::new(&[2, 8], [row.clone(), row].concat()).unwrap());
    let (_, att) = encoder_layer(&mut tape, x, &w.layers[0], 1, 2, 1, 0.0, None).unwrap();
    for v in tape.value(att[0]).data() {
        assert!((v - 0.5).abs() < 1e-15);
    }
    let (emb, a) = readout(&mut tape, x, w.readout_u, 1, 2, Readout::Attention).unwrap();
    assert!(tape.value(a).data().iter().all(|&v| (v - 0.5).abs() < 1e-15));
    assert!(tape.value(emb).data().iter().zip(tape.value(x).data()).all(|(a, b)| (a - b).abs() < 1e-15));
    let zero = tape.constant(Tensor::zeros(&[8]));
    let y = tape.constant(Tensor::new(&[3, 8], (0..24).map(|i| i as f64).collect()).unwrap());
    let (_, a) = readout(&mut tape, y, zero, 1, 3, Readout::Attention).unwrap();
    assert!(tape.value(a).data().iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
}

#[test]
fn node_permutation_permutes_logits() {
    let (model, stack, nodes, _) = tiny_model_fixture(6, 2, 0.0);
    let base = model.logits(&stack, &nodes).unwrap().to_rows();
    let perm = [3, 0, 4, 1, 2];
    let permuted = model.logits(&stack, &perm).unwrap().to_rows();
    for (i, &p) in perm.iter().enumerate() {
        assert_eq!(permuted[i], base[p]);
    }
}

#[test]
fn zero_classifier_gives_equal_logits() {
    let (mut model, stack, nodes, _) = tiny_model_fixture(7, 1, 0.0);
    model.params.classifier_w = Tensor::zeros(&[8, 2]);
    model.params.classifier_b = Tensor::zeros(&[2]);
    for row in model.logits(&stack, &nodes).unwrap().to_rows() {
        assert_eq!(row[0], row[1]);
    }
}

#[test]
fn checkpoint_round_trip() {
    let (model, stack, nodes, _) = tiny_model_fixture(9, 2, 0.1);
    let back = Model::from_checkpoint(&model.to_checkpoint()).unwrap();
    assert_eq!(back, model);
    assert_eq!(back.logits(&stack, &nodes).unwrap(), model.logits(&stack, &nodes).unwrap());
}
