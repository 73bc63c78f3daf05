//! Structural properties of the two recurrent cells.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use delelstm_core::cells::{step_standard, step_tensorized, CellState, StandardLstmParams, TensorLstmParams};
use delelstm_core::{Graph, Tensor};

/// Hidden states (B, D, M) of every step of the tensorized cell.
fn tensor_run(p: &TensorLstmParams, xs: &[Tensor]) -> Vec<Tensor> {
    let mut g = Graph::new();
    let bound = p.bind(&mut g);
    let mut shape = xs[0].shape().to_vec();
    shape.push(p.hidden());
    let mut state = CellState::zeros(&mut g, &shape);
    xs.iter()
        .map(|x| {
            let x = g.constant(x.clone());
            state = step_tensorized(&mut g, x, state, &bound).unwrap();
            g.value(state.hidden).clone()
        })
        .collect()
}

fn standard_run(p: &StandardLstmParams, xs: &[Tensor]) -> Vec<Tensor> {
    let mut g = Graph::new();
    let bound = p.bind(&mut g);
    let mut state = CellState::zeros(&mut g, &[xs[0].shape()[0], p.hidden()]);
    xs.iter()
        .map(|x| {
            let x = g.constant(x.clone());
            state = step_standard(&mut g, x, state, &bound).unwrap();
            g.value(state.hidden).clone()
        })
        .collect()
}

#[test]
fn perturbing_one_variable_leaves_other_rows_untouched() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let (b, d, m, t) = (rng.random_range(1..=3), rng.random_range(2..=6), rng.random_range(1..=16), rng.random_range(1..=12));
        let p = TensorLstmParams::init(d, m, &mut rng);
        let xs: Vec<Tensor> = (0..t).map(|_| Tensor::uniform(&[b, d], 2.0, &mut rng)).collect();
        let target = rng.random_range(0..d);
        let mut perturbed = xs.clone();
        for x in &mut perturbed {
            for row in x.data_mut().chunks_mut(d) {
                row[target] += rng.random_range(-3.0..3.0);
            }
        }
        let (base, moved) = (tensor_run(&p, &xs), tensor_run(&p, &perturbed));
        let mut target_changed = false;
        for (h0, h1) in base.iter().zip(&moved) {
            for (i, (a, c)) in h0.data().iter().zip(h1.data()).enumerate() {
                let var = (i / m) % d;
                if var == target {
                    target_changed |= a != c;
                } else {
                    worst = worst.max((a - c).abs());
                }
            }
        }
        assert!(target_changed, "the perturbed variable's own rows must respond");
    }
    assert!(worst <= 1e-15, "largest cross-variable change {worst:e}");
}

#[test]
fn single_variable_tensorized_cell_equals_standard_cell() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = rng.random_range(1..=16);
        let tp = TensorLstmParams::init(1, m, &mut rng);
        // (1, M, M) -> (M, M); (1, M) -> (M, 1); (1, M) -> (M): same row-major data.
        let mut sp = StandardLstmParams::zeros(1, m);
        for ((_, s), (_, t)) in sp.gates.iter_mut().zip(tp.gates.iter()) {
            s.recurrent = t.recurrent.clone().reshape(&[m, m]).unwrap();
            s.input = t.input.clone().reshape(&[m, 1]).unwrap();
            s.bias = t.bias.clone().reshape(&[m]).unwrap();
        }
        let xs: Vec<Tensor> = (0..10).map(|_| Tensor::uniform(&[2, 1], 2.0, &mut rng)).collect();
        for (ht, hs) in tensor_run(&tp, &xs).iter().zip(standard_run(&sp, &xs)) {
            for (a, b) in ht.data().iter().zip(hs.data()) {
                assert!((a - b).abs() <= 4.0 * f64::EPSILON * b.abs().max(1e-300), "seed {seed}: {a} vs {b}");
            }
        }
    }
}
