//! Tape gradients against finite differences of a plain `f64` forward pass.

use airl_core::numkit::gradcheck::{mlp_central_difference, relative_error};
use airl_core::numkit::{Mlp, Tape, Tensor};
use airl_core::rng::rng_from_seed;
use rand::Rng;

#[derive(Clone, Copy, Debug)]
enum Loss {
    Squared,
    CrossEntropy,
    SoftplusMean,
    ExpSum,
}

struct Case {
    net: Mlp,
    inputs: Vec<Vec<f64>>,
    targets: Vec<Vec<f64>>,
    labels: Vec<usize>,
    loss: Loss,
}

fn case(seed: u64) -> Case {
    let mut rng = rng_from_seed(seed);
    let mut dims = vec![rng.gen_range(1..6)];
    for _ in 0..rng.gen_range(0..3) {
        dims.push(rng.gen_range(1..7));
    }
    dims.push(rng.gen_range(1..5));
    let out = *dims.last().unwrap();
    let rows = rng.gen_range(1..5);
    let inputs = (0..rows)
        .map(|_| (0..dims[0]).map(|_| rng.gen_range(-2.0..2.0)).collect())
        .collect();
    let targets = (0..rows)
        .map(|_| (0..out).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let labels = (0..rows).map(|_| rng.gen_range(0..out)).collect();
    let loss = [Loss::Squared, Loss::CrossEntropy, Loss::SoftplusMean, Loss::ExpSum][(seed % 4) as usize];
    Case {
        net: Mlp::new(&dims, seed).unwrap(),
        inputs,
        targets,
        labels,
        loss,
    }
}

fn tape_gradient(c: &Case) -> Vec<f64> {
    let mut tape = Tape::new();
    let vars = c.net.bind(&mut tape);
    let x = tape.leaf(Tensor::from_rows(&c.inputs).unwrap());
    let y = vars.forward(&mut tape, x).unwrap();
    let loss = match c.loss {
        Loss::Squared => {
            let t = tape.leaf(Tensor::from_rows(&c.targets).unwrap());
            let d = tape.sub(y, t);
            let sq = tape.mul(d, d);
            tape.sum(sq)
        }
        Loss::CrossEntropy => {
            let lp = tape.log_softmax(y);
            let picked = tape.gather(lp, &c.labels);
            let s = tape.sum(picked);
            tape.scale(s, -1.0)
        }
        Loss::SoftplusMean => {
            let sp = tape.softplus(y);
            tape.mean(sp)
        }
        Loss::ExpSum => {
            let half = tape.scale(y, 0.5);
            let e = tape.exp(half);
            tape.sum(e)
        }
    };
    tape.backward(loss).unwrap();
    vars.gradients(&tape).unwrap().flat()
}

/// The same loss computed without the tape.
fn plain_loss(c: &Case, net: &Mlp) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for (i, x) in c.inputs.iter().enumerate() {
        let y = net.forward_row(x).unwrap();
        count += y.len();
        total += match c.loss {
            Loss::Squared => y.iter().zip(&c.targets[i]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(),
            Loss::CrossEntropy => {
                let m = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = m + y.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
                lse - y[c.labels[i]]
            }
            Loss::SoftplusMean => y.iter().map(|v| (1.0 + v.exp()).ln()).sum::<f64>(),
            Loss::ExpSum => y.iter().map(|v| (0.5 * v).exp()).sum::<f64>(),
        };
    }
    match c.loss {
        Loss::SoftplusMean => total / count as f64,
        _ => total,
    }
}

#[test]
fn hundred_random_networks_match_central_differences() {
    let mut worst = 0.0f64;
    for seed in 0..100 {
        let c = case(seed);
        let analytic = tape_gradient(&c);
        let numeric = mlp_central_difference(&c.net, 1e-5, |net| plain_loss(&c, net));
        let err = relative_error(&analytic, &numeric);
        assert!(err < 1e-5, "seed {seed} ({:?}): relative error {err:e}", c.loss);
        worst = worst.max(err);
    }
    assert!(worst < 1e-5);
}
