//! Finite-difference checks of every tape op at 64-bit on small random
//! shapes. Shared by the autodiff tests and the acceptance harness.

use bbf_autodiff::gradcheck::check;
use bbf_autodiff::{Graph, ParameterSet, Result, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TOL: f64 = 1e-4;

/// Every differentiable op on the tape.
pub const OPS: [&str; 20] = [
    "add", "sub", "mul", "scale", "relu", "reshape", "sum", "mean", "sum_last", "gather", "matmul", "add_bias",
    "softmax", "log_softmax", "cosine_similarity", "conv2d", "maxpool2d", "flatten", "concat_channels", "dueling",
];

#[derive(Clone, Debug)]
pub struct OpCheck {
    pub op: String,
    pub checked: usize,
    pub max_rel_error: f64,
}

/// One entry per op (conv2d once per stride/padding pair).
pub fn all_op_checks() -> Vec<OpCheck> {
    let mut out = Vec::new();
    elementwise_ops(&mut out);
    reductions(&mut out);
    matmul_and_bias(&mut out);
    softmax_family(&mut out);
    cosine_similarity(&mut out);
    conv_pool_and_channel_ops(&mut out);
    dueling_combination(&mut out);
    three_layer_mlp(&mut out);
    out
}

const H: f64 = 1e-5;
const FLOOR: f64 = 1e-6;

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

fn params(rng: &mut ChaCha8Rng, shapes: &[(&str, &[usize])]) -> ParameterSet<f64> {
    let mut p = ParameterSet::new(0);
    for (name, shape) in shapes {
        p.insert(name, random_tensor(rng, shape)).unwrap();
    }
    p
}

type Build = dyn for<'a> Fn(&mut Graph<'a, f64>, &'a ParameterSet<f64>) -> Result<Var>;

/// Reduces `build`'s output to a scalar through a fixed random projection,
/// then compares tape gradients against central differences.
fn grad_check(out: &mut Vec<OpCheck>, name: &str, p: &ParameterSet<f64>, build: &Build) {
    let weights = {
        let mut g = Graph::new();
        let out = build(&mut g, p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        random_tensor(&mut rng, g.shape(out))
    };
    let loss_of = |set: &ParameterSet<f64>, with_grad: bool| -> Result<(f64, Option<ParameterSet<f64>>)> {
        let mut g = Graph::new();
        let out = build(&mut g, set)?;
        let w = g.constant(weights.clone())?;
        let prod = g.mul(out, w)?;
        let loss = g.sum(prod)?;
        let value = g.value(loss).data()[0];
        if !with_grad {
            return Ok((value, None));
        }
        let grads = g.backward(loss)?;
        let mut copy = set.clone();
        copy.zero_grad();
        copy.accumulate(&grads)?;
        Ok((value, Some(copy)))
    };
    let (_, analytic) = loss_of(p, true).unwrap();
    let report = check(p, &analytic.unwrap(), H, FLOOR, |_, _| true, |s| Ok(loss_of(s, false)?.0)).unwrap();
    out.push(OpCheck {
        op: name.to_string(),
        checked: report.checked,
        max_rel_error: report.max_rel_error,
    });
}

fn p<'a>(g: &mut Graph<'a, f64>, set: &'a ParameterSet<f64>, name: &str) -> Result<Var> {
    g.param(set, name, true)
}

fn elementwise_ops(out: &mut Vec<OpCheck>) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let set = params(&mut rng, &[("a", &[3, 4]), ("b", &[3, 4])]);
    grad_check(out, "add", &set, &|g, s| {
        let (a, b) = (p(g, s, "a")?, p(g, s, "b")?);
        g.add(a, b)
    });
    grad_check(out, "sub", &set, &|g, s| {
        let (a, b) = (p(g, s, "a")?, p(g, s, "b")?);
        g.sub(a, b)
    });
    grad_check(out, "mul", &set, &|g, s| {
        let (a, b) = (p(g, s, "a")?, p(g, s, "b")?);
        g.mul(a, b)
    });
    grad_check(out, "scale", &set, &|g, s| {
        let a = p(g, s, "a")?;
        g.scale(a, -1.7)
    });
    grad_check(out, "relu", &set, &|g, s| {
        let a = p(g, s, "a")?;
        g.relu(a)
    });
    grad_check(out, "reshape", &set, &|g, s| {
        let a = p(g, s, "a")?;
        g.reshape(a, &[2, 6])
    });
}

fn reductions(out: &mut Vec<OpCheck>) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let set = params(&mut rng, &[("a", &[2, 3, 5])]);
    grad_check(out, "sum", &set, &|g, s| {
        let a = p(g, s, "a")?;
        g.sum(a)
    });
    grad_check(out, "mean", &set, &|g, s| {
        let a = p(g, s, "a")?;
        g.mean(a)
    });
    grad_check(out, "sum_last", &set, &|g, s| {
        let a = p(g, s, "a")?;
        g.sum_last(a)
    });
    grad_check(out, "gather", &set, &|g, s| {
        let a = p(g, s, "a")?;
        g.gather(a, &[2, 0])
    });
}

fn matmul_and_bias(out: &mut Vec<OpCheck>) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let set = params(&mut rng, &[("x", &[4, 3]), ("w", &[3, 5]), ("b", &[5])]);
    grad_check(out, "matmul", &set, &|g, s| {
        let (x, w) = (p(g, s, "x")?, p(g, s, "w")?);
        g.matmul(x, w)
    });
    grad_check(out, "add_bias", &set, &|g, s| {
        let (x, w, b) = (p(g, s, "x")?, p(g, s, "w")?, p(g, s, "b")?);
        let y = g.matmul(x, w)?;
        g.add_bias(y, b)
    });
}

fn softmax_family(out: &mut Vec<OpCheck>) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let set = params(&mut rng, &[("x", &[3, 2, 7])]);
    grad_check(out, "softmax", &set, &|g, s| {
        let x = p(g, s, "x")?;
        g.softmax(x)
    });
    grad_check(out, "log_softmax", &set, &|g, s| {
        let x = p(g, s, "x")?;
        g.log_softmax(x)
    });
}

fn cosine_similarity(out: &mut Vec<OpCheck>) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let set = params(&mut rng, &[("a", &[4, 6]), ("b", &[4, 6])]);
    grad_check(out, "cosine_similarity", &set, &|g, s| {
        let (a, b) = (p(g, s, "a")?, p(g, s, "b")?);
        g.cosine_similarity(a, b)
    });
}

fn conv_pool_and_channel_ops(out: &mut Vec<OpCheck>) {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let set = params(
        &mut rng,
        &[
            ("x", &[2, 3, 5, 4]),
            ("w", &[4, 3, 3, 3]),
            ("b", &[4]),
            ("y", &[2, 2, 5, 4]),
        ],
    );
    for (stride, pad) in [(1, 1), (2, 0), (2, 1)] {
        grad_check(out, "conv2d", &set, &move |g, s| {
            let (x, w, b) = (p(g, s, "x")?, p(g, s, "w")?, p(g, s, "b")?);
            g.conv2d(x, w, Some(b), stride, pad)
        });
    }
    grad_check(out, "maxpool2d", &set, &|g, s| {
        let x = p(g, s, "x")?;
        g.maxpool2d(x, 3, 2)
    });
    grad_check(out, "flatten", &set, &|g, s| {
        let x = p(g, s, "x")?;
        g.flatten(x)
    });
    grad_check(out, "concat_channels", &set, &|g, s| {
        let (x, y) = (p(g, s, "x")?, p(g, s, "y")?);
        g.concat_channels(x, y)
    });
}

fn dueling_combination(out: &mut Vec<OpCheck>) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let set = params(&mut rng, &[("v", &[2, 5]), ("a", &[2, 3, 5])]);
    grad_check(out, "dueling", &set, &|g, s| {
        let (v, a) = (p(g, s, "v")?, p(g, s, "a")?);
        g.dueling(v, a)
    });
}

fn three_layer_mlp(out: &mut Vec<OpCheck>) {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let set = params(
        &mut rng,
        &[
            ("x", &[5, 4]),
            ("w0", &[4, 8]),
            ("b0", &[8]),
            ("w1", &[8, 8]),
            ("b1", &[8]),
            ("w2", &[8, 3]),
            ("b2", &[3]),
        ],
    );
    grad_check(out, "mlp", &set, &|g, s| {
        let mut h = p(g, s, "x")?;
        for i in 0..3 {
            let w = p(g, s, &format!("w{i}"))?;
            let b = p(g, s, &format!("b{i}"))?;
            h = g.matmul(h, w)?;
            h = g.add_bias(h, b)?;
            if i < 2 {
                h = g.relu(h)?;
            }
        }
        let lp = g.log_softmax(h)?;
        g.mean(lp)
    });
}
