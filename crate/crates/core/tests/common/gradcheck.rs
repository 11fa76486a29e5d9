//! Central finite-difference oracle for the autodiff engine.

use std::sync::Arc;

use fcgshift::autodiff::{NormMode, SparseMatrix, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-5;

/// Norm-wise relative error between analytic and numeric gradients of the
/// scalar built by `f` over `inputs`.
pub fn grad_check<F>(inputs: &[Tensor], f: F) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let eval = |ins: &[Tensor]| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ins.iter().map(|t| tape.param(t.clone())).collect();
        let out = f(&mut tape, &vars);
        tape.value(out).item()
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let loss = f(&mut tape, &vars);
    let grads = tape.backward(loss).expect("scalar loss");
    let analytic: Vec<f64> = vars.iter().flat_map(|&v| grads.wrt(v).into_data()).collect();

    let mut numeric = Vec::with_capacity(analytic.len());
    let mut work = inputs.to_vec();
    for i in 0..inputs.len() {
        for k in 0..inputs[i].len() {
            let orig = inputs[i].data()[k];
            work[i].data_mut()[k] = orig + H;
            let up = eval(&work);
            work[i].data_mut()[k] = orig - H;
            let down = eval(&work);
            work[i].data_mut()[k] = orig;
            numeric.push((up - down) / (2.0 * H));
        }
    }
    relative_error(&analytic, &numeric)
}

pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na < 1e-9 && nb < 1e-9 {
        return 0.0;
    }
    let diff = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    diff / na.max(nb)
}

pub fn random_tensor(rng: &mut impl Rng, shape: &[usize]) -> Tensor {
    let len = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..len).map(|_| rng.gen_range(-1.5..1.5)).collect()).unwrap()
}

/// Reduces any tensor to a scalar through fixed random weights so that the
/// upstream gradient reaching the op under test is generic.
pub fn weighted_sum(tape: &mut Tape, x: Var, seed: u64) -> Var {
    let shape = tape.value(x).shape().to_vec();
    let w = random_tensor(&mut ChaCha8Rng::seed_from_u64(seed), &shape);
    let w = tape.constant(w);
    let p = tape.mul(x, w).unwrap();
    tape.sum(p)
}

pub fn random_sparse(rng: &mut impl Rng, rows: usize, cols: usize) -> Arc<SparseMatrix> {
    let mut t = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if rng.gen_bool(0.4) {
                t.push((r, c, rng.gen_range(-1.0..1.0)));
            }
        }
    }
    Arc::new(SparseMatrix::from_triplets(rows, cols, t).unwrap())
}

/// Sorted segment ids over `n` rows covering `0..s`.
pub fn random_segments(rng: &mut impl Rng, n: usize) -> (Vec<usize>, usize) {
    let s = rng.gen_range(1..=n.min(3));
    let mut ids: Vec<usize> = (0..s).collect();
    ids.extend((s..n).map(|_| rng.gen_range(0..s)));
    ids.sort_unstable();
    (ids, s)
}

#[derive(Clone, Debug)]
enum Step {
    MatMul(usize),
    AddBroadcast(usize),
    Add(usize),
    Mul(usize),
    Scale(f64),
    Relu,
    SpMM(Arc<SparseMatrix>),
    BatchNorm(usize, usize),
    Dropout(u64),
}

#[derive(Clone, Debug)]
enum Head {
    CrossEntropy(Vec<usize>),
    Entropy,
    SegmentMax(Vec<usize>, usize, u64),
    SegmentMean(Vec<usize>, usize, u64),
    Weighted(u64),
}

/// A random differentiable program of `depth` ops followed by a scalar head.
pub struct Composition {
    pub inputs: Vec<Tensor>,
    steps: Vec<Step>,
    head: Head,
    pub description: String,
}

impl Composition {
    pub fn random(rng: &mut impl Rng, depth: usize) -> Self {
        let n = rng.gen_range(3..=6);
        let mut h = rng.gen_range(2..=4);
        let mut inputs = vec![random_tensor(rng, &[n, h])];
        let mut steps = Vec::new();
        for _ in 0..depth {
            let step = match rng.gen_range(0..9) {
                0 => {
                    let h2 = rng.gen_range(2..=4);
                    inputs.push(random_tensor(rng, &[h, h2]));
                    h = h2;
                    Step::MatMul(inputs.len() - 1)
                }
                1 => {
                    inputs.push(random_tensor(rng, &[h]));
                    Step::AddBroadcast(inputs.len() - 1)
                }
                2 => {
                    inputs.push(random_tensor(rng, &[n, h]));
                    Step::Add(inputs.len() - 1)
                }
                3 => {
                    inputs.push(random_tensor(rng, &[n, h]));
                    Step::Mul(inputs.len() - 1)
                }
                4 => Step::Scale(rng.gen_range(-2.0..2.0)),
                5 => Step::Relu,
                6 => Step::SpMM(random_sparse(rng, n, n)),
                7 => {
                    inputs.push(random_tensor(rng, &[h]));
                    inputs.push(random_tensor(rng, &[h]));
                    Step::BatchNorm(inputs.len() - 2, inputs.len() - 1)
                }
                _ => Step::Dropout(rng.gen()),
            };
            steps.push(step);
        }
        let head = match rng.gen_range(0..5) {
            0 => Head::CrossEntropy((0..n).map(|_| rng.gen_range(0..h)).collect()),
            1 => Head::Entropy,
            2 => {
                let (ids, s) = random_segments(rng, n);
                Head::SegmentMax(ids, s, rng.gen())
            }
            3 => {
                let (ids, s) = random_segments(rng, n);
                Head::SegmentMean(ids, s, rng.gen())
            }
            _ => Head::Weighted(rng.gen()),
        };
        let description = format!("{steps:?} -> {head:?}");
        Composition { inputs, steps, head, description }
    }

    pub fn build(&self, tape: &mut Tape, vars: &[Var]) -> Var {
        let mut x = vars[0];
        for step in &self.steps {
            x = match step {
                Step::MatMul(i) => tape.matmul(x, vars[*i]).unwrap(),
                Step::AddBroadcast(i) => tape.add_broadcast(x, vars[*i]).unwrap(),
                Step::Add(i) => tape.add(x, vars[*i]).unwrap(),
                Step::Mul(i) => tape.mul(x, vars[*i]).unwrap(),
                Step::Scale(k) => tape.scale(x, *k),
                Step::Relu => tape.relu(x),
                Step::SpMM(s) => tape.spmm(s.clone(), x).unwrap(),
                Step::BatchNorm(g, b) => tape.batch_norm(x, vars[*g], vars[*b], NormMode::Batch).unwrap().0,
                Step::Dropout(seed) => tape.dropout(x, 0.3, &mut ChaCha8Rng::seed_from_u64(*seed)).unwrap(),
            };
        }
        match &self.head {
            Head::CrossEntropy(labels) => tape.softmax_cross_entropy(x, labels).unwrap(),
            Head::Entropy => tape.mean_entropy(x).unwrap(),
            Head::SegmentMax(ids, s, seed) => {
                let m = tape.segment_max(x, ids, *s).unwrap();
                weighted_sum(tape, m, *seed)
            }
            Head::SegmentMean(ids, s, seed) => {
                let m = tape.segment_mean(x, ids, *s).unwrap();
                weighted_sum(tape, m, *seed)
            }
            Head::Weighted(seed) => weighted_sum(tape, x, *seed),
        }
    }

    pub fn check(&self) -> f64 {
        grad_check(&self.inputs, |t, v| self.build(t, v))
    }
}

/// `(name, relative error)` for every primitive on random small tensors.
pub fn primitive_errors(seed: u64) -> Vec<(&'static str, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = random_tensor(&mut rng, &[4, 3]);
    let b = random_tensor(&mut rng, &[3, 2]);
    let c = random_tensor(&mut rng, &[4, 3]);
    let bias = random_tensor(&mut rng, &[3]);
    let gamma = random_tensor(&mut rng, &[3]);
    let beta = random_tensor(&mut rng, &[3]);
    let s = random_sparse(&mut rng, 4, 4);
    let segs = vec![0, 0, 1, 1];
    let labels = vec![0, 2, 1, 2];
    let mut out = Vec::new();
    out.push((
        "matmul",
        grad_check(&[a.clone(), b.clone()], |t, v| {
            let y = t.matmul(v[0], v[1]).unwrap();
            weighted_sum(t, y, 1)
        }),
    ));
    out.push((
        "add_broadcast",
        grad_check(&[a.clone(), bias.clone()], |t, v| {
            let y = t.add_broadcast(v[0], v[1]).unwrap();
            weighted_sum(t, y, 2)
        }),
    ));
    out.push((
        "add",
        grad_check(&[a.clone(), c.clone()], |t, v| {
            let y = t.add(v[0], v[1]).unwrap();
            weighted_sum(t, y, 3)
        }),
    ));
    out.push((
        "mul",
        grad_check(&[a.clone(), c.clone()], |t, v| {
            let y = t.mul(v[0], v[1]).unwrap();
            weighted_sum(t, y, 4)
        }),
    ));
    out.push((
        "scale",
        grad_check(std::slice::from_ref(&a), |t, v| {
            let y = t.scale(v[0], -1.7);
            weighted_sum(t, y, 5)
        }),
    ));
    out.push((
        "relu",
        grad_check(std::slice::from_ref(&a), |t, v| {
            let y = t.relu(v[0]);
            weighted_sum(t, y, 6)
        }),
    ));
    out.push((
        "spmm",
        grad_check(std::slice::from_ref(&a), |t, v| {
            let y = t.spmm(s.clone(), v[0]).unwrap();
            weighted_sum(t, y, 7)
        }),
    ));
    out.push((
        "segment_max",
        grad_check(std::slice::from_ref(&a), |t, v| {
            let y = t.segment_max(v[0], &segs, 2).unwrap();
            weighted_sum(t, y, 8)
        }),
    ));
    out.push((
        "segment_mean",
        grad_check(std::slice::from_ref(&a), |t, v| {
            let y = t.segment_mean(v[0], &segs, 2).unwrap();
            weighted_sum(t, y, 9)
        }),
    ));
    out.push((
        "batch_norm_train",
        grad_check(&[a.clone(), gamma.clone(), beta.clone()], |t, v| {
            let y = t.batch_norm(v[0], v[1], v[2], NormMode::Batch).unwrap().0;
            weighted_sum(t, y, 10)
        }),
    ));
    let frozen = fcgshift::autodiff::NormStats { mean: vec![0.1, -0.2, 0.3], var: vec![0.5, 1.5, 2.0] };
    out.push((
        "batch_norm_eval",
        grad_check(&[a.clone(), gamma.clone(), beta.clone()], |t, v| {
            let y = t.batch_norm(v[0], v[1], v[2], NormMode::Frozen(frozen.clone())).unwrap().0;
            weighted_sum(t, y, 11)
        }),
    ));
    out.push((
        "dropout",
        grad_check(std::slice::from_ref(&a), |t, v| {
            let y = t.dropout(v[0], 0.4, &mut ChaCha8Rng::seed_from_u64(12)).unwrap();
            weighted_sum(t, y, 13)
        }),
    ));
    out.push((
        "softmax_cross_entropy",
        grad_check(std::slice::from_ref(&a), |t, v| t.softmax_cross_entropy(v[0], &labels).unwrap()),
    ));
    out.push(("mean_entropy", grad_check(std::slice::from_ref(&a), |t, v| t.mean_entropy(v[0]).unwrap())));
    out.push(("sum", grad_check(std::slice::from_ref(&a), |t, v| t.sum(v[0]))));
    out
}
