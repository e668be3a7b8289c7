//! Finite-difference gradient oracle.
//!
//! Every loss is recomputed here from scratch in `f64` and differentiated
//! numerically by central differences; the library's analytic `f32`
//! gradients are compared against that.

#![allow(dead_code)]

use embedalign::numkernel::{
    mse_loss, relu, relu_backward, softmax_cross_entropy, Dropout, DropoutCache, ForwardCache,
    LinearLayer, Matrix, Mode, RngStream,
};

pub const H: f64 = 1e-3;
pub const REL_TOL: f64 = 1e-2;
pub const ABS_TOL: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Case {
    Linear,
    Relu,
    DropoutEval,
    Mse,
    CrossEntropy,
}

pub const CASES: [Case; 5] = [
    Case::Linear,
    Case::Relu,
    Case::DropoutEval,
    Case::Mse,
    Case::CrossEntropy,
];

#[derive(Debug, Default)]
pub struct GradSummary {
    pub shapes: usize,
    pub compared: usize,
    /// Coordinates where a ReLU input changes sign within ±h, so the
    /// central difference straddles the kink and is not a derivative.
    pub kink_skips: usize,
    pub worst_abs: f64,
    pub worst_rel: f64,
    pub failures: Vec<String>,
}

impl GradSummary {
    fn compare(&mut self, what: &str, analytic: f64, numeric: f64) {
        self.compared += 1;
        let abs = (analytic - numeric).abs();
        let rel = abs / analytic.abs().max(numeric.abs()).max(f64::MIN_POSITIVE);
        self.worst_abs = self.worst_abs.max(abs);
        if abs > ABS_TOL {
            self.worst_rel = self.worst_rel.max(rel);
        }
        if abs > ABS_TOL && rel > REL_TOL {
            self.failures
                .push(format!("{what}: analytic {analytic:.6e} numeric {numeric:.6e}"));
        }
    }
}

type M64 = Vec<Vec<f64>>;

fn to64(m: &Matrix) -> M64 {
    m.iter_rows()
        .map(|r| r.iter().map(|&v| f64::from(v)).collect())
        .collect()
}

fn linear64(x: &M64, w: &M64, b: &[f64]) -> M64 {
    x.iter()
        .map(|row| {
            w.iter()
                .zip(b)
                .map(|(wr, bi)| wr.iter().zip(row).map(|(a, c)| a * c).sum::<f64>() + bi)
                .collect()
        })
        .collect()
}

fn relu64(x: &M64) -> M64 {
    x.iter()
        .map(|r| r.iter().map(|&v| v.max(0.0)).collect())
        .collect()
}

fn mse64(p: &M64, t: &M64) -> f64 {
    let n = (p.len() * p[0].len()) as f64;
    p.iter()
        .flatten()
        .zip(t.iter().flatten())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / n
}

fn xent64(z: &M64, labels: &[usize]) -> f64 {
    z.iter()
        .zip(labels)
        .map(|(row, &y)| {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            lse - row[y]
        })
        .sum::<f64>()
        / z.len() as f64
}

fn random(rng: &mut RngStream, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols).map(|_| (rng.normal() * scale) as f32).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

fn signs(m: &M64) -> Vec<bool> {
    m.iter().flatten().map(|&v| v > 0.0).collect()
}

/// Central difference of `loss` in each coordinate of `values`.
/// Coordinates for which `kink` reports a sign flip are skipped.
fn numeric_grad(
    values: &[f64],
    loss: impl Fn(&[f64]) -> f64,
    kink: impl Fn(&[f64], &[f64]) -> bool,
) -> Vec<Option<f64>> {
    (0..values.len())
        .map(|i| {
            let mut plus = values.to_vec();
            let mut minus = values.to_vec();
            plus[i] += H;
            minus[i] -= H;
            if kink(&plus, &minus) {
                None
            } else {
                Some((loss(&plus) - loss(&minus)) / (2.0 * H))
            }
        })
        .collect()
}

fn unflatten(v: &[f64], rows: usize, cols: usize) -> M64 {
    v.chunks(cols).take(rows).map(<[f64]>::to_vec).collect()
}

struct LinearProblem {
    x: Matrix,
    layer: LinearLayer,
    target: Matrix,
}

impl LinearProblem {
    fn new(rng: &mut RngStream, n: usize, din: usize, dout: usize) -> Self {
        let weight = random(rng, dout, din, 0.7);
        let bias = (0..dout).map(|_| (rng.normal() * 0.3) as f32).collect();
        Self {
            x: random(rng, n, din, 1.0),
            layer: LinearLayer::from_parts(weight, bias).unwrap(),
            target: random(rng, n, dout, 1.0),
        }
    }

    /// Packs `[x, W, b]` into one coordinate vector.
    fn pack(&self) -> Vec<f64> {
        self.x
            .data()
            .iter()
            .chain(self.layer.weight.data())
            .chain(&self.layer.bias)
            .map(|&v| f64::from(v))
            .collect()
    }

    fn unpack(&self, v: &[f64]) -> (M64, M64, Vec<f64>) {
        let (n, din, dout) = (self.x.rows(), self.x.cols(), self.layer.out_dim());
        let (xs, rest) = v.split_at(n * din);
        let (ws, bs) = rest.split_at(dout * din);
        (unflatten(xs, n, din), unflatten(ws, dout, din), bs.to_vec())
    }
}

fn check_linear(rng: &mut RngStream, n: usize, din: usize, dout: usize, mode: Case, s: &mut GradSummary) {
    let mut p = LinearProblem::new(rng, n, din, dout);
    let t64 = to64(&p.target);

    // Analytic, through the library.
    let mut cache = ForwardCache::default();
    let z = p.layer.forward(&p.x, &mut cache).unwrap();
    let (grad_x, _) = match mode {
        Case::Linear => {
            let (_, g) = mse_loss(&z, &p.target).unwrap();
            (p.layer.backward(&g, &cache).unwrap(), ())
        }
        Case::Relu => {
            let a = relu(&z);
            let (_, g) = mse_loss(&a, &p.target).unwrap();
            let gz = relu_backward(&z, &g).unwrap();
            (p.layer.backward(&gz, &cache).unwrap(), ())
        }
        Case::DropoutEval => {
            let d = Dropout::new(0.5).unwrap();
            let mut dc = DropoutCache::default();
            let a = d.forward(&z, Mode::Eval, rng, &mut dc);
            let (_, g) = mse_loss(&a, &p.target).unwrap();
            let gz = d.backward(&g, &dc).unwrap();
            (p.layer.backward(&gz, &cache).unwrap(), ())
        }
        _ => unreachable!(),
    };
    let analytic: Vec<f64> = grad_x
        .data()
        .iter()
        .chain(p.layer.grad_weight.data())
        .chain(&p.layer.grad_bias)
        .map(|&v| f64::from(v))
        .collect();

    // Numeric, in f64.
    let values = p.pack();
    let pre = |v: &[f64]| {
        let (x, w, b) = p.unpack(v);
        linear64(&x, &w, &b)
    };
    let loss = |v: &[f64]| {
        let z = pre(v);
        match mode {
            Case::Relu => mse64(&relu64(&z), &t64),
            _ => mse64(&z, &t64),
        }
    };
    let kink = |a: &[f64], b: &[f64]| mode == Case::Relu && signs(&pre(a)) != signs(&pre(b));
    for (i, num) in numeric_grad(&values, loss, kink).into_iter().enumerate() {
        match num {
            Some(num) => s.compare(&format!("{mode:?} {n}x{din}->{dout} coord {i}"), analytic[i], num),
            None => s.kink_skips += 1,
        }
    }
}

fn check_mse(rng: &mut RngStream, n: usize, d: usize, s: &mut GradSummary) {
    let pred = random(rng, n, d, 1.0);
    let target = random(rng, n, d, 1.0);
    let (_, g) = mse_loss(&pred, &target).unwrap();
    let t64 = to64(&target);
    let values: Vec<f64> = pred.data().iter().map(|&v| f64::from(v)).collect();
    let num = numeric_grad(&values, |v| mse64(&unflatten(v, n, d), &t64), |_, _| false);
    for (i, (a, nv)) in g.data().iter().zip(num).enumerate() {
        s.compare(&format!("Mse {n}x{d} coord {i}"), f64::from(*a), nv.unwrap());
    }
}

fn check_xent(rng: &mut RngStream, n: usize, c: usize, s: &mut GradSummary) {
    let logits = random(rng, n, c, 2.0);
    let labels: Vec<usize> = (0..n).map(|_| rng.below(c)).collect();
    let (_, g) = softmax_cross_entropy(&logits, &labels).unwrap();
    let values: Vec<f64> = logits.data().iter().map(|&v| f64::from(v)).collect();
    let num = numeric_grad(&values, |v| xent64(&unflatten(v, n, c), &labels), |_, _| false);
    for (i, (a, nv)) in g.data().iter().zip(num).enumerate() {
        s.compare(&format!("CrossEntropy {n}x{c} coord {i}"), f64::from(*a), nv.unwrap());
    }
}

/// Checks `per_case` random shapes for every case in [`CASES`].
pub fn gradient_suite(per_case: usize, seed: u64) -> GradSummary {
    let mut rng = RngStream::new(seed, "gradcheck");
    let mut s = GradSummary::default();
    for case in CASES {
        for _ in 0..per_case {
            let n = 1 + rng.below(8);
            let din = 1 + rng.below(10);
            let dout = 1 + rng.below(10);
            match case {
                Case::Linear | Case::Relu | Case::DropoutEval => {
                    check_linear(&mut rng, n, din, dout, case, &mut s)
                }
                Case::Mse => check_mse(&mut rng, n, din, &mut s),
                Case::CrossEntropy => {
                    let classes = 2 + rng.below(8);
                    check_xent(&mut rng, n, classes, &mut s)
                }
            }
            s.shapes += 1;
        }
    }
    s
}
