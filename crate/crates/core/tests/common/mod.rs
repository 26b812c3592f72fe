//! Shared helpers: random straight-line programs and a plain reference interpreter.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::Rng;

/// One statement of a straight-line body, operands are earlier value indices (0 is `X`).
#[derive(Debug, Clone)]
pub enum Step {
    Linear(usize, String),
    Bias(usize, String),
    Tanh(usize),
    Sigmoid(usize),
    Relu(usize),
    Add(usize, usize),
    Mul(usize, usize),
    Cumsum(usize),
    Shift(usize, usize),
    Mean(usize),
    ScaleConst(usize, f64),
    ScaleParam(usize, String),
    LayerNorm(usize),
}

#[derive(Debug, Clone)]
pub struct Straight {
    /// `(name, shape)` with `D` resolved later; `true` marks a `[D, D]` matrix.
    pub params: Vec<(String, ParamKind)>,
    pub steps: Vec<Step>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamKind {
    Matrix,
    Vector,
    Gain,
}

fn var(i: usize) -> String {
    if i == 0 {
        "X".into()
    } else {
        format!("v{i}")
    }
}

impl Straight {
    pub fn random<R: Rng>(rng: &mut R, max_steps: usize, allow_mean: bool) -> Straight {
        let n = rng.random_range(1..=max_steps);
        let mut params = Vec::new();
        let mut steps = Vec::new();
        for k in 0..n {
            let live = k + 1;
            let a = rng.random_range(0..live);
            let b = rng.random_range(0..live);
            let kinds = if allow_mean { 13 } else { 12 };
            let step = match rng.random_range(0..kinds) {
                0 => {
                    let name = format!("W{k}");
                    params.push((name.clone(), ParamKind::Matrix));
                    Step::Linear(a, name)
                }
                1 => {
                    let name = format!("b{k}");
                    params.push((name.clone(), ParamKind::Vector));
                    Step::Bias(a, name)
                }
                2 => Step::Tanh(a),
                3 => Step::Sigmoid(a),
                4 => Step::Relu(a),
                5 => Step::Add(a, b),
                6 => Step::Mul(a, b),
                7 => Step::Cumsum(a),
                8 => Step::Shift(a, rng.random_range(1..=2)),
                9 => Step::ScaleConst(a, 0.5),
                10 => {
                    let name = format!("g{k}");
                    params.push((name.clone(), ParamKind::Gain));
                    Step::ScaleParam(a, name)
                }
                11 => Step::LayerNorm(a),
                _ => Step::Mean(a),
            };
            steps.push(step);
        }
        Straight { params, steps }
    }

    pub fn source(&self) -> String {
        let mut s = String::new();
        for (name, kind) in &self.params {
            let (shape, init) = match kind {
                ParamKind::Matrix => ("[D, D]", "uniform(-0.5, 0.5)"),
                ParamKind::Vector => ("[D]", "uniform(-0.5, 0.5)"),
                ParamKind::Gain => ("[1]", "uniform(0.5, 1.5)"),
            };
            s += &format!("param {name} {shape} = {init}\n");
        }
        for (k, step) in self.steps.iter().enumerate() {
            let rhs = match step {
                Step::Linear(a, w) => format!("linear({}, {w})", var(*a)),
                Step::Bias(a, b) => format!("bias({}, {b})", var(*a)),
                Step::Tanh(a) => format!("tanh({})", var(*a)),
                Step::Sigmoid(a) => format!("sigmoid({})", var(*a)),
                Step::Relu(a) => format!("relu({})", var(*a)),
                Step::Add(a, b) => format!("add({}, {})", var(*a), var(*b)),
                Step::Mul(a, b) => format!("mul({}, {})", var(*a), var(*b)),
                Step::Cumsum(a) => format!("cumsum({})", var(*a)),
                Step::Shift(a, k) => format!("shift({}, {k})", var(*a)),
                Step::Mean(a) => format!("mean({})", var(*a)),
                Step::ScaleConst(a, c) => format!("scale({}, {c:?})", var(*a)),
                Step::ScaleParam(a, g) => format!("scale({}, {g})", var(*a)),
                Step::LayerNorm(a) => format!("layernorm({})", var(*a)),
            };
            s += &format!("{} = {rhs}\n", var(k + 1));
        }
        s += &format!("Y = {}\n", var(self.steps.len()));
        s
    }

    /// Hand count: `2BLD²` per linear, `5BLD` per layernorm, nothing for shift, `BLD` otherwise.
    pub fn flops(&self, b: u64, l: u64, d: u64) -> u64 {
        self.steps
            .iter()
            .map(|s| match s {
                Step::Linear(..) => 2 * b * l * d * d,
                Step::LayerNorm(_) => 5 * b * l * d,
                Step::Shift(..) => 0,
                _ => b * l * d,
            })
            .sum()
    }

    /// Evaluates on `x[b][l][d]` with nested vectors and no shared code with the library.
    pub fn eval(&self, x: &[Vec<Vec<f64>>], theta: &BTreeMap<String, Vec<f64>>) -> Vec<Vec<Vec<f64>>> {
        let (bn, ln, dn) = (x.len(), x[0].len(), x[0][0].len());
        let map = |v: &Vec<Vec<Vec<f64>>>, f: &dyn Fn(f64) -> f64| -> Vec<Vec<Vec<f64>>> {
            v.iter()
                .map(|seq| seq.iter().map(|row| row.iter().map(|&e| f(e)).collect()).collect())
                .collect()
        };
        let zip = |u: &Vec<Vec<Vec<f64>>>, v: &Vec<Vec<Vec<f64>>>, f: &dyn Fn(f64, f64) -> f64| {
            let mut out = u.clone();
            for b in 0..bn {
                for l in 0..ln {
                    for d in 0..dn {
                        out[b][l][d] = f(u[b][l][d], v[b][l][d]);
                    }
                }
            }
            out
        };
        let mut vals: Vec<Vec<Vec<Vec<f64>>>> = vec![x.to_vec()];
        for step in &self.steps {
            let next = match step {
                Step::Linear(a, w) => {
                    let w = &theta[w];
                    let mut out = vals[*a].clone();
                    for b in 0..bn {
                        for l in 0..ln {
                            for j in 0..dn {
                                out[b][l][j] = (0..dn).map(|i| vals[*a][b][l][i] * w[i * dn + j]).sum();
                            }
                        }
                    }
                    out
                }
                Step::Bias(a, name) => {
                    let bias = &theta[name];
                    let mut out = vals[*a].clone();
                    for seq in out.iter_mut() {
                        for row in seq.iter_mut() {
                            for (e, bb) in row.iter_mut().zip(bias) {
                                *e += bb;
                            }
                        }
                    }
                    out
                }
                Step::Tanh(a) => map(&vals[*a], &|e| e.tanh()),
                Step::Sigmoid(a) => map(&vals[*a], &|e| 1.0 / (1.0 + (-e).exp())),
                Step::Relu(a) => map(&vals[*a], &|e| if e > 0.0 { e } else { 0.0 }),
                Step::Add(a, c) => zip(&vals[*a], &vals[*c], &|p, q| p + q),
                Step::Mul(a, c) => zip(&vals[*a], &vals[*c], &|p, q| p * q),
                Step::Cumsum(a) => {
                    let mut out = vals[*a].clone();
                    for seq in out.iter_mut() {
                        for l in 1..ln {
                            for d in 0..dn {
                                seq[l][d] += seq[l - 1][d];
                            }
                        }
                    }
                    out
                }
                Step::Shift(a, k) => {
                    let mut out = vec![vec![vec![0.0; dn]; ln]; bn];
                    for b in 0..bn {
                        for l in *k..ln {
                            out[b][l] = vals[*a][b][l - k].clone();
                        }
                    }
                    out
                }
                Step::Mean(a) => {
                    let mut out = vals[*a].clone();
                    for b in 0..bn {
                        for d in 0..dn {
                            let m = (0..ln).map(|l| vals[*a][b][l][d]).sum::<f64>() / ln as f64;
                            for l in 0..ln {
                                out[b][l][d] = m;
                            }
                        }
                    }
                    out
                }
                Step::ScaleConst(a, c) => {
                    let c = *c;
                    map(&vals[*a], &move |e| e * c)
                }
                Step::ScaleParam(a, g) => {
                    let c = theta[g][0];
                    map(&vals[*a], &move |e| e * c)
                }
                Step::LayerNorm(a) => {
                    let mut out = vals[*a].clone();
                    for row in out.iter_mut().flatten() {
                        let mu = row.iter().sum::<f64>() / dn as f64;
                        let var = row.iter().map(|e| (e - mu).powi(2)).sum::<f64>() / dn as f64;
                        let s = (var + 1e-5).sqrt();
                        for e in row.iter_mut() {
                            *e = (*e - mu) / s;
                        }
                    }
                    out
                }
            };
            vals.push(next);
        }
        vals.pop().unwrap()
    }
}

pub fn nest(flat: &[f64], b: usize, l: usize, d: usize) -> Vec<Vec<Vec<f64>>> {
    (0..b)
        .map(|bi| (0..l).map(|li| flat[(bi * l + li) * d..(bi * l + li + 1) * d].to_vec()).collect())
        .collect()
}

pub fn flatten(x: &[Vec<Vec<f64>>]) -> Vec<f64> {
    x.iter().flatten().flatten().copied().collect()
}
