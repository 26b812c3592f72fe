//! Forward evaluation on a recorded tape and exact reverse-mode gradients.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;

use super::{Atom, BlockProgram, EvalError, Expr, Init, PrimOp, SectionBody, Stmt};
use crate::tensor::{NamedTensorMap, Tensor};

/// Parameter values keyed by qualified name (`Unit.W`, or `W` in a bare body).
pub type ParamStore = BTreeMap<String, Tensor>;

const LN_EPS: f64 = 1e-5;

/// Scalar reduction of `Y` that seeds the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub enum Loss {
    Sum,
    /// `Σ w ⊙ Y`, `w` shaped like `Y`.
    Weighted(Vec<f64>),
    /// Mean softmax cross-entropy of `Y[b, l, :]` against `targets[b * L + l]`
    /// over positions `l >= from_position`.
    CrossEntropy {
        targets: Vec<usize>,
        from_position: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub y: Tensor,
    pub z: NamedTensorMap,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Linear(usize, usize),
    Bias(usize, usize),
    Tanh(usize),
    Sigmoid(usize),
    Relu(usize),
    Add(usize, usize),
    Mul(usize, usize),
    Cumsum(usize),
    Shift(usize, usize),
    Mean(usize),
    ScaleConst(usize, f64),
    ScaleParam(usize, usize),
    LayerNorm(usize, Vec<f64>),
}

#[derive(Debug, Clone)]
struct Node {
    value: Vec<f64>,
    op: Op,
}

/// A recorded forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    nodes: Vec<Node>,
    output: usize,
    exports: BTreeMap<String, usize>,
    params: BTreeMap<String, (usize, Vec<usize>)>,
    incoming: NamedTensorMap,
    b: usize,
    l: usize,
    d: usize,
}

struct Frame<'a> {
    section: usize,
    vars: HashMap<&'a str, usize>,
    z: BTreeMap<String, usize>,
}

impl Trace {
    /// Runs `p` on `(X, Z)` with parameters `theta`, keeping every intermediate.
    pub fn record(
        p: &BlockProgram,
        x: &Tensor,
        z: &NamedTensorMap,
        theta: &ParamStore,
    ) -> Result<Trace, EvalError> {
        let (b, l, d) = x.bld().ok_or_else(|| {
            EvalError::ShapeMismatch(format!("X must be [B, L, D], got {:?}", x.shape()))
        })?;
        if !x.is_finite() {
            return Err(EvalError::NonFiniteValue("X".into()));
        }
        let mut t = Trace {
            nodes: Vec::new(),
            output: 0,
            exports: BTreeMap::new(),
            params: BTreeMap::new(),
            incoming: z.clone(),
            b,
            l,
            d,
        };
        for (name, decl) in p.parameters() {
            let value = theta
                .get(&name)
                .ok_or_else(|| EvalError::MissingParameter(name.clone()))?;
            let shape = decl.resolve_shape(d);
            if value.shape() != shape.as_slice() {
                return Err(EvalError::ShapeMismatch(format!(
                    "parameter `{name}` declared {shape:?}, given {:?}",
                    value.shape()
                )));
            }
            let id = t.push(value.data().to_vec(), Op::Leaf);
            t.params.insert(name, (id, shape));
        }
        let x_id = t.push(x.data().to_vec(), Op::Leaf);
        let mut z_ids = BTreeMap::new();
        for (k, v) in z {
            let id = t.push(v.data().to_vec(), Op::Leaf);
            if v.shape() != [b, l, d] {
                // Kept off the activation path; rejected only if read.
                t.nodes[id].value.clear();
            }
            z_ids.insert(k.clone(), id);
        }
        let mut stack = Vec::new();
        let (y, exports) = t.run_section(p, 0, x_id, z_ids, &mut stack)?;
        t.output = y;
        t.exports = exports;
        Ok(t)
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> usize {
        self.nodes.push(Node { value, op });
        self.nodes.len() - 1
    }

    fn bld(&self) -> usize {
        self.b * self.l * self.d
    }

    fn run_section<'p>(
        &mut self,
        p: &'p BlockProgram,
        section: usize,
        x: usize,
        z: BTreeMap<String, usize>,
        stack: &mut Vec<usize>,
    ) -> Result<(usize, BTreeMap<String, usize>), EvalError> {
        let sec = &p.sections[section];
        let stmts = match &sec.body {
            SectionBody::Placeholder => return Ok((x, BTreeMap::new())),
            SectionBody::Statements(s) => s,
        };
        stack.push(section);
        let mut frame = Frame {
            section,
            vars: HashMap::new(),
            z,
        };
        frame.vars.insert("X", x);
        let mut output = None;
        let mut exports = BTreeMap::new();
        for stmt in stmts {
            match stmt {
                Stmt::Param(_) | Stmt::Child(_) => {}
                Stmt::Output(a) => output = Some(self.tensor(p, &frame, a)?),
                Stmt::Export { key, value } => {
                    let id = self.tensor(p, &frame, value)?;
                    exports.insert(key.clone(), id);
                }
                Stmt::Assign { target, expr } => {
                    let id = match expr {
                        Expr::Op { op, args } => self.apply(p, &frame, *op, args, target)?,
                        Expr::Call {
                            unit,
                            input,
                            bindings,
                        } => {
                            let callee = p
                                .sections
                                .iter()
                                .position(|s| s.name() == Some(unit.as_str()))
                                .ok_or_else(|| EvalError::UnknownCallee(unit.clone()))?;
                            if stack.contains(&callee) {
                                return Err(EvalError::Recursive(unit.clone()));
                            }
                            let input = self.tensor(p, &frame, input)?;
                            let mut child_z = frame.z.clone();
                            for (k, v) in bindings {
                                let id = self.tensor(p, &frame, v)?;
                                child_z.insert(k.clone(), id);
                            }
                            let (y, child_exports) =
                                self.run_section(p, callee, input, child_z, stack)?;
                            frame.z.extend(child_exports);
                            y
                        }
                    };
                    frame.vars.insert(target.as_str(), id);
                }
            }
        }
        stack.pop();
        let y = output.ok_or_else(|| {
            EvalError::ShapeMismatch(format!("section {} never binds Y", frame.section))
        })?;
        Ok((y, exports))
    }

    fn tensor(&self, p: &BlockProgram, frame: &Frame, atom: &Atom) -> Result<usize, EvalError> {
        match atom {
            Atom::Var(v) => frame.vars.get(v.as_str()).copied().ok_or_else(|| {
                EvalError::ShapeMismatch(format!("`{v}` is not an activation"))
            }),
            Atom::ZKey(k) => {
                let id = *frame
                    .z
                    .get(k)
                    .ok_or_else(|| EvalError::MissingKey(k.clone()))?;
                if self.nodes[id].value.len() != self.bld() {
                    return Err(EvalError::ShapeMismatch(format!(
                        "Z.{k} is not [{}, {}, {}]",
                        self.b, self.l, self.d
                    )));
                }
                let _ = p;
                Ok(id)
            }
            Atom::Int(_) | Atom::Float(_) => {
                Err(EvalError::ShapeMismatch("literal used as activation".into()))
            }
        }
    }

    fn param(
        &self,
        p: &BlockProgram,
        frame: &Frame,
        atom: &Atom,
        want: &[usize],
        op: PrimOp,
    ) -> Result<usize, EvalError> {
        let Atom::Var(v) = atom else {
            return Err(EvalError::ShapeMismatch(format!("{} expects a parameter", op.name())));
        };
        let name = p.sections[frame.section].qualify(v);
        let (id, shape) = self
            .params
            .get(&name)
            .ok_or_else(|| EvalError::MissingParameter(name.clone()))?;
        if shape.as_slice() != want {
            return Err(EvalError::ShapeMismatch(format!(
                "{} needs `{name}` shaped {want:?}, declared {shape:?}",
                op.name()
            )));
        }
        Ok(*id)
    }

    fn apply(
        &mut self,
        p: &BlockProgram,
        frame: &Frame,
        op: PrimOp,
        args: &[Atom],
        target: &str,
    ) -> Result<usize, EvalError> {
        let (l, d) = (self.l, self.d);
        let x = self.tensor(p, frame, &args[0])?;
        let xv = &self.nodes[x].value;
        let n = xv.len();
        let (value, node_op) = match op {
            PrimOp::Linear => {
                let w = self.param(p, frame, &args[1], &[d, d], op)?;
                let wv = &self.nodes[w].value;
                let mut out = vec![0.0; n];
                for (row_in, row_out) in xv.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
                    for (i, &xi) in row_in.iter().enumerate() {
                        let wrow = &wv[i * d..(i + 1) * d];
                        for (o, &wij) in row_out.iter_mut().zip(wrow) {
                            *o += xi * wij;
                        }
                    }
                }
                (out, Op::Linear(x, w))
            }
            PrimOp::Bias => {
                let bid = self.param(p, frame, &args[1], &[d], op)?;
                let bv = &self.nodes[bid].value;
                let out = xv
                    .chunks_exact(d)
                    .flat_map(|row| row.iter().zip(bv).map(|(a, b)| a + b))
                    .collect();
                (out, Op::Bias(x, bid))
            }
            PrimOp::Tanh => (xv.iter().map(|v| v.tanh()).collect(), Op::Tanh(x)),
            PrimOp::Sigmoid => (xv.iter().map(|&v| sigmoid(v)).collect(), Op::Sigmoid(x)),
            PrimOp::Relu => (xv.iter().map(|&v| v.max(0.0)).collect(), Op::Relu(x)),
            PrimOp::Add | PrimOp::Mul => {
                let y = self.tensor(p, frame, &args[1])?;
                let yv = &self.nodes[y].value;
                let out = if op == PrimOp::Add {
                    xv.iter().zip(yv).map(|(a, b)| a + b).collect()
                } else {
                    xv.iter().zip(yv).map(|(a, b)| a * b).collect()
                };
                let node = if op == PrimOp::Add { Op::Add(x, y) } else { Op::Mul(x, y) };
                (out, node)
            }
            PrimOp::Cumsum => {
                let mut out = xv.clone();
                for seq in out.chunks_exact_mut(l * d) {
                    for t in 1..l {
                        for j in 0..d {
                            seq[t * d + j] += seq[(t - 1) * d + j];
                        }
                    }
                }
                (out, Op::Cumsum(x))
            }
            PrimOp::Shift => {
                let k = match args[1] {
                    Atom::Int(k) if k >= 1 => k as usize,
                    _ => return Err(EvalError::ShapeMismatch("shift offset must be >= 1".into())),
                };
                let mut out = vec![0.0; n];
                for (src, dst) in xv.chunks_exact(l * d).zip(out.chunks_exact_mut(l * d)) {
                    for t in k..l {
                        dst[t * d..(t + 1) * d].copy_from_slice(&src[(t - k) * d..(t - k + 1) * d]);
                    }
                }
                (out, Op::Shift(x, k))
            }
            PrimOp::Mean => {
                let mut out = vec![0.0; n];
                for (src, dst) in xv.chunks_exact(l * d).zip(out.chunks_exact_mut(l * d)) {
                    let mut acc = vec![0.0; d];
                    for row in src.chunks_exact(d) {
                        for (a, v) in acc.iter_mut().zip(row) {
                            *a += v;
                        }
                    }
                    for a in acc.iter_mut() {
                        *a /= l as f64;
                    }
                    for row in dst.chunks_exact_mut(d) {
                        row.copy_from_slice(&acc);
                    }
                }
                (out, Op::Mean(x))
            }
            PrimOp::Scale => match &args[1] {
                a @ (Atom::Int(_) | Atom::Float(_)) => {
                    let c = a.number().unwrap_or_default();
                    (xv.iter().map(|v| v * c).collect(), Op::ScaleConst(x, c))
                }
                a => {
                    let g = self.param(p, frame, a, &[1], op)?;
                    let c = self.nodes[g].value[0];
                    (xv.iter().map(|v| v * c).collect(), Op::ScaleParam(x, g))
                }
            },
            PrimOp::LayerNorm => {
                let mut out = vec![0.0; n];
                let mut inv = Vec::with_capacity(n / d);
                for (src, dst) in xv.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
                    let mu = src.iter().sum::<f64>() / d as f64;
                    let var = src.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / d as f64;
                    let s = 1.0 / (var + LN_EPS).sqrt();
                    for (o, v) in dst.iter_mut().zip(src) {
                        *o = (v - mu) * s;
                    }
                    inv.push(s);
                }
                (out, Op::LayerNorm(x, inv))
            }
        };
        if value.iter().any(|v| !v.is_finite()) {
            return Err(EvalError::NonFiniteValue(
                p.sections[frame.section].qualify(target),
            ));
        }
        Ok(self.push(value, node_op))
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.b, self.l, self.d)
    }

    pub fn output(&self) -> Tensor {
        Tensor::new(vec![self.b, self.l, self.d], self.nodes[self.output].value.clone())
            .expect("output has activation shape")
    }

    pub fn output_data(&self) -> &[f64] {
        &self.nodes[self.output].value
    }

    /// Incoming `Z` overlaid with the entry section's exports.
    pub fn z_out(&self) -> NamedTensorMap {
        let mut z = self.incoming.clone();
        for (k, &id) in &self.exports {
            let t = Tensor::new(vec![self.b, self.l, self.d], self.nodes[id].value.clone())
                .expect("exports have activation shape");
            z.insert(k.clone(), t);
        }
        z
    }

    /// Loss value and `dL/dY`.
    pub fn loss(&self, loss: &Loss) -> (f64, Vec<f64>) {
        let y = self.output_data();
        match loss {
            Loss::Sum => (y.iter().sum(), vec![1.0; y.len()]),
            Loss::Weighted(w) => (y.iter().zip(w).map(|(a, b)| a * b).sum(), w.clone()),
            Loss::CrossEntropy {
                targets,
                from_position,
            } => {
                let (l, d) = (self.l, self.d);
                let mut grad = vec![0.0; y.len()];
                let mut total = 0.0;
                let mut count = 0usize;
                for (r, logits) in y.chunks_exact(d).enumerate() {
                    if r % l < *from_position {
                        continue;
                    }
                    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let z: f64 = logits.iter().map(|v| (v - m).exp()).sum();
                    let lse = m + z.ln();
                    let target = targets[r];
                    total += lse - logits[target];
                    count += 1;
                    for (j, g) in grad[r * d..(r + 1) * d].iter_mut().enumerate() {
                        *g = (logits[j] - lse).exp();
                        if j == target {
                            *g -= 1.0;
                        }
                    }
                }
                let scale = 1.0 / count.max(1) as f64;
                grad.iter_mut().for_each(|g| *g *= scale);
                (total * scale, grad)
            }
        }
    }

    /// Backpropagates `dy` and returns a gradient for every parameter,
    /// exactly zero for parameters the output does not depend on.
    /// Non-finite entries are returned as-is.
    pub fn backward(&self, dy: &[f64]) -> ParamStore {
        let d = self.d;
        let l = self.l;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[self.output] = Some(dy.to_vec());
        fn acc(grads: &mut [Option<Vec<f64>>], id: usize, g: &[f64]) {
            match &mut grads[id] {
                Some(existing) => existing.iter_mut().zip(g).for_each(|(a, b)| *a += b),
                slot @ None => *slot = Some(g.to_vec()),
            }
        }
        for id in (0..self.nodes.len()).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            match &node.op {
                Op::Leaf => {
                    grads[id] = Some(g);
                    continue;
                }
                Op::Linear(x, w) => {
                    let xv = &self.nodes[*x].value;
                    let wv = &self.nodes[*w].value;
                    let mut dx = vec![0.0; xv.len()];
                    let mut dw = vec![0.0; d * d];
                    for ((xr, gr), dxr) in xv
                        .chunks_exact(d)
                        .zip(g.chunks_exact(d))
                        .zip(dx.chunks_exact_mut(d))
                    {
                        for i in 0..d {
                            let wrow = &wv[i * d..(i + 1) * d];
                            let mut s = 0.0;
                            for (gj, wij) in gr.iter().zip(wrow) {
                                s += gj * wij;
                            }
                            dxr[i] = s;
                            let xi = xr[i];
                            for (dwij, gj) in dw[i * d..(i + 1) * d].iter_mut().zip(gr) {
                                *dwij += xi * gj;
                            }
                        }
                    }
                    acc(&mut grads, *x, &dx);
                    acc(&mut grads, *w, &dw);
                }
                Op::Bias(x, b) => {
                    let mut db = vec![0.0; d];
                    for row in g.chunks_exact(d) {
                        db.iter_mut().zip(row).for_each(|(a, v)| *a += v);
                    }
                    acc(&mut grads, *x, &g);
                    acc(&mut grads, *b, &db);
                }
                Op::Tanh(x) => {
                    let dx: Vec<f64> = g
                        .iter()
                        .zip(&node.value)
                        .map(|(g, y)| g * (1.0 - y * y))
                        .collect();
                    acc(&mut grads, *x, &dx);
                }
                Op::Sigmoid(x) => {
                    let dx: Vec<f64> = g
                        .iter()
                        .zip(&node.value)
                        .map(|(g, y)| g * y * (1.0 - y))
                        .collect();
                    acc(&mut grads, *x, &dx);
                }
                Op::Relu(x) => {
                    let dx: Vec<f64> = g
                        .iter()
                        .zip(&self.nodes[*x].value)
                        .map(|(g, v)| if *v > 0.0 { *g } else { 0.0 })
                        .collect();
                    acc(&mut grads, *x, &dx);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, &g);
                    acc(&mut grads, *b, &g);
                }
                Op::Mul(a, b) => {
                    let av = &self.nodes[*a].value;
                    let bv = &self.nodes[*b].value;
                    let da: Vec<f64> = g.iter().zip(bv).map(|(g, v)| g * v).collect();
                    let db: Vec<f64> = g.iter().zip(av).map(|(g, v)| g * v).collect();
                    acc(&mut grads, *a, &da);
                    acc(&mut grads, *b, &db);
                }
                Op::Cumsum(x) => {
                    let mut dx = g.clone();
                    for seq in dx.chunks_exact_mut(l * d) {
                        for t in (0..l.saturating_sub(1)).rev() {
                            for j in 0..d {
                                seq[t * d + j] += seq[(t + 1) * d + j];
                            }
                        }
                    }
                    acc(&mut grads, *x, &dx);
                }
                Op::Shift(x, k) => {
                    let mut dx = vec![0.0; g.len()];
                    for (src, dst) in g.chunks_exact(l * d).zip(dx.chunks_exact_mut(l * d)) {
                        for t in *k..l {
                            dst[(t - k) * d..(t - k + 1) * d]
                                .copy_from_slice(&src[t * d..(t + 1) * d]);
                        }
                    }
                    acc(&mut grads, *x, &dx);
                }
                Op::Mean(x) => {
                    let mut dx = vec![0.0; g.len()];
                    for (src, dst) in g.chunks_exact(l * d).zip(dx.chunks_exact_mut(l * d)) {
                        let mut s = vec![0.0; d];
                        for row in src.chunks_exact(d) {
                            s.iter_mut().zip(row).for_each(|(a, v)| *a += v);
                        }
                        for row in dst.chunks_exact_mut(d) {
                            for (o, v) in row.iter_mut().zip(&s) {
                                *o = v / l as f64;
                            }
                        }
                    }
                    acc(&mut grads, *x, &dx);
                }
                Op::ScaleConst(x, c) => {
                    let dx: Vec<f64> = g.iter().map(|v| v * c).collect();
                    acc(&mut grads, *x, &dx);
                }
                Op::ScaleParam(x, s) => {
                    let c = self.nodes[*s].value[0];
                    let xv = &self.nodes[*x].value;
                    let dx: Vec<f64> = g.iter().map(|v| v * c).collect();
                    let ds: f64 = g.iter().zip(xv).map(|(a, b)| a * b).sum();
                    acc(&mut grads, *x, &dx);
                    acc(&mut grads, *s, &[ds]);
                }
                Op::LayerNorm(x, inv) => {
                    let mut dx = vec![0.0; g.len()];
                    for (((gr, yr), dxr), s) in g
                        .chunks_exact(d)
                        .zip(node.value.chunks_exact(d))
                        .zip(dx.chunks_exact_mut(d))
                        .zip(inv)
                    {
                        let mg = gr.iter().sum::<f64>() / d as f64;
                        let mgy = gr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / d as f64;
                        for ((o, gi), yi) in dxr.iter_mut().zip(gr).zip(yr) {
                            *o = s * (gi - mg - yi * mgy);
                        }
                    }
                    acc(&mut grads, *x, &dx);
                }
            }
        }
        self.params
            .iter()
            .map(|(name, (id, shape))| {
                let data = grads[*id]
                    .take()
                    .unwrap_or_else(|| vec![0.0; shape.iter().product()]);
                let t = Tensor::new(shape.clone(), data).expect("gradient matches parameter shape");
                (name.clone(), t)
            })
            .collect()
    }
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Evaluates `p` on `(X, Z)`.
pub fn evaluate(
    p: &BlockProgram,
    x: &Tensor,
    z: &NamedTensorMap,
    theta: &ParamStore,
) -> Result<Evaluation, EvalError> {
    let t = Trace::record(p, x, z, theta)?;
    Ok(Evaluation {
        y: t.output(),
        z: t.z_out(),
    })
}

/// Exact gradients of `loss(Y)` with respect to every declared parameter.
pub fn gradients(
    p: &BlockProgram,
    x: &Tensor,
    z: &NamedTensorMap,
    theta: &ParamStore,
    loss: &Loss,
) -> Result<ParamStore, EvalError> {
    let t = Trace::record(p, x, z, theta)?;
    let (_, dy) = t.loss(loss);
    let grads = t.backward(&dy);
    if let Some((name, _)) = grads.iter().find(|(_, g)| !g.is_finite()) {
        return Err(EvalError::NonFiniteGradient(name.clone()));
    }
    Ok(grads)
}

/// Draws initial values for every declared parameter at model width `d`.
pub fn init_params<R: Rng + ?Sized>(
    p: &BlockProgram,
    d: usize,
    rng: &mut R,
) -> Result<ParamStore, EvalError> {
    let mut out = ParamStore::new();
    for (name, decl) in p.parameters() {
        let shape = decl.resolve_shape(d);
        if shape.iter().any(|&n| n == 0) {
            return Err(EvalError::BadInitializer(name));
        }
        let t = match decl.init {
            Init::Zeros => Tensor::zeros(shape),
            Init::Uniform(lo, hi) => {
                if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                    return Err(EvalError::BadInitializer(name));
                }
                if lo == hi {
                    Tensor::filled(shape, lo)
                } else {
                    Tensor::from_fn(shape, || rng.random_range(lo..hi))
                }
            }
        };
        out.insert(name, t);
    }
    Ok(out)
}
