//! Symbolic FLOP accounting.
//!
//! | op | count |
//! |----|-------|
//! | `linear` | `2·B·L·D²` |
//! | `bias`, `tanh`, `sigmoid`, `relu`, `add`, `mul`, `scale` | `B·L·D` |
//! | `cumsum`, `mean` | `B·L·D` |
//! | `layernorm` | `5·B·L·D` |
//! | `shift` | `0` (pure data movement) |
//!
//! Calls count the callee once per invocation; placeholders cost nothing.

use super::{BlockProgram, Expr, PrimOp, SectionBody, Stmt};

fn op_cost(op: PrimOp, b: u64, l: u64, d: u64) -> u64 {
    let bld = b * l * d;
    match op {
        PrimOp::Linear => 2 * bld * d,
        PrimOp::LayerNorm => 5 * bld,
        PrimOp::Shift => 0,
        PrimOp::Bias
        | PrimOp::Tanh
        | PrimOp::Sigmoid
        | PrimOp::Relu
        | PrimOp::Add
        | PrimOp::Mul
        | PrimOp::Scale
        | PrimOp::Cumsum
        | PrimOp::Mean => bld,
    }
}

fn section_cost(p: &BlockProgram, idx: usize, dims: (u64, u64, u64), depth: usize) -> u64 {
    // Recursive programs cannot be evaluated; stop counting rather than loop.
    if depth > p.sections.len() {
        return 0;
    }
    let SectionBody::Statements(stmts) = &p.sections[idx].body else {
        return 0;
    };
    let (b, l, d) = dims;
    stmts
        .iter()
        .map(|s| match s {
            Stmt::Assign {
                expr: Expr::Op { op, .. },
                ..
            } => op_cost(*op, b, l, d),
            Stmt::Assign {
                expr: Expr::Call { unit, .. },
                ..
            } => p
                .sections
                .iter()
                .position(|s| s.name() == Some(unit.as_str()))
                .map_or(0, |c| section_cost(p, c, dims, depth + 1)),
            _ => 0,
        })
        .sum()
}

/// Floating-point operation count of one forward pass at shape `(B, L, D)`.
pub fn flops(p: &BlockProgram, b: usize, l: usize, d: usize) -> u64 {
    section_cost(p, 0, (b as u64, l as u64, d as u64), 0)
}
