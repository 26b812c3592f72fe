//! The block DSL: a line-oriented single-assignment language for block bodies.
//!
//! A program is either one anonymous section (a bare unit body) or a sequence
//! of named `unit ... end` sections, the first of which is the entry point.
//!
//! ```text
//! unit Gated(X) -> (Y) "gated residual"
//! param W [D, D] = uniform(-0.3, 0.3)
//! child Mixer(X) -> (Y) "token mixing"
//! h = linear(X, W)
//! g = sigmoid(h)
//! m = call Mixer(X)
//! Y = mul(g, m)
//! end
//! ```
//!
//! Activations are always `[B, L, D]`. Parameters are declared with `D` or
//! integer dimensions. Child units receive the caller's `Z` plus explicit
//! `key=value` bindings and hand back `Y` together with their exports.

mod eval;
mod flops;
mod parser;
mod printer;

pub use eval::{
    evaluate, gradients, init_params, Evaluation, Loss, ParamStore, Trace,
};
pub use flops::flops;
pub use parser::parse;

use serde::{Deserialize, Serialize};

/// Child-interface declaration; also the header of a named section.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct UnitDecl {
    pub name: String,
    pub requirements: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

impl UnitDecl {
    pub fn new(name: &str) -> Self {
        UnitDecl {
            name: name.to_string(),
            requirements: String::new(),
            inputs: vec!["X".into()],
            outputs: vec!["Y".into()],
        }
    }

    pub fn with_requirements(mut self, text: &str) -> Self {
        self.requirements = text.to_string();
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dim {
    Model,
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Init {
    Zeros,
    Uniform(f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDecl {
    pub name: String,
    pub shape: Vec<Dim>,
    pub init: Init,
}

impl ParamDecl {
    pub fn resolve_shape(&self, d: usize) -> Vec<usize> {
        self.shape
            .iter()
            .map(|dim| match dim {
                Dim::Model => d,
                Dim::Fixed(n) => *n,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Atom {
    Var(String),
    ZKey(String),
    Int(i64),
    Float(f64),
}

impl Atom {
    pub fn number(&self) -> Option<f64> {
        match self {
            Atom::Int(i) => Some(*i as f64),
            Atom::Float(f) => Some(*f),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PrimOp {
    Linear,
    Bias,
    Tanh,
    Sigmoid,
    Relu,
    Add,
    Mul,
    Cumsum,
    Shift,
    Mean,
    Scale,
    LayerNorm,
}

/// What an op argument position accepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ArgKind {
    Tensor,
    Param,
    /// A literal or a `[1]` parameter.
    Scalar,
    /// A positive integer literal.
    Offset,
}

impl PrimOp {
    pub const ALL: [PrimOp; 12] = [
        PrimOp::Linear,
        PrimOp::Bias,
        PrimOp::Tanh,
        PrimOp::Sigmoid,
        PrimOp::Relu,
        PrimOp::Add,
        PrimOp::Mul,
        PrimOp::Cumsum,
        PrimOp::Shift,
        PrimOp::Mean,
        PrimOp::Scale,
        PrimOp::LayerNorm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PrimOp::Linear => "linear",
            PrimOp::Bias => "bias",
            PrimOp::Tanh => "tanh",
            PrimOp::Sigmoid => "sigmoid",
            PrimOp::Relu => "relu",
            PrimOp::Add => "add",
            PrimOp::Mul => "mul",
            PrimOp::Cumsum => "cumsum",
            PrimOp::Shift => "shift",
            PrimOp::Mean => "mean",
            PrimOp::Scale => "scale",
            PrimOp::LayerNorm => "layernorm",
        }
    }

    pub fn from_name(name: &str) -> Option<PrimOp> {
        PrimOp::ALL.into_iter().find(|op| op.name() == name)
    }

    pub(crate) fn signature(self) -> &'static [ArgKind] {
        use ArgKind::*;
        match self {
            PrimOp::Linear | PrimOp::Bias => &[Tensor, Param],
            PrimOp::Add | PrimOp::Mul => &[Tensor, Tensor],
            PrimOp::Shift => &[Tensor, Offset],
            PrimOp::Scale => &[Tensor, Scalar],
            PrimOp::Tanh
            | PrimOp::Sigmoid
            | PrimOp::Relu
            | PrimOp::Cumsum
            | PrimOp::Mean
            | PrimOp::LayerNorm => &[Tensor],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Expr {
    Op { op: PrimOp, args: Vec<Atom> },
    Call {
        unit: String,
        input: Atom,
        bindings: Vec<(String, Atom)>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Stmt {
    Param(ParamDecl),
    Child(UnitDecl),
    Assign { target: String, expr: Expr },
    Output(Atom),
    Export { key: String, value: Atom },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionHeader {
    pub decl: UnitDecl,
    pub protected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SectionBody {
    Statements(Vec<Stmt>),
    /// Identity on `(X, Z)`.
    Placeholder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub header: Option<SectionHeader>,
    pub body: SectionBody,
}

impl Section {
    pub fn name(&self) -> Option<&str> {
        self.header.as_ref().map(|h| h.decl.name.as_str())
    }

    pub fn statements(&self) -> &[Stmt] {
        match &self.body {
            SectionBody::Statements(s) => s,
            SectionBody::Placeholder => &[],
        }
    }

    pub fn params(&self) -> impl Iterator<Item = &ParamDecl> {
        self.statements().iter().filter_map(|s| match s {
            Stmt::Param(p) => Some(p),
            _ => None,
        })
    }

    pub fn children(&self) -> impl Iterator<Item = &UnitDecl> {
        self.statements().iter().filter_map(|s| match s {
            Stmt::Child(c) => Some(c),
            _ => None,
        })
    }

    /// Names of invoked units, in statement order (repeats kept).
    pub fn calls(&self) -> impl Iterator<Item = &str> {
        self.statements().iter().filter_map(|s| match s {
            Stmt::Assign {
                expr: Expr::Call { unit, .. },
                ..
            } => Some(unit.as_str()),
            _ => None,
        })
    }

    /// Qualified parameter name: `Unit.W` inside named sections, bare otherwise.
    pub fn qualify(&self, param: &str) -> String {
        match self.name() {
            Some(unit) => format!("{unit}.{param}"),
            None => param.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockProgram {
    pub sections: Vec<Section>,
}

impl BlockProgram {
    pub fn entry(&self) -> &Section {
        &self.sections[0]
    }

    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name() == Some(name))
    }

    /// `(qualified name, declaration)` for every parameter in section order.
    pub fn parameters(&self) -> Vec<(String, &ParamDecl)> {
        self.sections
            .iter()
            .flat_map(|s| s.params().map(move |p| (s.qualify(&p.name), p)))
            .collect()
    }

    pub fn identity() -> Self {
        BlockProgram {
            sections: vec![Section {
                header: None,
                body: SectionBody::Statements(vec![Stmt::Output(Atom::Var("X".into()))]),
            }],
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParseError {
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown op `{op}` at line {line}")]
    UnknownOp { op: String, line: usize },
    #[error("`{op}` takes {expected} argument(s), found {found} (line {line})")]
    Arity {
        op: String,
        expected: usize,
        found: usize,
        line: usize,
    },
    #[error("argument {position} of `{op}` at line {line}: {message}")]
    BadArgument {
        op: String,
        position: usize,
        message: String,
        line: usize,
    },
    #[error("`{name}` bound twice (line {line})")]
    Rebinding { name: String, line: usize },
    #[error("unbound variable `{name}` at line {line}")]
    UnboundVariable { name: String, line: usize },
    #[error("section `{section}` never binds Y")]
    MissingOutput { section: String },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value produced by `{0}`")]
    NonFiniteValue(String),
    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("missing parameter `{0}`")]
    MissingParameter(String),
    #[error("Z has no key `{0}`")]
    MissingKey(String),
    #[error("call to unknown unit `{0}`")]
    UnknownCallee(String),
    #[error("recursive call into `{0}`")]
    Recursive(String),
    #[error("bad initializer for `{0}`")]
    BadInitializer(String),
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

pub(crate) const KEYWORDS: [&str; 8] = [
    "unit",
    "end",
    "placeholder",
    "param",
    "child",
    "export",
    "call",
    "protected",
];

/// Whether `s` may name a local variable.
pub(crate) fn is_local_name(s: &str) -> bool {
    is_identifier(s) && !KEYWORDS.contains(&s) && !matches!(s, "X" | "Y" | "Z" | "D")
}
