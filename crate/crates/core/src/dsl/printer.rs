//! Canonical printer. `parse(p.to_string()) == p` for every parsed program,
//! and printing is a fixed point on canonical text.

use std::fmt::{self, Display, Formatter, Write};

use super::{Atom, BlockProgram, Dim, Expr, Init, Section, SectionBody, Stmt, UnitDecl};

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

impl Display for Atom {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match self {
            Atom::Var(v) => f.write_str(v),
            Atom::ZKey(k) => write!(f, "Z.{k}"),
            Atom::Int(i) => write!(f, "{i}"),
            Atom::Float(x) => write!(f, "{x:?}"),
        }
    }
}

impl Display for UnitDecl {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}({}) -> ({})",
            self.name,
            self.inputs.join(", "),
            self.outputs.join(", ")
        )?;
        if !self.requirements.is_empty() {
            write!(f, " {}", quote(&self.requirements))?;
        }
        Ok(())
    }
}

impl Display for Stmt {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match self {
            Stmt::Param(p) => {
                let dims: Vec<String> = p
                    .shape
                    .iter()
                    .map(|d| match d {
                        Dim::Model => "D".to_string(),
                        Dim::Fixed(n) => n.to_string(),
                    })
                    .collect();
                write!(f, "param {} [{}] = ", p.name, dims.join(", "))?;
                match p.init {
                    Init::Zeros => f.write_str("zeros"),
                    Init::Uniform(lo, hi) => write!(f, "uniform({lo:?}, {hi:?})"),
                }
            }
            Stmt::Child(decl) => write!(f, "child {decl}"),
            Stmt::Assign { target, expr } => {
                write!(f, "{target} = ")?;
                match expr {
                    Expr::Op { op, args } => {
                        write!(f, "{}(", op.name())?;
                        for (i, a) in args.iter().enumerate() {
                            if i > 0 {
                                f.write_str(", ")?;
                            }
                            write!(f, "{a}")?;
                        }
                        f.write_char(')')
                    }
                    Expr::Call {
                        unit,
                        input,
                        bindings,
                    } => {
                        write!(f, "call {unit}({input}")?;
                        for (k, v) in bindings {
                            write!(f, ", {k}={v}")?;
                        }
                        f.write_char(')')
                    }
                }
            }
            Stmt::Output(a) => write!(f, "Y = {a}"),
            Stmt::Export { key, value } => write!(f, "export {key} = {value}"),
        }
    }
}

impl Display for Section {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        if let Some(h) = &self.header {
            write!(f, "unit {}", h.decl)?;
            if h.protected {
                f.write_str(" protected")?;
            }
            f.write_char('\n')?;
        }
        match &self.body {
            SectionBody::Placeholder => f.write_str("placeholder\n")?,
            SectionBody::Statements(stmts) => {
                for s in stmts {
                    writeln!(f, "{s}")?;
                }
            }
        }
        if self.header.is_some() {
            f.write_str("end\n")?;
        }
        Ok(())
    }
}

impl Display for BlockProgram {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        for s in &self.sections {
            write!(f, "{s}")?;
        }
        Ok(())
    }
}
