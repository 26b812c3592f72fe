use std::collections::{HashMap, HashSet};

use super::{
    is_identifier, is_local_name, ArgKind, Atom, BlockProgram, Dim, Expr, Init, ParamDecl,
    ParseError, PrimOp, Section, SectionBody, SectionHeader, Stmt, UnitDecl,
};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Float(f64),
    Str(String),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Eq,
    Dot,
    Arrow,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Int(i) => format!("`{i}`"),
            Tok::Float(f) => format!("`{f:?}`"),
            Tok::Str(_) => "string".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Eq => "`=`".into(),
            Tok::Dot => "`.`".into(),
            Tok::Arrow => "`->`".into(),
        }
    }
}

struct Line {
    number: usize,
    toks: Vec<(Tok, usize)>,
    /// Column just past the last character, for end-of-line errors.
    end_col: usize,
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> ParseError {
    ParseError::Syntax {
        line,
        column,
        message: message.into(),
    }
}

fn lex_line(number: usize, text: &str) -> Result<Line, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        match c {
            ' ' | '\t' | '\r' => i += 1,
            '#' => break,
            '(' => {
                toks.push((Tok::LParen, col));
                i += 1;
            }
            ')' => {
                toks.push((Tok::RParen, col));
                i += 1;
            }
            '[' => {
                toks.push((Tok::LBracket, col));
                i += 1;
            }
            ']' => {
                toks.push((Tok::RBracket, col));
                i += 1;
            }
            ',' => {
                toks.push((Tok::Comma, col));
                i += 1;
            }
            '=' => {
                toks.push((Tok::Eq, col));
                i += 1;
            }
            '.' if !chars.get(i + 1).is_some_and(|c| c.is_ascii_digit()) => {
                toks.push((Tok::Dot, col));
                i += 1;
            }
            '-' if chars.get(i + 1) == Some(&'>') => {
                toks.push((Tok::Arrow, col));
                i += 2;
            }
            '"' => {
                let mut s = String::new();
                i += 1;
                loop {
                    match chars.get(i) {
                        None => return Err(syntax(number, col, "unterminated string")),
                        Some('"') => {
                            i += 1;
                            break;
                        }
                        Some('\\') => {
                            match chars.get(i + 1) {
                                Some('"') => s.push('"'),
                                Some('\\') => s.push('\\'),
                                Some('n') => s.push('\n'),
                                _ => return Err(syntax(number, i + 1, "bad escape")),
                            }
                            i += 2;
                        }
                        Some(&ch) => {
                            s.push(ch);
                            i += 1;
                        }
                    }
                }
                toks.push((Tok::Str(s), col));
            }
            c if c.is_ascii_digit() || c == '-' || c == '.' => {
                let start = i;
                if c == '-' {
                    i += 1;
                }
                let mut float = false;
                while i < chars.len() {
                    let ch = chars[i];
                    if ch.is_ascii_digit() {
                        i += 1;
                    } else if ch == '.' && !float {
                        float = true;
                        i += 1;
                    } else if ch == 'e' || ch == 'E' {
                        float = true;
                        i += 1;
                        if matches!(chars.get(i), Some('+') | Some('-')) {
                            i += 1;
                        }
                    } else {
                        break;
                    }
                }
                let lexeme: String = chars[start..i].iter().collect();
                let tok = if float {
                    lexeme.parse::<f64>().ok().map(Tok::Float)
                } else {
                    lexeme.parse::<i64>().ok().map(Tok::Int)
                };
                match tok {
                    Some(t) => toks.push((t, col)),
                    None => return Err(syntax(number, col, format!("bad number `{lexeme}`"))),
                }
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                toks.push((Tok::Ident(chars[start..i].iter().collect()), col));
            }
            other => return Err(syntax(number, col, format!("unexpected character `{other}`"))),
        }
    }
    Ok(Line {
        number,
        toks,
        end_col: chars.len() + 1,
    })
}

struct Cursor<'a> {
    line: &'a Line,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(line: &'a Line) -> Self {
        Cursor { line, pos: 0 }
    }

    fn peek(&self) -> Option<&'a Tok> {
        self.line.toks.get(self.pos).map(|(t, _)| t)
    }

    fn col(&self) -> usize {
        self.line
            .toks
            .get(self.pos)
            .map(|(_, c)| *c)
            .unwrap_or(self.line.end_col)
    }

    fn err(&self, message: impl Into<String>) -> ParseError {
        syntax(self.line.number, self.col(), message)
    }

    fn next(&mut self) -> Option<&'a Tok> {
        let t = self.peek();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok) -> Result<(), ParseError> {
        match self.peek() {
            Some(t) if *t == want => {
                self.pos += 1;
                Ok(())
            }
            Some(t) => Err(self.err(format!("expected {}, found {}", want.describe(), t.describe()))),
            None => Err(self.err(format!("expected {}, found end of line", want.describe()))),
        }
    }

    fn ident(&mut self) -> Result<&'a str, ParseError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                self.pos += 1;
                Ok(s)
            }
            Some(t) => Err(self.err(format!("expected identifier, found {}", t.describe()))),
            None => Err(self.err("expected identifier, found end of line")),
        }
    }

    fn eat(&mut self, want: &Tok) -> bool {
        if self.peek() == Some(want) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn finish(&self) -> Result<(), ParseError> {
        match self.peek() {
            None => Ok(()),
            Some(t) => Err(self.err(format!("unexpected {}", t.describe()))),
        }
    }

    fn number(&mut self) -> Result<f64, ParseError> {
        match self.next() {
            Some(Tok::Int(i)) => Ok(*i as f64),
            Some(Tok::Float(f)) => Ok(*f),
            _ => {
                self.pos = self.pos.saturating_sub(1);
                Err(self.err("expected number"))
            }
        }
    }

    /// `( a, b, ... )` of identifiers; may be empty.
    fn ident_list(&mut self) -> Result<Vec<String>, ParseError> {
        self.expect(Tok::LParen)?;
        let mut out = Vec::new();
        if self.eat(&Tok::RParen) {
            return Ok(out);
        }
        loop {
            out.push(self.ident()?.to_string());
            if self.eat(&Tok::RParen) {
                return Ok(out);
            }
            self.expect(Tok::Comma)?;
        }
    }

    fn atom(&mut self) -> Result<Atom, ParseError> {
        match self.next() {
            Some(Tok::Ident(s)) if s == "Z" => {
                self.expect(Tok::Dot)?;
                Ok(Atom::ZKey(self.ident()?.to_string()))
            }
            Some(Tok::Ident(s)) => Ok(Atom::Var(s.clone())),
            Some(Tok::Int(i)) => Ok(Atom::Int(*i)),
            Some(Tok::Float(f)) => Ok(Atom::Float(*f)),
            Some(t) => {
                self.pos -= 1;
                Err(self.err(format!("expected operand, found {}", t.describe())))
            }
            None => Err(self.err("expected operand, found end of line")),
        }
    }
}

/// Decl shared by `unit` and `child` lines: `Name(ins) -> (outs) "req"`.
fn parse_decl(c: &mut Cursor) -> Result<UnitDecl, ParseError> {
    let name = c.ident()?.to_string();
    let inputs = c.ident_list()?;
    c.expect(Tok::Arrow)?;
    let outputs = c.ident_list()?;
    let requirements = match c.peek() {
        Some(Tok::Str(s)) => {
            c.pos += 1;
            s.clone()
        }
        _ => String::new(),
    };
    Ok(UnitDecl {
        name,
        requirements,
        inputs,
        outputs,
    })
}

/// Per-section binding state used to enforce single assignment and scoping.
#[derive(Default)]
struct Scope {
    locals: HashSet<String>,
    params: HashMap<String, Vec<Dim>>,
    children: HashSet<String>,
    exports: HashSet<String>,
    output_bound: bool,
}

impl Scope {
    fn bound(&self, name: &str) -> bool {
        name == "X" || self.locals.contains(name) || self.params.contains_key(name)
    }

    fn bind(&mut self, name: &str, line: usize) -> Result<(), ParseError> {
        if self.bound(name) || !is_local_name(name) {
            return Err(ParseError::Rebinding {
                name: name.to_string(),
                line,
            });
        }
        self.locals.insert(name.to_string());
        Ok(())
    }

    /// Checks an atom used where an activation tensor is required.
    fn tensor(&self, atom: &Atom, op: &str, position: usize, line: usize) -> Result<(), ParseError> {
        match atom {
            Atom::ZKey(_) => Ok(()),
            Atom::Var(v) if self.params.contains_key(v) => Err(ParseError::BadArgument {
                op: op.to_string(),
                position,
                message: format!("parameter `{v}` used as an activation"),
                line,
            }),
            Atom::Var(v) if self.bound(v) => Ok(()),
            Atom::Var(v) => Err(ParseError::UnboundVariable {
                name: v.clone(),
                line,
            }),
            Atom::Int(_) | Atom::Float(_) => Err(ParseError::BadArgument {
                op: op.to_string(),
                position,
                message: "literal where an activation is required".into(),
                line,
            }),
        }
    }
}

fn check_args(
    op: PrimOp,
    args: &[Atom],
    scope: &Scope,
    line: usize,
) -> Result<(), ParseError> {
    let sig = op.signature();
    if sig.len() != args.len() {
        return Err(ParseError::Arity {
            op: op.name().to_string(),
            expected: sig.len(),
            found: args.len(),
            line,
        });
    }
    let bad = |position: usize, message: &str| ParseError::BadArgument {
        op: op.name().to_string(),
        position,
        message: message.to_string(),
        line,
    };
    for (i, (kind, atom)) in sig.iter().zip(args).enumerate() {
        let position = i + 1;
        match kind {
            ArgKind::Tensor => scope.tensor(atom, op.name(), position, line)?,
            ArgKind::Param => match atom {
                Atom::Var(v) if scope.params.contains_key(v) => {}
                Atom::Var(v) if !scope.bound(v) => {
                    return Err(ParseError::UnboundVariable {
                        name: v.clone(),
                        line,
                    })
                }
                _ => return Err(bad(position, "expected a declared parameter")),
            },
            ArgKind::Scalar => match atom {
                Atom::Int(_) | Atom::Float(_) => {}
                Atom::Var(v) if scope.params.contains_key(v) => {}
                Atom::Var(v) if !scope.bound(v) => {
                    return Err(ParseError::UnboundVariable {
                        name: v.clone(),
                        line,
                    })
                }
                _ => return Err(bad(position, "expected a literal or a [1] parameter")),
            },
            ArgKind::Offset => match atom {
                Atom::Int(k) if *k >= 1 => {}
                _ => return Err(bad(position, "expected an integer offset >= 1")),
            },
        }
    }
    Ok(())
}

fn parse_param(c: &mut Cursor) -> Result<ParamDecl, ParseError> {
    let name = c.ident()?.to_string();
    c.expect(Tok::LBracket)?;
    let mut shape = Vec::new();
    loop {
        match c.next() {
            Some(Tok::Ident(s)) if s == "D" => shape.push(Dim::Model),
            Some(Tok::Int(n)) if *n >= 1 => shape.push(Dim::Fixed(*n as usize)),
            _ => {
                c.pos = c.pos.saturating_sub(1);
                return Err(c.err("expected `D` or a positive dimension"));
            }
        }
        if c.eat(&Tok::RBracket) {
            break;
        }
        c.expect(Tok::Comma)?;
    }
    c.expect(Tok::Eq)?;
    let init = match c.ident()? {
        "zeros" => Init::Zeros,
        "uniform" => {
            c.expect(Tok::LParen)?;
            let lo = c.number()?;
            c.expect(Tok::Comma)?;
            let hi = c.number()?;
            c.expect(Tok::RParen)?;
            Init::Uniform(lo, hi)
        }
        other => {
            c.pos -= 1;
            return Err(c.err(format!("unknown initializer `{other}`")));
        }
    };
    Ok(ParamDecl { name, shape, init })
}

fn parse_statement(line: &Line, scope: &mut Scope) -> Result<Stmt, ParseError> {
    let n = line.number;
    let mut c = Cursor::new(line);
    let head = c.ident()?;
    let stmt = match head {
        "param" => {
            let p = parse_param(&mut c)?;
            if scope.bound(&p.name) || !is_local_name(&p.name) {
                return Err(ParseError::Rebinding { name: p.name, line: n });
            }
            scope.params.insert(p.name.clone(), p.shape.clone());
            Stmt::Param(p)
        }
        "child" => {
            let decl = parse_decl(&mut c)?;
            if !scope.children.insert(decl.name.clone()) {
                return Err(ParseError::Rebinding { name: decl.name, line: n });
            }
            Stmt::Child(decl)
        }
        "export" => {
            let key = c.ident()?.to_string();
            c.expect(Tok::Eq)?;
            let value = c.atom()?;
            scope.tensor(&value, "export", 1, n)?;
            if !scope.exports.insert(key.clone()) {
                return Err(ParseError::Rebinding { name: format!("Z.{key}"), line: n });
            }
            Stmt::Export { key, value }
        }
        "Y" => {
            c.expect(Tok::Eq)?;
            let value = c.atom()?;
            scope.tensor(&value, "Y", 1, n)?;
            if scope.output_bound {
                return Err(ParseError::Rebinding { name: "Y".into(), line: n });
            }
            scope.output_bound = true;
            Stmt::Output(value)
        }
        "unit" | "end" | "placeholder" | "call" | "protected" => {
            c.pos = 0;
            return Err(c.err(format!("unexpected keyword `{head}`")));
        }
        target => {
            let target = target.to_string();
            c.expect(Tok::Eq)?;
            let name = c.ident()?;
            let expr = if name == "call" {
                let unit = c.ident()?.to_string();
                c.expect(Tok::LParen)?;
                let input = c.atom()?;
                scope.tensor(&input, &unit, 1, n)?;
                let mut bindings: Vec<(String, Atom)> = Vec::new();
                while c.eat(&Tok::Comma) {
                    let key = c.ident()?.to_string();
                    c.expect(Tok::Eq)?;
                    let value = c.atom()?;
                    scope.tensor(&value, &unit, bindings.len() + 2, n)?;
                    if bindings.iter().any(|(k, _)| *k == key) {
                        return Err(ParseError::Rebinding { name: key, line: n });
                    }
                    bindings.push((key, value));
                }
                c.expect(Tok::RParen)?;
                Expr::Call { unit, input, bindings }
            } else {
                let Some(op) = PrimOp::from_name(name) else {
                    return Err(ParseError::UnknownOp {
                        op: name.to_string(),
                        line: n,
                    });
                };
                c.expect(Tok::LParen)?;
                let mut args = Vec::new();
                if !c.eat(&Tok::RParen) {
                    loop {
                        args.push(c.atom()?);
                        if c.eat(&Tok::RParen) {
                            break;
                        }
                        c.expect(Tok::Comma)?;
                    }
                }
                check_args(op, &args, scope, n)?;
                Expr::Op { op, args }
            };
            c.finish()?;
            scope.bind(&target, n)?;
            return Ok(Stmt::Assign { target, expr });
        }
    };
    c.finish()?;
    Ok(stmt)
}

fn parse_body(lines: &[Line], section: &str) -> Result<SectionBody, ParseError> {
    if lines.len() == 1 && matches!(lines[0].toks.as_slice(), [(Tok::Ident(s), _)] if s == "placeholder")
    {
        return Ok(SectionBody::Placeholder);
    }
    let mut scope = Scope::default();
    let mut stmts = Vec::with_capacity(lines.len());
    for line in lines {
        stmts.push(parse_statement(line, &mut scope)?);
    }
    if !scope.output_bound {
        return Err(ParseError::MissingOutput {
            section: section.to_string(),
        });
    }
    Ok(SectionBody::Statements(stmts))
}

fn is_keyword_line(line: &Line, kw: &str) -> bool {
    matches!(line.toks.first(), Some((Tok::Ident(s), _)) if s == kw)
}

/// Parses DSL source into a program.
pub fn parse(text: &str) -> Result<BlockProgram, ParseError> {
    let mut lines = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = lex_line(i + 1, raw)?;
        if !line.toks.is_empty() {
            lines.push(line);
        }
    }
    if lines.is_empty() {
        return Err(syntax(1, 1, "empty program"));
    }
    if !is_keyword_line(&lines[0], "unit") {
        for line in &lines {
            if is_keyword_line(line, "unit") || is_keyword_line(line, "end") {
                return Err(syntax(line.number, 1, "unit sections cannot follow a bare body"));
            }
        }
        let body = parse_body(&lines, "<anonymous>")?;
        return Ok(BlockProgram {
            sections: vec![Section { header: None, body }],
        });
    }

    let mut sections: Vec<Section> = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        let line = &lines[i];
        if !is_keyword_line(line, "unit") {
            return Err(syntax(line.number, 1, "expected `unit`"));
        }
        let mut c = Cursor::new(line);
        c.pos = 1;
        let decl = parse_decl(&mut c)?;
        let protected = match c.peek() {
            Some(Tok::Ident(s)) if s == "protected" => {
                c.pos += 1;
                true
            }
            _ => false,
        };
        c.finish()?;
        if !is_identifier(&decl.name) {
            return Err(syntax(line.number, 6, "bad unit name"));
        }
        if sections.iter().any(|s| s.name() == Some(decl.name.as_str())) {
            return Err(ParseError::Rebinding {
                name: decl.name,
                line: line.number,
            });
        }
        let start = i + 1;
        let mut end = start;
        while end < lines.len() && !is_keyword_line(&lines[end], "end") {
            if is_keyword_line(&lines[end], "unit") {
                return Err(syntax(lines[end].number, 1, "nested `unit` (missing `end`?)"));
            }
            end += 1;
        }
        if end == lines.len() {
            return Err(syntax(line.number, 1, format!("unit `{}` has no `end`", decl.name)));
        }
        Cursor { line: &lines[end], pos: 1 }.finish()?;
        if start == end {
            return Err(ParseError::MissingOutput { section: decl.name });
        }
        let body = parse_body(&lines[start..end], &decl.name)?;
        sections.push(Section {
            header: Some(SectionHeader { decl, protected }),
            body,
        });
        i = end + 1;
    }
    Ok(BlockProgram { sections })
}
