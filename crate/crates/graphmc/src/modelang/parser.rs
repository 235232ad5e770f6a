//! Recursive-descent parser for expressions and model files.

use crate::error::{Error, Pos, Result};
use crate::modelang::ast::{BinOp, Expr};
use crate::modelang::file::{
    DataBinding, DensityDecl, EtaParam, ModelFile, NodeDecl, ParaValue, ReplicateDirective,
};
use crate::modelang::lexer::{lex, Tok, Token};

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn new(text: &str) -> Result<Self> {
        Ok(Self {
            toks: lex(text)?,
            pos: 0,
        })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn here(&self) -> Pos {
        self.toks[self.pos].pos
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::Syntax {
            pos: self.here(),
            msg: msg.into(),
        })
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<()> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            self.err(format!("expected {what}, found {:?}", self.peek()))
        }
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.bump();
            true
        } else {
            false
        }
    }

    fn ident(&mut self, what: &str) -> Result<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            other => self.err(format!("expected {what}, found {other:?}")),
        }
    }

    fn number(&mut self, what: &str) -> Result<f64> {
        let neg = self.eat(&Tok::Minus);
        match *self.peek() {
            Tok::Num(v) => {
                self.bump();
                Ok(if neg { -v } else { v })
            }
            ref other => self.err(format!("expected {what}, found {other:?}")),
        }
    }

    fn usize_lit(&mut self, what: &str) -> Result<usize> {
        let v = self.number(what)?;
        if v < 0.0 || v.fract() != 0.0 {
            return self.err(format!("{what} must be a nonnegative integer"));
        }
        Ok(v as usize)
    }

    /// String literal, or a bare identifier where a name is expected.
    fn name_ref(&mut self, what: &str) -> Result<String> {
        match self.peek().clone() {
            Tok::Str(s) => {
                self.bump();
                Ok(s)
            }
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            other => self.err(format!("expected {what}, found {other:?}")),
        }
    }

    // ---- expressions ----

    fn expr(&mut self) -> Result<Expr> {
        if self.peek() == &Tok::Ident("if".into()) {
            self.bump();
            let cond = self.cmp()?;
            match self.peek() {
                Tok::Ident(s) if s == "then" => {
                    self.bump();
                }
                _ => return self.err("expected `then`"),
            }
            let then = self.cmp()?;
            match self.peek() {
                Tok::Ident(s) if s == "else" => {
                    self.bump();
                }
                _ => return self.err("expected `else`"),
            }
            let els = self.expr()?;
            return Ok(Expr::If {
                cond: Box::new(cond),
                then: Box::new(then),
                els: Box::new(els),
            });
        }
        self.cmp()
    }

    fn cmp(&mut self) -> Result<Expr> {
        let mut lhs = self.addsub()?;
        loop {
            let op = match self.peek() {
                Tok::Lt => BinOp::Lt,
                Tok::Le => BinOp::Le,
                Tok::Gt => BinOp::Gt,
                Tok::Ge => BinOp::Ge,
                Tok::EqEq => BinOp::Eq,
                Tok::Ne => BinOp::Ne,
                _ => break,
            };
            self.bump();
            let rhs = self.addsub()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn addsub(&mut self) -> Result<Expr> {
        let mut lhs = self.muldiv()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => break,
            };
            self.bump();
            let rhs = self.muldiv()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn muldiv(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => break,
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat(&Tok::Minus) {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.eat(&Tok::Caret) {
            // right-associative; exponent may start with unary minus
            let exp = self.unary_power()?;
            return Ok(Expr::Binary(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn unary_power(&mut self) -> Result<Expr> {
        if self.eat(&Tok::Minus) {
            return Ok(Expr::Neg(Box::new(self.unary_power()?)));
        }
        self.power()
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::Num(v))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::LBracket => {
                self.bump();
                let mut items = Vec::new();
                if !self.eat(&Tok::RBracket) {
                    loop {
                        items.push(self.expr()?);
                        if self.eat(&Tok::Comma) {
                            continue;
                        }
                        self.expect(Tok::RBracket, "`]`")?;
                        break;
                    }
                }
                Ok(Expr::Vector(items))
            }
            Tok::Ident(name) => {
                if name == "if" || name == "then" || name == "else" {
                    return self.err(format!("unexpected keyword `{name}`"));
                }
                self.bump();
                if self.eat(&Tok::LParen) {
                    let mut args = Vec::new();
                    if !self.eat(&Tok::RParen) {
                        loop {
                            args.push(self.expr()?);
                            if self.eat(&Tok::Comma) {
                                continue;
                            }
                            self.expect(Tok::RParen, "`)`")?;
                            break;
                        }
                    }
                    Ok(Expr::Call(name, args))
                } else if self.eat(&Tok::LBracket) {
                    let i = self.usize_lit("component index")?;
                    if i == 0 {
                        return self.err("component indices are 1-based");
                    }
                    self.expect(Tok::RBracket, "`]`")?;
                    Ok(Expr::Index(name, i))
                } else {
                    Ok(Expr::Ident(name))
                }
            }
            other => self.err(format!("expected an expression, found {other:?}")),
        }
    }

    // ---- model files ----

    fn model_file(&mut self) -> Result<ModelFile> {
        let mut mf = ModelFile::default();
        while self.peek() != &Tok::Eof {
            let section = self.ident("a section keyword")?;
            match section.as_str() {
                "const" => self.const_block(&mut mf)?,
                "model" => self.model_block(&mut mf)?,
                "data" => self.data_stmt(&mut mf)?,
                "repeat" => self.repeat_stmt(&mut mf)?,
                "functional" => {
                    self.eat(&Tok::Assign);
                    mf.functional = Some(self.expr()?);
                }
                "blocks" => self.blocks_stmt(&mut mf)?,
                "para" => {
                    if self.eat(&Tok::Dot) {
                        let key = self.ident("a parameter name")?;
                        self.expect(Tok::Assign, "`=`")?;
                        let val = self.para_value()?;
                        self.set_para(&mut mf, &key, val)?;
                    } else {
                        self.para_block(&mut mf)?;
                    }
                }
                other => {
                    return Err(Error::Syntax {
                        pos: self.toks[self.pos - 1].pos,
                        msg: format!("unknown section `{other}`"),
                    })
                }
            }
        }
        Ok(mf)
    }

    fn const_block(&mut self, mf: &mut ModelFile) -> Result<()> {
        self.expect(Tok::LBrace, "`{`")?;
        while !self.eat(&Tok::RBrace) {
            let name = self.ident("a constant name")?;
            self.expect(Tok::Assign, "`=`")?;
            let pos = self.here();
            let e = self.expr()?;
            // constants may refer to earlier constants
            let mut env = crate::modelang::eval::MapEnv::new();
            for (n, v) in &mf.consts {
                env.set(n, *v);
            }
            let v = crate::modelang::eval::eval_scalar(&e, &env).map_err(|err| Error::Syntax {
                pos,
                msg: format!("constant `{name}` is not a fixed number: {err}"),
            })?;
            if mf.consts.iter().any(|(n, _)| n == &name) {
                return Err(Error::DuplicateName(name));
            }
            mf.consts.push((name, v));
            self.eat(&Tok::Comma);
        }
        Ok(())
    }

    fn model_block(&mut self, mf: &mut ModelFile) -> Result<()> {
        self.expect(Tok::LBrace, "`{`")?;
        while !self.eat(&Tok::RBrace) {
            let name = self.ident("a node name")?;
            self.expect(Tok::LBrace, "`{`")?;
            let mut decl = NodeDecl {
                name,
                parents: Vec::new(),
                density: None,
                init_val: None,
                dim: None,
            };
            while !self.eat(&Tok::RBrace) {
                let field = self.ident("a node field")?;
                self.expect(Tok::Assign, "`=`")?;
                match field.as_str() {
                    "parents" => {
                        self.expect(Tok::LBracket, "`[`")?;
                        while !self.eat(&Tok::RBracket) {
                            decl.parents.push(self.name_ref("a parent name")?);
                            self.eat(&Tok::Comma);
                        }
                    }
                    "density" => {
                        decl.density = Some(match self.peek().clone() {
                            Tok::Str(s) => {
                                self.bump();
                                DensityDecl::Builtin(s)
                            }
                            _ => DensityDecl::Custom(self.expr()?),
                        });
                    }
                    "init_val" => {
                        decl.init_val = Some(match self.peek() {
                            Tok::LBracket => {
                                self.bump();
                                let mut vals = Vec::new();
                                while !self.eat(&Tok::RBracket) {
                                    vals.push(self.number("a number")?);
                                    self.eat(&Tok::Comma);
                                }
                                vals
                            }
                            _ => vec![self.number("a number")?],
                        });
                    }
                    "dim" => {
                        let d = self.usize_lit("dimension")?;
                        if d == 0 {
                            return self.err("dim must be positive");
                        }
                        decl.dim = Some(d);
                    }
                    other => return self.err(format!("unknown node field `{other}`")),
                }
                self.eat(&Tok::Comma);
            }
            if mf.nodes.iter().any(|n| n.name == decl.name) {
                return Err(Error::DuplicateName(decl.name));
            }
            mf.nodes.push(decl);
            self.eat(&Tok::Comma);
        }
        Ok(())
    }

    fn data_stmt(&mut self, mf: &mut ModelFile) -> Result<()> {
        let node = self.name_ref("a node name")?;
        match self.peek() {
            Tok::Ident(s) if s == "from" => {
                self.bump();
            }
            _ => return self.err("expected `from`"),
        }
        let path = match self.peek().clone() {
            Tok::Str(s) => {
                self.bump();
                s
            }
            _ => return self.err("expected a quoted file path"),
        };
        let column = match self.peek() {
            Tok::Ident(s) if s == "column" => {
                self.bump();
                Some(self.usize_lit("column index")?)
            }
            _ => None,
        };
        mf.data_bindings.push(DataBinding { node, path, column });
        Ok(())
    }

    fn repeat_stmt(&mut self, mf: &mut ModelFile) -> Result<()> {
        self.expect(Tok::LBracket, "`[`")?;
        let mut block_nodes = Vec::new();
        while !self.eat(&Tok::RBracket) {
            block_nodes.push(self.name_ref("a node name")?);
            self.eat(&Tok::Comma);
        }
        let count = match self.peek() {
            Tok::Ident(s) if s == "count" => {
                self.bump();
                Some(self.usize_lit("replication count")?)
            }
            _ => None,
        };
        mf.replications.push(ReplicateDirective { block_nodes, count });
        Ok(())
    }

    fn blocks_stmt(&mut self, mf: &mut ModelFile) -> Result<()> {
        self.expect(Tok::LBrace, "`{`")?;
        let mut blocks = Vec::new();
        while !self.eat(&Tok::RBrace) {
            self.expect(Tok::LBracket, "`[`")?;
            let mut members = Vec::new();
            while !self.eat(&Tok::RBracket) {
                let name = self.name_ref("a block member")?;
                let member = if self.eat(&Tok::LBracket) {
                    let i = self.usize_lit("component index")?;
                    self.expect(Tok::RBracket, "`]`")?;
                    format!("{name}[{i}]")
                } else {
                    name
                };
                members.push(member);
                self.eat(&Tok::Comma);
            }
            blocks.push(members);
            self.eat(&Tok::Comma);
        }
        mf.blocks = Some(blocks);
        Ok(())
    }

    fn para_block(&mut self, mf: &mut ModelFile) -> Result<()> {
        self.expect(Tok::LBrace, "`{`")?;
        while !self.eat(&Tok::RBrace) {
            let key = self.ident("a parameter name")?;
            self.expect(Tok::Assign, "`=`")?;
            let val = self.para_value()?;
            self.set_para(mf, &key, val)?;
            self.eat(&Tok::Comma);
        }
        Ok(())
    }

    fn para_value(&mut self) -> Result<ParaValue> {
        Ok(match self.peek().clone() {
            Tok::Str(s) => {
                self.bump();
                ParaValue::Str(s)
            }
            _ => ParaValue::Expr(self.expr()?),
        })
    }

    fn set_para(&mut self, mf: &mut ModelFile, key: &str, val: ParaValue) -> Result<()> {
        let p = &mut mf.params;
        let num = |v: &ParaValue| -> Result<f64> {
            match v {
                ParaValue::Expr(e) => {
                    crate::modelang::eval::eval_scalar(e, &crate::modelang::eval::MapEnv::new())
                }
                ParaValue::Str(s) => Err(Error::Evaluation(format!(
                    "parameter `{key}` expects a number, got string \"{s}\""
                ))),
            }
        };
        let string = |v: &ParaValue| -> Result<String> {
            match v {
                ParaValue::Str(s) => Ok(s.clone()),
                ParaValue::Expr(_) => Err(Error::Evaluation(format!(
                    "parameter `{key}` expects a string"
                ))),
            }
        };
        let uint = |v: &ParaValue| -> Result<u64> {
            let x = num(v)?;
            if x < 0.0 || x.fract() != 0.0 {
                return Err(Error::Evaluation(format!(
                    "parameter `{key}` must be a nonnegative integer"
                )));
            }
            Ok(x as u64)
        };
        let expr = |v: ParaValue| -> Result<Expr> {
            match v {
                ParaValue::Expr(e) => Ok(e),
                ParaValue::Str(_) => Err(Error::Evaluation(format!(
                    "parameter `{key}` expects an expression"
                ))),
            }
        };
        match key {
            "niter" => p.niter = Some(uint(&val)?),
            "nburn" => p.nburn = Some(uint(&val)?),
            "algorithm" => p.algorithm = Some(string(&val)?),
            "strategy" => p.strategy = Some(string(&val)?),
            "proposal" => p.proposal = Some(string(&val)?),
            "dof" => p.dof = Some(num(&val)?),
            "dr" => p.dr = Some(num(&val)?),
            "mix" => p.mix = Some(num(&val)?),
            "mix_seq" => p.mix_seq = Some(expr(val)?),
            "thin" => p.thin = Some(uint(&val)?),
            "seed" => p.seed = Some(uint(&val)?),
            "outfile" => p.outfile = Some(string(&val)?),
            "outformat" => p.outformat = Some(string(&val)?),
            "target_alpha" => p.target_alpha = Some(num(&val)?),
            "theta0" => p.theta0 = Some(num(&val)?),
            "eta" => {
                p.eta = Some(match &val {
                    ParaValue::Str(s) => EtaParam::Named(s.clone()),
                    ParaValue::Expr(_) => EtaParam::Constant(num(&val)?),
                })
            }
            "eta_gamma" => p.eta_gamma = Some(num(&val)?),
            "scaling_adapt" => {
                match &val {
                    ParaValue::Str(s) if s == "amcmc" => p.scaling_amcmc = true,
                    _ => p.scaling_adapt = Some(expr(val)?),
                };
            }
            other => return Err(Error::UnknownParameter(other.into())),
        }
        Ok(())
    }
}

/// Parse a single expression; the whole input must be consumed.
pub fn parse_expr(text: &str) -> Result<Expr> {
    let mut p = Parser::new(text)?;
    let e = p.expr()?;
    if p.peek() != &Tok::Eof {
        return p.err("trailing input after expression");
    }
    Ok(e)
}

/// Parse a complete model file.
pub fn parse_model(text: &str) -> Result<ModelFile> {
    let mut p = Parser::new(text)?;
    p.model_file()
}
