//! Expression AST for densities, functionals, scaling rules and schedules.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Ident(String),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    If {
        cond: Box<Expr>,
        then: Box<Expr>,
        els: Box<Expr>,
    },
    Call(String, Vec<Expr>),
    Vector(Vec<Expr>),
    /// 1-based component access `name[i]`.
    Index(String, usize),
}

impl Expr {
    /// Operator precedence for the pretty printer; higher binds tighter.
    fn prec(&self) -> u8 {
        match self {
            Expr::If { .. } => 0,
            Expr::Binary(op, _, _) => match op {
                BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge | BinOp::Eq | BinOp::Ne => 1,
                BinOp::Add | BinOp::Sub => 2,
                BinOp::Mul | BinOp::Div => 3,
                BinOp::Pow => 5,
            },
            Expr::Neg(_) => 4,
            _ => 6,
        }
    }

    fn fmt_with(&self, f: &mut std::fmt::Formatter<'_>, parent_prec: u8) -> std::fmt::Result {
        let p = self.prec();
        let need = p < parent_prec;
        if need {
            write!(f, "(")?;
        }
        match self {
            Expr::Num(v) => write!(f, "{v}")?,
            Expr::Ident(s) => write!(f, "{s}")?,
            Expr::Neg(e) => {
                write!(f, "-")?;
                e.fmt_with(f, p + 1)?;
            }
            Expr::Binary(op, a, b) => {
                // ^ is right-associative, everything else left
                let (lp, rp) = if *op == BinOp::Pow { (p + 1, p) } else { (p, p + 1) };
                a.fmt_with(f, lp)?;
                write!(f, " {} ", op.symbol())?;
                b.fmt_with(f, rp)?;
            }
            Expr::If { cond, then, els } => {
                write!(f, "if ")?;
                cond.fmt_with(f, 1)?;
                write!(f, " then ")?;
                then.fmt_with(f, 1)?;
                write!(f, " else ")?;
                els.fmt_with(f, 0)?;
            }
            Expr::Call(name, args) => {
                write!(f, "{name}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    a.fmt_with(f, 0)?;
                }
                write!(f, ")")?;
            }
            Expr::Vector(items) => {
                write!(f, "[")?;
                for (i, a) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    a.fmt_with(f, 0)?;
                }
                write!(f, "]")?;
            }
            Expr::Index(name, i) => write!(f, "{name}[{i}]")?,
        }
        if need {
            write!(f, ")")?;
        }
        Ok(())
    }
}

impl std::fmt::Display for Expr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.fmt_with(f, 0)
    }
}
