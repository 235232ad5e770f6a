//! Parsed model files: sections, parameter table, merging and pretty-printing.

use crate::error::{Error, Result};
use crate::modelang::ast::Expr;

#[derive(Debug, Clone, PartialEq)]
pub enum DensityDecl {
    /// Built-in family by name; the parents supply the parameters in order.
    Builtin(String),
    /// Expression over parents, constants and the node's own value `name_`.
    Custom(Expr),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeDecl {
    pub name: String,
    pub parents: Vec<String>,
    pub density: Option<DensityDecl>,
    pub init_val: Option<Vec<f64>>,
    pub dim: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataBinding {
    pub node: String,
    pub path: String,
    /// 1-based CSV column; defaults to the first column.
    pub column: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateDirective {
    pub block_nodes: Vec<String>,
    /// Explicit copy count; inferred from bound data when absent.
    pub count: Option<usize>,
}

/// Right-hand side of a `para` assignment before interpretation.
#[derive(Debug, Clone, PartialEq)]
pub enum ParaValue {
    Str(String),
    Expr(Expr),
}

#[derive(Debug, Clone, PartialEq)]
pub enum EtaParam {
    Named(String),
    Constant(f64),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Params {
    pub niter: Option<u64>,
    pub nburn: Option<u64>,
    pub algorithm: Option<String>,
    pub strategy: Option<String>,
    pub proposal: Option<String>,
    pub dof: Option<f64>,
    pub dr: Option<f64>,
    pub mix: Option<f64>,
    pub mix_seq: Option<Expr>,
    pub thin: Option<u64>,
    pub seed: Option<u64>,
    pub outfile: Option<String>,
    pub outformat: Option<String>,
    pub target_alpha: Option<f64>,
    pub theta0: Option<f64>,
    pub eta: Option<EtaParam>,
    pub eta_gamma: Option<f64>,
    pub scaling_adapt: Option<Expr>,
    pub scaling_amcmc: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelFile {
    pub consts: Vec<(String, f64)>,
    pub nodes: Vec<NodeDecl>,
    pub data_bindings: Vec<DataBinding>,
    pub replications: Vec<ReplicateDirective>,
    /// Explicit blocks as member references (`name` or `name[i]`).
    pub blocks: Option<Vec<Vec<String>>>,
    pub functional: Option<Expr>,
    pub params: Params,
}

/// Later fragments override or extend earlier ones field by field. A node
/// redeclared with different parents is a conflict.
pub fn merge_overrides(base: ModelFile, fragments: Vec<ModelFile>) -> Result<ModelFile> {
    let mut out = base;
    for frag in fragments {
        for (name, v) in frag.consts {
            if let Some(slot) = out.consts.iter_mut().find(|(n, _)| *n == name) {
                slot.1 = v;
            } else {
                out.consts.push((name, v));
            }
        }
        for decl in frag.nodes {
            if let Some(existing) = out.nodes.iter_mut().find(|n| n.name == decl.name) {
                if existing.parents != decl.parents && !decl.parents.is_empty() {
                    return Err(Error::Model(format!(
                        "node `{}` redeclared with different parents",
                        decl.name
                    )));
                }
                if decl.density.is_some() {
                    existing.density = decl.density;
                }
                if decl.init_val.is_some() {
                    existing.init_val = decl.init_val;
                }
                if decl.dim.is_some() {
                    existing.dim = decl.dim;
                }
            } else {
                out.nodes.push(decl);
            }
        }
        out.data_bindings.extend(frag.data_bindings);
        out.replications.extend(frag.replications);
        if frag.blocks.is_some() {
            out.blocks = frag.blocks;
        }
        if frag.functional.is_some() {
            out.functional = frag.functional;
        }
        merge_params(&mut out.params, frag.params);
    }
    Ok(out)
}

fn merge_params(base: &mut Params, frag: Params) {
    macro_rules! take {
        ($($field:ident),*) => {
            $(if frag.$field.is_some() { base.$field = frag.$field; })*
        };
    }
    take!(
        niter, nburn, algorithm, strategy, proposal, dof, dr, mix, mix_seq, thin, seed, outfile,
        outformat, target_alpha, theta0, eta, eta_gamma
    );
    if frag.scaling_adapt.is_some() {
        base.scaling_adapt = frag.scaling_adapt;
        base.scaling_amcmc = false;
    }
    if frag.scaling_amcmc {
        base.scaling_amcmc = true;
        base.scaling_adapt = None;
    }
}

impl std::fmt::Display for ModelFile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if !self.consts.is_empty() {
            writeln!(f, "const {{")?;
            for (n, v) in &self.consts {
                writeln!(f, "  {n} = {v}")?;
            }
            writeln!(f, "}}")?;
        }
        if !self.nodes.is_empty() {
            writeln!(f, "model {{")?;
            for n in &self.nodes {
                write!(f, "  {} {{ ", n.name)?;
                let mut first = true;
                let mut sep = |f: &mut std::fmt::Formatter<'_>| -> std::fmt::Result {
                    if !first {
                        write!(f, ", ")?;
                    }
                    first = false;
                    Ok(())
                };
                if !n.parents.is_empty() {
                    sep(f)?;
                    write!(f, "parents = [")?;
                    for (i, p) in n.parents.iter().enumerate() {
                        if i > 0 {
                            write!(f, ", ")?;
                        }
                        write!(f, "\"{p}\"")?;
                    }
                    write!(f, "]")?;
                }
                if let Some(iv) = &n.init_val {
                    sep(f)?;
                    if iv.len() == 1 {
                        write!(f, "init_val = {}", iv[0])?;
                    } else {
                        write!(f, "init_val = [")?;
                        for (i, v) in iv.iter().enumerate() {
                            if i > 0 {
                                write!(f, ", ")?;
                            }
                            write!(f, "{v}")?;
                        }
                        write!(f, "]")?;
                    }
                }
                if let Some(d) = n.dim {
                    sep(f)?;
                    write!(f, "dim = {d}")?;
                }
                match &n.density {
                    Some(DensityDecl::Builtin(b)) => {
                        sep(f)?;
                        write!(f, "density = \"{b}\"")?;
                    }
                    Some(DensityDecl::Custom(e)) => {
                        sep(f)?;
                        write!(f, "density = {e}")?;
                    }
                    None => {}
                }
                writeln!(f, " }}")?;
            }
            writeln!(f, "}}")?;
        }
        for d in &self.data_bindings {
            write!(f, "data \"{}\" from \"{}\"", d.node, d.path)?;
            if let Some(c) = d.column {
                write!(f, " column {c}")?;
            }
            writeln!(f)?;
        }
        for r in &self.replications {
            write!(f, "repeat [")?;
            for (i, n) in r.block_nodes.iter().enumerate() {
                if i > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "\"{n}\"")?;
            }
            write!(f, "]")?;
            if let Some(c) = r.count {
                write!(f, " count {c}")?;
            }
            writeln!(f)?;
        }
        if let Some(blocks) = &self.blocks {
            writeln!(f, "blocks {{")?;
            for b in blocks {
                write!(f, "  [")?;
                for (i, m) in b.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{m}")?;
                }
                writeln!(f, "]")?;
            }
            writeln!(f, "}}")?;
        }
        if let Some(e) = &self.functional {
            writeln!(f, "functional {e}")?;
        }
        let p = &self.params;
        let mut lines: Vec<String> = Vec::new();
        macro_rules! num_line {
            ($($field:ident),*) => {
                $(if let Some(v) = &p.$field { lines.push(format!("{} = {v}", stringify!($field))); })*
            };
        }
        macro_rules! str_line {
            ($($field:ident),*) => {
                $(if let Some(v) = &p.$field { lines.push(format!("{} = \"{v}\"", stringify!($field))); })*
            };
        }
        num_line!(niter, nburn);
        str_line!(algorithm, strategy, proposal);
        num_line!(dof, dr, mix, thin, seed);
        if let Some(e) = &p.mix_seq {
            lines.push(format!("mix_seq = {e}"));
        }
        str_line!(outfile, outformat);
        num_line!(target_alpha, theta0, eta_gamma);
        match &p.eta {
            Some(EtaParam::Named(s)) => lines.push(format!("eta = \"{s}\"")),
            Some(EtaParam::Constant(v)) => lines.push(format!("eta = {v}")),
            None => {}
        }
        if let Some(e) = &p.scaling_adapt {
            lines.push(format!("scaling_adapt = {e}"));
        }
        if p.scaling_amcmc {
            lines.push("scaling_adapt = \"amcmc\"".into());
        }
        if !lines.is_empty() {
            writeln!(f, "para {{")?;
            for l in lines {
                writeln!(f, "  {l}")?;
            }
            writeln!(f, "}}")?;
        }
        Ok(())
    }
}
