//! The DAG graphical model: node structure, built-in distribution library,
//! blocks and Markov-blanket-restricted log-density evaluation.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::modelang::ast::Expr;
use crate::modelang::eval::{self, Env, Value};
use crate::special::{ln_gamma, LN_2PI};

pub type NodeId = usize;

/// Current values of every node, indexed by `NodeId`.
pub type ChainValues = Vec<Vec<f64>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Stochastic,
    Observed,
    Constant,
}

/// Built-in log-density families. `dnorm` is parametrized by VARIANCE, not
/// standard deviation or precision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuiltinDensity {
    DNorm,
    DExp,
    DUniform,
    DUnif,
    DGamma,
    DBeta,
    DLnorm,
    DT,
    DPois,
    DBern,
}

impl BuiltinDensity {
    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "dnorm" => Self::DNorm,
            "dexp" => Self::DExp,
            "duniform" => Self::DUniform,
            "dunif" => Self::DUnif,
            "dgamma" => Self::DGamma,
            "dbeta" => Self::DBeta,
            "dlnorm" => Self::DLnorm,
            "dt" => Self::DT,
            "dpois" => Self::DPois,
            "dbern" => Self::DBern,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::DNorm => "dnorm",
            Self::DExp => "dexp",
            Self::DUniform => "duniform",
            Self::DUnif => "dunif",
            Self::DGamma => "dgamma",
            Self::DBeta => "dbeta",
            Self::DLnorm => "dlnorm",
            Self::DT => "dt",
            Self::DPois => "dpois",
            Self::DBern => "dbern",
        }
    }

    /// Number of parameters besides the evaluation point.
    pub fn arity(self) -> usize {
        match self {
            Self::DUniform => 0,
            Self::DExp | Self::DPois | Self::DBern => 1,
            Self::DNorm | Self::DUnif | Self::DGamma | Self::DBeta | Self::DLnorm => 2,
            Self::DT => 3,
        }
    }
}

/// Log-density of a built-in family at scalar `x` with parameters `args`.
///
/// Returns −∞ outside the support; `InvalidParameter` for parameter values
/// that make the family degenerate (e.g. nonpositive variance).
pub fn builtin_logdensity(which: BuiltinDensity, x: f64, args: &[f64]) -> Result<f64> {
    if args.len() != which.arity() {
        return Err(Error::BadArity {
            name: which.name().into(),
            expected: which.arity(),
            got: args.len(),
        });
    }
    let invalid = |msg: &str| {
        Err(Error::InvalidParameter {
            name: which.name().into(),
            msg: msg.into(),
        })
    };
    Ok(match which {
        BuiltinDensity::DNorm => {
            let (mean, var) = (args[0], args[1]);
            if var <= 0.0 {
                return invalid("variance must be positive");
            }
            -0.5 * (LN_2PI + var.ln()) - (x - mean) * (x - mean) / (2.0 * var)
        }
        BuiltinDensity::DExp => {
            let rate = args[0];
            if rate <= 0.0 {
                return invalid("rate must be positive");
            }
            if x < 0.0 {
                f64::NEG_INFINITY
            } else {
                rate.ln() - rate * x
            }
        }
        BuiltinDensity::DUniform => 0.0,
        BuiltinDensity::DUnif => {
            let (a, b) = (args[0], args[1]);
            if b <= a {
                return invalid("upper bound must exceed lower bound");
            }
            if x < a || x > b {
                f64::NEG_INFINITY
            } else {
                -(b - a).ln()
            }
        }
        BuiltinDensity::DGamma => {
            let (shape, rate) = (args[0], args[1]);
            if shape <= 0.0 || rate <= 0.0 {
                return invalid("shape and rate must be positive");
            }
            if x <= 0.0 {
                f64::NEG_INFINITY
            } else {
                shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
            }
        }
        BuiltinDensity::DBeta => {
            let (a, b) = (args[0], args[1]);
            if a <= 0.0 || b <= 0.0 {
                return invalid("both shape parameters must be positive");
            }
            if x <= 0.0 || x >= 1.0 {
                f64::NEG_INFINITY
            } else {
                ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b)
                    + (a - 1.0) * x.ln()
                    + (b - 1.0) * (1.0 - x).ln()
            }
        }
        BuiltinDensity::DLnorm => {
            let (meanlog, varlog) = (args[0], args[1]);
            if varlog <= 0.0 {
                return invalid("log-scale variance must be positive");
            }
            if x <= 0.0 {
                f64::NEG_INFINITY
            } else {
                let z = x.ln() - meanlog;
                -x.ln() - 0.5 * (LN_2PI + varlog.ln()) - z * z / (2.0 * varlog)
            }
        }
        BuiltinDensity::DT => {
            let (mean, scale, dof) = (args[0], args[1], args[2]);
            if scale <= 0.0 || dof <= 0.0 {
                return invalid("scale and dof must be positive");
            }
            let z = (x - mean) / scale;
            ln_gamma((dof + 1.0) / 2.0)
                - ln_gamma(dof / 2.0)
                - 0.5 * (dof * std::f64::consts::PI).ln()
                - scale.ln()
                - 0.5 * (dof + 1.0) * (1.0 + z * z / dof).ln()
        }
        BuiltinDensity::DPois => {
            let lambda = args[0];
            if lambda <= 0.0 {
                return invalid("lambda must be positive");
            }
            if x < 0.0 || x.fract() != 0.0 {
                f64::NEG_INFINITY
            } else {
                x * lambda.ln() - lambda - ln_gamma(x + 1.0)
            }
        }
        BuiltinDensity::DBern => {
            let p = args[0];
            if !(0.0..=1.0).contains(&p) {
                return invalid("p must lie in [0,1]");
            }
            if x == 1.0 {
                p.ln()
            } else if x == 0.0 {
                (1.0 - p).ln()
            } else {
                f64::NEG_INFINITY
            }
        }
    })
}

/// How a node's conditional log-density is computed.
#[derive(Debug, Clone)]
pub enum Density {
    /// Built-in family; the parameters are the parent values in declaration order.
    Builtin(BuiltinDensity),
    /// Arbitrary expression; the node's own value is `name_`.
    Custom(Expr),
}

#[derive(Debug, Clone)]
pub struct Node {
    pub name: String,
    pub kind: NodeKind,
    pub dim: usize,
    pub parents: Vec<NodeId>,
    pub density: Option<Density>,
    /// Starting value for stochastic nodes, the fixed value otherwise.
    pub init: Vec<f64>,
}

/// Declarative input to [`build_graph`].
#[derive(Debug, Clone)]
pub struct NodeSpec {
    pub name: String,
    pub parents: Vec<String>,
    pub density: Option<Density>,
    pub init_val: Option<Vec<f64>>,
    pub dim: Option<usize>,
    /// Observed data pins the value and marks the node observed.
    pub observed: Option<Vec<f64>>,
    /// Constant value (no density).
    pub constant: Option<f64>,
}

impl NodeSpec {
    pub fn stochastic(name: &str, parents: &[&str], density: Density) -> Self {
        Self {
            name: name.into(),
            parents: parents.iter().map(|s| s.to_string()).collect(),
            density: Some(density),
            init_val: None,
            dim: None,
            observed: None,
            constant: None,
        }
    }

    pub fn observed(name: &str, parents: &[&str], density: Density, value: Vec<f64>) -> Self {
        Self {
            observed: Some(value),
            ..Self::stochastic(name, parents, density)
        }
    }

    pub fn constant(name: &str, value: f64) -> Self {
        Self {
            name: name.into(),
            parents: vec![],
            density: None,
            init_val: None,
            dim: None,
            observed: None,
            constant: Some(value),
        }
    }

    pub fn with_init(mut self, init: Vec<f64>) -> Self {
        self.init_val = Some(init);
        self
    }

    pub fn with_dim(mut self, dim: usize) -> Self {
        self.dim = Some(dim);
        self
    }
}

/// Immutable DAG built from node declarations.
#[derive(Debug, Clone)]
pub struct Graph {
    nodes: Vec<Node>,
    by_name: HashMap<String, NodeId>,
    topo_order: Vec<NodeId>,
    children: Vec<Vec<NodeId>>,
}

impl Graph {
    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn id_of(&self, name: &str) -> Option<NodeId> {
        self.by_name.get(name).copied()
    }

    pub fn topo_order(&self) -> &[NodeId] {
        &self.topo_order
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.children[id]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Fresh chain values at the declared starting point.
    pub fn initial_values(&self) -> ChainValues {
        self.nodes.iter().map(|n| n.init.clone()).collect()
    }

    /// Free scalar components in topological order, with display names.
    pub fn free_components(&self) -> Vec<(NodeId, usize, String)> {
        let mut out = Vec::new();
        for &id in &self.topo_order {
            let n = &self.nodes[id];
            if n.kind != NodeKind::Stochastic {
                continue;
            }
            for c in 0..n.dim {
                let label = if n.dim == 1 {
                    n.name.clone()
                } else {
                    format!("{}[{}]", n.name, c + 1)
                };
                out.push((id, c, label));
            }
        }
        out
    }
}

/// An environment resolving node names (and `name_` self references) against
/// the graph's current values.
pub struct GraphEnv<'a> {
    pub graph: &'a Graph,
    pub values: &'a ChainValues,
}

impl<'a> Env for GraphEnv<'a> {
    fn lookup(&self, name: &str) -> Option<Value> {
        let id = self.graph.id_of(name).or_else(|| {
            name.strip_suffix('_').and_then(|base| self.graph.id_of(base))
        })?;
        let v = &self.values[id];
        Some(if v.len() == 1 {
            Value::Scalar(v[0])
        } else {
            Value::Vector(v.clone())
        })
    }
}

/// Build a validated graph: resolves parents, checks acyclicity, computes the
/// children transpose and assigns initial values.
pub fn build_graph(specs: &[NodeSpec]) -> Result<Graph> {
    let mut by_name = HashMap::new();
    for (i, s) in specs.iter().enumerate() {
        if by_name.insert(s.name.clone(), i).is_some() {
            return Err(Error::DuplicateName(s.name.clone()));
        }
    }

    let mut parents_resolved: Vec<Vec<NodeId>> = Vec::with_capacity(specs.len());
    for s in specs {
        let mut ps = Vec::with_capacity(s.parents.len());
        for p in &s.parents {
            let &pid = by_name.get(p).ok_or_else(|| Error::UnknownParent {
                node: s.name.clone(),
                parent: p.clone(),
            })?;
            ps.push(pid);
        }
        parents_resolved.push(ps);
    }

    let topo_order = topo_sort(specs, &parents_resolved)?;

    let mut children: Vec<Vec<NodeId>> = vec![Vec::new(); specs.len()];
    for (i, ps) in parents_resolved.iter().enumerate() {
        for &p in ps {
            if !children[p].contains(&i) {
                children[p].push(i);
            }
        }
    }

    let mut nodes: Vec<Option<Node>> = vec![None; specs.len()];
    for &id in &topo_order {
        let s = &specs[id];
        let kind = if s.constant.is_some() {
            NodeKind::Constant
        } else if s.observed.is_some() {
            NodeKind::Observed
        } else {
            NodeKind::Stochastic
        };
        let dim = s
            .dim
            .or_else(|| s.observed.as_ref().map(|v| v.len()))
            .or_else(|| s.init_val.as_ref().map(|v| v.len()))
            .unwrap_or(1);
        if dim == 0 {
            return Err(Error::Model(format!("node `{}` has dimension 0", s.name)));
        }

        if let Some(Density::Builtin(b)) = &s.density {
            if s.parents.len() != b.arity() {
                return Err(Error::BadArity {
                    name: b.name().into(),
                    expected: b.arity(),
                    got: s.parents.len(),
                });
            }
        }
        if let Some(Density::Custom(e)) = &s.density {
            validate_custom_idents(e, s, &by_name, specs)?;
        }
        if kind != NodeKind::Constant && s.density.is_none() {
            return Err(Error::Model(format!("node `{}` has no density", s.name)));
        }

        let init = match (&s.constant, &s.observed, &s.init_val) {
            (Some(c), _, _) => vec![*c],
            (_, Some(v), _) => v.clone(),
            (_, _, Some(v)) => {
                if v.len() != dim {
                    return Err(Error::Model(format!(
                        "init_val of `{}` has length {}, dim is {dim}",
                        s.name,
                        v.len()
                    )));
                }
                v.clone()
            }
            _ => {
                let default = default_start(s, &parents_resolved[id], &nodes);
                vec![default; dim]
            }
        };

        nodes[id] = Some(Node {
            name: s.name.clone(),
            kind,
            dim,
            parents: parents_resolved[id].clone(),
            density: s.density.clone(),
            init,
        });
    }

    Ok(Graph {
        nodes: nodes.into_iter().map(Option::unwrap).collect(),
        by_name,
        topo_order,
        children,
    })
}

/// Family default starting point when no init_val is given: midpoint for
/// bounded support, 1 for positive support, 0 otherwise.
fn default_start(spec: &NodeSpec, parents: &[NodeId], nodes: &[Option<Node>]) -> f64 {
    match &spec.density {
        Some(Density::Builtin(BuiltinDensity::DExp))
        | Some(Density::Builtin(BuiltinDensity::DGamma))
        | Some(Density::Builtin(BuiltinDensity::DLnorm)) => 1.0,
        Some(Density::Builtin(BuiltinDensity::DBeta)) => 0.5,
        Some(Density::Builtin(BuiltinDensity::DUnif)) => {
            // parents are initialized first (topological order)
            let a = nodes[parents[0]].as_ref().map(|n| n.init[0]).unwrap_or(0.0);
            let b = nodes[parents[1]].as_ref().map(|n| n.init[0]).unwrap_or(1.0);
            0.5 * (a + b)
        }
        _ => 0.0,
    }
}

fn validate_custom_idents(
    e: &Expr,
    spec: &NodeSpec,
    by_name: &HashMap<String, NodeId>,
    specs: &[NodeSpec],
) -> Result<()> {
    let mut idents = Vec::new();
    collect_idents(e, &mut idents);
    for ident in idents {
        let ok = ident
            .strip_suffix('_')
            .map(|base| base == spec.name)
            .unwrap_or(false)
            || spec.parents.iter().any(|p| p == &ident)
            || by_name
                .get(&ident)
                .map(|&id| specs[id].constant.is_some())
                .unwrap_or(false);
        if !ok {
            return Err(Error::Model(format!(
                "density of `{}` references `{ident}`, which is neither a parent, \
                 a constant, nor `{}_`",
                spec.name, spec.name
            )));
        }
    }
    Ok(())
}

fn collect_idents(e: &Expr, out: &mut Vec<String>) {
    match e {
        Expr::Ident(s) => out.push(s.clone()),
        Expr::Index(s, _) => out.push(s.clone()),
        Expr::Neg(a) => collect_idents(a, out),
        Expr::Binary(_, a, b) => {
            collect_idents(a, out);
            collect_idents(b, out);
        }
        Expr::If { cond, then, els } => {
            collect_idents(cond, out);
            collect_idents(then, out);
            collect_idents(els, out);
        }
        Expr::Call(_, args) | Expr::Vector(args) => {
            for a in args {
                collect_idents(a, out);
            }
        }
        Expr::Num(_) => {}
    }
}

fn topo_sort(specs: &[NodeSpec], parents: &[Vec<NodeId>]) -> Result<Vec<NodeId>> {
    let n = specs.len();
    let mut indegree: Vec<usize> = parents.iter().map(|p| p.len()).collect();
    let mut children: Vec<Vec<NodeId>> = vec![Vec::new(); n];
    for (i, ps) in parents.iter().enumerate() {
        for &p in ps {
            children[p].push(i);
        }
    }
    let mut queue: Vec<NodeId> = (0..n).filter(|&i| indegree[i] == 0).collect();
    // keep declaration order deterministic
    queue.sort_unstable();
    let mut order = Vec::with_capacity(n);
    let mut head = 0;
    while head < queue.len() {
        let u = queue[head];
        head += 1;
        order.push(u);
        for &c in &children[u] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                queue.push(c);
            }
        }
    }
    if order.len() == n {
        return Ok(order);
    }
    // extract one cycle for the diagnostic
    let in_cycle: Vec<NodeId> = (0..n).filter(|&i| indegree[i] > 0).collect();
    let start = in_cycle[0];
    let mut cycle = vec![start];
    let mut cur = start;
    loop {
        let next = parents[cur]
            .iter()
            .copied()
            .find(|p| indegree[*p] > 0)
            .unwrap_or(start);
        if next == start || cycle.contains(&next) {
            cycle.push(next);
            break;
        }
        cycle.push(next);
        cur = next;
    }
    Err(Error::CycleDetected(
        cycle.into_iter().map(|i| specs[i].name.clone()).collect(),
    ))
}

/// log p(node | parents) at the current values. −∞ for out-of-support states;
/// parameter values excluded by the joint support also yield −∞.
pub fn log_factor(graph: &Graph, values: &ChainValues, id: NodeId) -> Result<f64> {
    let node = &graph.nodes[id];
    let Some(density) = &node.density else {
        return Ok(0.0);
    };
    match density {
        Density::Builtin(which) => {
            let mut args = Vec::with_capacity(node.parents.len());
            for &p in &node.parents {
                let pv = &values[p];
                if pv.len() != 1 {
                    return Err(Error::Model(format!(
                        "vector node `{}` used as a parameter of `{}`",
                        graph.nodes[p].name, node.name
                    )));
                }
                args.push(pv[0]);
            }
            let mut total = 0.0;
            for &x in &values[id] {
                match builtin_logdensity(*which, x, &args) {
                    Ok(l) => {
                        if l == f64::NEG_INFINITY {
                            return Ok(f64::NEG_INFINITY);
                        }
                        total += l;
                    }
                    // parameters pushed outside their domain by the current
                    // state: the joint density is zero there
                    Err(Error::InvalidParameter { .. }) => return Ok(f64::NEG_INFINITY),
                    Err(e) => return Err(e),
                }
            }
            Ok(total)
        }
        Density::Custom(expr) => {
            let env = GraphEnv { graph, values };
            let v = eval::eval_density(expr, &env)?;
            Ok(if v.is_nan() { f64::NEG_INFINITY } else { v })
        }
    }
}

/// An ordered subset of free scalar components updated jointly.
#[derive(Debug, Clone)]
pub struct Block {
    pub members: Vec<(NodeId, usize)>,
    pub label: String,
}

impl Block {
    pub fn dim(&self) -> usize {
        self.members.len()
    }

    pub fn from_members(graph: &Graph, members: Vec<(NodeId, usize)>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Model("empty block".into()));
        }
        let mut label_parts: Vec<String> = Vec::new();
        for &(id, c) in &members {
            let n = graph.node(id);
            if n.kind != NodeKind::Stochastic {
                return Err(Error::Model(format!(
                    "block member `{}` is not a free variable",
                    n.name
                )));
            }
            if c >= n.dim {
                return Err(Error::Model(format!(
                    "component {} out of range for `{}`",
                    c + 1,
                    n.name
                )));
            }
            let part = if n.dim == 1 {
                n.name.clone()
            } else {
                format!("{}[{}]", n.name, c + 1)
            };
            if !label_parts.contains(&part) {
                label_parts.push(part);
            }
        }
        Ok(Self {
            members,
            label: label_parts.join(", "),
        })
    }

    /// Gather the block's components out of the chain values.
    pub fn gather(&self, values: &ChainValues) -> Vec<f64> {
        self.members.iter().map(|&(id, c)| values[id][c]).collect()
    }

    /// Scatter `x` into the chain values, returning the displaced entries.
    pub fn scatter(&self, values: &mut ChainValues, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.members.len());
        let mut old = Vec::with_capacity(x.len());
        for (&(id, c), &v) in self.members.iter().zip(x) {
            old.push(values[id][c]);
            values[id][c] = v;
        }
        old
    }
}

/// One block per free node, all components together, in topological order.
pub fn default_blocks(graph: &Graph) -> Vec<Block> {
    graph
        .topo_order
        .iter()
        .filter(|&&id| graph.nodes[id].kind == NodeKind::Stochastic)
        .map(|&id| {
            let members = (0..graph.nodes[id].dim).map(|c| (id, c)).collect();
            Block::from_members(graph, members).expect("free node makes a valid block")
        })
        .collect()
}

/// The factors whose value can change when the block changes: the block's own
/// nodes plus their children, deduplicated and sorted.
pub fn block_dependents(graph: &Graph, block: &Block) -> Vec<NodeId> {
    let mut deps: Vec<NodeId> = Vec::new();
    for &(id, _) in &block.members {
        if !deps.contains(&id) {
            deps.push(id);
        }
        for &c in graph.children(id) {
            if !deps.contains(&c) {
                deps.push(c);
            }
        }
    }
    deps.sort_unstable();
    deps
}

/// Sum of the dependent factors with `x` substituted into the block; restores
/// the prior state before returning. Short-circuits at −∞.
pub fn block_logdensity(
    graph: &Graph,
    values: &mut ChainValues,
    block: &Block,
    x: &[f64],
) -> Result<f64> {
    let deps = block_dependents(graph, block);
    block_logdensity_with_deps(graph, values, block, x, &deps)
}

/// Same as [`block_logdensity`] with the dependent set precomputed (the
/// sampler caches it per block).
pub fn block_logdensity_with_deps(
    graph: &Graph,
    values: &mut ChainValues,
    block: &Block,
    x: &[f64],
    deps: &[NodeId],
) -> Result<f64> {
    if x.len() != block.dim() {
        return Err(Error::DimensionMismatch {
            expected: block.dim(),
            got: x.len(),
        });
    }
    let old = block.scatter(values, x);
    let mut total = 0.0;
    let mut result = Ok(f64::NEG_INFINITY);
    let mut finite = true;
    for &d in deps {
        match log_factor(graph, values, d) {
            Ok(l) => {
                if l == f64::NEG_INFINITY {
                    finite = false;
                    break;
                }
                total += l;
            }
            Err(e) => {
                result = Err(e);
                finite = false;
                break;
            }
        }
    }
    block.scatter(values, &old);
    if finite {
        Ok(total)
    } else if let Err(e) = result {
        Err(e)
    } else {
        Ok(f64::NEG_INFINITY)
    }
}

/// Joint log-density over every factor in the graph.
pub fn total_logdensity(graph: &Graph, values: &ChainValues) -> Result<f64> {
    let mut total = 0.0;
    for id in 0..graph.len() {
        let l = log_factor(graph, values, id)?;
        if l == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        total += l;
    }
    Ok(total)
}
