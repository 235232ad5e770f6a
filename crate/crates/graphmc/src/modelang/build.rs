//! Turns a merged [`ModelFile`] into a runnable graph, block list and
//! configuration: loads bound data, expands replications, resolves densities
//! and interprets the parameter table.

use std::collections::HashMap;
use std::path::Path;

use crate::adapt::{
    AlgorithmChoice, BurninStrategy, CovarianceAdapt, MixSchedule, ScalingAdapt, WeightSchedule,
};
use crate::error::{Error, Result};
use crate::io::read_csv;
use crate::model::{
    build_graph, default_blocks, Block, BuiltinDensity, Density, Graph, NodeSpec,
};
use crate::modelang::ast::Expr;
use crate::modelang::file::{DensityDecl, EtaParam, ModelFile, NodeDecl};
use crate::proposals::ProposalKind;
use crate::sampler::RunConfig;

/// Everything a run needs, built from a model file.
pub struct BuildOutput {
    pub graph: Graph,
    pub blocks: Vec<Block>,
    pub cfg: RunConfig,
    pub functional: Option<Expr>,
    pub outfile: Option<String>,
    pub outformat: Option<String>,
}

/// `base_dir` anchors relative data paths (normally the model file's
/// directory).
pub fn build(mf: &ModelFile, base_dir: &Path) -> Result<BuildOutput> {
    let data = load_data(mf, base_dir)?;
    let specs = expand_nodes(mf, &data)?;
    let graph = build_graph(&specs)?;
    let blocks = resolve_blocks(&graph, mf)?;
    let cfg = build_config(mf)?;
    Ok(BuildOutput {
        graph,
        blocks,
        cfg,
        functional: mf.functional.clone(),
        outfile: mf.params.outfile.clone(),
        outformat: mf.params.outformat.clone(),
    })
}

fn load_data(mf: &ModelFile, base_dir: &Path) -> Result<HashMap<String, Vec<f64>>> {
    let mut data = HashMap::new();
    for binding in &mf.data_bindings {
        let path = {
            let p = Path::new(&binding.path);
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base_dir.join(p)
            }
        };
        let table = read_csv(&path)?;
        let col = binding.column.unwrap_or(1);
        if col == 0 || col > table.ncols {
            return Err(Error::Model(format!(
                "column {col} out of range for `{}` ({} columns)",
                binding.path, table.ncols
            )));
        }
        data.insert(binding.node.clone(), table.column(col - 1));
    }
    Ok(data)
}

/// Renames identifiers (including `name_` self references and indexed
/// accesses) according to `map`.
fn rename_idents(expr: &Expr, map: &HashMap<String, String>) -> Expr {
    let rename = |name: &str| -> String {
        if let Some(new) = map.get(name) {
            return new.clone();
        }
        if let Some(base) = name.strip_suffix('_') {
            if let Some(new) = map.get(base) {
                return format!("{new}_");
            }
        }
        name.to_string()
    };
    match expr {
        Expr::Num(v) => Expr::Num(*v),
        Expr::Ident(n) => Expr::Ident(rename(n)),
        Expr::Index(n, i) => Expr::Index(rename(n), *i),
        Expr::Neg(a) => Expr::Neg(Box::new(rename_idents(a, map))),
        Expr::Binary(op, a, b) => Expr::Binary(
            *op,
            Box::new(rename_idents(a, map)),
            Box::new(rename_idents(b, map)),
        ),
        Expr::If { cond, then, els } => Expr::If {
            cond: Box::new(rename_idents(cond, map)),
            then: Box::new(rename_idents(then, map)),
            els: Box::new(rename_idents(els, map)),
        },
        Expr::Call(n, args) => Expr::Call(
            n.clone(),
            args.iter().map(|a| rename_idents(a, map)).collect(),
        ),
        Expr::Vector(items) => {
            Expr::Vector(items.iter().map(|a| rename_idents(a, map)).collect())
        }
    }
}

fn decl_to_spec(
    decl: &NodeDecl,
    name: &str,
    parents: Vec<String>,
    density: Option<Density>,
    observed: Option<Vec<f64>>,
) -> NodeSpec {
    NodeSpec {
        name: name.to_string(),
        parents,
        density,
        init_val: decl.init_val.clone(),
        dim: decl.dim,
        observed,
        constant: None,
    }
}

fn resolve_density(decl: &DensityDecl) -> Result<Density> {
    match decl {
        DensityDecl::Builtin(name) => BuiltinDensity::from_name(name)
            .map(Density::Builtin)
            .ok_or_else(|| Error::UnknownDensity(name.clone())),
        DensityDecl::Custom(expr) => Ok(Density::Custom(expr.clone())),
    }
}

fn expand_nodes(mf: &ModelFile, data: &HashMap<String, Vec<f64>>) -> Result<Vec<NodeSpec>> {
    let mut specs: Vec<NodeSpec> = mf
        .consts
        .iter()
        .map(|(n, v)| NodeSpec::constant(n, *v))
        .collect();

    // which directive, if any, covers each declared node
    let mut directive_of: HashMap<&str, usize> = HashMap::new();
    for (di, dir) in mf.replications.iter().enumerate() {
        for n in &dir.block_nodes {
            if !mf.nodes.iter().any(|d| d.name == *n) {
                return Err(Error::ReplicateUnknownNode(n.clone()));
            }
            if directive_of.insert(n.as_str(), di).is_some() {
                return Err(Error::Model(format!(
                    "node `{n}` appears in more than one repeat directive"
                )));
            }
        }
    }

    // copy count per directive: explicit, checked against any bound data
    let mut counts = vec![None; mf.replications.len()];
    for (di, dir) in mf.replications.iter().enumerate() {
        let mut count = dir.count;
        for n in &dir.block_nodes {
            if let Some(values) = data.get(n.as_str()) {
                match count {
                    None => count = Some(values.len()),
                    Some(c) if c != values.len() => {
                        return Err(Error::DataLengthMismatch {
                            node: n.clone(),
                            declared: c,
                            actual: values.len(),
                        });
                    }
                    Some(_) => {}
                }
            }
        }
        counts[di] = Some(count.ok_or_else(|| {
            Error::Model(format!(
                "repeat of [{}] has neither a count nor bound data",
                dir.block_nodes.join(", ")
            ))
        })?);
    }

    for decl in &mf.nodes {
        let density = decl.density.as_ref().map(resolve_density).transpose()?;
        match directive_of.get(decl.name.as_str()) {
            None => {
                let observed = data.get(decl.name.as_str()).cloned();
                specs.push(decl_to_spec(
                    decl,
                    &decl.name,
                    decl.parents.clone(),
                    density,
                    observed,
                ));
            }
            Some(&di) => {
                let dir = &mf.replications[di];
                let count = counts[di].unwrap();
                let node_data = data.get(decl.name.as_str());
                for i in 1..=count {
                    // intra-block parents follow the copy; external ones are shared
                    let rename: HashMap<String, String> = dir
                        .block_nodes
                        .iter()
                        .map(|n| (n.clone(), format!("{n}{i}")))
                        .collect();
                    let name = format!("{}{}", decl.name, i);
                    let parents = decl
                        .parents
                        .iter()
                        .map(|p| rename.get(p).cloned().unwrap_or_else(|| p.clone()))
                        .collect();
                    let density = match &density {
                        Some(Density::Custom(e)) => {
                            Some(Density::Custom(rename_idents(e, &rename)))
                        }
                        other => other.clone(),
                    };
                    let observed = node_data.map(|v| vec![v[i - 1]]);
                    specs.push(decl_to_spec(decl, &name, parents, density, observed));
                }
            }
        }
    }
    Ok(specs)
}

/// Explicit blocks replace the default singleton blocks of their members;
/// uncovered free nodes keep their defaults.
fn resolve_blocks(graph: &Graph, mf: &ModelFile) -> Result<Vec<Block>> {
    let defaults = default_blocks(graph);
    let Some(explicit) = &mf.blocks else {
        return Ok(defaults);
    };

    let mut used: Vec<(usize, usize)> = Vec::new(); // (node, component)
    let mut parsed: Vec<Block> = Vec::new();
    for members in explicit {
        let mut resolved = Vec::new();
        for m in members {
            let (name, comp) = match (m.find('['), m.strip_suffix(']')) {
                (Some(open), Some(_)) => {
                    let idx: usize = m[open + 1..m.len() - 1].trim().parse().map_err(|_| {
                        Error::Model(format!("bad component reference `{m}`"))
                    })?;
                    if idx == 0 {
                        return Err(Error::Model(format!("bad component reference `{m}`")));
                    }
                    (&m[..open], Some(idx - 1))
                }
                _ => (m.as_str(), None),
            };
            let id = graph
                .id_of(name)
                .ok_or_else(|| Error::Model(format!("block member `{name}` is unknown")))?;
            let comps: Vec<usize> = match comp {
                Some(c) => vec![c],
                None => (0..graph.node(id).dim).collect(),
            };
            for c in comps {
                if used.contains(&(id, c)) {
                    return Err(Error::Model(format!(
                        "component of `{name}` listed in two blocks"
                    )));
                }
                used.push((id, c));
                resolved.push((id, c));
            }
        }
        parsed.push(Block::from_members(graph, resolved)?);
    }

    // splice each explicit block in at its first member's default position
    let mut out = Vec::new();
    let mut emitted = vec![false; parsed.len()];
    for d in defaults {
        let covered: Vec<usize> = parsed
            .iter()
            .enumerate()
            .filter(|(_, b)| b.members.iter().any(|m| d.members.contains(m)))
            .map(|(i, _)| i)
            .collect();
        if covered.is_empty() {
            out.push(d);
        } else {
            for i in covered {
                if !emitted[i] {
                    emitted[i] = true;
                    out.push(parsed[i].clone());
                }
            }
        }
    }
    Ok(out)
}

fn build_config(mf: &ModelFile) -> Result<RunConfig> {
    let p = &mf.params;
    let niter = p
        .niter
        .ok_or_else(|| Error::Model("parameter `niter` is required".into()))?;
    let mut cfg = RunConfig::new(niter);
    cfg.nburn = p.nburn.unwrap_or(0);
    if let Some(t) = p.thin {
        cfg.thin = t;
    }
    if let Some(s) = p.seed {
        cfg.seed = s;
    }
    cfg.theta0 = p.theta0;

    let (cov, scaling) = match p.algorithm.as_deref().unwrap_or("ascm") {
        "none" | "metropolis" => (CovarianceAdapt::None, ScalingAdapt::None),
        "am" => (CovarianceAdapt::Am, ScalingAdapt::None),
        "rbam" => (CovarianceAdapt::RbAm, ScalingAdapt::None),
        "ascm" => (CovarianceAdapt::None, ScalingAdapt::Ascm),
        "am_ascm" => (CovarianceAdapt::Am, ScalingAdapt::Ascm),
        "rbam_ascm" => (CovarianceAdapt::RbAm, ScalingAdapt::Ascm),
        other => {
            return Err(Error::Model(format!("unknown algorithm `{other}`")));
        }
    };
    let scaling = if p.scaling_amcmc {
        ScalingAdapt::AmcmcRule
    } else if let Some(expr) = &p.scaling_adapt {
        ScalingAdapt::UserRule { expr: expr.clone() }
    } else {
        scaling
    };
    cfg.algorithm = AlgorithmChoice {
        covariance_adapt: cov,
        scaling_adapt: scaling,
        target_alpha: p.target_alpha,
    };

    cfg.strategy = match p.strategy.as_deref().unwrap_or("greedy") {
        "greedy" => BurninStrategy::Greedy,
        "traditional" => BurninStrategy::Traditional { nburn: cfg.nburn },
        "freeze" => BurninStrategy::Freeze { nburn: cfg.nburn },
        other => {
            return Err(Error::Model(format!("unknown strategy `{other}`")));
        }
    };

    cfg.proposal = match p.proposal.as_deref().unwrap_or("gaussian") {
        "gaussian" | "normal" => ProposalKind::Gaussian,
        "student" => ProposalKind::Student {
            dof: p.dof.unwrap_or(ProposalKind::DEFAULT_STUDENT_DOF),
        },
        "uniform" => ProposalKind::UniformCube,
        "laplace" => ProposalKind::LaplaceProduct,
        other => {
            return Err(Error::Model(format!("unknown proposal `{other}`")));
        }
    };

    cfg.dr_scale = p.dr;

    cfg.mix = match &p.mix_seq {
        Some(expr) => MixSchedule::UserSequence { expr: expr.clone() },
        None => MixSchedule::Constant {
            p0: p.mix.unwrap_or(0.0),
        },
    };

    cfg.eta_schedule = match (&p.eta, p.eta_gamma) {
        (Some(EtaParam::Named(name)), g) => match name.as_str() {
            "reciprocal" => WeightSchedule::Reciprocal,
            "power" => WeightSchedule::Power {
                gamma: g.ok_or_else(|| {
                    Error::Model("eta = \"power\" requires eta_gamma".into())
                })?,
            },
            other => {
                return Err(Error::Model(format!("unknown eta schedule `{other}`")));
            }
        },
        (Some(EtaParam::Constant(c)), _) => WeightSchedule::Constant { eta0: *c },
        (None, Some(g)) => WeightSchedule::Power { gamma: g },
        (None, None) => WeightSchedule::Reciprocal,
    };

    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modelang::parser::parse_model;
    use std::io::Write;

    fn baseball_text() -> String {
        r#"
        const { v = 0.00434 }
        model {
          mu { density = "duniform" }
          a  { init_val = 1, density = dexp(1/a_, 2) }
          t  { parents = ["mu", "a"], density = "dnorm" }
          y  { parents = ["t", "v"], density = "dnorm" }
        }
        data "y" from "y.data"
        repeat ["y", "t"]
        functional [t1, mu, a]
        para { niter = 30000, nburn = 10000, algorithm = "ascm" }
        "#
        .to_string()
    }

    fn write_data(dir: &Path, name: &str, values: &[f64]) {
        let mut f = std::fs::File::create(dir.join(name)).unwrap();
        for v in values {
            writeln!(f, "{v}").unwrap();
        }
    }

    #[test]
    fn baseball_expansion() {
        let dir = tempfile::tempdir().unwrap();
        let values: Vec<f64> = (1..=18).map(|i| 0.2 + 0.01 * i as f64).collect();
        write_data(dir.path(), "y.data", &values);
        let mf = parse_model(&baseball_text()).unwrap();
        let out = build(&mf, dir.path()).unwrap();

        // mu, a, t1..t18, y1..y18 free or observed; v constant
        let free_or_observed = out
            .graph
            .nodes()
            .iter()
            .filter(|n| n.density.is_some())
            .count();
        assert_eq!(free_or_observed, 38);
        assert_eq!(out.blocks.len(), 20);

        let t3 = out.graph.id_of("t3").unwrap();
        let parents: Vec<&str> = out
            .graph
            .node(t3)
            .parents
            .iter()
            .map(|&p| out.graph.node(p).name.as_str())
            .collect();
        assert_eq!(parents, vec!["mu", "a"]);
        let y3 = out.graph.id_of("y3").unwrap();
        let parents: Vec<&str> = out
            .graph
            .node(y3)
            .parents
            .iter()
            .map(|&p| out.graph.node(p).name.as_str())
            .collect();
        assert_eq!(parents, vec!["t3", "v"]);
        assert_eq!(out.graph.node(y3).init, vec![values[2]]);
        assert!(out.graph.id_of("t").is_none());

        assert_eq!(out.cfg.niter, 30000);
        assert_eq!(out.cfg.nburn, 10000);
        assert!(matches!(
            out.cfg.algorithm.scaling_adapt,
            ScalingAdapt::Ascm
        ));
        assert!(matches!(
            out.cfg.algorithm.covariance_adapt,
            CovarianceAdapt::None
        ));
    }

    #[test]
    fn replication_count_one() {
        let mf = parse_model(
            r#"
            model { x { density = "duniform" } }
            repeat ["x"] count 1
            para { niter = 10 }
            "#,
        )
        .unwrap();
        let out = build(&mf, Path::new(".")).unwrap();
        assert!(out.graph.id_of("x1").is_some());
        assert!(out.graph.id_of("x").is_none());
    }

    #[test]
    fn count_conflicts_with_data_length() {
        let dir = tempfile::tempdir().unwrap();
        write_data(dir.path(), "y.data", &[1.0; 17]);
        let text = baseball_text().replace("repeat [\"y\", \"t\"]", "repeat [\"y\", \"t\"] count 18");
        let mf = parse_model(&text).unwrap();
        assert!(matches!(
            build(&mf, dir.path()),
            Err(Error::DataLengthMismatch { declared: 18, actual: 17, .. })
        ));
        // count inferred from data: 17 copies, no error
        let mf = parse_model(&baseball_text()).unwrap();
        let out = build(&mf, dir.path()).unwrap();
        assert!(out.graph.id_of("y17").is_some());
        assert!(out.graph.id_of("y18").is_none());
    }

    #[test]
    fn replicate_unknown_node() {
        let mf = parse_model(
            r#"
            model { x { density = "duniform" } }
            repeat ["ghost"] count 2
            para { niter = 10 }
            "#,
        )
        .unwrap();
        assert!(matches!(
            build(&mf, Path::new(".")),
            Err(Error::ReplicateUnknownNode(_))
        ));
    }

    #[test]
    fn custom_density_self_reference_is_renamed() {
        let mf = parse_model(
            r#"
            model { a { init_val = 1, density = dexp(1/a_, 2) } }
            repeat ["a"] count 2
            para { niter = 10 }
            "#,
        )
        .unwrap();
        let out = build(&mf, Path::new(".")).unwrap();
        let a2 = out.graph.id_of("a2").unwrap();
        match out.graph.node(a2).density.as_ref().unwrap() {
            Density::Custom(e) => assert_eq!(e.to_string(), "dexp(1 / a2_, 2)"),
            other => panic!("expected custom density, got {other:?}"),
        }
    }

    #[test]
    fn explicit_blocks_merge_with_defaults() {
        let mf = parse_model(
            r#"
            model {
              mu { density = "duniform" }
              a  { init_val = 1, density = "duniform" }
              t  { parents = ["mu", "a"], density = "dnorm" }
            }
            blocks { [mu, a] }
            para { niter = 10 }
            "#,
        )
        .unwrap();
        let out = build(&mf, Path::new(".")).unwrap();
        assert_eq!(out.blocks.len(), 2);
        assert_eq!(out.blocks[0].label, "mu, a");
        assert_eq!(out.blocks[0].dim(), 2);
        assert_eq!(out.blocks[1].label, "t");
    }

    #[test]
    fn block_member_in_two_blocks_rejected() {
        let mf = parse_model(
            r#"
            model {
              mu { density = "duniform" }
              a  { density = "duniform" }
            }
            blocks { [mu, a], [a] }
            para { niter = 10 }
            "#,
        )
        .unwrap();
        assert!(build(&mf, Path::new(".")).is_err());
    }

    #[test]
    fn unknown_names_rejected() {
        for (snippet, what) in [
            ("para { niter = 10, algorithm = \"turbo\" }", "algorithm"),
            ("para { niter = 10, strategy = \"eager\" }", "strategy"),
            ("para { niter = 10, proposal = \"cauchy\" }", "proposal"),
        ] {
            let text = format!("model {{ x {{ density = \"duniform\" }} }}\n{snippet}");
            let mf = parse_model(&text).unwrap();
            assert!(build(&mf, Path::new(".")).is_err(), "{what} accepted");
        }
        let mf = parse_model(
            "model { x { density = \"dmystery\" } }\npara { niter = 10 }",
        )
        .unwrap();
        assert!(matches!(
            build(&mf, Path::new(".")),
            Err(Error::UnknownDensity(_))
        ));
    }

    #[test]
    fn config_details() {
        let mf = parse_model(
            r#"
            model { x { density = "duniform" } }
            para {
              niter = 100, nburn = 10, algorithm = "rbam_ascm",
              strategy = "freeze", proposal = "student", dof = 4,
              dr = 0.1, mix = 0.05, thin = 5, seed = 7,
              target_alpha = 0.3, theta0 = 1.5, eta = "power", eta_gamma = 0.7
            }
            "#,
        )
        .unwrap();
        let cfg = build_config(&mf).unwrap();
        assert!(matches!(cfg.algorithm.covariance_adapt, CovarianceAdapt::RbAm));
        assert!(matches!(cfg.algorithm.scaling_adapt, ScalingAdapt::Ascm));
        assert_eq!(cfg.algorithm.target_alpha, Some(0.3));
        assert!(matches!(cfg.strategy, BurninStrategy::Freeze { nburn: 10 }));
        assert!(matches!(cfg.proposal, ProposalKind::Student { dof } if dof == 4.0));
        assert_eq!(cfg.dr_scale, Some(0.1));
        assert!(matches!(cfg.mix, MixSchedule::Constant { p0 } if p0 == 0.05));
        assert_eq!(cfg.thin, 5);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.theta0, Some(1.5));
        assert!(matches!(
            cfg.eta_schedule,
            WeightSchedule::Power { gamma } if gamma == 0.7
        ));
    }

    #[test]
    fn missing_niter_rejected() {
        let mf = parse_model("model { x { density = \"duniform\" } }").unwrap();
        assert!(build(&mf, Path::new(".")).is_err());
    }
}
