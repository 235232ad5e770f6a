//! The model description language: lexer, parser, expression evaluator and
//! the model-file representation with merging and replication.

pub mod ast;
pub mod build;
pub mod eval;
pub mod file;
pub mod lexer;
pub mod parser;

pub use ast::{BinOp, Expr};
pub use build::{build, BuildOutput};
pub use eval::{eval, eval_density, eval_scalar, Env, MapEnv, SingleVarEnv, Value};
pub use file::{merge_overrides, DataBinding, DensityDecl, EtaParam, ModelFile, NodeDecl, Params, ParaValue, ReplicateDirective};
pub use parser::{parse_expr, parse_model};
