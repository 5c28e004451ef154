#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::Arc;

use dcprune_core::arch::{ArchitectureSpec, SubnetPartition};
use dcprune_core::eval::{Evaluator, SurrogateEvaluator, SurrogateParams};
use dcprune_core::moo::{dominates, Objectives, PruneProblem, SubnetContext};

/// Three 8-wide basic blocks: one sub-network, three genes, 512 codings.
pub fn tiny_arch() -> ArchitectureSpec {
    let conv = r#"{"kind":"conv","in":8,"out":8,"k":3,"pad":1}"#;
    let bn = r#"{"kind":"batch-norm","in":8,"out":8}"#;
    let block = format!(
        r#"{{"kind":"basic-block","layers":[{conv},{bn},{conv},{bn},{{"kind":"add-shortcut","in":8,"out":8}}]}}"#
    );
    let doc = format!(
        r#"{{"format_version":1,"name":"tiny3","input":[8,8],"num_classes":10,
            "stem":[{{"kind":"conv","in":3,"out":8,"k":3,"pad":1}},{bn}],
            "blocks":[{block},{block},{block}],
            "head":[{{"kind":"pool","in":8,"out":8,"k":8,"stride":8}},{{"kind":"fully-connected","in":8,"out":10,"bias":true}}]}}"#
    );
    serde_json::from_str(&doc).expect("tiny architecture document")
}

pub fn tiny_problem(jitter: f64) -> (SubnetContext, SurrogateEvaluator) {
    let arch = Arc::new(tiny_arch());
    let part = Arc::new(SubnetPartition::whole(arch.blocks().len()).unwrap());
    let ctx = SubnetContext::new(arch.clone(), part.clone(), 0).unwrap();
    let params = SurrogateParams {
        jitter,
        ..Default::default()
    };
    let eval = SurrogateEvaluator::new(arch, part, params).unwrap();
    (ctx, eval)
}

/// Every coding in the box `[1, b_0] x ... x [1, b_n]`.
pub fn all_codings(bounds: &[u32]) -> Vec<Vec<u32>> {
    let mut out = vec![Vec::new()];
    for &b in bounds {
        out = out
            .into_iter()
            .flat_map(|prefix: Vec<u32>| {
                (1..=b).map(move |g| {
                    let mut v = prefix.clone();
                    v.push(g);
                    v
                })
            })
            .collect();
    }
    out
}

/// Pareto set by exhaustive enumeration and pairwise dominance.
pub fn exhaustive_pareto(ctx: &SubnetContext, eval: &SurrogateEvaluator) -> BTreeSet<Vec<u32>> {
    let codings = all_codings(ctx.bounds());
    let objs: Vec<Objectives> = codings
        .iter()
        .map(|g| Objectives {
            params: ctx.params(g).unwrap(),
            error: eval.evaluate(0, g).unwrap(),
        })
        .collect();
    codings
        .iter()
        .enumerate()
        .filter(|(i, _)| !objs.iter().any(|o| dominates(o, &objs[*i])))
        .map(|(_, g)| g.clone())
        .collect()
}
