//! Structure and family selection.
//!
//! Trees are built one at a time as maximum spanning trees on absolute
//! empirical Kendall's tau. Each edge's family is then chosen by AIC or
//! BIC and fitted, and the h-functions of the fitted pairs give the data
//! for the next tree.

use super::fit::{fit_sequential, sequential_pass};
use super::model::RVineModel;
use super::structure::{RVineStructure, VineEdge};
use crate::bicop::{fit_pair, select_family, BicopFamily, BicopKind, FitCriterion, PairFit, T_DF_GAUSS_THRESHOLD};
use crate::error::{Result, VineError};
use crate::sample::CopulaSample;
use crate::stats::kendall_tau;
use rayon::prelude::*;

/// Smallest sample for which structure selection is attempted.
pub const MIN_SELECT_N: usize = 30;

/// Family choice for one edge. A t fit with degrees of freedom at or above
/// the Gauss threshold is replaced by a Gauss fit.
fn choose(families: &[BicopFamily], a: &[f64], b: &[f64], criterion: FitCriterion) -> Result<PairFit> {
    let fit = select_family(families, a, b, criterion)?;
    if fit.spec.family().kind == BicopKind::StudentT && fit.spec.params()[1] >= T_DF_GAUSS_THRESHOLD {
        return fit_pair(BicopFamily::GAUSS, a, b);
    }
    Ok(fit)
}

fn check_sample(sample: &CopulaSample) -> Result<()> {
    if sample.d() < 2 {
        return Err(VineError::DegenerateSample("at least two variables are needed".into()));
    }
    if sample.n() < MIN_SELECT_N {
        return Err(VineError::DegenerateSample(format!("{} observations, at least {MIN_SELECT_N} needed", sample.n())));
    }
    for j in 0..sample.d() {
        let c = sample.column(j);
        if c.iter().all(|&x| x == c[0]) {
            return Err(VineError::DegenerateSample(format!("variable {} is constant", j + 1)));
        }
    }
    Ok(())
}

/// Select families edge by edge on a fixed structure, fitting sequentially.
pub fn select_families(
    structure: &RVineStructure,
    sample: &CopulaSample,
    families: &[BicopFamily],
    criterion: FitCriterion,
) -> Result<RVineModel> {
    check_sample(sample)?;
    if sample.d() != structure.d() {
        return Err(VineError::DegenerateSample(format!("sample has {} columns, structure {}", sample.d(), structure.d())));
    }
    let plan = super::structure::EvalPlan::new(structure)?;
    let (pairs, _) = sequential_pass(structure, &plan, sample, |_, a, b| choose(families, a, b, criterion))?;
    RVineModel::new(structure.clone(), pairs)
}

/// Replace every t edge with degrees of freedom at or above the Gauss
/// threshold by a Gauss edge and refit sequentially.
pub fn collapse_student_t(model: &RVineModel, sample: &CopulaSample) -> Result<RVineModel> {
    let heavy = |p: &crate::bicop::BicopSpec| {
        p.family().kind == BicopKind::StudentT && p.params()[1] >= T_DF_GAUSS_THRESHOLD
    };
    if !model.pairs().iter().any(heavy) {
        return Ok(model.clone());
    }
    let fams: Vec<BicopFamily> =
        model.pairs().iter().map(|p| if heavy(p) { BicopFamily::GAUSS } else { p.family() }).collect();
    fit_sequential(model.structure(), &fams, sample)
}

/// A node of the tree under construction: an edge of the previous tree
/// (or a variable in tree 1) with its data.
struct Node {
    /// Conditioned and conditioning variables together, sorted.
    set: Vec<usize>,
    /// Indices of the nodes of the previous tree this edge joins.
    ends: (usize, usize),
    /// Data of each variable in `set` conditioned on the rest, keyed by the variable.
    data: Vec<(usize, Vec<f64>)>,
}

impl Node {
    fn column(&self, var: usize) -> &[f64] {
        &self.data.iter().find(|(v, _)| *v == var).expect("variable of the edge").1
    }
}

/// Candidate edge between nodes `a` and `b` with its conditioned pair.
struct Candidate {
    a: usize,
    b: usize,
    j: usize,
    k: usize,
    weight: f64,
}

/// Maximum spanning tree selection of an R-vine, with families chosen from
/// `families` by `criterion` and parameters estimated sequentially.
pub fn select_mst(sample: &CopulaSample, families: &[BicopFamily], criterion: FitCriterion) -> Result<RVineModel> {
    check_sample(sample)?;
    if families.is_empty() {
        return Err(VineError::Config("empty family set".into()));
    }
    let d = sample.d();
    let mut nodes: Vec<Node> = (1..=d)
        .map(|v| Node { set: vec![v], ends: (v - 1, v - 1), data: vec![(v, sample.column(v - 1))] })
        .collect();
    let mut trees: Vec<Vec<VineEdge>> = Vec::new();
    let mut pairs = Vec::new();
    for level in 1..d {
        let mut cands = Vec::new();
        for a in 0..nodes.len() {
            for b in a + 1..nodes.len() {
                let adjacent = level == 1 || {
                    let (x, y) = (nodes[a].ends, nodes[b].ends);
                    x.0 == y.0 || x.0 == y.1 || x.1 == y.0 || x.1 == y.1
                };
                if !adjacent {
                    continue;
                }
                let only = |p: &Node, q: &Node| p.set.iter().copied().find(|v| !q.set.contains(v));
                let (Some(j), Some(k)) = (only(&nodes[a], &nodes[b]), only(&nodes[b], &nodes[a])) else {
                    continue;
                };
                cands.push(Candidate { a, b, j, k, weight: 0.0 });
            }
        }
        cands.par_iter_mut().for_each(|c| {
            c.weight = kendall_tau(nodes[c.a].column(c.j), nodes[c.b].column(c.k)).abs();
        });
        cands.sort_by(|x, y| {
            y.weight
                .total_cmp(&x.weight)
                .then((x.j.min(x.k), x.j.max(x.k)).cmp(&(y.j.min(y.k), y.j.max(y.k))))
        });
        let mut parent: Vec<usize> = (0..nodes.len()).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        let mut chosen = Vec::new();
        for c in cands {
            let (ra, rb) = (find(&mut parent, c.a), find(&mut parent, c.b));
            if ra != rb {
                parent[ra] = rb;
                chosen.push(c);
            }
        }
        if chosen.len() != nodes.len() - 1 {
            return Err(VineError::InvalidStructure(format!("no spanning tree at level {level}")));
        }
        let fitted: Vec<(VineEdge, PairFit)> = chosen
            .par_iter()
            .map(|c| {
                let given: Vec<usize> = nodes[c.a].set.iter().copied().filter(|v| *v != c.j).collect();
                let edge = VineEdge::new(c.j, c.k, &given);
                let fit = choose(families, nodes[c.a].column(c.j), nodes[c.b].column(c.k), criterion).map_err(|e| {
                    VineError::Optimization { edge: edge.to_string(), reason: e.to_string() }
                })?;
                Ok((edge, fit))
            })
            .collect::<Result<_>>()?;
        let next: Vec<Node> = chosen
            .par_iter()
            .zip(&fitted)
            .map(|(c, (edge, fit))| {
                let (x, y) = (nodes[c.a].column(c.j), nodes[c.b].column(c.k));
                let (mut h1, mut h2) = (Vec::with_capacity(x.len()), Vec::with_capacity(x.len()));
                for (&p, &q) in x.iter().zip(y) {
                    let v = fit.spec.eval(p, q);
                    h1.push(v.h1);
                    h2.push(v.h2);
                }
                Node { set: edge.constraint_set(), ends: (c.a, c.b), data: vec![(c.j, h1), (c.k, h2)] }
            })
            .collect();
        trees.push(fitted.iter().map(|(e, _)| e.clone()).collect());
        pairs.extend(fitted.into_iter().map(|(_, f)| f.spec));
        nodes = next;
    }
    let structure = RVineStructure::new(d, trees)?;
    RVineModel::new(structure, pairs)
}
