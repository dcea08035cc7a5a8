//! R-vine copula models: density, log-likelihood and simulation.

use super::structure::{EvalPlan, RVineStructure, Source, VineEdge};
use crate::bicop::{BicopFamily, BicopKind, BicopSpec};
use crate::error::{Result, VineError};
use crate::sample::CopulaSample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::fmt;
use std::sync::Arc;

/// Rows per parallel work unit and per simulation RNG stream.
const CHUNK: usize = 256;

/// Where an edge parameter lives in the global parameter vector:
/// its value is `theta[index] + offset`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParamSlot {
    pub index: usize,
    pub offset: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamLayout {
    slots: Vec<Vec<ParamSlot>>,
    n: usize,
}

impl ParamLayout {
    /// Every edge parameter free.
    pub fn free(pairs: &[BicopSpec]) -> Self {
        let mut n = 0;
        let slots = pairs
            .iter()
            .map(|p| {
                (0..p.n_params())
                    .map(|_| {
                        n += 1;
                        ParamSlot { index: n - 1, offset: 0.0 }
                    })
                    .collect()
            })
            .collect();
        ParamLayout { slots, n }
    }

    pub fn n_params(&self) -> usize {
        self.n
    }

    pub fn slots(&self, edge: usize) -> &[ParamSlot] {
        &self.slots[edge]
    }

    pub fn is_tied(&self) -> bool {
        self.slots.iter().map(Vec::len).sum::<usize>() != self.n
    }
}

#[derive(Clone)]
pub struct RVineModel {
    structure: RVineStructure,
    pairs: Vec<BicopSpec>,
    layout: ParamLayout,
    plan: Arc<EvalPlan>,
}

impl fmt::Debug for RVineModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RVineModel")
            .field("structure", &self.structure)
            .field("pairs", &self.pairs)
            .field("layout", &self.layout)
            .finish()
    }
}

impl PartialEq for RVineModel {
    fn eq(&self, o: &Self) -> bool {
        self.structure == o.structure && self.pairs == o.pairs && self.layout == o.layout
    }
}

impl RVineModel {
    /// `pairs[i]` is the pair copula of edge id `i` (tree-major order).
    pub fn new(structure: RVineStructure, pairs: Vec<BicopSpec>) -> Result<Self> {
        if pairs.len() != structure.n_edges() {
            return Err(VineError::InvalidStructure(format!(
                "{} pair copulas for {} edges",
                pairs.len(),
                structure.n_edges()
            )));
        }
        let plan = Arc::new(EvalPlan::new(&structure)?);
        let layout = ParamLayout::free(&pairs);
        Ok(RVineModel { structure, pairs, layout, plan })
    }

    /// Build from `(edge, spec)` pairs in any order; edges are matched
    /// against `structure` ignoring the order of the conditioned pair, and
    /// the family is transposed when the order differs.
    pub fn from_labelled(structure: RVineStructure, labelled: &[(VineEdge, BicopSpec)]) -> Result<Self> {
        let mut pairs = vec![None; structure.n_edges()];
        for (e, spec) in labelled {
            let id = structure
                .find_edge(e)
                .ok_or_else(|| VineError::InvalidStructure(format!("edge {e} not in the structure")))?;
            let spec = if structure.edge(id).conditioned == e.conditioned {
                *spec
            } else {
                BicopSpec::new(spec.family().transposed(), spec.params())?
            };
            pairs[id] = Some(spec);
        }
        let pairs = pairs
            .into_iter()
            .enumerate()
            .map(|(i, p)| p.ok_or_else(|| VineError::InvalidStructure(format!("no pair copula for edge {}", structure.edge(i)))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(structure, pairs)
    }

    pub fn independence(structure: RVineStructure) -> Result<Self> {
        let m = structure.n_edges();
        Self::new(structure, vec![BicopSpec::independence(); m])
    }

    /// Tie the degrees of freedom of every Student-t edge to one shared
    /// parameter: an edge in tree `i` gets `nu + i - 1`, which is the
    /// pair-copula decomposition of a multivariate t copula with `nu`
    /// degrees of freedom. `nu` is read from the first t edge.
    pub fn with_shared_df(mut self) -> Result<Self> {
        let first = (0..self.pairs.len())
            .find(|&i| self.pairs[i].family().kind == BicopKind::StudentT)
            .ok_or_else(|| VineError::Unsupported("no Student-t edge to tie".into()))?;
        let level = |i: usize| self.structure.edge(i).tree as f64;
        let base = self.pairs[first].params()[1] - (level(first) - 1.0);
        let mut n = 0;
        let mut shared = None;
        let mut slots = Vec::with_capacity(self.pairs.len());
        for i in 0..self.pairs.len() {
            let k = self.pairs[i].n_params();
            let mut s = Vec::with_capacity(k);
            for slot in 0..k {
                if slot == 1 {
                    let index = *shared.get_or_insert_with(|| {
                        n += 1;
                        n - 1
                    });
                    s.push(ParamSlot { index, offset: level(i) - 1.0 });
                } else {
                    n += 1;
                    s.push(ParamSlot { index: n - 1, offset: 0.0 });
                }
            }
            slots.push(s);
        }
        let layout = ParamLayout { slots, n };
        let mut theta = vec![0.0; n];
        for (i, p) in self.pairs.iter().enumerate() {
            for (slot, s) in layout.slots[i].iter().enumerate() {
                theta[s.index] = if slot == 1 { base } else { p.params()[slot] };
            }
        }
        self.layout = layout;
        self.set_params(&theta)?;
        Ok(self)
    }

    pub fn structure(&self) -> &RVineStructure {
        &self.structure
    }

    pub fn pairs(&self) -> &[BicopSpec] {
        &self.pairs
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub(crate) fn plan(&self) -> &EvalPlan {
        &self.plan
    }

    pub fn d(&self) -> usize {
        self.structure.d()
    }

    pub fn families(&self) -> Vec<BicopFamily> {
        self.pairs.iter().map(|p| p.family()).collect()
    }

    /// Number of free parameters `p`.
    pub fn n_params(&self) -> usize {
        self.layout.n
    }

    /// Global parameter vector.
    pub fn params(&self) -> Vec<f64> {
        let mut theta = vec![f64::NAN; self.layout.n];
        for (i, p) in self.pairs.iter().enumerate() {
            for (slot, s) in self.layout.slots[i].iter().enumerate() {
                if theta[s.index].is_nan() {
                    theta[s.index] = p.params()[slot] - s.offset;
                }
            }
        }
        theta
    }

    pub fn with_params(&self, theta: &[f64]) -> Result<Self> {
        let mut m = self.clone();
        m.set_params(theta)?;
        Ok(m)
    }

    fn set_params(&mut self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.layout.n {
            return Err(VineError::InvalidParameter {
                family: "vine".into(),
                reason: format!("{} parameters given, model has {}", theta.len(), self.layout.n),
            });
        }
        for i in 0..self.pairs.len() {
            let vals: Vec<f64> = self.layout.slots[i].iter().map(|s| theta[s.index] + s.offset).collect();
            self.pairs[i] = self.pairs[i].with_params(&vals)?;
        }
        Ok(())
    }

    /// Replace one edge's pair copula; the layout is rebuilt with free parameters.
    pub fn with_pair(&self, edge: usize, spec: BicopSpec) -> Result<Self> {
        let mut pairs = self.pairs.clone();
        pairs[edge] = spec;
        Self::new(self.structure.clone(), pairs)
    }

    /// Label of each global parameter, e.g. `2,4|1:theta`.
    pub fn param_labels(&self) -> Vec<String> {
        let mut out = vec![String::new(); self.layout.n];
        for (i, p) in self.pairs.iter().enumerate() {
            for (slot, s) in self.layout.slots[i].iter().enumerate() {
                if !out[s.index].is_empty() {
                    out[s.index] = "nu(shared)".into();
                    continue;
                }
                let name = match (p.family().kind, slot) {
                    (BicopKind::Gauss | BicopKind::StudentT, 0) => "rho",
                    (BicopKind::StudentT, _) => "nu",
                    _ => "theta",
                };
                out[s.index] = format!("{}:{}", self.structure.edge(i), name);
            }
        }
        out
    }

    /// Log density at one observation; `u` must lie in `[0, 1]^d`.
    pub fn log_density(&self, u: &[f64]) -> Result<f64> {
        if u.len() != self.d() {
            return Err(VineError::DegenerateSample(format!("observation of length {}, expected {}", u.len(), self.d())));
        }
        if let Some(&bad) = u.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(VineError::Domain { value: bad });
        }
        let mut buf = vec![(0.0, 0.0); self.pairs.len()];
        Ok(self.eval_row(u, &mut buf))
    }

    pub fn pdf(&self, u: &[f64]) -> Result<f64> {
        Ok(self.log_density(u)?.exp())
    }

    /// Sum of edge log densities; `buf` receives both h-function outputs of every edge.
    pub(crate) fn eval_row(&self, u: &[f64], buf: &mut [(f64, f64)]) -> f64 {
        let mut total = 0.0;
        for (id, &(l, r)) in self.plan.args.iter().enumerate() {
            let a = arg(l, u, buf);
            let b = arg(r, u, buf);
            let pv = self.pairs[id].eval(a, b);
            total += pv.log_pdf;
            buf[id] = (pv.h1, pv.h2);
        }
        total
    }

    pub fn loglik(&self, sample: &CopulaSample) -> Result<f64> {
        Ok(self.pointwise_loglik(sample)?.iter().sum())
    }

    /// Log density of every observation.
    pub fn pointwise_loglik(&self, sample: &CopulaSample) -> Result<Vec<f64>> {
        if sample.d() != self.d() {
            return Err(VineError::DegenerateSample(format!("sample has {} columns, model {}", sample.d(), self.d())));
        }
        let d = self.d();
        let out: Vec<f64> = sample
            .as_row_major()
            .par_chunks(CHUNK * d)
            .flat_map_iter(|rows| {
                let mut buf = vec![(0.0, 0.0); self.pairs.len()];
                rows.chunks(d).map(|u| self.eval_row(u, &mut buf)).collect::<Vec<_>>()
            })
            .collect();
        Ok(out)
    }

    /// Draw `n` observations by inverting the Rosenblatt transform.
    /// Draws are generated in chunks of 256, chunk `c` using ChaCha8 stream
    /// `c` of `seed`, so results do not depend on the thread count.
    pub fn simulate(&self, n: usize, seed: u64) -> Result<CopulaSample> {
        let d = self.d();
        let n_chunks = n.div_ceil(CHUNK);
        let chunks: Vec<Vec<f64>> = (0..n_chunks)
            .into_par_iter()
            .map(|c| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(c as u64);
                let rows = CHUNK.min(n - c * CHUNK);
                let mut out = Vec::with_capacity(rows * d);
                let mut buf = vec![(0.0, 0.0); self.pairs.len()];
                let mut w = vec![0.0; d];
                for _ in 0..rows {
                    for x in w.iter_mut() {
                        *x = rng.random::<f64>();
                    }
                    out.extend(self.inverse_rosenblatt(&w, &mut buf)?);
                }
                Ok(out)
            })
            .collect::<Result<_>>()?;
        CopulaSample::from_row_major(n, d, chunks.concat()).map_err(|e| match e {
            VineError::Domain { value } => VineError::Numerical(format!("simulated value {value} on the boundary")),
            e => e,
        })
    }

    /// Map independent uniforms `w` (one per variable, in sampling order)
    /// to an observation of the model.
    pub(crate) fn inverse_rosenblatt(&self, w: &[f64], buf: &mut [(f64, f64)]) -> Result<Vec<f64>> {
        let d = self.d();
        let mut u = vec![0.0; d];
        for (pos, (var, column)) in self.plan.sim_order.iter().enumerate() {
            let mut x = w[pos].clamp(crate::bicop::U_EPS, 1.0 - crate::bicop::U_EPS);
            for &(id, first) in column.iter().rev() {
                let (l, r) = self.plan.args[id];
                let spec = &self.pairs[id];
                x = if first {
                    spec.hinv(x, arg(r, &u, buf))?
                } else {
                    spec.hinv2(x, arg(l, &u, buf))?
                };
            }
            u[var - 1] = x;
            for &(id, _) in column {
                let (l, r) = self.plan.args[id];
                let pv = self.pairs[id].eval(arg(l, &u, buf), arg(r, &u, buf));
                buf[id] = (pv.h1, pv.h2);
            }
        }
        Ok(u)
    }
}

#[inline]
pub(crate) fn arg(src: Source, u: &[f64], buf: &[(f64, f64)]) -> f64 {
    match src {
        Source::Var(j) => u[j],
        Source::H1(e) => buf[e].0,
        Source::H2(e) => buf[e].1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vine::structure::VineEdge;

    fn e(j: usize, k: usize, given: &[usize]) -> VineEdge {
        VineEdge::new(j, k, given)
    }

    /// Conditional cdf F(var | given) recomputed from scratch.
    fn cond(m: &RVineModel, u: &[f64], var: usize, given: &[usize]) -> f64 {
        if given.is_empty() {
            return u[var - 1];
        }
        let mut want: Vec<usize> = given.to_vec();
        want.push(var);
        want.sort_unstable();
        let (id, edge) = m
            .structure()
            .edges()
            .enumerate()
            .find(|(_, x)| x.constraint_set() == want && (x.conditioned.0 == var || x.conditioned.1 == var))
            .unwrap();
        let other = if edge.conditioned.0 == var { edge.conditioned.1 } else { edge.conditioned.0 };
        let rest: Vec<usize> = given.iter().copied().filter(|&x| x != other).collect();
        let a = cond(m, u, edge.conditioned.0, &rest);
        let b = cond(m, u, edge.conditioned.1, &rest);
        let spec = &m.pairs()[id];
        if edge.conditioned.0 == var {
            spec.hfunc(a, b).unwrap()
        } else {
            spec.hfunc2(a, b).unwrap()
        }
    }

    fn direct_log_density(m: &RVineModel, u: &[f64]) -> f64 {
        m.structure()
            .edges()
            .enumerate()
            .map(|(id, edge)| {
                let a = cond(m, u, edge.conditioned.0, &edge.conditioning);
                let b = cond(m, u, edge.conditioned.1, &edge.conditioning);
                m.pairs()[id].log_pdf(a, b).unwrap()
            })
            .sum()
    }

    fn mixed_model() -> RVineModel {
        let s = RVineStructure::new(
            5,
            vec![
                vec![e(1, 2, &[]), e(1, 3, &[]), e(1, 4, &[]), e(4, 5, &[])],
                vec![e(2, 4, &[1]), e(3, 4, &[1]), e(1, 5, &[4])],
                vec![e(2, 3, &[1, 4]), e(3, 5, &[1, 4])],
                vec![e(2, 5, &[1, 3, 4])],
            ],
        )
        .unwrap();
        let codes = ["gauss", "t", "clayton@90", "gumbel", "frank", "joe@180", "gumbel@270", "clayton", "t", "gauss"];
        let taus = [0.6, 0.3, -0.5, 0.7, -0.3, 0.35, -0.3, 0.35, -0.2, 0.13];
        let pairs = codes
            .iter()
            .zip(taus)
            .map(|(c, t)| BicopSpec::from_tau(c.parse().unwrap(), t, Some(5.0)).unwrap())
            .collect();
        RVineModel::new(s, pairs).unwrap()
    }

    #[test]
    fn cached_and_direct_evaluators_agree() {
        let m = mixed_model();
        let pts = [[0.5; 5], [0.1, 0.9, 0.3, 0.7, 0.5], [0.02, 0.4, 0.97, 0.6, 0.25]];
        for u in pts {
            let fast = m.log_density(&u).unwrap();
            let slow = direct_log_density(&m, &u);
            assert!((fast - slow).abs() < 1e-12, "{fast} vs {slow}");
        }
    }

    #[test]
    fn example_three_term_decomposition() {
        let s = RVineStructure::new(3, vec![vec![e(1, 2, &[]), e(2, 3, &[])], vec![e(1, 3, &[2])]]).unwrap();
        let c12 = BicopSpec::from_tau("gauss".parse().unwrap(), 0.5, None).unwrap();
        let c23 = BicopSpec::from_tau("clayton".parse().unwrap(), 0.5, None).unwrap();
        let c13 = BicopSpec::from_tau("gumbel".parse().unwrap(), 0.5, None).unwrap();
        let m = RVineModel::new(s, vec![c12, c23, c13]).unwrap();
        let u = [0.3, 0.65, 0.8];
        // c12(u1,u2) c23(u2,u3) c13|2(F(u1|u2), F(u3|u2))
        let want = c12.log_pdf(u[0], u[1]).unwrap()
            + c23.log_pdf(u[1], u[2]).unwrap()
            + c13.log_pdf(c12.hfunc(u[0], u[1]).unwrap(), c23.hfunc2(u[1], u[2]).unwrap()).unwrap();
        assert!((m.log_density(&u).unwrap() - want).abs() < 1e-14);
    }

    #[test]
    fn independence_model_has_zero_density_log() {
        let m = RVineModel::independence(RVineStructure::dvine(&[1, 2, 3, 4]).unwrap()).unwrap();
        assert_eq!(m.log_density(&[0.2, 0.4, 0.6, 0.8]).unwrap(), 0.0);
        assert_eq!(m.n_params(), 0);
    }

    #[test]
    fn rosenblatt_roundtrip() {
        let m = mixed_model();
        let mut buf = vec![(0.0, 0.0); 10];
        let w = [0.3, 0.8, 0.15, 0.5, 0.66];
        let u = m.inverse_rosenblatt(&w, &mut buf).unwrap();
        // forward transform: F(var | earlier vars) recomputed directly
        for (pos, (var, col)) in m.plan().sim_order.iter().enumerate() {
            let given: Vec<usize> = m.plan().sim_order[..pos].iter().map(|x| x.0).collect();
            assert_eq!(col.len(), given.len());
            let f = cond(&m, &u, *var, &given);
            assert!((f - w[pos]).abs() < 1e-9, "var {var}: {f} vs {}", w[pos]);
        }
    }

    #[test]
    fn simulation_is_reproducible_and_thread_independent() {
        let m = mixed_model();
        let a = m.simulate(600, 42).unwrap();
        let b = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap().install(|| m.simulate(600, 42).unwrap());
        assert_eq!(a, b);
        assert_ne!(a, m.simulate(600, 43).unwrap());
    }

    #[test]
    fn shared_df_layout() {
        let s = RVineStructure::dvine(&[1, 2, 3]).unwrap();
        let t = BicopSpec::new(BicopFamily::STUDENT_T, &[0.4, 6.0]).unwrap();
        let m = RVineModel::new(s, vec![t; 3]).unwrap().with_shared_df().unwrap();
        assert_eq!(m.n_params(), 4);
        assert!(m.layout().is_tied());
        assert_eq!(m.pairs()[2].params()[1], 7.0);
        let moved = m.with_params(&[0.1, 8.0, 0.2, 0.3]).unwrap();
        assert_eq!(moved.pairs()[0].params(), &[0.1, 8.0]);
        assert_eq!(moved.pairs()[2].params(), &[0.3, 9.0]);
        assert_eq!(moved.params(), vec![0.1, 8.0, 0.2, 0.3]);
        assert_eq!(moved.param_labels()[1], "nu(shared)");
    }
}
