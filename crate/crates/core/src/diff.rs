//! Per-observation score and Hessian of the vine log-density, and the
//! quantities built from them: sample information matrices, the d-vector
//! and its parameter gradient.

use crate::bicop::BicopKind;
use crate::error::{Result, VineError};
use crate::sample::CopulaSample;
use crate::vine::model::arg;
use crate::vine::structure::Source;
use crate::vine::RVineModel;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

const CHUNK: usize = 256;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiffMethod {
    /// Exact chain rule through the h-function recursion. Fails with
    /// `Unsupported` when an edge lacks closed-form parameter derivatives.
    Analytic,
    /// Central differences of the log-density in the parameters.
    FiniteDiff,
    /// Exact where available, differences in the Student-t degrees of freedom.
    #[default]
    Auto,
}

impl std::str::FromStr for DiffMethod {
    type Err = VineError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "analytic" => Ok(DiffMethod::Analytic),
            "fd" | "finite-diff" | "finitediff" => Ok(DiffMethod::FiniteDiff),
            "auto" => Ok(DiffMethod::Auto),
            _ => Err(VineError::Config(format!("unknown derivative method '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObsDerivatives {
    pub score: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

/// Lower triangle of a square matrix, column by column.
pub fn vech(m: &DMatrix<f64>) -> DVector<f64> {
    let p = m.nrows();
    let mut out = Vec::with_capacity(p * (p + 1) / 2);
    for j in 0..p {
        for i in j..p {
            out.push(m[(i, j)]);
        }
    }
    DVector::from_vec(out)
}

/// Inverse of [`vech`] for symmetric matrices.
pub fn unvech(v: &DVector<f64>) -> Result<DMatrix<f64>> {
    let q = v.len();
    let p = (((8 * q + 1) as f64).sqrt() as usize).saturating_sub(1) / 2;
    if p * (p + 1) / 2 != q {
        return Err(VineError::Numerical(format!("length {q} is not triangular")));
    }
    let mut m = DMatrix::zeros(p, p);
    let mut k = 0;
    for j in 0..p {
        for i in j..p {
            m[(i, j)] = v[k];
            m[(j, i)] = v[k];
            k += 1;
        }
    }
    Ok(m)
}

fn vech_into(h: &[f64], s: &[f64], p: usize, out: &mut [f64]) {
    let mut k = 0;
    for j in 0..p {
        for i in j..p {
            out[k] = h[i * p + j] + s[i] * s[j];
            k += 1;
        }
    }
}

/// Value with gradient and Hessian over a subset of the global parameters.
#[derive(Clone, Debug, Default)]
struct SparseJet {
    v: f64,
    g: Vec<f64>,
    /// Row-major, symmetric.
    h: Vec<f64>,
}

impl SparseJet {
    fn zeros(m: usize) -> Self {
        SparseJet { v: 0.0, g: vec![0.0; m], h: vec![0.0; m * m] }
    }
}

#[derive(Clone, Debug, Default)]
struct EdgeJets {
    log_pdf: SparseJet,
    h1: SparseJet,
    h2: SparseJet,
}

/// Static bookkeeping for the chain rule through the vine.
struct DerivPlan {
    p: usize,
    /// Global parameters each edge's outputs depend on, sorted.
    active: Vec<Vec<usize>>,
    /// Positions of the first (second) argument's active set within `active[e]`.
    map_a: Vec<Vec<usize>>,
    map_b: Vec<Vec<usize>>,
    /// Position of each of the edge's own parameters within `active[e]`.
    param_pos: Vec<Vec<usize>>,
    /// Edges to recompute when a global parameter moves.
    affected: Vec<Vec<usize>>,
}

impl DerivPlan {
    fn new(model: &RVineModel) -> Self {
        let plan = model.plan();
        let layout = model.layout();
        let m = model.pairs().len();
        let p = model.n_params();
        let mut active: Vec<Vec<usize>> = Vec::with_capacity(m);
        let src_active = |active: &Vec<Vec<usize>>, s: Source| -> Vec<usize> {
            match s {
                Source::Var(_) => vec![],
                Source::H1(e) | Source::H2(e) => active[e].clone(),
            }
        };
        let mut map_a = Vec::with_capacity(m);
        let mut map_b = Vec::with_capacity(m);
        let mut param_pos = Vec::with_capacity(m);
        for e in 0..m {
            let (l, r) = plan.args[e];
            let a = src_active(&active, l);
            let b = src_active(&active, r);
            let own: Vec<usize> = layout.slots(e).iter().map(|s| s.index).collect();
            let mut set: Vec<usize> = a.iter().chain(&b).chain(&own).copied().collect();
            set.sort_unstable();
            set.dedup();
            let pos = |g: &usize| set.binary_search(g).unwrap();
            map_a.push(a.iter().map(pos).collect());
            map_b.push(b.iter().map(pos).collect());
            param_pos.push(own.iter().map(pos).collect());
            active.push(set);
        }
        let mut affected = vec![Vec::new(); p];
        for (e, d) in plan.descendants.iter().enumerate() {
            for s in layout.slots(e) {
                affected[s.index].extend(d.iter().copied());
            }
        }
        for a in &mut affected {
            a.sort_unstable();
            a.dedup();
        }
        DerivPlan { p, active, map_a, map_b, param_pos, affected }
    }

    fn workspace(&self) -> Vec<EdgeJets> {
        self.active
            .iter()
            .map(|a| {
                let k = a.len();
                EdgeJets { log_pdf: SparseJet::zeros(k), h1: SparseJet::zeros(k), h2: SparseJet::zeros(k) }
            })
            .collect()
    }
}

/// Chain rule for one output `q = f(a, b, theta_e)`.
fn chain_out(
    f: &crate::jet::Jet<4>,
    inputs: [Option<(&SparseJet, &[usize])>; 2],
    param_pos: &[usize],
    out: &mut SparseJet,
) {
    let m = out.g.len();
    out.v = f.v;
    if m == 0 {
        return;
    }
    // dense Jacobian rows of (a, b, p1, p2) over the edge's active set
    let mut jac = vec![0.0f64; 4 * m];
    for (i, inp) in inputs.iter().enumerate() {
        if let Some((jet, map)) = inp {
            for (k, &pos) in map.iter().enumerate() {
                jac[i * m + pos] = jet.g[k];
            }
        }
    }
    for (k, &pos) in param_pos.iter().enumerate() {
        jac[(2 + k) * m + pos] = 1.0;
    }
    let rows: Vec<&[f64]> = jac.chunks(m.max(1)).collect();
    let used: Vec<usize> = (0..4)
        .filter(|&i| (i < 2 && inputs[i].is_some()) || (i >= 2 && i - 2 < param_pos.len()))
        .collect();
    for x in out.g.iter_mut() {
        *x = 0.0;
    }
    for x in out.h.iter_mut() {
        *x = 0.0;
    }
    for &i in &used {
        let fi = f.g[i];
        if fi != 0.0 {
            for (o, &r) in out.g.iter_mut().zip(rows[i]) {
                *o += fi * r;
            }
        }
    }
    // sum_ij f_ij J_i J_j^T via w_i = sum_j f_ij J_j
    let mut w = vec![0.0; m];
    for &i in &used {
        w.iter_mut().for_each(|x| *x = 0.0);
        for &j in &used {
            let fij = f.h[i][j];
            if fij != 0.0 {
                for (x, &r) in w.iter_mut().zip(rows[j]) {
                    *x += fij * r;
                }
            }
        }
        for (s, &ji) in rows[i].iter().enumerate() {
            if ji != 0.0 {
                let base = s * m;
                for t in 0..m {
                    out.h[base + t] += ji * w[t];
                }
            }
        }
    }
    for (i, inp) in inputs.iter().enumerate() {
        if let Some((jet, map)) = inp {
            let fi = f.g[i];
            if fi == 0.0 {
                continue;
            }
            let k = map.len();
            for s in 0..k {
                for t in 0..k {
                    out.h[map[s] * m + map[t]] += fi * jet.h[s * k + t];
                }
            }
        }
    }
}

fn eval_edge(model: &RVineModel, dp: &DerivPlan, e: usize, u: &[f64], lower: &[EdgeJets], lower_alt: Option<(&[EdgeJets], &[bool])>, out: &mut EdgeJets) {
    let plan = model.plan();
    let (l, r) = plan.args[e];
    let pick = |s: Source| -> Option<&SparseJet> {
        let (id, first) = match s {
            Source::Var(_) => return None,
            Source::H1(id) => (id, true),
            Source::H2(id) => (id, false),
        };
        let src = match lower_alt {
            Some((alt, flag)) if flag[id] => &alt[id],
            _ => &lower[id],
        };
        Some(if first { &src.h1 } else { &src.h2 })
    };
    let ja = pick(l);
    let jb = pick(r);
    let va = ja.map_or_else(|| arg(l, u, &[]), |j| j.v);
    let vb = jb.map_or_else(|| arg(r, u, &[]), |j| j.v);
    let local = model.pairs()[e].local_jet(va, vb);
    let inputs = [ja.map(|j| (j, &dp.map_a[e][..])), jb.map(|j| (j, &dp.map_b[e][..]))];
    chain_out(&local.log_pdf, inputs.clone(), &dp.param_pos[e], &mut out.log_pdf);
    if plan.need_h1[e] {
        chain_out(&local.h1, inputs.clone(), &dp.param_pos[e], &mut out.h1);
    }
    if plan.need_h2[e] {
        chain_out(&local.h2, inputs, &dp.param_pos[e], &mut out.h2);
    }
}

fn eval_all(model: &RVineModel, dp: &DerivPlan, u: &[f64], ws: &mut [EdgeJets]) {
    for e in 0..ws.len() {
        let (lower, rest) = ws.split_at_mut(e);
        eval_edge(model, dp, e, u, lower, None, &mut rest[0]);
    }
}

/// Recompute the edges affected by parameter `k` into `alt`, reading unaffected inputs from `base`.
fn eval_affected(model: &RVineModel, dp: &DerivPlan, k: usize, u: &[f64], base: &[EdgeJets], alt: &mut [EdgeJets], flag: &mut [bool]) {
    flag.iter_mut().for_each(|f| *f = false);
    for &e in &dp.affected[k] {
        flag[e] = true;
    }
    for &e in &dp.affected[k] {
        let (lower, rest) = alt.split_at_mut(e);
        eval_edge(model, dp, e, u, base, Some((lower, flag)), &mut rest[0]);
    }
}

/// Dense score and Hessian (row-major) from per-edge log-density jets.
fn accumulate<'a>(dp: &DerivPlan, jets: impl Fn(usize) -> &'a SparseJet, n_edges: usize, score: &mut [f64], hess: &mut [f64]) -> f64 {
    let p = dp.p;
    score.iter_mut().for_each(|x| *x = 0.0);
    hess.iter_mut().for_each(|x| *x = 0.0);
    let mut total = 0.0;
    for e in 0..n_edges {
        let j = jets(e);
        total += j.v;
        let act = &dp.active[e];
        let m = act.len();
        for (s, &gs) in act.iter().enumerate() {
            score[gs] += j.g[s];
            for (t, &gt) in act.iter().enumerate() {
                hess[gs * p + gt] += j.h[s * m + t];
            }
        }
    }
    total
}

/// Per-observation derivatives computed by one method, with workspace reuse.
struct ObsEngine<'a> {
    model: &'a RVineModel,
    dp: DerivPlan,
    /// Perturbed models for the finite-difference method: `[+h_i, -h_i]`
    /// and pairs `(+-h_i, +-h_j)` keyed by `(i, j)`.
    fd: Option<FdModels>,
}

struct FdModels {
    hg: Vec<f64>,
    hh: Vec<f64>,
    plus: Vec<RVineModel>,
    minus: Vec<RVineModel>,
    /// `cross[i][j]` for `i <= j`: models at `theta + si*hh_i + sj*hh_j` for sign pairs (++, +-, -+, --).
    cross: Vec<Vec<[RVineModel; 4]>>,
}

struct Workspace {
    base: Vec<EdgeJets>,
    alt: Vec<EdgeJets>,
    flag: Vec<bool>,
    row_buf: Vec<(f64, f64)>,
}

impl<'a> ObsEngine<'a> {
    fn new(model: &'a RVineModel, method: DiffMethod) -> Result<Self> {
        if method == DiffMethod::Analytic {
            if let Some(p) = model.pairs().iter().find(|p| !p.has_closed_form_derivatives()) {
                return Err(VineError::Unsupported(format!(
                    "no closed-form derivatives for {}; use finite differences",
                    p.family()
                )));
            }
        }
        let fd = if method == DiffMethod::FiniteDiff { Some(FdModels::new(model)?) } else { None };
        Ok(ObsEngine { model, dp: DerivPlan::new(model), fd })
    }

    fn workspace(&self) -> Workspace {
        Workspace {
            base: self.dp.workspace(),
            alt: self.dp.workspace(),
            flag: vec![false; self.model.pairs().len()],
            row_buf: vec![(0.0, 0.0); self.model.pairs().len()],
        }
    }

    /// Score and row-major Hessian at `u`; returns the log density.
    fn derivs(&self, u: &[f64], ws: &mut Workspace, score: &mut [f64], hess: &mut [f64]) -> f64 {
        match &self.fd {
            Some(fd) => fd.derivs(self.model, u, &mut ws.row_buf, score, hess),
            None => {
                eval_all(self.model, &self.dp, u, &mut ws.base);
                let base = &ws.base;
                accumulate(&self.dp, |e| &base[e].log_pdf, base.len(), score, hess)
            }
        }
    }
}

impl FdModels {
    fn new(model: &RVineModel) -> Result<Self> {
        let theta = model.params();
        let p = theta.len();
        let hg: Vec<f64> = theta.iter().map(|t| 1e-5 * t.abs().max(1.0)).collect();
        let hh: Vec<f64> = theta.iter().map(|t| 1e-4 * t.abs().max(1.0)).collect();
        let shifted = |moves: &[(usize, f64)]| -> Result<RVineModel> {
            let mut t = theta.clone();
            for &(i, dx) in moves {
                t[i] += dx;
            }
            model.with_params(&t).map_err(|_| {
                VineError::Numerical("finite-difference step leaves the parameter domain".into())
            })
        };
        let mut plus = Vec::with_capacity(p);
        let mut minus = Vec::with_capacity(p);
        for i in 0..p {
            plus.push(shifted(&[(i, hg[i])])?);
            minus.push(shifted(&[(i, -hg[i])])?);
        }
        let mut cross = Vec::with_capacity(p);
        for i in 0..p {
            let mut row = Vec::with_capacity(p - i);
            for j in i..p {
                let (a, b) = (hh[i], hh[j]);
                row.push([
                    shifted(&[(i, a), (j, b)])?,
                    shifted(&[(i, a), (j, -b)])?,
                    shifted(&[(i, -a), (j, b)])?,
                    shifted(&[(i, -a), (j, -b)])?,
                ]);
            }
            cross.push(row);
        }
        Ok(FdModels { hg, hh, plus, minus, cross })
    }

    fn derivs(&self, model: &RVineModel, u: &[f64], buf: &mut [(f64, f64)], score: &mut [f64], hess: &mut [f64]) -> f64 {
        let p = self.hg.len();
        let f0 = model.eval_row(u, buf);
        for i in 0..p {
            score[i] = (self.plus[i].eval_row(u, buf) - self.minus[i].eval_row(u, buf)) / (2.0 * self.hg[i]);
        }
        for i in 0..p {
            for j in i..p {
                let m = &self.cross[i][j - i];
                let f: Vec<f64> = m.iter().map(|x| x.eval_row(u, buf)).collect();
                let v = (f[0] - f[1] - f[2] + f[3]) / (4.0 * self.hh[i] * self.hh[j]);
                hess[i * p + j] = v;
                hess[j * p + i] = v;
            }
        }
        f0
    }
}

/// Score and Hessian of the log density at one observation.
pub fn observation_derivs(model: &RVineModel, u: &[f64], method: DiffMethod) -> Result<ObsDerivatives> {
    if u.len() != model.d() {
        return Err(VineError::DegenerateSample(format!("observation of length {}, expected {}", u.len(), model.d())));
    }
    if let Some(&bad) = u.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(VineError::Domain { value: bad });
    }
    let eng = ObsEngine::new(model, method)?;
    let p = model.n_params();
    let mut ws = eng.workspace();
    let mut s = vec![0.0; p];
    let mut h = vec![0.0; p * p];
    eng.derivs(u, &mut ws, &mut s, &mut h);
    let out = ObsDerivatives { score: DVector::from_vec(s), hessian: DMatrix::from_row_slice(p, p, &h) };
    check_finite(&out.score, &out.hessian)?;
    Ok(out)
}

fn check_finite(s: &DVector<f64>, h: &DMatrix<f64>) -> Result<()> {
    if s.iter().chain(h.iter()).all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(VineError::Numerical("non-finite score or Hessian".into()))
    }
}

/// Sample counterparts of the expected Hessian and the expected outer
/// product of the score, with per-observation scores and d-vectors.
#[derive(Clone, Debug)]
pub struct InfoParts {
    pub n: usize,
    pub p: usize,
    /// `n x p`.
    pub scores: DMatrix<f64>,
    /// `n x p(p+1)/2`, rows `vech(H_t + s_t s_t')`.
    pub d_obs: DMatrix<f64>,
    pub h_bar: DMatrix<f64>,
    pub c_bar: DMatrix<f64>,
    pub d_bar: DVector<f64>,
    /// `p(p+1)/2 x p`; present when requested.
    pub grad_d: Option<DMatrix<f64>>,
    pub loglik: f64,
}

struct ChunkOut {
    scores: Vec<f64>,
    d_obs: Vec<f64>,
    h_sum: Vec<f64>,
    c_sum: Vec<f64>,
    grad_sum: Vec<f64>,
    loglik: f64,
}

/// One parameter's finite-difference stencil for the d-vector gradient:
/// `(model, weight)` pairs; `None` stands for the unperturbed model.
struct Stencil {
    k: usize,
    terms: Vec<(Option<RVineModel>, f64)>,
}

fn stencils(model: &RVineModel) -> Result<Vec<Stencil>> {
    let theta = model.params();
    let mut out = Vec::with_capacity(theta.len());
    for k in 0..theta.len() {
        let h = 1e-4 * theta[k].abs().max(1.0);
        let at = |m: f64| {
            let mut t = theta.clone();
            t[k] += m * h;
            model.with_params(&t).ok()
        };
        let terms = match (at(1.0), at(-1.0)) {
            (Some(p), Some(m)) => vec![(Some(p), 0.5 / h), (Some(m), -0.5 / h)],
            (Some(p), None) => {
                let p2 = at(2.0).ok_or_else(|| VineError::Numerical("no admissible difference stencil".into()))?;
                vec![(None, -1.5 / h), (Some(p), 2.0 / h), (Some(p2), -0.5 / h)]
            }
            (None, Some(m)) => {
                let m2 = at(-2.0).ok_or_else(|| VineError::Numerical("no admissible difference stencil".into()))?;
                vec![(None, 1.5 / h), (Some(m), -2.0 / h), (Some(m2), 0.5 / h)]
            }
            (None, None) => return Err(VineError::Numerical("no admissible difference stencil".into())),
        };
        out.push(Stencil { k, terms });
    }
    Ok(out)
}

/// Everything the information-matrix test needs from one pass over the sample.
/// Chunks of 256 observations are reduced in index order, so results do not
/// depend on the thread count.
pub fn information_parts(model: &RVineModel, sample: &CopulaSample, method: DiffMethod, with_grad: bool) -> Result<InfoParts> {
    if sample.d() != model.d() {
        return Err(VineError::DegenerateSample(format!("sample has {} columns, model {}", sample.d(), model.d())));
    }
    let n = sample.n();
    if n == 0 {
        return Err(VineError::DegenerateSample("empty sample".into()));
    }
    let p = model.n_params();
    let q = p * (p + 1) / 2;
    let eng = ObsEngine::new(model, method)?;
    let stencils = if with_grad && p > 0 { stencils(model)? } else { Vec::new() };
    let engines: Vec<Vec<Option<ObsEngine>>> = stencils
            .iter()
            .map(|s| {
                s.terms
                    .iter()
                    .map(|(m, _)| m.as_ref().map(|m| ObsEngine::new(m, method)).transpose())
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
    let data = sample.as_row_major();
    let d = sample.d();
    let chunks: Vec<ChunkOut> = data
        .par_chunks(CHUNK * d)
        .map(|rows| {
            let mut ws = eng.workspace();
            let mut ws2 = eng.workspace();
            let nr = rows.len() / d;
            let mut c = ChunkOut {
                scores: Vec::with_capacity(nr * p),
                d_obs: Vec::with_capacity(nr * q),
                h_sum: vec![0.0; p * p],
                c_sum: vec![0.0; p * p],
                grad_sum: vec![0.0; q * p],
                loglik: 0.0,
            };
            let mut s = vec![0.0; p];
            let mut h = vec![0.0; p * p];
            let mut dv = vec![0.0; q];
            let mut s2 = vec![0.0; p];
            let mut h2 = vec![0.0; p * p];
            let mut dv2 = vec![0.0; q];
            for u in rows.chunks(d) {
                c.loglik += eng.derivs(u, &mut ws, &mut s, &mut h);
                vech_into(&h, &s, p, &mut dv);
                c.scores.extend_from_slice(&s);
                c.d_obs.extend_from_slice(&dv);
                for i in 0..p {
                    for j in 0..p {
                        c.h_sum[i * p + j] += h[i * p + j];
                        c.c_sum[i * p + j] += s[i] * s[j];
                    }
                }
                for (st, engs) in stencils.iter().zip(&engines) {
                    for ((_, w), e2) in st.terms.iter().zip(engs) {
                        match e2 {
                            None => {
                                for r in 0..q {
                                    c.grad_sum[r * p + st.k] += w * dv[r];
                                }
                            }
                            Some(e2) => {
                                if e2.fd.is_some() {
                                    e2.derivs(u, &mut ws2, &mut s2, &mut h2);
                                } else {
                                    // only edges depending on theta_k change
                                    eval_affected(e2.model, &e2.dp, st.k, u, &ws.base, &mut ws2.alt, &mut ws2.flag);
                                    let (base, alt, flag) = (&ws.base, &ws2.alt, &ws2.flag);
                                    accumulate(
                                        &e2.dp,
                                        |e| if flag[e] { &alt[e].log_pdf } else { &base[e].log_pdf },
                                        base.len(),
                                        &mut s2,
                                        &mut h2,
                                    );
                                }
                                vech_into(&h2, &s2, p, &mut dv2);
                                for r in 0..q {
                                    c.grad_sum[r * p + st.k] += w * dv2[r];
                                }
                            }
                        }
                    }
                }
            }
            c
        })
        .collect();
    let nf = n as f64;
    let mut scores = Vec::with_capacity(n * p);
    let mut d_obs = Vec::with_capacity(n * q);
    let mut h_sum = vec![0.0; p * p];
    let mut c_sum = vec![0.0; p * p];
    let mut g_sum = vec![0.0; q * p];
    let mut loglik = 0.0;
    for c in chunks {
        scores.extend(c.scores);
        d_obs.extend(c.d_obs);
        for (a, b) in h_sum.iter_mut().zip(&c.h_sum) {
            *a += b;
        }
        for (a, b) in c_sum.iter_mut().zip(&c.c_sum) {
            *a += b;
        }
        for (a, b) in g_sum.iter_mut().zip(&c.grad_sum) {
            *a += b;
        }
        loglik += c.loglik;
    }
    let sym = |m: DMatrix<f64>| (&m + m.transpose()) * 0.5;
    let h_bar = sym(DMatrix::from_row_slice(p, p, &h_sum) / nf);
    let c_bar = sym(DMatrix::from_row_slice(p, p, &c_sum) / nf);
    let d_obs = DMatrix::from_row_slice(n, q, &d_obs);
    let d_bar = DVector::from_iterator(q, d_obs.column_iter().map(|c| c.sum() / nf));
    let grad_d = (with_grad && p > 0).then(|| DMatrix::from_row_slice(q, p, &g_sum) / nf);
    let out = InfoParts {
        n,
        p,
        scores: DMatrix::from_row_slice(n, p, &scores),
        d_obs,
        h_bar,
        c_bar,
        d_bar,
        grad_d,
        loglik,
    };
    if !out.scores.iter().chain(out.d_obs.iter()).all(|x| x.is_finite())
        || out.grad_d.as_ref().is_some_and(|g| !g.iter().all(|x| x.is_finite()))
    {
        return Err(VineError::Numerical("non-finite derivatives on the sample".into()));
    }
    Ok(out)
}

/// `(H_bar, C_bar)`.
/// Log-likelihood and summed score over the sample.
pub(crate) fn score_sum(model: &RVineModel, sample: &CopulaSample, method: DiffMethod) -> Result<(f64, Vec<f64>)> {
    let p = model.n_params();
    let eng = ObsEngine::new(model, method)?;
    let d = sample.d();
    let parts: Vec<(f64, Vec<f64>)> = sample
        .as_row_major()
        .par_chunks(CHUNK * d)
        .map(|rows| {
            let mut ws = eng.workspace();
            let mut s = vec![0.0; p];
            let mut h = vec![0.0; p * p];
            let mut acc = (0.0, vec![0.0; p]);
            for u in rows.chunks(d) {
                acc.0 += eng.derivs(u, &mut ws, &mut s, &mut h);
                acc.1.iter_mut().zip(&s).for_each(|(a, b)| *a += b);
            }
            acc
        })
        .collect();
    let mut out = (0.0, vec![0.0; p]);
    for (l, g) in parts {
        out.0 += l;
        out.1.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    if !out.0.is_finite() || out.1.iter().any(|x| !x.is_finite()) {
        return Err(VineError::Numerical("non-finite log-likelihood or score".into()));
    }
    Ok(out)
}

pub fn sample_matrices(model: &RVineModel, sample: &CopulaSample, method: DiffMethod) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let parts = information_parts(model, sample, method, false)?;
    Ok((parts.h_bar, parts.c_bar))
}

/// `(d_bar, per-observation d-vectors as rows)`.
pub fn d_vector(model: &RVineModel, sample: &CopulaSample, method: DiffMethod) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let parts = information_parts(model, sample, method, false)?;
    Ok((parts.d_bar, parts.d_obs))
}

/// Mean parameter gradient of the d-vector, `p(p+1)/2 x p`.
pub fn grad_d(model: &RVineModel, sample: &CopulaSample, method: DiffMethod) -> Result<DMatrix<f64>> {
    if model.n_params() == 0 {
        return Err(VineError::Unsupported("model has no parameters".into()));
    }
    let parts = information_parts(model, sample, method, true)?;
    Ok(parts.grad_d.expect("requested"))
}

/// Write `H_bar`, `C_bar`, `d_bar` and `grad_D` as CSV files into `dir`.
pub fn dump_matrices(parts: &InfoParts, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let write = |name: &str, m: &DMatrix<f64>| -> Result<()> {
        let header = crate::sample::header(m.ncols(), "c");
        let values: Vec<f64> = m.row_iter().flat_map(|r| r.iter().copied().collect::<Vec<_>>()).collect();
        let f = std::io::BufWriter::new(std::fs::File::create(dir.join(name))?);
        crate::sample::write_matrix_csv(f, &header, m.nrows(), &values)
    };
    write("h_bar.csv", &parts.h_bar)?;
    write("c_bar.csv", &parts.c_bar)?;
    write("d_bar.csv", &DMatrix::from_column_slice(parts.d_bar.len(), 1, parts.d_bar.as_slice()))?;
    if let Some(g) = &parts.grad_d {
        write("grad_d.csv", g)?;
    }
    Ok(())
}

/// Whether every edge of the model has closed-form parameter derivatives.
pub fn supports_analytic(model: &RVineModel) -> bool {
    model.pairs().iter().all(|p| p.has_closed_form_derivatives() || p.family().kind == BicopKind::Independence)
}
