//! Line-oriented vine specification files.
//!
//! ```text
//! d=3
//! tree=1 cond=1,2 given= family=gauss params=0.5
//! tree=1 cond=2,3 given= family=clayton@90 params=2
//! tree=2 cond=1,3 given=2 family=t params=0.3,5
//! ```
//!
//! `family` and `params` may be omitted for structure-only files. An
//! optional line `shared_df=true` ties the degrees of freedom of all t
//! edges. Blank lines and lines starting with `#` are ignored.

use super::model::RVineModel;
use super::structure::{RVineStructure, VineEdge};
use crate::bicop::{BicopFamily, BicopSpec};
use crate::error::{Result, VineError};
use std::fmt::Write as _;
use std::path::Path;

/// Parsed contents of a specification file, edges in structure order.
#[derive(Clone, Debug)]
pub struct VineSpecFile {
    pub structure: RVineStructure,
    pub families: Vec<Option<BicopFamily>>,
    pub params: Vec<Option<Vec<f64>>>,
    pub shared_df: bool,
}

impl VineSpecFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut d = None;
        let mut shared_df = false;
        let mut rows: Vec<(usize, VineEdge, Option<BicopFamily>, Option<Vec<f64>>)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let s = raw.trim();
            if s.is_empty() || s.starts_with('#') {
                continue;
            }
            let perr = |msg: String| VineError::Parse { line, msg };
            if let Some(v) = s.strip_prefix("d=") {
                if d.is_some() {
                    return Err(perr("duplicate dimension line".into()));
                }
                let v: usize = v.trim().parse().map_err(|_| perr(format!("bad dimension '{v}'")))?;
                if v < 2 {
                    return Err(perr("dimension must be at least 2".into()));
                }
                d = Some(v);
                continue;
            }
            if let Some(v) = s.strip_prefix("shared_df=") {
                shared_df = match v.trim() {
                    "true" | "yes" | "1" => true,
                    "false" | "no" | "0" => false,
                    other => return Err(perr(format!("bad shared_df value '{other}'"))),
                };
                continue;
            }
            let Some(d) = d else {
                return Err(perr("edge before the 'd=' line".into()));
            };
            rows.push(parse_edge(s, d).map(|(e, f, p)| (line, e, f, p)).map_err(perr)?);
        }
        let d = d.ok_or(VineError::Parse { line: 1, msg: "missing 'd=' line".into() })?;
        let mut trees: Vec<Vec<(usize, VineEdge, Option<BicopFamily>, Option<Vec<f64>>)>> = vec![Vec::new(); d - 1];
        for r in rows {
            trees[r.1.tree - 1].push(r);
        }
        for (t, tree) in trees.iter().enumerate() {
            if tree.len() != d - t - 1 {
                let line = tree.first().map_or(1, |r| r.0);
                return Err(VineError::Parse {
                    line,
                    msg: format!("tree {} has {} edges, expected {}", t + 1, tree.len(), d - t - 1),
                });
            }
        }
        let structure = RVineStructure::new(d, trees.iter().map(|t| t.iter().map(|r| r.1.clone()).collect()).collect())?;
        let mut families = Vec::new();
        let mut params = Vec::new();
        for (line, _, f, p) in trees.into_iter().flatten() {
            if let (Some(f), Some(p)) = (f, &p) {
                BicopSpec::new(f, p).map_err(|e| VineError::Parse { line, msg: e.to_string() })?;
            }
            families.push(f);
            params.push(p);
        }
        Ok(VineSpecFile { structure, families, params, shared_df })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Family of every edge; fails if any is missing.
    pub fn families(&self) -> Result<Vec<BicopFamily>> {
        self.families
            .iter()
            .enumerate()
            .map(|(i, f)| f.ok_or_else(|| VineError::Config(format!("edge {} has no family", self.structure.edge(i)))))
            .collect()
    }

    /// Full model; every edge needs a family and parameters.
    pub fn model(&self) -> Result<RVineModel> {
        let fams = self.families()?;
        let pairs = fams
            .iter()
            .zip(&self.params)
            .enumerate()
            .map(|(i, (&f, p))| match p {
                Some(p) => BicopSpec::new(f, p),
                None if f.n_params() == 0 => Ok(BicopSpec::independence()),
                None => Err(VineError::Config(format!("edge {} has no parameters", self.structure.edge(i)))),
            })
            .collect::<Result<Vec<_>>>()?;
        let m = RVineModel::new(self.structure.clone(), pairs)?;
        if self.shared_df {
            m.with_shared_df()
        } else {
            Ok(m)
        }
    }
}

fn parse_edge(s: &str, d: usize) -> std::result::Result<(VineEdge, Option<BicopFamily>, Option<Vec<f64>>), String> {
    let (mut tree, mut cond, mut given, mut family, mut params) = (None, None, None, None, None);
    for tok in s.split_whitespace() {
        let (k, v) = tok.split_once('=').ok_or_else(|| format!("expected key=value, got '{tok}'"))?;
        let slot = match k {
            "tree" => &mut tree,
            "cond" => &mut cond,
            "given" => &mut given,
            "family" => &mut family,
            "params" => &mut params,
            _ => return Err(format!("unknown key '{k}'")),
        };
        if slot.replace(v).is_some() {
            return Err(format!("duplicate key '{k}'"));
        }
    }
    let tree: usize = tree.ok_or("missing tree=")?.parse().map_err(|_| "bad tree level".to_string())?;
    let vars = |v: &str| -> std::result::Result<Vec<usize>, String> {
        v.split(',')
            .filter(|x| !x.trim().is_empty())
            .map(|x| {
                let j: usize = x.trim().parse().map_err(|_| format!("bad variable index '{x}'"))?;
                if j == 0 || j > d {
                    return Err(format!("variable {j} outside 1..={d}"));
                }
                Ok(j)
            })
            .collect()
    };
    let cond = vars(cond.ok_or("missing cond=")?)?;
    let given = vars(given.unwrap_or(""))?;
    if cond.len() != 2 || cond[0] == cond[1] {
        return Err("cond= needs two distinct variables".into());
    }
    if given.iter().any(|g| cond.contains(g)) {
        return Err("a conditioned variable is also in the conditioning set".into());
    }
    let edge = VineEdge::new(cond[0], cond[1], &given);
    if edge.conditioning.windows(2).any(|w| w[0] == w[1]) {
        return Err("repeated variable in given=".into());
    }
    if tree == 0 || tree >= d || edge.tree != tree {
        return Err(format!("tree {tree} needs a conditioning set of size {}", tree.saturating_sub(1)));
    }
    let family = family.map(|f| f.parse::<BicopFamily>().map_err(|e| e.to_string())).transpose()?;
    let params = params
        .map(|p| {
            p.split(',')
                .filter(|x| !x.is_empty())
                .map(|x| x.parse::<f64>().map_err(|_| format!("bad parameter '{x}'")))
                .collect::<std::result::Result<Vec<f64>, String>>()
        })
        .transpose()?;
    if let (Some(f), Some(p)) = (family, &params) {
        if p.len() != f.n_params() {
            return Err(format!("family {f} takes {} parameters, got {}", f.n_params(), p.len()));
        }
    }
    Ok((edge, family, params))
}

fn edge_line(out: &mut String, e: &VineEdge) {
    let given: Vec<String> = e.conditioning.iter().map(|x| x.to_string()).collect();
    let _ = write!(out, "tree={} cond={},{} given={}", e.tree, e.conditioned.0, e.conditioned.1, given.join(","));
}

/// Structure, optionally with families, without parameters.
pub fn write_structure(structure: &RVineStructure, families: Option<&[BicopFamily]>) -> String {
    let mut out = format!("d={}\n", structure.d());
    for (i, e) in structure.edges().enumerate() {
        edge_line(&mut out, e);
        if let Some(f) = families {
            let _ = write!(out, " family={}", f[i]);
        }
        out.push('\n');
    }
    out
}

/// Full model; parameters are written in shortest round-trip form.
pub fn write_model(model: &RVineModel) -> String {
    let mut out = format!("d={}\n", model.d());
    if model.layout().is_tied() {
        out.push_str("shared_df=true\n");
    }
    for (e, p) in model.structure().edges().zip(model.pairs()) {
        edge_line(&mut out, e);
        let params: Vec<String> = p.params().iter().map(|x| x.to_string()).collect();
        let _ = writeln!(out, " family={} params={}", p.family(), params.join(","));
    }
    out
}

pub fn read_model(path: impl AsRef<Path>) -> Result<RVineModel> {
    VineSpecFile::read(path)?.model()
}

pub fn write_model_file(model: &RVineModel, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, write_model(model))?;
    Ok(())
}
