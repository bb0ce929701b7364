//! Saved planners: a manifest plus one dense text matrix per array.
//!
//! Matrix files hold a `rows cols` line followed by one line per row of
//! space-separated decimals written in shortest round-trip form, so a reload
//! is bit-identical.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use sha2::{Digest, Sha256};

use crate::abstraction::{MacroDecomposition, PolicyMap};
use crate::core_model::GenerativeModel;
use crate::error::{io_err, Error, Result};
use crate::planner::{Planner, Selection};
use crate::successor::{SuccessorMatrix, ValueScore};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub format_version: u32,
    pub config_hash: String,
    pub seed: u64,
    /// Seconds since the Unix epoch when the artifact was built.
    pub created: u64,
    /// SHA-256 over the matrix files in name order.
    pub content_hash: String,
    pub scalars: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifact {
    pub manifest: Manifest,
    pub matrices: BTreeMap<String, DMatrix<f64>>,
}

fn row(v: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(1, v.len(), v.as_slice())
}

fn row_usize(v: &[usize]) -> DMatrix<f64> {
    DMatrix::from_iterator(1, v.len(), v.iter().map(|&x| x as f64))
}

fn rows(data: Vec<Vec<f64>>, width: usize) -> DMatrix<f64> {
    let flat: Vec<f64> = data.into_iter().flatten().collect();
    DMatrix::from_row_slice(flat.len() / width, width, &flat)
}

impl RunArtifact {
    pub fn from_planner(planner: &Planner, config_hash: &str, seed: u64) -> Self {
        let mut m = BTreeMap::new();
        let mut sc = BTreeMap::new();
        let model = &planner.model;
        m.insert("A".to_string(), model.a.clone());
        for (a, b) in model.b.iter().enumerate() {
            m.insert(format!("B_{a}"), b.clone());
        }
        m.insert("C".into(), row(&model.c));
        m.insert("D".into(), row(&model.d));
        m.insert("M".into(), planner.sr.m.clone());
        m.insert("goal_observations".into(), row_usize(&planner.goal_observations));
        sc.insert("n_actions".into(), model.b.len().to_string());
        sc.insert("gamma".into(), planner.sr.gamma.to_string());
        sc.insert("alpha".into(), planner.sr.alpha.to_string());
        sc.insert("update_count".into(), planner.sr.update_count.to_string());
        sc.insert(
            "score".into(),
            match planner.score {
                ValueScore::Shifted => "shifted",
                ValueScore::Raw => "raw",
            }
            .into(),
        );
        match planner.selection {
            Selection::Greedy => {
                sc.insert("selection".into(), "greedy".into());
            }
            Selection::Sample { precision } => {
                sc.insert("selection".into(), "sample".into());
                sc.insert("precision".into(), precision.to_string());
            }
        }
        if let Some(d) = &planner.decomp {
            sc.insert("k".into(), d.k.to_string());
            sc.insert("ambiguity_weight".into(), d.ambiguity_weight.to_string());
            sc.insert("macro_gamma".into(), d.m_macro.gamma.to_string());
            sc.insert("macro_alpha".into(), d.m_macro.alpha.to_string());
            sc.insert("macro_update_count".into(), d.m_macro.update_count.to_string());
            m.insert("labels".into(), row_usize(&d.labels));
            m.insert("embedding".into(), d.embedding.clone());
            m.insert("B_macro".into(), d.b_macro.clone());
            m.insert("M_macro".into(), d.m_macro.m.clone());
            m.insert("G_macro".into(), row(&d.g_macro));
            m.insert("amb_macro".into(), row(&d.amb_macro));
            m.insert("C_macro".into(), row(&d.c_macro));
            m.insert("sizes".into(), row_usize(&d.sizes));
            let bn = d.bottlenecks.iter().map(|(&(i, j), &s)| vec![i as f64, j as f64, s as f64]).collect();
            m.insert("bottlenecks".into(), rows(bn, 3));
            let (mut meta, mut acts, mut lists) = (Vec::new(), Vec::new(), Vec::new());
            for (&(i, j), p) in &d.macro_policies {
                let (i, j) = (i as f64, j as f64);
                meta.push(vec![i, j, p.source_cluster as f64, p.target_bottleneck as f64, p.target_cluster as f64]);
                for (kind, map) in [(0.0, &p.action_of), (1.0, &p.detour)] {
                    for (&s, &a) in map {
                        acts.push(vec![i, j, kind, s as f64, a as f64]);
                    }
                }
                for (kind, list) in [(0.0, &p.unreachable), (1.0, &p.stranded)] {
                    for &s in list {
                        lists.push(vec![i, j, kind, s as f64]);
                    }
                }
            }
            m.insert("policy_meta".into(), rows(meta, 5));
            m.insert("policy_actions".into(), rows(acts, 5));
            m.insert("policy_lists".into(), rows(lists, 4));
        }
        let created = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        let manifest = Manifest {
            format_version: FORMAT_VERSION,
            config_hash: config_hash.to_string(),
            seed,
            created,
            content_hash: content_hash(&m),
            scalars: sc,
        };
        RunArtifact { manifest, matrices: m }
    }

    fn get(&self, name: &str) -> Result<&DMatrix<f64>> {
        self.matrices.get(name).ok_or_else(|| malformed(format!("missing matrix {name}")))
    }

    fn scalar<T: std::str::FromStr>(&self, name: &str) -> Result<T> {
        let raw = self.manifest.scalars.get(name).ok_or_else(|| malformed(format!("missing scalar {name}")))?;
        raw.parse().map_err(|_| malformed(format!("bad scalar {name}={raw}")))
    }

    fn vector(&self, name: &str) -> Result<DVector<f64>> {
        let m = self.get(name)?;
        Ok(DVector::from_iterator(m.len(), m.iter().copied()))
    }

    fn indices(&self, name: &str) -> Result<Vec<usize>> {
        Ok(self.get(name)?.iter().map(|&x| x as usize).collect())
    }

    /// Rebuilds the planner exactly as it was saved.
    pub fn to_planner(&self) -> Result<Planner> {
        let n_a: usize = self.scalar("n_actions")?;
        let b = (0..n_a).map(|a| self.get(&format!("B_{a}")).cloned()).collect::<Result<Vec<_>>>()?;
        let model = GenerativeModel::new(self.get("A")?.clone(), b, self.vector("C")?, self.vector("D")?)?;
        let sr = SuccessorMatrix {
            m: self.get("M")?.clone(),
            gamma: self.scalar("gamma")?,
            alpha: self.scalar("alpha")?,
            update_count: self.scalar("update_count")?,
        };
        let goals = self.indices("goal_observations")?;
        let score = match self.scalar::<String>("score")?.as_str() {
            "raw" => ValueScore::Raw,
            _ => ValueScore::Shifted,
        };
        let selection = match self.scalar::<String>("selection")?.as_str() {
            "sample" => Selection::Sample { precision: self.scalar("precision")? },
            _ => Selection::Greedy,
        };
        let decomp = if self.matrices.contains_key("labels") { Some(self.decomposition()?) } else { None };
        Ok(Planner::from_parts(model, sr, decomp, &goals, score)?.with_selection(selection))
    }

    fn decomposition(&self) -> Result<MacroDecomposition> {
        let mut bottlenecks = BTreeMap::new();
        for r in self.get("bottlenecks")?.row_iter() {
            bottlenecks.insert((r[0] as usize, r[1] as usize), r[2] as usize);
        }
        let mut policies: BTreeMap<(usize, usize), PolicyMap> = BTreeMap::new();
        for r in self.get("policy_meta")?.row_iter() {
            policies.insert(
                (r[0] as usize, r[1] as usize),
                PolicyMap {
                    source_cluster: r[2] as usize,
                    target_bottleneck: r[3] as usize,
                    target_cluster: r[4] as usize,
                    action_of: BTreeMap::new(),
                    detour: BTreeMap::new(),
                    unreachable: Vec::new(),
                    stranded: Vec::new(),
                },
            );
        }
        let unknown = |i: f64, j: f64| malformed(format!("policy entry for unknown pair ({i}, {j})"));
        for r in self.get("policy_actions")?.row_iter() {
            let p = policies.get_mut(&(r[0] as usize, r[1] as usize)).ok_or_else(|| unknown(r[0], r[1]))?;
            let map = if r[2] == 0.0 { &mut p.action_of } else { &mut p.detour };
            map.insert(r[3] as usize, r[4] as usize);
        }
        for r in self.get("policy_lists")?.row_iter() {
            let p = policies.get_mut(&(r[0] as usize, r[1] as usize)).ok_or_else(|| unknown(r[0], r[1]))?;
            let list = if r[2] == 0.0 { &mut p.unreachable } else { &mut p.stranded };
            list.push(r[3] as usize);
        }
        Ok(MacroDecomposition {
            k: self.scalar("k")?,
            labels: self.indices("labels")?,
            embedding: self.get("embedding")?.clone(),
            bottlenecks,
            macro_policies: policies,
            b_macro: self.get("B_macro")?.clone(),
            m_macro: SuccessorMatrix {
                m: self.get("M_macro")?.clone(),
                gamma: self.scalar("macro_gamma")?,
                alpha: self.scalar("macro_alpha")?,
                update_count: self.scalar("macro_update_count")?,
            },
            g_macro: self.vector("G_macro")?,
            amb_macro: self.vector("amb_macro")?,
            sizes: self.indices("sizes")?,
            c_macro: self.vector("C_macro")?,
            ambiguity_weight: self.scalar("ambiguity_weight")?,
        })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        for (name, m) in &self.matrices {
            let path = dir.join(format!("{name}.txt"));
            std::fs::write(&path, matrix_text(m)).map_err(io_err(&path))?;
        }
        let mf = &self.manifest;
        let mut text = format!(
            "format_version={}\nconfig_hash={}\nseed={}\ncreated={}\ncontent_hash={}\n",
            mf.format_version, mf.config_hash, mf.seed, mf.created, mf.content_hash
        );
        text.push_str(&format!("matrices={}\n", self.matrices.keys().cloned().collect::<Vec<_>>().join(",")));
        for (k, v) in &mf.scalars {
            let _ = writeln!(text, "scalar.{k}={v}");
        }
        let path = dir.join("manifest.txt");
        std::fs::write(&path, text).map_err(io_err(&path))
    }

    /// Loads and checks the content hash.
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.txt");
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        let mut fields = BTreeMap::new();
        let mut scalars = BTreeMap::new();
        for line in text.lines().filter(|l| !l.is_empty()) {
            let (k, v) = line.split_once('=').ok_or_else(|| malformed(format!("manifest line {line:?}")))?;
            match k.strip_prefix("scalar.") {
                Some(name) => scalars.insert(name.to_string(), v.to_string()),
                None => fields.insert(k.to_string(), v.to_string()),
            };
        }
        let field = |k: &str| fields.get(k).cloned().ok_or_else(|| malformed(format!("manifest lacks {k}")));
        let parse_u64 = |k: &str| -> Result<u64> { field(k)?.parse().map_err(|_| malformed(format!("bad {k}"))) };
        let format_version = parse_u64("format_version")? as u32;
        if format_version != FORMAT_VERSION {
            return Err(malformed(format!("unsupported format version {format_version}")));
        }
        let mut matrices = BTreeMap::new();
        for name in field("matrices")?.split(',').filter(|s| !s.is_empty()) {
            let path = dir.join(format!("{name}.txt"));
            let body = std::fs::read_to_string(&path).map_err(io_err(&path))?;
            matrices.insert(name.to_string(), parse_matrix(&body).map_err(|e| malformed(format!("{name}: {e}")))?);
        }
        let manifest = Manifest {
            format_version,
            config_hash: field("config_hash")?,
            seed: parse_u64("seed")?,
            created: parse_u64("created")?,
            content_hash: field("content_hash")?,
            scalars,
        };
        if content_hash(&matrices) != manifest.content_hash {
            return Err(malformed("content hash does not match the matrices".into()));
        }
        Ok(RunArtifact { manifest, matrices })
    }
}

pub fn matrix_text(m: &DMatrix<f64>) -> String {
    let mut out = format!("{} {}\n", m.nrows(), m.ncols());
    for r in m.row_iter() {
        let line: Vec<String> = r.iter().map(|x| format!("{x:?}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

pub fn parse_matrix(text: &str) -> std::result::Result<DMatrix<f64>, String> {
    let mut lines = text.lines();
    let dims: Vec<usize> = lines
        .next()
        .ok_or("empty file")?
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| format!("bad dimension {t:?}")))
        .collect::<std::result::Result<_, _>>()?;
    let [nr, nc] = dims[..] else { return Err("dimension line needs two numbers".into()) };
    let mut data = Vec::with_capacity(nr * nc);
    for _ in 0..nr {
        let line = lines.next().ok_or("too few rows")?;
        for t in line.split_whitespace() {
            data.push(t.parse::<f64>().map_err(|_| format!("bad value {t:?}"))?);
        }
    }
    if data.len() != nr * nc {
        return Err(format!("expected {} values, found {}", nr * nc, data.len()));
    }
    Ok(DMatrix::from_row_slice(nr, nc, &data))
}

fn content_hash(matrices: &BTreeMap<String, DMatrix<f64>>) -> String {
    let mut h = Sha256::new();
    for (name, m) in matrices {
        h.update(name.as_bytes());
        h.update(b"\n");
        h.update(matrix_text(m).as_bytes());
    }
    hex::encode(h.finalize())
}

fn malformed(detail: String) -> Error {
    Error::Format { what: "run artifact".into(), detail }
}
