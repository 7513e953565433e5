//! Line-oriented text formats for temporal graphs, labels and features,
//! plus JSON/CSV result files.
//!
//! Every text format starts with a one-line header `MAGIC VERSION ...`,
//! allows `#` comment lines and blank lines, and separates fields with
//! whitespace. Writers emit one canonical byte sequence per structure.
//! See `docs/formats.md` for the byte-level description.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dsbm::{DynamicGraph, Snapshot};
use crate::error::{Error, Result};
use crate::membership::MembershipMatrix;
use crate::metrics::{EvalReport, StepMetrics};

pub const EDGE_MAGIC: &str = "DCTE";
pub const LABEL_MAGIC: &str = "DCLB";
pub const FEATURE_MAGIC: &str = "DCFT";
pub const FORMAT_VERSION: u32 = 1;
pub const SCHEMA_VERSION: u32 = 1;

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn write_all(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(bytes)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Non-blank, non-comment lines with their 1-based line numbers.
fn content_lines(reader: impl Read) -> Result<Vec<(usize, String)>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| parse_err(i + 1, e.to_string()))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        out.push((i + 1, trimmed.to_string()));
    }
    Ok(out)
}

fn int(tok: &str, line: usize, what: &str) -> Result<usize> {
    tok.parse()
        .map_err(|_| parse_err(line, format!("{what}: expected a nonnegative integer, got {tok:?}")))
}

/// `MAGIC VERSION a b c` → `[a, b, c]`.
fn header(lines: &[(usize, String)], magic: &str) -> Result<Option<[usize; 3]>> {
    let Some((ln, first)) = lines.first() else {
        return Ok(None);
    };
    let toks: Vec<&str> = first.split_whitespace().collect();
    if toks[0] != magic {
        return Ok(None);
    }
    if toks.len() != 5 {
        return Err(parse_err(
            *ln,
            format!("header needs `{magic} VERSION` and three integers"),
        ));
    }
    let version = int(toks[1], *ln, "version")?;
    if version != FORMAT_VERSION as usize {
        return Err(Error::SchemaMismatch(format!(
            "{magic} version {version} (supported: {FORMAT_VERSION})"
        )));
    }
    Ok(Some([
        int(toks[2], *ln, "header field")?,
        int(toks[3], *ln, "header field")?,
        int(toks[4], *ln, "header field")?,
    ]))
}

/// Header values of a temporal edge file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeHeader {
    pub n: usize,
    pub steps: usize,
    /// `None` when written as 0.
    pub k: Option<usize>,
}

/// Parses a temporal edge list. Without a header, `n` is the largest id
/// plus one and `T` the largest step.
pub fn read_temporal_graph(reader: impl Read) -> Result<(DynamicGraph, EdgeHeader)> {
    let lines = content_lines(reader)?;
    let declared = header(&lines, EDGE_MAGIC)?;
    let body = if declared.is_some() { &lines[1..] } else { &lines[..] };
    let mut records = Vec::with_capacity(body.len());
    for (ln, line) in body {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(parse_err(*ln, format!("expected `t u v`, got {} fields", toks.len())));
        }
        let t = int(toks[0], *ln, "step")?;
        let u = int(toks[1], *ln, "node")?;
        let v = int(toks[2], *ln, "node")?;
        if t == 0 {
            return Err(parse_err(*ln, "steps are 1-based"));
        }
        if u == v {
            return Err(parse_err(*ln, format!("self-loop on node {u}")));
        }
        if let Some([n, steps, _]) = declared {
            if u >= n || v >= n {
                return Err(parse_err(*ln, format!("node id out of range (n = {n})")));
            }
            if t > steps {
                return Err(parse_err(*ln, format!("step {t} beyond T = {steps}")));
            }
        }
        records.push((*ln, t, u, v));
    }
    let head = match declared {
        Some([n, steps, k]) => EdgeHeader {
            n,
            steps,
            k: (k > 0).then_some(k),
        },
        None => {
            if records.is_empty() {
                return Err(parse_err(0, "empty edge list without a header"));
            }
            EdgeHeader {
                n: records.iter().map(|r| r.2.max(r.3)).max().unwrap_or(0) + 1,
                steps: records.iter().map(|r| r.1).max().unwrap_or(0),
                k: None,
            }
        }
    };
    let mut per_step: Vec<Vec<(usize, usize)>> = vec![Vec::new(); head.steps];
    for (_, t, u, v) in records {
        per_step[t - 1].push((u, v));
    }
    let snapshots = per_step
        .into_iter()
        .map(|e| Snapshot::from_edges(head.n, e))
        .collect::<Result<Vec<_>>>()?;
    Ok((DynamicGraph::new(head.n, snapshots)?, head))
}

pub fn load_temporal_graph(path: impl AsRef<Path>) -> Result<DynamicGraph> {
    let path = path.as_ref();
    Ok(read_temporal_graph(open(path)?)?.0)
}

/// Canonical text: header, then edges ordered by step, then `u < v`.
pub fn format_temporal_graph(graph: &DynamicGraph) -> String {
    let mut s = format!(
        "{EDGE_MAGIC} {FORMAT_VERSION} {} {} {}\n",
        graph.n,
        graph.steps(),
        graph.k().unwrap_or(0)
    );
    for (t, snap) in graph.snapshots.iter().enumerate() {
        for &(u, v) in snap.edges() {
            s.push_str(&format!("{} {u} {v}\n", t + 1));
        }
    }
    s
}

pub fn save_temporal_graph(graph: &DynamicGraph, path: impl AsRef<Path>) -> Result<()> {
    write_all(path.as_ref(), format_temporal_graph(graph).as_bytes())
}

/// Node labels, either one assignment per step or a single static one.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelSet {
    pub is_static: bool,
    pub steps: Vec<MembershipMatrix>,
}

impl LabelSet {
    pub fn dynamic(steps: Vec<MembershipMatrix>) -> Self {
        Self {
            is_static: false,
            steps,
        }
    }

    pub fn fixed(theta: MembershipMatrix) -> Self {
        Self {
            is_static: true,
            steps: vec![theta],
        }
    }

    /// Memberships for a graph with `steps` snapshots.
    pub fn expand(&self, steps: usize) -> Result<Vec<MembershipMatrix>> {
        if self.is_static {
            Ok(vec![self.steps[0].clone(); steps])
        } else if self.steps.len() == steps {
            Ok(self.steps.clone())
        } else {
            Err(Error::shape("label steps", steps, self.steps.len()))
        }
    }
}

/// Label file: header `DCLB 1 n T K` (`T = 0` for static labels), then
/// `t node class` lines with `t = 0` for static labels.
pub fn read_labels(reader: impl Read) -> Result<LabelSet> {
    let lines = content_lines(reader)?;
    let Some([n, steps, k]) = header(&lines, LABEL_MAGIC)? else {
        return Err(parse_err(
            lines.first().map_or(0, |l| l.0),
            format!("missing {LABEL_MAGIC} header"),
        ));
    };
    if k == 0 {
        return Err(parse_err(lines[0].0, "K must be positive"));
    }
    let slots = steps.max(1);
    let mut table = vec![vec![None; n]; slots];
    for (ln, line) in &lines[1..] {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(parse_err(
                *ln,
                format!("expected `t node class`, got {} fields", toks.len()),
            ));
        }
        let t = int(toks[0], *ln, "step")?;
        let node = int(toks[1], *ln, "node")?;
        let class = int(toks[2], *ln, "class")?;
        let slot = match (steps, t) {
            (0, 0) => 0,
            (0, _) => return Err(parse_err(*ln, "static labels use step 0")),
            (_, 0) => return Err(parse_err(*ln, "steps are 1-based")),
            (s, t) if t > s => return Err(parse_err(*ln, format!("step {t} beyond T = {s}"))),
            (_, t) => t - 1,
        };
        if node >= n {
            return Err(parse_err(*ln, format!("node id out of range (n = {n})")));
        }
        if class >= k {
            return Err(parse_err(*ln, format!("class {class} out of range (K = {k})")));
        }
        match table[slot][node] {
            Some(c) if c != class => {
                return Err(parse_err(*ln, format!("node {node} labelled twice at step {t}")));
            }
            _ => table[slot][node] = Some(class),
        }
    }
    let mut out = Vec::with_capacity(slots);
    for (s, row) in table.into_iter().enumerate() {
        let labels = row
            .into_iter()
            .enumerate()
            .map(|(node, c)| {
                c.ok_or_else(|| {
                    parse_err(
                        0,
                        format!("node {node} unlabelled at step {}", if steps == 0 { 0 } else { s + 1 }),
                    )
                })
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(MembershipMatrix::from_labels(labels, k)?);
    }
    Ok(LabelSet {
        is_static: steps == 0,
        steps: out,
    })
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<LabelSet> {
    read_labels(open(path.as_ref())?)
}

pub fn format_labels(labels: &LabelSet) -> Result<String> {
    let first = labels
        .steps
        .first()
        .ok_or_else(|| Error::param("labels", "no label steps"))?;
    let (n, k) = (first.n(), first.k());
    let steps = if labels.is_static { 0 } else { labels.steps.len() };
    let mut s = format!("{LABEL_MAGIC} {FORMAT_VERSION} {n} {steps} {k}\n");
    for (i, theta) in labels.steps.iter().enumerate() {
        if theta.n() != n || theta.k() != k {
            return Err(Error::shape("label steps", (n, k), (theta.n(), theta.k())));
        }
        let t = if labels.is_static { 0 } else { i + 1 };
        for (node, c) in theta.labels().iter().enumerate() {
            s.push_str(&format!("{t} {node} {c}\n"));
        }
    }
    Ok(s)
}

pub fn save_labels(labels: &LabelSet, path: impl AsRef<Path>) -> Result<()> {
    write_all(path.as_ref(), format_labels(labels)?.as_bytes())
}

/// Node features, static (`T = 0`) or one matrix per step.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub is_static: bool,
    pub steps: Vec<Array2<f64>>,
}

impl FeatureSet {
    /// The matrix used as the GCN input: the last step.
    pub fn last(&self) -> &Array2<f64> {
        self.steps.last().expect("feature sets are never empty")
    }
}

/// Feature file: header `DCFT 1 n D T` (`T = 0` for static features),
/// then `t node x₁ … x_D` lines.
pub fn read_features(reader: impl Read) -> Result<FeatureSet> {
    let lines = content_lines(reader)?;
    let Some([n, d, steps]) = header(&lines, FEATURE_MAGIC)? else {
        return Err(parse_err(
            lines.first().map_or(0, |l| l.0),
            format!("missing {FEATURE_MAGIC} header"),
        ));
    };
    let slots = steps.max(1);
    let mut mats = vec![Array2::from_elem((n, d), f64::NAN); slots];
    let mut seen = vec![vec![false; n]; slots];
    for (ln, line) in &lines[1..] {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != d + 2 {
            return Err(parse_err(*ln, format!("expected {} fields, got {}", d + 2, toks.len())));
        }
        let t = int(toks[0], *ln, "step")?;
        let node = int(toks[1], *ln, "node")?;
        let slot = match (steps, t) {
            (0, 0) => 0,
            (0, _) => return Err(parse_err(*ln, "static features use step 0")),
            (_, 0) => return Err(parse_err(*ln, "steps are 1-based")),
            (s, t) if t > s => return Err(parse_err(*ln, format!("step {t} beyond T = {s}"))),
            (_, t) => t - 1,
        };
        if node >= n {
            return Err(parse_err(*ln, format!("node id out of range (n = {n})")));
        }
        if seen[slot][node] {
            return Err(parse_err(*ln, format!("duplicate row for node {node}")));
        }
        seen[slot][node] = true;
        for (j, tok) in toks[2..].iter().enumerate() {
            let x: f64 = tok
                .parse()
                .map_err(|_| parse_err(*ln, format!("feature: expected a number, got {tok:?}")))?;
            if !x.is_finite() {
                return Err(parse_err(*ln, "non-finite feature value"));
            }
            mats[slot][[node, j]] = x;
        }
    }
    if let Some((slot, node)) = seen
        .iter()
        .enumerate()
        .find_map(|(s, row)| row.iter().position(|&b| !b).map(|node| (s, node)))
    {
        return Err(parse_err(0, format!("node {node} has no features at step slot {slot}")));
    }
    Ok(FeatureSet {
        is_static: steps == 0,
        steps: mats,
    })
}

pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureSet> {
    read_features(open(path.as_ref())?)
}

pub fn format_features(features: &FeatureSet) -> Result<String> {
    let first = features
        .steps
        .first()
        .ok_or_else(|| Error::param("features", "no feature steps"))?;
    let (n, d) = first.dim();
    let steps = if features.is_static { 0 } else { features.steps.len() };
    let mut s = format!("{FEATURE_MAGIC} {FORMAT_VERSION} {n} {d} {steps}\n");
    for (i, m) in features.steps.iter().enumerate() {
        if m.dim() != (n, d) {
            return Err(Error::shape("feature steps", (n, d), m.dim()));
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::Serialization("non-finite feature value".into()));
        }
        let t = if features.is_static { 0 } else { i + 1 };
        for (node, row) in m.rows().into_iter().enumerate() {
            s.push_str(&format!("{t} {node}"));
            for x in row {
                s.push_str(&format!(" {x:?}"));
            }
            s.push('\n');
        }
    }
    Ok(s)
}

pub fn save_features(features: &FeatureSet, path: impl AsRef<Path>) -> Result<()> {
    write_all(path.as_ref(), format_features(features)?.as_bytes())
}

/// External node names; index `i` names dense id `i`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IdMap {
    pub names: Vec<String>,
}

impl IdMap {
    pub fn id(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|x| x == name)
    }
}

/// Sidecar lines `id<TAB>name`, ids dense from 0.
pub fn read_id_map(reader: impl Read) -> Result<IdMap> {
    let mut names: Vec<Option<String>> = Vec::new();
    for (ln, line) in content_lines(reader)? {
        let (id, name) = line
            .split_once('\t')
            .ok_or_else(|| parse_err(ln, "expected `id<TAB>name`"))?;
        let id = int(id.trim(), ln, "id")?;
        if names.len() <= id {
            names.resize(id + 1, None);
        }
        if names[id].replace(name.to_string()).is_some() {
            return Err(parse_err(ln, format!("id {id} listed twice")));
        }
    }
    let names = names
        .into_iter()
        .enumerate()
        .map(|(i, n)| n.ok_or_else(|| parse_err(0, format!("id {i} missing from sidecar"))))
        .collect::<Result<_>>()?;
    Ok(IdMap { names })
}

pub fn format_id_map(ids: &IdMap) -> String {
    ids.names
        .iter()
        .enumerate()
        .map(|(i, n)| format!("{i}\t{n}\n"))
        .collect()
}

/// Reads `t name name` lines with arbitrary node names. Dense ids follow
/// the sorted order of the names.
pub fn read_named_edges(reader: impl Read) -> Result<(DynamicGraph, IdMap)> {
    let lines = content_lines(reader)?;
    let mut recs = Vec::with_capacity(lines.len());
    for (ln, line) in &lines {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(parse_err(*ln, format!("expected `t a b`, got {} fields", toks.len())));
        }
        recs.push((
            *ln,
            int(toks[0], *ln, "step")?,
            toks[1].to_string(),
            toks[2].to_string(),
        ));
    }
    let mut names: Vec<String> = recs.iter().flat_map(|r| [r.2.clone(), r.3.clone()]).collect();
    names.sort();
    names.dedup();
    let ids = IdMap { names };
    let mut text = String::new();
    for (ln, t, a, b) in &recs {
        let u = ids.names.binary_search(a).expect("collected above");
        let v = ids.names.binary_search(b).expect("collected above");
        if u == v {
            return Err(parse_err(*ln, format!("self-loop on node {a:?}")));
        }
        text.push_str(&format!("{t} {u} {v}\n"));
    }
    let (graph, _) = read_temporal_graph(text.as_bytes())?;
    Ok((graph, ids))
}

/// A saved evaluation: one method on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub schema_version: u32,
    pub command: String,
    pub method: String,
    pub seed: Option<u64>,
    pub report: EvalReport,
    /// Decay rates used or learned, row-major `K × K` (or `1 × 1`).
    pub decay: Option<Vec<Vec<f64>>>,
    /// `ORACLE`, `ESTIMATED` or `LEARNED` when `decay` is present.
    pub decay_source: Option<String>,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl ResultFile {
    pub fn new(command: &str, method: &str, seed: Option<u64>, report: EvalReport) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            method: method.to_string(),
            seed,
            report,
            decay: None,
            decay_source: None,
            notes: Vec::new(),
        }
    }

    fn check_finite(&self) -> Result<()> {
        let decay_ok = self.decay.iter().flatten().flatten().all(|x| x.is_finite());
        if !self.report.is_finite() || !decay_ok {
            return Err(Error::Serialization(format!(
                "non-finite value in {} result",
                self.method
            )));
        }
        Ok(())
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Serialization(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    write_all(path.as_ref(), to_json(value)?.as_bytes())
}

pub fn format_result_json(result: &ResultFile) -> Result<String> {
    result.check_finite()?;
    to_json(result)
}

/// One row per evaluated step.
pub fn format_step_csv(steps: &[StepMetrics]) -> Result<String> {
    if steps.iter().any(|s| !s.is_finite()) {
        return Err(Error::Serialization("non-finite per-step metric".into()));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for s in steps {
        w.serialize(s).map_err(|e| Error::Serialization(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Serialization(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Serialization(e.to_string()))
}

/// Writes `<stem>.json` and `<stem>.csv` in `dir`.
pub fn save_results(result: &ResultFile, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
    let dir = dir.as_ref();
    let json = format_result_json(result)?;
    let csv = format_step_csv(result.report.per_step.as_deref().unwrap_or(&[]))?;
    write_all(&dir.join(format!("{stem}.json")), json.as_bytes())?;
    write_all(&dir.join(format!("{stem}.csv")), csv.as_bytes())
}

pub fn load_results(path: impl AsRef<Path>) -> Result<ResultFile> {
    let path = path.as_ref();
    let mut text = String::new();
    open(path)?.read_to_string(&mut text).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Serialization(e.to_string()))?;
    match value.get("schema_version").and_then(|v| v.as_u64()) {
        Some(v) if v == u64::from(SCHEMA_VERSION) => {}
        Some(v) => {
            return Err(Error::SchemaMismatch(format!(
                "{}: schema version {v} (supported: {SCHEMA_VERSION})",
                path.display()
            )))
        }
        None => return Err(Error::SchemaMismatch(format!("{}: no schema_version", path.display()))),
    }
    serde_json::from_value(value).map_err(|e| Error::Serialization(e.to_string()))
}

/// Deserialises any JSON file.
pub fn read_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    serde_json::from_reader(open(path)?).map_err(|e| Error::Serialization(format!("{}: {e}", path.display())))
}
