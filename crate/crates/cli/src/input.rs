//! Instance files: the JSON schema and the `i j w` edge list.

use std::fs;
use std::path::Path;

use grothcover::cones::{ConeSpec, DistKind, SymMatrix};
use grothcover::instances::{encode_problem, CspInstance, ProblemKind, RawItem};
use grothcover::relax::Operand;
use grothcover::rounding::RoundingSpec;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum InputFormat {
    /// Pick by extension: `.json` is JSON, anything else an edge list.
    Auto,
    Json,
    Edges,
}

/// A parsed instance. `Psd` carries an explicit matrix of order `n + 1`.
#[derive(Debug, Clone)]
pub enum Instance {
    Csp(CspInstance),
    Psd(SymMatrix),
}

impl Instance {
    pub fn spec(&self, dist: DistKind) -> Result<ConeSpec, CliError> {
        Ok(match self {
            Instance::Csp(inst) => inst.cone_spec(dist)?,
            Instance::Psd(m) => ConeSpec::full_psd(m.dim(), dist),
        })
    }

    pub fn operand(&self) -> Operand {
        match self {
            Instance::Csp(inst) => Operand::Vector(inst.weights().to_vec()),
            Instance::Psd(m) => Operand::Matrix(m.clone()),
        }
    }

    pub fn rounding(&self) -> RoundingSpec {
        match self {
            Instance::Csp(inst) => RoundingSpec::gw_for(inst),
            Instance::Psd(_) => RoundingSpec::gw(),
        }
    }

    /// Number of Boolean variables.
    pub fn n(&self) -> usize {
        match self {
            Instance::Csp(inst) => inst.n(),
            Instance::Psd(m) => m.dim().saturating_sub(1),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    kind: String,
    #[serde(default)]
    n: Option<usize>,
    #[serde(default)]
    items: Option<Vec<RawItem>>,
    #[serde(default)]
    matrix: Option<Vec<Vec<f64>>>,
}

/// Reads an instance. `kind` applies to edge lists only; JSON files name their own.
pub fn parse_instance(
    path: &Path,
    format: InputFormat,
    kind: ProblemKind,
) -> Result<Instance, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let json = match format {
        InputFormat::Json => true,
        InputFormat::Edges => false,
        InputFormat::Auto => path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("json")),
    };
    let located = |e: CliError| CliError::Parse(format!("{}: {e}", path.display()));
    if json {
        parse_json(&text).map_err(located)
    } else {
        parse_edges(&text, kind).map(Instance::Csp).map_err(located)
    }
}

pub fn parse_json(text: &str) -> Result<Instance, CliError> {
    let file: InstanceFile =
        serde_json::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
    if file.kind.eq_ignore_ascii_case("psd") {
        if file.items.is_some() {
            return Err(CliError::Parse(
                "kind psd takes `matrix`, not `items`".into(),
            ));
        }
        let rows = file
            .matrix
            .ok_or_else(|| CliError::Parse("missing field `matrix` for kind psd".into()))?;
        if rows.is_empty() {
            return Err(CliError::Parse("field `matrix` is empty".into()));
        }
        if let Some(n) = file.n {
            if n + 1 != rows.len() {
                return Err(CliError::Parse(format!(
                    "field `n` = {n} but `matrix` has {} rows (expected n + 1)",
                    rows.len()
                )));
            }
        }
        let m = SymMatrix::from_rows(&rows)
            .map_err(|e| CliError::Parse(format!("field `matrix`: {e}")))?;
        return Ok(Instance::Psd(m));
    }
    let kind = ProblemKind::parse(&file.kind)
        .map_err(|e| CliError::Parse(format!("field `kind`: {e}")))?;
    if file.matrix.is_some() {
        return Err(CliError::Parse(format!(
            "field `matrix` is only valid for kind psd, not {}",
            file.kind
        )));
    }
    let n = file
        .n
        .ok_or_else(|| CliError::Parse(format!("missing field `n` for kind {}", file.kind)))?;
    let items = file.items.unwrap_or_default();
    for (k, item) in items.iter().enumerate() {
        if !(item.weight >= 0.0 && item.weight.is_finite()) {
            return Err(CliError::Parse(format!(
                "items[{k}] ({} {}): weight {} is negative",
                item.i, item.j, item.weight
            )));
        }
    }
    let inst =
        encode_problem(kind, &items, n).map_err(|e| CliError::Parse(format!("items: {e}")))?;
    Ok(Instance::Csp(inst))
}

/// Lines `i j w`; blank lines and `#` comments are skipped, `n` is the largest index.
pub fn parse_edges(text: &str, kind: ProblemKind) -> Result<CspInstance, CliError> {
    let mut items = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let at = |msg: String| CliError::Parse(format!("line {}: {msg}", k + 1));
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(at(format!(
                "expected `i j w`, found {} fields",
                fields.len()
            )));
        }
        let index = |tok: &str| {
            tok.parse::<usize>()
                .map_err(|_| at(format!("variable index '{tok}' is not a positive integer")))
        };
        let (i, j) = (index(fields[0])?, index(fields[1])?);
        let weight = fields[2]
            .parse::<f64>()
            .map_err(|_| at(format!("weight '{}' is not a number", fields[2])))?;
        if !(weight >= 0.0 && weight.is_finite()) {
            return Err(at(format!("weight {weight} is negative")));
        }
        items.push(RawItem::edge(i, j, weight));
    }
    if items.is_empty() {
        return Err(CliError::Parse("edge list has no entries".into()));
    }
    let n = items.iter().map(|it| it.i.max(it.j)).max().unwrap_or(0);
    Ok(encode_problem(kind, &items, n)?)
}
