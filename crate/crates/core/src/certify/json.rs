//! Certificate documents: fixed field order, floats written with 17 significant digits.

use serde::ser::SerializeSeq;
use serde::{Deserialize, Serialize, Serializer};
use serde_json::value::RawValue;

use super::verify::CheckSummary;
use super::{BetaCertificate, Direction};
use crate::cones::SymMatrix;
use crate::cover::Cover;
use crate::cutset::CutSet;
use crate::error::{Error, Result};
use crate::relax::Operand;

/// Oracle cross-check values appended to a certificate for small instances.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSummary {
    pub maxq: f64,
    pub maxq_cut: CutSet,
    pub fevc: Option<f64>,
}

/// A certificate together with the paired operand it was produced for.
#[derive(Debug, Clone, PartialEq)]
pub struct CertificateDocument {
    pub certificate: BetaCertificate,
    pub direction: Direction,
    /// `w` (or `W`) in the cover direction, `z` (or `Z`) in the max direction.
    pub paired: Operand,
    pub oracle: Option<OracleSummary>,
}

struct Sci(f64);

impl Serialize for Sci {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        // JSON has no infinities; clamp so the document stays parseable.
        let v = if self.0.is_nan() {
            0.0
        } else {
            self.0.clamp(f64::MIN, f64::MAX)
        };
        let raw = RawValue::from_string(format!("{v:.16e}")).map_err(serde::ser::Error::custom)?;
        raw.serialize(s)
    }
}

struct SciVec<'a>(&'a [f64]);

impl Serialize for SciVec<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(self.0.len()))?;
        for &v in self.0 {
            seq.serialize_element(&Sci(v))?;
        }
        seq.end()
    }
}

struct SciRows<'a>(&'a SymMatrix);

impl Serialize for SciRows<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let n = self.0.dim();
        let mut seq = s.serialize_seq(Some(n))?;
        for i in 0..n {
            let row: Vec<f64> = (0..n).map(|j| self.0.get(i, j)).collect();
            seq.serialize_element(&SciVec(&row))?;
        }
        seq.end()
    }
}

#[derive(Serialize)]
struct CoverEntryOut<'a> {
    #[serde(rename = "U")]
    u: &'a [usize],
    weight: Sci,
}

#[derive(Serialize)]
struct ChecksOut {
    c1_gap: Sci,
    c2_cut: Sci,
    c3_cover_residual: Sci,
    c3_cost: Sci,
    c4_trace: Sci,
    c4_dist_star: Sci,
    pass: bool,
}

#[derive(Serialize)]
#[serde(untagged)]
enum PairedOut<'a> {
    Vector(SciVec<'a>),
    Matrix(SciRows<'a>),
}

#[derive(Serialize)]
struct OracleOut<'a> {
    maxq: Sci,
    maxq_cut: &'a [usize],
    #[serde(skip_serializing_if = "Option::is_none")]
    fevc: Option<Sci>,
}

#[derive(Serialize)]
struct DocumentOut<'a> {
    beta: Sci,
    rho: Sci,
    mu: Sci,
    #[serde(rename = "U")]
    u: &'a [usize],
    x: SciVec<'a>,
    cover: Vec<CoverEntryOut<'a>>,
    seed: u64,
    alpha_used: Sci,
    checks: ChecksOut,
    direction: Direction,
    paired: PairedOut<'a>,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle: Option<OracleOut<'a>>,
}

#[derive(Deserialize)]
struct CoverEntryIn {
    #[serde(rename = "U")]
    u: Vec<usize>,
    weight: f64,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PairedIn {
    Vector(Vec<f64>),
    Matrix(Vec<Vec<f64>>),
}

#[derive(Deserialize)]
struct OracleIn {
    maxq: f64,
    maxq_cut: Vec<usize>,
    fevc: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DocumentIn {
    beta: f64,
    rho: f64,
    mu: f64,
    #[serde(rename = "U")]
    u: Vec<usize>,
    x: Vec<f64>,
    cover: Vec<CoverEntryIn>,
    seed: u64,
    alpha_used: f64,
    checks: CheckSummary,
    direction: Direction,
    paired: PairedIn,
    oracle: Option<OracleIn>,
}

impl CertificateDocument {
    pub fn to_json(&self) -> Result<String> {
        let c = &self.certificate;
        let s = &c.checks;
        let doc = DocumentOut {
            beta: Sci(c.beta),
            rho: Sci(c.rho),
            mu: Sci(c.mu),
            u: c.cut.members(),
            x: SciVec(&c.x),
            cover: c
                .cover
                .entries()
                .iter()
                .map(|(u, &w)| CoverEntryOut {
                    u: u.members(),
                    weight: Sci(w),
                })
                .collect(),
            seed: c.seed,
            alpha_used: Sci(c.alpha_used),
            checks: ChecksOut {
                c1_gap: Sci(s.c1_gap),
                c2_cut: Sci(s.c2_cut),
                c3_cover_residual: Sci(s.c3_cover_residual),
                c3_cost: Sci(s.c3_cost),
                c4_trace: Sci(s.c4_trace),
                c4_dist_star: Sci(s.c4_dist_star),
                pass: s.pass,
            },
            direction: self.direction,
            paired: match &self.paired {
                Operand::Vector(v) => PairedOut::Vector(SciVec(v)),
                Operand::Matrix(m) => PairedOut::Matrix(SciRows(m)),
            },
            oracle: self.oracle.as_ref().map(|o| OracleOut {
                maxq: Sci(o.maxq),
                maxq_cut: o.maxq_cut.members(),
                fevc: o.fevc.map(Sci),
            }),
        };
        serde_json::to_string_pretty(&doc).map_err(|e| Error::InvalidInstance(e.to_string()))
    }

    /// Parses a document; the cone order is taken from the length of `x`.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: DocumentIn = serde_json::from_str(text)
            .map_err(|e| Error::InvalidInstance(format!("certificate: {e}")))?;
        let dim = doc.x.len();
        if dim == 0 {
            return Err(Error::InvalidInstance("certificate: empty x".into()));
        }
        let cover = Cover::new(
            doc.cover
                .into_iter()
                .map(|e| Ok((CutSet::new(e.u, dim)?, e.weight)))
                .collect::<Result<Vec<_>>>()?,
        )?;
        let paired = match doc.paired {
            PairedIn::Vector(v) => Operand::Vector(v),
            PairedIn::Matrix(rows) => Operand::Matrix(SymMatrix::from_rows(&rows)?),
        };
        let oracle = match doc.oracle {
            Some(o) => Some(OracleSummary {
                maxq: o.maxq,
                maxq_cut: CutSet::new(o.maxq_cut, dim)?,
                fevc: o.fevc,
            }),
            None => None,
        };
        Ok(CertificateDocument {
            certificate: BetaCertificate {
                beta: doc.beta,
                rho: doc.rho,
                mu: doc.mu,
                cut: CutSet::new(doc.u, dim)?,
                cover,
                x: doc.x,
                seed: doc.seed,
                alpha_used: doc.alpha_used,
                checks: doc.checks,
            },
            direction: doc.direction,
            paired,
            oracle,
        })
    }
}
