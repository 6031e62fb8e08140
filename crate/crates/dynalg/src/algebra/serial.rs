//! JSON-ready documents for certificates. Fields and functionals are pooled
//! and referenced by index.

use std::collections::HashMap;
use std::sync::Arc;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::LocalFunctional;
use crate::lattice::GridField;

use super::proof::{replay, Certificate};
use super::{AlgebraWord, GeneratorTable, Letter, Move, Phase};

/// Samples as a decimal list, or little-endian f64 bytes in base64.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldData {
    Values(Vec<f64>),
    Packed { packed: String },
}

impl FieldData {
    pub fn encode(data: &[f64], packed: bool) -> Self {
        if packed {
            let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_le_bytes()).collect();
            FieldData::Packed {
                packed: STANDARD.encode(bytes),
            }
        } else {
            FieldData::Values(data.to_vec())
        }
    }

    pub fn decode(&self) -> Result<Vec<f64>> {
        match self {
            FieldData::Values(v) => Ok(v.clone()),
            FieldData::Packed { packed } => {
                let bytes = STANDARD
                    .decode(packed)
                    .map_err(|e| Error::Invalid(format!("packed field: {e}")))?;
                if bytes.len() % 8 != 0 {
                    return Err(Error::Invalid("packed field length is not a multiple of 8".into()));
                }
                Ok(bytes
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalDoc {
    pub constant: f64,
    /// Field-pool indices of g₁, g₂, ….
    pub coefficients: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordDoc {
    /// Fixed-point phase angle in units of 2⁻⁶⁴ rad, as a decimal string.
    pub phase: String,
    /// (functional-pool index, exponent) pairs.
    pub letters: Vec<(usize, i8)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tag")]
pub enum MoveDoc {
    FreeCancel { pos: usize },
    ConstToPhase { pos: usize },
    DynMerge { pos: usize, phi0: usize },
    DynSplit { pos: usize, phi0: usize },
    DynCommute { pos: usize, phi0: usize },
    CausalMerge { pos: usize, arity: usize },
    CausalSplit {
        pos: usize,
        f1: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        f3: Option<usize>,
    },
    SpacelikeSwap { pos: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateDoc {
    pub fields: Vec<FieldData>,
    pub functionals: Vec<FunctionalDoc>,
    pub lhs: WordDoc,
    pub rhs: WordDoc,
    pub left: Vec<MoveDoc>,
    pub right: Vec<MoveDoc>,
}

#[derive(Default)]
struct Pools {
    fields: Vec<FieldData>,
    field_index: HashMap<Vec<u64>, usize>,
    functionals: Vec<FunctionalDoc>,
    functional_index: HashMap<(u64, Vec<usize>), usize>,
    packed: bool,
}

impl Pools {
    fn field(&mut self, g: &GridField) -> usize {
        let key: Vec<u64> = g.data().iter().map(|v| v.to_bits()).collect();
        if let Some(&i) = self.field_index.get(&key) {
            return i;
        }
        self.fields.push(FieldData::encode(g.data(), self.packed));
        self.field_index.insert(key, self.fields.len() - 1);
        self.fields.len() - 1
    }

    fn functional(&mut self, f: &LocalFunctional) -> usize {
        let coefficients: Vec<usize> = f.coefficients().iter().map(|g| self.field(g)).collect();
        let key = (f.constant_part().to_bits(), coefficients.clone());
        if let Some(&i) = self.functional_index.get(&key) {
            return i;
        }
        self.functionals.push(FunctionalDoc {
            constant: f.constant_part(),
            coefficients,
        });
        self.functional_index.insert(key, self.functionals.len() - 1);
        self.functionals.len() - 1
    }

    fn word(&mut self, table: &GeneratorTable, w: &AlgebraWord) -> Result<WordDoc> {
        let letters = w
            .letters
            .iter()
            .map(|l| Ok((self.functional(&table.functional(l.id)?), l.exp)))
            .collect::<Result<Vec<_>>>()?;
        Ok(WordDoc {
            phase: w.phase.raw().to_string(),
            letters,
        })
    }

    fn mv(&mut self, m: &Move) -> MoveDoc {
        match m {
            Move::FreeCancel { pos } => MoveDoc::FreeCancel { pos: *pos },
            Move::ConstToPhase { pos } => MoveDoc::ConstToPhase { pos: *pos },
            Move::DynMerge { pos, phi0 } => MoveDoc::DynMerge {
                pos: *pos,
                phi0: self.field(phi0),
            },
            Move::DynSplit { pos, phi0 } => MoveDoc::DynSplit {
                pos: *pos,
                phi0: self.field(phi0),
            },
            Move::DynCommute { pos, phi0 } => MoveDoc::DynCommute {
                pos: *pos,
                phi0: self.field(phi0),
            },
            Move::CausalMerge { pos, arity } => MoveDoc::CausalMerge {
                pos: *pos,
                arity: *arity,
            },
            Move::CausalSplit { pos, f1, f3 } => MoveDoc::CausalSplit {
                pos: *pos,
                f1: self.functional(f1),
                f3: f3.as_ref().map(|f| self.functional(f)),
            },
            Move::SpacelikeSwap { pos } => MoveDoc::SpacelikeSwap { pos: *pos },
        }
    }
}

struct Decoder<'a> {
    doc: &'a CertificateDoc,
    table: &'a GeneratorTable,
    fields: HashMap<usize, Arc<GridField>>,
}

impl Decoder<'_> {
    fn field(&mut self, i: usize) -> Result<Arc<GridField>> {
        if let Some(f) = self.fields.get(&i) {
            return Ok(f.clone());
        }
        let data = self
            .doc
            .fields
            .get(i)
            .ok_or_else(|| Error::Invalid(format!("field index {i} out of range")))?
            .decode()?;
        let f = Arc::new(GridField::from_samples(self.table.lattice(), data)?);
        self.fields.insert(i, f.clone());
        Ok(f)
    }

    fn functional(&mut self, i: usize) -> Result<LocalFunctional> {
        let d = self
            .doc
            .functionals
            .get(i)
            .ok_or_else(|| Error::Invalid(format!("functional index {i} out of range")))?;
        let coeffs = d
            .coefficients
            .iter()
            .map(|&c| self.field(c).map(|f| (*f).clone()))
            .collect::<Result<Vec<_>>>()?;
        LocalFunctional::new(self.table.lattice(), d.constant, coeffs)
    }

    fn word(&mut self, w: &WordDoc) -> Result<AlgebraWord> {
        let raw: i128 = w
            .phase
            .parse()
            .map_err(|_| Error::Invalid(format!("bad phase {:?}", w.phase)))?;
        let letters = w
            .letters
            .iter()
            .map(|&(i, exp)| {
                if exp != 1 && exp != -1 {
                    return Err(Error::Invalid(format!("exponent {exp} is not ±1")));
                }
                let f = self.functional(i)?;
                Ok(Letter {
                    id: self.table.intern(&f)?,
                    exp,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(AlgebraWord {
            phase: Phase::from_raw(raw),
            letters,
        })
    }

    fn mv(&mut self, m: &MoveDoc) -> Result<Move> {
        Ok(match m {
            MoveDoc::FreeCancel { pos } => Move::FreeCancel { pos: *pos },
            MoveDoc::ConstToPhase { pos } => Move::ConstToPhase { pos: *pos },
            MoveDoc::DynMerge { pos, phi0 } => Move::DynMerge {
                pos: *pos,
                phi0: self.field(*phi0)?,
            },
            MoveDoc::DynSplit { pos, phi0 } => Move::DynSplit {
                pos: *pos,
                phi0: self.field(*phi0)?,
            },
            MoveDoc::DynCommute { pos, phi0 } => Move::DynCommute {
                pos: *pos,
                phi0: self.field(*phi0)?,
            },
            MoveDoc::CausalMerge { pos, arity } => Move::CausalMerge {
                pos: *pos,
                arity: *arity,
            },
            MoveDoc::CausalSplit { pos, f1, f3 } => Move::CausalSplit {
                pos: *pos,
                f1: Arc::new(self.functional(*f1)?),
                f3: match f3 {
                    Some(i) => Some(Arc::new(self.functional(*i)?)),
                    None => None,
                },
            },
            MoveDoc::SpacelikeSwap { pos } => Move::SpacelikeSwap { pos: *pos },
        })
    }
}

impl CertificateDoc {
    pub fn encode(
        table: &GeneratorTable,
        lhs: &AlgebraWord,
        rhs: &AlgebraWord,
        cert: &Certificate,
        packed: bool,
    ) -> Result<Self> {
        let mut p = Pools {
            packed,
            ..Pools::default()
        };
        let lhs = p.word(table, lhs)?;
        let rhs = p.word(table, rhs)?;
        let left = cert.left.iter().map(|m| p.mv(m)).collect();
        let right = cert.right.iter().map(|m| p.mv(m)).collect();
        Ok(Self {
            fields: p.fields,
            functionals: p.functionals,
            lhs,
            rhs,
            left,
            right,
        })
    }

    /// Words and moves against `table`, whose lattice and Lagrangian must match the encoding.
    pub fn decode(&self, table: &GeneratorTable) -> Result<(AlgebraWord, AlgebraWord, Certificate)> {
        let mut d = Decoder {
            doc: self,
            table,
            fields: HashMap::new(),
        };
        let lhs = d.word(&self.lhs)?;
        let rhs = d.word(&self.rhs)?;
        let left = self.left.iter().map(|m| d.mv(m)).collect::<Result<Vec<_>>>()?;
        let right = self.right.iter().map(|m| d.mv(m)).collect::<Result<Vec<_>>>()?;
        Ok((lhs, rhs, Certificate { left, right }))
    }

    /// Decodes and re-executes the certificate.
    pub fn replay(&self, table: &GeneratorTable) -> Result<AlgebraWord> {
        let (lhs, rhs, cert) = self.decode(table)?;
        replay(table, &lhs, &rhs, &cert)
    }

    pub fn moves(&self) -> usize {
        self.left.len() + self.right.len()
    }
}
