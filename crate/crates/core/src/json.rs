//! JSON forms of matrices, generators, quotient algebras, splits, sequences and
//! factorizations.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::cartan::{build_decomposition_sequence, CartanSplit, DecompositionSequence, LevelCenter};
use crate::error::{Error, Result};
use crate::generator::{label_matrix, Generator, Label};
use crate::kak::{Factorization, GateFactor, Locality};
use crate::linalg::{frob, CMat};
use crate::partition::{format_label, parse_label, AbelianSpace, ConjugatePair, QuotientAlgebra};

fn parse_err(e: impl std::fmt::Display) -> Error {
    Error::Parse(e.to_string())
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MatrixJson {
    pub dim: usize,
    pub entries: Vec<Vec<[f64; 2]>>,
}

impl MatrixJson {
    pub fn from_matrix(m: &CMat) -> Self {
        MatrixJson {
            dim: m.nrows(),
            entries: (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect()).collect(),
        }
    }

    pub fn to_matrix(&self) -> Result<CMat> {
        let n = self.dim;
        if self.entries.len() != n || self.entries.iter().any(|r| r.len() != n) {
            return Err(Error::Parse(format!("matrix entries are not {n}×{n}")));
        }
        Ok(CMat::from_fn(n, n, |i, j| Complex64::new(self.entries[i][j][0], self.entries[i][j][1])))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GeneratorJson {
    pub label: String,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<MatrixJson>,
}

impl GeneratorJson {
    /// The matrix is written out only when the label does not reproduce it.
    pub fn from_generator(g: &Generator) -> Self {
        let exact = match label_matrix(&g.label, g.dim) {
            Ok(m) => frob(&(m - &g.matrix)) <= 1e-12,
            Err(_) => false,
        };
        GeneratorJson {
            label: g.label.to_string(),
            dim: g.dim,
            matrix: if exact { None } else { Some(MatrixJson::from_matrix(&g.matrix)) },
        }
    }

    pub fn to_generator(&self) -> Result<Generator> {
        let label: Label = if self.label == "custom" { Label::Custom } else { self.label.parse()? };
        match &self.matrix {
            Some(m) => {
                if m.dim != self.dim {
                    return Err(Error::DimensionMismatch(m.dim, self.dim));
                }
                let g = Generator::custom(m.to_matrix()?)?;
                Ok(Generator::with_label(label, g.matrix))
            }
            None => Generator::from_label(label, self.dim),
        }
    }
}

pub fn generators_json(gs: &[Generator]) -> Vec<GeneratorJson> {
    gs.iter().map(GeneratorJson::from_generator).collect()
}

pub fn generators_from_json(gs: &[GeneratorJson]) -> Result<Vec<Generator>> {
    gs.iter().map(GeneratorJson::to_generator).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PairJson {
    pub label: Option<String>,
    pub w: Vec<GeneratorJson>,
    pub w_hat: Vec<GeneratorJson>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct QuotientAlgebraJson {
    pub dim: usize,
    pub p: usize,
    pub center: Vec<GeneratorJson>,
    pub pairs: Vec<PairJson>,
}

impl QuotientAlgebraJson {
    pub fn from_qa(qa: &QuotientAlgebra) -> Self {
        QuotientAlgebraJson {
            dim: qa.dim,
            p: qa.p,
            center: generators_json(&qa.center.generators),
            pairs: qa
                .pairs
                .iter()
                .map(|pr| PairJson {
                    label: pr.binary_label.map(|z| format_label(z, qa.p)),
                    w: generators_json(&pr.w.generators),
                    w_hat: generators_json(&pr.w_hat.generators),
                })
                .collect(),
        }
    }

    /// Rebuilds the structure as written; spaces are not re-validated.
    pub fn to_qa(&self) -> Result<QuotientAlgebra> {
        let n = self.dim;
        let space = |gs: &[GeneratorJson], hat: bool, label: Option<usize>| -> Result<AbelianSpace> {
            let gens = generators_from_json(gs)?;
            if let Some(g) = gens.iter().find(|g| g.dim != n) {
                return Err(Error::DimensionMismatch(g.dim, n));
            }
            Ok(AbelianSpace::unchecked(n, gens, hat, label))
        };
        let center = space(&self.center, false, None)?;
        let mut pairs = Vec::new();
        for pj in &self.pairs {
            let label = pj.label.as_deref().map(parse_label).transpose()?;
            pairs.push(ConjugatePair { w: space(&pj.w, false, label)?, w_hat: space(&pj.w_hat, true, label)?, binary_label: label });
        }
        Ok(QuotientAlgebra { dim: n, p: self.p, center, pairs })
    }
}

pub fn qa_to_json(qa: &QuotientAlgebra) -> String {
    to_pretty(&QuotientAlgebraJson::from_qa(qa))
}

pub fn qa_from_json(s: &str) -> Result<QuotientAlgebra> {
    serde_json::from_str::<QuotientAlgebraJson>(s).map_err(parse_err)?.to_qa()
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CartanSplitJson {
    pub choice_bits: String,
    pub t: Vec<GeneratorJson>,
    pub p: Vec<GeneratorJson>,
    pub center: Vec<GeneratorJson>,
}

impl CartanSplitJson {
    pub fn from_split(s: &CartanSplit) -> Self {
        let flat = |spaces: &[AbelianSpace]| spaces.iter().flat_map(|sp| generators_json(&sp.generators)).collect();
        CartanSplitJson {
            choice_bits: s.choice_string(),
            t: flat(&s.t),
            p: flat(&s.p_part),
            center: generators_json(&s.center.generators),
        }
    }
}

/// A level's center: a binary label of a space, or explicit generators.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum CenterJson {
    Label(String),
    Generators(Vec<GeneratorJson>),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LevelJson {
    pub center: CenterJson,
    pub choice_bits: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SequenceJson {
    pub dim: usize,
    pub levels: Vec<LevelJson>,
    #[serde(default)]
    pub r#final: Vec<GeneratorJson>,
}

impl SequenceJson {
    pub fn from_sequence(seq: &DecompositionSequence) -> Self {
        let p = seq.p;
        SequenceJson {
            dim: seq.dim,
            levels: seq
                .levels
                .iter()
                .map(|lv| LevelJson {
                    center: CenterJson::Label(format_label(lv.cell, p)),
                    choice_bits: format_label(lv.choice_bits, lv.bits),
                })
                .collect(),
            r#final: generators_json(&seq.final_space.generators),
        }
    }

    /// Rebuilds the sequence over `qa`; the `final` list is derived, not read.
    pub fn to_sequence(&self, qa: &QuotientAlgebra) -> Result<DecompositionSequence> {
        if self.dim != qa.dim {
            return Err(Error::DimensionMismatch(self.dim, qa.dim));
        }
        if self.levels.len() != qa.p {
            return Err(Error::InvalidChoice(format!("expected {} levels, got {}", qa.p, self.levels.len())));
        }
        let choices = self
            .levels
            .iter()
            .map(|l| if l.choice_bits.is_empty() { Ok(0) } else { parse_label(&l.choice_bits) })
            .collect::<Result<Vec<_>>>()?;
        let mut centers = Vec::new();
        for (k, lv) in self.levels.iter().enumerate() {
            let c = match &lv.center {
                CenterJson::Label(s) if s == "default" => LevelCenter::Default,
                CenterJson::Label(s) => LevelCenter::Cell(parse_label(s)?),
                CenterJson::Generators(gs) => {
                    LevelCenter::Space(AbelianSpace::new(qa.dim, generators_from_json(gs)?, false, None)?)
                }
            };
            if k == 0 {
                let ok = match &c {
                    LevelCenter::Default | LevelCenter::Cell(0) => true,
                    LevelCenter::Space(sp) => sp.subspace().same_span(&qa.center.subspace(), 1e-9),
                    LevelCenter::Cell(_) => false,
                };
                if !ok {
                    return Err(Error::InvalidOverride("level 1 center must be the quotient algebra's center".into()));
                }
            } else {
                centers.push(c);
            }
        }
        build_decomposition_sequence(qa, &choices, &centers)
    }
}

pub fn sequence_to_json(seq: &DecompositionSequence) -> String {
    to_pretty(&SequenceJson::from_sequence(seq))
}

pub fn sequence_from_json(s: &str, qa: &QuotientAlgebra) -> Result<DecompositionSequence> {
    serde_json::from_str::<SequenceJson>(s).map_err(parse_err)?.to_sequence(qa)
}

/// Decimal with 17 significant digits, enough to round-trip any `f64`.
pub fn format_sig17(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x.is_finite() { "0.0".into() } else { "null".into() };
    }
    let sci = format!("{:.16e}", x);
    let (mant, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let neg = mant.starts_with('-');
    let digits: String = mant.chars().filter(|c| c.is_ascii_digit()).collect();
    if !(-7..=16).contains(&exp) {
        return sci;
    }
    let sign = if neg { "-" } else { "" };
    if exp < 0 {
        format!("{sign}0.{}{digits}", "0".repeat((-exp - 1) as usize))
    } else {
        let (int, frac) = digits.split_at(exp as usize + 1);
        let frac = if frac.is_empty() { "0" } else { frac };
        format!("{sign}{int}.{frac}")
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FactorJson {
    pub tree_index: String,
    pub ordinal: usize,
    pub generator: GeneratorJson,
    pub angle: Box<RawValue>,
    pub locality: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FactorizationJson {
    pub dim: usize,
    pub global_phase: [f64; 2],
    pub reconstruction_error: f64,
    #[serde(default)]
    pub block_count: usize,
    pub factors: Vec<FactorJson>,
}

impl FactorizationJson {
    pub fn from_factorization(f: &Factorization) -> Self {
        FactorizationJson {
            dim: f.dim,
            global_phase: [f.global_phase.re, f.global_phase.im],
            reconstruction_error: f.reconstruction_error,
            block_count: f.block_count,
            factors: f
                .factors
                .iter()
                .map(|g| FactorJson {
                    tree_index: g.tree_index.clone(),
                    ordinal: g.ordinal,
                    generator: GeneratorJson::from_generator(&g.generator),
                    angle: RawValue::from_string(format_sig17(g.angle)).expect("valid number"),
                    locality: g.locality.as_str().to_string(),
                })
                .collect(),
        }
    }

    pub fn to_factorization(&self) -> Result<Factorization> {
        let factors = self
            .factors
            .iter()
            .map(|fj| {
                let locality = match fj.locality.as_str() {
                    "local" => Locality::Local,
                    "nonlocal" => Locality::Nonlocal,
                    other => return Err(Error::Parse(format!("unknown locality {other:?}"))),
                };
                Ok(GateFactor {
                    tree_index: fj.tree_index.clone(),
                    ordinal: fj.ordinal,
                    generator: fj.generator.to_generator()?,
                    angle: fj.angle.get().parse().map_err(parse_err)?,
                    locality,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Factorization {
            dim: self.dim,
            factors,
            global_phase: Complex64::new(self.global_phase[0], self.global_phase[1]),
            reconstruction_error: self.reconstruction_error,
            block_count: self.block_count,
        })
    }
}

pub fn factorization_to_json(f: &Factorization) -> String {
    to_pretty(&FactorizationJson::from_factorization(f))
}

pub fn factorization_from_json(s: &str) -> Result<Factorization> {
    serde_json::from_str::<FactorizationJson>(s).map_err(parse_err)?.to_factorization()
}

pub fn matrix_to_json(m: &CMat) -> String {
    to_pretty(&MatrixJson::from_matrix(m))
}

pub fn matrix_from_json(s: &str) -> Result<CMat> {
    serde_json::from_str::<MatrixJson>(s).map_err(parse_err)?.to_matrix()
}

/// Center files hold either a bare generator list or `{"generators": [...]}`.
pub fn generators_from_file_json(s: &str) -> Result<Vec<Generator>> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Form {
        List(Vec<GeneratorJson>),
        Wrapped { generators: Vec<GeneratorJson> },
    }
    match serde_json::from_str::<Form>(s).map_err(parse_err)? {
        Form::List(g) | Form::Wrapped { generators: g } => generators_from_json(&g),
    }
}

pub fn to_pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}
