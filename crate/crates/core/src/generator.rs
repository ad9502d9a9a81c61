//! Basis generators of su(N) in the λ-representation and as tensor words,
//! with numeric and closed-form commutators.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{commutator, frob, hermiticity_error, trace, CMat, I, ONE, TOL_EXACT, ZERO};

/// One tensor factor: a site of dimension `dim` carrying basis element `index`
/// (0 is the identity, `1..dim²-1` the generalized Gell-Mann ordering, which
/// is σ1,σ2,σ3 for qubits and μ1..μ8 for qutrits).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Site {
    pub dim: usize,
    pub index: usize,
}

impl Site {
    pub fn new(dim: usize, index: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidWord(format!("site dimension {dim} unsupported")));
        }
        if index >= dim * dim {
            return Err(Error::InvalidWord(format!("index {index} out of range for site dimension {dim}")));
        }
        Ok(Site { dim, index })
    }

    pub fn pauli(index: usize) -> Self {
        Site { dim: 2, index }
    }

    pub fn gell_mann(index: usize) -> Self {
        Site { dim: 3, index }
    }

    pub fn is_identity(&self) -> bool {
        self.index == 0
    }

    /// λ-basis label of this site element inside su(dim); `None` for the identity.
    pub fn lambda_label(&self) -> Option<Label> {
        if self.index == 0 {
            return None;
        }
        let mut k = 1;
        for j in 2..=self.dim {
            for i in 1..j {
                if k == self.index {
                    return Some(Label::Lambda(i, j));
                }
                if k + 1 == self.index {
                    return Some(Label::LambdaHat(i, j));
                }
                k += 2;
            }
            if k == self.index {
                return Some(Label::OrthoDiag(j));
            }
            k += 1;
        }
        None
    }

    pub fn matrix(&self) -> CMat {
        match self.lambda_label() {
            None => CMat::identity(self.dim, self.dim),
            Some(l) => label_matrix(&l, self.dim).expect("site labels are valid"),
        }
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.dim {
            2 => write!(f, "p{}", self.index),
            3 => write!(f, "g{}", self.index),
            d => write!(f, "s{}_{}", d, self.index),
        }
    }
}

impl FromStr for Site {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Parse(format!("bad site symbol '{s}'"));
        if let Some(r) = s.strip_prefix('p') {
            Site::new(2, r.parse().map_err(|_| bad())?)
        } else if let Some(r) = s.strip_prefix('g') {
            Site::new(3, r.parse().map_err(|_| bad())?)
        } else if let Some(r) = s.strip_prefix('s') {
            let (d, k) = r.split_once('_').ok_or_else(bad)?;
            Site::new(d.parse().map_err(|_| bad())?, k.parse().map_err(|_| bad())?)
        } else {
            Err(bad())
        }
    }
}

/// Symbolic descriptor of a generator.
#[derive(Debug, Clone, PartialEq)]
pub enum Label {
    Lambda(usize, usize),
    LambdaHat(usize, usize),
    Diag(usize, usize),
    OrthoDiag(usize),
    Tensor(Vec<Site>),
    /// Real combination of other labels, e.g. `λ12+λ34-2λ56`.
    Sum(Vec<(f64, Label)>),
    /// A matrix without a symbolic form (for instance after a change of frame).
    Custom,
}

impl Label {
    pub fn is_lambda_basis(&self) -> bool {
        matches!(self, Label::Lambda(..) | Label::LambdaHat(..) | Label::Diag(..))
    }

    pub fn tensor_word(&self) -> Option<&[Site]> {
        match self {
            Label::Tensor(w) => Some(w),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Lambda(i, j) => write!(f, "lambda({i},{j})"),
            Label::LambdaHat(i, j) => write!(f, "lambdahat({i},{j})"),
            Label::Diag(k, l) => write!(f, "d({k},{l})"),
            Label::OrthoDiag(l) => write!(f, "orthodiag({l})"),
            Label::Tensor(w) => {
                write!(f, "tensor:")?;
                for (n, s) in w.iter().enumerate() {
                    if n > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{s}")?;
                }
                Ok(())
            }
            Label::Sum(terms) => {
                for (n, (c, l)) in terms.iter().enumerate() {
                    let sign = if *c < 0.0 { "-" } else if n > 0 { "+" } else { "" };
                    let a = c.abs();
                    if (a - 1.0).abs() < 1e-15 {
                        write!(f, "{sign}{l}")?;
                    } else {
                        write!(f, "{sign}{a}*{l}")?;
                    }
                }
                Ok(())
            }
            Label::Custom => write!(f, "custom"),
        }
    }
}

fn parse_pair(body: &str) -> Result<(usize, usize)> {
    let (a, b) = body
        .split_once(',')
        .ok_or_else(|| Error::Parse(format!("expected two subscripts in '{body}'")))?;
    let p = |s: &str| s.trim().parse::<usize>().map_err(|_| Error::Parse(format!("bad subscript '{s}'")));
    Ok((p(a)?, p(b)?))
}

fn parse_atom(s: &str) -> Result<Label> {
    let s = s.trim();
    if let Some(w) = s.strip_prefix("tensor:") {
        let sites = w.split(',').map(Site::from_str).collect::<Result<Vec<_>>>()?;
        return Ok(Label::Tensor(sites));
    }
    if s == "custom" {
        return Ok(Label::Custom);
    }
    let open = s.find('(').ok_or_else(|| Error::Parse(format!("unknown label '{s}'")))?;
    let body = s[open + 1..]
        .strip_suffix(')')
        .ok_or_else(|| Error::Parse(format!("unterminated label '{s}'")))?;
    match &s[..open] {
        "lambda" => {
            let (i, j) = parse_pair(body)?;
            Ok(Label::Lambda(i, j))
        }
        "lambdahat" => {
            let (i, j) = parse_pair(body)?;
            Ok(Label::LambdaHat(i, j))
        }
        "d" => {
            let (k, l) = parse_pair(body)?;
            Ok(Label::Diag(k, l))
        }
        "orthodiag" => Ok(Label::OrthoDiag(
            body.trim().parse().map_err(|_| Error::Parse(format!("bad subscript '{body}'")))?,
        )),
        other => Err(Error::Parse(format!("unknown label kind '{other}'"))),
    }
}

impl FromStr for Label {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.starts_with("tensor:") || s == "custom" {
            return parse_atom(s);
        }
        // split on top-level signs to recognise sums
        let mut terms = Vec::new();
        let mut depth = 0i32;
        let mut start = 0usize;
        let bytes = s.as_bytes();
        for (k, &ch) in bytes.iter().enumerate() {
            match ch {
                b'(' => depth += 1,
                b')' => depth -= 1,
                b'+' | b'-' if depth == 0 && k > 0 && bytes[k - 1] != b'e' && bytes[k - 1] != b'*' => {
                    terms.push(&s[start..k]);
                    start = k;
                }
                _ => {}
            }
        }
        terms.push(&s[start..]);
        let single = terms.len() == 1 && !s.starts_with('-') && !s.contains('*');
        if single {
            return parse_atom(s);
        }
        let mut out = Vec::new();
        for t in terms {
            let t = t.trim();
            let (sign, rest) = match t.strip_prefix('-') {
                Some(r) => (-1.0, r),
                None => (1.0, t.strip_prefix('+').unwrap_or(t)),
            };
            let (coef, atom) = match rest.split_once('*') {
                Some((c, a)) => (
                    c.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad coefficient '{c}'")))?,
                    a,
                ),
                None => (1.0, rest),
            };
            out.push((sign * coef, parse_atom(atom)?));
        }
        Ok(Label::Sum(out))
    }
}

fn check_pair(i: usize, j: usize, n: usize) -> Result<()> {
    if i == 0 || j == 0 || i > n || j > n {
        return Err(Error::InvalidSubscript(format!("({i},{j}) out of range for N={n}")));
    }
    if i == j {
        return Err(Error::InvalidSubscript(format!("({i},{j}) has equal subscripts")));
    }
    Ok(())
}

fn unit(n: usize, i: usize, j: usize, z: Complex64) -> CMat {
    let mut m = CMat::zeros(n, n);
    m[(i - 1, j - 1)] = z;
    m
}

/// Matrix of a label at dimension `n`.
pub fn label_matrix(label: &Label, n: usize) -> Result<CMat> {
    match label {
        Label::Lambda(i, j) => {
            check_pair(*i, *j, n)?;
            Ok(unit(n, *i, *j, ONE) + unit(n, *j, *i, ONE))
        }
        Label::LambdaHat(i, j) => {
            check_pair(*i, *j, n)?;
            Ok(unit(n, *i, *j, -I) + unit(n, *j, *i, I))
        }
        Label::Diag(k, l) => {
            check_pair(*k, *l, n)?;
            Ok(unit(n, *k, *k, ONE) - unit(n, *l, *l, ONE))
        }
        Label::OrthoDiag(l) => {
            if *l < 2 || *l > n {
                return Err(Error::InvalidSubscript(format!("orthodiag({l}) out of range for N={n}")));
            }
            let c = (2.0 / (*l as f64 * (*l as f64 - 1.0))).sqrt();
            let mut m = CMat::zeros(n, n);
            for i in 1..*l {
                m[(i - 1, i - 1)] = Complex64::new(c, 0.0);
            }
            m[(l - 1, l - 1)] = Complex64::new(-c * (*l as f64 - 1.0), 0.0);
            Ok(m)
        }
        Label::Tensor(w) => {
            let m = word_matrix(w)?;
            if m.nrows() != n {
                return Err(Error::DimensionMismatch(m.nrows(), n));
            }
            Ok(m)
        }
        Label::Sum(terms) => {
            let mut m = CMat::zeros(n, n);
            for (c, l) in terms {
                m += label_matrix(l, n)? * Complex64::new(*c, 0.0);
            }
            Ok(m)
        }
        Label::Custom => Err(Error::UnsupportedLabel("custom label has no intrinsic matrix".into())),
    }
}

/// Kronecker product of site matrices.
pub fn word_matrix(word: &[Site]) -> Result<CMat> {
    if word.is_empty() {
        return Err(Error::InvalidWord("empty word".into()));
    }
    let mut m = CMat::identity(1, 1);
    for s in word {
        Site::new(s.dim, s.index)?;
        m = m.kronecker(&s.matrix());
    }
    Ok(m)
}

/// One basis element of su(N).
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub label: Label,
    pub dim: usize,
    pub matrix: CMat,
}

impl Generator {
    pub fn from_label(label: Label, dim: usize) -> Result<Self> {
        let matrix = label_matrix(&label, dim)?;
        Ok(Generator { label, dim, matrix })
    }

    /// A generator given only by its matrix; must be Hermitian and traceless.
    pub fn custom(matrix: CMat) -> Result<Self> {
        let n = matrix.nrows();
        if matrix.ncols() != n {
            return Err(Error::DimensionMismatch(n, matrix.ncols()));
        }
        if hermiticity_error(&matrix) > TOL_EXACT * (1.0 + frob(&matrix)) {
            return Err(Error::NotHermitian("custom generator".into()));
        }
        if trace(&matrix).norm() > 1e-10 {
            return Err(Error::NotHermitian("custom generator has nonzero trace".into()));
        }
        Ok(Generator { label: Label::Custom, dim: n, matrix })
    }

    pub fn with_label(label: Label, matrix: CMat) -> Self {
        Generator { label, dim: matrix.nrows(), matrix }
    }

    pub fn conjugated(&self, u: &CMat) -> Generator {
        Generator::with_label(Label::Custom, u * &self.matrix * u.adjoint())
    }
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label)
    }
}

/// λ_ij; reversed subscripts are normalised since λ_ij = λ_ji.
pub fn make_lambda(i: usize, j: usize, n: usize) -> Result<Generator> {
    check_pair(i, j, n)?;
    Generator::from_label(Label::Lambda(i.min(j), i.max(j)), n)
}

/// λ̂_ij; reversed subscripts give `-λ̂_ji`.
pub fn make_lambda_hat(i: usize, j: usize, n: usize) -> Result<Generator> {
    check_pair(i, j, n)?;
    if i < j {
        Generator::from_label(Label::LambdaHat(i, j), n)
    } else {
        Generator::from_label(Label::Sum(vec![(-1.0, Label::LambdaHat(j, i))]), n)
    }
}

/// d_kl; reversed subscripts give `-d_lk`.
pub fn make_diag(k: usize, l: usize, n: usize) -> Result<Generator> {
    check_pair(k, l, n)?;
    if k < l {
        Generator::from_label(Label::Diag(k, l), n)
    } else {
        Generator::from_label(Label::Sum(vec![(-1.0, Label::Diag(l, k))]), n)
    }
}

pub fn make_ortho_diag(l: usize, n: usize) -> Result<Generator> {
    Generator::from_label(Label::OrthoDiag(l), n)
}

/// Kronecker-product generator; the all-identity word is rejected.
pub fn make_tensor_word(word: &[Site]) -> Result<Generator> {
    if word.is_empty() {
        return Err(Error::InvalidWord("empty word".into()));
    }
    if word.iter().all(Site::is_identity) {
        return Err(Error::InvalidWord("identity word is not traceless".into()));
    }
    let m = word_matrix(word)?;
    Ok(Generator { label: Label::Tensor(word.to_vec()), dim: m.nrows(), matrix: m })
}

/// Parses a comma separated Pauli word such as `"3,0,1"`.
pub fn pauli_word(indices: &[usize]) -> Result<Generator> {
    make_tensor_word(&indices.iter().map(|&k| Site::pauli(k)).collect::<Vec<_>>())
}

pub fn commutator_numeric(a: &Generator, b: &Generator) -> Result<CMat> {
    if a.dim != b.dim {
        return Err(Error::DimensionMismatch(a.dim, b.dim));
    }
    Ok(commutator(&a.matrix, &b.matrix))
}

/// Hilbert-Schmidt inner product `Tr(A·B)`.
pub fn hs_inner(a: &Generator, b: &Generator) -> Result<f64> {
    if a.dim != b.dim {
        return Err(Error::DimensionMismatch(a.dim, b.dim));
    }
    Ok(trace(&(&a.matrix * &b.matrix)).re)
}

/// Result of a closed-form commutator in the λ-basis.
#[derive(Debug, Clone, PartialEq)]
pub struct CommutatorResult {
    pub terms: Vec<(Complex64, Label)>,
    pub is_zero: bool,
}

impl CommutatorResult {
    pub fn to_matrix(&self, n: usize) -> Result<CMat> {
        let mut m = CMat::zeros(n, n);
        for (c, l) in &self.terms {
            m += label_matrix(l, n)? * *c;
        }
        Ok(m)
    }
}

/// Accumulates terms with possibly unnormalised subscripts.
struct TermSink {
    lam: Vec<((usize, usize), Complex64)>,
    hat: Vec<((usize, usize), Complex64)>,
    diag: Vec<(usize, Complex64)>,
}

impl TermSink {
    fn new() -> Self {
        TermSink { lam: Vec::new(), hat: Vec::new(), diag: Vec::new() }
    }

    fn add(v: &mut Vec<((usize, usize), Complex64)>, key: (usize, usize), c: Complex64) {
        match v.iter_mut().find(|(k, _)| *k == key) {
            Some((_, z)) => *z += c,
            None => v.push((key, c)),
        }
    }

    fn add_diag(&mut self, i: usize, c: Complex64) {
        match self.diag.iter_mut().find(|(k, _)| *k == i) {
            Some((_, z)) => *z += c,
            None => self.diag.push((i, c)),
        }
    }

    /// `c·λ_ab` with λ_ab = λ_ba and λ_aa = 2|a⟩⟨a|.
    fn lambda(&mut self, c: Complex64, a: usize, b: usize) {
        if a == b {
            self.add_diag(a, c * 2.0);
        } else {
            Self::add(&mut self.lam, (a.min(b), a.max(b)), c);
        }
    }

    /// `c·λ̂_ab` with λ̂_ab = -λ̂_ba and λ̂_aa = 0.
    fn hat(&mut self, c: Complex64, a: usize, b: usize) {
        if a < b {
            Self::add(&mut self.hat, (a, b), c);
        } else if a > b {
            Self::add(&mut self.hat, (b, a), -c);
        }
    }

    fn finish(self) -> CommutatorResult {
        let mut terms = Vec::new();
        let keep = |z: &Complex64| z.norm() > TOL_EXACT;
        let mut lam = self.lam;
        lam.sort_by_key(|(k, _)| *k);
        for ((i, j), c) in lam.into_iter().filter(|(_, c)| keep(c)) {
            terms.push((c, Label::Lambda(i, j)));
        }
        let mut hat = self.hat;
        hat.sort_by_key(|(k, _)| *k);
        for ((i, j), c) in hat.into_iter().filter(|(_, c)| keep(c)) {
            terms.push((c, Label::LambdaHat(i, j)));
        }
        let mut diag: Vec<(usize, Complex64)> = self.diag.into_iter().filter(|(_, c)| keep(c)).collect();
        diag.sort_by_key(|(k, _)| *k);
        if diag.len() == 2 && (diag[0].1 + diag[1].1).norm() <= TOL_EXACT {
            terms.push((diag[0].1, Label::Diag(diag[0].0, diag[1].0)));
        } else if !diag.is_empty() {
            // Σ v_i |i⟩⟨i| with Σ v_i = 0 equals Σ_{l>1} (-v_l) d_1l
            for (l, c) in diag {
                if l != 1 {
                    terms.push((-c, Label::Diag(1, l)));
                }
            }
        }
        let is_zero = terms.is_empty();
        CommutatorResult { terms, is_zero }
    }
}

fn delta(a: usize, b: usize) -> f64 {
    if a == b {
        1.0
    } else {
        0.0
    }
}

fn commute_lambda_diag(sink: &mut TermSink, hat: bool, i: usize, j: usize, k: usize, l: usize, sign: f64) {
    let f = -delta(i, k) + delta(i, l) + delta(j, k) - delta(j, l);
    if hat {
        // [λ̂ij, dkl] = i λij (δik − δil − δjk + δjl)
        sink.lambda(I * (-f * sign), i, j);
    } else {
        // [λij, dkl] = i λ̂ij (−δik + δil + δjk − δjl)
        sink.hat(I * (f * sign), i, j);
    }
}

/// Closed-form commutator of two λ-basis labels.
pub fn commutator_symbolic(a: &Label, b: &Label) -> Result<CommutatorResult> {
    use Label::*;
    for l in [a, b] {
        if !l.is_lambda_basis() {
            return Err(Error::UnsupportedLabel(l.to_string()));
        }
    }
    let mut s = TermSink::new();
    match (a, b) {
        (Diag(..), Diag(..)) => {}
        (Lambda(i, j), Diag(k, l)) => commute_lambda_diag(&mut s, false, *i, *j, *k, *l, 1.0),
        (LambdaHat(i, j), Diag(k, l)) => commute_lambda_diag(&mut s, true, *i, *j, *k, *l, 1.0),
        (Diag(k, l), Lambda(i, j)) => commute_lambda_diag(&mut s, false, *i, *j, *k, *l, -1.0),
        (Diag(k, l), LambdaHat(i, j)) => commute_lambda_diag(&mut s, true, *i, *j, *k, *l, -1.0),
        (Lambda(i, j), Lambda(k, l)) => {
            let (i, j, k, l) = (*i, *j, *k, *l);
            s.hat(I * delta(j, l), i, k);
            s.hat(I * delta(j, k), i, l);
            s.hat(I * delta(i, l), j, k);
            s.hat(I * delta(i, k), j, l);
        }
        (LambdaHat(i, j), LambdaHat(k, l)) => {
            let (i, j, k, l) = (*i, *j, *k, *l);
            s.hat(I * delta(j, l), i, k);
            s.hat(-I * delta(j, k), i, l);
            s.hat(-I * delta(i, l), j, k);
            s.hat(I * delta(i, k), j, l);
        }
        (Lambda(i, j), LambdaHat(k, l)) => lambda_lambdahat(&mut s, *i, *j, *k, *l, 1.0),
        (LambdaHat(k, l), Lambda(i, j)) => lambda_lambdahat(&mut s, *i, *j, *k, *l, -1.0),
        _ => unreachable!(),
    }
    Ok(s.finish())
}

fn lambda_lambdahat(s: &mut TermSink, i: usize, j: usize, k: usize, l: usize, sign: f64) {
    // [λij, λ̂kl] = iλik δjl − iλil δjk + iλjk δil − iλjl δik
    s.lambda(I * (sign * delta(j, l)), i, k);
    s.lambda(I * (-sign * delta(j, k)), i, l);
    s.lambda(I * (sign * delta(i, l)), j, k);
    s.lambda(I * (-sign * delta(i, k)), j, l);
}

/// All λ-basis labels of su(N): λ_ij, λ̂_ij (i<j) and d_1l.
pub fn lambda_basis_labels(n: usize) -> Vec<Label> {
    let mut out = Vec::with_capacity(n * n - 1);
    for i in 1..=n {
        for j in (i + 1)..=n {
            out.push(Label::Lambda(i, j));
        }
    }
    for i in 1..=n {
        for j in (i + 1)..=n {
            out.push(Label::LambdaHat(i, j));
        }
    }
    for l in 2..=n {
        out.push(Label::Diag(1, l));
    }
    out
}

pub fn lambda_basis(n: usize) -> Vec<Generator> {
    lambda_basis_labels(n)
        .into_iter()
        .map(|l| Generator::from_label(l, n).expect("valid basis label"))
        .collect()
}

/// Expansion of a Hermitian traceless matrix over {λ_ij, λ̂_ij, d_1l}.
pub fn to_lambda_basis(m: &CMat) -> Result<Vec<(f64, Label)>> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::DimensionMismatch(n, m.ncols()));
    }
    if hermiticity_error(m) > 1e-10 * (1.0 + frob(m)) {
        return Err(Error::NotHermitian("input to to_lambda_basis".into()));
    }
    let mut out = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let c = m[(i, j)].re;
            if c.abs() > TOL_EXACT {
                out.push((c, Label::Lambda(i + 1, j + 1)));
            }
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let c = -m[(i, j)].im;
            if c.abs() > TOL_EXACT {
                out.push((c, Label::LambdaHat(i + 1, j + 1)));
            }
        }
    }
    for l in 1..n {
        let c = -m[(l, l)].re;
        if c.abs() > TOL_EXACT {
            out.push((c, Label::Diag(1, l + 1)));
        }
    }
    Ok(out)
}

pub fn reassemble(terms: &[(f64, Label)], n: usize) -> Result<CMat> {
    let mut m = CMat::zeros(n, n);
    for (c, l) in terms {
        m += label_matrix(l, n)? * Complex64::new(*c, 0.0);
    }
    Ok(m)
}

/// Ordered site dimensions of a tensor-product system.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SiteStructure {
    pub dims: Vec<usize>,
}

impl SiteStructure {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() || dims.iter().any(|&d| d < 2) {
            return Err(Error::InvalidWord(format!("bad site structure {dims:?}")));
        }
        Ok(SiteStructure { dims })
    }

    /// The odd part of N as one λ-basis site, followed by one qubit per factor of 2.
    pub fn default_for(n: usize) -> Self {
        let mut m = n;
        let mut twos = 0;
        while m.is_multiple_of(2) && m > 1 {
            m /= 2;
            twos += 1;
        }
        let mut dims = Vec::new();
        if m > 1 {
            dims.push(m);
        }
        dims.extend(std::iter::repeat_n(2, twos));
        SiteStructure { dims }
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().product()
    }

    /// Every non-identity word in lexicographic order of site indices.
    pub fn words(&self) -> Vec<Vec<Site>> {
        let mut out: Vec<Vec<Site>> = vec![Vec::new()];
        for &d in &self.dims {
            let mut next = Vec::with_capacity(out.len() * d * d);
            for w in &out {
                for k in 0..d * d {
                    let mut w2 = w.clone();
                    w2.push(Site { dim: d, index: k });
                    next.push(w2);
                }
            }
            out = next;
        }
        out.retain(|w| !w.iter().all(Site::is_identity));
        out
    }

    pub fn word_generators(&self) -> Vec<Generator> {
        self.words().iter().map(|w| make_tensor_word(w).expect("valid word")).collect()
    }

    /// Finds a word `w` and scalar `c` with `m = c·w`.
    pub fn find_word(&self, m: &CMat) -> Option<(f64, Vec<Site>)> {
        if m.nrows() != self.total_dim() {
            return None;
        }
        let norm = frob(m);
        if norm < TOL_EXACT {
            return None;
        }
        for w in self.words() {
            let wm = word_matrix(&w).ok()?;
            let wn2 = trace(&(&wm * &wm)).re;
            let c = trace(&(&wm * m)).re / wn2;
            if c.abs() > TOL_EXACT && frob(&(m - &wm * Complex64::new(c, 0.0))) <= 1e-9 * norm {
                return Some((c, w));
            }
        }
        None
    }
}

#[allow(dead_code)]
pub(crate) fn zero(n: usize) -> CMat {
    CMat::from_element(n, n, ZERO)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random_traceless_hermitian;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn sigma(k: usize) -> CMat {
        match k {
            1 => CMat::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]),
            2 => CMat::from_row_slice(2, 2, &[ZERO, -I, I, ZERO]),
            3 => CMat::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]),
            _ => CMat::identity(2, 2),
        }
    }

    // standard Gell-Mann matrices written out entry by entry
    fn mu(k: usize) -> CMat {
        let s3 = 1.0 / 3f64.sqrt();
        let z = ZERO;
        let o = ONE;
        let v: [Complex64; 9] = match k {
            1 => [z, o, z, o, z, z, z, z, z],
            2 => [z, -I, z, I, z, z, z, z, z],
            3 => [o, z, z, z, -o, z, z, z, z],
            4 => [z, z, o, z, z, z, o, z, z],
            5 => [z, z, -I, z, z, z, I, z, z],
            6 => [z, z, z, z, z, o, z, o, z],
            7 => [z, z, z, z, z, -I, z, I, z],
            8 => [c(s3, 0.0), z, z, z, c(s3, 0.0), z, z, z, c(-2.0 * s3, 0.0)],
            _ => unreachable!(),
        };
        CMat::from_row_slice(3, 3, &v)
    }

    #[test]
    fn lambda_constructors_match_pauli_and_gell_mann() {
        assert_eq!(make_lambda(1, 2, 2).unwrap().matrix, sigma(1));
        assert_eq!(make_lambda_hat(1, 2, 3).unwrap().matrix, mu(2));
        assert_eq!(make_diag(1, 2, 2).unwrap().matrix, sigma(3));
        assert!(frob(&(make_ortho_diag(3, 3).unwrap().matrix - mu(8))) < 1e-15);
        for k in 1..=8 {
            assert!(frob(&(Site::gell_mann(k).matrix() - mu(k))) < 1e-15, "mu{k}");
        }
        for k in 1..=3 {
            assert_eq!(Site::pauli(k).matrix(), sigma(k));
        }
    }

    #[test]
    fn constructor_errors() {
        assert!(matches!(make_lambda(1, 1, 3), Err(Error::InvalidSubscript(_))));
        assert!(matches!(make_lambda(0, 2, 3), Err(Error::InvalidSubscript(_))));
        assert!(matches!(make_lambda_hat(2, 4, 3), Err(Error::InvalidSubscript(_))));
        assert!(make_ortho_diag(1, 3).is_err());
    }

    #[test]
    fn reversed_subscripts_follow_sign_conventions() {
        assert_eq!(make_lambda(2, 1, 3).unwrap().matrix, make_lambda(1, 2, 3).unwrap().matrix);
        assert_eq!(make_lambda_hat(2, 1, 3).unwrap().matrix, -make_lambda_hat(1, 2, 3).unwrap().matrix);
        assert_eq!(make_diag(2, 1, 3).unwrap().matrix, -make_diag(1, 2, 3).unwrap().matrix);
    }

    #[test]
    fn tensor_words_expand_in_lambda_basis() {
        let g = pauli_word(&[3, 0, 1]).unwrap();
        let terms = to_lambda_basis(&g.matrix).unwrap();
        assert_eq!(
            terms,
            vec![
                (1.0, Label::Lambda(1, 2)),
                (1.0, Label::Lambda(3, 4)),
                (-1.0, Label::Lambda(5, 6)),
                (-1.0, Label::Lambda(7, 8))
            ]
        );
        let g = pauli_word(&[3, 1, 1]).unwrap();
        let terms = to_lambda_basis(&g.matrix).unwrap();
        assert_eq!(
            terms,
            vec![
                (1.0, Label::Lambda(1, 4)),
                (1.0, Label::Lambda(2, 3)),
                (-1.0, Label::Lambda(5, 8)),
                (-1.0, Label::Lambda(6, 7))
            ]
        );
        assert!(matches!(pauli_word(&[0, 0]), Err(Error::InvalidWord(_))));
        assert!(matches!(make_tensor_word(&[]), Err(Error::InvalidWord(_))));
        assert!(Site::new(1, 0).is_err());
    }

    #[test]
    fn numeric_commutator_examples() {
        let s1 = make_lambda(1, 2, 2).unwrap();
        let s3 = make_diag(1, 2, 2).unwrap();
        let r = commutator_numeric(&s1, &s3).unwrap();
        assert!(frob(&(r - sigma(2) * c(0.0, -2.0))) < 1e-15);
        let l = make_lambda(1, 2, 3).unwrap();
        let lh = make_lambda_hat(1, 2, 3).unwrap();
        let d = make_diag(1, 2, 3).unwrap();
        let r = commutator_numeric(&l, &lh).unwrap();
        assert!(frob(&(r - d.matrix * c(0.0, 2.0))) < 1e-15);
        let r = commutator_numeric(&make_lambda(1, 2, 4).unwrap(), &make_lambda(3, 4, 4).unwrap()).unwrap();
        assert!(frob(&r) == 0.0);
        assert!(matches!(commutator_numeric(&l, &s1), Err(Error::DimensionMismatch(3, 2))));
    }

    #[test]
    fn symbolic_commutator_examples() {
        let r = commutator_symbolic(&Label::Lambda(1, 2), &Label::Diag(1, 2)).unwrap();
        assert_eq!(r.terms, vec![(c(0.0, -2.0), Label::LambdaHat(1, 2))]);
        let r = commutator_symbolic(&Label::Lambda(1, 3), &Label::Lambda(3, 4)).unwrap();
        assert_eq!(r.terms, vec![(c(0.0, 1.0), Label::LambdaHat(1, 4))]);
        let r = commutator_symbolic(&Label::LambdaHat(1, 2), &Label::LambdaHat(3, 4)).unwrap();
        assert!(r.is_zero);
        let r = commutator_symbolic(&Label::Lambda(1, 2), &Label::LambdaHat(1, 2)).unwrap();
        assert_eq!(r.terms, vec![(c(0.0, 2.0), Label::Diag(1, 2))]);
        assert!(matches!(
            commutator_symbolic(&Label::OrthoDiag(2), &Label::Lambda(1, 2)),
            Err(Error::UnsupportedLabel(_))
        ));
    }

    #[test]
    fn symbolic_agrees_with_numeric_su4() {
        let n = 4;
        let labels = lambda_basis_labels(n);
        let mut extra = labels.clone();
        extra.push(Label::Diag(2, 3));
        extra.push(Label::Diag(3, 4));
        for a in &extra {
            for b in &extra {
                let sym = commutator_symbolic(a, b).unwrap();
                for (z, _) in &sym.terms {
                    assert!(z.re.abs() < 1e-15, "coefficient not imaginary");
                }
                let num = commutator(&label_matrix(a, n).unwrap(), &label_matrix(b, n).unwrap());
                assert!(frob(&(sym.to_matrix(n).unwrap() - num)) < 1e-12, "{a} {b}");
            }
        }
    }

    #[test]
    fn hs_inner_examples() {
        let l = make_lambda(1, 2, 3).unwrap();
        let lh = make_lambda_hat(1, 2, 3).unwrap();
        assert_eq!(hs_inner(&l, &lh).unwrap(), 0.0);
        assert_eq!(hs_inner(&l, &l).unwrap(), 2.0);
        let a = pauli_word(&[3, 0]).unwrap();
        let b = pauli_word(&[0, 3]).unwrap();
        assert_eq!(hs_inner(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn lambda_expansion_projection_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = random_traceless_hermitian(4, &mut rng);
        let terms = to_lambda_basis(&m).unwrap();
        // brute-force projection: λ and λ̂ are HS-orthogonal with norm 2
        for (c, l) in &terms {
            if let Label::Lambda(..) | Label::LambdaHat(..) = l {
                let g = Generator::from_label(l.clone(), 4).unwrap();
                let proj = trace(&(&g.matrix * &m)).re / 2.0;
                assert!((proj - c).abs() < 1e-12);
            }
        }
        assert!(frob(&(reassemble(&terms, 4).unwrap() - &m)) < 1e-12);
        assert!(to_lambda_basis(&CMat::zeros(3, 3)).unwrap().is_empty());
        let mut bad = CMat::zeros(2, 2);
        bad[(0, 1)] = ONE;
        assert!(matches!(to_lambda_basis(&bad), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn label_strings_round_trip() {
        for s in [
            "lambda(1,2)",
            "lambdahat(3,4)",
            "d(1,5)",
            "orthodiag(3)",
            "tensor:p3,p0,p1",
            "tensor:g4,p3",
            "tensor:s5_7,p1",
            "lambda(1,2)+lambda(3,4)-2*lambda(5,6)",
            "-lambdahat(1,4)+lambdahat(2,3)",
        ] {
            let l: Label = s.parse().unwrap();
            assert_eq!(l.to_string(), s);
        }
        assert!("foo(1,2)".parse::<Label>().is_err());
    }

    #[test]
    fn site_structure_defaults() {
        assert_eq!(SiteStructure::default_for(8).dims, vec![2, 2, 2]);
        assert_eq!(SiteStructure::default_for(6).dims, vec![3, 2]);
        assert_eq!(SiteStructure::default_for(5).dims, vec![5]);
        assert_eq!(SiteStructure::default_for(12).dims, vec![3, 2, 2]);
        assert_eq!(SiteStructure::default_for(6).words().len(), 35);
        let g = pauli_word(&[2, 1]).unwrap();
        let (c, w) = SiteStructure::default_for(4).find_word(&(g.matrix * c(-3.0, 0.0))).unwrap();
        assert_eq!(c, -3.0);
        assert_eq!(w, vec![Site::pauli(2), Site::pauli(1)]);
    }
}
