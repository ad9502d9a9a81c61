//! Conjugate partitions and quotient algebras of su(N).

use std::collections::{BTreeMap, BTreeSet};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::generator::{
    label_matrix, make_tensor_word, to_lambda_basis, Generator, Label, SiteStructure,
};
use crate::linalg::{
    eigh, frob, herm_to_vec, is_diagonal, vec_to_herm, CMat, Subspace, I, TOL_EXACT, TOL_SOLVE,
};

/// `-i[a, b]`, Hermitian whenever `a` and `b` are.
pub fn herm_commutator(a: &CMat, b: &CMat) -> CMat {
    (a * b - b * a) * (-I)
}

pub(crate) fn commutes(a: &CMat, b: &CMat) -> bool {
    let scale = (frob(a) * frob(b)).max(1.0);
    frob(&(a * b - b * a)) <= 1e-10 * scale
}

/// Number of bits `p` with `2^(p-1) < n <= 2^p`.
pub fn bits_for(n: usize) -> usize {
    let mut p = 0;
    while (1usize << p) < n {
        p += 1;
    }
    p
}

/// `ζ` written as a `p`-digit binary string.
pub fn format_label(zeta: usize, p: usize) -> String {
    format!("{:0width$b}", zeta, width = p)
}

pub fn parse_label(s: &str) -> Result<usize> {
    let s = s.trim();
    if s.is_empty() || !s.chars().all(|c| c == '0' || c == '1') {
        return Err(Error::Parse(format!("bad binary label '{s}'")));
    }
    usize::from_str_radix(s, 2).map_err(|e| Error::Parse(e.to_string()))
}

/// A commuting, linearly independent set of generators.
#[derive(Debug, Clone, PartialEq)]
pub struct AbelianSpace {
    pub dim: usize,
    pub generators: Vec<Generator>,
    pub hat: bool,
    pub binary_label: Option<usize>,
}

impl AbelianSpace {
    pub fn new(dim: usize, generators: Vec<Generator>, hat: bool, binary_label: Option<usize>) -> Result<Self> {
        let s = AbelianSpace { dim, generators, hat, binary_label };
        s.validate()?;
        Ok(s)
    }

    pub fn unchecked(dim: usize, generators: Vec<Generator>, hat: bool, binary_label: Option<usize>) -> Self {
        AbelianSpace { dim, generators, hat, binary_label }
    }

    pub fn validate(&self) -> Result<()> {
        for g in &self.generators {
            if g.dim != self.dim {
                return Err(Error::DimensionMismatch(g.dim, self.dim));
            }
        }
        if let Some((a, b)) = self.first_noncommuting() {
            return Err(Error::NotCommuting(format!(
                "{} and {}",
                self.generators[a].label, self.generators[b].label
            )));
        }
        if self.subspace().dim() != self.generators.len() {
            return Err(Error::LinearlyDependent(format!("{} generators", self.generators.len())));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }

    pub fn subspace(&self) -> Subspace {
        Subspace::from_matrices(self.dim, self.generators.iter().map(|g| &g.matrix))
    }

    pub fn first_noncommuting(&self) -> Option<(usize, usize)> {
        let gs = &self.generators;
        for a in 0..gs.len() {
            for b in (a + 1)..gs.len() {
                if !commutes(&gs[a].matrix, &gs[b].matrix) {
                    return Some((a, b));
                }
            }
        }
        None
    }

    pub fn is_abelian(&self) -> bool {
        self.first_noncommuting().is_none()
    }

    pub fn conjugated(&self, u: &CMat) -> AbelianSpace {
        AbelianSpace {
            dim: self.dim,
            generators: self.generators.iter().map(|g| g.conjugated(u)).collect(),
            hat: self.hat,
            binary_label: self.binary_label,
        }
    }

    fn realness(&self) -> Option<bool> {
        let mut all_real = true;
        let mut all_imag = true;
        for g in &self.generators {
            let tol = TOL_EXACT * (1.0 + frob(&g.matrix));
            all_real &= g.matrix.iter().all(|z| z.im.abs() <= tol);
            all_imag &= g.matrix.iter().all(|z| z.re.abs() <= tol);
        }
        match (all_real, all_imag) {
            (true, false) => Some(true),
            (false, true) => Some(false),
            _ => None,
        }
    }
}

/// Conjugate pair `{W, Ŵ}` with optional binary label ζ.
#[derive(Debug, Clone, PartialEq)]
pub struct ConjugatePair {
    pub w: AbelianSpace,
    pub w_hat: AbelianSpace,
    pub binary_label: Option<usize>,
}

impl ConjugatePair {
    fn swap(&mut self) {
        std::mem::swap(&mut self.w, &mut self.w_hat);
        self.w.hat = false;
        self.w_hat.hat = true;
    }

    fn set_label(&mut self, z: usize) {
        self.binary_label = Some(z);
        self.w.binary_label = Some(z);
        self.w_hat.binary_label = Some(z);
    }

    pub fn side(&self, hat: bool) -> &AbelianSpace {
        if hat {
            &self.w_hat
        } else {
            &self.w
        }
    }

    pub fn generators(&self) -> impl Iterator<Item = &Generator> {
        self.w.generators.iter().chain(self.w_hat.generators.iter())
    }
}

/// Center subalgebra plus conjugate pairs closed under commutation.
#[derive(Debug, Clone, PartialEq)]
pub struct QuotientAlgebra {
    pub dim: usize,
    pub p: usize,
    pub center: AbelianSpace,
    pub pairs: Vec<ConjugatePair>,
}

impl QuotientAlgebra {
    pub fn is_labeled(&self) -> bool {
        self.pairs.iter().all(|c| c.binary_label.is_some())
    }

    pub fn pair(&self, zeta: usize) -> Option<&ConjugatePair> {
        self.pairs.iter().find(|c| c.binary_label == Some(zeta))
    }

    pub fn generator_count(&self) -> usize {
        self.center.len() + self.pairs.iter().map(|c| c.w.len() + c.w_hat.len()).sum::<usize>()
    }

    pub fn label_string(&self, zeta: usize) -> String {
        format_label(zeta, self.p)
    }

    /// Conjugates every generator by `u`, keeping labels and sides.
    pub fn conjugated(&self, u: &CMat) -> QuotientAlgebra {
        QuotientAlgebra {
            dim: self.dim,
            p: self.p,
            center: self.center.conjugated(u),
            pairs: self
                .pairs
                .iter()
                .map(|c| ConjugatePair {
                    w: c.w.conjugated(u),
                    w_hat: c.w_hat.conjugated(u),
                    binary_label: c.binary_label,
                })
                .collect(),
        }
    }

    pub fn is_center_diagonal(&self) -> bool {
        self.center.generators.iter().all(|g| is_diagonal(&g.matrix, TOL_EXACT))
    }
}

/// `{d_1l : l = 2..N}`.
pub fn intrinsic_center(n: usize) -> Result<AbelianSpace> {
    if n < 2 {
        return Err(Error::InvalidSubscript(format!("N = {n} must be at least 2")));
    }
    let gens = (2..=n)
        .map(|l| Generator::from_label(Label::Diag(1, l), n))
        .collect::<Result<Vec<_>>>()?;
    Ok(AbelianSpace::unchecked(n, gens, false, None))
}

/// Every word made of identities and diagonal site elements.
pub fn diagonal_word_center(sites: &SiteStructure) -> AbelianSpace {
    let gens: Vec<Generator> = sites
        .words()
        .into_iter()
        .filter(|w| w.iter().all(|s| s.is_identity() || matches!(s.lambda_label(), Some(Label::OrthoDiag(_)))))
        .map(|w| make_tensor_word(&w).expect("valid word"))
        .collect();
    AbelianSpace::unchecked(sites.total_dim(), gens, false, None)
}

/// Unitary `U` with `U g U†` diagonal for every `g` in the set; `det U = 1`.
pub fn diagonalize_abelian(space: &AbelianSpace, seed: u64) -> Result<CMat> {
    if let Some((a, b)) = space.first_noncommuting() {
        return Err(Error::NotCommuting(format!(
            "{} and {}",
            space.generators[a].label, space.generators[b].label
        )));
    }
    let n = space.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..32 {
        let mut h = CMat::zeros(n, n);
        for g in &space.generators {
            let r: f64 = rng.random_range(-1.0..1.0);
            h += &g.matrix * Complex64::new(r, 0.0);
        }
        let (vals, vecs) = eigh(&h);
        let collide = vals.windows(2).any(|w| (w[1] - w[0]).abs() < 1e-8);
        let u = vecs.adjoint();
        let ok = space
            .generators
            .iter()
            .all(|g| is_diagonal(&(&u * &g.matrix * u.adjoint()), TOL_SOLVE * (1.0 + frob(&g.matrix))));
        if ok && (!collide || space.len() + 1 < n) {
            let det = u.determinant();
            let fix = Complex64::from_polar(1.0, -det.arg() / n as f64);
            return Ok(u * fix);
        }
    }
    Err(Error::Decomposition {
        context: "simultaneous diagonalization".into(),
        reason: "no generic combination separated the common eigenspaces".into(),
    })
}

fn subspace_generators(span: &Subspace, basis: &[Generator], n: usize) -> Vec<Generator> {
    let mut chosen = Subspace::new(n * n);
    let mut out = Vec::new();
    for g in basis {
        if chosen.dim() == span.dim() {
            break;
        }
        let v = herm_to_vec(&g.matrix);
        if span.residual(&v) <= TOL_SOLVE * (1.0 + v.norm()) && chosen.push(&v) {
            out.push(g.clone());
        }
    }
    for b in span.basis() {
        if chosen.dim() == span.dim() {
            break;
        }
        if chosen.push(b) {
            out.push(Generator::with_label(Label::Custom, vec_to_herm(b, n)));
        }
    }
    out
}

/// Binary label shared by every λ-term of the pair's generators.
pub fn binary_label_of(pair: &ConjugatePair) -> Result<usize> {
    label_of_generators(pair.generators())
}

fn label_of_generators<'a>(gens: impl Iterator<Item = &'a Generator>) -> Result<usize> {
    let mut found: Option<usize> = None;
    for g in gens {
        for (_, l) in to_lambda_basis(&g.matrix)? {
            let z = match l {
                Label::Lambda(i, j) | Label::LambdaHat(i, j) => (i - 1) ^ (j - 1),
                _ => {
                    return Err(Error::NotBinaryPartitioned(format!("{} has a diagonal component", g.label)));
                }
            };
            match found {
                None => found = Some(z),
                Some(f) if f != z => {
                    return Err(Error::NotBinaryPartitioned(format!("patterns {f:b} and {z:b} mixed")));
                }
                _ => {}
            }
        }
    }
    found.ok_or_else(|| Error::NotBinaryPartitioned("no off-diagonal terms".into()))
}

fn grow_pair(seed: &CMat, center: &[CMat], n: usize) -> (Subspace, Subspace) {
    let mut w = Subspace::new(n * n);
    let mut wh = Subspace::new(n * n);
    w.push(&herm_to_vec(seed));
    loop {
        let before = (w.dim(), wh.dim());
        let ws: Vec<CMat> = w.basis().iter().map(|v| vec_to_herm(v, n)).collect();
        for x in &ws {
            for c in center {
                wh.push(&herm_to_vec(&herm_commutator(x, c)));
            }
        }
        let whs: Vec<CMat> = wh.basis().iter().map(|v| vec_to_herm(v, n)).collect();
        for y in &whs {
            for c in center {
                w.push(&herm_to_vec(&herm_commutator(y, c)));
            }
        }
        if (w.dim(), wh.dim()) == before {
            return (w, wh);
        }
    }
}

fn check_center(center: &AbelianSpace) -> Result<()> {
    let n = center.dim;
    if let Some((a, b)) = center.first_noncommuting() {
        return Err(Error::CenterNotAbelian(format!(
            "{} and {} do not commute",
            center.generators[a].label, center.generators[b].label
        )));
    }
    let rank = center.subspace().dim();
    if rank != n - 1 {
        return Err(Error::CenterNotAbelian(format!(
            "center has {rank} independent generators, a maximal abelian subalgebra of su({n}) needs {}",
            n - 1
        )));
    }
    Ok(())
}

/// Algorithm 1: seeds, conjugate spaces, reversing step, then labelling and merging.
pub fn build_quotient_algebra(center: &AbelianSpace, basis: &[Generator]) -> Result<QuotientAlgebra> {
    let n = center.dim;
    check_center(center)?;
    if let Some(g) = basis.iter().find(|g| g.dim != n) {
        return Err(Error::DimensionMismatch(g.dim, n));
    }
    let cmats: Vec<CMat> = center.generators.iter().map(|g| g.matrix.clone()).collect();
    let mut covered = center.subspace();
    let mut raw: Vec<ConjugatePair> = Vec::new();
    for g in basis {
        let v = herm_to_vec(&g.matrix);
        if covered.residual(&v) <= TOL_SOLVE * (1.0 + v.norm()) {
            continue;
        }
        let (w, wh) = grow_pair(&g.matrix, &cmats, n);
        if w.dim() != wh.dim() {
            return Err(Error::BasisNotClosed(format!(
                "seed {} gives conjugate spaces of sizes {} and {}",
                g.label,
                w.dim(),
                wh.dim()
            )));
        }
        let before = covered.dim();
        for b in w.basis().iter().chain(wh.basis()) {
            covered.push(b);
        }
        if covered.dim() != before + 2 * w.dim() {
            return Err(Error::BasisNotClosed(format!("spaces seeded by {} overlap earlier ones", g.label)));
        }
        let pair = ConjugatePair {
            w: AbelianSpace::unchecked(n, subspace_generators(&w, basis, n), false, None),
            w_hat: AbelianSpace::unchecked(n, subspace_generators(&wh, basis, n), true, None),
            binary_label: None,
        };
        for side in [&pair.w, &pair.w_hat] {
            if let Some((a, b)) = side.first_noncommuting() {
                return Err(Error::BasisNotClosed(format!(
                    "space seeded by {} is not abelian ({} vs {})",
                    g.label, side.generators[a].label, side.generators[b].label
                )));
            }
        }
        raw.push(pair);
    }
    if covered.dim() != n * n - 1 {
        return Err(Error::BasisNotClosed(format!(
            "basis and center span {} of {} dimensions",
            covered.dim(),
            n * n - 1
        )));
    }
    for pair in &mut raw {
        if pair.w.realness() == Some(false) && pair.w_hat.realness() == Some(true) {
            pair.swap();
        }
    }
    let p = bits_for(n);
    let diagonal = center.generators.iter().all(|g| is_diagonal(&g.matrix, TOL_EXACT));
    let mut pairs = if diagonal { merge_by_label(raw)? } else { label_by_landing(raw, p)? };
    pairs.sort_by_key(|c| c.binary_label);
    orient_by_closure(&mut pairs)?;
    Ok(QuotientAlgebra { dim: n, p, center: center.clone(), pairs })
}

fn union_abelian(a: &AbelianSpace, b: &AbelianSpace) -> Option<AbelianSpace> {
    let mut gens = a.generators.clone();
    gens.extend(b.generators.iter().cloned());
    let s = AbelianSpace::unchecked(a.dim, gens, a.hat, a.binary_label);
    s.is_abelian().then_some(s)
}

fn merge_by_label(raw: Vec<ConjugatePair>) -> Result<Vec<ConjugatePair>> {
    let mut groups: BTreeMap<usize, ConjugatePair> = BTreeMap::new();
    for mut pair in raw {
        let z = binary_label_of(&pair)?;
        pair.set_label(z);
        match groups.get_mut(&z) {
            None => {
                groups.insert(z, pair);
            }
            Some(acc) => {
                let straight = union_abelian(&acc.w, &pair.w).zip(union_abelian(&acc.w_hat, &pair.w_hat));
                let merged = match straight {
                    Some(m) => m,
                    None => union_abelian(&acc.w, &pair.w_hat)
                        .zip(union_abelian(&acc.w_hat, &pair.w))
                        .ok_or_else(|| {
                            Error::BasisNotClosed(format!("pairs labelled {z:b} cannot be merged into abelian spaces"))
                        })?,
                };
                acc.w = merged.0;
                acc.w_hat = merged.1;
                acc.w.hat = false;
                acc.w_hat.hat = true;
            }
        }
    }
    Ok(groups.into_values().collect())
}

fn find_landing(pairs: &[ConjugatePair], a: usize, b: usize, spans: &[Subspace]) -> Result<Option<usize>> {
    for x in pairs[a].generators() {
        for y in pairs[b].generators() {
            let z = herm_commutator(&x.matrix, &y.matrix);
            let zn = frob(&z);
            if zn <= 1e-10 {
                continue;
            }
            let v = herm_to_vec(&z);
            let hit: Vec<usize> = (0..spans.len()).filter(|&t| spans[t].residual(&v) <= TOL_SOLVE * zn.max(1.0)).collect();
            return match hit.as_slice() {
                [t] => Ok(Some(*t)),
                _ => Err(Error::BasisNotClosed(format!("commutator of {} and {} leaves every pair", x.label, y.label))),
            };
        }
    }
    Ok(None)
}

fn label_by_landing(mut raw: Vec<ConjugatePair>, p: usize) -> Result<Vec<ConjugatePair>> {
    let q = raw.len();
    if q != (1 << p) - 1 {
        return Err(Error::Unsupported(format!(
            "non-diagonal center produced {q} conjugate pairs; merging is only supported for diagonal centers"
        )));
    }
    let n = raw[0].w.dim;
    let spans: Vec<Subspace> = raw
        .iter()
        .map(|c| Subspace::from_matrices(n, c.generators().map(|g| &g.matrix)))
        .collect();
    let mut label: Vec<Option<usize>> = vec![None; q];
    let mut by_label: BTreeMap<usize, usize> = BTreeMap::new();
    let mut bit = 0;
    while let Some(g) = (0..q).find(|&k| label[k].is_none()) {
        if bit >= p {
            return Err(Error::NotBinaryPartitioned("landing table is not a binary group".into()));
        }
        let new = 1usize << bit;
        bit += 1;
        let known: Vec<(usize, usize)> = by_label.iter().map(|(&z, &k)| (z, k)).collect();
        label[g] = Some(new);
        by_label.insert(new, g);
        for (z, k) in known {
            let t = find_landing(&raw, g, k, &spans)?
                .ok_or_else(|| Error::NotBinaryPartitioned("commuting conjugate pairs".into()))?;
            if label[t].is_some() {
                return Err(Error::NotBinaryPartitioned("landing table is not a binary group".into()));
            }
            label[t] = Some(z ^ new);
            by_label.insert(z ^ new, t);
        }
    }
    for (k, pair) in raw.iter_mut().enumerate() {
        pair.set_label(label[k].expect("all labelled"));
    }
    Ok(raw)
}

/// Makes `[W_a, W_b] ⊂ Ŵ_{a⊕b}` hold by swapping the sides of composite labels.
fn orient_by_closure(pairs: &mut [ConjugatePair]) -> Result<()> {
    let index: BTreeMap<usize, usize> = pairs
        .iter()
        .enumerate()
        .filter_map(|(k, c)| c.binary_label.map(|z| (z, k)))
        .collect();
    for (&c, &kc) in &index {
        if c.is_power_of_two() {
            continue;
        }
        let a = c & c.wrapping_neg();
        let b = c ^ a;
        let (Some(&ka), Some(&kb)) = (index.get(&a), index.get(&b)) else {
            continue;
        };
        let w_c = pairs[kc].w.subspace();
        let wh_c = pairs[kc].w_hat.subspace();
        'search: for x in &pairs[ka].w.generators {
            for y in &pairs[kb].w.generators {
                let z = herm_commutator(&x.matrix, &y.matrix);
                let zn = frob(&z);
                if zn <= 1e-10 {
                    continue;
                }
                let v = herm_to_vec(&z);
                let in_hat = wh_c.residual(&v) <= TOL_SOLVE * zn.max(1.0);
                let in_w = w_c.residual(&v) <= TOL_SOLVE * zn.max(1.0);
                if in_w && !in_hat {
                    pairs[kc].swap();
                }
                break 'search;
            }
        }
    }
    Ok(())
}

/// Quotient algebra of the intrinsic center over the default site structure.
pub fn intrinsic_quotient_algebra(n: usize) -> Result<QuotientAlgebra> {
    if n < 2 {
        return Err(Error::InvalidSubscript(format!("N = {n} must be at least 2")));
    }
    let p = bits_for(n);
    if (1 << p) == n {
        let sites = SiteStructure::default_for(n);
        let center = diagonal_word_center(&sites);
        build_quotient_algebra(&center, &sites.word_generators())
    } else {
        removing_process(&intrinsic_quotient_algebra(1 << p)?, n)
    }
}

/// One entry of a closure report.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosureViolation {
    pub left: String,
    pub right: String,
    pub expected: String,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClosureReport {
    pub checked: usize,
    pub max_residual: f64,
    pub violations: Vec<ClosureViolation>,
}

impl ClosureReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    fn record(&mut self, left: String, right: String, expected: String, residual: f64, tol: f64) {
        self.checked += 1;
        self.max_residual = self.max_residual.max(residual);
        if residual > tol {
            self.violations.push(ClosureViolation { left, right, expected, residual });
        }
    }
}

struct Slot {
    name: String,
    gens: Vec<CMat>,
    span: Subspace,
    label: Option<usize>,
    hat: bool,
    is_center: bool,
}

fn slots(qa: &QuotientAlgebra) -> Vec<Slot> {
    let mut out = Vec::new();
    let mk = |name: String, s: &AbelianSpace, label, hat, is_center| Slot {
        name,
        gens: s.generators.iter().map(|g| g.matrix.clone()).collect(),
        span: s.subspace(),
        label,
        hat,
        is_center,
    };
    out.push(mk("C".into(), &qa.center, None, false, true));
    for (k, c) in qa.pairs.iter().enumerate() {
        let tag = match c.binary_label {
            Some(z) => qa.label_string(z),
            None => format!("#{}", k + 1),
        };
        out.push(mk(format!("W{tag}"), &c.w, c.binary_label, false, false));
        out.push(mk(format!("Ŵ{tag}"), &c.w_hat, c.binary_label, true, false));
    }
    out
}

pub fn verify_closure(qa: &QuotientAlgebra) -> ClosureReport {
    verify_closure_with_tol(qa, TOL_SOLVE)
}

/// Projects every commutator onto the space it must land in.
pub fn verify_closure_with_tol(qa: &QuotientAlgebra, tol: f64) -> ClosureReport {
    let slots = slots(qa);
    let mut rep = ClosureReport::default();
    let labeled = qa.is_labeled();
    let zero = Subspace::new(qa.dim * qa.dim);
    for (ia, a) in slots.iter().enumerate() {
        for (ib, b) in slots.iter().enumerate().skip(ia) {
            // target of [a, b]
            let target: Option<(&Subspace, String)> = if ia == ib {
                Some((&zero, "0".into()))
            } else if a.is_center {
                let partner = &slots[if b.hat { ib - 1 } else { ib + 1 }];
                Some((&partner.span, partner.name.clone()))
            } else if a.label.is_some() && a.label == b.label || (!labeled && ib == ia + 1 && !a.hat && b.hat) {
                Some((&slots[0].span, "C".into()))
            } else if labeled {
                let z = a.label.unwrap() ^ b.label.unwrap();
                let hat = !(a.hat ^ b.hat);
                slots
                    .iter()
                    .find(|s| s.label == Some(z) && s.hat == hat)
                    .map(|s| (&s.span, s.name.clone()))
            } else {
                None
            };
            for (ka, x) in a.gens.iter().enumerate() {
                for (kb, y) in b.gens.iter().enumerate() {
                    let z = herm_commutator(x, y);
                    let v = herm_to_vec(&z);
                    let (res, expected) = match &target {
                        Some((span, name)) => (span.residual(&v), name.clone()),
                        None => {
                            // unlabelled: the commutator must sit inside some single space
                            let best = slots
                                .iter()
                                .map(|s| (s.span.residual(&v), s.name.clone()))
                                .fold((v.norm(), "0".to_string()), |acc, r| if r.0 < acc.0 { r } else { acc });
                            best
                        }
                    };
                    rep.record(format!("{}[{}]", a.name, ka + 1), format!("{}[{}]", b.name, kb + 1), expected, res, tol);
                }
            }
        }
    }
    rep
}

fn truncate(g: &Generator, n: usize) -> Result<Option<Generator>> {
    let terms: Vec<(f64, Label)> = to_lambda_basis(&g.matrix)?
        .into_iter()
        .filter(|(_, l)| match l {
            Label::Lambda(i, j) | Label::LambdaHat(i, j) | Label::Diag(i, j) => *i <= n && *j <= n,
            _ => false,
        })
        .collect();
    if terms.is_empty() {
        return Ok(None);
    }
    let label = if terms.len() == 1 && terms[0].0 == 1.0 { terms[0].1.clone() } else { Label::Sum(terms) };
    let m = label_matrix(&label, n)?;
    Ok(Some(Generator::with_label(label, m)))
}

fn truncate_space(s: &AbelianSpace, n: usize) -> Result<AbelianSpace> {
    let mut span = Subspace::new(n * n);
    let mut gens = Vec::new();
    for g in &s.generators {
        if let Some(t) = truncate(g, n)? {
            if span.push(&herm_to_vec(&t.matrix)) {
                gens.push(t);
            }
        }
    }
    Ok(AbelianSpace::unchecked(n, gens, s.hat, s.binary_label))
}

/// Restricts a quotient algebra of su(2^p) to su(n) by deleting every
/// λ-term with a subscript above `n`.
pub fn removing_process(qa: &QuotientAlgebra, n_target: usize) -> Result<QuotientAlgebra> {
    let full = 1usize << qa.p;
    if qa.dim != full || n_target > full || 2 * n_target <= full {
        return Err(Error::TargetOutOfRange(format!(
            "target {n_target} for su({}) needs 2^(p-1) < N <= 2^p",
            qa.dim
        )));
    }
    if n_target == full {
        return Ok(qa.clone());
    }
    let center = truncate_space(&qa.center, n_target)?;
    let pairs = qa
        .pairs
        .iter()
        .map(|c| {
            Ok(ConjugatePair {
                w: truncate_space(&c.w, n_target)?,
                w_hat: truncate_space(&c.w_hat, n_target)?,
                binary_label: c.binary_label,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(QuotientAlgebra { dim: n_target, p: qa.p, center, pairs })
}

/// Rows of unordered index pairs, one row per conjugate pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubscriptTable {
    pub labels: Vec<usize>,
    pub rows: Vec<Vec<(usize, usize)>>,
}

fn norm_pair(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

fn row_product(a: &[(usize, usize)], b: &[(usize, usize)]) -> BTreeSet<(usize, usize)> {
    let mut out = BTreeSet::new();
    for &(i, j) in a {
        for &(k, l) in b {
            let shared = [(i, k, j, l), (i, l, j, k), (j, k, i, l), (j, l, i, k)];
            for (x, y, u, v) in shared {
                if x == y && u != v {
                    out.insert(norm_pair(u, v));
                }
            }
        }
    }
    out
}

impl SubscriptTable {
    pub fn new(labels: Vec<usize>, rows: Vec<Vec<(usize, usize)>>) -> Self {
        let rows = rows
            .into_iter()
            .map(|r| {
                let s: BTreeSet<_> = r.into_iter().map(|(a, b)| norm_pair(a, b)).collect();
                s.into_iter().collect()
            })
            .collect();
        SubscriptTable { labels, rows }
    }

    /// Checks that each row is a matching and that row products land in single rows.
    pub fn check(&self) -> std::result::Result<(), String> {
        for (k, r) in self.rows.iter().enumerate() {
            let mut seen = BTreeSet::new();
            for &(i, j) in r {
                if !seen.insert(i) || !seen.insert(j) {
                    return Err(format!("row {} repeats an index", k + 1));
                }
            }
        }
        let mut owner = BTreeMap::new();
        for (k, r) in self.rows.iter().enumerate() {
            for &pr in r {
                owner.insert(pr, k);
            }
        }
        for a in 0..self.rows.len() {
            for b in (a + 1)..self.rows.len() {
                let prod = row_product(&self.rows[a], &self.rows[b]);
                let hits: BTreeSet<Option<&usize>> = prod.iter().map(|pr| owner.get(pr)).collect();
                if hits.len() > 1 || hits.contains(&None) {
                    return Err(format!("rows {} and {} multiply into more than one row", a + 1, b + 1));
                }
            }
        }
        Ok(())
    }

    /// All rows generated from `seeds` by repeated pair multiplication.
    pub fn generate(seeds: &[Vec<(usize, usize)>]) -> BTreeSet<Vec<(usize, usize)>> {
        let canon = |r: &[(usize, usize)]| -> Vec<(usize, usize)> {
            let s: BTreeSet<_> = r.iter().map(|&(a, b)| norm_pair(a, b)).collect();
            s.into_iter().collect()
        };
        let mut rows: BTreeSet<Vec<(usize, usize)>> = seeds.iter().map(|r| canon(r)).collect();
        loop {
            let cur: Vec<_> = rows.iter().cloned().collect();
            let mut grew = false;
            for a in 0..cur.len() {
                for b in (a + 1)..cur.len() {
                    let prod: Vec<_> = row_product(&cur[a], &cur[b]).into_iter().collect();
                    if !prod.is_empty() && rows.insert(prod) {
                        grew = true;
                    }
                }
            }
            if !grew {
                return rows;
            }
        }
    }

    pub fn row_set(&self) -> BTreeSet<Vec<(usize, usize)>> {
        self.rows.iter().cloned().collect()
    }
}

/// Subscript pairs appearing in each labelled pair's λ-expansion.
pub fn subscript_table_of(qa: &QuotientAlgebra) -> Result<SubscriptTable> {
    if !qa.is_labeled() {
        return Err(Error::Unlabeled);
    }
    let mut labels = Vec::new();
    let mut rows = Vec::new();
    for c in &qa.pairs {
        let mut row = BTreeSet::new();
        for g in c.generators() {
            for (_, l) in to_lambda_basis(&g.matrix)? {
                if let Label::Lambda(i, j) | Label::LambdaHat(i, j) = l {
                    row.insert((i, j));
                }
            }
        }
        labels.push(c.binary_label.expect("labelled"));
        rows.push(row.into_iter().collect());
    }
    Ok(SubscriptTable { labels, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{make_lambda, pauli_word, Site};
    use crate::linalg::{random_special_unitary, ONE, ZERO};

    fn span_of(gs: &[Generator]) -> Subspace {
        Subspace::from_matrices(gs[0].dim, gs.iter().map(|g| &g.matrix))
    }

    fn words(ws: &[&[usize]]) -> Vec<Generator> {
        ws.iter().map(|w| pauli_word(w).unwrap()).collect()
    }

    #[test]
    fn bits_and_labels() {
        assert_eq!(bits_for(2), 1);
        assert_eq!(bits_for(4), 2);
        assert_eq!(bits_for(6), 3);
        assert_eq!(bits_for(8), 3);
        assert_eq!(bits_for(9), 4);
        assert_eq!(format_label(1, 3), "001");
        assert_eq!(parse_label("011").unwrap(), 3);
        assert!(parse_label("012").is_err());
    }

    #[test]
    fn intrinsic_center_examples() {
        let c4 = intrinsic_center(4).unwrap();
        let spin = words(&[&[3, 0], &[0, 3], &[3, 3]]);
        assert!(c4.subspace().same_span(&span_of(&spin), 1e-12));
        let c2 = intrinsic_center(2).unwrap();
        assert!(c2.subspace().same_span(&span_of(&words(&[&[3]])), 1e-12));
        let c6 = intrinsic_center(6).unwrap();
        assert_eq!(c6.len(), 5);
        assert!(c6.is_abelian());
        let d = CMat::from_diagonal(&nalgebra::DVector::from_vec(
            [1.0, -1.0, 1.0, -1.0, 1.0, -1.0].iter().map(|&x| Complex64::new(x, 0.0)).collect(),
        ));
        assert!(c6.subspace().residual_matrix(&d) < 1e-12);
        assert!(intrinsic_center(1).is_err());
    }

    #[test]
    fn diagonalize_examples() {
        let c4 = intrinsic_center(4).unwrap();
        let u = diagonalize_abelian(&c4, 0).unwrap();
        for g in &c4.generators {
            assert!(is_diagonal(&(&u * &g.matrix * u.adjoint()), 1e-9));
        }
        let a = AbelianSpace::new(4, words(&[&[1, 0], &[0, 1], &[1, 1]]), false, None).unwrap();
        let u = diagonalize_abelian(&a, 3).unwrap();
        assert!((u.determinant() - ONE).norm() < 1e-10);
        for g in &a.generators {
            assert!(is_diagonal(&(&u * &g.matrix * u.adjoint()), 1e-9));
        }
        let bad = AbelianSpace::unchecked(4, words(&[&[1, 0], &[3, 0]]), false, None);
        assert!(matches!(diagonalize_abelian(&bad, 0), Err(Error::NotCommuting(_))));
    }

    #[test]
    fn su4_matches_intrinsic_partition() {
        let qa = intrinsic_quotient_algebra(4).unwrap();
        assert_eq!(qa.pairs.len(), 3);
        type Words<'a> = &'a [&'a [usize]];
        let expect: [(Words, Words); 3] = [
            (&[&[0, 1], &[3, 1]], &[&[0, 2], &[3, 2]]),
            (&[&[1, 0], &[1, 3]], &[&[2, 0], &[2, 3]]),
            (&[&[1, 1], &[2, 2]], &[&[2, 1], &[1, 2]]),
        ];
        for (k, (w, wh)) in expect.iter().enumerate() {
            let c = &qa.pairs[k];
            assert_eq!(c.binary_label, Some(k + 1));
            assert!(c.w.subspace().same_span(&span_of(&words(w)), 1e-9));
            assert!(c.w_hat.subspace().same_span(&span_of(&words(wh)), 1e-9));
        }
        assert!(verify_closure(&qa).passed());
    }

    #[test]
    fn lambda_basis_merges_into_labels() {
        let n = 8;
        let center = intrinsic_center(n).unwrap();
        let qa = build_quotient_algebra(&center, &crate::generator::lambda_basis(n)).unwrap();
        assert_eq!(qa.pairs.len(), 7);
        for c in &qa.pairs {
            assert_eq!(c.w.len(), 4);
            assert!(c.w.generators.iter().all(|g| matches!(g.label, Label::Lambda(..))));
        }
        let qa3 = build_quotient_algebra(&intrinsic_center(3).unwrap(), &crate::generator::lambda_basis(3)).unwrap();
        assert_eq!(qa3.pairs.len(), 3);
        assert!(verify_closure(&qa3).passed());
    }

    #[test]
    fn center_errors() {
        let bad = AbelianSpace::unchecked(4, words(&[&[1, 0], &[3, 0], &[0, 3]]), false, None);
        let basis = SiteStructure::default_for(4).word_generators();
        assert!(matches!(build_quotient_algebra(&bad, &basis), Err(Error::CenterNotAbelian(_))));
        let small = AbelianSpace::unchecked(4, words(&[&[3, 0]]), false, None);
        assert!(matches!(build_quotient_algebra(&small, &basis), Err(Error::CenterNotAbelian(_))));
        let c = intrinsic_center(4).unwrap();
        assert!(matches!(build_quotient_algebra(&c, &basis[..3]), Err(Error::BasisNotClosed(_))));
    }

    #[test]
    fn binary_label_examples() {
        let mk = |w: Vec<Generator>| ConjugatePair {
            w: AbelianSpace::unchecked(8, w, false, None),
            w_hat: AbelianSpace::unchecked(8, vec![], true, None),
            binary_label: None,
        };
        let l = |i, j| make_lambda(i, j, 8).unwrap();
        assert_eq!(binary_label_of(&mk(vec![l(1, 2), l(3, 4), l(5, 6), l(7, 8)])).unwrap(), 1);
        assert_eq!(binary_label_of(&mk(vec![l(1, 4), l(2, 3)])).unwrap(), 3);
        assert!(matches!(
            binary_label_of(&mk(vec![l(1, 6), l(1, 5)])),
            Err(Error::NotBinaryPartitioned(_))
        ));
    }

    #[test]
    fn removing_process_sizes() {
        let qa8 = intrinsic_quotient_algebra(8).unwrap();
        let qa6 = removing_process(&qa8, 6).unwrap();
        assert_eq!(qa6.generator_count(), 35);
        let sizes: Vec<usize> = qa6.pairs.iter().map(|c| c.w.len()).collect();
        assert_eq!(sizes, vec![3, 2, 2, 2, 2, 2, 2]);
        assert!(verify_closure(&qa6).passed());
        assert_eq!(removing_process(&qa8, 8).unwrap(), qa8);
        assert!(matches!(removing_process(&qa8, 4), Err(Error::TargetOutOfRange(_))));
        assert!(matches!(removing_process(&qa8, 9), Err(Error::TargetOutOfRange(_))));
    }

    #[test]
    fn removing_to_su3_spans_gell_mann() {
        let qa3 = removing_process(&intrinsic_quotient_algebra(4).unwrap(), 3).unwrap();
        assert_eq!(qa3.generator_count(), 8);
        assert_eq!(qa3.pairs.len(), 3);
        let mut all: Vec<Generator> = qa3.center.generators.clone();
        for c in &qa3.pairs {
            all.extend(c.generators().cloned());
        }
        let gm: Vec<CMat> = (1..=8).map(|k| Site::gell_mann(k).matrix()).collect();
        assert!(span_of(&all).same_span(&Subspace::from_matrices(3, gm.iter()), 1e-12));
        // brute-force closure: every commutator of the 8 generators stays in their span
        let s = span_of(&all);
        for a in &all {
            for b in &all {
                assert!(s.residual_matrix(&herm_commutator(&a.matrix, &b.matrix)) < 1e-12);
            }
        }
        assert!(verify_closure(&qa3).passed());
    }

    #[test]
    fn mixing_spaces_breaks_closure() {
        let mut qa = intrinsic_quotient_algebra(8).unwrap();
        let k4 = qa.pairs.iter().position(|c| c.binary_label == Some(4)).unwrap();
        let k5 = qa.pairs.iter().position(|c| c.binary_label == Some(5)).unwrap();
        // swap one generator between W_100 and W_101
        let g4 = qa.pairs[k4].w.generators[1].clone();
        let g5 = qa.pairs[k5].w.generators[1].clone();
        qa.pairs[k4].w.generators[1] = g5;
        qa.pairs[k5].w.generators[1] = g4;
        let rep = verify_closure(&qa);
        assert!(!rep.passed());
    }

    #[test]
    fn subscript_tables() {
        let qa = intrinsic_quotient_algebra(4).unwrap();
        let t = subscript_table_of(&qa).unwrap();
        assert_eq!(t.rows, vec![vec![(1, 2), (3, 4)], vec![(1, 3), (2, 4)], vec![(1, 4), (2, 3)]]);
        assert!(t.check().is_ok());
        let t8 = subscript_table_of(&intrinsic_quotient_algebra(8).unwrap()).unwrap();
        assert_eq!(t8.rows.len(), 7);
        assert_eq!(t8.rows[0], vec![(1, 2), (3, 4), (5, 6), (7, 8)]);
        assert_eq!(t8.rows[1], vec![(1, 3), (2, 4), (5, 7), (6, 8)]);
        assert_eq!(t8.rows[2], vec![(1, 4), (2, 3), (5, 8), (6, 7)]);
        assert_eq!(t8.rows[3], vec![(1, 5), (2, 6), (3, 7), (4, 8)]);
        assert!(t8.check().is_ok());
        let mut bad = t8.clone();
        bad.rows[3] = vec![(1, 5), (2, 7), (3, 6), (4, 8)];
        assert!(bad.check().is_err());
        let seeds: Vec<_> = [0usize, 1, 3].iter().map(|&k| t8.rows[k].clone()).collect();
        assert_eq!(SubscriptTable::generate(&seeds), t8.row_set());
        let mut unl = qa.clone();
        unl.pairs[0].binary_label = None;
        assert!(matches!(subscript_table_of(&unl), Err(Error::Unlabeled)));
    }

    #[test]
    fn conjugation_transport_preserves_closure() {
        let qa = intrinsic_quotient_algebra(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let u = random_special_unitary(4, &mut rng);
        let t = qa.conjugated(&u);
        let rep = verify_closure_with_tol(&t, 1e-8);
        assert!(rep.passed(), "{:?}", rep.violations.first());
        let _ = ZERO;
    }
}
