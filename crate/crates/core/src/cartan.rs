//! Cartan decompositions chosen from quotient algebras, maximal abelian
//! subalgebras, and decomposition sequences.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::generator::{Generator, Label, SiteStructure};
use crate::linalg::{herm_to_vec, span_key, trace, vec_to_herm, CMat, RMat, Subspace, TOL_SOLVE};
use crate::partition::{
    build_quotient_algebra, commutes, diagonal_word_center, format_label, herm_commutator, intrinsic_center,
    AbelianSpace, ConjugatePair, QuotientAlgebra,
};

fn parity(x: usize) -> bool {
    x.count_ones() % 2 == 1
}

/// Side selected at label `zeta` by a `choice` over the power-of-two labels
/// (`true` means the hatted space). Bit `r` of `choice` set selects `Ŵ_{2^r}`.
pub fn chosen_hat(choice: usize, zeta: usize, bits: usize) -> bool {
    let mask = !choice & ((1usize << bits) - 1);
    !parity(zeta & mask)
}

/// A `(t, p)` Cartan decomposition read off a labelled quotient algebra.
#[derive(Debug, Clone, PartialEq)]
pub struct CartanSplit {
    pub dim: usize,
    pub bits: usize,
    pub choice_bits: usize,
    pub t: Vec<AbelianSpace>,
    pub p_part: Vec<AbelianSpace>,
    pub center: AbelianSpace,
}

impl CartanSplit {
    pub fn choice_string(&self) -> String {
        format_label(self.choice_bits, self.bits)
    }

    pub fn t_subspace(&self) -> Subspace {
        Subspace::from_matrices(self.dim, self.t.iter().flat_map(|s| s.generators.iter().map(|g| &g.matrix)))
    }

    pub fn p_subspace(&self) -> Subspace {
        Subspace::from_matrices(
            self.dim,
            self.p_part.iter().chain(std::iter::once(&self.center)).flat_map(|s| s.generators.iter().map(|g| &g.matrix)),
        )
    }

    pub fn t_dim(&self) -> usize {
        self.t.iter().map(AbelianSpace::len).sum()
    }

    pub fn p_dim(&self) -> usize {
        self.p_part.iter().map(AbelianSpace::len).sum::<usize>() + self.center.len()
    }
}

/// Residuals of the four Cartan conditions.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CartanReport {
    pub tt: f64,
    pub tp: f64,
    pub pp: f64,
    pub trace: f64,
}

impl CartanReport {
    pub fn max(&self) -> f64 {
        self.tt.max(self.tp).max(self.pp).max(self.trace)
    }

    pub fn passed(&self, tol: f64) -> bool {
        self.max() <= tol
    }
}

pub fn check_cartan_conditions(split: &CartanSplit) -> CartanReport {
    let tg: Vec<&CMat> = split.t.iter().flat_map(|s| s.generators.iter().map(|g| &g.matrix)).collect();
    let pg: Vec<&CMat> = split
        .p_part
        .iter()
        .chain(std::iter::once(&split.center))
        .flat_map(|s| s.generators.iter().map(|g| &g.matrix))
        .collect();
    let ts = split.t_subspace();
    let ps = split.p_subspace();
    let mut r = CartanReport::default();
    for (i, a) in tg.iter().enumerate() {
        for b in &tg[i + 1..] {
            r.tt = r.tt.max(ts.residual_matrix(&herm_commutator(a, b)));
        }
        for b in &pg {
            r.tp = r.tp.max(ps.residual_matrix(&herm_commutator(a, b)));
            r.trace = r.trace.max(trace(&(*a * *b)).norm());
        }
    }
    for (i, a) in pg.iter().enumerate() {
        for b in &pg[i + 1..] {
            r.pp = r.pp.max(ts.residual_matrix(&herm_commutator(a, b)));
        }
    }
    r
}

/// All `2^p` selectors of a labelled quotient algebra.
pub fn enumerate_t_choices(qa: &QuotientAlgebra) -> Result<Vec<usize>> {
    if !qa.is_labeled() {
        return Err(Error::Unlabeled);
    }
    Ok((0..(1usize << qa.p)).collect())
}

pub fn build_cartan_split(qa: &QuotientAlgebra, choice: usize) -> Result<CartanSplit> {
    if !qa.is_labeled() {
        return Err(Error::Unlabeled);
    }
    if choice >> qa.p != 0 {
        return Err(Error::InvalidChoice(format!("selector {choice:b} has more than {} bits", qa.p)));
    }
    let mut t = Vec::new();
    let mut p_part = Vec::new();
    for c in &qa.pairs {
        let hat = chosen_hat(choice, c.binary_label.expect("labelled"), qa.p);
        t.push(c.side(hat).clone());
        p_part.push(c.side(!hat).clone());
    }
    let split = CartanSplit { dim: qa.dim, bits: qa.p, choice_bits: choice, t, p_part, center: qa.center.clone() };
    let rep = check_cartan_conditions(&split);
    if !rep.passed(TOL_SOLVE) {
        return Err(Error::InvalidChoice(format!("Cartan conditions fail with residual {:e}", rep.max())));
    }
    Ok(split)
}

/// Builds a split from an explicit side per label (`true` = hatted), rejecting
/// selections that contradict closure.
pub fn split_from_selection(qa: &QuotientAlgebra, selection: &BTreeMap<usize, bool>) -> Result<CartanSplit> {
    if !qa.is_labeled() {
        return Err(Error::Unlabeled);
    }
    let mut choice = 0;
    for r in 0..qa.p {
        match selection.get(&(1 << r)) {
            Some(true) => choice |= 1 << r,
            Some(false) => {}
            None => return Err(Error::InvalidChoice(format!("no side selected at label {}", format_label(1 << r, qa.p)))),
        }
    }
    for (&z, &hat) in selection {
        if chosen_hat(choice, z, qa.p) != hat {
            return Err(Error::InvalidChoice(format!(
                "closure forces {} at label {}",
                if hat { "W" } else { "Ŵ" },
                format_label(z, qa.p)
            )));
        }
    }
    build_cartan_split(qa, choice)
}

fn commutant_in(space: &[CMat], center: &[CMat]) -> Vec<DVector<f64>> {
    // coefficients x with [Σ x_k c_k, g] = 0 for every g
    let k = center.len();
    if k == 0 {
        return Vec::new();
    }
    let n = center[0].nrows();
    let rows = space.len() * n * n * 2;
    let mut a = RMat::zeros(rows.max(1), k);
    for (col, c) in center.iter().enumerate() {
        let mut r = 0;
        for g in space {
            let m = c * g - g * c;
            for z in m.iter() {
                a[(r, col)] = z.re;
                a[(r + 1, col)] = z.im;
                r += 2;
            }
        }
    }
    let svd = nalgebra::linalg::SVD::new(a.transpose() * &a, true, true);
    let v = svd.v_t.expect("requested").transpose();
    let scale = svd.singular_values.max().max(1.0);
    (0..k)
        .filter(|&j| svd.singular_values[j] <= 1e-10 * scale)
        .map(|j| v.column(j).into_owned())
        .collect()
}

/// Adds commuting elements of `center` until the space holds N−1 independent generators.
pub fn extend_to_maximal_abelian(space: &AbelianSpace, center: &AbelianSpace) -> Result<AbelianSpace> {
    let n = space.dim;
    if let Some((a, b)) = space.first_noncommuting() {
        return Err(Error::NotCommuting(format!("{} and {}", space.generators[a].label, space.generators[b].label)));
    }
    let mut gens = space.generators.clone();
    let mut span = space.subspace();
    for c in &center.generators {
        if span.dim() >= n - 1 {
            break;
        }
        if gens.iter().all(|g| commutes(&g.matrix, &c.matrix)) && span.push(&herm_to_vec(&c.matrix)) {
            gens.push(c.clone());
        }
    }
    if span.dim() < n - 1 {
        let mats: Vec<CMat> = space.generators.iter().map(|g| g.matrix.clone()).collect();
        let cm: Vec<CMat> = center.generators.iter().map(|g| g.matrix.clone()).collect();
        for x in commutant_in(&mats, &cm) {
            if span.dim() >= n - 1 {
                break;
            }
            let mut m = CMat::zeros(n, n);
            let mut terms = Vec::new();
            for (k, c) in center.generators.iter().enumerate() {
                if x[k].abs() > 1e-12 {
                    m += &c.matrix * Complex64::new(x[k], 0.0);
                    terms.push((x[k], c.label.clone()));
                }
            }
            if span.push(&herm_to_vec(&m)) {
                let label = if terms.iter().any(|(_, l)| *l == Label::Custom) { Label::Custom } else { Label::Sum(terms) };
                gens.push(Generator::with_label(label, m));
            }
        }
    }
    let out = AbelianSpace::unchecked(n, gens, space.hat, space.binary_label);
    if span.dim() != n - 1 || !out.is_abelian() {
        return Err(Error::CannotExtend(format!("reached {} of {} generators", span.dim(), n - 1)));
    }
    Ok(out)
}

fn space_key(s: &AbelianSpace) -> Vec<i64> {
    let b = s.subspace();
    span_key(b.basis(), 1e-9)
}

/// Members discovered by shell extension from the intrinsic center.
#[derive(Debug, Clone)]
pub struct ShellEnumeration {
    pub members: Vec<AbelianSpace>,
    /// Shell in which each member first appeared (0 for the intrinsic center).
    pub shell: Vec<usize>,
    /// Nearest neighbours of every member that was expanded.
    pub neighbors: Vec<Option<BTreeSet<usize>>>,
    /// Number of members first found in shell `k`, for `k = 1..`.
    pub new_per_shell: Vec<usize>,
}

pub fn shell_enumeration(n: usize, max_shells: usize) -> Result<ShellEnumeration> {
    let sites = SiteStructure::default_for(n);
    let basis = sites.word_generators();
    let start = if n.is_power_of_two() { diagonal_word_center(&sites) } else { intrinsic_center(n)? };
    let mut keys: BTreeMap<Vec<i64>, usize> = BTreeMap::new();
    keys.insert(space_key(&start), 0);
    let mut en = ShellEnumeration { members: vec![start], shell: vec![0], neighbors: vec![None], new_per_shell: Vec::new() };
    let mut frontier = vec![0usize];
    for shell in 1..=max_shells {
        let mut next = Vec::new();
        for &m in &frontier {
            let center = en.members[m].clone();
            let Ok(qa) = build_quotient_algebra(&center, &basis) else {
                log::debug!("skipping member {m}: no quotient algebra over the word basis");
                continue;
            };
            let mut nb = BTreeSet::new();
            for pair in &qa.pairs {
                for side in [&pair.w, &pair.w_hat] {
                    let Ok(ext) = extend_to_maximal_abelian(side, &center) else { continue };
                    let key = space_key(&ext);
                    let idx = match keys.get(&key) {
                        Some(&i) => i,
                        None => {
                            let i = en.members.len();
                            keys.insert(key, i);
                            en.members.push(AbelianSpace::unchecked(n, ext.generators, false, None));
                            en.shell.push(shell);
                            en.neighbors.push(None);
                            next.push(i);
                            i
                        }
                    };
                    nb.insert(idx);
                }
            }
            en.neighbors[m] = Some(nb);
        }
        en.new_per_shell.push(next.len());
        frontier = next;
    }
    Ok(en)
}

pub fn enumerate_maximal_abelian(n: usize, max_shells: usize) -> Result<Vec<AbelianSpace>> {
    Ok(shell_enumeration(n, max_shells)?.members)
}

/// Override for the center designated at one level of a sequence.
#[derive(Debug, Clone, PartialEq)]
pub enum LevelCenter {
    Default,
    /// Binary label of a space of the previous level's `t`.
    Cell(usize),
    Space(AbelianSpace),
}

/// One level `k ≥ 1` of a decomposition sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceLevel {
    /// Label of the center space; 0 at level 1, where the center is the quotient algebra's own.
    pub cell: usize,
    pub choice_bits: usize,
    /// Number of free selector bits at this level.
    pub bits: usize,
    /// Parity mask whose sign pattern realises this level's involution.
    pub mask: usize,
    /// Labels spanning the level's pair coordinates.
    pub coordinate_basis: Vec<usize>,
    /// Labels of the spaces forming this level's `t`.
    pub t_cells: Vec<usize>,
    /// Center, extended to N−1 commuting generators.
    pub center: AbelianSpace,
}

impl SequenceLevel {
    pub fn pair_count(&self) -> usize {
        (1 << self.bits) - 1
    }

    /// Label of the `W` space of the pair with coordinate `c`.
    pub fn w_cell(&self, c: usize) -> usize {
        let h = combine(&self.coordinate_basis, c);
        if self.cell == 0 || parity(c) {
            h
        } else {
            h ^ self.cell
        }
    }
}

fn combine(basis: &[usize], c: usize) -> usize {
    basis.iter().enumerate().filter(|(r, _)| c >> r & 1 == 1).fold(0, |acc, (_, &b)| acc ^ b)
}

/// Ordered centers `A_[1..p]` plus the final abelian `t_[p]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionSequence {
    pub dim: usize,
    pub p: usize,
    pub qa: QuotientAlgebra,
    pub sites: SiteStructure,
    pub levels: Vec<SequenceLevel>,
    pub final_cell: usize,
    pub final_space: AbelianSpace,
}

impl DecompositionSequence {
    /// Side of the level-1 pair `zeta` that belongs to `t_[1]`.
    pub fn cell_space(&self, zeta: usize) -> &AbelianSpace {
        let hat = chosen_hat(self.levels[0].choice_bits, zeta, self.p);
        self.qa.pair(zeta).expect("labelled pair").side(hat)
    }

    pub fn choices(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.choice_bits).collect()
    }

    /// The quotient algebra that governs level `k` (1-based), with pairs labelled by coordinates.
    pub fn level_quotient_algebra(&self, k: usize) -> QuotientAlgebra {
        let lv = &self.levels[k - 1];
        if k == 1 {
            return self.qa.clone();
        }
        let center = self.cell_space(lv.cell).clone();
        let pairs = (1..=lv.pair_count())
            .map(|c| {
                let w = lv.w_cell(c);
                let mut ws = self.cell_space(w).clone();
                let mut wh = self.cell_space(w ^ lv.cell).clone();
                ws.hat = false;
                wh.hat = true;
                ws.binary_label = Some(c);
                wh.binary_label = Some(c);
                ConjugatePair { w: ws, w_hat: wh, binary_label: Some(c) }
            })
            .collect();
        QuotientAlgebra { dim: self.dim, p: lv.bits, center, pairs }
    }
}

fn span_of_labels(labels: &[usize]) -> BTreeSet<usize> {
    let mut g = BTreeSet::from([0usize]);
    for &l in labels {
        let cur: Vec<usize> = g.iter().copied().collect();
        for x in cur {
            g.insert(x ^ l);
        }
    }
    g
}

fn find_mask(p: usize, center: usize, kernel: &[usize]) -> Result<usize> {
    (0..(1usize << p))
        .find(|&m| parity(center & m) && kernel.iter().all(|&h| !parity(h & m)))
        .ok_or_else(|| Error::Decomposition { context: "sequence".into(), reason: "no parity mask separates the level".into() })
}

fn match_override(seq_qa: &QuotientAlgebra, cells: &[usize], level1_choice: usize, space: &AbelianSpace) -> Result<usize> {
    if !space.is_abelian() {
        return Err(Error::InvalidOverride("center override is not abelian".into()));
    }
    let span = space.subspace();
    let with_center = {
        let mut s = seq_qa.center.subspace();
        for b in span.basis() {
            s.push(b);
        }
        s
    };
    let mut hits = Vec::new();
    for &c in cells {
        let hat = chosen_hat(level1_choice, c, seq_qa.p);
        let cell = seq_qa.pair(c).expect("labelled").side(hat).subspace();
        if span.containment_residual(&cell) <= 1e-8 {
            let mut cc = cell.clone();
            for b in seq_qa.center.subspace().basis() {
                cc.push(b);
            }
            if cc.containment_residual(&span) <= 1e-8 && with_center.dim() == cc.dim() {
                hits.push(c);
            }
        }
    }
    match hits.as_slice() {
        [c] => Ok(*c),
        _ => Err(Error::InvalidOverride(
            "center override does not coincide with a single space of the previous level's t".into(),
        )),
    }
}

/// Chooses centers level by level, applying `choices[k]` at level `k+1`.
pub fn build_decomposition_sequence(
    qa: &QuotientAlgebra,
    choices: &[usize],
    level_centers: &[LevelCenter],
) -> Result<DecompositionSequence> {
    let n = qa.dim;
    let p = qa.p;
    if !qa.is_labeled() {
        return Err(Error::Unlabeled);
    }
    if !qa.is_center_diagonal() {
        return Err(Error::Unsupported("decomposition sequences need a diagonal level-1 center".into()));
    }
    if choices.len() != p {
        return Err(Error::InvalidChoice(format!("expected {p} selectors, got {}", choices.len())));
    }
    if level_centers.len() > p.saturating_sub(1) {
        return Err(Error::InvalidOverride(format!("at most {} center overrides", p.saturating_sub(1))));
    }
    for (k, &c) in choices.iter().enumerate() {
        if c >> (p - k) != 0 {
            return Err(Error::InvalidChoice(format!("level {} selector {c:b} exceeds {} bits", k + 1, p - k)));
        }
    }
    let sites = SiteStructure::default_for(n);
    let c1 = choices[0];
    let all: Vec<usize> = (1..(1usize << p)).collect();
    let mask1 = !c1 & ((1 << p) - 1);
    let coord1: Vec<usize> = (0..p).map(|r| 1 << r).collect();
    let mut levels = vec![SequenceLevel {
        cell: 0,
        choice_bits: c1,
        bits: p,
        mask: mask1,
        coordinate_basis: coord1,
        t_cells: all.clone(),
        center: qa.center.clone(),
    }];
    let cell_space = |z: usize| -> AbelianSpace {
        let hat = chosen_hat(c1, z, p);
        qa.pair(z).expect("labelled").side(hat).clone()
    };
    for k in 2..=p {
        let prev = levels.last().expect("level 1 exists");
        let cells = prev.t_cells.clone();
        let default_cell = {
            // t-side of the pair with the lowest coordinate
            let w = prev.w_cell(1);
            let hat = chosen_hat(prev.choice_bits, 1, prev.bits);
            if prev.cell == 0 || !hat {
                w
            } else {
                w ^ prev.cell
            }
        };
        let cell = match level_centers.get(k - 2).unwrap_or(&LevelCenter::Default) {
            LevelCenter::Default => default_cell,
            LevelCenter::Cell(c) => {
                if !cells.contains(c) {
                    return Err(Error::InvalidOverride(format!(
                        "label {} is not a space of t at level {}",
                        format_label(*c, p),
                        k - 1
                    )));
                }
                *c
            }
            LevelCenter::Space(s) => match_override(qa, &cells, c1, s)?,
        };
        let bits = p - k + 1;
        // greedy coordinate basis of the cells modulo the center label
        let mut basis = Vec::new();
        let mut span = span_of_labels(&[cell]);
        for &h in &cells {
            if !span.contains(&h) {
                basis.push(h);
                span = span_of_labels(&[&[cell][..], &basis[..]].concat());
            }
        }
        debug_assert_eq!(basis.len(), bits);
        let choice = choices[k - 1];
        let mut lv = SequenceLevel {
            cell,
            choice_bits: choice,
            bits,
            mask: 0,
            coordinate_basis: basis,
            t_cells: Vec::new(),
            center: AbelianSpace::unchecked(n, vec![], false, None),
        };
        let mut t_cells: Vec<usize> = (1..(1usize << bits))
            .map(|c| {
                let w = lv.w_cell(c);
                if chosen_hat(choice, c, bits) {
                    w ^ cell
                } else {
                    w
                }
            })
            .collect();
        t_cells.sort_unstable();
        lv.mask = find_mask(p, cell, &t_cells)?;
        lv.t_cells = t_cells;
        lv.center = extend_to_maximal_abelian(&cell_space(cell), &qa.center)?;
        levels.push(lv);
    }
    let last = levels.last().expect("at least one level");
    let final_cell = if p == 1 {
        // su(2): t_[1] is the single chosen space
        1
    } else {
        debug_assert_eq!(last.t_cells.len(), 1);
        last.t_cells[0]
    };
    let final_space = extend_to_maximal_abelian(&cell_space(final_cell), &qa.center)?;
    Ok(DecompositionSequence { dim: n, p, qa: qa.clone(), sites, levels, final_cell, final_space })
}

/// Sequence with the all-`W` selector at every level and default centers.
pub fn default_sequence(n: usize) -> Result<DecompositionSequence> {
    let qa = crate::partition::intrinsic_quotient_algebra(n)?;
    build_decomposition_sequence(&qa, &vec![0; qa.p], &[])
}

/// Matrix of a linear combination of generators.
pub fn combination(gens: &[Generator], coeffs: &[f64]) -> CMat {
    let n = gens[0].dim;
    let mut m = CMat::zeros(n, n);
    for (g, c) in gens.iter().zip(coeffs) {
        m += &g.matrix * Complex64::new(*c, 0.0);
    }
    m
}

/// Generator spanning a real vector in the Hermitian coordinates.
pub fn generator_from_vec(v: &DVector<f64>, n: usize) -> Generator {
    Generator::with_label(Label::Custom, vec_to_herm(v, n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::pauli_word;
    use crate::partition::{intrinsic_quotient_algebra, verify_closure};

    fn words(ws: &[&[usize]]) -> Vec<Generator> {
        ws.iter().map(|w| pauli_word(w).unwrap()).collect()
    }

    #[test]
    fn hat_rule_reproduces_worked_example() {
        // W1, W2 and Ŵ4 chosen: bits (0, 0, 1)
        let choice = 0b100;
        let hats: Vec<bool> = (1..8).map(|z| chosen_hat(choice, z, 3)).collect();
        assert_eq!(hats, vec![false, false, true, true, false, false, true]);
        // all W at the free labels forces Ŵ3 on su(4)
        assert!(chosen_hat(0, 3, 2));
    }

    #[test]
    fn su4_splits() {
        let qa = intrinsic_quotient_algebra(4).unwrap();
        assert_eq!(enumerate_t_choices(&qa).unwrap(), vec![0, 1, 2, 3]);
        for c in 0..4 {
            let s = build_cartan_split(&qa, c).unwrap();
            assert_eq!(s.t_dim() + s.p_dim(), 15);
            let r = check_cartan_conditions(&s);
            assert!(r.passed(1e-12), "{r:?}");
            assert_eq!(r.trace, 0.0);
        }
        let s = build_cartan_split(&qa, 0).unwrap();
        assert!(!s.t[0].hat && !s.t[1].hat && s.t[2].hat);
        let bad = BTreeMap::from([(1, false), (2, false), (3, false)]);
        assert!(matches!(split_from_selection(&qa, &bad), Err(Error::InvalidChoice(_))));
        let good = BTreeMap::from([(1, false), (2, false), (3, true)]);
        assert_eq!(split_from_selection(&qa, &good).unwrap().choice_bits, 0);
        assert!(matches!(build_cartan_split(&qa, 4), Err(Error::InvalidChoice(_))));
    }

    #[test]
    fn extension_examples() {
        let qa = intrinsic_quotient_algebra(4).unwrap();
        let w1 = &qa.pair(1).unwrap().w;
        let ext = extend_to_maximal_abelian(w1, &qa.center).unwrap();
        let expect = Subspace::from_matrices(4, words(&[&[0, 1], &[3, 1], &[3, 0]]).iter().map(|g| &g.matrix));
        assert!(ext.subspace().same_span(&expect, 1e-12));
        let same = extend_to_maximal_abelian(&qa.center, &qa.center).unwrap();
        assert_eq!(same.generators, qa.center.generators);
        // λ-center forces the commutant search
        let c = intrinsic_center(4).unwrap();
        let ext = extend_to_maximal_abelian(w1, &c).unwrap();
        assert_eq!(ext.len(), 3);
        assert!(ext.is_abelian());
    }

    #[test]
    fn su4_shells() {
        let en = shell_enumeration(4, 3).unwrap();
        assert_eq!(en.new_per_shell, vec![6, 8, 0]);
        assert_eq!(en.members.len(), 15);
        for nb in &en.neighbors {
            assert_eq!(nb.as_ref().unwrap().len(), 6);
        }
    }

    #[test]
    fn su4_default_sequence() {
        let seq = default_sequence(4).unwrap();
        assert_eq!(seq.levels.len(), 2);
        assert_eq!(seq.levels[1].cell, 1);
        assert_eq!(seq.final_space.len(), 3);
        assert!(seq.final_space.is_abelian());
        for lv in &seq.levels {
            assert_eq!(lv.center.len(), 3);
            assert!(lv.center.is_abelian());
        }
    }

    #[test]
    fn su8_sequence_level_algebras_close() {
        let seq = default_sequence(8).unwrap();
        let counts: Vec<usize> = seq.levels.iter().map(SequenceLevel::pair_count).collect();
        assert_eq!(counts, vec![7, 3, 1]);
        for k in 1..=3 {
            let q = seq.level_quotient_algebra(k);
            assert!(verify_closure(&q).passed(), "level {k}");
            // t of level k lies in t of level k-1
            if k > 1 {
                let prev: BTreeSet<usize> = seq.levels[k - 2].t_cells.iter().copied().collect();
                assert!(seq.levels[k - 1].t_cells.iter().all(|c| prev.contains(c)));
                assert!(prev.contains(&seq.levels[k - 1].cell));
            }
        }
    }

    #[test]
    fn overrides_must_be_cells() {
        let qa = intrinsic_quotient_algebra(8).unwrap();
        let seq = build_decomposition_sequence(&qa, &[0, 0, 0], &[LevelCenter::Cell(2)]).unwrap();
        assert_eq!(seq.levels[1].cell, 2);
        let sp = seq.levels[1].center.clone();
        let seq2 = build_decomposition_sequence(&qa, &[0, 0, 0], &[LevelCenter::Space(sp)]).unwrap();
        assert_eq!(seq2.levels[1].cell, 2);
        assert!(matches!(
            build_decomposition_sequence(&qa, &[0, 0, 0], &[LevelCenter::Space(qa.center.clone())]),
            Err(Error::InvalidOverride(_))
        ));
        for bad in [0, 9] {
            assert!(matches!(
                build_decomposition_sequence(&qa, &[0, 0, 0], &[LevelCenter::Cell(bad)]),
                Err(Error::InvalidOverride(_))
            ));
        }
        assert!(matches!(build_decomposition_sequence(&qa, &[0, 0], &[]), Err(Error::InvalidChoice(_))));
        assert!(matches!(build_decomposition_sequence(&qa, &[0, 4, 0], &[]), Err(Error::InvalidChoice(_))));
    }
}
