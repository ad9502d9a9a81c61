//! KAK factorization along a decomposition sequence, down to single-generator
//! exponentials ordered on a binary tree.

use std::collections::BTreeSet;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cartan::{CartanSplit, DecompositionSequence};
use crate::error::{Error, Result};
use crate::generator::{make_tensor_word, word_matrix, Generator, Label, Site, SiteStructure};
use crate::linalg::{
    eigh_real, expi_hermitian, frob, is_diagonal, split_phase, trace, unitarity_error, CMat, RMat, Subspace, I,
    ONE, TOL_EXACT, TOL_UNITARY,
};
use crate::partition::{diagonalize_abelian, format_label, AbelianSpace};

/// Angles with smaller magnitude are dropped from factor lists.
pub const ANGLE_PRUNE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Locality {
    Local,
    Nonlocal,
}

impl Locality {
    pub fn as_str(&self) -> &'static str {
        match self {
            Locality::Local => "local",
            Locality::Nonlocal => "nonlocal",
        }
    }
}

/// One factor `exp(i·angle·generator)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GateFactor {
    pub tree_index: String,
    pub ordinal: usize,
    pub generator: Generator,
    pub angle: f64,
    pub locality: Locality,
}

impl GateFactor {
    pub fn unitary(&self) -> CMat {
        expi_hermitian(&self.generator.matrix, self.angle)
    }

    /// Level that contributed the factor: the position of the last `1` digit
    /// (1-based from the left), so the final level is `p+1`.
    pub fn level(&self) -> Option<usize> {
        self.tree_index.rfind('1').map(|k| k + 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Factorization {
    pub dim: usize,
    pub factors: Vec<GateFactor>,
    pub global_phase: Complex64,
    pub reconstruction_error: f64,
    /// Abelian blocks visited, including blocks whose factors were all pruned.
    pub block_count: usize,
}

impl Factorization {
    pub fn local_count(&self) -> usize {
        self.factors.iter().filter(|f| f.locality == Locality::Local).count()
    }

    pub fn nonlocal_count(&self) -> usize {
        self.factors.len() - self.local_count()
    }
}

/// Sites on which a generator acts nontrivially, read off its word expansion.
pub fn support(g: &Generator, sites: &SiteStructure) -> Result<BTreeSet<usize>> {
    if let Label::Tensor(w) = &g.label {
        return Ok(w.iter().enumerate().filter(|(_, s)| !s.is_identity()).map(|(k, _)| k).collect());
    }
    if g.dim != sites.total_dim() {
        return Err(Error::NotExpressible(format!("dimension {} over sites {:?}", g.dim, sites.dims)));
    }
    let scale = frob(&g.matrix).max(1.0);
    let mut out = BTreeSet::new();
    for w in sites.words() {
        let wm = word_matrix(&w)?;
        let c = trace(&(&wm * &g.matrix)).norm();
        if c > 1e-10 * scale {
            out.extend(w.iter().enumerate().filter(|(_, s)| !s.is_identity()).map(|(k, _)| k));
        }
    }
    Ok(out)
}

/// Local iff exactly one site carries a non-identity operator.
pub fn classify_gate(g: &Generator, sites: &SiteStructure) -> Result<Locality> {
    let s = support(g, sites)?;
    Ok(if s.len() == 1 { Locality::Local } else { Locality::Nonlocal })
}

/// `U = phase · K1 · exp(i·a) · K2`; `phase` is an N-th root of unity.
#[derive(Debug, Clone, PartialEq)]
pub struct KakLevel {
    pub k1: CMat,
    pub a: CMat,
    pub k2: CMat,
    pub phase: Complex64,
}

fn parity(x: usize) -> bool {
    x.count_ones() % 2 == 1
}

/// Diagonal of the frame change that turns the level-1 `t` into real antisymmetric form.
fn twist(n: usize, mask: usize) -> Vec<Complex64> {
    (0..n).map(|i| if parity(i & mask) { I } else { ONE }).collect()
}

fn to_twisted(u: &CMat, t: &[Complex64]) -> CMat {
    CMat::from_fn(u.nrows(), u.ncols(), |i, j| t[i].conj() * u[(i, j)] * t[j])
}

fn from_twisted_real(o: &RMat, t: &[Complex64]) -> CMat {
    CMat::from_fn(o.nrows(), o.ncols(), |i, j| t[i] * Complex64::new(o[(i, j)], 0.0) * t[j].conj())
}

fn polar(m: &RMat) -> RMat {
    let svd = m.clone().svd(true, true);
    svd.u.expect("requested") * svd.v_t.expect("requested")
}

fn re(m: &CMat) -> RMat {
    m.map(|z| z.re)
}

fn im(m: &CMat) -> RMat {
    m.map(|z| z.im)
}

fn complexify(m: &RMat) -> CMat {
    m.map(|x| Complex64::new(x, 0.0))
}

struct LevelOne {
    o1: RMat,
    phases: Vec<f64>,
    o2: RMat,
    root: Complex64,
}

/// `M = O1 · diag(e^{iφ}) · O2` for a unitary `M` with real orthogonal `O1`, `O2`.
fn level_one<R: Rng>(m: &CMat, rng: &mut R) -> Result<LevelOne> {
    let n = m.nrows();
    if frob(&complexify(&im(m))) < 1e-14 && re(m).determinant() > 0.0 {
        return Ok(LevelOne { o1: polar(&re(m)), phases: vec![0.0; n], o2: RMat::identity(n, n), root: ONE });
    }
    let mtm = m.transpose() * m;
    let (a, b) = (re(&mtm), im(&mtm));
    let mut best_err = f64::INFINITY;
    for _ in 0..24 {
        let (x, y): (f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let h = &a * x + &b * y;
        let (_, v) = eigh_real(&h);
        let mut o2 = v.transpose();
        let o2c = complexify(&o2);
        let dd = &o2c * &mtm * o2c.transpose();
        if !is_diagonal(&dd, 1e-9) {
            continue;
        }
        let d: Vec<Complex64> = (0..n).map(|j| dd[(j, j)].sqrt()).collect();
        let dinv = CMat::from_diagonal(&DVector::from_iterator(n, d.iter().map(|z| ONE / z)));
        let o1c = m * o2c.transpose() * dinv;
        if frob(&complexify(&im(&o1c))) > 1e-6 {
            continue;
        }
        let mut o1 = polar(&re(&o1c));
        let mut dvals: Vec<Complex64> = {
            let full = complexify(&o1).transpose() * m * complexify(&o2).transpose();
            (0..n).map(|j| full[(j, j)] / full[(j, j)].norm()).collect()
        };
        if o2.determinant() < 0.0 {
            // flipping the same index on both sides leaves the diagonal unchanged
            for c in 0..n {
                o2[(0, c)] = -o2[(0, c)];
                o1[(c, 0)] = -o1[(c, 0)];
            }
        }
        if o1.determinant() < 0.0 {
            for r in 0..n {
                o1[(r, 0)] = -o1[(r, 0)];
            }
            dvals[0] = -dvals[0];
        }
        let mut phases: Vec<f64> = dvals.iter().map(|z| z.arg()).collect();
        let total: f64 = phases.iter().sum();
        let spread = total / n as f64;
        for ph in &mut phases {
            *ph -= spread;
        }
        let root = Complex64::from_polar(1.0, spread);
        let d = CMat::from_diagonal(&DVector::from_iterator(n, phases.iter().map(|&f| Complex64::from_polar(1.0, f))));
        let err = frob(&(complexify(&o1) * d * complexify(&o2) * root - m));
        best_err = best_err.min(err);
        if err <= 1e-9 {
            return Ok(LevelOne { o1, phases, o2, root });
        }
    }
    Err(Error::Decomposition {
        context: "level 1".into(),
        reason: format!("no simultaneous diagonalization reached the tolerance (best {best_err:e})"),
    })
}

/// Mask of the level-1 involution behind a split of the intrinsic quotient algebra.
fn split_mask(split: &CartanSplit) -> Result<usize> {
    if !split.center.generators.iter().all(|g| is_diagonal(&g.matrix, TOL_EXACT)) {
        return Err(Error::Unsupported("KAK needs a split with a diagonal center".into()));
    }
    let mask = !split.choice_bits & ((1usize << split.bits) - 1);
    let n = split.dim;
    let s: Vec<f64> = (0..n).map(|i| if parity(i & mask) { -1.0 } else { 1.0 }).collect();
    for g in split.t.iter().flat_map(|sp| sp.generators.iter()) {
        let fixed = CMat::from_fn(n, n, |i, j| -g.matrix[(j, i)] * (s[i] * s[j]));
        if frob(&(fixed - &g.matrix)) > 1e-9 {
            return Err(Error::Unsupported(format!("{} is not fixed by the split's involution", g.label)));
        }
    }
    Ok(mask)
}

/// Single Cartan step `U = phase · K1 · exp(i a) · K2` with `K1, K2 ∈ exp(t)` and
/// `a` in the split's center.
pub fn kak_single_level(u: &CMat, split: &CartanSplit, seed: u64) -> Result<KakLevel> {
    let n = split.dim;
    if u.nrows() != n || u.ncols() != n {
        return Err(Error::DimensionMismatch(u.nrows(), n));
    }
    let ue = unitarity_error(u);
    if ue > TOL_UNITARY * (n as f64).sqrt().max(1.0) * 10.0 {
        return Err(Error::NotUnitary(ue));
    }
    let mask = split_mask(split)?;
    let t = twist(n, mask);
    let (v, ph) = split_phase(u);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l1 = level_one(&to_twisted(&v, &t), &mut rng)?;
    let a = CMat::from_diagonal(&DVector::from_iterator(n, l1.phases.iter().map(|&f| Complex64::new(f, 0.0))));
    Ok(KakLevel { k1: from_twisted_real(&l1.o1, &t), a, k2: from_twisted_real(&l1.o2, &t), phase: ph * l1.root })
}

fn cosets(group: &BTreeSet<usize>, n: usize) -> Vec<Vec<usize>> {
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for i in 0..n {
        if seen[i] {
            continue;
        }
        let mut c: Vec<usize> = group.iter().map(|g| i ^ g).filter(|&j| j < n).collect();
        c.sort_unstable();
        for &j in &c {
            seen[j] = true;
        }
        out.push(c);
    }
    out
}

fn off_class_norm(o: &RMat, classes: &[Vec<usize>]) -> f64 {
    let n = o.nrows();
    let mut cls = vec![0; n];
    for (k, c) in classes.iter().enumerate() {
        for &i in c {
            cls[i] = k;
        }
    }
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if cls[i] != cls[j] {
                s += o[(i, j)] * o[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// Rotation `θ` in the plane `(p, q)`: `exp(θ(E_pq − E_qp))`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Plane {
    p: usize,
    q: usize,
    theta: f64,
}

fn gram_schmidt(vs: &mut Vec<DVector<f64>>, against: &[DVector<f64>], dim: usize, want: usize) {
    let mut basis: Vec<DVector<f64>> = against.to_vec();
    basis.extend(vs.iter().cloned());
    for k in 0..dim {
        if vs.len() >= want {
            break;
        }
        let mut e = DVector::zeros(dim);
        e[k] = 1.0;
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&e);
                e.axpy(-c, b, 1.0);
            }
        }
        let nrm = e.norm();
        if nrm > 1e-6 {
            let e = e / nrm;
            basis.push(e.clone());
            vs.push(e);
        }
    }
}

struct ClassSolution {
    k1: RMat,
    k2: RMat,
    planes: Vec<Plane>,
}

/// Real cosine-sine step on one class: `O = K1 · R · K2` with `K1`, `K2`
/// block diagonal over the `P`/`Q` split and `R` rotating the pairs.
fn solve_class(o: &RMat, a: usize, slots: &[(usize, usize)]) -> Result<ClassSolution> {
    let dim = o.nrows();
    let b = dim - a;
    let mut s = RMat::identity(dim, dim);
    for k in a..dim {
        s[(k, k)] = -1.0;
    }
    let coupling = (o.view((0, a), (a, b)).norm_squared() + o.view((a, 0), (b, a)).norm_squared()).sqrt();
    if coupling < 1e-14 {
        let planes = slots.iter().map(|&(p, q)| Plane { p, q, theta: 0.0 }).collect();
        let mut k1 = o.clone();
        for i in 0..a {
            for j in a..dim {
                k1[(i, j)] = 0.0;
                k1[(j, i)] = 0.0;
            }
        }
        let det_of = |lo: usize, len: usize| if len == 0 { 1.0 } else { k1.view((lo, lo), (len, len)).determinant() };
        if det_of(0, a) > 0.0 && det_of(a, b) > 0.0 {
            return Ok(ClassSolution { k1, k2: RMat::identity(dim, dim), planes });
        }
    }
    let x = &s * o.transpose() * &s * o;
    let xpp = x.view((0, 0), (a, a)).into_owned();
    let xqp = x.view((a, 0), (b, a)).into_owned();
    let xpq = x.view((0, a), (a, b)).into_owned();
    let xqq = x.view((a, a), (b, b)).into_owned();
    let (pvals, pvecs) = if a > 0 { eigh_real(&xpp) } else { (vec![], RMat::zeros(0, 0)) };

    let mut pairs: Vec<(DVector<f64>, DVector<f64>, f64)> = Vec::new();
    let mut small_plus = Vec::new();
    let mut small_minus = Vec::new();
    for (k, &lam) in pvals.iter().enumerate() {
        let v = pvecs.column(k).into_owned();
        let w = &xqp * &v;
        let sn = w.norm();
        if sn > 1e-5 {
            pairs.push((v, w / sn, f64::INFINITY));
        } else if lam >= 0.0 {
            small_plus.push(v);
        } else {
            small_minus.push(v);
        }
    }
    // remaining Q directions, split by the sign of X_QQ
    let taken: Vec<DVector<f64>> = pairs.iter().map(|(_, w, _)| w.clone()).collect();
    let mut proj = RMat::identity(b, b);
    for w in &taken {
        proj -= w * w.transpose();
    }
    let (qvals, qvecs) = if b > 0 { eigh_real(&(&proj * &xqq * &proj)) } else { (vec![], RMat::zeros(0, 0)) };
    let mut q_plus = Vec::new();
    let mut q_minus = Vec::new();
    for (k, &lam) in qvals.iter().enumerate() {
        if lam > 0.5 {
            q_plus.push(qvecs.column(k).into_owned());
        } else if lam < -0.5 {
            q_minus.push(qvecs.column(k).into_owned());
        }
    }
    if small_minus.len() != q_minus.len() {
        return Err(Error::Decomposition {
            context: "cosine-sine step".into(),
            reason: format!("{} vs {} directions at cosine −1", small_minus.len(), q_minus.len()),
        });
    }
    let align = |ps: &[DVector<f64>], qs: &[DVector<f64>]| -> Aligned {
        if ps.is_empty() || qs.is_empty() {
            return (vec![], ps.to_vec(), qs.to_vec());
        }
        let vp = RMat::from_columns(ps);
        let wq = RMat::from_columns(qs);
        let cross = vp.transpose() * &xpq * &wq;
        let (lvals, lvecs) = eigh_real(&(&cross * cross.transpose()));
        let mut out = Vec::new();
        let mut rest_p = Vec::new();
        let mut chosen_q: Vec<DVector<f64>> = Vec::new();
        for k in (0..lvals.len()).rev() {
            let u = lvecs.column(k).into_owned();
            let sigma = lvals[k].max(0.0).sqrt();
            let vr = cross.transpose() * &u;
            if sigma > 1e-14 && out.len() < qs.len() {
                let wv = &wq * (vr / sigma);
                chosen_q.push(wv.clone());
                out.push((&vp * &u, wv, sigma));
            } else {
                rest_p.push(&vp * &u);
            }
        }
        // Q directions of the cluster not used by the aligned pairs
        let mut rest_q = Vec::new();
        let mut basis = chosen_q.clone();
        for qv in qs {
            let mut r = qv.clone();
            for _ in 0..2 {
                for bv in &basis {
                    let c = bv.dot(&r);
                    r.axpy(-c, bv, 1.0);
                }
            }
            let nrm = r.norm();
            if nrm > 1e-6 && rest_q.len() + chosen_q.len() < qs.len() {
                let r = r / nrm;
                basis.push(r.clone());
                rest_q.push(r);
            }
        }
        (out, rest_p, rest_q)
    };
    let (minus_pairs, mut rp, mut rq) = align(&small_minus, &q_minus);
    // at cosine −1 the coupling vanishes and any pairing of the rest works
    while let (Some(v), Some(w)) = (rp.pop(), rq.pop()) {
        pairs.push((v, w, 0.0));
    }
    pairs.extend(minus_pairs);
    let (mut plus_pairs, mut rest_p, mut rest_q) = align(&small_plus, &q_plus);
    // complete the Q side if the sign split missed directions
    let mut known_q: Vec<DVector<f64>> = pairs.iter().map(|t| t.1.clone()).collect();
    known_q.extend(plus_pairs.iter().map(|t| t.1.clone()));
    let need_q = b - known_q.len();
    if rest_q.len() < need_q {
        let mut extra = Vec::new();
        let mut against = known_q.clone();
        against.extend(rest_q.iter().cloned());
        gram_schmidt(&mut extra, &against, b, need_q - rest_q.len());
        rest_q.extend(extra);
    }
    let slot_count = slots.len();
    plus_pairs.sort_by(|x, y| y.2.partial_cmp(&x.2).unwrap());
    while pairs.len() + plus_pairs.len() > slot_count {
        let (v, w, _) = plus_pairs.pop().expect("non-empty");
        rest_p.push(v);
        rest_q.push(w);
    }
    pairs.extend(plus_pairs);
    while pairs.len() < slot_count {
        match (rest_p.pop(), rest_q.pop()) {
            (Some(v), Some(w)) => pairs.push((v, w, 0.0)),
            _ => {
                return Err(Error::Decomposition {
                    context: "cosine-sine step".into(),
                    reason: "not enough directions to fill the rotation planes".into(),
                })
            }
        }
    }
    let paired_p: BTreeSet<usize> = slots.iter().map(|s| s.0).collect();
    let paired_q: BTreeSet<usize> = slots.iter().map(|s| s.1).collect();
    let free_p: Vec<usize> = (0..a).filter(|i| !paired_p.contains(i)).collect();
    let free_q: Vec<usize> = (a..dim).filter(|i| !paired_q.contains(i)).collect();
    if rest_p.len() != free_p.len() || rest_q.len() != free_q.len() {
        return Err(Error::Decomposition {
            context: "cosine-sine step".into(),
            reason: format!(
                "direction count mismatch ({} / {} free P, {} / {} free Q)",
                rest_p.len(),
                free_p.len(),
                rest_q.len(),
                free_q.len()
            ),
        });
    }
    let mut k2 = RMat::zeros(dim, dim);
    for (slot, (v, w, _)) in slots.iter().zip(&pairs) {
        for c in 0..a {
            k2[(slot.0, c)] = v[c];
        }
        for c in 0..b {
            k2[(slot.1, a + c)] = w[c];
        }
    }
    for (&r, v) in free_p.iter().zip(&rest_p) {
        for c in 0..a {
            k2[(r, c)] = v[c];
        }
    }
    for (&r, w) in free_q.iter().zip(&rest_q) {
        for c in 0..b {
            k2[(r, a + c)] = w[c];
        }
    }
    // re-orthonormalise each diagonal block
    if a > 0 {
        let blk = polar(&k2.view((0, 0), (a, a)).into_owned());
        k2.view_mut((0, 0), (a, a)).copy_from(&blk);
    }
    if b > 0 {
        let blk = polar(&k2.view((a, a), (b, b)).into_owned());
        k2.view_mut((a, a), (b, b)).copy_from(&blk);
    }
    let r2 = &k2 * &x * k2.transpose();
    let mut planes: Vec<Plane> = slots
        .iter()
        .map(|&(p, q)| Plane { p, q, theta: r2[(p, q)].atan2(r2[(p, p)]) / 2.0 })
        .collect();
    let rot = |planes: &[Plane]| {
        let mut r = RMat::identity(dim, dim);
        for pl in planes {
            let (sn, cs) = pl.theta.sin_cos();
            r[(pl.p, pl.p)] = cs;
            r[(pl.q, pl.q)] = cs;
            r[(pl.p, pl.q)] = sn;
            r[(pl.q, pl.p)] = -sn;
        }
        r
    };
    let mut k1 = o * k2.transpose() * rot(&planes).transpose();
    for i in 0..a {
        for j in a..dim {
            k1[(i, j)] = 0.0;
            k1[(j, i)] = 0.0;
        }
    }
    if a > 0 {
        let blk = polar(&k1.view((0, 0), (a, a)).into_owned());
        k1.view_mut((0, 0), (a, a)).copy_from(&blk);
    }
    if b > 0 {
        let blk = polar(&k1.view((a, a), (b, b)).into_owned());
        k1.view_mut((a, a), (b, b)).copy_from(&blk);
    }
    let det_of = |m: &RMat, lo: usize, len: usize| if len == 0 { 1.0 } else { m.view((lo, lo), (len, len)).determinant() };
    let flip_both = |k1: &mut RMat, k2: &mut RMat, planes: &mut [Plane], idx: usize| {
        for c in 0..dim {
            k2[(idx, c)] = -k2[(idx, c)];
            k1[(c, idx)] = -k1[(c, idx)];
        }
        if let Some(pl) = planes.iter_mut().find(|pl| pl.p == idx || pl.q == idx) {
            pl.theta = -pl.theta;
        }
    };
    if det_of(&k2, 0, a) < 0.0 {
        let idx = free_p.first().copied().or_else(|| slots.first().map(|s| s.0)).expect("P side non-empty");
        flip_both(&mut k1, &mut k2, &mut planes, idx);
    }
    if det_of(&k2, a, b) < 0.0 {
        let idx = free_q.first().copied().or_else(|| slots.first().map(|s| s.1)).expect("Q side non-empty");
        flip_both(&mut k1, &mut k2, &mut planes, idx);
    }
    let (d1p, d1q) = (det_of(&k1, 0, a), det_of(&k1, a, b));
    if d1p < 0.0 && d1q < 0.0 {
        let pl = planes.first_mut().ok_or_else(|| Error::Decomposition {
            context: "cosine-sine step".into(),
            reason: "determinant cannot be fixed without a rotation plane".into(),
        })?;
        let (p, q) = (pl.p, pl.q);
        pl.theta += std::f64::consts::PI;
        if pl.theta > std::f64::consts::PI {
            pl.theta -= 2.0 * std::f64::consts::PI;
        }
        for r in 0..dim {
            k1[(r, p)] = -k1[(r, p)];
            k1[(r, q)] = -k1[(r, q)];
        }
    } else if d1p < 0.0 || d1q < 0.0 {
        return Err(Error::Decomposition {
            context: "cosine-sine step".into(),
            reason: "input block is not special orthogonal".into(),
        });
    }
    let err = (&k1 * rot(&planes) * &k2 - o).norm();
    if err > 1e-9 {
        return Err(Error::Decomposition { context: "cosine-sine step".into(), reason: format!("residual {err:e}") });
    }
    Ok(ClassSolution { k1, k2, planes })
}

struct CsdResult {
    k1: RMat,
    k2: RMat,
    planes: Vec<Plane>,
}

/// Matched (p, q, cosine) triples plus unmatched p and q directions.
type Aligned = (Vec<(DVector<f64>, DVector<f64>, f64)>, Vec<DVector<f64>>, Vec<DVector<f64>>);

fn csd_level(o: &RMat, group: &BTreeSet<usize>, cell: usize, mask: usize) -> Result<CsdResult> {
    let n = o.nrows();
    let classes = cosets(group, n);
    let leak = off_class_norm(o, &classes);
    if leak > 1e-8 {
        return Err(Error::Decomposition {
            context: "cosine-sine step".into(),
            reason: format!("factor leaves its block structure ({leak:e})"),
        });
    }
    let mut k1 = RMat::zeros(n, n);
    let mut k2 = RMat::zeros(n, n);
    let mut planes = Vec::new();
    for class in classes {
        let (pp, qq): (Vec<usize>, Vec<usize>) = class.iter().partition(|&&i| !parity(i & mask));
        let order: Vec<usize> = pp.iter().chain(qq.iter()).copied().collect();
        let a = pp.len();
        let local = RMat::from_fn(order.len(), order.len(), |i, j| o[(order[i], order[j])]);
        let slots: Vec<(usize, usize)> = pp
            .iter()
            .enumerate()
            .filter_map(|(i, &p)| qq.iter().position(|&q| q == p ^ cell).map(|j| (i, a + j)))
            .collect();
        let sol = solve_class(&local, a, &slots)?;
        for (i, &gi) in order.iter().enumerate() {
            for (j, &gj) in order.iter().enumerate() {
                k1[(gi, gj)] = sol.k1[(i, j)];
                k2[(gi, gj)] = sol.k2[(i, j)];
            }
        }
        planes.extend(sol.planes.into_iter().map(|pl| Plane { p: order[pl.p], q: order[pl.q], theta: pl.theta }));
    }
    Ok(CsdResult { k1, k2, planes })
}

fn final_level(o: &RMat, cell: usize) -> Result<Vec<Plane>> {
    let n = o.nrows();
    let group = BTreeSet::from([0, cell]);
    let classes = cosets(&group, n);
    let leak = off_class_norm(o, &classes);
    if leak > 1e-8 {
        return Err(Error::Decomposition {
            context: "final level".into(),
            reason: format!("factor leaves its block structure ({leak:e})"),
        });
    }
    let mut planes = Vec::new();
    for c in classes {
        match c.as_slice() {
            [i] => {
                if (o[(*i, *i)] - 1.0).abs() > 1e-8 {
                    return Err(Error::Decomposition {
                        context: "final level".into(),
                        reason: format!("isolated index {} carries {}", i + 1, o[(*i, *i)]),
                    });
                }
            }
            [i, j] => planes.push(Plane { p: *i, q: *j, theta: o[(*i, *j)].atan2(o[(*i, *i)]) }),
            _ => unreachable!("cosets of a two-element group"),
        }
    }
    Ok(planes)
}

/// Hermitian element `Σ θ·(−i)(E_pq − E_qp)` carried back to the original frame.
fn planes_to_element(planes: &[Plane], t: &[Complex64], n: usize) -> CMat {
    let mut y = CMat::zeros(n, n);
    for pl in planes {
        y[(pl.p, pl.q)] += Complex64::new(0.0, -pl.theta);
        y[(pl.q, pl.p)] += Complex64::new(0.0, pl.theta);
    }
    CMat::from_fn(n, n, |i, j| t[i] * y[(i, j)] * t[j].conj())
}

/// Words of the site structure lying in the span of `space`.
pub fn word_basis(space: &AbelianSpace, sites: &SiteStructure) -> Result<Vec<(Vec<Site>, CMat)>> {
    let span = space.subspace();
    let mut out = Vec::new();
    for w in sites.words() {
        let m = word_matrix(&w)?;
        if span.residual_matrix(&m) <= 1e-9 * frob(&m) {
            out.push((w, m));
        }
    }
    if out.len() != span.dim() {
        return Err(Error::NotExpressible(format!(
            "space of dimension {} contains {} words",
            span.dim(),
            out.len()
        )));
    }
    Ok(out)
}

fn expand_block(
    x: &CMat,
    basis: &[(Vec<Site>, CMat)],
    tree_index: &str,
    sites: &SiteStructure,
) -> Result<Vec<GateFactor>> {
    let mut out = Vec::new();
    let mut rest = x.clone();
    for (w, m) in basis {
        let c = trace(&(m * x)).re / trace(&(m * m)).re;
        rest -= m * Complex64::new(c, 0.0);
        if c.abs() < ANGLE_PRUNE {
            continue;
        }
        let g = make_tensor_word(w)?;
        let locality = classify_gate(&g, sites)?;
        out.push(GateFactor { tree_index: tree_index.to_string(), ordinal: out.len() + 1, generator: g, angle: c, locality });
    }
    let r = frob(&rest);
    if r > 1e-9 * frob(x).max(1.0) {
        return Err(Error::Decomposition {
            context: format!("block {tree_index}"),
            reason: format!("element leaves its abelian space (residual {r:e})"),
        });
    }
    Ok(out)
}

struct Engine<'a> {
    seq: &'a DecompositionSequence,
    twist: Vec<Complex64>,
    groups: Vec<BTreeSet<usize>>,
    cell_words: std::collections::BTreeMap<usize, Vec<(Vec<Site>, CMat)>>,
    factors: Vec<GateFactor>,
    blocks: usize,
}

impl Engine<'_> {
    fn tree_index(&self, node: usize) -> String {
        format_label(node, self.seq.p + 1)
    }

    fn emit(&mut self, node: usize, x: &CMat, cell: usize) -> Result<()> {
        let idx = self.tree_index(node);
        let basis = &self.cell_words[&cell];
        let fs = expand_block(x, basis, &idx, &self.seq.sites)?;
        self.factors.extend(fs);
        self.blocks += 1;
        Ok(())
    }

    fn descend(&mut self, o: &RMat, k: usize, node: usize) -> Result<()> {
        let p = self.seq.p;
        let n = self.seq.dim;
        let ctx = |e: Error| match e {
            Error::Decomposition { context, reason } => {
                Error::Decomposition { context: format!("level {k}, node {}: {context}", format_label(node, p + 1)), reason }
            }
            other => other,
        };
        if k == p + 1 {
            let planes = final_level(o, self.seq.final_cell).map_err(ctx)?;
            let x = planes_to_element(&planes, &self.twist, n);
            return self.emit(node, &x, self.seq.final_cell);
        }
        let lv = &self.seq.levels[k - 1];
        let (cell, mask) = (lv.cell, lv.mask);
        let res = csd_level(o, &self.groups[k - 1], cell, mask).map_err(ctx)?;
        let step = 1usize << (p - k);
        self.descend(&res.k1, k + 1, node - step)?;
        let x = planes_to_element(&res.planes, &self.twist, n);
        self.emit(node, &x, cell)?;
        self.descend(&res.k2, k + 1, node + step)
    }
}

/// Full factorization of `u` along `seq`; factors are in product order.
pub fn recursive_decompose(u: &CMat, seq: &DecompositionSequence, seed: u64) -> Result<Factorization> {
    let n = seq.dim;
    let p = seq.p;
    if u.nrows() != n || u.ncols() != n {
        return Err(Error::DimensionMismatch(u.nrows(), n));
    }
    let ue = unitarity_error(u);
    if ue > 1e-9 {
        return Err(Error::NotUnitary(ue));
    }
    let mask1 = seq.levels[0].mask;
    let twist = twist(n, mask1);
    let (v, phase0) = split_phase(u);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l1 = level_one(&to_twisted(&v, &twist), &mut rng)?;

    let mut groups = vec![BTreeSet::new()];
    for k in 2..=p + 1 {
        let mut g: BTreeSet<usize> = seq.levels[k - 2].t_cells.iter().copied().collect();
        g.insert(0);
        groups.push(g);
    }
    let mut cell_words = std::collections::BTreeMap::new();
    cell_words.insert(0, word_basis(&seq.qa.center, &seq.sites)?);
    for lv in &seq.levels[1..] {
        cell_words.insert(lv.cell, word_basis(seq.cell_space(lv.cell), &seq.sites)?);
    }
    cell_words.insert(seq.final_cell, word_basis(seq.cell_space(seq.final_cell), &seq.sites)?);

    let mut eng = Engine { seq, twist, groups, cell_words, factors: Vec::new(), blocks: 0 };
    let root = 1usize << p;
    let step = if p >= 1 { 1usize << (p - 1) } else { 0 };
    eng.descend(&l1.o1, 2, root - step)?;
    let a = CMat::from_diagonal(&DVector::from_iterator(n, l1.phases.iter().map(|&f| Complex64::new(f, 0.0))));
    eng.emit(root, &a, 0)?;
    eng.descend(&l1.o2, 2, root + step)?;

    let global_phase = phase0 * l1.root;
    let mut f = Factorization { dim: n, factors: eng.factors, global_phase, reconstruction_error: 0.0, block_count: eng.blocks };
    let r = reconstruct(&f, n)?;
    f.reconstruction_error = frob(&(r - u));
    Ok(f)
}

/// Ordered product of the factors times the global phase.
pub fn reconstruct(f: &Factorization, n: usize) -> Result<CMat> {
    let mut m = CMat::identity(n, n);
    for g in &f.factors {
        if g.generator.dim != n {
            return Err(Error::DimensionMismatch(g.generator.dim, n));
        }
        m *= g.unitary();
    }
    Ok(m * f.global_phase)
}

/// Splits `V ∈ exp(i·span(A))` into one factor per generator of `A`,
/// returning the factors and the leftover global phase.
pub fn factor_abelian_exponential(v: &CMat, space: &AbelianSpace, seed: u64) -> Result<(Vec<GateFactor>, Complex64)> {
    let n = space.dim;
    if v.nrows() != n {
        return Err(Error::DimensionMismatch(v.nrows(), n));
    }
    let u = diagonalize_abelian(space, seed)?;
    let w = &u * v * u.adjoint();
    let off = frob(&(&w - CMat::from_diagonal(&w.diagonal())));
    if off > 1e-9 {
        return Err(Error::NotInExponential(off));
    }
    let phases: Vec<f64> = (0..n).map(|j| w[(j, j)].arg()).collect();
    let k = space.len();
    let mut a = RMat::zeros(n, k + 1);
    for (c, g) in space.generators.iter().enumerate() {
        let d = &u * &g.matrix * u.adjoint();
        for j in 0..n {
            a[(j, c)] = d[(j, j)].re;
        }
    }
    for j in 0..n {
        a[(j, k)] = 1.0;
    }
    let svd = a.clone().svd(true, true);
    let solve = |ph: &[f64]| -> (DVector<f64>, f64) {
        let b = DVector::from_column_slice(ph);
        let x = svd.solve(&b, 1e-12).expect("svd has both factors");
        let r = (&a * &x - b).amax();
        (x, r)
    };
    let mut best = solve(&phases);
    if best.1 > 1e-9 && n <= 10 {
        let two_pi = 2.0 * std::f64::consts::PI;
        let total = 3usize.pow(n as u32);
        for code in 1..total {
            let mut c = code;
            let shifted: Vec<f64> = phases
                .iter()
                .map(|&ph| {
                    let s = (c % 3) as f64 - 1.0;
                    c /= 3;
                    ph + two_pi * s
                })
                .collect();
            let cand = solve(&shifted);
            if cand.1 < best.1 {
                best = cand;
                if best.1 <= 1e-9 {
                    break;
                }
            }
        }
    }
    if best.1 > 1e-9 {
        return Err(Error::NotInExponential(best.1));
    }
    let x = best.0;
    let sites = SiteStructure::default_for(n);
    let mut factors = Vec::new();
    for (c, g) in space.generators.iter().enumerate() {
        if x[c].abs() < ANGLE_PRUNE {
            continue;
        }
        factors.push(GateFactor {
            tree_index: String::new(),
            ordinal: factors.len() + 1,
            generator: g.clone(),
            angle: x[c],
            locality: classify_gate(g, &sites)?,
        });
    }
    Ok((factors, Complex64::from_polar(1.0, x[k])))
}

/// Principal logarithm `-i·log(K)` of a unitary, used to inspect `K = exp(i s)`.
pub fn hermitian_log(k: &CMat) -> CMat {
    let n = k.nrows();
    // Schur form of a normal matrix through the Hermitian and anti-Hermitian parts
    let h = (k + k.adjoint()) * Complex64::new(0.5, 0.0);
    let s = (k - k.adjoint()) * Complex64::new(0.0, -0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x: f64 = rng.random_range(0.3..0.7);
    let (_, vecs) = crate::linalg::eigh(&(&h * Complex64::new(x, 0.0) + &s * Complex64::new(1.0 - x, 0.0)));
    let d = vecs.adjoint() * k * &vecs;
    let mut l = CMat::zeros(n, n);
    for j in 0..n {
        l[(j, j)] = Complex64::new(d[(j, j)].arg(), 0.0);
    }
    &vecs * l * vecs.adjoint()
}

/// Residual of `m` against the span of a set of generators.
pub fn span_residual(m: &CMat, spaces: &[&AbelianSpace]) -> f64 {
    let n = m.nrows();
    let s = Subspace::from_matrices(n, spaces.iter().flat_map(|sp| sp.generators.iter().map(|g| &g.matrix)));
    s.residual_matrix(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cartan::{build_cartan_split, default_sequence};
    use crate::generator::pauli_word;
    use crate::linalg::random_special_unitary;
    use crate::partition::{intrinsic_center, intrinsic_quotient_algebra};

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn locality_examples() {
        let s8 = SiteStructure::default_for(8);
        assert_eq!(classify_gate(&pauli_word(&[1, 0, 0]).unwrap(), &s8).unwrap(), Locality::Local);
        assert_eq!(classify_gate(&pauli_word(&[1, 1, 0]).unwrap(), &s8).unwrap(), Locality::Nonlocal);
        let g = make_tensor_word(&[Site::gell_mann(4), Site::pauli(3)]).unwrap();
        assert_eq!(classify_gate(&g, &SiteStructure::default_for(6)).unwrap(), Locality::Nonlocal);
        assert!(matches!(classify_gate(&intrinsic_center(3).unwrap().generators[0], &s8), Err(Error::NotExpressible(_))));
    }

    #[test]
    fn single_level_round_trip() {
        let qa = intrinsic_quotient_algebra(4).unwrap();
        let split = build_cartan_split(&qa, 0).unwrap();
        let u = random_special_unitary(4, &mut rng(5));
        let kl = kak_single_level(&u, &split, 1).unwrap();
        let rec = &kl.k1 * expi_hermitian(&kl.a, 1.0) * &kl.k2 * kl.phase;
        assert!(frob(&(rec - &u)) < 1e-9);
        let t: Vec<&AbelianSpace> = split.t.iter().collect();
        assert!(span_residual(&hermitian_log(&kl.k1), &t) < 1e-9);
        assert!(span_residual(&hermitian_log(&kl.k2), &t) < 1e-9);
        assert!(span_residual(&kl.a, &[&split.center]) < 1e-9);
        let id = kak_single_level(&CMat::identity(4, 4), &split, 0).unwrap();
        assert!(frob(&id.a) < 1e-12);
    }

    #[test]
    fn identity_has_no_factors() {
        let seq = default_sequence(8).unwrap();
        let f = recursive_decompose(&CMat::identity(8, 8), &seq, 0).unwrap();
        assert!(f.factors.iter().all(|g| g.angle.abs() < 1e-9));
        assert!(f.reconstruction_error < 1e-12);
        assert_eq!(f.block_count, 15);
    }

    #[test]
    fn random_round_trips() {
        for (n, blocks) in [(2, 3), (4, 7), (6, 15), (8, 15)] {
            let seq = default_sequence(n).unwrap();
            for s in 0..5 {
                let u = random_special_unitary(n, &mut rng(100 + s));
                let f = recursive_decompose(&u, &seq, s).unwrap();
                assert!(f.reconstruction_error < 1e-8, "N={n} seed {s}: {}", f.reconstruction_error);
                assert_eq!(f.block_count, blocks);
                assert!(f.factors.iter().all(|g| matches!(g.generator.label, Label::Tensor(_))));
            }
        }
    }

    #[test]
    fn abelian_exponentials() {
        let sites = SiteStructure::default_for(4);
        let c = crate::partition::diagonal_word_center(&sites);
        let g = pauli_word(&[3, 0]).unwrap();
        let v = expi_hermitian(&g.matrix, std::f64::consts::FRAC_PI_4);
        let (fs, ph) = factor_abelian_exponential(&v, &c, 0).unwrap();
        assert_eq!(fs.len(), 1);
        assert_eq!(fs[0].generator.label, g.label);
        assert!((fs[0].angle - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
        assert!((ph - ONE).norm() < 1e-12);
        let noncomm = pauli_word(&[1, 0]).unwrap();
        let v = expi_hermitian(&noncomm.matrix, 0.4);
        assert!(matches!(factor_abelian_exponential(&v, &c, 0), Err(Error::NotInExponential(_))));
    }
}
