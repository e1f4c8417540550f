//! Nambu-doubled 8×8 generators H(k), D, P of the four-site cell and the
//! non-equilibrium T, C, S relations
//!
//! ```text
//! T:  U_T X*(-k) U_T^-1 = s_X X(k)     (s_H, s_D, s_P) = (-, +, -)
//! C:  U_C X^T(-k) U_C^-1 = s_X X(k)
//! S:  U_S X^H(k) U_S^-1 = X(k)
//! ```
//!
//! `k` here is the dimensionless Bloch phase with corner factors e^{±4ik}
//! (physical k_x maps to k_x·d). Prefactors J and gJ are dropped.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::lattice::{CMat, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossCase {
    /// g1 = g2 = g0 = g > 0.
    Nontrivial,
    /// g1 = g0 = g, g2 = -g.
    Trivial,
}

pub struct Generators {
    pub h: CMat,
    pub d: CMat,
    pub p: CMat,
}

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn set_block(m: &mut CMat, bi: usize, bj: usize, b: [[C64; 2]; 2]) {
    for r in 0..2 {
        for s in 0..2 {
            m[(2 * bi + r, 2 * bj + s)] = b[r][s];
        }
    }
}

const SZ: [[C64; 2]; 2] = [
    [C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
    [C64::new(0.0, 0.0), C64::new(-1.0, 0.0)],
];
const SX: [[C64; 2]; 2] = [
    [C64::new(0.0, 0.0), C64::new(1.0, 0.0)],
    [C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
];

fn scale(b: [[C64; 2]; 2], s: C64) -> [[C64; 2]; 2] {
    b.map(|row| row.map(|x| x * s))
}

/// H(k), D and P for one cell. `g` only sets the dropped prefactor and is
/// accepted for interface symmetry with the physical model.
pub fn build_hdp(k: f64, g: f64, case: LossCase) -> Generators {
    assert!(g >= 0.0, "g must be non-negative");
    let mut h = CMat::zeros(8, 8);
    let msz = scale(SZ, c(-1.0, 0.0));
    for (i, j) in [(0, 1), (1, 2), (2, 3)] {
        set_block(&mut h, i, j, msz);
        set_block(&mut h, j, i, msz);
    }
    let e = C64::from_polar(1.0, 4.0 * k);
    let hk = [[-e.conj(), c(0.0, 0.0)], [c(0.0, 0.0), e]];
    let hk_conj = hk.map(|row| row.map(|x| x.conj()));
    set_block(&mut h, 0, 3, hk);
    set_block(&mut h, 3, 0, hk_conj);

    let d = CMat::identity(8, 8);
    let mut p = CMat::zeros(8, 8);
    let isz = scale(SZ, c(0.0, 1.0));
    let blocks: &[usize] = match case {
        LossCase::Nontrivial => &[1, 2],
        LossCase::Trivial => &[2, 3],
    };
    for &b in blocks {
        set_block(&mut p, b, b, isz);
    }
    Generators { h, d, p }
}

pub fn u_t() -> CMat {
    let mut u = CMat::zeros(8, 8);
    for b in 0..4 {
        let s = if b % 2 == 0 { 1.0 } else { -1.0 };
        set_block(
            &mut u,
            b,
            b,
            scale(
                [[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]],
                c(s, 0.0),
            ),
        );
    }
    u
}

pub fn u_c() -> CMat {
    let mut u = CMat::zeros(8, 8);
    for b in 0..4 {
        set_block(&mut u, b, 3 - b, SX);
    }
    u
}

pub fn u_s() -> CMat {
    u_t() * u_c()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    T,
    C,
    S,
}

impl Relation {
    /// Signs for (H, D, P).
    fn signs(self) -> [f64; 3] {
        match self {
            Relation::T | Relation::C => [-1.0, 1.0, -1.0],
            Relation::S => [1.0, 1.0, 1.0],
        }
    }

    fn transform(self, x: &CMat) -> CMat {
        match self {
            Relation::T => x.conjugate(),
            Relation::C => x.transpose(),
            Relation::S => x.adjoint(),
        }
    }

    fn flips_k(self) -> bool {
        !matches!(self, Relation::S)
    }
}

/// Largest Frobenius residual over H, D, P at one k.
pub fn relation_residual<F>(rel: Relation, u: &CMat, k: f64, build: &F) -> f64
where
    F: Fn(f64) -> Generators,
{
    let at_k = build(k);
    let src = build(if rel.flips_k() { -k } else { k });
    let u_inv = u.adjoint();
    let signs = rel.signs();
    [(&src.h, &at_k.h), (&src.d, &at_k.d), (&src.p, &at_k.p)]
        .iter()
        .zip(signs)
        .map(|((x_src, x), s)| (u * rel.transform(x_src) * &u_inv - *x * c(s, 0.0)).norm())
        .fold(0.0, f64::max)
}

pub const HOLDS_TOL: f64 = 1e-12;

#[derive(Clone, Debug, Serialize)]
pub struct SymmetryReport {
    pub residual_t: f64,
    pub residual_c: f64,
    pub residual_s: f64,
    pub holds_t: bool,
    pub holds_c: bool,
    pub holds_s: bool,
    pub class_label: String,
    pub k_samples: Vec<f64>,
    /// Per-sample (T, C, S) residuals.
    pub per_k: Vec<[f64; 3]>,
}

/// Evaluate T, C, S with the standard unitaries on `k_samples`.
pub fn check_symmetries(k_samples: &[f64], g: f64, case: LossCase) -> SymmetryReport {
    check_symmetries_with(k_samples, &|k| build_hdp(k, g, case))
}

/// Same as [`check_symmetries`] for arbitrary generators, e.g. perturbed ones.
pub fn check_symmetries_with<F>(k_samples: &[f64], build: &F) -> SymmetryReport
where
    F: Fn(f64) -> Generators,
{
    let (ut, uc, us) = (u_t(), u_c(), u_s());
    let per_k: Vec<[f64; 3]> = k_samples
        .iter()
        .map(|&k| {
            [
                relation_residual(Relation::T, &ut, k, build),
                relation_residual(Relation::C, &uc, k, build),
                relation_residual(Relation::S, &us, k, build),
            ]
        })
        .collect();
    let max = |i: usize| per_k.iter().map(|r| r[i]).fold(0.0, f64::max);
    let (rt, rc, rs) = (max(0), max(1), max(2));
    let (ht, hc, hs) = (rt < HOLDS_TOL, rc < HOLDS_TOL, rs < HOLDS_TOL);
    SymmetryReport {
        residual_t: rt,
        residual_c: rc,
        residual_s: rs,
        holds_t: ht,
        holds_c: hc,
        holds_s: hs,
        class_label: class_label(ht, hc, hs).to_string(),
        k_samples: k_samples.to_vec(),
        per_k,
    }
}

/// Random Hermitian matrix with entries of size `scale`, reproducible from `seed`.
pub fn random_hermitian(n: usize, scale: f64, seed: u64) -> CMat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = CMat::from_fn(n, n, |_, _| {
        c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    });
    (&a + a.adjoint()) * c(0.5 * scale, 0.0)
}

/// Symmetry check with the same k-independent Hermitian noise added to H(k).
pub fn check_symmetries_perturbed(
    k_samples: &[f64],
    g: f64,
    case: LossCase,
    scale: f64,
    seed: u64,
) -> SymmetryReport {
    let noise = random_hermitian(8, scale, seed);
    check_symmetries_with(k_samples, &|k| {
        let mut gens = build_hdp(k, g, case);
        gens.h += &noise;
        gens
    })
}

/// Altland-Zirnbauer label given which relations hold. The unitaries used
/// here square to +1 under conjugation (U U* = 1), so T² = C² = +1.
pub fn class_label(t: bool, c: bool, s: bool) -> &'static str {
    match (t, c, s) {
        (true, true, _) => "BDI",
        (true, false, _) => "AI",
        (false, true, _) => "D",
        (false, false, true) => "AIII",
        (false, false, false) => "A",
    }
}

/// Dimension of the space of 8×8 matrices U with U X'(k') = s_X X(k) U for
/// all generators and samples, i.e. how many independent candidate
/// unitaries a relation admits at all. Zero means no constant U exists.
pub fn admissible_dimension<F>(rel: Relation, k_samples: &[f64], build: &F) -> usize
where
    F: Fn(f64) -> Generators,
{
    let n = 8;
    let id = CMat::identity(n, n);
    let signs = rel.signs();
    let mut rows: Vec<CMat> = Vec::new();
    for &k in k_samples {
        let at_k = build(k);
        let src = build(if rel.flips_k() { -k } else { k });
        for ((x_src, x), s) in [(&src.h, &at_k.h), (&src.d, &at_k.d), (&src.p, &at_k.p)]
            .iter()
            .zip(signs)
        {
            // vec(U A) = (A^T ⊗ I) vec(U), vec(B U) = (I ⊗ B) vec(U)
            let a = rel.transform(x_src);
            rows.push(a.transpose().kronecker(&id) - id.kronecker(x) * c(s, 0.0));
        }
    }
    let mut stacked = CMat::zeros(rows.len() * n * n, n * n);
    for (i, r) in rows.iter().enumerate() {
        stacked
            .view_mut((i * n * n, 0), (n * n, n * n))
            .copy_from(r);
    }
    let sv = stacked.singular_values();
    let tol = 1e-10 * sv.max().max(1.0);
    sv.iter().filter(|&&s| s < tol).count()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum JumpKind {
    Loss,
    Gain,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Jump {
    pub site: usize,
    pub kind: JumpKind,
    pub rate: f64,
}

/// Jump operators of one cell (sites A..D = 0..3), rate 1 each: the
/// gain/loss pattern of the case plus a uniform loss channel on every site.
pub fn cell_jumps(case: LossCase) -> Vec<Jump> {
    use JumpKind::*;
    let pattern = match case {
        LossCase::Nontrivial => [Gain, Loss, Loss, Gain],
        LossCase::Trivial => [Gain, Gain, Loss, Loss],
    };
    let mut jumps: Vec<Jump> = pattern
        .iter()
        .enumerate()
        .map(|(site, &kind)| Jump {
            site,
            kind,
            rate: 1.0,
        })
        .collect();
    jumps.extend((0..4).map(|site| Jump {
        site,
        kind: Loss,
        rate: 1.0,
    }));
    jumps
}

/// M = Σ l* l^T in the Nambu basis (c_1, c_1†, c_2, ...), split as
/// D = (M + σx M^T σx)/2 and P = i(M - σx M^T σx)/2.
pub fn dissipation_from_jumps(jumps: &[Jump], n_sites: usize) -> (CMat, CMat, CMat) {
    let n = 2 * n_sites;
    let mut m = CMat::zeros(n, n);
    for j in jumps {
        let idx = 2 * j.site + if j.kind == JumpKind::Loss { 0 } else { 1 };
        m[(idx, idx)] += c(j.rate, 0.0);
    }
    let mut sx = CMat::zeros(n, n);
    for s in 0..n_sites {
        set_block(&mut sx, s, s, SX);
    }
    let mirrored = &sx * m.transpose() * &sx;
    let d = (&m + &mirrored) * c(0.5, 0.0);
    let p = (&m - &mirrored) * c(0.0, 0.5);
    (m, d, p)
}
