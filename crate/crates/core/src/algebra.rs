//! Dirac matrices in the standard representation, the free symbol
//! h0(ζ) = α·ζ + mβ and its spectral projections.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Neg, Sub};

pub type Spinor = [C64; 4];

const Z: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

/// Dense 4×4 complex matrix, row major.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix4C(pub [[C64; 4]; 4]);

impl Matrix4C {
    pub const fn zero() -> Self {
        Matrix4C([[Z; 4]; 4])
    }

    pub fn identity() -> Self {
        Self::diag([ONE; 4])
    }

    pub fn diag(d: [C64; 4]) -> Self {
        let mut m = Self::zero();
        for (i, v) in d.iter().enumerate() {
            m.0[i][i] = *v;
        }
        m
    }

    pub fn from_real(rows: [[f64; 4]; 4]) -> Self {
        let mut m = Self::zero();
        for i in 0..4 {
            for j in 0..4 {
                m.0[i][j] = C64::new(rows[i][j], 0.0);
            }
        }
        m
    }

    pub fn adjoint(&self) -> Self {
        let mut m = Self::zero();
        for i in 0..4 {
            for j in 0..4 {
                m.0[i][j] = self.0[j][i].conj();
            }
        }
        m
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut m = *self;
        m.0.iter_mut().flatten().for_each(|v| *v *= s);
        m
    }

    pub fn scale_re(&self, s: f64) -> Self {
        self.scale(C64::new(s, 0.0))
    }

    pub fn trace(&self) -> C64 {
        (0..4).map(|i| self.0[i][i]).sum()
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.0.iter().flatten().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius(&self) -> f64 {
        self.0.iter().flatten().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        (*self - self.adjoint()).max_abs()
    }

    pub fn apply(&self, v: &Spinor) -> Spinor {
        let mut out = [Z; 4];
        for i in 0..4 {
            let r = &self.0[i];
            out[i] = r[0] * v[0] + r[1] * v[1] + r[2] * v[2] + r[3] * v[3];
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// Inverse by Gauss-Jordan elimination with partial pivoting.
    pub fn inverse(&self) -> Option<Self> {
        let mut a = self.0;
        let mut inv = Self::identity().0;
        for col in 0..4 {
            let piv = (col..4)
                .max_by(|&i, &j| a[i][col].norm().total_cmp(&a[j][col].norm()))
                .unwrap();
            if a[piv][col].norm() < 1e-300 {
                return None;
            }
            a.swap(col, piv);
            inv.swap(col, piv);
            let d = ONE / a[col][col];
            for j in 0..4 {
                a[col][j] *= d;
                inv[col][j] *= d;
            }
            for row in 0..4 {
                if row != col {
                    let f = a[row][col];
                    if f != Z {
                        for j in 0..4 {
                            a[row][j] -= f * a[col][j];
                            inv[row][j] -= f * inv[col][j];
                        }
                    }
                }
            }
        }
        Some(Matrix4C(inv))
    }
}

impl Add for Matrix4C {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let mut m = self;
        for i in 0..4 {
            for j in 0..4 {
                m.0[i][j] += o.0[i][j];
            }
        }
        m
    }
}

impl Sub for Matrix4C {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        let mut m = self;
        for i in 0..4 {
            for j in 0..4 {
                m.0[i][j] -= o.0[i][j];
            }
        }
        m
    }
}

impl Neg for Matrix4C {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale_re(-1.0)
    }
}

impl Mul for Matrix4C {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let mut m = Self::zero();
        for i in 0..4 {
            for k in 0..4 {
                let a = self.0[i][k];
                if a == Z {
                    continue;
                }
                for j in 0..4 {
                    m.0[i][j] += a * o.0[k][j];
                }
            }
        }
        m
    }
}

/// Momentum ζ together with the particle mass.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Momentum {
    pub zeta: [f64; 3],
    pub m: f64,
}

impl Momentum {
    pub fn new(zeta: [f64; 3], m: f64) -> Self {
        assert!(m > 0.0, "mass must be positive");
        Momentum { zeta, m }
    }

    pub fn norm(&self) -> f64 {
        dot(&self.zeta, &self.zeta).sqrt()
    }

    pub fn eta(&self) -> f64 {
        eta(&self.zeta, self.m)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SymbolEigen {
    pub eta: f64,
    pub p_plus: Matrix4C,
    pub p_minus: Matrix4C,
}

/// Sign of the spectral branch: positive energies +η or negative −η.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Branch {
    Positive,
    Negative,
}

impl Branch {
    pub fn sign(self) -> f64 {
        match self {
            Branch::Positive => 1.0,
            Branch::Negative => -1.0,
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Branch::Positive => Branch::Negative,
            Branch::Negative => Branch::Positive,
        }
    }
}

pub fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn eta(zeta: &[f64; 3], m: f64) -> f64 {
    (dot(zeta, zeta) + m * m).sqrt()
}

pub fn pauli() -> [[[C64; 2]; 2]; 3] {
    [
        [[Z, ONE], [ONE, Z]],
        [[Z, -I], [I, Z]],
        [[ONE, Z], [Z, -ONE]],
    ]
}

/// α_j = [[0, σ_j], [σ_j, 0]] and β = diag(I, −I).
pub fn dirac_matrices() -> ([Matrix4C; 3], Matrix4C) {
    let s = pauli();
    let mut alpha = [Matrix4C::zero(); 3];
    for (j, a) in alpha.iter_mut().enumerate() {
        for r in 0..2 {
            for c in 0..2 {
                a.0[r][c + 2] = s[j][r][c];
                a.0[r + 2][c] = s[j][r][c];
            }
        }
    }
    let beta = Matrix4C::diag([ONE, ONE, -ONE, -ONE]);
    (alpha, beta)
}

/// h0(ζ) = α·ζ + mβ.
pub fn symbol(k: &Momentum) -> Matrix4C {
    let (alpha, beta) = dirac_matrices();
    let mut h = beta.scale_re(k.m);
    for j in 0..3 {
        h = h + alpha[j].scale_re(k.zeta[j]);
    }
    h
}

pub fn eigenprojections(k: &Momentum) -> SymbolEigen {
    let eta = k.eta();
    let h = symbol(k);
    let id = Matrix4C::identity();
    let hn = h.scale_re(1.0 / eta);
    SymbolEigen {
        eta,
        p_plus: (id + hn).scale_re(0.5),
        p_minus: (id - hn).scale_re(0.5),
    }
}

/// h0(ζ) v without forming the matrix.
#[inline]
pub fn apply_symbol(zeta: &[f64; 3], m: f64, v: &Spinor) -> Spinor {
    let mut out = alpha_dot(zeta, v);
    out[0] += v[0] * m;
    out[1] += v[1] * m;
    out[2] -= v[2] * m;
    out[3] -= v[3] * m;
    out
}

/// (b·α) v for a real 3-vector b.
#[inline]
pub fn alpha_dot(b: &[f64; 3], v: &Spinor) -> Spinor {
    // σ·b acting on a two-spinor
    let sb = |u0: C64, u1: C64| -> (C64, C64) {
        let bm = C64::new(b[0], -b[1]);
        let bp = C64::new(b[0], b[1]);
        (u0 * b[2] + bm * u1, bp * u0 - u1 * b[2])
    };
    let (a0, a1) = sb(v[2], v[3]);
    let (a2, a3) = sb(v[0], v[1]);
    [a0, a1, a2, a3]
}

/// p±(ζ) v = ½(v ± h0 v / η).
#[inline]
pub fn apply_projection(zeta: &[f64; 3], m: f64, branch: Branch, v: &Spinor) -> Spinor {
    let e = eta(zeta, m);
    let hv = apply_symbol(zeta, m, v);
    let s = 0.5 * branch.sign() / e;
    [
        v[0] * 0.5 + hv[0] * s,
        v[1] * 0.5 + hv[1] * s,
        v[2] * 0.5 + hv[2] * s,
        v[3] * 0.5 + hv[3] * s,
    ]
}

pub fn spinor_norm_sqr(v: &Spinor) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlgebraReport {
    pub samples: usize,
    /// max entry of α_jα_k + α_kα_j − 2δ_jk, α_jβ + βα_j and β² − I
    pub clifford: f64,
    /// worst of p±² − p±, p₊p₋, p₊ + p₋ − I and tr p± − 2
    pub projector: f64,
    /// max |h0 − η(p₊ − p₋)|
    pub spectral: f64,
    pub hermiticity: f64,
    pub pass: bool,
}

pub const ALGEBRA_TOL: f64 = 1e-13;

/// Clifford relations, then projector and spectral identities on random ζ with |ζ| ≤ 10.
pub fn algebra_check(samples: usize, m: f64, seed: u64) -> AlgebraReport {
    use rand::{Rng, SeedableRng};
    let (alpha, beta) = dirac_matrices();
    let id = Matrix4C::identity();
    let mut clifford: f64 = (beta * beta - id).max_abs();
    for j in 0..3 {
        clifford = clifford.max((alpha[j] * beta + beta * alpha[j]).max_abs());
        for k in 0..3 {
            let target = if j == k { id.scale_re(2.0) } else { Matrix4C::zero() };
            clifford = clifford.max((alpha[j] * alpha[k] + alpha[k] * alpha[j] - target).max_abs());
        }
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let (mut projector, mut spectral, mut hermiticity) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..samples {
        let zeta = loop {
            let z = [rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0)];
            if dot(&z, &z) <= 100.0 {
                break z;
            }
        };
        let k = Momentum::new(zeta, m);
        let e = eigenprojections(&k);
        let h = symbol(&k);
        let (pp, pm) = (e.p_plus, e.p_minus);
        for d in [
            (pp * pp - pp).max_abs(),
            (pm * pm - pm).max_abs(),
            (pp * pm).max_abs(),
            (pp + pm - id).max_abs(),
            (pp.trace() - 2.0).norm(),
            (pm.trace() - 2.0).norm(),
        ] {
            projector = projector.max(d);
        }
        spectral = spectral.max((h - (pp - pm).scale_re(e.eta)).max_abs());
        hermiticity = hermiticity.max(h.hermiticity_defect());
    }
    let pass = clifford == 0.0 && projector < ALGEBRA_TOL && spectral < ALGEBRA_TOL && hermiticity < 1e-15;
    AlgebraReport { samples, clifford, projector, spectral, hermiticity, pass }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_abs_diff(a: &Matrix4C, b: &Matrix4C) -> f64 {
        (*a - *b).max_abs()
    }

    #[test]
    fn identity_sweep_passes() {
        let r = algebra_check(1000, 1.0, 7);
        assert!(r.pass, "{r:?}");
        assert_eq!(r.clifford, 0.0);
    }

    #[test]
    fn beta_entries() {
        let (_, beta) = dirac_matrices();
        assert_eq!(beta.0[0][0], ONE);
        assert_eq!(beta.0[2][2], -ONE);
    }

    #[test]
    fn clifford_relations_exact() {
        let (alpha, beta) = dirac_matrices();
        let id = Matrix4C::identity();
        for j in 0..3 {
            for k in 0..3 {
                let ac = alpha[j] * alpha[k] + alpha[k] * alpha[j];
                let want = if j == k { id.scale_re(2.0) } else { Matrix4C::zero() };
                assert_eq!(ac, want);
            }
            assert_eq!(alpha[j] * beta + beta * alpha[j], Matrix4C::zero());
            assert_eq!(alpha[j] * alpha[j], id);
        }
        assert_eq!(beta * beta, id);
    }

    #[test]
    fn symbol_at_rest_is_beta() {
        let (_, beta) = dirac_matrices();
        assert_eq!(symbol(&Momentum::new([0.0; 3], 1.0)), beta);
    }

    #[test]
    fn symbol_x_direction_squares_to_two() {
        let h = symbol(&Momentum::new([1.0, 0.0, 0.0], 1.0));
        let h2 = h * h;
        assert!(max_abs_diff(&h2, &Matrix4C::identity().scale_re(2.0)) < 1e-15);
        assert_eq!(h.trace(), Z);
        assert!(h.hermiticity_defect() < 1e-15);
    }

    #[test]
    fn projections_at_rest() {
        let e = eigenprojections(&Momentum::new([0.0; 3], 1.0));
        assert_eq!(e.eta, 1.0);
        assert_eq!(e.p_plus, Matrix4C::diag([ONE, ONE, Z, Z]));
    }

    #[test]
    fn pythagorean_energy() {
        assert_eq!(Momentum::new([3.0, 0.0, 0.0], 4.0).eta(), 5.0);
    }

    #[test]
    fn matrix_free_helpers_match_dense() {
        let k = Momentum::new([0.3, -1.1, 0.7], 1.3);
        let v = [C64::new(0.2, 1.0), C64::new(-0.4, 0.1), C64::new(0.9, -0.3), C64::new(0.05, 0.6)];
        let dense = symbol(&k).apply(&v);
        let fast = apply_symbol(&k.zeta, k.m, &v);
        let e = eigenprojections(&k);
        let pp = e.p_plus.apply(&v);
        let pf = apply_projection(&k.zeta, k.m, Branch::Positive, &v);
        let pm = e.p_minus.apply(&v);
        let pmf = apply_projection(&k.zeta, k.m, Branch::Negative, &v);
        for i in 0..4 {
            assert!((dense[i] - fast[i]).norm() < 1e-14);
            assert!((pp[i] - pf[i]).norm() < 1e-14);
            assert!((pm[i] - pmf[i]).norm() < 1e-14);
        }
    }

    #[test]
    fn inverse_roundtrip() {
        let k = Momentum::new([0.3, -1.1, 0.7], 1.0);
        let m = Matrix4C::identity().scale_re(3.0) + symbol(&k);
        let inv = m.inverse().unwrap();
        assert!(max_abs_diff(&(m * inv), &Matrix4C::identity()) < 1e-14);
    }
}
