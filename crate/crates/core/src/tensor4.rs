//! Four-dimensional curvature tensor algebra.
//!
//! Components are stored in an orthonormal frame `e_0..e_3` with the index
//! convention `R[i][j][k][l] = <R(e_i, e_j) e_l, e_k>`, so that `R[i][j][i][j]`
//! is the sectional curvature of the plane `e_i ^ e_j` and the Ricci tensor is
//! `Ric[j][l] = sum_i R[i][j][i][l]`.
//!
//! All norms are tensor norms: the plain sum of squared components.

use nalgebra::{Matrix3, Matrix4, SMatrix};
use rand::Rng;
use std::f64::consts::PI;

use crate::error::{Error, Result, Symmetry};

pub type Rank4 = [[[[f64; 4]; 4]; 4]; 4];

/// Relative tolerance (against the largest component) for the symmetry check.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Index pairs `(i, j)`, `i < j`, spanning the 2-form space.
const PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

fn zero4() -> Rank4 {
    [[[[0.0; 4]; 4]; 4]; 4]
}

fn max_abs(t: &Rank4) -> f64 {
    let mut m: f64 = 0.0;
    for a in t.iter().flatten().flatten().flatten() {
        m = m.max(a.abs());
    }
    m
}

/// Orientation used for the self-dual / anti-self-dual split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    /// `e_0 ^ e_1 ^ e_2 ^ e_3` is positive.
    #[default]
    Standard,
    Reversed,
}

/// Algebraic curvature tensor in an orthonormal frame.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureTensor {
    comps: Rank4,
}

/// Largest violation of each Riemann symmetry, in absolute units.
#[derive(Debug, Clone, Copy)]
pub struct SymmetryResiduals {
    pub first_pair: f64,
    pub last_pair: f64,
    pub interchange: f64,
    pub bianchi: f64,
}

impl SymmetryResiduals {
    pub fn of(t: &Rank4) -> Self {
        let mut r = SymmetryResiduals {
            first_pair: 0.0,
            last_pair: 0.0,
            interchange: 0.0,
            bianchi: 0.0,
        };
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    for l in 0..4 {
                        let v = t[i][j][k][l];
                        r.first_pair = r.first_pair.max((v + t[j][i][k][l]).abs());
                        r.last_pair = r.last_pair.max((v + t[i][j][l][k]).abs());
                        r.interchange = r.interchange.max((v - t[k][l][i][j]).abs());
                        r.bianchi = r
                            .bianchi
                            .max((v + t[j][k][i][l] + t[k][i][j][l]).abs());
                    }
                }
            }
        }
        r
    }

    fn worst(&self) -> (Symmetry, f64) {
        [
            (Symmetry::FirstPairAntisymmetry, self.first_pair),
            (Symmetry::LastPairAntisymmetry, self.last_pair),
            (Symmetry::PairInterchange, self.interchange),
            (Symmetry::FirstBianchi, self.bianchi),
        ]
        .into_iter()
        .fold((Symmetry::FirstPairAntisymmetry, -1.0), |acc, x| {
            if x.1 > acc.1 {
                x
            } else {
                acc
            }
        })
    }
}

/// Orthogonal projection onto tensors with all Riemann symmetries.
fn project_algebraic(t: &Rank4) -> Rank4 {
    let mut s = zero4();
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..4 {
                for l in 0..4 {
                    let a = t[i][j][k][l] - t[j][i][k][l] - t[i][j][l][k] + t[j][i][l][k];
                    let b = t[k][l][i][j] - t[l][k][i][j] - t[k][l][j][i] + t[l][k][j][i];
                    s[i][j][k][l] = (a + b) / 8.0;
                }
            }
        }
    }
    // With pair symmetries in place the cyclic sum is totally antisymmetric;
    // removing a third of it enforces Bianchi.
    let mut out = zero4();
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..4 {
                for l in 0..4 {
                    let cyc = s[i][j][k][l] + s[j][k][i][l] + s[k][i][j][l];
                    out[i][j][k][l] = s[i][j][k][l] - cyc / 3.0;
                }
            }
        }
    }
    out
}

impl CurvatureTensor {
    pub fn zero() -> Self {
        CurvatureTensor { comps: zero4() }
    }

    /// Validates the Riemann symmetries at [`SYMMETRY_TOL`] relative to the
    /// largest component and symmetrizes the (tiny) remainder.
    pub fn from_components(comps: Rank4) -> Result<Self> {
        let scale = max_abs(&comps);
        if scale == 0.0 {
            return Ok(Self::zero());
        }
        let tol = SYMMETRY_TOL * scale;
        let (symmetry, residual) = SymmetryResiduals::of(&comps).worst();
        if residual > tol {
            return Err(Error::SymmetryViolation {
                symmetry,
                residual,
                tolerance: tol,
            });
        }
        Ok(CurvatureTensor {
            comps: project_algebraic(&comps),
        })
    }

    /// Projects arbitrary components onto the space of algebraic curvature
    /// tensors, returning the tensor and the norm of the removed part.
    pub fn project(comps: &Rank4) -> (Self, f64) {
        let p = project_algebraic(comps);
        let mut removed = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    for l in 0..4 {
                        removed += (comps[i][j][k][l] - p[i][j][k][l]).powi(2);
                    }
                }
            }
        }
        (CurvatureTensor { comps: p }, removed.sqrt())
    }

    /// Constant sectional curvature `kappa`.
    pub fn constant_curvature(kappa: f64) -> Self {
        let g = Matrix4::identity();
        let mut t = Self::kulkarni_nomizu(&g, &g);
        t.scale(kappa / 2.0);
        t
    }

    /// Kulkarni–Nomizu product of two symmetric matrices.
    pub fn kulkarni_nomizu(h: &Matrix4<f64>, k: &Matrix4<f64>) -> Self {
        let mut c = zero4();
        for i in 0..4 {
            for j in 0..4 {
                for a in 0..4 {
                    for b in 0..4 {
                        c[i][j][a][b] = h[(i, a)] * k[(j, b)] + h[(j, b)] * k[(i, a)]
                            - h[(i, b)] * k[(j, a)]
                            - h[(j, a)] * k[(i, b)];
                    }
                }
            }
        }
        CurvatureTensor { comps: c }
    }

    /// Tensor with prescribed sectional curvature on each coordinate plane
    /// and no other independent components (diagonal curvature operator).
    pub fn from_plane_curvatures(sec: [[f64; 4]; 4]) -> Self {
        let mut c = zero4();
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    let k = 0.5 * (sec[i][j] + sec[j][i]);
                    c[i][j][i][j] = k;
                    c[i][j][j][i] = -k;
                }
            }
        }
        CurvatureTensor { comps: c }
    }

    pub fn components(&self) -> &Rank4 {
        &self.comps
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.comps[i][j][k][l]
    }

    pub fn scale(&mut self, s: f64) {
        for a in self.comps.iter_mut().flatten().flatten().flatten() {
            *a *= s;
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut c = self.comps;
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    for l in 0..4 {
                        c[i][j][k][l] += other.comps[i][j][k][l];
                    }
                }
            }
        }
        CurvatureTensor { comps: c }
    }

    pub fn inner(&self, other: &Self) -> f64 {
        let mut s = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    for l in 0..4 {
                        s += self.comps[i][j][k][l] * other.comps[i][j][k][l];
                    }
                }
            }
        }
        s
    }

    pub fn norm_sq(&self) -> f64 {
        self.inner(self)
    }

    pub fn ricci(&self) -> Matrix4<f64> {
        Matrix4::from_fn(|j, l| (0..4).map(|i| self.comps[i][j][i][l]).sum())
    }

    pub fn scalar(&self) -> f64 {
        self.ricci().trace()
    }

    /// Components in the rotated frame `e'_i = sum_a q[(a, i)] e_a`.
    pub fn rotate(&self, q: &Matrix4<f64>) -> Self {
        // Contract one index at a time.
        let mut cur = self.comps;
        for slot in 0..4 {
            let mut next = zero4();
            for i in 0..4 {
                for j in 0..4 {
                    for k in 0..4 {
                        for l in 0..4 {
                            let idx = [i, j, k, l];
                            let mut s = 0.0;
                            for a in 0..4 {
                                let mut src = idx;
                                src[slot] = a;
                                s += q[(a, idx[slot])] * cur[src[0]][src[1]][src[2]][src[3]];
                            }
                            next[i][j][k][l] = s;
                        }
                    }
                }
            }
            cur = next;
        }
        CurvatureTensor { comps: cur }
    }

    /// Symmetric operator on 2-forms in the basis `e_i ^ e_j`, `i < j`.
    pub fn as_two_form_operator(&self) -> SMatrix<f64, 6, 6> {
        SMatrix::<f64, 6, 6>::from_fn(|a, b| {
            let (i, j) = PAIRS[a];
            let (k, l) = PAIRS[b];
            self.comps[i][j][k][l]
        })
    }

    /// Inverse of [`Self::as_two_form_operator`] for a symmetric operator.
    pub fn from_two_form_operator(op: &SMatrix<f64, 6, 6>) -> Self {
        let mut c = zero4();
        for (a, &(i, j)) in PAIRS.iter().enumerate() {
            for (b, &(k, l)) in PAIRS.iter().enumerate() {
                let v = op[(a, b)];
                c[i][j][k][l] = v;
                c[j][i][k][l] = -v;
                c[i][j][l][k] = -v;
                c[j][i][l][k] = v;
            }
        }
        CurvatureTensor { comps: c }
    }
}

/// Orthonormal self-dual (`sign = 1`) or anti-self-dual (`sign = -1`) basis of
/// 2-forms as coefficient vectors over [`PAIRS`].
fn duality_basis(sign: f64) -> [SMatrix<f64, 6, 1>; 3] {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    // *(e01) = e23, *(e02) = -e13, *(e03) = e12.
    let mut out = [SMatrix::<f64, 6, 1>::zeros(); 3];
    out[0][0] = h;
    out[0][5] = sign * h;
    out[1][1] = h;
    out[1][4] = -sign * h;
    out[2][2] = h;
    out[2][3] = sign * h;
    out
}

/// Irreducible pieces of a 4D curvature tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureDecomposition {
    pub scalar: f64,
    pub ric0: Matrix4<f64>,
    /// Self-dual Weyl operator on the 2-form space (operator entries, not tensor norm).
    pub wplus: Matrix3<f64>,
    pub wminus: Matrix3<f64>,
    pub orientation: Orientation,
    /// `|Rm|^2` by direct contraction of the input.
    pub rm_norm_sq: f64,
}

impl CurvatureDecomposition {
    pub fn ric0_norm_sq(&self) -> f64 {
        self.ric0.norm_squared()
    }

    /// Tensor norm of the self-dual Weyl part.
    pub fn wplus_norm_sq(&self) -> f64 {
        4.0 * self.wplus.norm_squared()
    }

    pub fn wminus_norm_sq(&self) -> f64 {
        4.0 * self.wminus.norm_squared()
    }

    pub fn weyl(&self) -> CurvatureTensor {
        let sign = match self.orientation {
            Orientation::Standard => 1.0,
            Orientation::Reversed => -1.0,
        };
        let plus = duality_basis(sign);
        let minus = duality_basis(-sign);
        let mut op = SMatrix::<f64, 6, 6>::zeros();
        for a in 0..3 {
            for b in 0..3 {
                op += plus[a] * plus[b].transpose() * self.wplus[(a, b)];
                op += minus[a] * minus[b].transpose() * self.wminus[(a, b)];
            }
        }
        CurvatureTensor::from_two_form_operator(&op)
    }

    pub fn ricci_part(&self) -> CurvatureTensor {
        let mut t = CurvatureTensor::kulkarni_nomizu(&self.ric0, &Matrix4::identity());
        t.scale(0.5);
        t
    }

    pub fn scalar_part(&self) -> CurvatureTensor {
        let g = Matrix4::identity();
        let mut t = CurvatureTensor::kulkarni_nomizu(&g, &g);
        t.scale(self.scalar / 24.0);
        t
    }

    pub fn reassemble(&self) -> CurvatureTensor {
        self.scalar_part().add(&self.ricci_part()).add(&self.weyl())
    }
}

/// Splits `rm` into scalar, traceless Ricci and (anti-)self-dual Weyl parts.
pub fn decompose(rm: &CurvatureTensor) -> CurvatureDecomposition {
    decompose_oriented(rm, Orientation::Standard)
}

pub fn decompose_oriented(rm: &CurvatureTensor, orientation: Orientation) -> CurvatureDecomposition {
    let ric = rm.ricci();
    let scalar = ric.trace();
    let ric0 = ric - Matrix4::identity() * (scalar / 4.0);
    let g = Matrix4::identity();
    let mut sp = CurvatureTensor::kulkarni_nomizu(&g, &g);
    sp.scale(scalar / 24.0);
    let mut rp = CurvatureTensor::kulkarni_nomizu(&ric0, &g);
    rp.scale(0.5);
    let mut weyl = rm.clone();
    let mut neg = sp.add(&rp);
    neg.scale(-1.0);
    weyl = weyl.add(&neg);

    let op = weyl.as_two_form_operator();
    let sign = match orientation {
        Orientation::Standard => 1.0,
        Orientation::Reversed => -1.0,
    };
    let plus = duality_basis(sign);
    let minus = duality_basis(-sign);
    let wplus = Matrix3::from_fn(|a, b| (plus[a].transpose() * op * plus[b])[(0, 0)]);
    let wminus = Matrix3::from_fn(|a, b| (minus[a].transpose() * op * minus[b])[(0, 0)]);
    CurvatureDecomposition {
        scalar,
        ric0,
        wplus,
        wminus,
        orientation,
        rm_norm_sq: rm.norm_sq(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct NormReport {
    pub rm_sq: f64,
    pub scalar_sq: f64,
    pub ric0_sq: f64,
    pub wplus_sq: f64,
    pub wminus_sq: f64,
    /// `|Rm|^2 - (R^2/6 + 2|Ric0|^2 + |W|^2)`.
    pub residual: f64,
}

pub fn norms_and_identities(dec: &CurvatureDecomposition) -> NormReport {
    let scalar_sq = dec.scalar * dec.scalar;
    let ric0_sq = dec.ric0_norm_sq();
    let wplus_sq = dec.wplus_norm_sq();
    let wminus_sq = dec.wminus_norm_sq();
    NormReport {
        rm_sq: dec.rm_norm_sq,
        scalar_sq,
        ric0_sq,
        wplus_sq,
        wminus_sq,
        residual: dec.rm_norm_sq - (scalar_sq / 6.0 + 2.0 * ric0_sq + wplus_sq + wminus_sq),
    }
}

/// Euler and signature form densities (per unit volume).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct CharacteristicDensities {
    pub pchi: f64,
    pub ptau: f64,
    /// `32 pi^2 (pchi + 3 ptau)`.
    pub combined: f64,
    /// `|Rm|^2 - (R^2/3 + 4|W+|^2 - combined)`.
    pub energy_residual: f64,
    /// Same identity with `32 pi^2 (pchi + ptau)` in place of `combined`.
    pub alt_energy_residual: f64,
}

pub fn characteristic_densities(dec: &CurvatureDecomposition) -> CharacteristicDensities {
    let r2 = dec.scalar * dec.scalar;
    let wp = dec.wplus_norm_sq();
    let wm = dec.wminus_norm_sq();
    let pchi =
        (r2 / 24.0 - 0.5 * dec.ric0_norm_sq() + 0.25 * wp + 0.25 * wm) / (8.0 * PI * PI);
    let ptau = (0.25 * wp - 0.25 * wm) / (12.0 * PI * PI);
    let combined = 32.0 * PI * PI * (pchi + 3.0 * ptau);
    let alt = 32.0 * PI * PI * (pchi + ptau);
    let lead = r2 / 3.0 + 4.0 * wp;
    CharacteristicDensities {
        pchi,
        ptau,
        combined,
        energy_residual: dec.rm_norm_sq - (lead - combined),
        alt_energy_residual: dec.rm_norm_sq - (lead - alt),
    }
}

/// Draws a random algebraic curvature tensor with entries of order `scale`.
pub fn sample_algebraic<R: Rng + ?Sized>(rng: &mut R, scale: f64) -> CurvatureTensor {
    let mut op = SMatrix::<f64, 6, 6>::zeros();
    for a in 0..6 {
        for b in a..6 {
            let v: f64 = rng.gen_range(-scale..scale);
            op[(a, b)] = v;
            op[(b, a)] = v;
        }
    }
    let raw = CurvatureTensor::from_two_form_operator(&op);
    CurvatureTensor::project(&raw.comps).0
}

/// Random rotation in SO(4) (or O(4) with determinant -1 when `reflect`).
pub fn sample_rotation<R: Rng + ?Sized>(rng: &mut R, reflect: bool) -> Matrix4<f64> {
    let m = Matrix4::from_fn(|_, _| rng.gen_range(-1.0..1.0));
    let qr = m.qr();
    let mut q = qr.q();
    let want = if reflect { -1.0 } else { 1.0 };
    if q.determinant() * want < 0.0 {
        for i in 0..4 {
            q[(i, 0)] = -q[(i, 0)];
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_tensor_decomposes_to_zero() {
        let d = decompose(&CurvatureTensor::zero());
        assert_eq!(d.scalar, 0.0);
        assert_eq!(d.ric0, Matrix4::zeros());
        assert_eq!(d.wplus, Matrix3::zeros());
        let n = norms_and_identities(&d);
        assert_eq!(n.residual, 0.0);
        let c = characteristic_densities(&d);
        assert_eq!(c.pchi, 0.0);
        assert_eq!(c.ptau, 0.0);
    }

    #[test]
    fn round_sphere_values() {
        let d = decompose(&CurvatureTensor::constant_curvature(1.0));
        assert_abs_diff_eq!(d.scalar, 12.0, epsilon = 1e-12);
        assert!(d.ric0.norm() < 1e-12);
        assert!(d.wplus.norm() < 1e-12 && d.wminus.norm() < 1e-12);
        let n = norms_and_identities(&d);
        assert_abs_diff_eq!(n.rm_sq, 24.0, epsilon = 1e-12);
        let c = characteristic_densities(&d);
        assert_abs_diff_eq!(c.pchi, 3.0 / (4.0 * PI * PI), epsilon = 1e-14);
        assert_abs_diff_eq!(c.ptau, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn product_of_spheres_has_balanced_weyl() {
        let mut sec = [[0.0; 4]; 4];
        sec[0][1] = 1.0;
        sec[1][0] = 1.0;
        sec[2][3] = 1.0;
        sec[3][2] = 1.0;
        let d = decompose(&CurvatureTensor::from_plane_curvatures(sec));
        assert_abs_diff_eq!(d.scalar, 4.0, epsilon = 1e-12);
        assert!(d.ric0.norm() < 1e-12);
        assert!(d.wplus_norm_sq() > 0.1);
        assert_abs_diff_eq!(d.wplus_norm_sq(), d.wminus_norm_sq(), epsilon = 1e-12);
    }

    #[test]
    fn rejects_broken_symmetry() {
        let mut c = *CurvatureTensor::constant_curvature(1.0).components();
        c[0][1][2][3] = 0.5;
        let err = CurvatureTensor::from_components(c).unwrap_err();
        assert!(matches!(err, Error::SymmetryViolation { .. }));
    }

    #[test]
    fn tiny_asymmetry_is_symmetrized() {
        let mut c = *CurvatureTensor::constant_curvature(1.0).components();
        c[0][1][0][1] += 1e-14;
        let t = CurvatureTensor::from_components(c).unwrap();
        let r = SymmetryResiduals::of(t.components());
        assert!(r.interchange < 1e-15 && r.bianchi < 1e-15);
    }

    #[test]
    fn alternative_combination_does_not_match() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = sample_algebraic(&mut rng, 1.0);
        let c = characteristic_densities(&decompose(&t));
        assert!(c.energy_residual.abs() < 1e-10 * t.norm_sq());
        assert!(c.alt_energy_residual.abs() > 1e-6);
    }

    #[test]
    fn orientation_reversal_swaps_weyl_halves() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t = sample_algebraic(&mut rng, 1.0);
        let a = decompose_oriented(&t, Orientation::Standard);
        let b = decompose_oriented(&t, Orientation::Reversed);
        assert_abs_diff_eq!(a.wplus_norm_sq(), b.wminus_norm_sq(), epsilon = 1e-12);
        assert_abs_diff_eq!(b.reassemble().inner(&t), t.norm_sq(), epsilon = 1e-10);
    }
}
