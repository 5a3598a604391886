//! Dense complex linear algebra over the operator space: vectorization,
//! Hilbert-Schmidt inner products, Pauli operator bases, numerical rank and
//! span projectors.
//!
//! Operators on a d-dimensional Hilbert space are plain `Array2<Complex64>`
//! values; their vectorizations live in `C^(d^2)` with column-major stacking,
//! so that `vec(B)[(j-1)d + i] = B_ij` in 1-based indexing.

use ndarray::prelude::*;
use ndarray_linalg::{QR, SVD};
use num_complex::Complex64 as C64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type CMat = Array2<C64>;
pub type CVec = Array1<C64>;

/// Absolute tolerance on max-entry deviation for hermiticity checks.
pub const HERMITICITY_TOL: f64 = 1e-10;

pub fn eye(d: usize) -> CMat {
    Array2::from_diag_elem(d, C64::new(1.0, 0.0))
}

pub fn dagger(m: &CMat) -> CMat {
    m.t().mapv(|z| z.conj())
}

pub fn all_finite(m: &CMat) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Max-entry deviation from hermiticity, `max_ij |M_ij - conj(M_ji)|`.
pub fn hermiticity_error(m: &CMat) -> f64 {
    let mut dev: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            dev = dev.max((m[[i, j]] - m[[j, i]].conj()).norm());
        }
    }
    dev
}

pub fn require_hermitian(m: &CMat, tol: f64) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "hermitian check on {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    let dev = hermiticity_error(m);
    if dev > tol {
        return Err(Error::NotHermitian {
            deviation: dev,
            tol,
        });
    }
    Ok(())
}

pub fn require_finite(m: &CMat, what: &str) -> Result<()> {
    if all_finite(m) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

/// `(M + M^dag)/2`.
pub fn hermitize(m: &CMat) -> CMat {
    let md = dagger(m);
    m.mapv(|z| z * 0.5) + md.mapv(|z| z * 0.5)
}

/// Column-major stacking of a square matrix into a vector.
pub fn vec_op(b: &CMat) -> Result<CVec> {
    let d = b.nrows();
    if b.ncols() != d {
        return Err(Error::DimensionMismatch(format!(
            "vec of non-square {}x{} matrix",
            b.nrows(),
            b.ncols()
        )));
    }
    let mut out = CVec::zeros(d * d);
    for j in 0..d {
        for i in 0..d {
            out[j * d + i] = b[[i, j]];
        }
    }
    Ok(out)
}

/// Exact inverse of [`vec_op`].
pub fn unvec_op(v: &CVec, d: usize) -> Result<CMat> {
    if v.len() != d * d {
        return Err(Error::DimensionMismatch(format!(
            "unvec of length-{} vector into {0}x{0} matrix",
            v.len()
        )));
    }
    let mut out = CMat::zeros((d, d));
    for j in 0..d {
        for i in 0..d {
            out[[i, j]] = v[j * d + i];
        }
    }
    Ok(out)
}

/// Hilbert-Schmidt inner product `tr(A^dag B)`.
pub fn hs_inner(a: &CMat, b: &CMat) -> Result<C64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(format!(
            "hs_inner of {:?} and {:?}",
            a.dim(),
            b.dim()
        )));
    }
    let mut acc = C64::new(0.0, 0.0);
    for (x, y) in a.iter().zip(b.iter()) {
        acc += x.conj() * *y;
    }
    Ok(acc)
}

pub fn hs_norm(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn trace(m: &CMat) -> C64 {
    m.diag().sum()
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    ndarray::linalg::kron(a, b)
}

pub fn kron_list(ops: &[CMat]) -> CMat {
    let mut out = Array2::from_elem((1, 1), C64::new(1.0, 0.0));
    for op in ops {
        out = kron(&out, op);
    }
    out
}

/// The 2x2 Pauli matrix `sigma_k` for k in 0..4 (identity, x, y, z).
pub fn pauli(k: usize) -> CMat {
    let (a, b, c, d) = match k {
        0 => ((1.0, 0.0), (0.0, 0.0), (0.0, 0.0), (1.0, 0.0)),
        1 => ((0.0, 0.0), (1.0, 0.0), (1.0, 0.0), (0.0, 0.0)),
        2 => ((0.0, 0.0), (0.0, -1.0), (0.0, 1.0), (0.0, 0.0)),
        3 => ((1.0, 0.0), (0.0, 0.0), (0.0, 0.0), (-1.0, 0.0)),
        _ => panic!("pauli index {k} out of range"),
    };
    array![
        [C64::new(a.0, a.1), C64::new(b.0, b.1)],
        [C64::new(c.0, c.1), C64::new(d.0, d.1)]
    ]
}

/// `sigma^+ = (sigma_x + i sigma_y)/2 = |0><1|`.
pub fn sigma_plus() -> CMat {
    array![
        [C64::new(0.0, 0.0), C64::new(1.0, 0.0)],
        [C64::new(0.0, 0.0), C64::new(0.0, 0.0)]
    ]
}

/// `sigma^- = (sigma_x - i sigma_y)/2 = |1><0|`.
pub fn sigma_minus() -> CMat {
    array![
        [C64::new(0.0, 0.0), C64::new(0.0, 0.0)],
        [C64::new(1.0, 0.0), C64::new(0.0, 0.0)]
    ]
}

/// Single-site operator `op` acting on `site` (0-based) of `n_sites` qubits.
pub fn site_operator(op: &CMat, site: usize, n_sites: usize) -> CMat {
    let ops: Vec<CMat> = (0..n_sites)
        .map(|k| if k == site { op.clone() } else { eye(2) })
        .collect();
    kron_list(&ops)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisNormalization {
    /// `F_0 = I/sqrt(d)`, remaining elements are raw Pauli strings with
    /// `F_i^2 = I` and `tr(F_i F_j) = d delta_ij`.
    RawPauli,
    /// Every element has unit Hilbert-Schmidt norm.
    Orthonormal,
}

/// An ordered Hilbert-Schmidt-orthogonal operator basis.
#[derive(Debug, Clone)]
pub struct OperatorBasis {
    pub dim: usize,
    pub elements: Vec<CMat>,
    pub normalization: BasisNormalization,
}

impl OperatorBasis {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Max pairwise Gram deviation from the expected diagonal.
    pub fn orthogonality_error(&self) -> f64 {
        let n = self.elements.len();
        let mut dev: f64 = 0.0;
        for i in 0..n {
            for j in 0..i {
                dev = dev.max(
                    hs_inner(&self.elements[i], &self.elements[j])
                        .unwrap()
                        .norm(),
                );
            }
        }
        dev
    }
}

/// Tensor-product Pauli basis on `n_qubits` qubits, ordered by the base-4
/// digits of the element index with digit order (I, x, y, z) per factor and
/// the leftmost factor carrying the most significant digit.
pub fn pauli_basis(n_qubits: usize, normalization: BasisNormalization) -> Result<OperatorBasis> {
    if n_qubits == 0 {
        return Err(Error::InvalidArgument("pauli_basis needs n >= 1".into()));
    }
    let d = 1usize << n_qubits;
    let d2 = d * d;
    let sqrt_d = (d as f64).sqrt();
    let mut elements = Vec::with_capacity(d2);
    for idx in 0..d2 {
        let mut digits = vec![0usize; n_qubits];
        let mut rem = idx;
        for k in (0..n_qubits).rev() {
            digits[k] = rem % 4;
            rem /= 4;
        }
        let factors: Vec<CMat> = digits.iter().map(|&k| pauli(k)).collect();
        let mut f = kron_list(&factors);
        if idx == 0 {
            f.mapv_inplace(|z| z / sqrt_d);
        } else if normalization == BasisNormalization::Orthonormal {
            f.mapv_inplace(|z| z / sqrt_d);
        }
        elements.push(f);
    }
    Ok(OperatorBasis {
        dim: d,
        elements,
        normalization,
    })
}

/// Tolerance policy for numerical rank decisions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TolPolicy {
    /// Threshold `max(rows, cols) * sigma_max * machine_eps * safety`.
    Relative { safety: f64 },
    /// Absolute threshold on singular values.
    Absolute(f64),
}

impl Default for TolPolicy {
    fn default() -> Self {
        TolPolicy::Relative { safety: 100.0 }
    }
}

impl TolPolicy {
    pub fn threshold(&self, max_dim: usize, sigma_max: f64) -> f64 {
        match *self {
            TolPolicy::Relative { safety } => max_dim as f64 * sigma_max * f64::EPSILON * safety,
            TolPolicy::Absolute(t) => t,
        }
    }
}

/// Rank decision with the singular values around the cut retained for audit.
#[derive(Debug, Clone, Copy)]
pub struct RankResult {
    pub rank: usize,
    /// Smallest singular value counted toward the rank (0 if rank 0).
    pub smallest_kept: f64,
    /// Largest singular value below the threshold (0 if none dropped).
    pub largest_dropped: f64,
    pub threshold: f64,
}

pub fn rank_from_singular_values(sv: &[f64], max_dim: usize, policy: &TolPolicy) -> RankResult {
    let sigma_max = sv.first().copied().unwrap_or(0.0);
    let threshold = policy.threshold(max_dim, sigma_max);
    let rank = sv.iter().take_while(|&&s| s > threshold).count();
    RankResult {
        rank,
        smallest_kept: if rank > 0 { sv[rank - 1] } else { 0.0 },
        largest_dropped: if rank < sv.len() { sv[rank] } else { 0.0 },
        threshold,
    }
}

pub fn singular_values(m: &CMat) -> Result<Vec<f64>> {
    crate::ensure_serial_blas();
    let (_, sv, _) = m.svd(false, false)?;
    Ok(sv.to_vec())
}

/// Number of singular values above the policy threshold.
pub fn numerical_rank(m: &CMat, policy: &TolPolicy) -> Result<RankResult> {
    require_finite(m, "numerical_rank input")?;
    let sv = singular_values(m)?;
    Ok(rank_from_singular_values(
        &sv,
        m.nrows().max(m.ncols()),
        policy,
    ))
}

pub fn stack_columns(vectors: &[CVec]) -> Result<CMat> {
    if vectors.is_empty() {
        return Err(Error::InvalidArgument("stack_columns of empty list".into()));
    }
    let n = vectors[0].len();
    if vectors.iter().any(|v| v.len() != n) {
        return Err(Error::DimensionMismatch("mixed vector lengths".into()));
    }
    let mut m = CMat::zeros((n, vectors.len()));
    for (j, v) in vectors.iter().enumerate() {
        m.column_mut(j).assign(v);
    }
    Ok(m)
}

/// Orthonormal basis of the span of `vectors` (rank-revealing, SVD-based).
pub fn orthonormal_span(vectors: &[CVec], policy: &TolPolicy) -> Result<(CMat, RankResult)> {
    crate::ensure_serial_blas();
    let m = stack_columns(vectors)?;
    let (u, sv, _) = m.svd(true, false)?;
    let u = u.expect("left singular vectors requested");
    let rr = rank_from_singular_values(sv.as_slice().unwrap(), m.nrows().max(m.ncols()), policy);
    Ok((u.slice(s![.., ..rr.rank]).to_owned(), rr))
}

/// Orthogonal projector onto the complement of `span(vectors)` in `C^dim`:
/// `I - QQ^dag` with Q a rank-revealing orthonormal basis of the span.
/// An empty list yields the identity.
pub fn complement_projector(dim: usize, vectors: &[CVec]) -> Result<CMat> {
    if vectors.is_empty() {
        return Ok(eye(dim));
    }
    if vectors.iter().any(|v| v.len() != dim) {
        return Err(Error::DimensionMismatch(
            "complement_projector vector length != dim".into(),
        ));
    }
    let (q, _) = orthonormal_span(vectors, &TolPolicy::default())?;
    let qd = dagger(&q);
    Ok(eye(dim) - q.dot(&qd))
}

/// QR-orthonormalization of a set of columns assumed full rank.
pub fn qr_orthonormal(m: &CMat) -> Result<CMat> {
    crate::ensure_serial_blas();
    let (q, _) = m.qr()?;
    Ok(q)
}

pub fn random_hermitian<R: Rng>(d: usize, rng: &mut R) -> CMat {
    let mut g = CMat::zeros((d, d));
    for i in 0..d {
        for j in 0..d {
            g[[i, j]] = C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
        }
    }
    hermitize(&g)
}

/// Haar-distributed unitary via QR of a Ginibre matrix with phase fixing.
pub fn random_unitary<R: Rng>(d: usize, rng: &mut R) -> CMat {
    crate::ensure_serial_blas();
    let mut g = CMat::zeros((d, d));
    for i in 0..d {
        for j in 0..d {
            g[[i, j]] = C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
        }
    }
    let (q, r) = g.qr().expect("qr of random matrix");
    let mut u = q;
    for j in 0..d {
        let rjj = r[[j, j]];
        let phase = if rjj.norm() > 0.0 {
            rjj / rjj.norm()
        } else {
            C64::new(1.0, 0.0)
        };
        for i in 0..d {
            u[[i, j]] *= phase.conj();
        }
    }
    u
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray_linalg::Norm;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_mat(d: usize, rng: &mut ChaCha12Rng) -> CMat {
        let mut m = CMat::zeros((d, d));
        for x in m.iter_mut() {
            *x = c(rng.sample(StandardNormal), rng.sample(StandardNormal));
        }
        m
    }

    #[test]
    fn vec_identity_and_single_entry() {
        let v = vec_op(&eye(2)).unwrap();
        assert_eq!(
            v.to_vec(),
            vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]
        );
        // |0><1| has its single entry at row 1, col 2 (1-based) -> index 3
        let mut ket01 = CMat::zeros((2, 2));
        ket01[[0, 1]] = c(1.0, 0.0);
        let v = vec_op(&ket01).unwrap();
        assert_eq!(
            v.to_vec(),
            vec![c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]
        );
    }

    #[test]
    fn unvec_inverts_vec() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for _ in 0..100 {
            let b = random_mat(3, &mut rng);
            let roundtrip = unvec_op(&vec_op(&b).unwrap(), 3).unwrap();
            assert_eq!(roundtrip, b);
        }
        assert_eq!(
            unvec_op(
                &array![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)],
                2
            )
            .unwrap(),
            eye(2)
        );
        assert!(unvec_op(&CVec::zeros(5), 2).is_err());
        assert!(vec_op(&CMat::zeros((2, 3))).is_err());
    }

    #[test]
    fn vec_kron_identity_p1() {
        // vec(ABC) = (C^T kron A) vec(B)
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for _ in 0..20 {
            let (a, b, cc) = (
                random_mat(2, &mut rng),
                random_mat(2, &mut rng),
                random_mat(2, &mut rng),
            );
            let lhs = vec_op(&a.dot(&b).dot(&cc)).unwrap();
            let rhs = kron(&cc.t().to_owned(), &a).dot(&vec_op(&b).unwrap());
            assert!((&lhs - &rhs).norm_l2() < 1e-12);
        }
    }

    #[test]
    fn hs_inner_matches_vec_p2() {
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        for _ in 0..20 {
            let (a, b) = (random_mat(3, &mut rng), random_mat(3, &mut rng));
            let lhs = hs_inner(&a, &b).unwrap();
            let va = vec_op(&a).unwrap();
            let vb = vec_op(&b).unwrap();
            let rhs: C64 = va.iter().zip(vb.iter()).map(|(x, y)| x.conj() * *y).sum();
            assert!((lhs - rhs).norm() < 1e-12);
        }
        assert!((hs_inner(&eye(4), &eye(4)).unwrap() - c(4.0, 0.0)).norm() < 1e-14);
        assert!(hs_inner(&pauli(1), &pauli(2)).unwrap().norm() < 1e-14);
    }

    #[test]
    fn pauli_basis_single_qubit() {
        let b = pauli_basis(1, BasisNormalization::RawPauli).unwrap();
        assert_eq!(b.len(), 4);
        // F_0 = I/sqrt(2), rest raw with tr(s_i s_j) = 2 delta_ij
        assert!((&b.elements[0] - &eye(2).mapv(|z| z / 2f64.sqrt()))
            .iter()
            .all(|z| z.norm() < 1e-15));
        for i in 1..4 {
            assert_eq!(b.elements[i], pauli(i));
            let sq = b.elements[i].dot(&b.elements[i]);
            assert!((&sq - &eye(2)).iter().all(|z| z.norm() < 1e-15));
        }
        assert!(b.orthogonality_error() < 1e-12);
    }

    #[test]
    fn pauli_basis_two_qubit_products_and_gram() {
        // tr[(F_n F_i)^2] = -4 exactly when one factor pair anticommutes
        let b = pauli_basis(2, BasisNormalization::RawPauli).unwrap();
        let idx = |a: usize, bb: usize| a * 4 + bb;
        let prod = b.elements[idx(1, 1)].dot(&b.elements[idx(2, 1)]); // XX * YX
        let tr = trace(&prod.dot(&prod));
        assert!((tr - c(-4.0, 0.0)).norm() < 1e-12);

        let on = pauli_basis(2, BasisNormalization::Orthonormal).unwrap();
        for i in 0..16 {
            for j in 0..16 {
                let g = hs_inner(&on.elements[i], &on.elements[j]).unwrap();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((g - c(expect, 0.0)).norm() < 1e-12);
            }
        }
        assert!(pauli_basis(0, BasisNormalization::RawPauli).is_err());
    }

    #[test]
    fn numerical_rank_basics() {
        let policy = TolPolicy::default();
        assert_eq!(numerical_rank(&eye(4), &policy).unwrap().rank, 4);
        assert_eq!(
            numerical_rank(&CMat::zeros((4, 4)), &policy).unwrap().rank,
            0
        );

        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let v: CVec = (0..4).map(|_| c(rng.sample(StandardNormal), 0.0)).collect();
        let w: CVec = (0..4).map(|_| c(rng.sample(StandardNormal), 0.0)).collect();
        let m = stack_columns(&[v.clone(), v.mapv(|z| z * 2.0), w]).unwrap();
        assert_eq!(numerical_rank(&m, &policy).unwrap().rank, 2);

        let mut bad = eye(2);
        bad[[0, 0]] = c(f64::NAN, 0.0);
        assert!(numerical_rank(&bad, &policy).is_err());
    }

    #[test]
    fn rank_invariant_under_unitary_factors() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for _ in 0..5 {
            let m = random_mat(5, &mut rng);
            let mut low = m.clone();
            for j in 0..5 {
                let col = m.column(0).to_owned();
                low.column_mut(j)
                    .assign(&col.mapv(|z| z * c(j as f64 + 0.5, 0.0)));
            }
            let r0 = numerical_rank(&low, &TolPolicy::default()).unwrap().rank;
            let u = random_unitary(5, &mut rng);
            let v = random_unitary(5, &mut rng);
            let r1 = numerical_rank(&u.dot(&low).dot(&v), &TolPolicy::default())
                .unwrap()
                .rank;
            assert_eq!(r0, r1);
        }
    }

    #[test]
    fn complement_projector_properties() {
        let e1: CVec = array![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)];
        let e2: CVec = array![c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)];
        let p = complement_projector(3, &[e1.clone()]).unwrap();
        assert!(p.dot(&e1).iter().all(|z| z.norm() < 1e-12));
        let pe2 = p.dot(&e2);
        assert!((&pe2 - &e2).iter().all(|z| z.norm() < 1e-12));

        assert_eq!(complement_projector(3, &[]).unwrap(), eye(3));

        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let vs: Vec<CVec> = (0..3)
            .map(|_| {
                (0..8)
                    .map(|_| c(rng.sample(StandardNormal), rng.sample(StandardNormal)))
                    .collect()
            })
            .collect();
        let p = complement_projector(8, &vs).unwrap();
        let p2 = p.dot(&p);
        assert!(p2.iter().zip(p.iter()).all(|(a, b)| (a - b).norm() < 1e-10));
        assert!(hermiticity_error(&p) < 1e-10);
        for v in &vs {
            assert!(p.dot(v).iter().all(|z| z.norm() < 1e-10));
        }
    }

    #[test]
    fn random_unitary_is_unitary() {
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        let u = random_unitary(4, &mut rng);
        let uu = dagger(&u).dot(&u);
        assert!((&uu - &eye(4)).iter().all(|z| z.norm() < 1e-12));
    }
}
