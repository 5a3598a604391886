//! Heisenberg-picture Markovian dynamics: Lindblad generators, GKS-form
//! generators, Kraus maps, and their d^2 x d^2 superoperator matrices.
//!
//! Everything acts on observables. A generator matrix L satisfies
//! `unvec(L vec(X)) = i[H, X] + sum_k (L_k^dag X L_k - {L_k^dag L_k, X}/2)`
//! and annihilates `vec(I)`; propagators `e^{Lt}` fix `vec(I)`.

use ndarray_linalg::{Eig, EigVals, Eigh, Inverse, OperationNorm, UPLO};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::linops::{
    dagger, eye, kron, require_finite, require_hermitian, vec_op, CMat, CVec, OperatorBasis,
    HERMITICITY_TOL,
};

/// Max |entry| of `M vec(I) - target` used by the unitality checks.
const UNITALITY_TOL: f64 = 1e-10;

/// Hamiltonian plus noise operators; the rates are absorbed into the
/// noise-operator amplitudes.
#[derive(Debug, Clone)]
pub struct LindbladGenerator {
    pub hamiltonian: CMat,
    pub noise_ops: Vec<CMat>,
}

impl LindbladGenerator {
    pub fn new(hamiltonian: CMat, noise_ops: Vec<CMat>) -> Result<Self> {
        require_finite(&hamiltonian, "hamiltonian")?;
        require_hermitian(&hamiltonian, HERMITICITY_TOL)?;
        let d = hamiltonian.nrows();
        for (k, l) in noise_ops.iter().enumerate() {
            require_finite(l, "noise operator")?;
            if l.dim() != (d, d) {
                return Err(Error::DimensionMismatch(format!(
                    "noise operator {k} is {:?}, hamiltonian is {d}x{d}",
                    l.dim()
                )));
            }
        }
        Ok(Self {
            hamiltonian,
            noise_ops,
        })
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.nrows()
    }
}

/// Operator-sum map `X -> sum_k M_k X M_k^dag`, unital when
/// `sum_k M_k M_k^dag = I`.
#[derive(Debug, Clone)]
pub struct KrausMap {
    pub kraus_ops: Vec<CMat>,
}

impl KrausMap {
    pub fn new(kraus_ops: Vec<CMat>) -> Result<Self> {
        if kraus_ops.is_empty() {
            return Err(Error::InvalidArgument("empty Kraus set".into()));
        }
        let d = kraus_ops[0].nrows();
        let mut acc = CMat::zeros((d, d));
        for m in &kraus_ops {
            require_finite(m, "kraus operator")?;
            if m.dim() != (d, d) {
                return Err(Error::DimensionMismatch(format!(
                    "kraus operator is {:?}, expected {d}x{d}",
                    m.dim()
                )));
            }
            acc = acc + m.dot(&dagger(m));
        }
        let dev = (&acc - &eye(d))
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        if dev > UNITALITY_TOL {
            return Err(Error::InvalidArgument(format!(
                "kraus map not unital: |sum M M^dag - I| = {dev:.3e}"
            )));
        }
        Ok(Self { kraus_ops })
    }

    pub fn dim(&self) -> usize {
        self.kraus_ops[0].nrows()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SuperKind {
    Generator,
    Propagator { time: f64 },
}

/// A d^2 x d^2 matrix acting on vectorized observables.
#[derive(Debug, Clone)]
pub struct Superoperator {
    pub dim: usize,
    pub matrix: CMat,
    pub kind: SuperKind,
}

impl Superoperator {
    pub fn new(dim: usize, matrix: CMat, kind: SuperKind) -> Result<Self> {
        let d2 = dim * dim;
        if matrix.dim() != (d2, d2) {
            return Err(Error::DimensionMismatch(format!(
                "superoperator is {:?}, expected {d2}x{d2} for d = {dim}",
                matrix.dim()
            )));
        }
        require_finite(&matrix, "superoperator")?;
        let id_vec = vec_op(&eye(dim))?;
        let image = matrix.dot(&id_vec);
        let dev = match kind {
            SuperKind::Generator => image.iter().map(|z| z.norm()).fold(0.0, f64::max),
            SuperKind::Propagator { .. } => image
                .iter()
                .zip(id_vec.iter())
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max),
        };
        if dev > UNITALITY_TOL {
            return Err(Error::InvalidArgument(format!(
                "superoperator violates unitality on vec(I) by {dev:.3e}"
            )));
        }
        Ok(Self { dim, matrix, kind })
    }

    pub fn d2(&self) -> usize {
        self.dim * self.dim
    }

    /// Apply to a vectorized observable.
    pub fn apply(&self, x: &CVec) -> CVec {
        self.matrix.dot(x)
    }
}

/// Superoperator matrix of a Lindblad generator,
/// `L = i(I kron H - H^T kron I)
///    + sum_k [L_k^T kron L_k^dag - (I kron L_k^dag L_k + (L_k^dag L_k)^T kron I)/2]`.
pub fn generator_matrix(gen: &LindbladGenerator) -> Result<Superoperator> {
    let d = gen.dim();
    let id = eye(d);
    let h = &gen.hamiltonian;
    let i = C64::new(0.0, 1.0);
    let mut l = (kron(&id, h) - kron(&h.t().to_owned(), &id)).mapv(|z| z * i);
    for lk in &gen.noise_ops {
        let lkd = dagger(lk);
        let ldl = lkd.dot(lk);
        l = l + kron(&lk.t().to_owned(), &lkd)
            - (kron(&id, &ldl) + kron(&ldl.t().to_owned(), &id)).mapv(|z| z * 0.5);
    }
    Superoperator::new(d, l, SuperKind::Generator)
}

/// Superoperator matrix of a Kraus map, `Phi = sum_k (M_k^dag)^T kron M_k`,
/// reproducing `Phi(X) = sum_k M_k X M_k^dag`.
pub fn kraus_superoperator(map: &KrausMap) -> Result<Superoperator> {
    let d = map.dim();
    let mut phi = CMat::zeros((d * d, d * d));
    for m in &map.kraus_ops {
        phi = phi + kron(&dagger(m).t().to_owned(), m);
    }
    Superoperator::new(d, phi, SuperKind::Propagator { time: 1.0 })
}

/// One-step propagator of a unitary map, `Phi = U* kron U`.
pub fn unitary_propagator(u: &CMat) -> Result<Superoperator> {
    kraus_superoperator(&KrausMap::new(vec![u.clone()])?)
}

/// Matrix exponential by scaling and squaring with a diagonal Pade(13)
/// approximant (Higham 2005). Intended for the moderate dimensions used
/// here (d^2 <= 4096).
pub fn expm(a: &CMat) -> Result<CMat> {
    crate::ensure_serial_blas();
    require_finite(a, "expm input")?;
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::DimensionMismatch("expm of non-square matrix".into()));
    }
    const THETA_13: f64 = 5.371920351148152;
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    let norm = a.opnorm_one()?;
    let s = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil() as u32
    } else {
        0
    };
    let scale = C64::new((0.5f64).powi(s as i32), 0.0);
    let a1 = a.mapv(|z| z * scale);
    let a2 = a1.dot(&a1);
    let a4 = a2.dot(&a2);
    let a6 = a2.dot(&a4);
    let id = eye(n);

    let c = |k: usize| C64::new(B[k], 0.0);
    let w1 = a6.mapv(|z| z * c(13)) + a4.mapv(|z| z * c(11)) + a2.mapv(|z| z * c(9));
    let w2 = w1.dot(&a6)
        + a6.mapv(|z| z * c(7))
        + a4.mapv(|z| z * c(5))
        + a2.mapv(|z| z * c(3))
        + id.mapv(|z| z * c(1));
    let u = a1.dot(&w2);
    let z1 = a6.mapv(|z| z * c(12)) + a4.mapv(|z| z * c(10)) + a2.mapv(|z| z * c(8));
    let v = z1.dot(&a6)
        + a6.mapv(|z| z * c(6))
        + a4.mapv(|z| z * c(4))
        + a2.mapv(|z| z * c(2))
        + id.mapv(|z| z * c(0));

    let denom = &v - &u;
    let numer = &v + &u;
    let denom_inv = denom
        .inv()
        .map_err(|e| Error::Linalg(format!("pade denominator: {e}")))?;
    let mut r = denom_inv.dot(&numer);
    for _ in 0..s {
        r = r.dot(&r);
    }
    require_finite(&r, "expm result")?;
    Ok(r)
}

/// Propagator `e^{Lt}` of a generator. Negative times are rejected; the
/// dynamics is a forward semigroup.
pub fn propagate(l: &Superoperator, t: f64) -> Result<Superoperator> {
    if !matches!(l.kind, SuperKind::Generator) {
        return Err(Error::InvalidArgument("propagate needs a generator".into()));
    }
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("negative time {t}")));
    }
    let m = expm(&l.matrix.mapv(|z| z * C64::new(t, 0.0)))?;
    Superoperator::new(l.dim, m, SuperKind::Propagator { time: t })
}

/// GKS-form generator data: coefficient matrix A over the non-identity
/// elements of an operator basis.
#[derive(Debug, Clone)]
pub struct GksSpec {
    pub basis: OperatorBasis,
    pub a_matrix: CMat,
}

impl GksSpec {
    pub fn new(basis: OperatorBasis, a_matrix: CMat) -> Result<Self> {
        crate::ensure_serial_blas();
        let m = basis.len() - 1;
        if a_matrix.dim() != (m, m) {
            return Err(Error::DimensionMismatch(format!(
                "GKS matrix is {:?}, expected {m}x{m}",
                a_matrix.dim()
            )));
        }
        require_hermitian(&a_matrix, HERMITICITY_TOL)?;
        let (evals, _) = a_matrix.eigh(UPLO::Lower)?;
        if let Some(&min) = evals
            .iter()
            .min_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"))
        {
            if min < -1e-10 {
                return Err(Error::GksNotPsd(min));
            }
        }
        Ok(Self { basis, a_matrix })
    }
}

/// Canonical noise operators from a GKS coefficient matrix:
/// `A = V D V^dag`, `L_j = sum_m sqrt(lambda_m) V_mj F_m` over the
/// non-identity basis elements. The Hamiltonian part is zero.
pub fn gks_to_lindblad(spec: &GksSpec) -> Result<LindbladGenerator> {
    crate::ensure_serial_blas();
    let d = spec.basis.dim;
    let (evals, v) = spec.a_matrix.eigh(UPLO::Lower)?;
    let mut noise = Vec::new();
    for j in 0..evals.len() {
        let lam = evals[j].max(0.0);
        if lam == 0.0 {
            continue;
        }
        let mut lj = CMat::zeros((d, d));
        for m in 0..evals.len() {
            // conjugated eigh column = true eigenvector (row-major input)
            let w = v[[m, j]].conj() * lam.sqrt();
            if w.norm() > 0.0 {
                lj = lj + spec.basis.elements[m + 1].mapv(|z| z * w);
            }
        }
        if lj.iter().map(|z| z.norm_sqr()).sum::<f64>() > 1e-24 {
            noise.push(lj);
        }
    }
    LindbladGenerator::new(CMat::zeros((d, d)), noise)
}

/// Aliasing check for time discretization: the continuous-time observability
/// verdict transfers to the step-`dt` sampled system when no two distinct
/// generator eigenvalues with equal real part have imaginary gap at a
/// multiple of `2 pi / dt`.
#[derive(Debug, Clone)]
pub struct AliasingReport {
    pub ok: bool,
    pub offending: Vec<(C64, C64)>,
}

pub const ALIASING_RE_TOL: f64 = 1e-9;
pub const ALIASING_MOD_TOL: f64 = 1e-7;

pub fn aliasing_ok(l: &Superoperator, dt: f64) -> Result<AliasingReport> {
    crate::ensure_serial_blas();
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("sampling step {dt}")));
    }
    let evals = l.matrix.eigvals()?;
    // deduplicate eigenvalues so "distinct pair" has numerical meaning
    let mut distinct: Vec<C64> = Vec::new();
    for &ev in evals.iter() {
        if !distinct.iter().any(|&d| (d - ev).norm() < 1e-8) {
            distinct.push(ev);
        }
    }
    let base = 2.0 * std::f64::consts::PI / dt;
    let mut offending = Vec::new();
    for i in 0..distinct.len() {
        for j in 0..i {
            let (a, b) = (distinct[i], distinct[j]);
            if (a.re - b.re).abs() > ALIASING_RE_TOL {
                continue;
            }
            let gap = (a - b).im;
            let s = (gap / base).round();
            if s != 0.0 && (gap - s * base).abs() <= ALIASING_MOD_TOL {
                offending.push((a, b));
            }
        }
    }
    Ok(AliasingReport {
        ok: offending.is_empty(),
        offending,
    })
}

/// Nonzero eigenvalue of the generator with the largest real part
/// (the reciprocal of its |Re| is the slowest decay time).
pub fn slowest_decay(l: &Superoperator) -> Result<Option<C64>> {
    crate::ensure_serial_blas();
    let evals = l.matrix.eigvals()?;
    let scale = l
        .matrix
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
        .max(1.0);
    let mut best: Option<C64> = None;
    for &ev in evals.iter() {
        if ev.norm() <= 1e-9 * scale {
            continue;
        }
        best = match best {
            None => Some(ev),
            Some(b) if ev.re > b.re => Some(ev),
            keep => keep,
        };
    }
    Ok(best)
}

/// Applies `e^{Lt}` to vectors for many values of `t`.
///
/// Uses the eigendecomposition of L when it is reliable (checked by
/// reconstruction residual); otherwise falls back to a matrix exponential
/// per call.
pub enum Evolver {
    Spectral { eigs: CVec, v: CMat, vinv: CMat },
    Direct { l: CMat },
}

/// An observable pre-transformed for repeated [`Evolver::apply`] calls.
pub struct PreparedObservable {
    data: CVec,
}

impl Evolver {
    pub fn new(l: &Superoperator) -> Result<Evolver> {
        if !matches!(l.kind, SuperKind::Generator) {
            return Err(Error::InvalidArgument("evolver needs a generator".into()));
        }
        match Self::try_spectral(&l.matrix) {
            Some(ev) => Ok(ev),
            None => Ok(Evolver::Direct {
                l: l.matrix.clone(),
            }),
        }
    }

    fn try_spectral(m: &CMat) -> Option<Evolver> {
        crate::ensure_serial_blas();
        let (eigs, v) = m.eig().ok()?;
        let vinv = v.inv().ok()?;
        // accept only if V Lambda V^-1 reproduces L
        let lam = CMat::from_diag(&eigs);
        let recon = v.dot(&lam).dot(&vinv);
        let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
        let err = (&recon - m).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if err <= 1e-8 * scale {
            Some(Evolver::Spectral { eigs, v, vinv })
        } else {
            None
        }
    }

    pub fn eigenvalues(&self) -> Option<&CVec> {
        match self {
            Evolver::Spectral { eigs, .. } => Some(eigs),
            Evolver::Direct { .. } => None,
        }
    }

    pub fn prepare(&self, x: &CVec) -> PreparedObservable {
        match self {
            Evolver::Spectral { vinv, .. } => PreparedObservable { data: vinv.dot(x) },
            Evolver::Direct { .. } => PreparedObservable { data: x.clone() },
        }
    }

    /// `e^{Lt} x` for a prepared observable.
    pub fn apply(&self, prep: &PreparedObservable, t: f64) -> Result<CVec> {
        match self {
            Evolver::Spectral { eigs, v, .. } => {
                let scaled: CVec = prep
                    .data
                    .iter()
                    .zip(eigs.iter())
                    .map(|(w, lam)| w * (lam * t).exp())
                    .collect();
                Ok(v.dot(&scaled))
            }
            Evolver::Direct { l } => {
                let p = expm(&l.mapv(|z| z * C64::new(t, 0.0)))?;
                Ok(p.dot(&prep.data))
            }
        }
    }
}
