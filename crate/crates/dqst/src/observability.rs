//! Observability analysis of vectorized quantum dynamics: Krylov
//! observability matrices, Kalman and PBH rank tests, observable and
//! non-observable subspaces, target-observable feasibility, randomized
//! genericity trials, and the counting bounds for unitary dynamics.
//!
//! The observable subspace is the smallest A-invariant subspace containing
//! `span{vec(X_i)}`. The Krylov iteration below builds it the textbook way;
//! because of floating-point dynamic range, power iterates lose directions
//! whose eigen-components decay fast relative to the dominant ones, so
//! `kalman_report` refines the subspace through the eigendecomposition of A
//! (per-eigenvalue components of the observables) whenever that
//! decomposition is trustworthy. The Krylov matrix remains the source of
//! the saturation depth `k_stop` and the fallback when A is defective.

use std::collections::BTreeMap;

use ndarray::prelude::*;
use ndarray_linalg::{Eig, Eigh, Inverse, Norm, SVD, UPLO};
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::Superoperator;
use crate::error::{Error, Result};
use crate::linops::{
    dagger, eye, hermitize, rank_from_singular_values, require_hermitian, stack_columns, unvec_op,
    vec_op, CMat, CVec, RankResult, TolPolicy, HERMITICITY_TOL,
};

/// The observables available for measurement, vectorized on demand.
#[derive(Debug, Clone)]
pub struct MeasurementSet {
    dim: usize,
    observables: Vec<CMat>,
    labels: Vec<String>,
}

impl MeasurementSet {
    /// Builds a set and checks the framework assumptions: every element
    /// Hermitian, the set linearly independent, and the identity present.
    pub fn new(observables: Vec<CMat>, labels: Vec<String>) -> Result<Self> {
        let set = Self::raw(observables, labels)?;
        if !set.has_identity() {
            return Err(Error::InvalidArgument(
                "measurement set must contain the identity operator".into(),
            ));
        }
        Ok(set)
    }

    /// Same validation, except the identity operator is not required.
    /// Used for analyses that deliberately omit the identity row from the
    /// observability matrix.
    pub fn raw(observables: Vec<CMat>, labels: Vec<String>) -> Result<Self> {
        if observables.is_empty() {
            return Err(Error::InvalidArgument("empty measurement set".into()));
        }
        if labels.len() != observables.len() {
            return Err(Error::InvalidArgument(format!(
                "{} labels for {} observables",
                labels.len(),
                observables.len()
            )));
        }
        let d = observables[0].nrows();
        for (k, x) in observables.iter().enumerate() {
            if x.dim() != (d, d) {
                return Err(Error::DimensionMismatch(format!(
                    "observable {k} is {:?}, expected {d}x{d}",
                    x.dim()
                )));
            }
            require_hermitian(x, HERMITICITY_TOL)
                .map_err(|e| Error::InvalidArgument(format!("observable '{}': {e}", labels[k])))?;
        }
        let set = Self {
            dim: d,
            observables,
            labels,
        };
        let stacked = set.stacked_vectors()?;
        let rr = crate::linops::numerical_rank(&stacked, &TolPolicy::default())?;
        if rr.rank != set.observables.len() {
            return Err(Error::InvalidArgument(format!(
                "observables linearly dependent: rank {} < {}",
                rr.rank,
                set.observables.len()
            )));
        }
        Ok(set)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.observables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observables.is_empty()
    }

    pub fn observables(&self) -> &[CMat] {
        &self.observables
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn identity_index(&self) -> Option<usize> {
        let id = eye(self.dim);
        self.observables.iter().position(|x| {
            x.iter()
                .zip(id.iter())
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max)
                <= HERMITICITY_TOL
        })
    }

    pub fn has_identity(&self) -> bool {
        self.identity_index().is_some()
    }

    /// Copy of this set with the identity operator removed.
    pub fn without_identity(&self) -> Result<Self> {
        let skip = self.identity_index();
        let (obs, labels) = self
            .observables
            .iter()
            .zip(self.labels.iter())
            .enumerate()
            .filter(|(k, _)| Some(*k) != skip)
            .map(|(_, (x, l))| (x.clone(), l.clone()))
            .unzip();
        Self::raw(obs, labels)
    }

    pub fn vectors(&self) -> Result<Vec<CVec>> {
        self.observables.iter().map(vec_op).collect()
    }

    /// d^2 x |X| matrix with the vectorized observables as columns.
    pub fn stacked_vectors(&self) -> Result<CMat> {
        stack_columns(&self.vectors()?)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct KrylovOptions {
    /// Highest power of A to apply; defaults to d^2 - 1.
    pub max_depth: Option<usize>,
    /// Stop at the first power that adds no new direction.
    pub early_stop: bool,
    /// Residual threshold (relative to a unit column) below which a
    /// candidate direction counts as already spanned.
    pub drop_tol: f64,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        Self {
            max_depth: None,
            early_stop: true,
            drop_tol: 1e-10,
        }
    }
}

/// Stacked Krylov vectors `{A^k x_i}` with per-column renormalization.
#[derive(Debug, Clone)]
pub struct KrylovBasis {
    pub columns: CMat,
    /// Highest power whose block still enlarged the span.
    pub k_stop: usize,
    /// Span dimension seen by the internal orthogonalization.
    pub rank_hint: usize,
}

/// Block power iteration for the span `{A^k x_i : 0 <= k <= k_stop}`.
/// Columns are renormalized every step so eigenvalues off the unit circle
/// cannot overflow; rank growth is tracked by orthogonalizing against the
/// directions accumulated so far.
pub fn krylov_basis(
    a: &Superoperator,
    x: &MeasurementSet,
    opts: &KrylovOptions,
) -> Result<KrylovBasis> {
    if a.dim != x.dim() {
        return Err(Error::DimensionMismatch(format!(
            "superoperator d = {}, measurement set d = {}",
            a.dim,
            x.dim()
        )));
    }
    let d2 = a.d2();
    let depth = opts.max_depth.unwrap_or(d2 - 1).min(d2 - 1);

    let mut ortho: Vec<CVec> = Vec::new();
    let mut add_direction = |v: &CVec| -> bool {
        let mut w = v.clone();
        for _ in 0..2 {
            for q in &ortho {
                let c: C64 = q.iter().zip(w.iter()).map(|(qi, wi)| qi.conj() * *wi).sum();
                w.zip_mut_with(q, |wi, qi| *wi -= c * *qi);
            }
        }
        let n = w.norm_l2();
        if n > opts.drop_tol {
            ortho.push(w.mapv(|z| z / n));
            true
        } else {
            false
        }
    };

    let mut collected: Vec<CVec> = Vec::new();
    let mut carry: Vec<CVec> = Vec::new();
    for v in x.vectors()? {
        let n = v.norm_l2();
        if n == 0.0 {
            continue;
        }
        let v = v.mapv(|z| z / n);
        add_direction(&v);
        collected.push(v.clone());
        carry.push(v);
    }
    let mut k_stop = 0usize;
    for k in 1..=depth {
        let mut grew = false;
        let mut next = Vec::with_capacity(carry.len());
        for v in &carry {
            let w = a.matrix.dot(v);
            let n = w.norm_l2();
            if n < 1e-300 {
                continue; // direction annihilated; its powers stay zero
            }
            let w = w.mapv(|z| z / n);
            if add_direction(&w) {
                grew = true;
            }
            collected.push(w.clone());
            next.push(w);
        }
        carry = next;
        if grew {
            k_stop = k;
        } else if opts.early_stop || carry.is_empty() {
            break;
        }
    }
    let columns = stack_columns(&collected)?;
    Ok(KrylovBasis {
        columns,
        k_stop,
        rank_hint: ortho.len(),
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SvAudit {
    pub smallest_kept: f64,
    pub largest_dropped: f64,
    pub threshold: f64,
}

impl From<RankResult> for SvAudit {
    fn from(r: RankResult) -> Self {
        SvAudit {
            smallest_kept: r.smallest_kept,
            largest_dropped: r.largest_dropped,
            threshold: r.threshold,
        }
    }
}

/// Result of the Kalman-type observability analysis.
#[derive(Debug, Clone)]
pub struct ObservabilityReport {
    pub rank: usize,
    pub d2: usize,
    pub observable: bool,
    /// Orthonormal basis of the observable subspace (columns).
    pub obs_basis: CMat,
    /// Orthonormal basis of the orthogonal complement, postprocessed to
    /// Hermitian traceless representatives (columns).
    pub non_obs_basis: CMat,
    pub sv_audit: SvAudit,
    pub k_stop: usize,
}

/// Serializable summary of an [`ObservabilityReport`].
#[derive(Debug, Clone, Serialize)]
pub struct ReportSummary {
    pub rank: usize,
    pub d2: usize,
    pub observable: bool,
    pub k_stop: usize,
    pub sv_kept: f64,
    pub sv_dropped: f64,
    pub n_nonobs: usize,
}

impl ObservabilityReport {
    pub fn summary(&self) -> ReportSummary {
        ReportSummary {
            rank: self.rank,
            d2: self.d2,
            observable: self.observable,
            k_stop: self.k_stop,
            sv_kept: self.sv_audit.smallest_kept,
            sv_dropped: self.sv_audit.largest_dropped,
            n_nonobs: self.d2 - self.rank,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ObservabilityOptions {
    pub rank_policy: TolPolicy,
    /// Eigenvalue clustering distance; `None` picks
    /// `max(1e-8, 1e-10 * max|A|)`.
    pub cluster_tol: Option<f64>,
    pub krylov: KrylovOptions,
}

impl Default for ObservabilityOptions {
    fn default() -> Self {
        Self {
            rank_policy: TolPolicy::default(),
            cluster_tol: None,
            krylov: KrylovOptions::default(),
        }
    }
}

/// Union-find clustering of eigenvalues at the given distance.
fn cluster_eigenvalues(evals: &CVec, tol: f64) -> Vec<Vec<usize>> {
    let n = evals.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in 0..i {
            if (evals[i] - evals[j]).norm() < tol {
                let (pi, pj) = (find(&mut parent, i), find(&mut parent, j));
                if pi != pj {
                    parent[pi] = pj;
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    groups.into_values().collect()
}

/// Eigendecomposition of the dynamics matrix with an anti-Hermitian /
/// Hermitian fast path (Hermitian solver, perfectly conditioned
/// eigenvectors) and a reliability check on the general path.
fn eigendecompose(a: &CMat) -> Result<Option<(CVec, CMat, CMat)>> {
    crate::ensure_serial_blas();
    let scale = a.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
    let herm_dev = crate::linops::hermiticity_error(a);
    let anti_dev = {
        let mut dev: f64 = 0.0;
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                dev = dev.max((a[[i, j]] + a[[j, i]].conj()).norm());
            }
        }
        dev
    };
    let tol = 1e-12 * scale;
    // eigh on row-major complex input returns the eigenvectors of the
    // transpose: conjugating the columns gives the true (unitary) basis,
    // whose inverse is then the plain transpose of the returned matrix.
    if anti_dev <= tol {
        // A = i M with M Hermitian
        let m = a.mapv(|z| z * C64::new(0.0, -1.0));
        let (w, v) = m.eigh(UPLO::Lower)?;
        let eigs: CVec = w.iter().map(|&x| C64::new(0.0, x)).collect();
        let vinv = v.t().to_owned();
        let v = v.mapv(|z| z.conj());
        return Ok(Some((eigs, v, vinv)));
    }
    if herm_dev <= tol {
        let (w, v) = a.eigh(UPLO::Lower)?;
        let eigs: CVec = w.iter().map(|&x| C64::new(x, 0.0)).collect();
        let vinv = v.t().to_owned();
        let v = v.mapv(|z| z.conj());
        return Ok(Some((eigs, v, vinv)));
    }
    let (eigs, v) = match a.eig() {
        Ok(r) => r,
        Err(_) => return Ok(None),
    };
    let vinv = match v.inv() {
        Ok(r) => r,
        Err(_) => return Ok(None),
    };
    let recon = v.dot(&CMat::from_diag(&eigs)).dot(&vinv);
    let err = (&recon - a).iter().map(|z| z.norm()).fold(0.0, f64::max);
    if err <= 1e-8 * scale {
        Ok(Some((eigs, v, vinv)))
    } else {
        Ok(None)
    }
}

/// Directions of the invariant span through the spectral decomposition:
/// for every eigenvalue cluster c, the singular directions of the block
/// `V_c (V^-1 X)_c` are components of the observables that evolve inside c.
/// Columns come back scaled by their singular values so a global rank cut
/// is meaningful.
///
/// Computed eigenvectors of two eigenvalues separated by `gap` mix at order
/// `eps |A| / gap`, which fakes components on directions the observables do
/// not actually touch; every cluster therefore carries a leakage floor of
/// that size and directions below it are discarded.
fn spectral_directions(a: &CMat, x_cols: &CMat, cluster_tol: f64) -> Result<Option<Vec<CVec>>> {
    let decomp = eigendecompose(a)?;
    let (eigs, v, vinv) = match decomp {
        Some(t) => t,
        None => return Ok(None),
    };
    let w = vinv.dot(x_cols);
    let a_fro = a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let groups = cluster_eigenvalues(&eigs, cluster_tol);
    let reps: Vec<C64> = groups
        .iter()
        .map(|g| {
            let sum: C64 = g.iter().map(|&i| eigs[i]).sum();
            sum / C64::new(g.len() as f64, 0.0)
        })
        .collect();
    let mut dirs: Vec<CVec> = Vec::new();
    for (gi, group) in groups.iter().enumerate() {
        let gap = reps
            .iter()
            .enumerate()
            .filter(|(gj, _)| *gj != gi)
            .map(|(_, r)| (*r - reps[gi]).norm())
            .fold(f64::INFINITY, f64::min);
        let leak_floor = if gap.is_finite() {
            (100.0 * f64::EPSILON * a_fro / gap).max(1e-14)
        } else {
            1e-14
        };
        let vc = {
            let mut m = CMat::zeros((v.nrows(), group.len()));
            for (k, &gi) in group.iter().enumerate() {
                m.column_mut(k).assign(&v.column(gi));
            }
            m
        };
        let wc = {
            let mut m = CMat::zeros((group.len(), w.ncols()));
            for (k, &gi) in group.iter().enumerate() {
                m.row_mut(k).assign(&w.row(gi));
            }
            m
        };
        let block = vc.dot(&wc);
        let (u, sv, _) = block.svd(true, false)?;
        let u = u.expect("left vectors");
        for (k, &s) in sv.iter().enumerate() {
            if s > leak_floor {
                dirs.push(u.column(k).mapv(|z| z * s));
            }
        }
    }
    Ok(Some(dirs))
}

/// Hermitian traceless representatives of the kernel columns: each raw
/// kernel vector is split into its Hermitian and anti-Hermitian parts
/// (both Hermitian operators after the i-twist), then the collection is
/// re-orthonormalized with real coefficients.
fn hermitian_split_basis(raw_kernel: &CMat, d: usize, want: usize) -> Result<CMat> {
    let d2 = d * d;
    let mut candidates: Vec<CVec> = Vec::new();
    for col in raw_kernel.columns() {
        let m = unvec_op(&col.to_owned(), d)?;
        let h1 = hermitize(&m);
        let md = dagger(&m);
        let h2 = (&m - &md).mapv(|z| z * C64::new(0.0, 0.5));
        for h in [h1, h2] {
            let v = vec_op(&h)?;
            if v.norm_l2() > 1e-12 {
                candidates.push(v);
            }
        }
    }
    // pivoted MGS; coefficients are automatically real for Hermitian
    // operators, so the span stays Hermitian
    let mut basis: Vec<CVec> = Vec::new();
    while basis.len() < want {
        let best = candidates
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm_l2().partial_cmp(&b.1.norm_l2()).expect("finite"));
        let (idx, _) = match best {
            Some((i, v)) if v.norm_l2() > 1e-10 => (i, v),
            _ => break,
        };
        let mut q = candidates.swap_remove(idx);
        let n = q.norm_l2();
        q.mapv_inplace(|z| z / n);
        for c in candidates.iter_mut() {
            let coeff: C64 = q.iter().zip(c.iter()).map(|(a, b)| a.conj() * *b).sum();
            c.zip_mut_with(&q, |ci, qi| *ci -= coeff * *qi);
        }
        basis.push(q);
    }
    let mut out = CMat::zeros((d2, basis.len()));
    for (j, v) in basis.iter().enumerate() {
        out.column_mut(j).assign(v);
    }
    Ok(out)
}

/// Kalman-type observability analysis: rank of the observability span,
/// orthonormal bases for the observable subspace and its complement, the
/// singular-value audit of the rank cut, and the Krylov saturation depth.
pub fn kalman_report(
    a: &Superoperator,
    x: &MeasurementSet,
    opts: &ObservabilityOptions,
) -> Result<ObservabilityReport> {
    let krylov = krylov_basis(a, x, &opts.krylov)?;
    let d = a.dim;
    let d2 = a.d2();

    let xn = {
        let mut m = x.stacked_vectors()?;
        for mut col in m.columns_mut() {
            let n = col.to_owned().norm_l2();
            if n > 0.0 {
                col.mapv_inplace(|z| z / n);
            }
        }
        m
    };
    let scale = a.matrix.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let cluster_tol = opts
        .cluster_tol
        .unwrap_or_else(|| (1e-10 * scale).max(1e-8));
    let generators = match spectral_directions(&a.matrix, &xn, cluster_tol)? {
        Some(dirs) if !dirs.is_empty() => stack_columns(&dirs)?,
        _ => krylov.columns.clone(),
    };

    let (u, sv, _) = generators.svd(true, false)?;
    let u = u.expect("full left vectors");
    let rr = rank_from_singular_values(
        sv.as_slice().expect("contiguous"),
        generators.nrows().max(generators.ncols()),
        &opts.rank_policy,
    );
    let rank = rr.rank;
    let obs_basis = u.slice(s![.., ..rank]).to_owned();
    let raw_kernel = u.slice(s![.., rank..]).to_owned();
    let non_obs_basis = hermitian_split_basis(&raw_kernel, d, d2 - rank)?;
    if non_obs_basis.ncols() != d2 - rank {
        return Err(Error::Linalg(format!(
            "hermitian split recovered {} of {} kernel directions",
            non_obs_basis.ncols(),
            d2 - rank
        )));
    }

    Ok(ObservabilityReport {
        rank,
        d2,
        observable: rank == d2,
        obs_basis,
        non_obs_basis,
        sv_audit: rr.into(),
        k_stop: krylov.k_stop,
    })
}

/// Rank-only variant used by randomized trials.
pub fn observability_rank(
    a: &Superoperator,
    x: &MeasurementSet,
    opts: &ObservabilityOptions,
) -> Result<usize> {
    let xn = {
        let mut m = x.stacked_vectors()?;
        for mut col in m.columns_mut() {
            let n = col.to_owned().norm_l2();
            if n > 0.0 {
                col.mapv_inplace(|z| z / n);
            }
        }
        m
    };
    let scale = a.matrix.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let cluster_tol = opts
        .cluster_tol
        .unwrap_or_else(|| (1e-10 * scale).max(1e-8));
    let generators = match spectral_directions(&a.matrix, &xn, cluster_tol)? {
        Some(dirs) if !dirs.is_empty() => stack_columns(&dirs)?,
        _ => krylov_basis(a, x, &opts.krylov)?.columns,
    };
    let (_, sv, _) = generators.svd(false, false)?;
    let rr = rank_from_singular_values(
        sv.as_slice().expect("contiguous"),
        generators.nrows().max(generators.ncols()),
        &opts.rank_policy,
    );
    Ok(rr.rank)
}

/// PBH (Hautus) observability test on the spectrum of A: for each
/// eigenvalue, the matrix `[lambda I - A^dag; X^dag]` must have rank d^2.
/// Returns the first failing eigenvalue as witness.
#[derive(Debug, Clone)]
pub struct PbhResult {
    pub observable: bool,
    pub witness: Option<C64>,
    pub eigenvalues_checked: usize,
}

pub fn pbh_test(a: &Superoperator, x: &MeasurementSet, policy: &TolPolicy) -> Result<PbhResult> {
    crate::ensure_serial_blas();
    if a.dim != x.dim() {
        return Err(Error::DimensionMismatch(
            "pbh_test dimension mismatch".into(),
        ));
    }
    let d2 = a.d2();
    let evals = a
        .matrix
        .eig()
        .map_err(|e| Error::Linalg(format!("pbh eigensolve: {e}")))?
        .0;
    // spectrum of A^dag, deduplicated
    let mut lambdas: Vec<C64> = Vec::new();
    for &ev in evals.iter() {
        let lam = ev.conj();
        if !lambdas.iter().any(|&l| (l - lam).norm() < 1e-8) {
            lambdas.push(lam);
        }
    }
    lambdas.sort_by(|a, b| {
        (-a.re, a.im.abs(), a.im)
            .partial_cmp(&(-b.re, b.im.abs(), b.im))
            .expect("finite eigenvalues")
    });

    let ad = dagger(&a.matrix);
    let xd = dagger(&x.stacked_vectors()?);
    let l = x.len();
    let mut stacked = CMat::zeros((d2 + l, d2));
    stacked.slice_mut(s![d2.., ..]).assign(&xd);
    for &lam in &lambdas {
        let block = eye(d2).mapv(|z| z * lam) - &ad;
        stacked.slice_mut(s![..d2, ..]).assign(&block);
        let (_, sv, _) = stacked.svd(false, false)?;
        let rr = rank_from_singular_values(sv.as_slice().expect("contiguous"), d2 + l, policy);
        if rr.rank < d2 {
            return Ok(PbhResult {
                observable: false,
                witness: Some(lam),
                eigenvalues_checked: lambdas.len(),
            });
        }
    }
    Ok(PbhResult {
        observable: true,
        witness: None,
        eigenvalues_checked: lambdas.len(),
    })
}

/// Whether the expectation of `z` is reconstructible: appending `vec(z)` to
/// the observable-subspace basis must not increase the numerical rank.
pub fn target_reconstructable(
    report: &ObservabilityReport,
    z: &CMat,
    policy: &TolPolicy,
) -> Result<bool> {
    require_hermitian(z, HERMITICITY_TOL)?;
    let zv = vec_op(z)?;
    let n = zv.norm_l2();
    if n == 0.0 {
        return Ok(true);
    }
    let zn = zv.mapv(|w| w / n);
    let q = &report.obs_basis;
    let mut m = CMat::zeros((q.nrows(), q.ncols() + 1));
    m.slice_mut(s![.., ..q.ncols()]).assign(q);
    m.column_mut(q.ncols()).assign(&zn);
    let rr = crate::linops::numerical_rank(&m, policy)?;
    Ok(rr.rank == report.rank)
}

/// Orthogonal residual of `vec(z)` against the observable subspace,
/// relative to `|vec(z)|`.
pub fn target_residual(report: &ObservabilityReport, z: &CMat) -> Result<f64> {
    let zv = vec_op(z)?;
    let n = zv.norm_l2();
    if n == 0.0 {
        return Ok(0.0);
    }
    let q = &report.obs_basis;
    let coeff = dagger(q).dot(&zv);
    let proj = q.dot(&coeff);
    Ok((&zv - &proj).norm_l2() / n)
}

/// Summary of randomized observability trials.
#[derive(Debug, Clone, Serialize)]
pub struct TrialSummary {
    pub n_trials: usize,
    pub n_observable: usize,
    pub rank_histogram: BTreeMap<usize, usize>,
    pub n_failures: usize,
}

/// Runs `n_trials` independent observability checks over randomly drawn
/// systems. Each trial derives its own counter-indexed stream from the
/// master seed, so the summary is deterministic and order-independent.
pub fn genericity_trials<F>(
    builder: F,
    n_trials: usize,
    master_seed: u64,
    opts: &ObservabilityOptions,
) -> TrialSummary
where
    F: Fn(&mut ChaCha12Rng) -> Result<(Superoperator, MeasurementSet)> + Sync,
{
    let results: Vec<Option<(usize, usize)>> = (0..n_trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
            rng.set_stream(1 + i as u64);
            let (a, x) = builder(&mut rng).ok()?;
            let rank = observability_rank(&a, &x, opts).ok()?;
            Some((rank, a.d2()))
        })
        .collect();

    let mut summary = TrialSummary {
        n_trials,
        n_observable: 0,
        rank_histogram: BTreeMap::new(),
        n_failures: 0,
    };
    for r in results {
        match r {
            Some((rank, d2)) => {
                *summary.rank_histogram.entry(rank).or_insert(0) += 1;
                if rank == d2 {
                    summary.n_observable += 1;
                }
            }
            None => summary.n_failures += 1,
        }
    }
    summary
}

/// Counting bounds for DQST under unitary dynamics.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MultipartiteVerdict {
    pub n_subsystems: usize,
    pub site_dim: usize,
    /// `k^N`
    pub state_space: u128,
    /// `N k^2 - N - 1`
    pub bound: i128,
    pub possible: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CountingVerdict {
    pub d: usize,
    pub n_obs: usize,
    /// Necessary condition `|X| >= d` for unitary dynamics.
    pub unitary_possible: bool,
    pub multipartite: Option<MultipartiteVerdict>,
}

pub fn counting_bounds(
    d: usize,
    n_obs: usize,
    multipartite: Option<(usize, usize)>,
) -> CountingVerdict {
    let multipartite = multipartite.map(|(n, k)| {
        let state_space = (k as u128).pow(n as u32);
        let bound = (n as i128) * (k as i128) * (k as i128) - n as i128 - 1;
        MultipartiteVerdict {
            n_subsystems: n,
            site_dim: k,
            state_space,
            bound,
            possible: (state_space as i128) <= bound,
        }
    });
    CountingVerdict {
        d,
        n_obs,
        unitary_possible: n_obs >= d,
        multipartite,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{generator_matrix, LindbladGenerator, SuperKind};
    use crate::linops::{pauli, random_hermitian, random_unitary};
    use rand::Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn set_with_identity(obs: Vec<CMat>) -> MeasurementSet {
        let d = obs[0].nrows();
        let mut all = vec![eye(d)];
        all.extend(obs);
        let labels = (0..all.len()).map(|k| format!("X{k}")).collect();
        MeasurementSet::new(all, labels).unwrap()
    }

    #[test]
    fn measurement_set_validation() {
        // identity required by the checked constructor
        assert!(MeasurementSet::new(vec![pauli(3)], vec!["Z".into()]).is_err());
        assert!(MeasurementSet::raw(vec![pauli(3)], vec!["Z".into()]).is_ok());
        // linear dependence rejected
        let dep = MeasurementSet::new(
            vec![eye(2), pauli(3), pauli(3).mapv(|z| z * 2.0)],
            vec!["I".into(), "Z".into(), "2Z".into()],
        );
        assert!(dep.is_err());
        // non-hermitian rejected
        let mut nh = CMat::zeros((2, 2));
        nh[[0, 1]] = c(1.0, 0.0);
        assert!(MeasurementSet::raw(vec![nh], vec!["bad".into()]).is_err());
    }

    #[test]
    fn krylov_static_system() {
        let zero = Superoperator::new(2, CMat::zeros((4, 4)), SuperKind::Generator).unwrap();
        let x = set_with_identity(vec![pauli(3)]);
        let kb = krylov_basis(&zero, &x, &KrylovOptions::default()).unwrap();
        assert_eq!(kb.k_stop, 0);
        assert_eq!(kb.rank_hint, 2);
    }

    #[test]
    fn kalman_qubit_sigma_x_drive() {
        // H = sigma_x, X = {I, sigma_z}: span gains sigma_y and stops at
        // rank 3; sigma_x spans the non-observable direction.
        let gen = LindbladGenerator::new(pauli(1), vec![]).unwrap();
        let l = generator_matrix(&gen).unwrap();
        let x = set_with_identity(vec![pauli(3)]);
        let rep = kalman_report(&l, &x, &ObservabilityOptions::default()).unwrap();
        assert!(!rep.observable);
        assert_eq!(rep.rank, 3);
        assert_eq!(rep.d2 - rep.rank, 1);
        assert_eq!(rep.non_obs_basis.ncols(), 1);
        // the kernel is spanned by sigma_x / sqrt(2)
        let n0 = unvec_op(&rep.non_obs_basis.column(0).to_owned(), 2).unwrap();
        let overlap = crate::linops::hs_inner(&n0, &pauli(1)).unwrap().norm();
        assert!((overlap - 2f64.sqrt()).abs() < 1e-9);
        // traceless and Hermitian
        assert!(crate::linops::trace(&n0).norm() < 1e-10);
        assert!(crate::linops::hermiticity_error(&n0) < 1e-10);
        // k_stop: powers beyond 1 add nothing
        assert_eq!(rep.k_stop, 1);
    }

    #[test]
    fn kalman_and_pbh_agree_on_random_systems() {
        let mut rng = ChaCha12Rng::seed_from_u64(20);
        let opts = ObservabilityOptions::default();
        for trial in 0..50 {
            let d = 2 + trial % 3;
            let h = random_hermitian(d, &mut rng);
            let n_noise = trial % 2;
            let noise: Vec<CMat> = (0..n_noise)
                .map(|_| {
                    let mut m = CMat::zeros((d, d));
                    for z in m.iter_mut() {
                        *z = c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
                    }
                    m
                })
                .collect();
            let gen = LindbladGenerator::new(h, noise).unwrap();
            let l = generator_matrix(&gen).unwrap();
            let n_extra = rng.gen_range(1..d * d);
            let obs: Vec<CMat> = (0..n_extra)
                .map(|_| random_hermitian(d, &mut rng))
                .collect();
            let x = set_with_identity(obs);
            let rep = kalman_report(&l, &x, &opts).unwrap();
            let pbh = pbh_test(&l, &x, &opts.rank_policy).unwrap();
            assert_eq!(
                rep.observable, pbh.observable,
                "disagreement at trial {trial}: kalman rank {} of {}",
                rep.rank, rep.d2
            );
        }
    }

    #[test]
    fn pbh_unitary_with_too_few_observables() {
        // d = 3, |X| = 2 < d: never observable; witness lambda = 1 with
        // d-fold degeneracy in U* kron U.
        let mut rng = ChaCha12Rng::seed_from_u64(33);
        let u = random_unitary(3, &mut rng);
        let phi = crate::dynamics::unitary_propagator(&u).unwrap();
        let x = set_with_identity(vec![random_hermitian(3, &mut rng)]);
        let pbh = pbh_test(&phi, &x, &TolPolicy::default()).unwrap();
        assert!(!pbh.observable);
        let w = pbh.witness.unwrap();
        assert!((w - c(1.0, 0.0)).norm() < 1e-7);
    }

    #[test]
    fn pbh_static_full_basis() {
        let zero = Superoperator::new(2, CMat::zeros((4, 4)), SuperKind::Generator).unwrap();
        let x = set_with_identity(vec![pauli(1), pauli(2), pauli(3)]);
        let pbh = pbh_test(&zero, &x, &TolPolicy::default()).unwrap();
        assert!(pbh.observable);
    }

    #[test]
    fn early_stop_matches_forced_depth() {
        let mut rng = ChaCha12Rng::seed_from_u64(40);
        let opts = ObservabilityOptions::default();
        for d in 2..=4usize {
            for _ in 0..5 {
                let h = random_hermitian(d, &mut rng);
                let gen = LindbladGenerator::new(h, vec![]).unwrap();
                let l = generator_matrix(&gen).unwrap();
                let x = set_with_identity(vec![random_hermitian(d, &mut rng)]);
                let early = krylov_basis(&l, &x, &KrylovOptions::default()).unwrap();
                let forced = krylov_basis(
                    &l,
                    &x,
                    &KrylovOptions {
                        max_depth: Some(d * d - 1),
                        early_stop: false,
                        drop_tol: 1e-10,
                    },
                )
                .unwrap();
                assert_eq!(early.rank_hint, forced.rank_hint, "d = {d}");
            }
        }
    }

    #[test]
    fn monotone_rank_in_observables() {
        let mut rng = ChaCha12Rng::seed_from_u64(50);
        let opts = ObservabilityOptions::default();
        let h = random_hermitian(3, &mut rng);
        let gen = LindbladGenerator::new(h, vec![]).unwrap();
        let l = generator_matrix(&gen).unwrap();
        let o1 = random_hermitian(3, &mut rng);
        let o2 = random_hermitian(3, &mut rng);
        let small = set_with_identity(vec![o1.clone()]);
        let large = set_with_identity(vec![o1, o2]);
        let r_small = kalman_report(&l, &small, &opts).unwrap().rank;
        let r_large = kalman_report(&l, &large, &opts).unwrap().rank;
        assert!(r_large >= r_small);
    }

    #[test]
    fn non_obs_orthogonal_to_identity() {
        let mut rng = ChaCha12Rng::seed_from_u64(60);
        let opts = ObservabilityOptions::default();
        for _ in 0..5 {
            let h = random_hermitian(3, &mut rng);
            let gen = LindbladGenerator::new(h, vec![]).unwrap();
            let l = generator_matrix(&gen).unwrap();
            let x = set_with_identity(vec![random_hermitian(3, &mut rng)]);
            let rep = kalman_report(&l, &x, &opts).unwrap();
            let idv = vec_op(&eye(3)).unwrap();
            for col in rep.non_obs_basis.columns() {
                let overlap: C64 = idv.iter().zip(col.iter()).map(|(a, b)| a.conj() * *b).sum();
                assert!(overlap.norm() < 1e-9);
                let m = unvec_op(&col.to_owned(), 3).unwrap();
                assert!(crate::linops::trace(&m).norm() < 1e-9);
                assert!(crate::linops::hermiticity_error(&m) < 1e-9);
            }
        }
    }

    #[test]
    fn target_reconstructable_basics() {
        let gen = LindbladGenerator::new(pauli(1), vec![]).unwrap();
        let l = generator_matrix(&gen).unwrap();
        let x = set_with_identity(vec![pauli(3)]);
        let rep = kalman_report(&l, &x, &ObservabilityOptions::default()).unwrap();
        let policy = TolPolicy::default();
        // member of X is always reconstructable
        assert!(target_reconstructable(&rep, &pauli(3), &policy).unwrap());
        // sigma_y enters the span at k = 1
        assert!(target_reconstructable(&rep, &pauli(2), &policy).unwrap());
        // sigma_x spans the kernel
        assert!(!target_reconstructable(&rep, &pauli(1), &policy).unwrap());
    }

    #[test]
    fn genericity_trials_deterministic() {
        let builder = |rng: &mut ChaCha12Rng| {
            let h = random_hermitian(2, rng);
            let gen = LindbladGenerator::new(h, vec![])?;
            let l = generator_matrix(&gen)?;
            let x = MeasurementSet::new(
                vec![eye(2), random_hermitian(2, rng)],
                vec!["I".into(), "X".into()],
            )?;
            Ok((l, x))
        };
        let opts = ObservabilityOptions::default();
        let s1 = genericity_trials(builder, 8, 99, &opts);
        let s2 = genericity_trials(builder, 8, 99, &opts);
        assert_eq!(s1.rank_histogram, s2.rank_histogram);
        assert_eq!(s1.n_observable, s2.n_observable);
        assert_eq!(s1.n_failures, 0);
    }

    #[test]
    fn counting_bound_examples() {
        assert!(!counting_bounds(8, 2, None).unitary_possible);
        assert!(counting_bounds(8, 8, None).unitary_possible);
        let v = counting_bounds(16, 16, Some((4, 2))).multipartite.unwrap();
        assert_eq!(v.state_space, 16);
        assert_eq!(v.bound, 11);
        assert!(!v.possible);
        for k in 2..=5usize {
            let v = counting_bounds(k * k, k * k, Some((2, k)))
                .multipartite
                .unwrap();
            assert!(v.possible, "bipartite bound must hold for k = {k}");
        }
        let v3 = counting_bounds(8, 8, Some((3, 2))).multipartite.unwrap();
        assert!(v3.possible);
    }
}
