//! State reconstruction by linear inversion, the mean-squared-error bound,
//! and expectation reconstruction for observables outside the measurable
//! set.

use ndarray::s;
use ndarray_linalg::{Norm, SVD};
use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linops::{
    dagger, hermitize, rank_from_singular_values, require_hermitian, trace, unvec_op, vec_op, CMat,
    CVec, TolPolicy, HERMITICITY_TOL,
};
use crate::observability::{target_reconstructable, target_residual, ObservabilityReport};

/// Rows are the conjugate-transposed evolved observables in plan order,
/// so that `O vec(rho) = y` holds exactly for exact expectations.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub matrix: CMat,
    /// (observable index, time) per row.
    pub rows: Vec<(usize, f64)>,
}

pub fn design_matrix(plan: &crate::selection::MeasurementPlan) -> Result<DesignMatrix> {
    if plan.entries.is_empty() {
        return Err(Error::InvalidArgument("empty measurement plan".into()));
    }
    let d2 = plan.entries[0].evolved.len();
    let mut m = CMat::zeros((plan.entries.len(), d2));
    let mut rows = Vec::with_capacity(plan.entries.len());
    for (r, e) in plan.entries.iter().enumerate() {
        for (c, v) in e.evolved.iter().enumerate() {
            m[[r, c]] = v.conj();
        }
        rows.push((e.obs_index, e.time));
    }
    Ok(DesignMatrix { matrix: m, rows })
}

/// Pre-factorized least-squares solver for repeated inversions against the
/// same design matrix.
pub struct DesignSolver {
    u: CMat,
    vt: CMat,
    sv: Vec<f64>,
    pub rank: usize,
    pub d2: usize,
    pub condition_number: f64,
}

impl DesignSolver {
    pub fn new(design: &DesignMatrix, policy: &TolPolicy) -> Result<Self> {
        crate::ensure_serial_blas();
        let m = &design.matrix;
        let (u, sv, vt) = m.svd(true, true)?;
        let (u, vt) = (u.expect("u"), vt.expect("vt"));
        let svv = sv.to_vec();
        let rr = rank_from_singular_values(&svv, m.nrows().max(m.ncols()), policy);
        let d2 = m.ncols();
        if rr.rank < d2 {
            return Err(Error::RankDeficient { rank: rr.rank, d2 });
        }
        let cond = (svv[0] / svv[d2 - 1]).powi(2);
        Ok(Self {
            u,
            vt,
            sv: svv,
            rank: rr.rank,
            d2,
            condition_number: cond,
        })
    }

    /// Minimum-norm least-squares solution of `O r = y`.
    pub fn solve(&self, y: &CVec) -> CVec {
        let uy = dagger(&self.u).dot(y);
        let mut scaled = CVec::zeros(self.d2);
        for k in 0..self.d2 {
            scaled[k] = uy[k] / C64::new(self.sv[k], 0.0);
        }
        dagger(&self.vt).dot(&scaled)
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.sv
    }
}

#[derive(Debug, Clone)]
pub struct ReconstructionResult {
    /// Hermitized estimate of the initial state; PSD is not enforced unless
    /// requested.
    pub rho: CMat,
    /// Condition number of `O^dag O` (squared singular-value ratio).
    pub condition_number: f64,
    /// `|O vec(rho_hat) - y|` over the plan rows.
    pub residual: f64,
    pub rank: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct EstimateOptions {
    pub rank_policy: TolPolicy,
    /// Clip negative eigenvalues and renormalize the trace.
    pub psd_project: bool,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            rank_policy: TolPolicy::default(),
            psd_project: false,
        }
    }
}

/// Least-squares inversion of the expectation data. This solves the same
/// normal equations as the explicit `(O^dag O)^{-1} O^dag y` formula through
/// an orthogonal factorization; rank deficiency is an error, never a silent
/// pseudo-solution.
pub fn estimate_state(
    design: &DesignMatrix,
    y: &[f64],
    opts: &EstimateOptions,
) -> Result<ReconstructionResult> {
    if y.len() != design.matrix.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "{} estimates for {} plan rows",
            y.len(),
            design.matrix.nrows()
        )));
    }
    let solver = DesignSolver::new(design, &opts.rank_policy)?;
    estimate_state_with(design, &solver, y, opts)
}

/// Variant reusing a pre-factorized solver (batch reconstructions).
pub fn estimate_state_with(
    design: &DesignMatrix,
    solver: &DesignSolver,
    y: &[f64],
    opts: &EstimateOptions,
) -> Result<ReconstructionResult> {
    let yv: CVec = y.iter().map(|&v| C64::new(v, 0.0)).collect();
    let r0 = solver.solve(&yv);
    let residual = (&design.matrix.dot(&r0) - &yv).norm_l2();
    let d = (solver.d2 as f64).sqrt() as usize;
    let mut rho = hermitize(&unvec_op(&r0, d)?);
    if opts.psd_project {
        rho = psd_projection(&rho)?;
    }
    Ok(ReconstructionResult {
        rho,
        condition_number: solver.condition_number,
        residual,
        rank: solver.rank,
    })
}

/// Nearest-by-clipping density matrix: negative eigenvalues to zero, then
/// trace renormalization.
pub fn psd_projection(rho: &CMat) -> Result<CMat> {
    crate::ensure_serial_blas();
    use ndarray_linalg::{Eigh, UPLO};
    let (evals, vecs) = rho.eigh(UPLO::Lower)?;
    let clipped: Vec<f64> = evals.iter().map(|&e| e.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidState("projection collapsed to zero".into()));
    }
    let d = rho.nrows();
    let mut out = CMat::zeros((d, d));
    for (k, &lam) in clipped.iter().enumerate() {
        if lam == 0.0 {
            continue;
        }
        // conjugated eigh column = true eigenvector (row-major complex input)
        let v = vecs.column(k);
        for i in 0..d {
            for j in 0..d {
                out[[i, j]] += v[i].conj() * v[j] * (lam / total);
            }
        }
    }
    Ok(out)
}

/// Worst-case mean-squared-error bound `(k / shots) tr[(O^dag O)^{-1}]`.
pub fn mse_bound(design: &DesignMatrix, k: f64, shots: u64, policy: &TolPolicy) -> Result<f64> {
    if k < 0.0 {
        return Err(Error::InvalidArgument("negative variance bound".into()));
    }
    if shots == 0 {
        return Err(Error::InvalidArgument("shots must be >= 1".into()));
    }
    let solver = DesignSolver::new(design, policy)?;
    let trace_inv: f64 = solver.sv[..solver.d2].iter().map(|s| 1.0 / (s * s)).sum();
    Ok(k / shots as f64 * trace_inv)
}

/// Exact-covariance mean squared error
/// `tr[(O^dag O)^{-1} O^dag Sigma O (O^dag O)^{-1}] / shots` for a diagonal
/// per-row variance vector.
pub fn mse_exact(
    design: &DesignMatrix,
    variances: &[f64],
    shots: u64,
    policy: &TolPolicy,
) -> Result<f64> {
    if variances.len() != design.matrix.nrows() {
        return Err(Error::DimensionMismatch(
            "variance vector length != rows".into(),
        ));
    }
    if shots == 0 {
        return Err(Error::InvalidArgument("shots must be >= 1".into()));
    }
    let solver = DesignSolver::new(design, policy)?;
    // columns of the pseudoinverse have squared norms
    // sum_i |U_ji|^2 / s_i^2 (V is unitary)
    let mut total = 0.0;
    for (j, &var) in variances.iter().enumerate() {
        let mut col = 0.0;
        for i in 0..solver.d2 {
            col += solver.u[[j, i]].norm_sqr() / (solver.sv[i] * solver.sv[i]);
        }
        total += var * col;
    }
    Ok(total / shots as f64)
}

/// Explicit-inverse evaluation of `tr[(O^dag O)^{-1}]`, kept as the
/// cross-check path for the bound computation.
pub fn normal_inverse_trace(design: &DesignMatrix) -> Result<f64> {
    crate::ensure_serial_blas();
    use ndarray_linalg::Inverse;
    let o = &design.matrix;
    let normal = dagger(o).dot(o);
    let inv = normal.inv().map_err(|_| Error::RankDeficient {
        rank: 0,
        d2: o.ncols(),
    })?;
    Ok(trace(&inv).re)
}

/// An observable evolved to a candidate measurement time.
#[derive(Debug, Clone)]
pub struct EvolvedObservable {
    pub obs_index: usize,
    pub time: f64,
    pub vector: CVec,
}

#[derive(Debug, Clone, Serialize)]
pub struct TargetCoefficients {
    pub alphas: Vec<f64>,
    /// (observable index, time) for each coefficient, in solve order.
    pub entries: Vec<(usize, f64)>,
    /// `|Z - sum_i alpha_i X_i[t_i]|_HS`.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct TargetOptions {
    /// Stop the greedy support search when the relative residual drops
    /// below this value.
    pub residual_tol_rel: f64,
    /// Select a minimal support greedily instead of solving over all
    /// supplied evolved observables.
    pub minimal_support: bool,
    pub rank_policy: TolPolicy,
}

impl Default for TargetOptions {
    fn default() -> Self {
        Self {
            residual_tol_rel: 1e-8,
            minimal_support: false,
            rank_policy: TolPolicy::default(),
        }
    }
}

fn ls_solve(cols: &[&CVec], z: &CVec) -> (Vec<C64>, f64) {
    crate::ensure_serial_blas();
    let n = z.len();
    let mut m = CMat::zeros((n, cols.len()));
    for (j, c) in cols.iter().enumerate() {
        m.column_mut(j).assign(*c);
    }
    // svd returns full U (n x n) and full V^dag (c x c); use the leading
    // min(n, c) singular triplets
    let (u, sv, vt) = m.svd(true, true).expect("svd");
    let (u, vt) = (u.unwrap(), vt.unwrap());
    let k = n.min(cols.len());
    let uy = dagger(&u.slice(s![.., ..k]).to_owned()).dot(z);
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let mut scaled = CVec::zeros(k);
    for i in 0..k {
        scaled[i] = if sv[i] > smax * 1e-13 {
            uy[i] / C64::new(sv[i], 0.0)
        } else {
            C64::new(0.0, 0.0)
        };
    }
    let alpha = dagger(&vt.slice(s![..k, ..]).to_owned()).dot(&scaled);
    let resid = (&m.dot(&alpha) - z).norm_l2();
    (alpha.to_vec(), resid)
}

/// Least-squares coefficients expressing the target observable as a
/// combination of evolved measurable observables, `Z ~ sum alpha_i X_i[t_i]`.
/// Requires `Z` inside the observable subspace. In minimal-support mode the
/// evolved observables are added greedily (largest residual reduction, ties
/// to the earliest time) until the residual tolerance is met.
pub fn target_coefficients(
    evolved: &[EvolvedObservable],
    z: &CMat,
    report: &ObservabilityReport,
    opts: &TargetOptions,
) -> Result<TargetCoefficients> {
    require_hermitian(z, HERMITICITY_TOL)?;
    if evolved.is_empty() {
        return Err(Error::InvalidArgument("no evolved observables".into()));
    }
    if !target_reconstructable(report, z, &opts.rank_policy)? {
        let residual = target_residual(report, z)?;
        return Err(Error::TargetNotReconstructable { residual });
    }
    let zv = vec_op(z)?;
    let znorm = zv.norm_l2().max(1e-300);

    let solve_support = |support: &[usize]| -> (Vec<C64>, f64) {
        let cols: Vec<&CVec> = support.iter().map(|&k| &evolved[k].vector).collect();
        ls_solve(&cols, &zv)
    };

    let support: Vec<usize> = if opts.minimal_support {
        let mut chosen: Vec<usize> = Vec::new();
        let mut remaining: Vec<usize> = (0..evolved.len()).collect();
        let mut best_resid = f64::INFINITY;
        while !remaining.is_empty() && best_resid > opts.residual_tol_rel * znorm {
            let mut pick: Option<(f64, f64, usize)> = None; // (resid, time, idx)
            for (pos, &cand) in remaining.iter().enumerate() {
                let mut trial = chosen.clone();
                trial.push(cand);
                let (_, resid) = solve_support(&trial);
                let t = evolved[cand].time;
                pick = match pick {
                    None => Some((resid, t, pos)),
                    Some((r0, _t0, _)) if resid < r0 - 1e-12 * znorm => Some((resid, t, pos)),
                    Some((r0, t0, _)) if (resid - r0).abs() <= 1e-12 * znorm && t < t0 => {
                        Some((resid, t, pos))
                    }
                    keep => keep,
                };
            }
            let (resid, _, pos) = pick.expect("nonempty remaining");
            if resid >= best_resid - 1e-15 * znorm && !chosen.is_empty() {
                break; // no further improvement
            }
            best_resid = resid;
            chosen.push(remaining.remove(pos));
        }
        chosen
    } else {
        (0..evolved.len()).collect()
    };

    let (alpha, residual) = solve_support(&support);
    let alphas: Vec<f64> = alpha.iter().map(|a| a.re).collect();
    let entries: Vec<(usize, f64)> = support
        .iter()
        .map(|&k| (evolved[k].obs_index, evolved[k].time))
        .collect();
    Ok(TargetCoefficients {
        alphas,
        entries,
        residual,
    })
}

/// Linear combination of estimates, `z_hat = sum alpha_i y_hat_i`.
pub fn target_estimate(alphas: &[f64], estimates: &[f64]) -> Result<f64> {
    if alphas.len() != estimates.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} coefficients vs {} estimates",
            alphas.len(),
            estimates.len()
        )));
    }
    Ok(alphas
        .iter()
        .zip(estimates.iter())
        .map(|(a, y)| a * y)
        .sum())
}

/// Squared error between an exact state and its estimate,
/// `tr[(rho - rho_hat)^dag (rho - rho_hat)]`.
pub fn state_squared_error(rho: &CMat, rho_hat: &CMat) -> f64 {
    let diff = rho - rho_hat;
    diff.iter().map(|z| z.norm_sqr()).sum()
}
