//! Greedy selection of observables and measurement times: each step picks
//! the evolved observable with the largest component orthogonal to the span
//! of everything already selected.

use ndarray_linalg::Norm;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::dynamics::{slowest_decay, Evolver, Superoperator};
use crate::error::{Error, Result};
use crate::linops::{CMat, CVec};
use crate::observability::MeasurementSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FirstPick {
    /// Lowest-index non-identity observable at t = 0.
    LowestIndex,
    /// Uniformly random non-identity observable at t = 0.
    Seeded(u64),
}

#[derive(Debug, Clone, Copy)]
pub struct GreedyOptions {
    /// Time horizon; `None` takes `4 / |Re lambda_2|` from the generator's
    /// spectral gap.
    pub horizon: Option<f64>,
    /// Coarse grid points on `[0, T]`, including t = 0.
    pub n_grid: usize,
    /// Golden-section refinement stops below `time_tol_rel * T`.
    pub time_tol_rel: f64,
    /// Stop when the best squared residual falls below this fraction of
    /// `max_i |x_i|^2`.
    pub stop_objective_rel: f64,
    pub first_pick: FirstPick,
    /// Objectives within this absolute band count as ties; the lowest
    /// observable index wins.
    pub tie_tol: f64,
}

impl Default for GreedyOptions {
    fn default() -> Self {
        Self {
            horizon: None,
            n_grid: 200,
            time_tol_rel: 1e-6,
            stop_objective_rel: 1e-10,
            first_pick: FirstPick::LowestIndex,
            tie_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlanEntry {
    pub obs_index: usize,
    pub time: f64,
    /// `e^{Lt} x_i`, the design-matrix row before conjugation.
    pub evolved: CVec,
    /// `|Pi_perp e^{Lt} x_i|^2` against the span selected before this entry.
    pub objective: f64,
    pub cumulative_rank: usize,
}

#[derive(Debug, Clone)]
pub struct MeasurementPlan {
    pub entries: Vec<PlanEntry>,
    pub horizon: f64,
    pub final_rank: usize,
    /// True when the accumulated span reached the full operator space.
    pub complete: bool,
}

pub const PLAN_CSV_HEADER: &str = "index,label,time,objective,cumulative_rank";

impl MeasurementPlan {
    pub fn csv_rows(&self, labels: &[String]) -> Vec<String> {
        self.entries
            .iter()
            .map(|e| {
                format!(
                    "{},{},{:.12e},{:.12e},{}",
                    e.obs_index, labels[e.obs_index], e.time, e.objective, e.cumulative_rank
                )
            })
            .collect()
    }

    pub fn max_time(&self) -> f64 {
        self.entries.iter().map(|e| e.time).fold(0.0, f64::max)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Comparison band treating numerically flat objectives as ties; earlier
/// times win ties.
const TIME_SEARCH_TIE_REL: f64 = 1e-9;

fn beats(candidate: f64, incumbent: f64) -> bool {
    candidate > incumbent + TIME_SEARCH_TIE_REL * (1.0 + incumbent.abs())
}

/// Coarse grid plus golden-section refinement of a scalar function on
/// `[0, horizon]`. Ties on the grid resolve to the earliest point.
fn grid_then_golden<F: FnMut(f64) -> f64>(
    mut f: F,
    horizon: f64,
    n_grid: usize,
    time_tol: f64,
) -> (f64, f64) {
    let n = n_grid.max(2);
    let step = horizon / (n - 1) as f64;
    let mut best_t = 0.0;
    let mut best_f = f(0.0);
    for g in 1..n {
        let t = g as f64 * step;
        let v = f(t);
        if beats(v, best_f) {
            best_f = v;
            best_t = t;
        }
    }
    // refine inside the bracket around the best grid point
    let (mut a, mut b) = ((best_t - step).max(0.0), (best_t + step).min(horizon));
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > time_tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    for (t, v) in [(c, fc), (d, fd)] {
        if beats(v, best_f) {
            best_f = v;
            best_t = t;
        }
    }
    (best_t, best_f)
}

/// Maximizes `|Pi_perp e^{Lt} x|^2` over `t` in `[0, horizon]` with a coarse
/// grid followed by golden-section refinement.
pub fn optimize_time(
    x: &CVec,
    pi_perp: &CMat,
    l: &Superoperator,
    horizon: f64,
    opts: &GreedyOptions,
) -> Result<(f64, f64)> {
    if !(horizon > 0.0) {
        return Err(Error::InvalidArgument(format!("horizon {horizon}")));
    }
    let evolver = Evolver::new(l)?;
    let prep = evolver.prepare(x);
    let mut eval = |t: f64| -> f64 {
        let v = evolver.apply(&prep, t).expect("evolution");
        pi_perp.dot(&v).norm_l2().powi(2)
    };
    Ok(grid_then_golden(
        &mut eval,
        horizon,
        opts.n_grid,
        opts.time_tol_rel * horizon,
    ))
}

fn default_horizon(l: &Superoperator, evolver: &Evolver) -> Result<f64> {
    let lam = match evolver.eigenvalues() {
        Some(eigs) => {
            let scale = l
                .matrix
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max)
                .max(1.0);
            eigs.iter()
                .filter(|ev| ev.norm() > 1e-9 * scale)
                .fold(None, |acc: Option<C64>, &ev| match acc {
                    None => Some(ev),
                    Some(b) if ev.re > b.re => Some(ev),
                    keep => keep,
                })
        }
        None => slowest_decay(l)?,
    };
    match lam {
        Some(l2) if l2.re.abs() > 1e-12 => Ok(4.0 / l2.re.abs()),
        _ => Err(Error::InvalidArgument(
            "generator has no spectral gap; supply a horizon".into(),
        )),
    }
}

/// Builds a measurement plan by greedy selection. The identity observable,
/// when present, is placed once at t = 0; every other entry is the argmax
/// of the orthogonal-component objective over observables and times. Stops
/// at full rank or when the best objective falls below tolerance; a plan
/// for a non-observable system simply terminates early with
/// `complete = false`.
pub fn greedy_plan(
    l: &Superoperator,
    x: &MeasurementSet,
    opts: &GreedyOptions,
) -> Result<MeasurementPlan> {
    if l.dim != x.dim() {
        return Err(Error::DimensionMismatch(
            "greedy_plan dimension mismatch".into(),
        ));
    }
    let d2 = l.d2();
    let evolver = Evolver::new(l)?;
    let horizon = match opts.horizon {
        Some(t) if t > 0.0 => t,
        Some(t) => return Err(Error::InvalidArgument(format!("horizon {t}"))),
        None => default_horizon(l, &evolver)?,
    };
    let n_obs = x.len();
    let vectors = x.vectors()?;
    let prepared: Vec<_> = vectors.iter().map(|v| evolver.prepare(v)).collect();

    let n = opts.n_grid.max(2);
    let step = horizon / (n - 1) as f64;
    let grid_times: Vec<f64> = (0..n).map(|g| g as f64 * step).collect();
    let mut grid_vecs: Vec<Vec<CVec>> = Vec::with_capacity(n_obs);
    for prep in &prepared {
        let mut per_obs = Vec::with_capacity(n);
        for &t in &grid_times {
            per_obs.push(evolver.apply(prep, t)?);
        }
        grid_vecs.push(per_obs);
    }
    // squared residual of every grid vector against the selected span,
    // updated incrementally as basis directions are added
    let mut resid2: Vec<Vec<f64>> = grid_vecs
        .iter()
        .map(|per| per.iter().map(|v| v.norm_l2().powi(2)).collect())
        .collect();

    let mut basis: Vec<CVec> = Vec::new();
    let mut entries: Vec<PlanEntry> = Vec::new();

    let inner =
        |a: &CVec, b: &CVec| -> C64 { a.iter().zip(b.iter()).map(|(x, y)| x.conj() * *y).sum() };

    let residual_against_basis = |basis: &[CVec], v: &CVec| -> (CVec, f64) {
        let mut w = v.clone();
        for _ in 0..2 {
            for q in basis {
                let c = inner(q, &w);
                w.zip_mut_with(q, |wi, qi| *wi -= c * *qi);
            }
        }
        let n2 = w.norm_l2().powi(2);
        (w, n2)
    };

    let push_entry = |entries: &mut Vec<PlanEntry>,
                      basis: &mut Vec<CVec>,
                      resid2: &mut Vec<Vec<f64>>,
                      grid_vecs: &Vec<Vec<CVec>>,
                      obs_index: usize,
                      time: f64,
                      evolved: CVec,
                      objective: f64|
     -> Result<()> {
        let (w, n2) = residual_against_basis(basis, &evolved);
        if n2 <= 0.0 {
            return Err(Error::Linalg("selected direction already in span".into()));
        }
        let q = w.mapv(|z| z / n2.sqrt());
        for (i, per) in grid_vecs.iter().enumerate() {
            for (g, v) in per.iter().enumerate() {
                let c = inner(&q, v);
                resid2[i][g] = (resid2[i][g] - c.norm_sqr()).max(0.0);
            }
        }
        basis.push(q);
        entries.push(PlanEntry {
            obs_index,
            time,
            evolved,
            objective,
            cumulative_rank: basis.len(),
        });
        Ok(())
    };

    // identity first, once, at t = 0
    let identity_index = x.identity_index();
    if let Some(i0) = identity_index {
        let v = vectors[i0].clone();
        let obj = v.norm_l2().powi(2);
        push_entry(
            &mut entries,
            &mut basis,
            &mut resid2,
            &grid_vecs,
            i0,
            0.0,
            v,
            obj,
        )?;
    }

    // first proper pick at t = 0
    let candidates: Vec<usize> = (0..n_obs).filter(|&i| Some(i) != identity_index).collect();
    if let Some(&first) = match opts.first_pick {
        FirstPick::LowestIndex => candidates.first(),
        FirstPick::Seeded(seed) => {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let k = rng.gen_range(0..candidates.len().max(1));
            candidates.get(k)
        }
    } {
        let v = grid_vecs[first][0].clone();
        let obj = resid2[first][0];
        push_entry(
            &mut entries,
            &mut basis,
            &mut resid2,
            &grid_vecs,
            first,
            0.0,
            v,
            obj,
        )?;
    }

    let max_x2 = vectors
        .iter()
        .map(|v| v.norm_l2().powi(2))
        .fold(0.0, f64::max);
    let stop_objective = opts.stop_objective_rel * max_x2;
    let time_tol = opts.time_tol_rel * horizon;
    let phi = (5f64.sqrt() - 1.0) / 2.0;

    while basis.len() < d2 {
        let mut best: Option<(f64, usize, f64)> = None; // (objective, index, time)
        for i in 0..n_obs {
            // best grid point for observable i
            let (mut g_best, mut f_best) = (0usize, resid2[i][0]);
            for (g, &f) in resid2[i].iter().enumerate() {
                if f > f_best {
                    f_best = f;
                    g_best = g;
                }
            }
            if f_best < stop_objective {
                continue;
            }
            // golden-section refinement around the best grid point; the
            // incremental grid table accumulates cancellation noise, so the
            // candidate objective is recomputed from scratch
            let tb = grid_times[g_best];
            let (mut a, mut b) = ((tb - step).max(0.0), (tb + step).min(horizon));
            let eval = |t: f64| -> f64 {
                let v = evolver.apply(&prepared[i], t).expect("evolution");
                residual_against_basis(&basis, &v).1
            };
            let mut c = b - phi * (b - a);
            let mut d = a + phi * (b - a);
            let mut fc = eval(c);
            let mut fd = eval(d);
            while b - a > time_tol {
                if fc > fd {
                    b = d;
                    d = c;
                    fd = fc;
                    c = b - phi * (b - a);
                    fc = eval(c);
                } else {
                    a = c;
                    c = d;
                    fc = fd;
                    d = a + phi * (b - a);
                    fd = eval(d);
                }
            }
            let (mut t_i, mut f_i) = (tb, eval(tb));
            for (t, v) in [(c, fc), (d, fd)] {
                if beats(v, f_i) {
                    f_i = v;
                    t_i = t;
                }
            }
            best = match best {
                None => Some((f_i, i, t_i)),
                Some((f0, _, _)) if f_i > f0 + opts.tie_tol => Some((f_i, i, t_i)),
                keep => keep,
            };
        }
        let (obj, i, t) = match best {
            Some(b) if b.0 >= stop_objective => b,
            _ => break,
        };
        let evolved = evolver.apply(&prepared[i], t)?;
        push_entry(
            &mut entries,
            &mut basis,
            &mut resid2,
            &grid_vecs,
            i,
            t,
            evolved,
            obj,
        )?;
    }

    let final_rank = basis.len();
    Ok(MeasurementPlan {
        entries,
        horizon,
        final_rank,
        complete: final_rank == d2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{generator_matrix, LindbladGenerator, SuperKind};
    use crate::linops::{complement_projector, eye, pauli, vec_op};

    fn qubit_set() -> MeasurementSet {
        MeasurementSet::new(vec![eye(2), pauli(3)], vec!["I".into(), "Z".into()]).unwrap()
    }

    #[test]
    fn optimize_time_static_and_unitary_cases() {
        let zero = Superoperator::new(2, CMat::zeros((4, 4)), SuperKind::Generator).unwrap();
        let x = vec_op(&pauli(3)).unwrap();
        let id_proj = eye(4);
        let opts = GreedyOptions::default();
        // constant objective: first grid point wins
        let (t, f) = optimize_time(&x, &id_proj, &zero, 3.0, &opts).unwrap();
        assert_eq!(t, 0.0);
        assert!((f - 2.0).abs() < 1e-12);

        // unitary dynamics preserves the norm: objective constant, t* = 0
        let gen = LindbladGenerator::new(pauli(1), vec![]).unwrap();
        let l = generator_matrix(&gen).unwrap();
        let (t, f) = optimize_time(&x, &id_proj, &l, 2.0, &opts).unwrap();
        assert_eq!(t, 0.0);
        assert!((f - 2.0).abs() < 1e-10);
    }

    #[test]
    fn optimize_time_precession_peak() {
        // H = sigma_x drives vec(sigma_z) toward sigma_y; with {I, sigma_z}
        // projected out, f(t) = 2 sin^2(2t) peaks first at t = pi/4.
        let gen = LindbladGenerator::new(pauli(1), vec![]).unwrap();
        let l = generator_matrix(&gen).unwrap();
        let span = vec![vec_op(&eye(2)).unwrap(), vec_op(&pauli(3)).unwrap()];
        let pi_perp = complement_projector(4, &span).unwrap();
        let x = vec_op(&pauli(3)).unwrap();
        let (t, f) = optimize_time(&x, &pi_perp, &l, 1.0, &GreedyOptions::default()).unwrap();
        assert!((t - std::f64::consts::FRAC_PI_4).abs() < 1e-4, "t* = {t}");
        assert!((f - 2.0).abs() < 1e-6);
    }

    #[test]
    fn greedy_static_complete_set() {
        let zero = Superoperator::new(2, CMat::zeros((4, 4)), SuperKind::Generator).unwrap();
        let x = MeasurementSet::new(
            vec![eye(2), pauli(1), pauli(2), pauli(3)],
            vec!["I".into(), "X".into(), "Y".into(), "Z".into()],
        )
        .unwrap();
        let opts = GreedyOptions {
            horizon: Some(1.0),
            ..GreedyOptions::default()
        };
        let plan = greedy_plan(&zero, &x, &opts).unwrap();
        assert!(plan.complete);
        assert_eq!(plan.len(), 4);
        assert!(plan.entries.iter().all(|e| e.time == 0.0));
        // strict rank growth per entry
        for (k, e) in plan.entries.iter().enumerate() {
            assert_eq!(e.cumulative_rank, k + 1);
        }
    }

    #[test]
    fn greedy_partial_coverage_qubit() {
        // H = sigma_x with X = {I, sigma_z}: rank saturates at 3 with
        // entries (I, 0), (Z, 0), (Z, ~pi/4).
        let gen = LindbladGenerator::new(pauli(1), vec![]).unwrap();
        let l = generator_matrix(&gen).unwrap();
        let opts = GreedyOptions {
            horizon: Some(1.0),
            ..GreedyOptions::default()
        };
        let plan = greedy_plan(&l, &qubit_set(), &opts).unwrap();
        assert!(!plan.complete);
        assert_eq!(plan.final_rank, 3);
        assert_eq!(plan.len(), 3);
        assert_eq!(plan.entries[0].obs_index, 0);
        assert_eq!(plan.entries[1].obs_index, 1);
        assert_eq!(plan.entries[1].time, 0.0);
        assert_eq!(plan.entries[2].obs_index, 1);
        assert!((plan.entries[2].time - std::f64::consts::FRAC_PI_4).abs() < 1e-3);
    }

    #[test]
    fn greedy_deterministic() {
        let gen = LindbladGenerator::new(pauli(1), vec![]).unwrap();
        let l = generator_matrix(&gen).unwrap();
        let opts = GreedyOptions {
            horizon: Some(1.0),
            ..GreedyOptions::default()
        };
        let p1 = greedy_plan(&l, &qubit_set(), &opts).unwrap();
        let p2 = greedy_plan(&l, &qubit_set(), &opts).unwrap();
        assert_eq!(p1.len(), p2.len());
        for (a, b) in p1.entries.iter().zip(p2.entries.iter()) {
            assert_eq!(a.obs_index, b.obs_index);
            assert_eq!(a.time.to_bits(), b.time.to_bits());
            assert_eq!(a.objective.to_bits(), b.objective.to_bits());
        }
    }

    #[test]
    fn greedy_objective_recomputes() {
        // the reported objective equals the recomputed orthogonal component
        let gen = LindbladGenerator::new(pauli(1), vec![]).unwrap();
        let l = generator_matrix(&gen).unwrap();
        let opts = GreedyOptions {
            horizon: Some(1.0),
            ..GreedyOptions::default()
        };
        let plan = greedy_plan(&l, &qubit_set(), &opts).unwrap();
        let mut span: Vec<CVec> = Vec::new();
        for e in &plan.entries {
            let pi_perp = complement_projector(4, &span).unwrap();
            let recomputed = pi_perp.dot(&e.evolved).norm_l2().powi(2);
            assert!(
                (recomputed - e.objective).abs() <= 1e-8 * (1.0 + e.objective),
                "objective {} vs recomputed {recomputed}",
                e.objective
            );
            span.push(e.evolved.clone());
        }
    }

    #[test]
    fn greedy_needs_gap_or_horizon() {
        let gen = LindbladGenerator::new(pauli(1), vec![]).unwrap();
        let l = generator_matrix(&gen).unwrap();
        // purely unitary: no spectral gap, horizon mandatory
        assert!(greedy_plan(&l, &qubit_set(), &GreedyOptions::default()).is_err());
    }
}
