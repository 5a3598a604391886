//! Command implementations: analyze, select, simulate, reconstruct, target,
//! genericity, and the two built-in reproduction pipelines.

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde_json::json;

use dqst::dynamics::{propagate, slowest_decay};
use dqst::linops::{hermitize, hs_norm, trace, unvec_op, vec_op, CMat, TolPolicy};
use dqst::measurement::{
    expectation_and_variance, sample_estimate_with_rng, MeasurementRecord, MEASUREMENT_CSV_HEADER,
};
use dqst::models::{basis_state_projector, ghz_state, gibbs_state, spin_chain, SpinChainParams};
use dqst::observability::{
    genericity_trials, kalman_report, target_reconstructable, ObservabilityOptions,
    ObservabilityReport,
};
use dqst::reconstruct::{
    design_matrix, estimate_state_with, state_squared_error, target_coefficients, target_estimate,
    DesignMatrix, DesignSolver, EstimateOptions, EvolvedObservable, TargetOptions,
};
use dqst::selection::{greedy_plan, FirstPick, GreedyOptions, MeasurementPlan, PLAN_CSV_HEADER};

use crate::config::{Config, FirstPickSpec};
use crate::emit::{matrix_rows, Emitter};
use crate::CliError;

pub struct Ctx<'a> {
    pub config: &'a Config,
    pub emitter: Emitter,
    pub seed: Option<u64>,
    pub rank_tol_override: Option<f64>,
    pub psd_project: bool,
}

impl Ctx<'_> {
    fn obs_options(&self) -> ObservabilityOptions {
        let mut opts = ObservabilityOptions::default();
        if let Some(t) = self
            .rank_tol_override
            .or(self.config.observability.rank_tol_abs)
        {
            opts.rank_policy = TolPolicy::Absolute(t);
        }
        if let Some(c) = self.config.observability.cluster_tol {
            opts.cluster_tol = Some(c);
        }
        opts
    }

    fn greedy_options(&self) -> GreedyOptions {
        let sel = &self.config.selection;
        let mut opts = GreedyOptions {
            horizon: sel.horizon,
            n_grid: sel.n_grid,
            ..GreedyOptions::default()
        };
        if let Some(s) = sel.stop_objective_rel {
            opts.stop_objective_rel = s;
        }
        if sel.first_pick == FirstPickSpec::Seeded {
            opts.first_pick = FirstPick::Seeded(self.seed.unwrap_or(0));
        }
        opts
    }

    fn report_json(&self, report: &ObservabilityReport, lambda2: Option<C64>) -> serde_json::Value {
        let s = report.summary();
        json!({
            "rank": s.rank,
            "d2": s.d2,
            "observable": s.observable,
            "k_stop": s.k_stop,
            "sv_kept": s.sv_kept,
            "sv_dropped": s.sv_dropped,
            "n_nonobs": s.n_nonobs,
            "lambda2": lambda2.map(|l| json!({"re": l.re, "im": l.im})),
        })
    }
}

pub fn analyze(ctx: &Ctx) -> Result<(), CliError> {
    let built = ctx.config.build_system()?;
    let report = kalman_report(&built.dynamics, &built.set, &ctx.obs_options())?;
    let lambda2 = match &built.generator {
        Some(l) => slowest_decay(l)?,
        None => None,
    };
    ctx.emitter
        .write_json("analyze.json", "analyze", ctx.report_json(&report, lambda2))?;
    if ctx.config.observability.emit_bases {
        ctx.emitter.write_csv(
            "obs_basis.csv",
            "i,j,re,im",
            &matrix_rows(&report.obs_basis),
        )?;
        ctx.emitter.write_csv(
            "non_obs_basis.csv",
            "i,j,re,im",
            &matrix_rows(&report.non_obs_basis),
        )?;
    }
    Ok(())
}

fn plan_for(ctx: &Ctx, built: &crate::config::BuiltSystem) -> Result<MeasurementPlan, CliError> {
    let l = built.generator.as_ref().ok_or_else(|| {
        CliError::Config("selection needs continuous dynamics (a generator)".into())
    })?;
    Ok(greedy_plan(l, &built.set, &ctx.greedy_options())?)
}

pub fn select(ctx: &Ctx) -> Result<(), CliError> {
    let built = ctx.config.build_system()?;
    let plan = plan_for(ctx, &built)?;
    ctx.emitter.write_csv(
        "plan.csv",
        PLAN_CSV_HEADER,
        &plan.csv_rows(built.set.labels()),
    )?;
    ctx.emitter.write_json(
        "plan_summary.json",
        "select",
        json!({
            "entries": plan.len(),
            "final_rank": plan.final_rank,
            "complete": plan.complete,
            "horizon": plan.horizon,
            "t_max": plan.max_time(),
        }),
    )?;
    Ok(())
}

fn simulate_records(
    ctx: &Ctx,
    built: &crate::config::BuiltSystem,
    plan: &MeasurementPlan,
    rho: &CMat,
    seed: u64,
) -> Result<(Vec<MeasurementRecord>, Vec<f64>), CliError> {
    let d = built.set.dim();
    let shots = ctx.config.measurement.shots;
    let mode = ctx.config.measurement.mode.to_mode();
    let labels = built.set.labels();
    let mut records = Vec::with_capacity(plan.len());
    let mut estimates = Vec::with_capacity(plan.len());
    for (k, entry) in plan.entries.iter().enumerate() {
        let xt = hermitize(&unvec_op(&entry.evolved, d)?);
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(k as u64 + 1);
        // measuring the identity carries no information: zero-variance,
        // recorded with zero shot cost
        let is_identity = Some(entry.obs_index) == built.set.identity_index();
        let est = if is_identity {
            dqst::measurement::ExpectationEstimate {
                value: trace(&xt.dot(rho)).re,
                shots: 0,
                exact_mean: trace(&xt.dot(rho)).re,
                variance: 0.0,
            }
        } else {
            sample_estimate_with_rng(&xt, rho, shots, &mut rng, mode)?
        };
        records.push(MeasurementRecord {
            obs_label: labels[entry.obs_index].clone(),
            time: entry.time,
            shots: est.shots,
            estimate: est.value,
            exact_mean: est.exact_mean,
            variance: est.variance,
            seed,
        });
        estimates.push(est.value);
    }
    Ok((records, estimates))
}

pub fn simulate(ctx: &Ctx) -> Result<(), CliError> {
    let seed = ctx.config.require_seed(ctx.seed)?;
    let built = ctx.config.build_system()?;
    let rho = ctx.config.build_state(&built)?;
    let plan = plan_for(ctx, &built)?;
    let (records, _) = simulate_records(ctx, &built, &plan, &rho, seed)?;
    let rows: Vec<String> = records.iter().map(|r| r.csv_row()).collect();
    ctx.emitter
        .write_csv("records.csv", MEASUREMENT_CSV_HEADER, &rows)?;
    Ok(())
}

pub fn reconstruct(ctx: &Ctx) -> Result<(), CliError> {
    let seed = ctx.config.require_seed(ctx.seed)?;
    let built = ctx.config.build_system()?;
    let rho = ctx.config.build_state(&built)?;
    let plan = plan_for(ctx, &built)?;
    let (records, estimates) = simulate_records(ctx, &built, &plan, &rho, seed)?;
    let design = design_matrix(&plan)?;
    let opts = EstimateOptions {
        rank_policy: ctx.obs_options().rank_policy,
        psd_project: ctx.psd_project,
    };
    let solver = DesignSolver::new(&design, &opts.rank_policy)?;
    let rec = estimate_state_with(&design, &solver, &estimates, &opts)?;
    let eps2 = state_squared_error(&rho, &rec.rho);

    let rows: Vec<String> = records.iter().map(|r| r.csv_row()).collect();
    ctx.emitter
        .write_csv("records.csv", MEASUREMENT_CSV_HEADER, &rows)?;
    ctx.emitter
        .write_csv("rho_estimate.csv", "i,j,re,im", &matrix_rows(&rec.rho))?;
    ctx.emitter.write_json(
        "reconstruct.json",
        "reconstruct",
        json!({
            "rank": rec.rank,
            "d2": design.matrix.ncols(),
            "condition_number": rec.condition_number,
            "residual": rec.residual,
            "trace_re": trace(&rec.rho).re,
            "eps2_rho": eps2,
            "shots": ctx.config.measurement.shots,
            "psd_projected": ctx.psd_project,
        }),
    )?;
    Ok(())
}

pub fn target(ctx: &Ctx) -> Result<(), CliError> {
    let built = ctx.config.build_system()?;
    let tblock = ctx
        .config
        .target
        .as_ref()
        .ok_or_else(|| CliError::Config("target command needs a [target] block".into()))?;
    let z = match (&tblock.z, &built.target) {
        (Some(spec), _) => spec.build("target.z")?,
        (None, Some(builtin)) => builtin.clone(),
        (None, None) => {
            return Err(CliError::Config(
                "target.z is required (this system has no built-in target)".into(),
            ))
        }
    };
    let l = built
        .generator
        .as_ref()
        .ok_or_else(|| CliError::Config("target needs continuous dynamics (a generator)".into()))?;
    let report = kalman_report(&built.dynamics, &built.set, &ctx.obs_options())?;
    let feasible = target_reconstructable(&report, &z, &ctx.obs_options().rank_policy)?;
    if !feasible {
        return Err(CliError::from(dqst::Error::TargetNotReconstructable {
            residual: dqst::observability::target_residual(&report, &z)?,
        }));
    }

    let xs = built.set.vectors()?;
    let identity_index = built.set.identity_index();
    let mut evolved = Vec::new();
    for &t in &tblock.times {
        let p = propagate(l, t)?;
        for (i, xv) in xs.iter().enumerate() {
            if Some(i) == identity_index {
                continue;
            }
            evolved.push(EvolvedObservable {
                obs_index: i,
                time: t,
                vector: p.apply(xv),
            });
        }
    }
    let topts = TargetOptions {
        minimal_support: tblock.minimal_support,
        residual_tol_rel: tblock.residual_tol_rel.unwrap_or(1e-8),
        rank_policy: ctx.obs_options().rank_policy,
    };
    let tc = target_coefficients(&evolved, &z, &report, &topts)?;

    // optional estimate when a state is configured
    let labels = built.set.labels();
    let mut z_info = json!(null);
    if ctx.config.state.is_some() {
        let seed = ctx.config.require_seed(ctx.seed)?;
        let rho = ctx.config.build_state(&built)?;
        let z_exact = trace(&z.dot(&rho)).re;
        let d = built.set.dim();
        let shots = ctx.config.measurement.shots;
        let mode = ctx.config.measurement.mode.to_mode();
        let mut estimates = Vec::new();
        for (k, &(obs_index, time)) in tc.entries.iter().enumerate() {
            let e = evolved
                .iter()
                .find(|e| e.obs_index == obs_index && e.time == time)
                .expect("entry from candidates");
            let xt = hermitize(&unvec_op(&e.vector, d)?);
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(k as u64 + 1);
            estimates.push(sample_estimate_with_rng(&xt, &rho, shots, &mut rng, mode)?.value);
        }
        let z_hat = target_estimate(&tc.alphas, &estimates)?;
        z_info = json!({
            "z_exact": z_exact,
            "z_hat": z_hat,
            "eps2_z": (z_exact - z_hat).powi(2),
            "shots": shots,
        });
    }

    let entries: Vec<serde_json::Value> = tc
        .entries
        .iter()
        .zip(tc.alphas.iter())
        .map(|(&(obs_index, time), &alpha)| {
            json!({
                "obs_index": obs_index,
                "label": labels[obs_index],
                "time": time,
                "alpha": alpha,
            })
        })
        .collect();
    ctx.emitter.write_json(
        "target.json",
        "target",
        json!({
            "feasible": true,
            "rank": report.rank,
            "d2": report.d2,
            "coefficients": entries,
            "residual": tc.residual,
            "z_norm": hs_norm(&z),
            "estimate": z_info,
        }),
    )?;
    Ok(())
}

pub fn genericity(ctx: &Ctx) -> Result<(), CliError> {
    let seed = ctx.config.require_seed(ctx.seed)?;
    let gblock =
        ctx.config.genericity.as_ref().ok_or_else(|| {
            CliError::Config("genericity command needs a [genericity] block".into())
        })?;
    let model = ctx
        .config
        .model
        .as_ref()
        .ok_or_else(|| CliError::Config("genericity randomizes a [model] block".into()))?;
    let include_identity = ctx.config.observability.include_identity;
    let opts = ctx.obs_options();

    let summary = match model.name.as_str() {
        "spin_chain" => {
            let n = model.n_sites.unwrap_or(4);
            let eta = model.eta.clone().unwrap_or_else(|| vec![0.0; n]);
            let builder = move |rng: &mut ChaCha12Rng| {
                let mut p = SpinChainParams::uniform(n, 1.0, 0.0);
                p.eta = eta.clone();
                for v in p
                    .alpha
                    .iter_mut()
                    .chain(p.beta.iter_mut())
                    .chain(p.gamma.iter_mut())
                    .chain(p.delta.iter_mut())
                    .chain(p.epsilon.iter_mut())
                {
                    *v = rng.sample(StandardNormal);
                }
                let (gen, set) = spin_chain(&p)?;
                let l = dqst::dynamics::generator_matrix(&gen)?;
                let set = if include_identity {
                    set
                } else {
                    set.without_identity()?
                };
                Ok((l, set))
            };
            genericity_trials(builder, gblock.n_trials, seed, &opts)
        }
        "dissipative_nqubit" => {
            let n_qubits = model
                .n_qubits
                .ok_or_else(|| CliError::Config("dissipative_nqubit needs n_qubits".into()))?;
            let m = (1usize << n_qubits).pow(2) - 1;
            let builder = move |rng: &mut ChaCha12Rng| {
                let diag: Vec<f64> = (0..m)
                    .map(|_| {
                        let v: f64 = rng.sample(StandardNormal);
                        v.abs()
                    })
                    .collect();
                let probe_seed: u64 = rng.gen();
                let spec = dqst::models::DissipativeQubitSpec {
                    n_qubits,
                    gks_diagonal: diag,
                    probe: dqst::models::ProbeSpec::Seeded(probe_seed),
                };
                let (gen, set) = dqst::models::dissipative_nqubit(&spec)?;
                let l = dqst::dynamics::generator_matrix(&gen)?;
                let set = if include_identity {
                    set
                } else {
                    set.without_identity()?
                };
                Ok((l, set))
            };
            genericity_trials(builder, gblock.n_trials, seed, &opts)
        }
        other => {
            return Err(CliError::Config(format!(
                "genericity is defined for spin_chain and dissipative_nqubit, not '{other}'"
            )))
        }
    };
    ctx.emitter.write_json(
        "genericity.json",
        "genericity",
        serde_json::to_value(&summary).expect("summary serializes"),
    )?;
    Ok(())
}

fn clt_scaling_rows(
    design: &DesignMatrix,
    solver: &DesignSolver,
    plan: &MeasurementPlan,
    d: usize,
    states: &[(&str, CMat)],
    shots_grid: &[f64],
    n_seeds: usize,
    master_seed: u64,
) -> Result<Vec<String>, CliError> {
    let est_opts = EstimateOptions::default();
    let mut rows = Vec::new();
    let mut stream = 0u64;
    for (name, rho) in states {
        let per_row: Vec<(f64, f64)> = plan
            .entries
            .iter()
            .map(|e| {
                let xt = hermitize(&unvec_op(&e.evolved, d)?);
                Ok(expectation_and_variance(&xt, rho)?)
            })
            .collect::<Result<_, CliError>>()?;
        for &n in shots_grid {
            let mut acc = 0.0;
            for _ in 0..n_seeds {
                stream += 1;
                let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
                rng.set_stream(stream);
                let y: Vec<f64> = per_row
                    .iter()
                    .map(|&(y, var)| {
                        let z: f64 = rng.sample(StandardNormal);
                        y + z * (var / n).sqrt()
                    })
                    .collect();
                let rec = estimate_state_with(design, solver, &y, &est_opts)?;
                acc += state_squared_error(rho, &rec.rho);
            }
            rows.push(format!("{name},{n:.6e},{:.12e}", acc / n_seeds as f64));
        }
    }
    Ok(rows)
}

pub fn reproduce_spin_chain(ctx: &Ctx) -> Result<(), CliError> {
    let seed = ctx.seed.or(ctx.config.seed).unwrap_or(20260809);
    let emitter = ctx.emitter.with_seed(seed);
    let ctx = &Ctx {
        config: ctx.config,
        emitter,
        seed: Some(seed),
        rank_tol_override: ctx.rank_tol_override,
        psd_project: ctx.psd_project,
    };
    let rep = &ctx.config.reproduce;
    let opts = ctx.obs_options();

    // observability of the Hamiltonian-only chain, counted over the 15
    // physical two-site operators (the reference convention omits the
    // identity row)
    let (gen_h, set) = spin_chain(&SpinChainParams::hamiltonian_only())?;
    let l_h = dqst::dynamics::generator_matrix(&gen_h)?;
    let x15 = set.without_identity()?;
    let report_h = kalman_report(&l_h, &x15, &opts)?;
    ctx.emitter.write_json(
        "analyze_hamiltonian.json",
        "reproduce spin-chain",
        ctx.report_json(&report_h, None),
    )?;

    // genericity over all Hamiltonian coefficients
    let builder = |rng: &mut ChaCha12Rng| {
        let mut p = SpinChainParams::hamiltonian_only();
        for v in p
            .alpha
            .iter_mut()
            .chain(p.beta.iter_mut())
            .chain(p.gamma.iter_mut())
            .chain(p.delta.iter_mut())
            .chain(p.epsilon.iter_mut())
        {
            *v = rng.sample(StandardNormal);
        }
        let (gen, set) = spin_chain(&p)?;
        let l = dqst::dynamics::generator_matrix(&gen)?;
        Ok((l, set.without_identity()?))
    };
    let summary = genericity_trials(builder, rep.n_trials, seed, &opts);
    ctx.emitter.write_json(
        "genericity.json",
        "reproduce spin-chain",
        serde_json::to_value(&summary).expect("serializes"),
    )?;

    // dissipative chain at unit amplitude: observability and slow eigenvalue
    let (gen_d, set_d) = spin_chain(&SpinChainParams::dissipative(1.0))?;
    let l_d = dqst::dynamics::generator_matrix(&gen_d)?;
    let report_d = kalman_report(&l_d, &set_d, &opts)?;
    let lam_unit = slowest_decay(&l_d)?;
    ctx.emitter.write_json(
        "analyze_dissipative.json",
        "reproduce spin-chain",
        ctx.report_json(&report_d, lam_unit),
    )?;

    // time selection and error scaling in the slow-dissipation regime
    let (gen_s, set_s) = spin_chain(&SpinChainParams::dissipative(rep.eta_slow))?;
    let l_s = dqst::dynamics::generator_matrix(&gen_s)?;
    let lam2 = slowest_decay(&l_s)?
        .ok_or_else(|| CliError::Numerical("slow-regime generator has no spectral gap".into()))?;
    let tau = 1.0 / lam2.re.abs();
    let plan = greedy_plan(&l_s, &set_s, &ctx.greedy_options())?;
    ctx.emitter
        .write_csv("plan.csv", PLAN_CSV_HEADER, &plan.csv_rows(set_s.labels()))?;

    let design = design_matrix(&plan)?;
    let solver = DesignSolver::new(&design, &opts.rank_policy)?;
    let h_ones = SpinChainParams::hamiltonian_only().hamiltonian()?;
    let states = [
        ("rho_S", basis_state_projector(&[0, 0, 0, 0])?),
        ("rho_GHZ", ghz_state(4)?),
        ("rho_Gibbs", gibbs_state(&h_ones, 1.0)?),
    ];
    let shots_grid = rep
        .shots_grid
        .clone()
        .unwrap_or_else(|| vec![1e2, 1e3, 1e4, 1e5, 1e6]);
    let rows = clt_scaling_rows(
        &design,
        &solver,
        &plan,
        16,
        &states,
        &shots_grid,
        rep.n_seeds,
        seed,
    )?;
    ctx.emitter
        .write_csv("error_scaling_state.csv", "state,shots,eps2_rho", &rows)?;

    ctx.emitter.write_json(
        "summary.json",
        "reproduce spin-chain",
        json!({
            "hamiltonian_only": { "rank": report_h.rank, "n_nonobs": report_h.d2 - report_h.rank },
            "genericity": { "n_trials": summary.n_trials, "n_observable": summary.n_observable },
            "dissipative_unit_eta": {
                "rank": report_d.rank,
                "observable": report_d.observable,
                "lambda2": lam_unit.map(|l| json!({"re": l.re, "im": l.im})),
            },
            "slow_regime": {
                "eta": rep.eta_slow,
                "lambda2": {"re": lam2.re, "im": lam2.im},
                "tau": tau,
                "plan_rank": plan.final_rank,
                "plan_entries": plan.len(),
                "t_max": plan.max_time(),
                "t_max_below_2tau": plan.max_time() < 2.0 * tau,
            },
        }),
    )?;
    Ok(())
}

pub fn reproduce_nv_center(ctx: &Ctx) -> Result<(), CliError> {
    let seed = ctx.seed.or(ctx.config.seed).unwrap_or(20260809);
    let emitter = ctx.emitter.with_seed(seed);
    let ctx = &Ctx {
        config: ctx.config,
        emitter,
        seed: Some(seed),
        rank_tol_override: ctx.rank_tol_override,
        psd_project: ctx.psd_project,
    };
    let rep = &ctx.config.reproduce;
    let opts = ctx.obs_options();

    let (gen, set, z) = dqst::models::nv_center(&dqst::models::NvParams::default())?;
    let l = dqst::dynamics::generator_matrix(&gen)?;
    let report = kalman_report(&l, &set, &opts)?;
    ctx.emitter.write_json(
        "analyze.json",
        "reproduce nv-center",
        ctx.report_json(&report, slowest_decay(&l)?),
    )?;

    let x_el = vec_op(&set.observables()[1])?;
    let times = [0.0, 50.0];
    let evolved: Vec<EvolvedObservable> = times
        .iter()
        .map(|&t| {
            Ok(EvolvedObservable {
                obs_index: 1,
                time: t,
                vector: propagate(&l, t)?.apply(&x_el),
            })
        })
        .collect::<Result<_, CliError>>()?;
    let tc = target_coefficients(&evolved, &z, &report, &TargetOptions::default())?;
    ctx.emitter.write_json(
        "target.json",
        "reproduce nv-center",
        json!({
            "feasible": true,
            "times": times,
            "alphas": tc.alphas,
            "residual": tc.residual,
            "z_norm": hs_norm(&z),
        }),
    )?;

    let states = [
        ("rho_S", dqst::models::nv_separable_state()),
        ("rho_GHZ", ghz_state(3)?),
        ("rho_Gibbs", gibbs_state(&gen.hamiltonian, 1.0)?),
    ];
    let shots_grid = rep
        .shots_grid
        .clone()
        .unwrap_or_else(|| vec![1e2, 1e3, 1e4, 1e5, 1e6]);
    let mut rows = Vec::new();
    let mut stream = 0u64;
    for (name, rho) in &states {
        let z_exact = trace(&z.dot(rho)).re;
        let per_row: Vec<(f64, f64)> = evolved
            .iter()
            .map(|e| {
                let xt = hermitize(&unvec_op(&e.vector, 8)?);
                Ok(expectation_and_variance(&xt, rho)?)
            })
            .collect::<Result<_, CliError>>()?;
        for &n in &shots_grid {
            let mut acc = 0.0;
            for _ in 0..rep.n_seeds {
                stream += 1;
                let mut rng = ChaCha12Rng::seed_from_u64(seed);
                rng.set_stream(stream);
                let yh: Vec<f64> = per_row
                    .iter()
                    .map(|&(y, var)| {
                        let zn: f64 = rng.sample(StandardNormal);
                        y + zn * (var / n).sqrt()
                    })
                    .collect();
                let z_hat = target_estimate(&tc.alphas, &yh)?;
                acc += (z_exact - z_hat).powi(2);
            }
            rows.push(format!("{name},{n:.6e},{:.12e}", acc / rep.n_seeds as f64));
        }
    }
    ctx.emitter
        .write_csv("error_scaling_target.csv", "state,shots,eps2_z", &rows)?;
    ctx.emitter.write_json(
        "summary.json",
        "reproduce nv-center",
        json!({
            "rank": report.rank,
            "d2": report.d2,
            "alphas": tc.alphas,
            "residual": tc.residual,
        }),
    )?;
    Ok(())
}
