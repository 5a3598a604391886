//! Simulated data acquisition: spectral decompositions of observables,
//! exact expectations and variances, and seeded stochastic estimates from
//! finite shot counts.

use ndarray_linalg::{Eigh, UPLO};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linops::{require_hermitian, trace, CMat, HERMITICITY_TOL};

/// Distinct measurement outcomes with their spectral projectors.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub outcomes: Vec<f64>,
    pub projectors: Vec<CMat>,
}

/// Eigenvalues within this distance collapse into one outcome.
pub const OUTCOME_CLUSTER_TOL: f64 = 1e-8;

pub fn spectral(x: &CMat) -> Result<SpectralDecomposition> {
    crate::ensure_serial_blas();
    require_hermitian(x, HERMITICITY_TOL)?;
    let (evals, vecs) = x.eigh(UPLO::Lower)?;
    let d = x.nrows();
    let mut outcomes: Vec<f64> = Vec::new();
    let mut projectors: Vec<CMat> = Vec::new();
    let mut k = 0;
    while k < evals.len() {
        // eigh sorts ascending, so clustering is a linear sweep
        let mut j = k;
        while j + 1 < evals.len() && (evals[j + 1] - evals[j]).abs() < OUTCOME_CLUSTER_TOL {
            j += 1;
        }
        let mut proj = CMat::zeros((d, d));
        let mut mean = 0.0;
        for m in k..=j {
            // eigh returns the eigenvectors of the transpose for row-major
            // complex input; the true eigenvector is the conjugated column
            let v = vecs.column(m);
            for r in 0..d {
                for c in 0..d {
                    proj[[r, c]] += v[r].conj() * v[c];
                }
            }
            mean += evals[m];
        }
        outcomes.push(mean / (j - k + 1) as f64);
        projectors.push(proj);
        k = j + 1;
    }
    Ok(SpectralDecomposition {
        outcomes,
        projectors,
    })
}

fn check_state(rho: &CMat) -> Result<()> {
    require_hermitian(rho, HERMITICITY_TOL)
        .map_err(|e| Error::InvalidState(format!("density matrix: {e}")))?;
    let tr = trace(rho);
    if (tr - C64::new(1.0, 0.0)).norm() > 1e-8 {
        return Err(Error::InvalidState(format!(
            "density matrix trace {tr} deviates from 1"
        )));
    }
    Ok(())
}

/// Exact mean `tr(X rho)` and single-shot variance
/// `tr(X^2 rho) - tr(X rho)^2`, clamped at zero.
pub fn expectation_and_variance(x: &CMat, rho: &CMat) -> Result<(f64, f64)> {
    if x.dim() != rho.dim() {
        return Err(Error::DimensionMismatch(
            "observable and state dimensions differ".into(),
        ));
    }
    check_state(rho)?;
    let y = trace(&x.dot(rho)).re;
    let second = trace(&x.dot(x).dot(rho)).re;
    let var = (second - y * y).max(0.0);
    Ok((y, var))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingMode {
    /// Draw `shots` projective outcomes and average.
    Exact,
    /// Draw one Gaussian sample from `N(y, sigma^2 / shots)`.
    Clt,
}

#[derive(Debug, Clone, Copy)]
pub struct ExpectationEstimate {
    pub value: f64,
    pub shots: u64,
    pub exact_mean: f64,
    pub variance: f64,
}

/// Stochastic estimate of `tr(X rho)` from a finite number of shots,
/// deterministic given the seed.
pub fn sample_estimate(
    x: &CMat,
    rho: &CMat,
    shots: u64,
    seed: u64,
    mode: SamplingMode,
) -> Result<ExpectationEstimate> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    sample_estimate_with_rng(x, rho, shots, &mut rng, mode)
}

/// Variant taking an external stream, for batch pipelines that derive
/// per-call streams from one master seed.
pub fn sample_estimate_with_rng<R: Rng>(
    x: &CMat,
    rho: &CMat,
    shots: u64,
    rng: &mut R,
    mode: SamplingMode,
) -> Result<ExpectationEstimate> {
    if shots == 0 {
        return Err(Error::InvalidArgument("shots must be >= 1".into()));
    }
    let (y, var) = expectation_and_variance(x, rho)?;
    let value = match mode {
        SamplingMode::Clt => {
            if var == 0.0 {
                y
            } else {
                let z: f64 = rng.sample(StandardNormal);
                y + z * (var / shots as f64).sqrt()
            }
        }
        SamplingMode::Exact => {
            let dec = spectral(x)?;
            let mut probs: Vec<f64> = dec
                .projectors
                .iter()
                .map(|p| trace(&p.dot(rho)).re)
                .collect();
            for p in &probs {
                if *p < -1e-9 {
                    return Err(Error::InvalidState(format!(
                        "negative outcome probability {p:.3e}"
                    )));
                }
            }
            let total: f64 = probs.iter().map(|p| p.max(0.0)).sum();
            for p in probs.iter_mut() {
                *p = p.max(0.0) / total;
            }
            if probs.len() == 1 {
                dec.outcomes[0]
            } else {
                let mut cdf = Vec::with_capacity(probs.len());
                let mut acc = 0.0;
                for p in &probs {
                    acc += p;
                    cdf.push(acc);
                }
                let mut sum = 0.0;
                for _ in 0..shots {
                    let u: f64 = rng.gen();
                    let k = cdf.partition_point(|&c| c < u).min(dec.outcomes.len() - 1);
                    sum += dec.outcomes[k];
                }
                sum / shots as f64
            }
        }
    };
    Ok(ExpectationEstimate {
        value,
        shots,
        exact_mean: y,
        variance: var,
    })
}

/// One row of the measurement-record table.
#[derive(Debug, Clone)]
pub struct MeasurementRecord {
    pub obs_label: String,
    pub time: f64,
    pub shots: u64,
    pub estimate: f64,
    pub exact_mean: f64,
    pub variance: f64,
    pub seed: u64,
}

pub const MEASUREMENT_CSV_HEADER: &str = "obs_label,time,shots,estimate,exact_mean,variance,seed";

impl MeasurementRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.12e},{},{:.12e},{:.12e},{:.12e},{}",
            self.obs_label,
            self.time,
            self.shots,
            self.estimate,
            self.exact_mean,
            self.variance,
            self.seed
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::{eye, hermiticity_error, pauli, random_hermitian};
    use rand::SeedableRng;

    fn ket0() -> CMat {
        let mut m = CMat::zeros((2, 2));
        m[[0, 0]] = C64::new(1.0, 0.0);
        m
    }

    #[test]
    fn spectral_sigma_z() {
        let dec = spectral(&pauli(3)).unwrap();
        assert_eq!(dec.outcomes.len(), 2);
        // ascending order: -1 then +1
        assert!((dec.outcomes[0] + 1.0).abs() < 1e-12);
        assert!((dec.outcomes[1] - 1.0).abs() < 1e-12);
        assert!((dec.projectors[1][[0, 0]] - C64::new(1.0, 0.0)).norm() < 1e-12);

        let di = spectral(&eye(3)).unwrap();
        assert_eq!(di.outcomes.len(), 1);
        assert!((di.outcomes[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spectral_reconstructs_random_hermitian() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(1);
        for _ in 0..10 {
            let x = random_hermitian(4, &mut rng);
            let dec = spectral(&x).unwrap();
            let mut recon = CMat::zeros((4, 4));
            let mut psum = CMat::zeros((4, 4));
            for (a, p) in dec.outcomes.iter().zip(dec.projectors.iter()) {
                recon = recon + p.mapv(|z| z * C64::new(*a, 0.0));
                psum = psum + p;
                assert!(hermiticity_error(p) < 1e-10);
            }
            assert!((&recon - &x).iter().all(|z| z.norm() < 1e-9));
            assert!((&psum - &eye(4)).iter().all(|z| z.norm() < 1e-10));
            // orthogonality of distinct projectors
            for i in 0..dec.projectors.len() {
                for j in 0..i {
                    let prod = dec.projectors[i].dot(&dec.projectors[j]);
                    assert!(prod.iter().all(|z| z.norm() < 1e-9));
                }
            }
        }
        let mut nh = CMat::zeros((2, 2));
        nh[[0, 1]] = C64::new(1.0, 0.0);
        assert!(spectral(&nh).is_err());
    }

    #[test]
    fn expectation_examples() {
        let half = eye(2).mapv(|z| z * 0.5);
        let (y, v) = expectation_and_variance(&eye(2), &half).unwrap();
        assert!((y - 1.0).abs() < 1e-14 && v.abs() < 1e-14);
        let (y, v) = expectation_and_variance(&pauli(3), &half).unwrap();
        assert!(y.abs() < 1e-14 && (v - 1.0).abs() < 1e-14);
        let (y, v) = expectation_and_variance(&pauli(1), &ket0()).unwrap();
        assert!(y.abs() < 1e-14 && (v - 1.0).abs() < 1e-14);
        // bad trace rejected
        assert!(expectation_and_variance(&pauli(3), &eye(2)).is_err());
    }

    #[test]
    fn estimates_deterministic_and_exact_cases() {
        let e1 = sample_estimate(&eye(2), &ket0(), 100, 7, SamplingMode::Exact).unwrap();
        let e2 = sample_estimate(&eye(2), &ket0(), 100, 8, SamplingMode::Clt).unwrap();
        assert_eq!(e1.value, 1.0);
        assert_eq!(e2.value, 1.0);

        let z1 = sample_estimate(&pauli(3), &ket0(), 17, 3, SamplingMode::Exact).unwrap();
        assert_eq!(z1.value, 1.0); // deterministic outcome

        let a = sample_estimate(&pauli(1), &ket0(), 500, 42, SamplingMode::Exact).unwrap();
        let b = sample_estimate(&pauli(1), &ket0(), 500, 42, SamplingMode::Exact).unwrap();
        assert_eq!(a.value, b.value);
        assert!(sample_estimate(&pauli(1), &ket0(), 0, 1, SamplingMode::Clt).is_err());
    }

    #[test]
    fn estimator_moments_match_between_modes() {
        // X = sigma_x on |0><0|: outcomes +-1 with p = 1/2 each, so
        // var = 1 and the estimator variance is 1/P in both modes.
        let shots = 10_000u64;
        let n_seeds = 200;
        let mut mean = [0.0f64; 2];
        let mut second = [0.0f64; 2];
        for seed in 0..n_seeds {
            for (k, mode) in [SamplingMode::Exact, SamplingMode::Clt].iter().enumerate() {
                let e = sample_estimate(&pauli(1), &ket0(), shots, seed as u64, *mode).unwrap();
                mean[k] += e.value;
                second[k] += e.value * e.value;
            }
        }
        for k in 0..2 {
            mean[k] /= n_seeds as f64;
            second[k] /= n_seeds as f64;
        }
        let var_exact = second[0] - mean[0] * mean[0];
        let var_clt = second[1] - mean[1] * mean[1];
        let expect = 1.0 / shots as f64;
        // 3-sigma band for the sample variance of ~N(0, 1/P) over 200 seeds
        for v in [var_exact, var_clt] {
            assert!(
                (v - expect).abs() < 0.3 * expect + 3.0 * expect * (2.0 / n_seeds as f64).sqrt(),
                "variance {v} vs expected {expect}"
            );
        }
        assert!(mean[0].abs() < 5.0 / ((shots as f64) * n_seeds as f64).sqrt());
        assert!(mean[1].abs() < 5.0 / ((shots as f64) * n_seeds as f64).sqrt());
    }

    #[test]
    fn probabilities_sum_to_one() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(5);
        let x = random_hermitian(3, &mut rng);
        let dec = spectral(&x).unwrap();
        let rho = eye(3).mapv(|z| z / 3.0);
        let total: f64 = dec.projectors.iter().map(|p| trace(&p.dot(&rho)).re).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }
}
