//! Built-in physical systems: a spin chain with local fields, nearest
//! neighbor couplings and raising/lowering dissipation; a reduced
//! electron-nuclear model of an optically pumped defect center; standard
//! test states; and the purely dissipative n-qubit construction with its
//! Psi and R matrices.

use ndarray::prelude::*;
use ndarray_linalg::{Eigh, UPLO};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::dynamics::{generator_matrix, gks_to_lindblad, GksSpec, LindbladGenerator};
use crate::error::{Error, Result};
use crate::linops::{
    eye, kron, kron_list, pauli, pauli_basis, sigma_minus, sigma_plus, site_operator, trace,
    vec_op, BasisNormalization, CMat, OperatorBasis,
};
use crate::observability::MeasurementSet;

/// Chain of spin-1/2 sites with per-site x/y/z fields, nearest-neighbor
/// xx and zz couplings, and per-site raising/lowering noise of amplitude
/// `eta`.
#[derive(Debug, Clone)]
pub struct SpinChainParams {
    pub n_sites: usize,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub delta: Vec<f64>,
    pub epsilon: Vec<f64>,
    pub eta: Vec<f64>,
}

impl SpinChainParams {
    /// All field and coupling coefficients 1, no dissipation.
    pub fn hamiltonian_only() -> Self {
        Self::uniform(4, 1.0, 0.0)
    }

    /// All field and coupling coefficients 1, dissipation amplitude `eta`.
    pub fn dissipative(eta: f64) -> Self {
        Self::uniform(4, 1.0, eta)
    }

    pub fn uniform(n_sites: usize, coeff: f64, eta: f64) -> Self {
        Self {
            n_sites,
            alpha: vec![coeff; n_sites],
            beta: vec![coeff; n_sites],
            gamma: vec![coeff; n_sites],
            delta: vec![coeff; n_sites.saturating_sub(1)],
            epsilon: vec![coeff; n_sites.saturating_sub(1)],
            eta: vec![eta; n_sites],
        }
    }

    fn validate(&self) -> Result<()> {
        let n = self.n_sites;
        if n < 2 {
            return Err(Error::InvalidArgument(
                "chain needs at least 2 sites".into(),
            ));
        }
        for (name, v, want) in [
            ("alpha", &self.alpha, n),
            ("beta", &self.beta, n),
            ("gamma", &self.gamma, n),
            ("delta", &self.delta, n - 1),
            ("epsilon", &self.epsilon, n - 1),
            ("eta", &self.eta, n),
        ] {
            if v.len() != want {
                return Err(Error::InvalidArgument(format!(
                    "{name} has length {}, expected {want}",
                    v.len()
                )));
            }
        }
        if self.eta.iter().any(|e| *e < 0.0) {
            return Err(Error::InvalidArgument(
                "negative dissipation amplitude".into(),
            ));
        }
        Ok(())
    }

    pub fn hamiltonian(&self) -> Result<CMat> {
        self.validate()?;
        let n = self.n_sites;
        let d = 1usize << n;
        let mut h = CMat::zeros((d, d));
        for i in 0..n {
            let add = |h: &mut CMat, coeff: f64, op: CMat| {
                if coeff != 0.0 {
                    *h = &*h + op.mapv(|z| z * coeff);
                }
            };
            add(&mut h, self.alpha[i], site_operator(&pauli(1), i, n));
            add(&mut h, self.beta[i], site_operator(&pauli(2), i, n));
            add(&mut h, self.gamma[i], site_operator(&pauli(3), i, n));
        }
        for i in 0..n - 1 {
            if self.delta[i] != 0.0 {
                let xx = site_operator(&pauli(1), i, n).dot(&site_operator(&pauli(1), i + 1, n));
                h = h + xx.mapv(|z| z * self.delta[i]);
            }
            if self.epsilon[i] != 0.0 {
                let zz = site_operator(&pauli(3), i, n).dot(&site_operator(&pauli(3), i + 1, n));
                h = h + zz.mapv(|z| z * self.epsilon[i]);
            }
        }
        Ok(h)
    }
}

/// Builds the chain generator and the two-site measurement set on the
/// middle pair: all sixteen Pauli products (identity included) on sites
/// `ceil(n/2)` and `ceil(n/2)+1` in 1-based counting.
pub fn spin_chain(params: &SpinChainParams) -> Result<(LindbladGenerator, MeasurementSet)> {
    let h = params.hamiltonian()?;
    let n = params.n_sites;
    let mut noise = Vec::new();
    for i in 0..n {
        if params.eta[i] > 0.0 {
            noise.push(site_operator(&sigma_plus(), i, n).mapv(|z| z * params.eta[i]));
        }
    }
    for i in 0..n {
        if params.eta[i] > 0.0 {
            noise.push(site_operator(&sigma_minus(), i, n).mapv(|z| z * params.eta[i]));
        }
    }
    let gen = LindbladGenerator::new(h, noise)?;

    let left = (n - 1) / 2; // 0-based site of the middle pair
    let names = ["I", "X", "Y", "Z"];
    let mut obs = Vec::with_capacity(16);
    let mut labels = Vec::with_capacity(16);
    for u in 0..4 {
        for q in 0..4 {
            let op = site_operator(&pauli(u), left, n).dot(&site_operator(&pauli(q), left + 1, n));
            obs.push(op);
            labels.push(format!("{}{}", names[u], names[q]));
        }
    }
    let set = MeasurementSet::new(obs, labels)?;
    Ok((gen, set))
}

/// Reduced electron-nuclear model of an optically pumped defect center:
/// 8-dimensional space with factor order (energy level, electron spin,
/// nuclear spin), spin-preserving optical pumping and decay between the
/// energy levels, and hyperfine coupling between electron and nucleus.
/// Frequencies are in MHz and times in microseconds (MHz = 1/us, no 2pi).
#[derive(Debug, Clone)]
pub struct NvParams {
    pub d_e: f64,
    pub d_g: f64,
    pub q: f64,
    pub a_e: f64,
    pub a_g: f64,
    /// MHz/G
    pub g_el: f64,
    /// MHz/G
    pub g_n: f64,
    /// Static field in Gauss. The reference coefficients are reproduced at
    /// zero field.
    pub b_field: f64,
    pub gamma_d: f64,
    pub gamma_p: f64,
}

impl Default for NvParams {
    fn default() -> Self {
        Self {
            d_e: 1420.0,
            d_g: 2870.0,
            q: 4.945,
            a_e: 40.0,
            a_g: 2.2,
            g_el: 2.8,
            g_n: 3.08e-4,
            b_field: 0.0,
            gamma_d: 77.0,
            gamma_p: 70.0,
        }
    }
}

fn ket(i: usize) -> CMat {
    let mut m = CMat::zeros((2, 2));
    m[[i, i]] = C64::new(1.0, 0.0);
    m
}

fn transfer(to: usize, from: usize) -> CMat {
    let mut m = CMat::zeros((2, 2));
    m[[to, from]] = C64::new(1.0, 0.0);
    m
}

impl NvParams {
    fn validate(&self) -> Result<()> {
        if self.gamma_d < 0.0 || self.gamma_p < 0.0 {
            return Err(Error::InvalidArgument("negative rate".into()));
        }
        Ok(())
    }

    /// Spin block `D Sz^2 x 1 + Q 1 x Sz^2 + B(g_el Sz x 1 + g_n 1 x Sz)
    /// + A/2 (sx sx + sy sy + 2 Sz Sz)` with `Sz = (1 - sigma_z)/2`.
    fn spin_block(&self, d_level: f64, a_level: f64) -> CMat {
        let sz = (eye(2) - pauli(3)).mapv(|z| z * 0.5);
        let sz2 = sz.dot(&sz);
        let mut h = kron(&sz2, &eye(2)).mapv(|z| z * d_level);
        h = h + kron(&eye(2), &sz2).mapv(|z| z * self.q);
        if self.b_field != 0.0 {
            h = h + kron(&sz, &eye(2)).mapv(|z| z * self.b_field * self.g_el);
            h = h + kron(&eye(2), &sz).mapv(|z| z * self.b_field * self.g_n);
        }
        let flip = kron(&pauli(1), &pauli(1)) + kron(&pauli(2), &pauli(2));
        h = h + flip.mapv(|z| z * (0.5 * a_level));
        h = h + kron(&sz, &sz).mapv(|z| z * a_level);
        h
    }
}

/// Builds the defect-center generator, the measurement set
/// `{identity, electron sigma_z}`, and the target observable
/// (nuclear sigma_z).
pub fn nv_center(params: &NvParams) -> Result<(LindbladGenerator, MeasurementSet, CMat)> {
    params.validate()?;
    // ground level on index 0, excited on index 1 of the energy factor
    let h = kron(&ket(0), &params.spin_block(params.d_g, params.a_g))
        + kron(&ket(1), &params.spin_block(params.d_e, params.a_e));
    let gd = params.gamma_d.sqrt();
    let gp = params.gamma_p.sqrt();
    let jump = |rate: f64, to: usize, from: usize, spin: usize| -> CMat {
        kron(&kron(&transfer(to, from), &ket(spin)), &eye(2)).mapv(|z| z * rate)
    };
    let noise = vec![
        jump(gd, 0, 1, 0), // decay, spin up
        jump(gd, 0, 1, 1), // decay, spin down
        jump(gp, 1, 0, 0), // pump, spin up
        jump(gp, 1, 0, 1), // pump, spin down
    ];
    let gen = LindbladGenerator::new(h, noise)?;
    let x_el = kron_list(&[eye(2), pauli(3), eye(2)]);
    let set = MeasurementSet::new(vec![eye(8), x_el], vec!["I".into(), "electron_sz".into()])?;
    let z = kron(&eye(4), &pauli(3));
    Ok((gen, set, z))
}

/// Projector onto a computational basis state given by its bit string.
pub fn basis_state_projector(bits: &[u8]) -> Result<CMat> {
    if bits.is_empty() {
        return Err(Error::InvalidArgument("empty bit string".into()));
    }
    let mut idx = 0usize;
    for &b in bits {
        if b > 1 {
            return Err(Error::InvalidArgument("bits must be 0/1".into()));
        }
        idx = idx * 2 + b as usize;
    }
    let d = 1usize << bits.len();
    let mut rho = CMat::zeros((d, d));
    rho[[idx, idx]] = C64::new(1.0, 0.0);
    Ok(rho)
}

/// `|psi><psi|` with `|psi> = (|0...0> + |1...1>)/sqrt(2)`.
pub fn ghz_state(n_qubits: usize) -> Result<CMat> {
    if n_qubits == 0 {
        return Err(Error::InvalidArgument("ghz needs n >= 1".into()));
    }
    let d = 1usize << n_qubits;
    let mut rho = CMat::zeros((d, d));
    let half = C64::new(0.5, 0.0);
    rho[[0, 0]] = half;
    rho[[0, d - 1]] = half;
    rho[[d - 1, 0]] = half;
    rho[[d - 1, d - 1]] = half;
    Ok(rho)
}

/// Thermal state `e^{-beta H} / tr(e^{-beta H})`, evaluated in the
/// eigenbasis with the spectrum shifted so large gaps cannot underflow the
/// normalization.
pub fn gibbs_state(h: &CMat, beta: f64) -> Result<CMat> {
    crate::ensure_serial_blas();
    if !beta.is_finite() {
        return Err(Error::InvalidArgument("beta must be finite".into()));
    }
    crate::linops::require_hermitian(h, crate::linops::HERMITICITY_TOL)?;
    let (evals, vecs) = h.eigh(UPLO::Lower)?;
    let emin = evals.iter().cloned().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = evals.iter().map(|&e| (-beta * (e - emin)).exp()).collect();
    let z: f64 = weights.iter().sum();
    let d = h.nrows();
    let mut rho = CMat::zeros((d, d));
    for (k, &w) in weights.iter().enumerate() {
        // conjugated eigh column = true eigenvector (row-major complex input)
        let v = vecs.column(k);
        let coeff = w / z;
        for i in 0..d {
            for j in 0..d {
                rho[[i, j]] += v[i].conj() * v[j] * coeff;
            }
        }
    }
    Ok(rho)
}

/// The polarized-nucleus product state `(1 + 1 x 1 x sigma_z)/d` on the
/// 8-dimensional defect-center space.
pub fn nv_separable_state() -> CMat {
    let d = 8.0;
    (eye(8) + kron(&eye(4), &pauli(3))).mapv(|z| z / d)
}

/// Matrix of the generator in an orthonormal operator basis,
/// `Psi_mn = tr[F_m L(F_n)]`. Always block lower-triangular with a zero
/// first column (the identity is fixed).
pub fn psi_matrix(gen: &LindbladGenerator, basis: &OperatorBasis) -> Result<CMat> {
    if basis.normalization != BasisNormalization::Orthonormal {
        return Err(Error::InvalidArgument(
            "psi_matrix needs the orthonormal basis".into(),
        ));
    }
    if basis.dim != gen.dim() {
        return Err(Error::DimensionMismatch(
            "basis dim != generator dim".into(),
        ));
    }
    if basis.orthogonality_error() > 1e-8 {
        return Err(Error::InvalidArgument("basis not orthogonal".into()));
    }
    let sup = generator_matrix(gen)?;
    let n = basis.len();
    let mut psi = CMat::zeros((n, n));
    for j in 0..n {
        let image = sup.apply(&vec_op(&basis.elements[j])?);
        let image_m = crate::linops::unvec_op(&image, basis.dim)?;
        for i in 0..n {
            psi[[i, j]] = trace(&basis.elements[i].dot(&image_m));
        }
    }
    Ok(psi)
}

/// `R_ni = tr[(F_n F_i)^2] - d` over the raw Pauli strings (identity
/// excluded). Entries take only the values 0 and -2d, and rows are
/// pairwise distinct.
pub fn r_matrix(n_qubits: usize) -> Result<Array2<f64>> {
    let basis = pauli_basis(n_qubits, BasisNormalization::RawPauli)?;
    let d = basis.dim as f64;
    let m = basis.len() - 1;
    let mut r = Array2::<f64>::zeros((m, m));
    for n in 0..m {
        for i in 0..m {
            let prod = basis.elements[n + 1].dot(&basis.elements[i + 1]);
            let val = trace(&prod.dot(&prod)).re - d;
            r[[n, i]] = val;
        }
    }
    Ok(r)
}

#[derive(Debug, Clone)]
pub enum ProbeSpec {
    /// Traceless Hermitian probe with i.i.d. standard-normal coefficients
    /// on the non-identity Pauli strings.
    Seeded(u64),
    Explicit(CMat),
}

/// Purely dissipative n-qubit dynamics: zero Hamiltonian, diagonal GKS
/// matrix over the raw Pauli strings, and a single probe observable next
/// to the identity.
#[derive(Debug, Clone)]
pub struct DissipativeQubitSpec {
    pub n_qubits: usize,
    pub gks_diagonal: Vec<f64>,
    pub probe: ProbeSpec,
}

/// Probe observable with every Pauli coefficient drawn from N(0, 1).
pub fn generic_probe(n_qubits: usize, seed: u64) -> Result<CMat> {
    let basis = pauli_basis(n_qubits, BasisNormalization::RawPauli)?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let d = basis.dim;
    let mut x = CMat::zeros((d, d));
    for f in basis.elements.iter().skip(1) {
        let c: f64 = rng.sample(StandardNormal);
        x = x + f.mapv(|z| z * c);
    }
    Ok(x)
}

pub fn dissipative_nqubit(
    spec: &DissipativeQubitSpec,
) -> Result<(LindbladGenerator, MeasurementSet)> {
    let basis = pauli_basis(spec.n_qubits, BasisNormalization::RawPauli)?;
    let m = basis.len() - 1;
    if spec.gks_diagonal.len() != m {
        return Err(Error::InvalidArgument(format!(
            "gks diagonal has length {}, expected {m}",
            spec.gks_diagonal.len()
        )));
    }
    if spec.gks_diagonal.iter().any(|a| *a < 0.0) {
        return Err(Error::GksNotPsd(
            spec.gks_diagonal.iter().cloned().fold(0.0, f64::min),
        ));
    }
    let mut a = CMat::zeros((m, m));
    for (k, &v) in spec.gks_diagonal.iter().enumerate() {
        a[[k, k]] = C64::new(v, 0.0);
    }
    let gen = gks_to_lindblad(&GksSpec::new(basis.clone(), a)?)?;
    let probe = match &spec.probe {
        ProbeSpec::Seeded(seed) => generic_probe(spec.n_qubits, *seed)?,
        ProbeSpec::Explicit(x) => x.clone(),
    };
    let d = basis.dim;
    let set = MeasurementSet::new(vec![eye(d), probe], vec!["I".into(), "probe".into()])?;
    Ok((gen, set))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::slowest_decay;
    use crate::linops::{hermiticity_error, hs_inner};
    use crate::measurement::expectation_and_variance;

    #[test]
    fn spin_chain_shapes_and_unitality() {
        let (gen, set) = spin_chain(&SpinChainParams::dissipative(1.0)).unwrap();
        assert_eq!(gen.dim(), 16);
        assert_eq!(gen.noise_ops.len(), 8);
        assert_eq!(set.len(), 16);
        assert!(set.has_identity());
        // generator_matrix validates unitality internally
        let l = generator_matrix(&gen).unwrap();
        assert_eq!(l.d2(), 256);

        // eta = 0 disables the noise entirely
        let (gen0, _) = spin_chain(&SpinChainParams::hamiltonian_only()).unwrap();
        assert!(gen0.noise_ops.is_empty());
        let l0 = generator_matrix(&gen0).unwrap();
        let lh = generator_matrix(
            &LindbladGenerator::new(
                SpinChainParams::hamiltonian_only().hamiltonian().unwrap(),
                vec![],
            )
            .unwrap(),
        )
        .unwrap();
        assert!((&l0.matrix - &lh.matrix).iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn spin_chain_param_validation() {
        let mut p = SpinChainParams::hamiltonian_only();
        p.delta.push(1.0);
        assert!(spin_chain(&p).is_err());
        let mut p = SpinChainParams::hamiltonian_only();
        p.eta[0] = -1.0;
        assert!(spin_chain(&p).is_err());
    }

    #[test]
    fn nv_hamiltonian_hermitian_and_jump_structure() {
        let (gen, set, z) = nv_center(&NvParams::default()).unwrap();
        assert_eq!(gen.dim(), 8);
        assert!(hermiticity_error(&gen.hamiltonian) < 1e-12);
        assert_eq!(gen.noise_ops.len(), 4);
        // jump operators act as the identity on the nuclear factor: they
        // commute with 1 x 1 x sigma_z
        let zn = kron(&eye(4), &pauli(3));
        for l in &gen.noise_ops {
            let comm = l.dot(&zn) - zn.dot(l);
            assert!(comm.iter().all(|z| z.norm() < 1e-12));
        }
        assert_eq!(set.len(), 2);
        assert!((hs_inner(&z, &zn).unwrap().re - 8.0).abs() < 1e-12);

        let mut bad = NvParams::default();
        bad.gamma_d = -1.0;
        assert!(nv_center(&bad).is_err());
    }

    #[test]
    fn standard_states_validate() {
        let ghz = ghz_state(4).unwrap();
        assert!((trace(&ghz).re - 1.0).abs() < 1e-12);
        let purity = trace(&ghz.dot(&ghz)).re;
        assert!((purity - 1.0).abs() < 1e-12);
        // GHZ stabilizer <Z1 Z2> = +1
        let z1z2 = site_operator(&pauli(3), 0, 4).dot(&site_operator(&pauli(3), 1, 4));
        let (y, _) = expectation_and_variance(&z1z2, &ghz).unwrap();
        assert!((y - 1.0).abs() < 1e-12);

        let sep = basis_state_projector(&[0, 0, 0, 0]).unwrap();
        assert!((trace(&sep).re - 1.0).abs() < 1e-12);

        let h = SpinChainParams::hamiltonian_only().hamiltonian().unwrap();
        let g = gibbs_state(&h, 1.0).unwrap();
        assert!((trace(&g).re - 1.0).abs() < 1e-10);
        assert!(hermiticity_error(&g) < 1e-10);
        let comm = g.dot(&h) - h.dot(&g);
        assert!(comm.iter().all(|z| z.norm() < 1e-10));
        // infinite temperature: maximally mixed
        let g0 = gibbs_state(&h, 0.0).unwrap();
        let mixed = eye(16).mapv(|z| z / 16.0);
        assert!((&g0 - &mixed).iter().all(|z| z.norm() < 1e-12));
        assert!(gibbs_state(&h, f64::NAN).is_err());

        let nv = nv_separable_state();
        assert!((trace(&nv).re - 1.0).abs() < 1e-12);
        let znuc = kron(&eye(4), &pauli(3));
        let (y, _) = expectation_and_variance(&znuc, &nv).unwrap();
        assert!((y - 1.0).abs() < 1e-12);
    }

    #[test]
    fn psi_matrix_diagonal_for_diagonal_gks() {
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        for _ in 0..3 {
            let diag: Vec<f64> = (0..15).map(|_| rng.gen::<f64>()).collect();
            let spec = DissipativeQubitSpec {
                n_qubits: 2,
                gks_diagonal: diag.clone(),
                probe: ProbeSpec::Seeded(1),
            };
            let (gen, _) = dissipative_nqubit(&spec).unwrap();
            let basis = pauli_basis(2, BasisNormalization::Orthonormal).unwrap();
            let psi = psi_matrix(&gen, &basis).unwrap();
            // diagonal up to 1e-10; first row and column vanish
            for i in 0..16 {
                for j in 0..16 {
                    if i != j {
                        assert!(psi[[i, j]].norm() < 1e-10, "psi[{i},{j}] = {}", psi[[i, j]]);
                    }
                }
            }
            // diagonal entries match R a / d (orthonormal rescaling of the
            // raw-basis G matrix)
            let r = r_matrix(2).unwrap();
            let d = 4.0;
            for n in 0..15 {
                let g_nn: f64 = (0..15).map(|i| r[[n, i]] * diag[i]).sum();
                assert!((psi[[n + 1, n + 1]].re - g_nn / d).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn psi_matrix_block_structure_for_hamiltonian() {
        let mut rng = ChaCha12Rng::seed_from_u64(22);
        let h = crate::linops::random_hermitian(2, &mut rng);
        let gen = LindbladGenerator::new(h, vec![]).unwrap();
        let basis = pauli_basis(1, BasisNormalization::Orthonormal).unwrap();
        let psi = psi_matrix(&gen, &basis).unwrap();
        // first column zero (identity fixed), first row zero (commutators
        // traceless)
        for k in 0..4 {
            assert!(psi[[k, 0]].norm() < 1e-12);
            assert!(psi[[0, k]].norm() < 1e-12);
        }
        // raw basis rejected
        let raw = pauli_basis(1, BasisNormalization::RawPauli).unwrap();
        assert!(psi_matrix(&gen, &raw).is_err());
    }

    #[test]
    fn r_matrix_single_qubit_and_distinct_rows() {
        let r1 = r_matrix(1).unwrap();
        for n in 0..3 {
            for i in 0..3 {
                let expect = if n == i { 0.0 } else { -4.0 };
                assert_eq!(r1[[n, i]], expect);
            }
        }
        for n_qubits in 1..=3usize {
            let r = r_matrix(n_qubits).unwrap();
            let d = (1usize << n_qubits) as f64;
            let m = r.nrows();
            for v in r.iter() {
                assert!(*v == 0.0 || *v == -2.0 * d, "unexpected entry {v}");
            }
            for a in 0..m {
                for b in 0..a {
                    let differ = (0..m).any(|k| r[[a, k]] != r[[b, k]]);
                    assert!(differ, "rows {a} and {b} coincide for n = {n_qubits}");
                }
            }
        }
    }

    #[test]
    fn dissipative_nqubit_static_limit() {
        let spec = DissipativeQubitSpec {
            n_qubits: 1,
            gks_diagonal: vec![0.0; 3],
            probe: ProbeSpec::Seeded(5),
        };
        let (gen, set) = dissipative_nqubit(&spec).unwrap();
        assert!(gen.noise_ops.is_empty());
        assert_eq!(set.len(), 2);
        // frozen dynamics: only span{I, probe} is observable
        let l = generator_matrix(&gen).unwrap();
        let rep = crate::observability::kalman_report(
            &l,
            &set,
            &crate::observability::ObservabilityOptions::default(),
        )
        .unwrap();
        assert_eq!(rep.rank, 2);
        assert!(dissipative_nqubit(&DissipativeQubitSpec {
            n_qubits: 1,
            gks_diagonal: vec![-0.1, 0.0, 0.0],
            probe: ProbeSpec::Seeded(5),
        })
        .is_err());
    }

    #[test]
    fn generic_probe_has_all_coefficients() {
        let basis = pauli_basis(2, BasisNormalization::RawPauli).unwrap();
        let x = generic_probe(2, 7).unwrap();
        assert!(trace(&x).norm() < 1e-12);
        assert!(hermiticity_error(&x) < 1e-12);
        for f in basis.elements.iter().skip(1) {
            let c = hs_inner(f, &x).unwrap().norm();
            assert!(c > 1e-6, "vanishing Pauli coefficient");
        }
    }

    #[test]
    fn chain_slowest_decay_is_real_negative() {
        let (gen, _) = spin_chain(&SpinChainParams::dissipative(1.0)).unwrap();
        let l = generator_matrix(&gen).unwrap();
        let lam = slowest_decay(&l).unwrap().unwrap();
        assert!(lam.re < 0.0);
    }
}
