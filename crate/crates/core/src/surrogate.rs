//! Quadratic pseudo-Boolean surrogate fitted to sampled bitstrings, and its
//! spin form.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use thiserror::Error;

use crate::encoding::Bitstring;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurrogateError {
    #[error("regularized normal equations are numerically singular")]
    SingularFit,
    #[error("{samples} samples but {values} values")]
    Misaligned { samples: usize, values: usize },
    #[error("non-finite target value at sample {0}")]
    NonFiniteTarget(usize),
    #[error("sample {index} has {got} bits, expected {expected}")]
    WidthMismatch { index: usize, expected: usize, got: usize },
    #[error("spin entry {0} is not +1 or -1")]
    InvalidSpin(f64),
    #[error("spin vector has {got} entries, model has {expected}")]
    SpinLength { expected: usize, got: usize },
}

pub const DEFAULT_RIDGE: f64 = 1e-8;
const REFINEMENT_PASSES: usize = 2;

pub fn n_coefficients(n_q: usize) -> usize {
    1 + n_q + n_q * n_q.saturating_sub(1) / 2
}

/// Number of distinct training bitstrings drawn for `n_q` bits.
pub fn training_size(n_q: usize, factor: usize, minimum: usize) -> usize {
    let wanted = minimum.max(factor * n_coefficients(n_q));
    if n_q >= 63 {
        wanted
    } else {
        wanted.min(1usize << n_q)
    }
}

/// Distinct uniform bitstrings; the whole cube in index order when it is
/// no larger than the requested size.
pub fn sample_training_set<R: Rng + ?Sized>(
    n_q: usize,
    factor: usize,
    minimum: usize,
    rng: &mut R,
) -> Vec<Bitstring> {
    assert!(n_q >= 1 && n_q < 63, "n_q out of range");
    let n_tr = training_size(n_q, factor, minimum);
    let cube = 1u64 << n_q;
    if n_tr as u64 == cube {
        return (0..cube).map(|i| Bitstring::from_index(i, n_q)).collect();
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(n_tr);
    let mut draws = 0usize;
    while out.len() < n_tr && draws < 50 * n_tr {
        draws += 1;
        let idx = rng.gen_range(0..cube);
        if seen.insert(idx) {
            out.push(Bitstring::from_index(idx, n_q));
        }
    }
    let mut fill = 0u64;
    while out.len() < n_tr {
        if seen.insert(fill) {
            out.push(Bitstring::from_index(fill, n_q));
        }
        fill += 1;
    }
    out
}

/// `Q(b) = β0 + Σ β_r b_r + Σ_{r<s} β_rs b_r b_s`.
///
/// `quadratic` stores pairs in row-major order: (0,1), (0,2), ..., (1,2), ...
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticSurrogate {
    pub beta0: f64,
    pub linear: Vec<f64>,
    pub quadratic: Vec<f64>,
}

/// Position of pair (r, s), r < s, in the packed upper triangle.
pub fn pair_index(n: usize, r: usize, s: usize) -> usize {
    debug_assert!(r < s && s < n);
    r * (2 * n - r - 1) / 2 + (s - r - 1)
}

impl QuadraticSurrogate {
    pub fn zero(n_q: usize) -> Self {
        Self {
            beta0: 0.0,
            linear: vec![0.0; n_q],
            quadratic: vec![0.0; n_q * n_q.saturating_sub(1) / 2],
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.linear.len()
    }

    pub fn coupling(&self, r: usize, s: usize) -> f64 {
        let (r, s) = if r < s { (r, s) } else { (s, r) };
        self.quadratic[pair_index(self.n_qubits(), r, s)]
    }

    pub fn eval(&self, b: &[u8]) -> f64 {
        let n = self.n_qubits();
        let mut acc = self.beta0;
        let mut k = 0;
        for r in 0..n {
            if b[r] == 1 {
                acc += self.linear[r];
            }
            for s in (r + 1)..n {
                if b[r] == 1 && b[s] == 1 {
                    acc += self.quadratic[k];
                }
                k += 1;
            }
        }
        acc
    }

    fn features(b: &[u8], out: &mut [f64]) {
        let n = b.len();
        out[0] = 1.0;
        for r in 0..n {
            out[1 + r] = b[r] as f64;
        }
        let mut k = 1 + n;
        for r in 0..n {
            for s in (r + 1)..n {
                out[k] = (b[r] * b[s]) as f64;
                k += 1;
            }
        }
    }
}

pub fn fit_quadratic(
    samples: &[Bitstring],
    values: &[f64],
    ridge: f64,
) -> Result<QuadraticSurrogate, SurrogateError> {
    if samples.len() != values.len() {
        return Err(SurrogateError::Misaligned {
            samples: samples.len(),
            values: values.len(),
        });
    }
    let n = samples.first().map_or(0, |b| b.len());
    for (i, (b, y)) in samples.iter().zip(values).enumerate() {
        if b.len() != n {
            return Err(SurrogateError::WidthMismatch {
                index: i,
                expected: n,
                got: b.len(),
            });
        }
        if !y.is_finite() {
            return Err(SurrogateError::NonFiniteTarget(i));
        }
    }
    let m = n_coefficients(n);
    let mut ata = DMatrix::<f64>::zeros(m, m);
    let mut aty = DVector::<f64>::zeros(m);
    let mut phi = vec![0.0; m];
    for (b, &y) in samples.iter().zip(values) {
        QuadraticSurrogate::features(b.bits(), &mut phi);
        for i in 0..m {
            if phi[i] == 0.0 {
                continue;
            }
            aty[i] += phi[i] * y;
            for j in i..m {
                ata[(i, j)] += phi[i] * phi[j];
            }
        }
    }
    for i in 0..m {
        for j in 0..i {
            ata[(i, j)] = ata[(j, i)];
        }
        if i > 0 {
            ata[(i, i)] += ridge;
        }
    }
    let chol = ata.cholesky().ok_or(SurrogateError::SingularFit)?;
    let mut coef = chol.solve(&aty);
    // Iterated Tikhonov refinement.
    for _ in 0..REFINEMENT_PASSES {
        let mut rhs = aty.clone();
        for i in 1..m {
            rhs[i] += ridge * coef[i];
        }
        coef = chol.solve(&rhs);
    }
    if coef.iter().any(|c| !c.is_finite()) {
        return Err(SurrogateError::SingularFit);
    }
    Ok(QuadraticSurrogate {
        beta0: coef[0],
        linear: coef.rows(1, n).iter().copied().collect(),
        quadratic: coef.rows(1 + n, m - 1 - n).iter().copied().collect(),
    })
}

/// `E(z) = η0 + Σ η_r z_r + Σ_{r<s} η_rs z_r z_s`, same packing as the surrogate.
#[derive(Debug, Clone, PartialEq)]
pub struct IsingModel {
    pub eta0: f64,
    pub fields: Vec<f64>,
    pub couplings: Vec<f64>,
}

impl IsingModel {
    pub fn n_qubits(&self) -> usize {
        self.fields.len()
    }

    /// Energy for bitstring `b` via `z = 1 - 2b`.
    pub fn energy_bits(&self, b: &[u8]) -> f64 {
        let n = self.n_qubits();
        let z = |r: usize| if b[r] == 0 { 1.0 } else { -1.0 };
        let mut acc = self.eta0;
        let mut k = 0;
        for r in 0..n {
            let zr = z(r);
            acc += self.fields[r] * zr;
            for s in (r + 1)..n {
                acc += self.couplings[k] * zr * z(s);
                k += 1;
            }
        }
        acc
    }

    /// Energies of every basis index, with qubit r at bit position n-1-r.
    pub fn diagonal(&self) -> Vec<f64> {
        let n = self.n_qubits();
        let dim = 1usize << n;
        let mut bits = vec![0u8; n];
        (0..dim)
            .map(|idx| {
                for (r, b) in bits.iter_mut().enumerate() {
                    *b = ((idx >> (n - 1 - r)) & 1) as u8;
                }
                self.energy_bits(&bits)
            })
            .collect()
    }
}

pub fn qubo_to_ising(q: &QuadraticSurrogate) -> IsingModel {
    let n = q.n_qubits();
    let mut eta0 = q.beta0;
    let mut fields: Vec<f64> = q.linear.iter().map(|b| -b / 2.0).collect();
    eta0 += q.linear.iter().sum::<f64>() / 2.0;
    let mut k = 0;
    for r in 0..n {
        for s in (r + 1)..n {
            let b = q.quadratic[k];
            eta0 += b / 4.0;
            fields[r] -= b / 4.0;
            fields[s] -= b / 4.0;
            k += 1;
        }
    }
    IsingModel {
        eta0,
        fields,
        couplings: q.quadratic.iter().map(|b| b / 4.0).collect(),
    }
}

pub fn ising_energy(m: &IsingModel, z: &[f64]) -> Result<f64, SurrogateError> {
    let n = m.n_qubits();
    if z.len() != n {
        return Err(SurrogateError::SpinLength {
            expected: n,
            got: z.len(),
        });
    }
    if let Some(&bad) = z.iter().find(|v| **v != 1.0 && **v != -1.0) {
        return Err(SurrogateError::InvalidSpin(bad));
    }
    let mut acc = m.eta0;
    let mut k = 0;
    for r in 0..n {
        acc += m.fields[r] * z[r];
        for s in (r + 1)..n {
            acc += m.couplings[k] * z[r] * z[s];
            k += 1;
        }
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spins(b: &Bitstring) -> Vec<f64> {
        b.spins().into_iter().map(f64::from).collect()
    }

    fn random_surrogate(n: usize, rng: &mut ChaCha8Rng) -> QuadraticSurrogate {
        let mut q = QuadraticSurrogate::zero(n);
        q.beta0 = rng.gen_range(-5.0..5.0);
        q.linear.iter_mut().for_each(|v| *v = rng.gen_range(-5.0..5.0));
        q.quadratic.iter_mut().for_each(|v| *v = rng.gen_range(-5.0..5.0));
        q
    }

    #[test]
    fn training_set_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s3 = sample_training_set(3, 4, 64, &mut rng);
        assert_eq!(s3.len(), 8);
        for (i, b) in s3.iter().enumerate() {
            assert_eq!(b.to_index(), i as u64);
        }
        let s10 = sample_training_set(10, 4, 64, &mut rng);
        assert_eq!(s10.len(), 224);
        let set: BTreeSet<_> = s10.iter().map(|b| b.to_index()).collect();
        assert_eq!(set.len(), 224);
        assert_eq!(training_size(6, 4, 64), 64);
        assert_eq!(training_size(12, 4, 64), 4 * 79);
    }

    #[test]
    fn pair_packing() {
        let n = 5;
        let mut k = 0;
        for r in 0..n {
            for s in (r + 1)..n {
                assert_eq!(pair_index(n, r, s), k);
                k += 1;
            }
        }
    }

    #[test]
    fn exact_interpolation_two_bits() {
        let samples: Vec<_> = (0..4).map(|i| Bitstring::from_index(i, 2)).collect();
        let f = |b: &Bitstring| {
            let (b1, b2) = (b.0[0] as f64, b.0[1] as f64);
            3.0 + 2.0 * b1 - b2 + 4.0 * b1 * b2
        };
        let y: Vec<f64> = samples.iter().map(f).collect();
        let q = fit_quadratic(&samples, &y, DEFAULT_RIDGE).unwrap();
        assert!((q.beta0 - 3.0).abs() < 1e-8);
        assert!((q.linear[0] - 2.0).abs() < 1e-8);
        assert!((q.linear[1] + 1.0).abs() < 1e-8);
        assert!((q.quadratic[0] - 4.0).abs() < 1e-8);
    }

    #[test]
    fn constant_fit() {
        let samples: Vec<_> = (0..16).map(|i| Bitstring::from_index(i, 4)).collect();
        let q = fit_quadratic(&samples, &[7.5; 16], DEFAULT_RIDGE).unwrap();
        assert!((q.beta0 - 7.5).abs() < 1e-8);
        assert!(q.linear.iter().chain(&q.quadratic).all(|c| c.abs() < 1e-8));
    }

    #[test]
    fn duplicate_samples_do_not_abort() {
        let b = Bitstring::parse("101").unwrap();
        let q = fit_quadratic(&[b.clone(), b.clone()], &[1.0, 1.0], DEFAULT_RIDGE);
        assert!(q.is_ok());
        assert!(matches!(
            fit_quadratic(&[b], &[1.0, 2.0], DEFAULT_RIDGE),
            Err(SurrogateError::Misaligned { .. })
        ));
    }

    #[test]
    fn recovery_on_random_subset() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 9;
        let truth = random_surrogate(n, &mut rng);
        let samples = sample_training_set(n, 4, 64, &mut rng);
        let y: Vec<f64> = samples.iter().map(|b| truth.eval(b.bits())).collect();
        let q = fit_quadratic(&samples, &y, DEFAULT_RIDGE).unwrap();
        let rms = (samples
            .iter()
            .zip(&y)
            .map(|(b, y)| (q.eval(b.bits()) - y).powi(2))
            .sum::<f64>()
            / y.len() as f64)
            .sqrt();
        assert!(rms <= 1e-6, "rms {rms}");
    }

    #[test]
    fn ising_examples() {
        let q = QuadraticSurrogate {
            beta0: 0.0,
            linear: vec![2.0],
            quadratic: vec![],
        };
        let m = qubo_to_ising(&q);
        assert_eq!(m.eta0, 1.0);
        assert_eq!(m.fields, vec![-1.0]);
        assert_eq!(ising_energy(&m, &[1.0]).unwrap(), 0.0);
        assert_eq!(ising_energy(&m, &[-1.0]).unwrap(), 2.0);

        let q = QuadraticSurrogate {
            beta0: 0.0,
            linear: vec![0.0, 0.0],
            quadratic: vec![1.0],
        };
        let m = qubo_to_ising(&q);
        assert_eq!(m.eta0, 0.25);
        assert_eq!(m.fields, vec![-0.25, -0.25]);
        assert_eq!(m.couplings, vec![0.25]);

        let z = qubo_to_ising(&QuadraticSurrogate::zero(3));
        assert_eq!(z.eta0, 0.0);
        assert!(z.fields.iter().chain(&z.couplings).all(|v| *v == 0.0));
        assert_eq!(ising_energy(&z, &[1.0, -1.0, 1.0]).unwrap(), 0.0);
        assert!(matches!(
            ising_energy(&z, &[1.0, 0.0, 1.0]),
            Err(SurrogateError::InvalidSpin(_))
        ));
    }

    #[test]
    fn diagonal_matches_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = qubo_to_ising(&random_surrogate(4, &mut rng));
        let d = m.diagonal();
        for (i, e) in d.iter().enumerate() {
            let b = Bitstring::from_index(i as u64, 4);
            assert_eq!(*e, ising_energy(&m, &spins(&b)).unwrap());
        }
    }

    proptest! {
        #[test]
        fn spin_map_equivalence(seed in 0u64..10_000, n in 1usize..9) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let q = random_surrogate(n, &mut rng);
            let m = qubo_to_ising(&q);
            for i in 0..(1u64 << n) {
                let b = Bitstring::from_index(i, n);
                let e = ising_energy(&m, &spins(&b)).unwrap();
                prop_assert!((e - q.eval(b.bits())).abs() <= 1e-10);
            }
        }

        #[test]
        fn fit_is_order_invariant(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 5;
            let samples: Vec<_> = (0..(1u64 << n)).map(|i| Bitstring::from_index(i, n)).collect();
            let y: Vec<f64> = (0..samples.len()).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let a = fit_quadratic(&samples, &y, DEFAULT_RIDGE).unwrap();
            let mut rs: Vec<_> = samples.iter().cloned().zip(y.iter().copied()).collect();
            rs.reverse();
            rs.swap(0, 7);
            let (s2, y2): (Vec<_>, Vec<_>) = rs.into_iter().unzip();
            let b = fit_quadratic(&s2, &y2, DEFAULT_RIDGE).unwrap();
            prop_assert!((a.beta0 - b.beta0).abs() < 1e-10);
            for (x, y) in a.linear.iter().chain(&a.quadratic).zip(b.linear.iter().chain(&b.quadratic)) {
                prop_assert!((x - y).abs() < 1e-10);
            }
        }

        #[test]
        fn quadratic_argmin_recovered(seed in 0u64..1000, n in 2usize..7) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let truth = random_surrogate(n, &mut rng);
            let samples: Vec<_> = (0..(1u64 << n)).map(|i| Bitstring::from_index(i, n)).collect();
            let y: Vec<f64> = samples.iter().map(|b| truth.eval(b.bits())).collect();
            let q = fit_quadratic(&samples, &y, DEFAULT_RIDGE).unwrap();
            let argmin = |f: &dyn Fn(&Bitstring) -> f64| {
                samples.iter().enumerate()
                    .min_by(|a, b| f(a.1).total_cmp(&f(b.1)))
                    .map(|(i, _)| i).unwrap()
            };
            let i_true = argmin(&|b| truth.eval(b.bits()));
            let i_fit = argmin(&|b| q.eval(b.bits()));
            prop_assert!((y[i_fit] - y[i_true]).abs() < 1e-8);
        }
    }
}
