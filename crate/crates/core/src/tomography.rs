//! Simulated two-photon transverse-mode tomography over the six
//! single-photon states {e, o, d, a, r, l}, maximum-likelihood
//! reconstruction and Poisson bootstrap errors.

use nalgebra::{DMatrix, DVector, Matrix4, Vector4};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{project_physical, DensityMatrix4, StateMetrics};
use crate::error::{FwmError, Result};
use crate::modes::ModeSuperposition;

pub const SINGLE_STATES: [&str; 6] = ["e", "o", "d", "a", "r", "l"];
pub const MAX_ITERATIONS: usize = 500;
pub const TOLERANCE: f64 = 1e-10;
const RESAMPLE_RETRIES: usize = 3;

/// Rank-1 product projector |s⟩⟨s| ⊗ |i⟩⟨i|.
#[derive(Debug, Clone, PartialEq)]
pub struct Projector {
    pub signal: &'static str,
    pub idler: &'static str,
    pub vector: Vector4<Complex64>,
}

impl Projector {
    pub fn label(&self) -> String {
        format!("{}{}", self.signal, self.idler)
    }

    /// tr(Π ρ) = ⟨v|ρ|v⟩
    pub fn probability(&self, rho: &Matrix4<Complex64>) -> f64 {
        (self.vector.adjoint() * rho * self.vector)[(0, 0)].re
    }
}

fn single(name: &str) -> [Complex64; 2] {
    let s = ModeSuperposition::named(name).expect("known state");
    [s.e, s.o]
}

/// The 36 projectors in canonical order ee, eo, …, ll.
pub fn projector_basis() -> Vec<Projector> {
    let mut out = Vec::with_capacity(36);
    for s in SINGLE_STATES {
        for i in SINGLE_STATES {
            let (a, b) = (single(s), single(i));
            out.push(Projector {
                signal: s,
                idler: i,
                vector: Vector4::new(a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1]),
            });
        }
    }
    out
}

/// N₀·tr(Π_k ρ) for every projector.
pub fn expected_counts(rho: &DensityMatrix4, n0: f64) -> Vec<f64> {
    projector_basis()
        .iter()
        .map(|p| (n0 * p.probability(rho.matrix())).max(0.0))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountEntry {
    pub signal_basis: String,
    pub idler_basis: String,
    pub counts: u64,
}

/// Coincidence counts in projector order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountRecord {
    pub counts: Vec<u64>,
}

impl CountRecord {
    pub fn new(counts: Vec<u64>) -> Result<Self> {
        if counts.len() != 36 {
            return Err(FwmError::InvalidParameter(format!(
                "expected 36 counts, got {}",
                counts.len()
            )));
        }
        Ok(Self { counts })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn entries(&self) -> Vec<CountEntry> {
        projector_basis()
            .iter()
            .zip(&self.counts)
            .map(|(p, &n)| CountEntry {
                signal_basis: p.signal.to_string(),
                idler_basis: p.idler.to_string(),
                counts: n,
            })
            .collect()
    }

    /// Accepts the 36 entries in any order; each pair must appear once.
    pub fn from_entries(entries: &[CountEntry]) -> Result<Self> {
        let basis = projector_basis();
        let mut counts = vec![None; 36];
        for (k, e) in entries.iter().enumerate() {
            let idx = basis
                .iter()
                .position(|p| p.signal == e.signal_basis && p.idler == e.idler_basis)
                .ok_or_else(|| FwmError::Parse {
                    location: format!("entry {k}"),
                    message: format!("unknown basis pair ({}, {})", e.signal_basis, e.idler_basis),
                })?;
            if counts[idx].replace(e.counts).is_some() {
                return Err(FwmError::Parse {
                    location: format!("entry {k}"),
                    message: format!("duplicate basis pair {}", basis[idx].label()),
                });
            }
        }
        let missing: Vec<String> = counts
            .iter()
            .zip(&basis)
            .filter(|(c, _)| c.is_none())
            .map(|(_, p)| p.label())
            .collect();
        if !missing.is_empty() {
            return Err(FwmError::Parse {
                location: "count record".into(),
                message: format!("missing basis pairs {missing:?}"),
            });
        }
        Self::new(counts.into_iter().map(Option::unwrap).collect())
    }
}

impl Serialize for CountRecord {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.entries().serialize(s)
    }
}

impl<'de> Deserialize<'de> for CountRecord {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let entries = Vec::<CountEntry>::deserialize(d)?;
        Self::from_entries(&entries).map_err(serde::de::Error::custom)
    }
}

fn poisson_draw(rate: f64, rng: &mut ChaCha20Rng) -> u64 {
    if rate <= 0.0 {
        return 0;
    }
    Poisson::new(rate).expect("positive finite rate").sample(rng) as u64
}

/// Independent Poisson draws around each rate.
pub fn sample_counts(rates: &[f64], seed: u64) -> Result<CountRecord> {
    if let Some(r) = rates.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
        return Err(FwmError::InvalidParameter(format!("invalid count rate {r}")));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    CountRecord::new(rates.iter().map(|&r| poisson_draw(r, &mut rng)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MleResult {
    pub rho: DensityMatrix4,
    /// Poisson log-likelihood (without the ln n! constant) at the optimum.
    pub log_likelihood: f64,
    pub iterations: usize,
    /// Σ n ln p after every accepted step, starting from the initial guess.
    pub history: Vec<f64>,
}

/// Lower-triangular T with a real diagonal: 4 diagonal + 6 complex entries.
fn t_from_params(t: &[f64]) -> Matrix4<Complex64> {
    let mut m = Matrix4::<Complex64>::zeros();
    for (k, (r, c, imag)) in param_layout().into_iter().enumerate() {
        if imag {
            m[(r, c)].im = t[k];
        } else {
            m[(r, c)].re = t[k];
        }
    }
    m
}

fn param_layout() -> Vec<(usize, usize, bool)> {
    let mut v: Vec<(usize, usize, bool)> = (0..4).map(|d| (d, d, false)).collect();
    for r in 1..4 {
        for c in 0..r {
            v.push((r, c, false));
            v.push((r, c, true));
        }
    }
    v
}

fn params_from_t(m: &Matrix4<Complex64>) -> Vec<f64> {
    param_layout()
        .into_iter()
        .map(|(r, c, imag)| if imag { m[(r, c)].im } else { m[(r, c)].re })
        .collect()
}

/// Lower-triangular T with T†T = ρ, from a Cholesky factor of the
/// index-reversed matrix.
fn t_for_rho(rho: &Matrix4<Complex64>) -> Result<Matrix4<Complex64>> {
    let j = Matrix4::<Complex64>::from_fn(|r, c| if r + c == 3 { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) });
    let chol = (j * rho * j)
        .cholesky()
        .ok_or_else(|| FwmError::Numeric("initial guess is not positive definite".into()))?;
    let l = chol.l();
    let mut t = (j * l * j).adjoint();
    // make the diagonal real and nonnegative
    for d in 0..4 {
        let z = t[(d, d)];
        if z.norm() > 0.0 {
            let ph = z.conj() / z.norm();
            for c in 0..4 {
                t[(d, c)] *= ph;
            }
        }
    }
    Ok(t)
}

struct Likelihood {
    vectors: Vec<Vector4<Complex64>>,
    counts: Vec<f64>,
}

impl Likelihood {
    /// Probabilities p_k and Σ n ln p for unit-trace ρ = T†T / tr.
    fn probabilities(&self, t: &Matrix4<Complex64>) -> (Vec<f64>, f64) {
        let s = (t.adjoint() * t).trace().re;
        let p: Vec<f64> = self.vectors.iter().map(|v| (t * v).norm_squared() / s).collect();
        let ll = self
            .counts
            .iter()
            .zip(&p)
            .map(|(&n, &pk)| if n > 0.0 { n * pk.max(1e-300).ln() } else { 0.0 })
            .sum();
        (p, ll)
    }

    /// Gradient of Σ n ln p and the negated exact Hessian.
    fn curvature(&self, t: &Matrix4<Complex64>, p: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let s = (t.adjoint() * t).trace().re;
        let layout = param_layout();
        let n = layout.len();
        let unit = |imag: bool| if imag { Complex64::new(0.0, 1.0) } else { Complex64::new(1.0, 0.0) };
        let dtr: Vec<f64> = layout.iter().map(|&(r, c, im)| 2.0 * (t[(r, c)].conj() * unit(im)).re).collect();
        let jac = self.jacobian(t, p);
        let mut grad = DVector::zeros(n);
        let mut curv = DMatrix::zeros(n, n);
        for (k, v) in self.vectors.iter().enumerate() {
            let nk = self.counts[k];
            if nk == 0.0 {
                continue;
            }
            let pk = p[k].max(1e-300);
            let row = jac.row(k);
            for i in 0..n {
                grad[i] += nk / pk * row[i];
                let (ri, ci, ii) = layout[i];
                for j in 0..=i {
                    let (rj, cj, ij) = layout[j];
                    // second derivatives of v†T†Tv and tr(T†T)
                    let e = unit(ii).conj() * unit(ij);
                    let dnum = if ri == rj { 2.0 * (e * v[ci].conj() * v[cj]).re } else { 0.0 };
                    let dtr2 = if ri == rj && ci == cj { 2.0 * e.re } else { 0.0 };
                    let d2p = (dnum - row[j] * dtr[i] - row[i] * dtr[j] - pk * dtr2) / s;
                    let h = nk * (d2p / pk - row[i] * row[j] / (pk * pk));
                    curv[(i, j)] -= h;
                    if i != j {
                        curv[(j, i)] -= h;
                    }
                }
            }
        }
        (grad, curv)
    }

    /// ∂p_k/∂t_j for all projectors and parameters.
    fn jacobian(&self, t: &Matrix4<Complex64>, p: &[f64]) -> DMatrix<f64> {
        let s = (t.adjoint() * t).trace().re;
        let layout = param_layout();
        let dtr: Vec<f64> = layout
            .iter()
            .map(|&(r, c, imag)| {
                let e = if imag { Complex64::new(0.0, 1.0) } else { Complex64::new(1.0, 0.0) };
                2.0 * (t[(r, c)].conj() * e).re
            })
            .collect();
        let mut jac = DMatrix::zeros(self.vectors.len(), layout.len());
        for (k, v) in self.vectors.iter().enumerate() {
            let w = t * v;
            for (j, &(r, c, imag)) in layout.iter().enumerate() {
                let e = if imag { Complex64::new(0.0, 1.0) } else { Complex64::new(1.0, 0.0) };
                let dnum = 2.0 * (w[r].conj() * e * v[c]).re;
                jac[(k, j)] = (dnum - p[k] * dtr[j]) / s;
            }
        }
        jac
    }
}

/// Least-squares linear inversion over the 36 probabilities.
fn linear_inversion(vectors: &[Vector4<Complex64>], freq: &[f64]) -> Result<Matrix4<Complex64>> {
    // Hermitian basis: 4 diagonal, 6 real-symmetric, 6 imaginary-antisymmetric
    let mut basis = Vec::with_capacity(16);
    for d in 0..4 {
        let mut m = Matrix4::<Complex64>::zeros();
        m[(d, d)] = Complex64::new(1.0, 0.0);
        basis.push(m);
    }
    for r in 0..4 {
        for c in 0..r {
            let mut m = Matrix4::<Complex64>::zeros();
            m[(r, c)] = Complex64::new(1.0, 0.0);
            m[(c, r)] = Complex64::new(1.0, 0.0);
            basis.push(m);
            let mut m = Matrix4::<Complex64>::zeros();
            m[(r, c)] = Complex64::new(0.0, 1.0);
            m[(c, r)] = Complex64::new(0.0, -1.0);
            basis.push(m);
        }
    }
    let a = DMatrix::from_fn(vectors.len(), 16, |k, j| (vectors[k].adjoint() * basis[j] * vectors[k])[(0, 0)].re);
    let b = DVector::from_column_slice(freq);
    let x = a
        .svd(true, true)
        .solve(&b, 1e-12)
        .map_err(|e| FwmError::Numeric(format!("linear inversion failed: {e}")))?;
    Ok(basis.iter().zip(x.iter()).fold(Matrix4::zeros(), |acc, (m, &c)| acc + m * Complex64::new(c, 0.0)))
}

/// Maximum-likelihood density matrix for the counts, under Poisson
/// statistics with a free overall rate.
pub fn mle_reconstruct(record: &CountRecord) -> Result<MleResult> {
    let total = record.total();
    if total == 0 {
        return Err(FwmError::InvalidParameter("all tomography counts are zero".into()));
    }
    let basis = projector_basis();
    let vectors: Vec<Vector4<Complex64>> = basis.iter().map(|p| p.vector).collect();
    let counts: Vec<f64> = record.counts.iter().map(|&n| n as f64).collect();
    // the 36 projectors form 9 complete product bases, so Σ_k p_k = 9
    let scale = total as f64 / 9.0;
    let freq: Vec<f64> = counts.iter().map(|n| n / scale).collect();

    let lin = linear_inversion(&vectors, &freq)?;
    let lin = project_physical(&lin)?;
    let start = lin.matrix() * Complex64::new(0.99, 0.0) + Matrix4::identity() * Complex64::new(0.0025, 0.0);
    let lk = Likelihood { vectors, counts };

    let mut params = params_from_t(&t_for_rho(&start)?);
    let (mut p, mut ll) = lk.probabilities(&t_from_params(&params));
    let mut history = vec![ll];
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let t = t_from_params(&params);
        let (grad, curv) = lk.curvature(&t, &p);
        let n = params.len();
        let mut accepted = false;
        while lambda <= 1e16 {
            let mut a = curv.clone();
            let max_diag = (0..n).map(|j| curv[(j, j)].abs()).fold(0.0, f64::max).max(1e-300);
            for j in 0..n {
                a[(j, j)] += lambda * curv[(j, j)].abs().max(1e-12 * max_diag);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&grad)) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = params.iter().zip(step.iter()).map(|(x, d)| x + d).collect();
            let (tp, tll) = lk.probabilities(&t_from_params(&trial));
            if tll.is_finite() && tll >= ll {
                let rel = (tll - ll).abs() / ll.abs().max(1.0);
                params = trial;
                p = tp;
                ll = tll;
                history.push(ll);
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if rel < TOLERANCE {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted || converged {
            // no ascent direction left within damping range: stationary
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(FwmError::MleNotConverged { iterations, log_likelihood: ll });
    }
    let t = t_from_params(&params);
    let rho = DensityMatrix4::from_unnormalized(t.adjoint() * t)?;
    let log_likelihood = lk
        .counts
        .iter()
        .zip(&p)
        .map(|(&n, &pk)| {
            let mu = scale * pk;
            if n > 0.0 { n * mu.max(1e-300).ln() - mu } else { -mu }
        })
        .sum();
    Ok(MleResult { rho, log_likelihood, iterations, history })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub concurrence: MeanStd,
    pub bell_fidelity: MeanStd,
    pub purity: MeanStd,
    pub n_samples: usize,
    /// Resamples that failed every retry and were left out.
    pub failed: usize,
    pub seed: u64,
}

/// Poisson resampling of the observed counts, one ChaCha20 stream per
/// resample so results do not depend on thread scheduling.
pub fn bootstrap_metrics(record: &CountRecord, n_samples: usize, seed: u64) -> Result<BootstrapSummary> {
    if n_samples < 2 {
        return Err(FwmError::InvalidParameter(format!("n_samples = {n_samples}, need at least 2")));
    }
    let results: Vec<Option<StateMetrics>> = (0..n_samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            for _ in 0..=RESAMPLE_RETRIES {
                let counts = record.counts.iter().map(|&n| poisson_draw(n as f64, &mut rng)).collect();
                let Ok(rec) = CountRecord::new(counts) else { continue };
                if let Ok(r) = mle_reconstruct(&rec) {
                    return Some(r.rho.metrics());
                }
            }
            None
        })
        .collect();
    let ok: Vec<StateMetrics> = results.iter().flatten().copied().collect();
    if ok.len() < 2 {
        return Err(FwmError::Numeric(format!(
            "only {} of {n_samples} bootstrap reconstructions succeeded",
            ok.len()
        )));
    }
    let pick = |f: fn(&StateMetrics) -> f64| MeanStd::of(&ok.iter().map(f).collect::<Vec<_>>());
    Ok(BootstrapSummary {
        concurrence: pick(|m| m.concurrence),
        bell_fidelity: pick(|m| m.bell_fidelity),
        purity: pick(|m| m.purity),
        n_samples,
        failed: n_samples - ok.len(),
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::tests::random_state;
    use proptest::prelude::*;

    fn ket(name: &str) -> [Complex64; 2] {
        single(name)
    }

    fn inner(a: [Complex64; 2], b: [Complex64; 2]) -> f64 {
        (a[0].conj() * b[0] + a[1].conj() * b[1]).norm_sqr()
    }

    fn pure(re: [f64; 4]) -> DensityMatrix4 {
        let v = Vector4::new(
            Complex64::new(re[0], 0.0),
            Complex64::new(re[1], 0.0),
            Complex64::new(re[2], 0.0),
            Complex64::new(re[3], 0.0),
        );
        DensityMatrix4::pure(&v).unwrap()
    }

    #[test]
    fn mutually_unbiased() {
        assert_eq!(projector_basis().len(), 36);
        for (x, y) in [("d", "e"), ("r", "d"), ("l", "o"), ("a", "r")] {
            assert!((inner(ket(x), ket(y)) - 0.5).abs() < 1e-15);
        }
        for (x, y) in [("r", "l"), ("e", "o"), ("d", "a")] {
            assert!(inner(ket(x), ket(y)) < 1e-30);
        }
        let labels: Vec<String> = projector_basis().iter().map(Projector::label).collect();
        assert_eq!(labels[0], "ee");
        assert_eq!(labels[1], "eo");
        assert_eq!(labels[35], "ll");
    }

    #[test]
    fn forward_model() {
        let ee = pure([1.0, 0.0, 0.0, 0.0]);
        let r = expected_counts(&ee, 1000.0);
        assert!((r[0] - 1000.0).abs() < 1e-9);
        assert!(r[7].abs() < 1e-12); // oo
        let bell = DensityMatrix4::bell_phi_plus();
        let r = expected_counts(&bell, 1000.0);
        let idx = |s: &str| projector_basis().iter().position(|p| p.label() == s).unwrap();
        assert!((r[idx("dd")] - 500.0).abs() < 1e-9);
        assert!((r[idx("aa")] - 500.0).abs() < 1e-9);
        // every product basis sums to N₀
        for (x, y) in [("e", "o"), ("d", "a"), ("r", "l")] {
            for (u, v) in [("e", "o"), ("d", "a"), ("r", "l")] {
                let s: f64 = [x, y]
                    .iter()
                    .flat_map(|a| [u, v].map(|b| r[idx(&format!("{a}{b}"))]))
                    .sum();
                assert!((s - 1000.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn sampling_contract() {
        let rates: Vec<f64> = (0..36).map(|k| if k % 5 == 0 { 0.0 } else { 20.0 + k as f64 }).collect();
        let a = sample_counts(&rates, 11).unwrap();
        assert_eq!(a, sample_counts(&rates, 11).unwrap());
        assert_ne!(a, sample_counts(&rates, 12).unwrap());
        for (k, n) in a.counts.iter().enumerate() {
            if k % 5 == 0 {
                assert_eq!(*n, 0);
            }
        }
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let rate = 37.5;
        let n = 10_000;
        let mean = (0..n).map(|_| poisson_draw(rate, &mut rng) as f64).sum::<f64>() / n as f64;
        assert!((mean - rate).abs() < 3.0 * (rate / n as f64).sqrt());
    }

    #[test]
    fn json_shape() {
        let rec = sample_counts(&[10.0; 36], 1).unwrap();
        let text = serde_json::to_string(&rec).unwrap();
        assert!(text.starts_with(r#"[{"signal_basis":"e","idler_basis":"e","counts":"#));
        let back: CountRecord = serde_json::from_str(&text).unwrap();
        assert_eq!(back, rec);
        let mut v: Vec<CountEntry> = serde_json::from_str(&text).unwrap();
        v.pop();
        assert!(CountRecord::from_entries(&v).is_err());
    }

    #[test]
    fn exact_round_trip() {
        for rho in [
            DensityMatrix4::bell_phi_plus(),
            DensityMatrix4::maximally_mixed(),
            pure([0.3, 0.5, -0.2, 0.7]),
        ] {
            let rates = expected_counts(&rho, 1e6);
            let rec = CountRecord::new(rates.iter().map(|r| r.round() as u64).collect()).unwrap();
            let out = mle_reconstruct(&rec).unwrap();
            assert!(rho.fidelity(&out.rho) >= 0.999, "{}", rho.fidelity(&out.rho));
        }
    }

    #[test]
    fn zero_counts_rejected() {
        assert!(mle_reconstruct(&CountRecord::new(vec![0; 36]).unwrap()).is_err());
    }

    #[test]
    fn bootstrap_scaling() {
        let rho = DensityMatrix4::new(
            DensityMatrix4::bell_phi_plus().matrix() * Complex64::new(0.7, 0.0)
                + Matrix4::identity() * Complex64::new(0.075, 0.0),
        )
        .unwrap();
        let low = sample_counts(&expected_counts(&rho, 200.0), 5).unwrap();
        let high = sample_counts(&expected_counts(&rho, 20_000.0), 5).unwrap();
        let a = bootstrap_metrics(&low, 40, 9).unwrap();
        let b = bootstrap_metrics(&high, 40, 9).unwrap();
        for (x, y) in [
            (a.concurrence.std, b.concurrence.std),
            (a.bell_fidelity.std, b.bell_fidelity.std),
            (a.purity.std, b.purity.std),
        ] {
            assert!(x >= 3.0 * y, "{x} vs {y}");
        }
        assert_eq!(a, bootstrap_metrics(&low, 40, 9).unwrap());

        let exact = CountRecord::new(expected_counts(&rho, 1e8).iter().map(|r| r.round() as u64).collect()).unwrap();
        let c = bootstrap_metrics(&exact, 10, 1).unwrap();
        assert!(c.concurrence.std < 0.01 && c.bell_fidelity.std < 0.01 && c.purity.std < 0.01);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]
        #[test]
        fn random_states_round_trip(vals in proptest::collection::vec(-1.0f64..1.0, 32), rank1 in any::<bool>()) {
            let rho = if rank1 {
                let v = Vector4::new(
                    Complex64::new(vals[0], vals[1]),
                    Complex64::new(vals[2], vals[3]),
                    Complex64::new(vals[4], vals[5]),
                    Complex64::new(vals[6], vals[7]) + 0.1,
                );
                DensityMatrix4::pure(&v).unwrap()
            } else {
                random_state(&vals)
            };
            let rates = expected_counts(&rho, 1e7);
            let rec = CountRecord::new(rates.iter().map(|r| r.round() as u64).collect()).unwrap();
            let out = mle_reconstruct(&rec).unwrap();
            prop_assert!(rho.fidelity(&out.rho) >= 0.999);
            prop_assert!(out.history.windows(2).all(|w| w[1] >= w[0]));
        }

        #[test]
        fn noisy_reconstruction_is_physical(vals in proptest::collection::vec(-1.0f64..1.0, 32), seed in 0u64..1000) {
            let rho = random_state(&vals);
            let rec = sample_counts(&expected_counts(&rho, 50.0), seed).unwrap();
            prop_assume!(rec.total() > 0);
            let out = mle_reconstruct(&rec).unwrap();
            let m = out.rho.matrix();
            prop_assert!((m.trace().re - 1.0).abs() < 1e-10);
            prop_assert!(out.rho.eigenvalues()[0] >= -1e-9);
            prop_assert!(out.history.windows(2).all(|w| w[1] >= w[0]));
        }
    }
}
