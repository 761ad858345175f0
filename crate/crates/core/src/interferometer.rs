//! Physics of one burst measurement: the exact twin-Fock outcome
//! distribution over the number difference, inverse-CDF sampling, and
//! binomial detector loss. A small-photon-number Fock-space oracle with an
//! explicit Mach-Zehnder unitary is included for validation.

use crate::specfun::{eval_weight_row, HalfInt};
use crate::{Error, Result};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

/// Photon numbers at the two output ports (detected or pre-loss).
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct PhotonCounts {
    pub n_a: u64,
    pub n_b: u64,
}

impl PhotonCounts {
    pub fn total(self) -> u64 {
        self.n_a + self.n_b
    }

    /// j = (n_a + n_b) / 2, possibly half-integer.
    pub fn j(self) -> HalfInt {
        HalfInt::from_twice((self.n_a + self.n_b) as i64)
    }

    /// m = (n_a - n_b) / 2, possibly half-integer.
    pub fn m(self) -> HalfInt {
        HalfInt::from_twice(self.n_a as i64 - self.n_b as i64)
    }
}

/// Probability distribution over the number-difference quantum number `m`
/// at fixed integer `j` and phase, kept in log scale with a cumulative
/// table for inverse-CDF sampling.
#[derive(Clone, Debug)]
pub struct OutcomeDistribution {
    j: i64,
    phase: f64,
    log_probs: Vec<f64>,
    cdf: Vec<f64>,
}

impl OutcomeDistribution {
    pub fn j(&self) -> i64 {
        self.j
    }

    pub fn phase(&self) -> f64 {
        self.phase
    }

    /// Log probability of outcome `m` (index `m + j`).
    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn probability(&self, m: i64) -> f64 {
        let idx = (m + self.j) as usize;
        self.log_probs[idx].exp()
    }

    pub fn cdf(&self) -> &[f64] {
        &self.cdf
    }

    fn from_log_probs(j: i64, phase: f64, log_probs: Vec<f64>) -> Self {
        let mut cdf = Vec::with_capacity(log_probs.len());
        let mut acc = 0.0;
        for lp in &log_probs {
            acc += lp.exp();
            cdf.push(acc);
        }
        OutcomeDistribution {
            j,
            phase,
            log_probs,
            cdf,
        }
    }
}

/// One burst: pre-loss counts, counts after detector thinning, and the
/// efficiency that produced them.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct BurstRecord {
    pub detected: PhotonCounts,
    pub pre_loss: PhotonCounts,
    pub efficiency: f64,
}

/// Deterministic random stream: a ChaCha generator addressed by a 64-bit
/// master seed plus a stream index. Identical `(seed, stream)` reproduces
/// the identical sample sequence on any platform.
#[derive(Clone, Debug)]
pub struct RandomSource {
    rng: ChaCha8Rng,
}

impl RandomSource {
    pub fn new(master_seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(stream);
        RandomSource { rng }
    }

    fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    fn binomial(&mut self, n: u64, p: f64) -> u64 {
        // rand_distr rejects p outside [0, 1]; p is validated upstream.
        Binomial::new(n, p)
            .expect("binomial parameters validated by caller")
            .sample(&mut self.rng)
    }
}

/// Exact outcome distribution for twin Fock input `|n>|n>` at the given
/// interferometer phase: `j = n`, `P(m) = (j-m)!/(j+m)! [P_j^m(cos phi)]^2`.
pub fn build_outcome_distribution(n: u64, phase: f64) -> Result<OutcomeDistribution> {
    if n == 0 {
        return Err(Error::Domain(
            "n = 0 is degenerate: no photons, no interference".into(),
        ));
    }
    if !(0.0..=std::f64::consts::PI).contains(&phase) || phase.is_nan() {
        return Err(Error::Domain(format!("phase = {phase} outside [0, pi]")));
    }
    let j = n as i64;
    let row = eval_weight_row(HalfInt::from_int(j), phase.cos())?;
    let log_probs = row
        .iter()
        .map(|w| if w.is_zero() { f64::NEG_INFINITY } else { w.log_magnitude })
        .collect();
    Ok(OutcomeDistribution::from_log_probs(j, phase, log_probs))
}

/// Draw one pre-loss burst by inverse-CDF sampling of `m`; returns
/// `n_a = j + m`, `n_b = j - m` (total always `2n` by unitarity).
pub fn sample_burst(dist: &OutcomeDistribution, rng: &mut RandomSource) -> PhotonCounts {
    let u = rng.uniform();
    let idx = dist
        .cdf
        .partition_point(|&c| c < u)
        .min(dist.cdf.len() - 1);
    let m = idx as i64 - dist.j;
    PhotonCounts {
        n_a: (dist.j + m) as u64,
        n_b: (dist.j - m) as u64,
    }
}

/// Thin each port independently: `detected ~ Binomial(count, efficiency)`.
pub fn apply_loss(counts: PhotonCounts, efficiency: f64, rng: &mut RandomSource) -> Result<PhotonCounts> {
    if !(0.0..=1.0).contains(&efficiency) || efficiency.is_nan() {
        return Err(Error::Domain(format!(
            "efficiency = {efficiency} outside [0, 1]"
        )));
    }
    if efficiency == 1.0 {
        return Ok(counts);
    }
    if efficiency == 0.0 {
        return Ok(PhotonCounts { n_a: 0, n_b: 0 });
    }
    Ok(PhotonCounts {
        n_a: rng.binomial(counts.n_a, efficiency),
        n_b: rng.binomial(counts.n_b, efficiency),
    })
}

/// Simulate `k` independent bursts at a shared true phase: sample the
/// pre-built outcome distribution, then apply detector loss.
pub fn simulate_bursts(
    n: u64,
    phase_true: f64,
    efficiency: f64,
    k: usize,
    rng: &mut RandomSource,
) -> Result<Vec<BurstRecord>> {
    if k == 0 {
        return Err(Error::Domain("burst count k must be >= 1".into()));
    }
    let dist = build_outcome_distribution(n, phase_true)?;
    simulate_bursts_from(&dist, efficiency, k, rng)
}

/// Like [`simulate_bursts`] but reuses an already-built distribution
/// (shared across trials in the experiment harness).
pub fn simulate_bursts_from(
    dist: &OutcomeDistribution,
    efficiency: f64,
    k: usize,
    rng: &mut RandomSource,
) -> Result<Vec<BurstRecord>> {
    if k == 0 {
        return Err(Error::Domain("burst count k must be >= 1".into()));
    }
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        let pre_loss = sample_burst(dist, rng);
        let detected = apply_loss(pre_loss, efficiency, rng)?;
        out.push(BurstRecord {
            detected,
            pre_loss,
            efficiency,
        });
    }
    Ok(out)
}

/// Independent validation oracle for small photon numbers: the explicit
/// Mach-Zehnder unitary (balanced beam splitters with `r = -i t = 1/sqrt(2)`
/// and a phase in one arm) applied to the two-mode Fock basis, output
/// probabilities by squared amplitude modulus.
pub fn oracle_distribution(n: u64, phase: f64) -> Result<OutcomeDistribution> {
    if n == 0 || n > 4 {
        return Err(Error::Domain(format!(
            "oracle supports 1 <= n <= 4, got n = {n}"
        )));
    }
    if !(0.0..=std::f64::consts::PI).contains(&phase) || phase.is_nan() {
        return Err(Error::Domain(format!("phase = {phase} outside [0, pi]")));
    }

    let inv_sqrt2 = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let r = inv_sqrt2;
    let t = Complex64::new(0.0, 1.0) * inv_sqrt2;
    let bs = [[r, t], [t, r]];
    let ph = [
        [Complex64::from_polar(1.0, phase), Complex64::new(0.0, 0.0)],
        [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
    ];

    let mul = |a: &[[Complex64; 2]; 2], b: &[[Complex64; 2]; 2]| {
        let mut c = [[Complex64::new(0.0, 0.0); 2]; 2];
        for i in 0..2 {
            for k in 0..2 {
                c[i][k] = a[i][0] * b[0][k] + a[i][1] * b[1][k];
            }
        }
        c
    };
    // Output annihilation operators: (c, d) = M (a, b).
    let m_mat = mul(&bs, &mul(&ph, &bs));

    // Input creation operators in terms of output ones:
    // a^dag = M11 c^dag + M21 d^dag, b^dag = M12 c^dag + M22 d^dag.
    let (a_c, a_d) = (m_mat[0][0], m_mat[1][0]);
    let (b_c, b_d) = (m_mat[0][1], m_mat[1][1]);

    let nn = n as usize;
    let total = 2 * nn;
    let ln_fact = |k: usize| statrs::function::gamma::ln_gamma(k as f64 + 1.0);
    let binom = |a: usize, b: usize| (ln_fact(a) - ln_fact(b) - ln_fact(a - b)).exp();

    // Amplitude for n_c photons in port c (n_d = 2n - n_c):
    // (1/n!) sum_p C(n,p) C(n, n_c - p) a_c^p a_d^{n-p} b_c^{n_c-p} b_d^{n-n_c+p}
    //   * sqrt(n_c! n_d!)
    let mut log_probs = vec![f64::NEG_INFINITY; total + 1];
    for n_c in 0..=total {
        let n_d = total - n_c;
        let mut amp = Complex64::new(0.0, 0.0);
        for p in 0..=nn.min(n_c) {
            let q = n_c - p; // photons from b^dag into port c
            if q > nn {
                continue;
            }
            amp += binom(nn, p)
                * binom(nn, q)
                * a_c.powu(p as u32)
                * a_d.powu((nn - p) as u32)
                * b_c.powu(q as u32)
                * b_d.powu((nn - q) as u32);
        }
        let log_norm = 0.5 * (ln_fact(n_c) + ln_fact(n_d)) - ln_fact(nn);
        let prob = (amp.norm() * log_norm.exp()).powi(2);
        // index by m + j with m = (n_c - n_d)/2, j = n
        log_probs[n_c] = prob.ln();
    }
    Ok(OutcomeDistribution::from_log_probs(
        n as i64, phase, log_probs,
    ))
}
