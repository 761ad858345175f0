//! Phase posterior reconstruction from burst sets.
//!
//! The posterior over a phase grid is the product of per-burst likelihoods
//! `P(j_i, m_i, phi)`, accumulated additively in log space. The estimate is
//! the posterior peak after two windowed grid refinements; the posterior
//! standard deviation on the final window is the reported uncertainty.

use crate::interferometer::BurstRecord;
use crate::specfun::{eval_weight, HalfInt};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Ordered phase grid in radians, endpoints included.
#[derive(Clone, Debug)]
pub struct PhaseGrid {
    points: Vec<f64>,
}

impl PhaseGrid {
    /// Uniform grid of `n >= 2` points on `[lo, hi]`, `0 <= lo < hi <= pi`.
    pub fn uniform(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Config(format!("grid needs >= 2 points, got {n}")));
        }
        if !(lo >= 0.0 && lo < hi && hi <= std::f64::consts::PI) {
            return Err(Error::Config(format!(
                "grid bounds [{lo}, {hi}] invalid; need 0 <= lo < hi <= pi"
            )));
        }
        let step = (hi - lo) / (n - 1) as f64;
        let mut points: Vec<f64> = (0..n).map(|i| lo + step * i as f64).collect();
        // pin the endpoint exactly
        points[n - 1] = hi;
        Ok(PhaseGrid { points })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn lo(&self) -> f64 {
        self.points[0]
    }

    pub fn hi(&self) -> f64 {
        *self.points.last().unwrap()
    }

    pub fn step(&self) -> f64 {
        (self.hi() - self.lo()) / (self.points.len() - 1) as f64
    }
}

/// Unnormalized log posterior aligned with a phase grid; after the
/// normalization shift the maximum entry is 0.
#[derive(Clone, Debug)]
pub struct PhasePosterior {
    grid: PhaseGrid,
    log_weight: Vec<f64>,
    uninformative_bursts: usize,
}

impl PhasePosterior {
    pub fn grid(&self) -> &PhaseGrid {
        &self.grid
    }

    pub fn log_weight(&self) -> &[f64] {
        &self.log_weight
    }

    pub fn uninformative_bursts(&self) -> usize {
        self.uninformative_bursts
    }

    /// Flat posteriors carry no phase information (e.g. every burst lost
    /// all photons).
    pub fn is_flat(&self) -> bool {
        let finite_max = self
            .log_weight
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        if finite_max == f64::NEG_INFINITY {
            return true;
        }
        let finite_min = self.log_weight.iter().cloned().fold(f64::INFINITY, f64::min);
        finite_max - finite_min < 1e-12
    }

    pub fn argmax(&self) -> (usize, f64) {
        let mut best = 0;
        for (i, lw) in self.log_weight.iter().enumerate() {
            if *lw > self.log_weight[best] {
                best = i;
            }
        }
        (best, self.grid.points[best])
    }
}

/// Log likelihood of one burst at one phase, from the detected counts.
///
/// Odd detected totals take the half-integer `(j, m)` path. A burst with
/// zero detected photons is uninformative and contributes a flat 0.
pub fn burst_log_likelihood(burst: &BurstRecord, phase: f64) -> Result<f64> {
    if !(0.0..=std::f64::consts::PI).contains(&phase) || phase.is_nan() {
        return Err(Error::Domain(format!("phase = {phase} outside [0, pi]")));
    }
    if burst.detected.total() == 0 {
        return Ok(0.0);
    }
    let w = eval_weight(burst.detected.j(), burst.detected.m(), phase.cos())?;
    Ok(if w.is_zero() {
        f64::NEG_INFINITY
    } else {
        w.log_magnitude
    })
}

fn log_likelihood_at(j: HalfInt, m: HalfInt, x: f64) -> Result<f64> {
    let w = eval_weight(j, m, x)?;
    Ok(if w.is_zero() {
        f64::NEG_INFINITY
    } else {
        w.log_magnitude
    })
}

/// Accumulate the product-rule posterior over the grid and shift its
/// maximum to 0. Bursts with identical detected counts are grouped, so a
/// duplicated burst contributes exactly twice its log likelihood.
pub fn accumulate_posterior(bursts: &[BurstRecord], grid: &PhaseGrid) -> Result<PhasePosterior> {
    if bursts.is_empty() {
        return Err(Error::Empty("burst set is empty".into()));
    }

    // BTreeMap keeps the accumulation order deterministic, so repeated
    // runs produce bit-identical posteriors.
    let mut groups: BTreeMap<(i64, i64), f64> = BTreeMap::new();
    let mut uninformative = 0usize;
    for b in bursts {
        if b.detected.total() == 0 {
            uninformative += 1;
            continue;
        }
        *groups
            .entry((b.detected.j().twice(), b.detected.m().twice()))
            .or_insert(0.0) += 1.0;
    }

    let mut log_weight = vec![0.0_f64; grid.points.len()];
    for (i, &phi) in grid.points.iter().enumerate() {
        let x = phi.cos();
        let mut acc = 0.0;
        for (&(tj, tm), &count) in &groups {
            let ll = log_likelihood_at(HalfInt::from_twice(tj), HalfInt::from_twice(tm), x)?;
            acc += count * ll;
            if acc == f64::NEG_INFINITY {
                break;
            }
        }
        log_weight[i] = acc;
    }

    let max = log_weight.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max.is_finite() {
        for lw in &mut log_weight {
            *lw -= max;
        }
    }
    Ok(PhasePosterior {
        grid: grid.clone(),
        log_weight,
        uninformative_bursts: uninformative,
    })
}

/// Grid settings for [`estimate_phase`]: a coarse pass over `[lo, hi]`
/// followed by `refine_rounds` windowed re-grids, each covering
/// `+-window_halfwidth` current steps around the argmax at `refine_factor`
/// times finer spacing.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub lo: f64,
    pub hi: f64,
    pub coarse_points: usize,
    pub refine_factor: usize,
    pub refine_rounds: usize,
    pub window_halfwidth: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            lo: 0.0,
            hi: std::f64::consts::FRAC_PI_2,
            coarse_points: 1024,
            refine_factor: 16,
            refine_rounds: 2,
            window_halfwidth: 8,
        }
    }
}

/// Phase estimate: posterior peak, posterior standard deviation on the
/// refined window, and the absolute error when the true phase is known.
#[derive(Clone, Debug)]
pub struct PhaseEstimate {
    pub phi_hat: f64,
    pub sigma_post: f64,
    pub abs_error: Option<f64>,
    pub k: usize,
    /// False when the posterior was flat (no usable estimate).
    pub valid: bool,
    /// True when a secondary peak came within 1e-3 of the maximum.
    pub ambiguous: bool,
    pub secondary_peak: Option<f64>,
    pub uninformative_bursts: usize,
}

/// Secondary-peak threshold: a local maximum whose normalized posterior
/// value is within 1e-3 of the global peak flags the estimate ambiguous.
const AMBIGUITY_LOG_GAP: f64 = -1.0005003335835335e-3; // ln(1 - 1e-3)

fn find_secondary_peak(post: &PhasePosterior, main_idx: usize) -> Option<f64> {
    let lw = post.log_weight();
    let n = lw.len();
    for i in 0..n {
        if i.abs_diff(main_idx) <= 1 {
            continue;
        }
        let left_ok = i == 0 || lw[i] >= lw[i - 1];
        let right_ok = i == n - 1 || lw[i] >= lw[i + 1];
        if left_ok && right_ok && lw[i] >= AMBIGUITY_LOG_GAP {
            return Some(post.grid().points()[i]);
        }
    }
    None
}

/// Locate the posterior peak: coarse pass, two windowed refinements, then
/// peak position, posterior standard deviation, and error against truth.
pub fn estimate_phase(
    bursts: &[BurstRecord],
    phase_true: Option<f64>,
    cfg: &EstimatorConfig,
) -> Result<PhaseEstimate> {
    let coarse_grid = PhaseGrid::uniform(cfg.lo, cfg.hi, cfg.coarse_points)?;
    let coarse = accumulate_posterior(bursts, &coarse_grid)?;

    if coarse.is_flat() {
        return Ok(PhaseEstimate {
            phi_hat: f64::NAN,
            sigma_post: f64::NAN,
            abs_error: None,
            k: bursts.len(),
            valid: false,
            ambiguous: false,
            secondary_peak: None,
            uninformative_bursts: coarse.uninformative_bursts(),
        });
    }

    let (coarse_idx, mut peak) = coarse.argmax();
    let secondary_peak = find_secondary_peak(&coarse, coarse_idx);

    let mut step = coarse_grid.step();
    let mut window = coarse.clone();
    let mut win_lo = cfg.lo;
    let mut win_hi = cfg.hi;
    for _ in 0..cfg.refine_rounds {
        let lo = (peak - cfg.window_halfwidth as f64 * step).max(cfg.lo);
        let hi = (peak + cfg.window_halfwidth as f64 * step).min(cfg.hi);
        let n = 2 * cfg.window_halfwidth * cfg.refine_factor + 1;
        let grid = PhaseGrid::uniform(lo, hi, n)?;
        window = accumulate_posterior(bursts, &grid)?;
        let (_, p) = window.argmax();
        peak = p;
        step = grid.step();
        win_lo = lo;
        win_hi = hi;
    }

    // The refined window only sees the peak. When the posterior is wider
    // than the window (broad peaks at small N or large true phase), a
    // window-local standard deviation would saturate at the window width,
    // so measure the width on whichever grid contains the mass: the final
    // window if it holds >= 99% of the coarse-grid posterior mass, the
    // full coarse grid otherwise.
    let coarse_w: Vec<f64> = coarse.log_weight().iter().map(|lw| lw.exp()).collect();
    let coarse_total: f64 = coarse_w.iter().sum();
    let inside: f64 = coarse_grid
        .points()
        .iter()
        .zip(&coarse_w)
        .filter(|(p, _)| **p >= win_lo && **p <= win_hi)
        .map(|(_, w)| w)
        .sum();
    let contained = inside >= 0.99 * coarse_total;
    let (pts, log_w): (&[f64], &[f64]) = if contained {
        (window.grid().points(), window.log_weight())
    } else {
        (coarse_grid.points(), coarse.log_weight())
    };
    let w: Vec<f64> = log_w.iter().map(|lw| lw.exp()).collect();
    let total: f64 = w.iter().sum();
    let mean: f64 = pts.iter().zip(&w).map(|(p, w)| p * w).sum::<f64>() / total;
    let var: f64 = pts
        .iter()
        .zip(&w)
        .map(|(p, w)| w * (p - mean) * (p - mean))
        .sum::<f64>()
        / total;

    Ok(PhaseEstimate {
        phi_hat: peak,
        sigma_post: var.max(0.0).sqrt(),
        abs_error: phase_true.map(|t| (peak - t).abs()),
        k: bursts.len(),
        valid: true,
        ambiguous: secondary_peak.is_some(),
        secondary_peak,
        uninformative_bursts: window.uninformative_bursts(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interferometer::{simulate_bursts, PhotonCounts, RandomSource};
    use approx::assert_abs_diff_eq;

    fn burst(n_a: u64, n_b: u64) -> BurstRecord {
        BurstRecord {
            detected: PhotonCounts { n_a, n_b },
            pre_loss: PhotonCounts { n_a, n_b },
            efficiency: 1.0,
        }
    }

    #[test]
    fn likelihood_closed_forms() {
        // detected (1,1): j=1, m=0, L = cos^2 phi; at pi/3 -> ln(1/4)
        let ll = burst_log_likelihood(&burst(1, 1), std::f64::consts::FRAC_PI_3).unwrap();
        assert_abs_diff_eq!(ll, 0.25_f64.ln(), epsilon = 1e-12);

        // detected (2,0): j=1, m=1, L = sin^2(phi)/2, maximal at pi/2
        let at = |phi: f64| burst_log_likelihood(&burst(2, 0), phi).unwrap();
        assert_abs_diff_eq!(at(0.7), (0.7_f64.sin().powi(2) / 2.0).ln(), epsilon = 1e-12);
        assert!(at(std::f64::consts::FRAC_PI_2) > at(1.2));
        assert!(at(std::f64::consts::FRAC_PI_2) > at(1.8));

        // detected (1,0): half-integer j = m = 1/2; Gamma-extended seed
        // gives L = (2/pi) sin(phi), finite on (0, pi/2).
        for &phi in &[0.2, 0.8, 1.3] {
            let ll = burst_log_likelihood(&burst(1, 0), phi).unwrap();
            assert!(ll.is_finite());
            assert_abs_diff_eq!(
                ll,
                (2.0 / std::f64::consts::PI * phi.sin()).ln(),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn half_integer_one_recurrence_step() {
        // detected (2,1): j=3/2, m=1/2. One step of the degree recurrence:
        // P_{3/2}^{1/2} = 2x P_{1/2}^{1/2} with P_{1/2}^{1/2} the Gamma seed
        // sqrt(2/pi) (1-x^2)^{1/4}, so L = (1!/2!) [2x]^2 (2/pi) sqrt(1-x^2).
        let phi = 0.6_f64;
        let x = phi.cos();
        let expect = 0.5 * (2.0 * x).powi(2) * (2.0 / std::f64::consts::PI) * phi.sin();
        let ll = burst_log_likelihood(&burst(2, 1), phi).unwrap();
        assert_abs_diff_eq!(ll, expect.ln(), epsilon = 1e-12);
    }

    #[test]
    fn zero_detection_is_uninformative() {
        assert_eq!(burst_log_likelihood(&burst(0, 0), 0.4).unwrap(), 0.0);
        let grid = PhaseGrid::uniform(0.0, 1.0, 11).unwrap();
        let post = accumulate_posterior(&[burst(0, 0), burst(0, 0)], &grid).unwrap();
        assert!(post.is_flat());
        assert_eq!(post.uninformative_bursts(), 2);
    }

    #[test]
    fn single_burst_posterior_is_cos_squared() {
        let grid = PhaseGrid::uniform(0.0, std::f64::consts::FRAC_PI_2, 64).unwrap();
        let post = accumulate_posterior(&[burst(1, 1)], &grid).unwrap();
        for (phi, lw) in grid.points().iter().zip(post.log_weight()) {
            // normalized so the phi = 0 point (max) sits at 0
            assert_abs_diff_eq!(*lw, (phi.cos().powi(2)).ln(), epsilon = 1e-12);
        }
    }

    #[test]
    fn duplicate_burst_doubles_log_weight() {
        let grid = PhaseGrid::uniform(0.1, 1.2, 33).unwrap();
        let single = accumulate_posterior(&[burst(6, 2)], &grid).unwrap();
        let double = accumulate_posterior(&[burst(6, 2), burst(6, 2)], &grid).unwrap();
        // both are max-shifted; shift cancels in differences between points
        let s = single.log_weight();
        let d = double.log_weight();
        for i in 1..s.len() {
            assert_abs_diff_eq!(d[i] - d[0], 2.0 * (s[i] - s[0]), epsilon = 1e-9);
        }
    }

    #[test]
    fn posterior_max_shifted_to_zero() {
        let grid = PhaseGrid::uniform(0.0, 1.5, 100).unwrap();
        let post = accumulate_posterior(&[burst(4, 2), burst(3, 3)], &grid).unwrap();
        let max = post
            .log_weight()
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(max, 0.0);
    }

    #[test]
    fn posterior_symmetric_about_pi_over_2() {
        // Full-interval posterior is symmetric about pi/2, so restriction
        // to [0, pi/2] loses nothing. Odd point count puts a point at pi/2.
        let mut rng = RandomSource::new(9, 0);
        for n in [3u64, 8, 20] {
            let bursts = simulate_bursts(n, 0.4, 0.95, 6, &mut rng).unwrap();
            let grid = PhaseGrid::uniform(0.0, std::f64::consts::PI, 257).unwrap();
            let post = accumulate_posterior(&bursts, &grid).unwrap();
            let lw = post.log_weight();
            for i in 0..lw.len() {
                let mirror = lw.len() - 1 - i;
                if lw[i].is_finite() || lw[mirror].is_finite() {
                    assert_abs_diff_eq!(lw[i], lw[mirror], epsilon = 1e-8);
                }
            }
        }
    }

    #[test]
    fn estimate_peak_at_boundary_for_m_zero_bursts() {
        let bursts: Vec<_> = (0..5).map(|_| burst(5, 5)).collect();
        let est = estimate_phase(&bursts, Some(0.0), &EstimatorConfig::default()).unwrap();
        assert!(est.valid);
        assert_eq!(est.phi_hat, 0.0);
        assert_eq!(est.abs_error, Some(0.0));
    }

    #[test]
    fn estimate_flags_flat_posterior() {
        let est = estimate_phase(&[burst(0, 0)], Some(0.1), &EstimatorConfig::default()).unwrap();
        assert!(!est.valid);
        assert!(est.phi_hat.is_nan());
    }

    #[test]
    fn refinement_matches_dense_grid() {
        // Refined argmax agrees with a dense uniform grid of 1e6 points
        // within one fine-grid step.
        let mut rng = RandomSource::new(31, 2);
        let bursts = simulate_bursts(10, 0.17, 1.0, 8, &mut rng).unwrap();
        let cfg = EstimatorConfig::default();
        let est = estimate_phase(&bursts, None, &cfg).unwrap();

        let dense = PhaseGrid::uniform(cfg.lo, cfg.hi, 1_000_000).unwrap();
        let post = accumulate_posterior(&bursts, &dense).unwrap();
        let (_, dense_peak) = post.argmax();

        let coarse_step = (cfg.hi - cfg.lo) / (cfg.coarse_points - 1) as f64;
        let fine_step = coarse_step / (cfg.refine_factor as f64).powi(cfg.refine_rounds as i32);
        assert!(
            (est.phi_hat - dense_peak).abs() <= fine_step + 1e-12,
            "refined {} vs dense {} (fine step {})",
            est.phi_hat,
            dense_peak,
            fine_step
        );
    }

    #[test]
    fn sharpening_with_burst_count() {
        // With eta = 1 and phi_true = 1/N, the mean posterior width over
        // 100 fixed-seed trials is nonincreasing in k.
        let n = 500u64; // N = 1000
        let phi_true = 1.0 / (2.0 * n as f64);
        let cfg = EstimatorConfig::default();
        let mean_sigma = |k: usize| {
            let mut acc = 0.0;
            for t in 0..100u64 {
                let mut rng = RandomSource::new(77, t);
                let bursts = simulate_bursts(n, phi_true, 1.0, k, &mut rng).unwrap();
                let est = estimate_phase(&bursts, Some(phi_true), &cfg).unwrap();
                acc += est.sigma_post;
            }
            acc / 100.0
        };
        let s1 = mean_sigma(1);
        let s3 = mean_sigma(3);
        let s10 = mean_sigma(10);
        assert!(s1 >= s3 && s3 >= s10, "sigma means: {s1} {s3} {s10}");
    }

    #[test]
    fn log_domain_survives_many_bursts() {
        // 1000 bursts at N = 10000 accumulate additively with no overflow.
        let mut rng = RandomSource::new(5, 0);
        let bursts = simulate_bursts(5000, 1e-4, 1.0, 1000, &mut rng).unwrap();
        let grid = PhaseGrid::uniform(0.0, std::f64::consts::FRAC_PI_2, 33).unwrap();
        let post = accumulate_posterior(&bursts, &grid).unwrap();
        for lw in post.log_weight() {
            assert!(lw.is_finite() || *lw == f64::NEG_INFINITY);
        }
        assert!(!post.is_flat());
    }
}
