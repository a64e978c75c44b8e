//! Axial-displacement estimators and the Monte Carlo harness that compares
//! them with the classical and quantum Cramér–Rao bounds.
//!
//! The fraction estimator thresholds each photon at the information
//! boundary `r_b = w/√2` and inverts the linear response
//! `f_out(δ) ≈ f0 (1 + s δ)` of the outside fraction. The slope `s` is signed,
//! so the same code works on either side of the waist and behind a relay.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beam_optics::{DetectionGeometry, WidthProfile};
use crate::error::{Error, Result};
use crate::fisher::{crb_std, info_boundary, qfi_gaussian};
use crate::photon_sim::{simulate_exposure, CountModel, SampleStats};

/// Reference values for the fraction estimator at the nominal plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorCalibration {
    pub nominal_z: f64,
    pub width_sq: f64,
    pub r_b: f64,
    /// Expected share of photons beyond `r_b`.
    pub f0: f64,
    /// `d ln f_out / dz` at the nominal plane, 1/m.
    pub slope: f64,
}

pub fn calibrate(geometry: &DetectionGeometry) -> Result<EstimatorCalibration> {
    let width_sq = geometry.width_sq_at(0.0);
    let r_b = info_boundary(width_sq);
    let threshold = 2.0 * r_b * r_b / width_sq;
    let slope = threshold * geometry.log_width_slope_at(0.0);
    if slope.abs() < 1e-9 / geometry.axial_scale() {
        return Err(Error::Uninformative { slope });
    }
    Ok(EstimatorCalibration {
        nominal_z: geometry.nominal_z(),
        width_sq,
        r_b,
        f0: (-threshold).exp(),
        slope,
    })
}

/// How the measured outside count is turned into a fraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FractionNormalization {
    /// Divide by the photons actually detected in the exposure.
    #[default]
    TotalCount,
    /// Divide by the nominal (expected) photon number.
    Absolute,
}

/// Fraction estimate from raw counts. `expected_total` is only used with
/// [`FractionNormalization::Absolute`].
pub fn estimate_fraction_counts(
    outside: u64,
    total: u64,
    expected_total: f64,
    cal: &EstimatorCalibration,
    normalization: FractionNormalization,
) -> Result<f64> {
    if total == 0 {
        return Err(Error::EmptySample);
    }
    let fraction = match normalization {
        FractionNormalization::TotalCount => {
            if outside == 0 || outside == total {
                return Err(Error::Saturated { outside, total });
            }
            outside as f64 / total as f64
        }
        FractionNormalization::Absolute => {
            if outside == 0 {
                return Err(Error::Saturated { outside, total });
            }
            outside as f64 / expected_total
        }
    };
    Ok((fraction - cal.f0) / (cal.f0 * cal.slope))
}

pub fn estimate_fraction(sample: &crate::photon_sim::DetectionSample, cal: &EstimatorCalibration) -> Result<f64> {
    let total = sample.total_count();
    estimate_fraction_counts(
        sample.count_outside(cal.r_b),
        total,
        total as f64,
        cal,
        FractionNormalization::TotalCount,
    )
}

/// Binomial Fisher information per detection of the thresholded statistic.
pub fn fraction_estimator_fi(cal: &EstimatorCalibration) -> f64 {
    cal.f0 * cal.slope * cal.slope / (1.0 - cal.f0)
}

/// Mean of the fraction estimator at true displacement `delta` (infinite
/// photon budget): its systematic error comes only from linearization.
pub fn expected_fraction_estimate(geometry: &DetectionGeometry, cal: &EstimatorCalibration, delta: f64) -> f64 {
    let w_sq = geometry.width_sq_at(delta);
    let expected = (-2.0 * cal.r_b * cal.r_b / w_sq).exp();
    (expected - cal.f0) / (cal.f0 * cal.slope)
}

/// Side of the width extremum on which the nominal plane lies, relative to
/// increasing object coordinate: `Inside` where the detected width shrinks,
/// `Outside` where it grows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Inside,
    Outside,
}

impl Branch {
    pub fn at(geometry: &DetectionGeometry) -> Result<Self> {
        let slope = geometry.dwidth_sq_dz(geometry.nominal_z());
        if slope == 0.0 {
            Err(Error::BranchAmbiguous)
        } else if slope < 0.0 {
            Ok(Self::Inside)
        } else {
            Ok(Self::Outside)
        }
    }

    fn sign(self) -> f64 {
        match self {
            Self::Inside => -1.0,
            Self::Outside => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MleEstimate {
    pub delta: f64,
    pub width_sq_hat: f64,
    /// The fitted width is unreachable on the branch; `delta` was pinned to
    /// the width extremum.
    pub clamped: bool,
}

/// Width MLE: `ŵ² = 2 mean(r²)`, mapped back to a displacement by inverting
/// `w²(z)` on `branch`.
pub fn estimate_mle_width(
    sample: &crate::photon_sim::DetectionSample,
    geometry: &DetectionGeometry,
    branch: Branch,
) -> Result<MleEstimate> {
    let stats = sample.stats(f64::INFINITY);
    estimate_mle_width_stats(&stats, geometry, branch)
}

pub fn estimate_mle_width_stats(
    stats: &SampleStats,
    geometry: &DetectionGeometry,
    branch: Branch,
) -> Result<MleEstimate> {
    let mean_sq = stats.mean_sq_radius().ok_or(Error::EmptySample)?;
    let nominal_branch = Branch::at(geometry)?;
    if nominal_branch != branch {
        return Err(Error::BranchMismatch { requested: branch });
    }
    let width_sq_hat = 2.0 * mean_sq;
    let (z, clamped) = invert_width(geometry, width_sq_hat, branch);
    Ok(MleEstimate {
        delta: z - geometry.nominal_z(),
        width_sq_hat,
        clamped,
    })
}

/// Finds `z` on the monotone branch through the nominal plane with
/// `w²(z) = target`, or the branch end (the width extremum) when the target
/// lies beyond it.
fn invert_width(geometry: &DetectionGeometry, target: f64, branch: Branch) -> (f64, bool) {
    let sign = branch.sign();
    let z0 = geometry.nominal_z();
    let on_branch = |z: f64| geometry.dwidth_sq_dz(z) * sign > 0.0;
    let residual = |z: f64| geometry.width_sq(z) - target;

    let r0 = residual(z0);
    if r0 == 0.0 {
        return (z0, false);
    }
    // Moving by +sign grows the width on this branch.
    let dir = if r0 < 0.0 { sign } else { -sign };
    let mut step = 0.01 * geometry.axial_scale();
    let mut inner = z0;
    let mut outer = z0;
    let mut bracketed = false;
    for _ in 0..200 {
        let next = inner + dir * step;
        if !on_branch(next) {
            outer = next;
            break;
        }
        if residual(next).signum() != r0.signum() {
            outer = next;
            bracketed = true;
            break;
        }
        inner = next;
        step *= 2.0;
    }

    if bracketed {
        return (bisect(inner, outer, |z| residual(z).signum() == r0.signum()), false);
    }
    if outer == z0 {
        // Never left the branch nor crossed the target within the search.
        return (inner, true);
    }
    // Walked past the extremum first: the target is out of reach.
    let extremum = bisect(inner, outer, on_branch);
    (extremum, true)
}

/// Bisects `[a, b]` where `keep_a(a)` holds and `keep_a(b)` does not, down to
/// adjacent floats.
fn bisect<F: Fn(f64) -> bool>(mut a: f64, mut b: f64, keep_a: F) -> f64 {
    loop {
        let mid = 0.5 * (a + b);
        if mid == a || mid == b {
            return mid;
        }
        if keep_a(mid) {
            a = mid;
        } else {
            b = mid;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Fraction,
    MleWidth,
}

/// Monte Carlo configuration. Trial `t` draws from stream `t` of `base_seed`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub geometry: DetectionGeometry,
    pub true_delta: f64,
    pub n_per_trial: u64,
    pub trials: usize,
    pub base_seed: u64,
    #[serde(default)]
    pub count_model: CountModel,
    #[serde(default)]
    pub normalization: FractionNormalization,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialFlag {
    Saturated,
    Clamped,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialRow {
    pub trial_index: usize,
    pub seed: u64,
    pub n: u64,
    pub count_outside: u64,
    pub delta_hat_m: Option<f64>,
    pub flag: Option<TrialFlag>,
}

/// Outcome of [`run_trials`] for one estimator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialReport {
    pub config: TrialConfig,
    pub estimator: EstimatorKind,
    pub true_delta: f64,
    pub estimates: Vec<f64>,
    pub mean_estimate: f64,
    pub empirical_std: f64,
    pub classical_crb_std: f64,
    pub quantum_crb_std: f64,
    /// Cramér–Rao std of the estimator's own statistic (thresholded counts
    /// for the fraction estimator, the full profile for the width MLE).
    pub estimator_crb_std: f64,
    pub n_per_trial: u64,
    pub trials: usize,
    pub base_seed: u64,
    pub saturated: usize,
    pub clamped: usize,
    pub rows: Vec<TrialRow>,
}

impl TrialReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub const CSV_HEADER: &'static str = "trial_index,seed,n,count_outside,delta_hat_m";

    /// One row per trial; undefined estimates are left empty.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for row in &self.rows {
            let estimate = row.delta_hat_m.map(|d| format!("{d:e}")).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{}",
                row.trial_index, row.seed, row.n, row.count_outside, estimate
            )?;
        }
        Ok(())
    }
}

pub fn run_trials(config: &TrialConfig, estimator: EstimatorKind) -> Result<TrialReport> {
    Ok(run_trials_multi(config, &[estimator])?.remove(0))
}

/// Runs the trials once and applies every requested estimator to the same
/// exposures.
pub fn run_trials_multi(config: &TrialConfig, estimators: &[EstimatorKind]) -> Result<Vec<TrialReport>> {
    if config.trials < 2 {
        return Err(Error::InvalidParameter {
            name: "trials",
            value: config.trials as f64,
            reason: "need at least two trials",
        });
    }
    if config.n_per_trial == 0 {
        return Err(Error::InvalidParameter {
            name: "n_per_trial",
            value: 0.0,
            reason: "need at least one detection per trial",
        });
    }
    let geometry = &config.geometry;
    let cal = calibrate(geometry)?;
    let branch = Branch::at(geometry)?;
    let width_sq = geometry.width_sq_at(config.true_delta);
    crate::error::positive("width_sq", width_sq)?;

    let exposures: Vec<SampleStats> = (0..config.trials as u64)
        .into_par_iter()
        .map(|t| {
            simulate_exposure(
                width_sq,
                config.n_per_trial,
                config.count_model,
                cal.r_b,
                config.base_seed,
                t,
            )
        })
        .collect::<Result<_>>()?;

    let n = config.n_per_trial as f64;
    let full_fi = geometry.log_width_slope_at(0.0).powi(2);
    let classical_crb_std = crb_std(full_fi, n);
    let quantum_crb_std = crb_std(qfi_gaussian(geometry.beam()), n);

    estimators
        .iter()
        .map(|&kind| {
            let rows: Vec<TrialRow> = exposures
                .iter()
                .enumerate()
                .map(|(i, stats)| {
                    let (delta_hat_m, flag) = match kind {
                        EstimatorKind::Fraction => match estimate_fraction_counts(
                            stats.outside,
                            stats.total,
                            n,
                            &cal,
                            config.normalization,
                        ) {
                            Ok(d) => (Some(d), None),
                            Err(Error::Saturated { .. } | Error::EmptySample) => (None, Some(TrialFlag::Saturated)),
                            Err(e) => return Err(e),
                        },
                        EstimatorKind::MleWidth => match estimate_mle_width_stats(stats, geometry, branch) {
                            Ok(m) => (Some(m.delta), m.clamped.then_some(TrialFlag::Clamped)),
                            Err(Error::EmptySample) => (None, Some(TrialFlag::Saturated)),
                            Err(e) => return Err(e),
                        },
                    };
                    Ok(TrialRow {
                        trial_index: i,
                        seed: config.base_seed,
                        n: stats.total,
                        count_outside: stats.outside,
                        delta_hat_m,
                        flag,
                    })
                })
                .collect::<Result<_>>()?;

            let estimates: Vec<f64> = rows.iter().filter_map(|r| r.delta_hat_m).collect();
            let (mean_estimate, empirical_std) = mean_and_std(&estimates);
            let estimator_crb_std = match kind {
                EstimatorKind::Fraction => crb_std(fraction_estimator_fi(&cal), n),
                EstimatorKind::MleWidth => classical_crb_std,
            };
            Ok(TrialReport {
                config: *config,
                estimator: kind,
                true_delta: config.true_delta,
                mean_estimate,
                empirical_std,
                classical_crb_std,
                quantum_crb_std,
                estimator_crb_std,
                n_per_trial: config.n_per_trial,
                trials: config.trials,
                base_seed: config.base_seed,
                saturated: rows.iter().filter(|r| r.flag == Some(TrialFlag::Saturated)).count(),
                clamped: rows.iter().filter(|r| r.flag == Some(TrialFlag::Clamped)).count(),
                estimates,
                rows,
            })
        })
        .collect()
}

/// Sample mean and (n-1)-normalized standard deviation.
pub fn mean_and_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beam_optics::{BeamParams, RelaySystem};
    use crate::fisher::{classical_fi_analytic, optimal_detection_planes};
    use crate::photon_sim::{sample_radii, DetectionSample};
    use approx::assert_relative_eq;
    use std::f64::consts::{E, PI};

    fn unit_beam() -> BeamParams {
        BeamParams::new(PI, 1.0).unwrap()
    }

    fn direct(plane: f64) -> DetectionGeometry {
        DetectionGeometry::Direct {
            beam: unit_beam(),
            plane,
        }
    }

    #[test]
    fn calibration_slope_sign_flips_across_waist() {
        let inside = calibrate(&direct(-1.0)).unwrap();
        assert_relative_eq!(inside.slope, -1.0, max_relative = 1e-15);
        assert_relative_eq!(inside.f0, (-1.0f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(inside.r_b, 1.0, max_relative = 1e-15);
        let outside = calibrate(&direct(1.0)).unwrap();
        assert_relative_eq!(outside.slope, 1.0, max_relative = 1e-15);
        assert!(matches!(calibrate(&direct(0.0)), Err(Error::Uninformative { .. })));
    }

    #[test]
    fn slope_matches_finite_difference_of_fraction() {
        let g = DetectionGeometry::Relayed {
            beam: unit_beam(),
            relay: RelaySystem::new(1.0, 5.0).unwrap(),
            detector_plane: 6.0 / 5.0,
        };
        let cal = calibrate(&g).unwrap();
        let h = 1e-6;
        let f = |d: f64| (-2.0 * cal.r_b * cal.r_b / g.width_sq_at(d)).exp().ln();
        assert_relative_eq!(cal.slope, (f(h) - f(-h)) / (2.0 * h), max_relative = 1e-7);
    }

    #[test]
    fn fraction_inversion_examples() {
        let cal = calibrate(&direct(-1.0)).unwrap();
        let n = 1_000_000u64;
        let at = |frac: f64| {
            let outside = (frac * n as f64).round() as u64;
            estimate_fraction_counts(outside, n, n as f64, &cal, FractionNormalization::TotalCount).unwrap()
        };
        let f0_count = (cal.f0 * n as f64).round() as u64;
        let exact = estimate_fraction_counts(f0_count, n, n as f64, &cal, FractionNormalization::TotalCount).unwrap();
        // Count rounding alone is worth ~1.4e-6.
        assert!(exact.abs() < 2e-6);

        // f0 (1 - delta/z_R) inverts to delta exactly.
        let delta = 0.01;
        let frac = cal.f0 * (1.0 - delta);
        let got = (frac - cal.f0) / (cal.f0 * cal.slope);
        assert_relative_eq!(got, delta, max_relative = 1e-12);
        assert!((at(frac) - delta).abs() < 2e-6);
    }

    #[test]
    fn saturated_counts_are_reported() {
        let cal = calibrate(&direct(-1.0)).unwrap();
        let norm = FractionNormalization::TotalCount;
        assert_eq!(
            estimate_fraction_counts(0, 10, 10.0, &cal, norm),
            Err(Error::Saturated { outside: 0, total: 10 })
        );
        assert!(matches!(
            estimate_fraction_counts(10, 10, 10.0, &cal, norm),
            Err(Error::Saturated { .. })
        ));
        assert_eq!(estimate_fraction_counts(0, 0, 10.0, &cal, norm), Err(Error::EmptySample));
        // Absolute normalization only saturates at zero.
        assert!(estimate_fraction_counts(10, 10, 10.0, &cal, FractionNormalization::Absolute).is_ok());
    }

    #[test]
    fn efficiency_is_one_over_e_minus_one() {
        for plane in [-2.5, -1.0, 0.3, 1.0, 4.0] {
            let cal = calibrate(&direct(plane)).unwrap();
            let ratio = fraction_estimator_fi(&cal) / classical_fi_analytic(&unit_beam(), plane);
            assert!((ratio - 1.0 / (E - 1.0)).abs() < 1e-12);
        }
        let mut cal = calibrate(&direct(1.0)).unwrap();
        cal.f0 = 1e-300;
        assert!(fraction_estimator_fi(&cal) < 1e-299);
    }

    #[test]
    fn predicted_fraction_std_at_experiment_scale() {
        let beam = BeamParams::from_rayleigh_range(632.8e-9, 18.9e-6).unwrap();
        let g = DetectionGeometry::Direct {
            beam,
            plane: -beam.rayleigh_range(),
        };
        let cal = calibrate(&g).unwrap();
        let std = crb_std(fraction_estimator_fi(&cal), 1.6e6);
        assert_relative_eq!(std, 18.9e-6 / 1.6e6f64.sqrt() * (E - 1.0).sqrt(), max_relative = 1e-12);
        assert_relative_eq!(std, 19.6e-9, max_relative = 2e-3);
    }

    #[test]
    fn mle_closed_form_radius() {
        let sample = DetectionSample {
            radii: vec![0.8; 10],
            width_sq: 1.0,
            seed: 0,
            stream: 0,
        };
        let g = direct(-1.0);
        let m = estimate_mle_width(&sample, &g, Branch::Inside).unwrap();
        assert_relative_eq!(m.width_sq_hat, 2.0 * 0.64, max_relative = 1e-15);
        // Direct inversion: z = -sqrt(w²/w0² - 1) on the inside branch.
        let z = -(m.width_sq_hat - 1.0f64).sqrt();
        assert_relative_eq!(m.delta, z + 1.0, epsilon = 1e-14);
        assert!(!m.clamped);
    }

    #[test]
    fn mle_clamps_below_waist() {
        let sample = DetectionSample {
            radii: vec![0.1; 10],
            width_sq: 1.0,
            seed: 0,
            stream: 0,
        };
        let m = estimate_mle_width(&sample, &direct(1.0), Branch::Outside).unwrap();
        assert!(m.clamped);
        assert!((m.delta + 1.0).abs() < 1e-12);
    }

    #[test]
    fn mle_branch_errors() {
        let s = sample_radii(1.0, 100, 1).unwrap();
        assert_eq!(
            estimate_mle_width(&s, &direct(0.0), Branch::Inside),
            Err(Error::BranchAmbiguous)
        );
        assert!(matches!(
            estimate_mle_width(&s, &direct(1.0), Branch::Inside),
            Err(Error::BranchMismatch { .. })
        ));
        let empty = sample_radii(1.0, 0, 1).unwrap();
        assert_eq!(estimate_mle_width(&empty, &direct(1.0), Branch::Outside), Err(Error::EmptySample));
    }

    #[test]
    fn mle_inverts_relayed_width() {
        let beam = unit_beam();
        let relay = RelaySystem::new(1.0, 5.0).unwrap();
        let planes = optimal_detection_planes(&beam, &relay).unwrap();
        for zp in [planes.plane_plus, planes.plane_minus] {
            let g = DetectionGeometry::Relayed {
                beam,
                relay,
                detector_plane: zp,
            };
            let branch = Branch::at(&g).unwrap();
            for delta in [-0.05, 0.0, 0.02, 0.1] {
                let w_sq = g.width_sq_at(delta);
                let stats = SampleStats {
                    total: 1,
                    outside: 0,
                    sum_sq: w_sq / 2.0,
                };
                let m = estimate_mle_width_stats(&stats, &g, branch).unwrap();
                assert!((m.delta - delta).abs() < 1e-12, "zp={zp} delta={delta} got {}", m.delta);
            }
        }
    }

    #[test]
    fn linearization_bias_is_small() {
        for plane in [-1.0, 1.0] {
            let g = direct(plane);
            let cal = calibrate(&g).unwrap();
            for delta in [-0.1, -0.03, 0.001, 0.05, 0.1] {
                let mean = expected_fraction_estimate(&g, &cal, delta);
                assert!(((mean - delta) / delta).abs() < 0.05, "plane {plane} delta {delta}");
            }
            let far = expected_fraction_estimate(&g, &cal, 0.6);
            assert!(((far - 0.6) / 0.6).abs() > 0.05);
        }
    }

    fn small_config(plane: f64, delta: f64, seed: u64) -> TrialConfig {
        TrialConfig {
            geometry: direct(plane),
            true_delta: delta,
            n_per_trial: 20_000,
            trials: 200,
            base_seed: seed,
            count_model: CountModel::Fixed,
            normalization: FractionNormalization::TotalCount,
        }
    }

    #[test]
    fn trial_reports_are_reproducible() {
        let cfg = small_config(-1.0, 0.01, 5);
        let a = run_trials_multi(&cfg, &[EstimatorKind::Fraction, EstimatorKind::MleWidth]).unwrap();
        let b = run_trials_multi(&cfg, &[EstimatorKind::Fraction, EstimatorKind::MleWidth]).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].rows.len(), 200);
        assert_eq!(a[0].rows[3].count_outside, a[1].rows[3].count_outside);
    }

    #[test]
    fn sign_of_mean_follows_delta_on_both_sides() {
        for plane in [-1.0, 1.0] {
            for delta in [-0.02, 0.02] {
                let r = run_trials(&small_config(plane, delta, 9), EstimatorKind::Fraction).unwrap();
                assert_eq!(r.mean_estimate.signum(), delta.signum(), "plane {plane} delta {delta}");
            }
        }
    }

    #[test]
    fn crb_ordering_holds() {
        for plane in [-2.0, -1.0, 0.5] {
            let reports =
                run_trials_multi(&small_config(plane, 0.0, 1), &[EstimatorKind::Fraction, EstimatorKind::MleWidth])
                    .unwrap();
            for r in reports {
                assert!(r.classical_crb_std >= r.quantum_crb_std * (1.0 - 1e-12));
                assert_relative_eq!(r.quantum_crb_std, 1.0 / (20_000f64).sqrt(), max_relative = 1e-12);
                let slack = 1.0 - 3.0 / (2.0 * r.trials as f64).sqrt();
                assert!(r.empirical_std >= r.quantum_crb_std * slack);
            }
        }
    }

    #[test]
    fn tiny_budgets_flag_saturation() {
        let mut cfg = small_config(-1.0, 0.0, 2);
        cfg.n_per_trial = 1;
        cfg.trials = 50;
        let r = run_trials(&cfg, EstimatorKind::Fraction).unwrap();
        assert_eq!(r.saturated, 50);
        assert!(r.estimates.is_empty());
        let mut csv = Vec::new();
        r.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("trial_index,seed,n,count_outside,delta_hat_m\n0,2,1,"));
        assert!(text.lines().nth(1).unwrap().ends_with(','));
    }

    #[test]
    fn poisson_and_absolute_modes_run() {
        let mut cfg = small_config(-1.0, 0.02, 3);
        cfg.count_model = CountModel::Poisson;
        cfg.normalization = FractionNormalization::Absolute;
        let r = run_trials(&cfg, EstimatorKind::Fraction).unwrap();
        assert!(r.rows.iter().any(|row| row.n != 20_000));
        // Absolute normalization adds the source-power noise on top of the binomial.
        let fixed = run_trials(&small_config(-1.0, 0.02, 3), EstimatorKind::Fraction).unwrap();
        assert!(r.empirical_std > fixed.empirical_std);
    }

    #[test]
    fn rejects_bad_configs() {
        let mut cfg = small_config(-1.0, 0.0, 0);
        cfg.trials = 1;
        assert!(run_trials(&cfg, EstimatorKind::Fraction).is_err());
        let mut cfg = small_config(-1.0, 0.0, 0);
        cfg.n_per_trial = 0;
        assert!(run_trials(&cfg, EstimatorKind::Fraction).is_err());
        assert!(run_trials(&small_config(0.0, 0.0, 0), EstimatorKind::Fraction).is_err());
    }

    #[test]
    fn json_echoes_config() {
        let r = run_trials(&small_config(-1.0, 0.0, 4), EstimatorKind::MleWidth).unwrap();
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["config"]["base_seed"], 4);
        assert_eq!(v["config"]["geometry"]["kind"], "direct");
        assert_eq!(v["estimator"], "mle_width");
        assert_eq!(v["estimates"].as_array().unwrap().len(), 200);
        let back: TrialConfig = serde_json::from_value(v["config"].clone()).unwrap();
        assert_eq!(back, r.config);
    }
}
