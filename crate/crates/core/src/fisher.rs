//! Quantum and classical Fisher information for axial displacements.
//!
//! All information values are per single detection, in 1/m². The classical
//! information of intensity detection depends on the detector only through
//! the squared width `w²` and its axial derivative:
//! `F = (d ln w² / dz)²`. The radial quadrature in [`classical_fi_numeric`]
//! is the reference; the closed forms are checked against it.

use std::f64::consts::{E, PI};

use num_complex::Complex64;
use serde::Serialize;

use crate::beam_optics::{
    gaussian_pdf, relay_transform, BeamParams, PupilField, RelaySystem, RelayedWidth, WidthProfile,
};
use crate::error::{finite, non_negative, positive, Error, Result};
use crate::quadrature::{integrate_to_infinity, QuadOptions};

/// Relative step of the axial finite differences, in units of the axial scale.
/// With one Richardson level the truncation error is O(step⁴) ~ 1e-16, while
/// a smaller step lets rounding noise stall the quadrature.
const FD_REL_STEP: f64 = 1e-4;
const FD_MIN_STEP: f64 = 1e-12;

/// Quantum Fisher information of a Gaussian beam: `1/z_R²` at every plane.
pub fn qfi_gaussian(beam: &BeamParams) -> f64 {
    let zr = beam.rayleigh_range();
    1.0 / (zr * zr)
}

/// First two moments of the propagation generator `G = ∇²_T / 2k` in the
/// waist mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorMoments {
    pub mean: f64,
    pub second: f64,
}

impl GeneratorMoments {
    pub fn variance(&self) -> f64 {
        self.second - self.mean * self.mean
    }

    pub fn qfi(&self) -> f64 {
        4.0 * self.variance()
    }
}

/// Moments of `G` computed in the transverse spatial-frequency domain, where
/// `G` acts as multiplication by `-q²/2k`. The waist mode's radial spectrum
/// is `exp(-q² w0² / 4)`; normalization and moments are all quadratures.
pub fn generator_moments(beam: &BeamParams) -> Result<GeneratorMoments> {
    let k = beam.wavenumber();
    let w0 = beam.waist();
    let spectrum_sq = |q: f64| (-q * q * w0 * w0 / 2.0).exp();
    let scale = 1.0 / w0;
    let opts = QuadOptions::with_rel_tol(1e-13);

    let norm = integrate_to_infinity(|q| spectrum_sq(q) * q, 0.0, scale, &opts)?.value;
    let eigen = |q: f64| -q * q / (2.0 * k);
    let mean = integrate_to_infinity(|q| eigen(q) * spectrum_sq(q) * q, 0.0, scale, &opts)?.value / norm;
    let second =
        integrate_to_infinity(|q| eigen(q).powi(2) * spectrum_sq(q) * q, 0.0, scale, &opts)?.value / norm;
    Ok(GeneratorMoments { mean, second })
}

/// `4 Var(G)` from [`generator_moments`].
pub fn qfi_via_generator(beam: &BeamParams) -> Result<f64> {
    Ok(generator_moments(beam)?.qfi())
}

/// Classical Fisher information of direct intensity detection,
/// `2π ∫ r (∂_z p)² / p dr`, evaluated by quadrature with `∂_z p` from
/// Richardson-extrapolated central differences of `p(r | w²(z))`.
pub fn classical_fi_numeric<W: WidthProfile + ?Sized>(profile: &W, z: f64, quad_tol: f64) -> Result<f64> {
    finite("z", z)?;
    if !(quad_tol > 0.0 && quad_tol <= 1e-4) {
        return Err(Error::InvalidParameter {
            name: "quad_tol",
            value: quad_tol,
            reason: "must lie in (0, 1e-4]",
        });
    }
    let h = (profile.axial_scale() * FD_REL_STEP).max(FD_MIN_STEP);
    let widths = [
        profile.width_sq(z),
        profile.width_sq(z + h),
        profile.width_sq(z - h),
        profile.width_sq(z + 0.5 * h),
        profile.width_sq(z - 0.5 * h),
    ];
    for &w_sq in &widths {
        positive("width_sq", w_sq)?;
    }
    let [w0_sq, wp, wm, wp2, wm2] = widths;

    let mut bad = None;
    let integrand = |r: f64| {
        let p = gaussian_pdf(w0_sq, r);
        if p < 0.0 {
            bad.get_or_insert(Error::NegativeDensity { r, value: p });
            return 0.0;
        }
        if p == 0.0 {
            return 0.0;
        }
        let coarse = (gaussian_pdf(wp, r) - gaussian_pdf(wm, r)) / (2.0 * h);
        let fine = (gaussian_pdf(wp2, r) - gaussian_pdf(wm2, r)) / h;
        let dp = (4.0 * fine - coarse) / 3.0;
        2.0 * PI * r * dp * dp / p
    };
    // Absolute floor far below any informative plane, so near-waist planes
    // (F -> 0) still terminate.
    let opts = QuadOptions {
        abs_tol: quad_tol * 1e-8 / profile.axial_scale().powi(2),
        ..QuadOptions::with_rel_tol(quad_tol)
    };
    let result = integrate_to_infinity(integrand, 0.0, w0_sq.sqrt(), &opts);
    if let Some(err) = bad {
        return Err(err);
    }
    Ok(result?.value)
}

/// `(∂_z w² / w²)² = 4 C(z)²` for a free-space Gaussian beam.
pub fn classical_fi_analytic(beam: &BeamParams, z: f64) -> f64 {
    let c = beam.wavefront_curvature(z);
    4.0 * c * c
}

/// Intensity Fisher information about the waist-to-lens distance for a
/// detector at `detector_plane` behind the relay lens.
pub fn image_fi(beam: &BeamParams, relay: &RelaySystem, detector_plane: f64) -> f64 {
    let rw = RelayedWidth {
        beam: *beam,
        focal_length: relay.focal_length(),
        detector_plane,
    };
    let (w_sq, dw_sq) = rw.width_sq_and_derivative(relay.object_distance());
    let slope = dw_sq / w_sq;
    slope * slope
}

/// Image-space information sampled on a set of detector planes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FisherScan {
    pub plane_positions: Vec<f64>,
    pub fi_values: Vec<f64>,
    pub qfi: f64,
}

impl FisherScan {
    pub fn new(beam: &BeamParams, relay: &RelaySystem, planes: Vec<f64>) -> Self {
        let fi_values = planes.iter().map(|&zp| image_fi(beam, relay, zp)).collect();
        Self {
            plane_positions: planes,
            fi_values,
            qfi: qfi_gaussian(beam),
        }
    }

    /// `n` evenly spaced planes from `start` to `end` inclusive.
    pub fn linspace(beam: &BeamParams, relay: &RelaySystem, start: f64, end: f64, n: usize) -> Self {
        Self::new(beam, relay, linspace(start, end, n))
    }

    pub fn normalized(&self) -> impl Iterator<Item = f64> + '_ {
        self.fi_values.iter().map(move |f| f / self.qfi)
    }
}

pub(crate) fn linspace(start: f64, end: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let step = (end - start) / (n - 1) as f64;
            (0..n)
                .map(|i| if i == n - 1 { end } else { start + step * i as f64 })
                .collect()
        }
    }
}

/// The two detector planes where image-space intensity information equals
/// the quantum limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptimalPlanes {
    pub alpha: f64,
    pub plane_plus: f64,
    pub plane_minus: f64,
    /// Set when the planes came from numeric maximization rather than the
    /// closed form.
    pub fallback: bool,
}

impl OptimalPlanes {
    /// The plane farther from the sharp geometric image.
    pub fn most_defocused(&self, geometric_image: f64) -> f64 {
        if (self.plane_minus - geometric_image).abs() > (self.plane_plus - geometric_image).abs() {
            self.plane_minus
        } else {
            self.plane_plus
        }
    }
}

pub fn alpha(beam: &BeamParams, relay: &RelaySystem) -> f64 {
    let zr = beam.rayleigh_range();
    let gap = relay.focal_length() - relay.object_distance();
    (gap - zr) / (gap + zr)
}

/// Closed-form optimal planes `z0' + α z_R'` and `z0' - z_R'/α`, with
/// `α = (f - z - z_R)/(f - z + z_R)`.
pub fn optimal_detection_planes(beam: &BeamParams, relay: &RelaySystem) -> Result<OptimalPlanes> {
    let alpha = alpha(beam, relay);
    if !alpha.is_finite() || alpha.abs() < 1e-12 {
        return Err(Error::DegenerateAlpha { alpha });
    }
    let img = relay_transform(beam, relay);
    Ok(OptimalPlanes {
        alpha,
        plane_plus: img.waist_position + alpha * img.rayleigh_range,
        plane_minus: img.waist_position - img.rayleigh_range / alpha,
        fallback: false,
    })
}

/// [`optimal_detection_planes`], falling back to numeric maximization of
/// [`image_fi`] when the closed form is degenerate.
pub fn optimal_planes_or_numeric(beam: &BeamParams, relay: &RelaySystem) -> Result<OptimalPlanes> {
    match optimal_detection_planes(beam, relay) {
        Err(Error::DegenerateAlpha { alpha }) => Ok(numeric_optimal_planes(beam, relay, alpha)),
        other => other,
    }
}

const NUMERIC_SPAN: f64 = 100.0;

fn numeric_optimal_planes(beam: &BeamParams, relay: &RelaySystem, alpha: f64) -> OptimalPlanes {
    let img = relay_transform(beam, relay);
    let lo = img.waist_position - NUMERIC_SPAN * img.rayleigh_range;
    let hi = img.waist_position + NUMERIC_SPAN * img.rayleigh_range;
    let fi = |zp: f64| image_fi(beam, relay, zp);
    let grid = linspace(lo, hi, 20_001);
    let values: Vec<f64> = grid.iter().map(|&zp| fi(zp)).collect();
    let step = grid[1] - grid[0];

    let mut maxima: Vec<f64> = (1..grid.len() - 1)
        .filter(|&i| values[i] >= values[i - 1] && values[i] > values[i + 1])
        .map(|i| golden_section_max(fi, grid[i] - step, grid[i] + step, 1e-12 * img.rayleigh_range))
        .collect();
    // A maximum pushed to infinity shows up as a monotone rise toward an edge.
    if maxima.len() < 2 {
        let edge = if values[0] > values[values.len() - 1] { lo } else { hi };
        maxima.push(edge);
    }
    maxima.sort_by(|a, b| fi(*b).total_cmp(&fi(*a)));
    let (a, b) = (maxima[0], maxima[1]);
    let (plane_minus, plane_plus) = if a < b { (a, b) } else { (b, a) };
    OptimalPlanes {
        alpha,
        plane_plus,
        plane_minus,
        fallback: true,
    }
}

/// Golden-section search for a maximum of `f` on `[lo, hi]`.
pub fn golden_section_max<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while (hi - lo).abs() > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        }
        if x1 == x2 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Plane of the sharp geometric image, `f z / (z - f)`.
pub fn geometric_image_plane(relay: &RelaySystem) -> Result<f64> {
    let f = relay.focal_length();
    let z = relay.object_distance();
    if z == f {
        return Err(Error::NoGeometricImage);
    }
    Ok(f * z / (z - f))
}

/// Radial density of Fisher information `r (∂_z p)² / p` for squared width
/// `w²` and axial derivative `dw²/dz`.
pub fn fi_density(width_sq: f64, dwidth_sq_dz: f64, r: f64) -> f64 {
    let slope = dwidth_sq_dz / width_sq;
    let shape = 2.0 * r * r / width_sq - 1.0;
    r * gaussian_pdf(width_sq, r) * slope * slope * shape * shape
}

/// Radius where [`fi_density`] vanishes, `w / √2`.
pub fn info_boundary(width_sq: f64) -> f64 {
    (0.5 * width_sq).sqrt()
}

/// Share of the Fisher information carried by detections at `r > r_b`.
pub fn info_fraction_outside(width_sq: f64, r_b: f64) -> Result<f64> {
    positive("width_sq", width_sq)?;
    non_negative("r_b", r_b)?;
    if r_b == 0.0 {
        return Ok(1.0);
    }
    if r_b.is_infinite() {
        return Ok(0.0);
    }
    let w = width_sq.sqrt();
    let opts = QuadOptions::with_rel_tol(1e-13);
    let density = |r: f64| fi_density(width_sq, width_sq, r);
    let total = integrate_to_infinity(density, 0.0, w, &opts)?.value;
    let outside = integrate_to_infinity(density, r_b, w, &opts)?.value;
    Ok(outside / total)
}

/// Closed-form share outside `w/√2`.
pub const INFO_FRACTION_AT_BOUNDARY: f64 = 2.0 / E;

/// A z-parameterized family of radial complex fields, not necessarily
/// normalized.
pub trait FieldFamily {
    fn amplitude(&self, r: f64, z: f64) -> Complex64;
    /// Transverse extent of the field at `z`.
    fn radial_scale(&self, z: f64) -> f64;
    /// Axial length over which the field changes appreciably around `z`.
    fn axial_scale(&self, z: f64) -> f64;
}

impl FieldFamily for BeamParams {
    fn amplitude(&self, r: f64, z: f64) -> Complex64 {
        // The kz carrier is factored out so its rounding is common to all r
        // (a pure gauge term that drops out of the variance).
        let w_sq = self.beam_width_sq(z);
        let k = self.wavenumber();
        let amp = (2.0 / (PI * w_sq)).sqrt() * (-r * r / w_sq).exp();
        let local = 0.5 * k * r * r * self.wavefront_curvature(z) - self.gouy_phase(z);
        Complex64::from_polar(1.0, -k * z) * Complex64::from_polar(amp, -local)
    }

    fn radial_scale(&self, z: f64) -> f64 {
        self.beam_width_sq(z).sqrt()
    }

    fn axial_scale(&self, _z: f64) -> f64 {
        self.rayleigh_range()
    }
}

/// Pupil field of a point source as a function of the source distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointSourceFamily {
    pub wavenumber: f64,
    pub pupil_width: f64,
    pub focal_length: f64,
}

impl PointSourceFamily {
    pub fn at(&self, z: f64) -> Result<PupilField> {
        PupilField::new(self.pupil_width, self.wavenumber, z, self.focal_length)
    }
}

impl FieldFamily for PointSourceFamily {
    fn amplitude(&self, r: f64, z: f64) -> Complex64 {
        let wl_sq = self.pupil_width * self.pupil_width;
        let amp = (2.0 / (PI * wl_sq)).sqrt() * (-r * r / wl_sq).exp();
        let phase = self.wavenumber * r * r / (2.0 * (z - self.focal_length));
        Complex64::from_polar(amp, -phase)
    }

    fn radial_scale(&self, _z: f64) -> f64 {
        self.pupil_width
    }

    fn axial_scale(&self, z: f64) -> f64 {
        // Distance over which the pupil-edge phase k w_l² / 2(z - f) moves by
        // about a radian.
        let d = (z - self.focal_length).abs();
        let edge_phase = self.wavenumber * self.pupil_width * self.pupil_width / (2.0 * d);
        d / edge_phase.max(1.0)
    }
}

/// Maximum tolerated deviation of the renormalized state norm from one.
pub const NORMALIZATION_DRIFT_LIMIT: f64 = 1e-8;

/// Pure-state quantum Fisher information
/// `4 [<∂ψ|∂ψ> - |<ψ|∂ψ>|²]` of a radial field family at `z`.
///
/// Each field evaluation is renormalized by its own quadrature norm, so
/// lossy (non-unitary) families such as a pupil-filtered wave are handled.
pub fn qfi_pure_state<F: FieldFamily + ?Sized>(family: &F, z: f64) -> Result<f64> {
    finite("z", z)?;
    let h = (family.axial_scale(z) * FD_REL_STEP).max(FD_MIN_STEP);
    let scale = family.radial_scale(z);
    positive("radial_scale", scale)?;
    let opts = QuadOptions::with_rel_tol(1e-9);

    // z, z+h, z-h, z+h/2, z-h/2
    let zs = [z, z + h, z - h, z + 0.5 * h, z - 0.5 * h];
    let mut inv_norms = [0.0; 5];
    for (slot, &zi) in inv_norms.iter_mut().zip(zs.iter()) {
        let norm = integrate_to_infinity(|r| 2.0 * PI * r * family.amplitude(r, zi).norm_sqr(), 0.0, scale, &opts)?
            .value;
        positive("state norm", norm)?;
        *slot = norm.sqrt().recip();
    }
    let psi = |i: usize, r: f64| family.amplitude(r, zs[i]) * inv_norms[i];

    let renormalized = integrate_to_infinity(|r| 2.0 * PI * r * psi(0, r).norm_sqr(), 0.0, scale, &opts)?.value;
    let drift = (renormalized - 1.0).abs();
    if drift > NORMALIZATION_DRIFT_LIMIT {
        return Err(Error::NormalizationDrift { drift });
    }

    let dpsi = |r: f64| {
        let coarse = (psi(1, r) - psi(2, r)) / (2.0 * h);
        let fine = (psi(3, r) - psi(4, r)) / h;
        (fine * 4.0 - coarse) / 3.0
    };
    let grad_sq = integrate_to_infinity(|r| 2.0 * PI * r * dpsi(r).norm_sqr(), 0.0, scale, &opts)?.value;
    // |<psi|dpsi>| <= sqrt(grad_sq); the real part is zero for a normalized
    // family, so it needs an absolute floor.
    let overlap_opts = QuadOptions {
        abs_tol: opts.rel_tol * grad_sq.sqrt(),
        ..opts
    };
    let overlap = |part: fn(Complex64) -> f64| {
        integrate_to_infinity(|r| 2.0 * PI * r * part(psi(0, r).conj() * dpsi(r)), 0.0, scale, &overlap_opts)
    };
    let c = Complex64::new(overlap(|c| c.re)?.value, overlap(|c| c.im)?.value);

    // <dpsi|dpsi> - |<psi|dpsi>|² is the squared norm of the component of
    // dpsi orthogonal to psi; integrating that directly avoids cancellation
    // (an error in c only enters at second order).
    let orthogonal = integrate_to_infinity(
        |r| 2.0 * PI * r * (dpsi(r) - c * psi(0, r)).norm_sqr(),
        0.0,
        scale,
        &QuadOptions {
            abs_tol: opts.rel_tol * grad_sq,
            ..opts
        },
    )?
    .value;
    Ok(4.0 * orthogonal)
}

/// Point-source quantum Fisher information `k² w_l⁴ / (4 z⁴)`, where `z` is
/// the source-to-pupil distance entering the quadratic phase.
pub fn qfi_point_source(wavenumber: f64, pupil_width: f64, z: f64) -> Result<f64> {
    positive("wavenumber", wavenumber)?;
    positive("pupil_width", pupil_width)?;
    finite("z", z)?;
    if z == 0.0 {
        return Err(Error::InvalidParameter {
            name: "z",
            value: z,
            reason: "must be non-zero",
        });
    }
    Ok((wavenumber * pupil_width.powi(2)).powi(2) / (4.0 * z.powi(4)))
}

/// Cramér–Rao standard deviation `1/√(n I)` for `n` detections.
pub fn crb_std(information: f64, detections: f64) -> f64 {
    (detections * information).sqrt().recip()
}
