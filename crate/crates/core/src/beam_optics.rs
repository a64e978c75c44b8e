//! Gaussian-beam propagation, thin-lens relay imaging and the point-source
//! pupil field.
//!
//! Every length is in meters. A beam is built from its wavelength and waist;
//! the wavenumber and Rayleigh range are always derived from those two.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{finite, non_negative, positive, Error, Result};

/// Fundamental Gaussian mode, described by wavelength and waist radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBeam")]
pub struct BeamParams {
    wavelength: f64,
    waist: f64,
}

#[derive(Deserialize)]
struct RawBeam {
    wavelength: f64,
    waist: f64,
}

impl TryFrom<RawBeam> for BeamParams {
    type Error = Error;

    fn try_from(raw: RawBeam) -> Result<Self> {
        BeamParams::new(raw.wavelength, raw.waist)
    }
}

impl BeamParams {
    pub fn new(wavelength: f64, waist: f64) -> Result<Self> {
        Ok(Self {
            wavelength: positive("wavelength", wavelength)?,
            waist: positive("waist", waist)?,
        })
    }

    /// Builds the beam whose Rayleigh range is `rayleigh_range` at the given
    /// wavelength, i.e. with waist `sqrt(z_R * lambda / pi)`.
    pub fn from_rayleigh_range(wavelength: f64, rayleigh_range: f64) -> Result<Self> {
        let wavelength = positive("wavelength", wavelength)?;
        let rayleigh_range = positive("rayleigh_range", rayleigh_range)?;
        Self::new(wavelength, (rayleigh_range * wavelength / PI).sqrt())
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn waist(&self) -> f64 {
        self.waist
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength
    }

    pub fn rayleigh_range(&self) -> f64 {
        PI * self.waist * self.waist / self.wavelength
    }

    /// Squared 1/e² intensity radius at distance `z` from the waist.
    pub fn beam_width_sq(&self, z: f64) -> f64 {
        let u = z / self.rayleigh_range();
        self.waist * self.waist * (1.0 + u * u)
    }

    /// Reciprocal wavefront radius `1/R(z) = z / (z² + z_R²)`. Zero at the
    /// waist, extremal (±1/(2 z_R)) at `z = ±z_R`.
    pub fn wavefront_curvature(&self, z: f64) -> f64 {
        let zr = self.rayleigh_range();
        z / (z * z + zr * zr)
    }

    pub fn gouy_phase(&self, z: f64) -> f64 {
        (z / self.rayleigh_range()).atan()
    }

    /// Normalized complex field of the mode at radius `r`, distance `z`,
    /// including the longitudinal phase `exp(-i[kz + k r² / 2R - gouy])`.
    pub fn field(&self, r: f64, z: f64) -> Complex64 {
        let w_sq = self.beam_width_sq(z);
        let k = self.wavenumber();
        let amplitude = (2.0 / (PI * w_sq)).sqrt() * (-r * r / w_sq).exp();
        let phase = k * z + 0.5 * k * r * r * self.wavefront_curvature(z) - self.gouy_phase(z);
        Complex64::from_polar(amplitude, -phase)
    }
}

/// Radial intensity `p(r) = 2/(pi w²) exp(-2 r²/w²)`: probability density
/// per unit area of a single detection for a beam of squared width `w²`.
pub fn intensity_pdf(width_sq: f64, r: f64) -> Result<f64> {
    positive("width_sq", width_sq)?;
    non_negative("r", r)?;
    Ok(gaussian_pdf(width_sq, r))
}

#[inline]
pub(crate) fn gaussian_pdf(width_sq: f64, r: f64) -> f64 {
    2.0 / (PI * width_sq) * (-2.0 * r * r / width_sq).exp()
}

/// Thin lens of focal length `f` placed a distance `z` after the beam waist.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRelay")]
pub struct RelaySystem {
    focal_length: f64,
    object_distance: f64,
}

#[derive(Deserialize)]
struct RawRelay {
    focal_length: f64,
    object_distance: f64,
}

impl TryFrom<RawRelay> for RelaySystem {
    type Error = Error;

    fn try_from(raw: RawRelay) -> Result<Self> {
        RelaySystem::new(raw.focal_length, raw.object_distance)
    }
}

impl RelaySystem {
    pub fn new(focal_length: f64, object_distance: f64) -> Result<Self> {
        finite("focal_length", focal_length)?;
        if focal_length == 0.0 {
            return Err(Error::InvalidParameter {
                name: "focal_length",
                value: focal_length,
                reason: "must be non-zero",
            });
        }
        Ok(Self {
            focal_length,
            object_distance: finite("object_distance", object_distance)?,
        })
    }

    /// Relay whose lens images a beam of Rayleigh range `z_r` with
    /// magnification `m` (so `m² = f²/[(z-f)² + z_R²]`), object beyond the
    /// front focal point.
    pub fn with_magnification(focal_length: f64, magnification: f64, z_r: f64) -> Result<Self> {
        positive("magnification", magnification)?;
        let defocus_sq = (focal_length / magnification).powi(2) - z_r * z_r;
        if defocus_sq < 0.0 {
            return Err(Error::InvalidParameter {
                name: "magnification",
                value: magnification,
                reason: "exceeds f / z_R for this beam",
            });
        }
        Self::new(focal_length, focal_length + defocus_sq.sqrt())
    }

    pub fn focal_length(&self) -> f64 {
        self.focal_length
    }

    pub fn object_distance(&self) -> f64 {
        self.object_distance
    }

    /// Same lens with the waist moved to `object_distance`.
    pub fn at_object_distance(&self, object_distance: f64) -> Self {
        Self {
            object_distance,
            ..*self
        }
    }
}

/// Gaussian beam behind the relay lens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ImageBeam {
    pub m_sq: f64,
    pub waist_sq: f64,
    pub rayleigh_range: f64,
    pub waist_position: f64,
}

impl ImageBeam {
    pub fn waist(&self) -> f64 {
        self.waist_sq.sqrt()
    }

    /// Squared width at detector position `z_prime` (measured from the lens).
    pub fn width_sq(&self, z_prime: f64) -> f64 {
        let u = (z_prime - self.waist_position) / self.rayleigh_range;
        self.waist_sq * (1.0 + u * u)
    }
}

/// Transforms the beam through the thin lens.
pub fn relay_transform(beam: &BeamParams, relay: &RelaySystem) -> ImageBeam {
    let f = relay.focal_length;
    let defocus = relay.object_distance - f;
    let zr = beam.rayleigh_range();
    let denom = defocus * defocus + zr * zr;
    debug_assert!(denom > 0.0);
    let m_sq = f * f / denom;
    ImageBeam {
        m_sq,
        waist_sq: m_sq * beam.waist() * beam.waist(),
        rayleigh_range: m_sq * zr,
        waist_position: m_sq * defocus + f,
    }
}

pub fn image_beam_width_sq(img: &ImageBeam, z_prime: f64) -> f64 {
    img.width_sq(z_prime)
}

/// Squared detector-plane width as a function of one axial coordinate of the
/// object, with its analytic derivative.
pub trait WidthProfile {
    fn width_sq(&self, z: f64) -> f64;
    fn dwidth_sq_dz(&self, z: f64) -> f64;
    /// Axial length over which the width changes appreciably.
    fn axial_scale(&self) -> f64;
}

/// Without a relay, `z` is the waist-to-detector distance.
impl WidthProfile for BeamParams {
    fn width_sq(&self, z: f64) -> f64 {
        self.beam_width_sq(z)
    }

    fn dwidth_sq_dz(&self, z: f64) -> f64 {
        let zr = self.rayleigh_range();
        2.0 * self.waist * self.waist * z / (zr * zr)
    }

    fn axial_scale(&self) -> f64 {
        self.rayleigh_range()
    }
}

/// Width on a detector fixed at `detector_plane` behind a lens, as a function
/// of the waist-to-lens distance `z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelayedWidth {
    pub beam: BeamParams,
    pub focal_length: f64,
    pub detector_plane: f64,
}

impl RelayedWidth {
    /// `(w'², dw'²/dz)`, propagating `z` through m², z0' and z_R'.
    pub fn width_sq_and_derivative(&self, z: f64) -> (f64, f64) {
        let f = self.focal_length;
        let zr = self.beam.rayleigh_range();
        let w0_sq = self.beam.waist() * self.beam.waist();
        let defocus = z - f;
        let denom = defocus * defocus + zr * zr;
        let m_sq = f * f / denom;
        let dm_sq = -2.0 * f * f * defocus / (denom * denom);
        let waist_pos_slope = dm_sq * defocus + m_sq;
        let p = self.detector_plane - (m_sq * defocus + f);
        let dp = -waist_pos_slope;

        let width_sq = w0_sq * (m_sq + p * p / (m_sq * zr * zr));
        let dwidth_sq =
            w0_sq * (dm_sq + (2.0 * p * dp * m_sq - p * p * dm_sq) / (m_sq * m_sq * zr * zr));
        (width_sq, dwidth_sq)
    }
}

impl WidthProfile for RelayedWidth {
    fn width_sq(&self, z: f64) -> f64 {
        self.width_sq_and_derivative(z).0
    }

    fn dwidth_sq_dz(&self, z: f64) -> f64 {
        self.width_sq_and_derivative(z).1
    }

    fn axial_scale(&self) -> f64 {
        self.beam.rayleigh_range()
    }
}

/// Where the camera sits relative to the source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DetectionGeometry {
    /// Camera a distance `plane` from the waist, no optics.
    Direct { beam: BeamParams, plane: f64 },
    /// Camera at `detector_plane` behind the relay lens.
    Relayed {
        beam: BeamParams,
        relay: RelaySystem,
        detector_plane: f64,
    },
}

impl DetectionGeometry {
    pub fn beam(&self) -> &BeamParams {
        match self {
            Self::Direct { beam, .. } | Self::Relayed { beam, .. } => beam,
        }
    }

    /// Axial coordinate of the object at zero displacement: the detector
    /// distance for `Direct`, the waist-to-lens distance for `Relayed`.
    pub fn nominal_z(&self) -> f64 {
        match self {
            Self::Direct { plane, .. } => *plane,
            Self::Relayed { relay, .. } => relay.object_distance(),
        }
    }

    fn relayed(&self) -> Option<RelayedWidth> {
        match *self {
            Self::Direct { .. } => None,
            Self::Relayed {
                beam,
                relay,
                detector_plane,
            } => Some(RelayedWidth {
                beam,
                focal_length: relay.focal_length(),
                detector_plane,
            }),
        }
    }

    /// Squared width on the detector when the object is displaced by `delta`.
    pub fn width_sq_at(&self, delta: f64) -> f64 {
        self.width_sq(self.nominal_z() + delta)
    }

    /// `d ln w² / dz` at displacement `delta`.
    pub fn log_width_slope_at(&self, delta: f64) -> f64 {
        let z = self.nominal_z() + delta;
        self.dwidth_sq_dz(z) / self.width_sq(z)
    }
}

impl WidthProfile for DetectionGeometry {
    fn width_sq(&self, z: f64) -> f64 {
        match self.relayed() {
            Some(rw) => rw.width_sq(z),
            None => self.beam().beam_width_sq(z),
        }
    }

    fn dwidth_sq_dz(&self, z: f64) -> f64 {
        match self.relayed() {
            Some(rw) => rw.dwidth_sq_dz(z),
            None => self.beam().dwidth_sq_dz(z),
        }
    }

    fn axial_scale(&self) -> f64 {
        self.beam().rayleigh_range()
    }
}

/// Field in a Gaussian pupil of width `w_l` produced by a point source a
/// distance `z` away, for a lens of focal length `f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PupilField {
    pupil_width: f64,
    wavenumber: f64,
    source_distance: f64,
    focal_length: f64,
}

impl PupilField {
    pub fn new(pupil_width: f64, wavenumber: f64, source_distance: f64, focal_length: f64) -> Result<Self> {
        positive("pupil_width", pupil_width)?;
        positive("wavenumber", wavenumber)?;
        finite("source_distance", source_distance)?;
        finite("focal_length", focal_length)?;
        if source_distance == focal_length {
            return Err(Error::InvalidParameter {
                name: "source_distance",
                value: source_distance,
                reason: "must differ from the focal length",
            });
        }
        Ok(Self {
            pupil_width,
            wavenumber,
            source_distance,
            focal_length,
        })
    }

    pub fn pupil_width(&self) -> f64 {
        self.pupil_width
    }

    pub fn wavenumber(&self) -> f64 {
        self.wavenumber
    }

    pub fn source_distance(&self) -> f64 {
        self.source_distance
    }

    pub fn focal_length(&self) -> f64 {
        self.focal_length
    }

    /// `|U|²`; independent of the source distance.
    pub fn intensity_pdf(&self, r: f64) -> Result<f64> {
        non_negative("r", r)?;
        Ok(gaussian_pdf(self.pupil_width * self.pupil_width, r))
    }

    /// Quadratic phase `k r² / [2 (z - f)]` in radians.
    pub fn phase(&self, r: f64) -> f64 {
        self.wavenumber * r * r / (2.0 * (self.source_distance - self.focal_length))
    }

    pub fn field(&self, r: f64) -> Complex64 {
        let wl_sq = self.pupil_width * self.pupil_width;
        let amplitude = (2.0 / (PI * wl_sq)).sqrt() * (-r * r / wl_sq).exp();
        Complex64::from_polar(amplitude, -self.phase(r))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate_to_infinity, QuadOptions};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn unit_beam() -> BeamParams {
        // w0 = 1, z_R = 1 needs lambda = pi.
        BeamParams::new(PI, 1.0).unwrap()
    }

    #[test]
    fn derived_fields_are_consistent() {
        let b = BeamParams::new(632.8e-9, 2e-6).unwrap();
        assert_relative_eq!(b.rayleigh_range() * b.wavelength(), PI * 4e-12, max_relative = 1e-15);
        assert_relative_eq!(b.wavenumber(), 2.0 * PI / 632.8e-9);
        assert!(BeamParams::new(0.0, 1.0).is_err());
        assert!(BeamParams::new(1.0, -1.0).is_err());
        assert!(BeamParams::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn width_examples() {
        let b = unit_beam();
        assert_relative_eq!(b.beam_width_sq(0.0), 1.0);
        assert_relative_eq!(b.beam_width_sq(1.0), 2.0, max_relative = 1e-15);
        assert_relative_eq!(b.beam_width_sq(-1.0), 2.0, max_relative = 1e-15);

        let exp = BeamParams::from_rayleigh_range(632.8e-9, 18.9e-6).unwrap();
        assert_relative_eq!(exp.waist(), 1.951e-6, max_relative = 5e-4);
        // 2 z_R lambda / pi, evaluated independently.
        let expected = 2.0 * 18.9e-6 * 632.8e-9 / PI;
        assert_relative_eq!(exp.beam_width_sq(18.9e-6), expected, max_relative = 1e-13);
        assert_relative_eq!(expected, 7.614e-12, max_relative = 1e-3);
    }

    #[test]
    fn curvature_examples() {
        let b = unit_beam();
        assert_eq!(b.wavefront_curvature(0.0), 0.0);
        assert_relative_eq!(b.wavefront_curvature(1.0), 0.5, max_relative = 1e-15);
        assert_relative_eq!(b.wavefront_curvature(10.0), 10.0 / 101.0, max_relative = 1e-15);
    }

    #[test]
    fn curvature_extrema_by_scan() {
        let b = unit_beam();
        let grid: Vec<f64> = (0..=20_000).map(|i| -10.0 + i as f64 * 1e-3).collect();
        let (imax, _) = grid
            .iter()
            .enumerate()
            .max_by(|a, c| b.wavefront_curvature(*a.1).total_cmp(&b.wavefront_curvature(*c.1)))
            .unwrap();
        let (imin, _) = grid
            .iter()
            .enumerate()
            .min_by(|a, c| b.wavefront_curvature(*a.1).total_cmp(&b.wavefront_curvature(*c.1)))
            .unwrap();
        assert_relative_eq!(grid[imax], 1.0, epsilon = 1e-9);
        assert_relative_eq!(grid[imin], -1.0, epsilon = 1e-9);
        assert_relative_eq!(b.wavefront_curvature(-1.0), -0.5);
    }

    #[test]
    fn gouy_examples() {
        let b = unit_beam();
        assert_eq!(b.gouy_phase(0.0), 0.0);
        assert_relative_eq!(b.gouy_phase(1.0), PI / 4.0);
        assert_relative_eq!(b.gouy_phase(1e12), PI / 2.0, epsilon = 1e-11);
        assert_relative_eq!(b.gouy_phase(-3.0), -b.gouy_phase(3.0));
    }

    #[test]
    fn intensity_pdf_values() {
        assert_relative_eq!(intensity_pdf(1.0, 0.0).unwrap(), 2.0 / PI);
        assert_relative_eq!(intensity_pdf(2.0, 1.0).unwrap(), (-1.0f64).exp() / PI, max_relative = 1e-15);
        assert_relative_eq!(intensity_pdf(2.0, 1.0).unwrap(), 0.11709, max_relative = 1e-4);
        assert!(intensity_pdf(0.0, 1.0).is_err());
        assert!(intensity_pdf(1.0, -1.0).is_err());
    }

    #[test]
    fn intensity_pdf_normalized_over_decades() {
        let opts = QuadOptions::with_rel_tol(1e-12);
        for exp in -12..=0 {
            let w_sq = 10f64.powi(exp);
            let total = integrate_to_infinity(
                |r| intensity_pdf(w_sq, r).unwrap() * 2.0 * PI * r,
                0.0,
                w_sq.sqrt(),
                &opts,
            )
            .unwrap()
            .value;
            assert_relative_eq!(total, 1.0, max_relative = 1e-10);
        }
    }

    #[test]
    fn relay_fig2_values() {
        let img = relay_transform(&unit_beam(), &RelaySystem::new(1.0, 5.0).unwrap());
        assert_relative_eq!(img.m_sq, 1.0 / 17.0, max_relative = 1e-15);
        assert_relative_eq!(img.rayleigh_range, 1.0 / 17.0, max_relative = 1e-14);
        assert_relative_eq!(img.waist_position, 21.0 / 17.0, max_relative = 1e-15);
        assert_relative_eq!(img.width_sq(4.0 / 3.0), 2.0 / 9.0, max_relative = 1e-14);
        assert_relative_eq!(img.width_sq(img.waist_position), img.waist_sq);
    }

    #[test]
    fn relay_at_front_focus() {
        let b = BeamParams::from_rayleigh_range(1e-6, 0.3).unwrap();
        let img = relay_transform(&b, &RelaySystem::new(2.0, 2.0).unwrap());
        assert_relative_eq!(img.m_sq, 4.0 / 0.09, max_relative = 1e-14);
        assert_eq!(img.waist_position, 2.0);
    }

    #[test]
    fn twenty_x_relay() {
        let zr = 18.9e-6;
        let b = BeamParams::from_rayleigh_range(632.8e-9, zr).unwrap();
        let relay = RelaySystem::with_magnification(0.1, 20.0, zr).unwrap();
        let img = relay_transform(&b, &relay);
        assert_relative_eq!(img.m_sq, 400.0, max_relative = 1e-12);
        assert_relative_eq!(img.rayleigh_range, 7.56e-3, max_relative = 1e-12);
        assert!(RelaySystem::with_magnification(0.1, 1e5, zr).is_err());
    }

    #[test]
    fn relay_rejects_zero_focal_length() {
        assert!(RelaySystem::new(0.0, 1.0).is_err());
    }

    #[test]
    fn pupil_field_examples() {
        let p = PupilField::new(1.0, 1e7, 2e5, 0.0).unwrap();
        assert_relative_eq!(p.phase(1.0), 25.0, max_relative = 1e-15);
        assert_relative_eq!(p.intensity_pdf(0.0).unwrap(), 2.0 / PI);
        assert_relative_eq!(p.field(0.7).norm_sqr(), p.intensity_pdf(0.7).unwrap(), max_relative = 1e-14);
        assert!(PupilField::new(0.0, 1.0, 1.0, 0.0).is_err());
        assert!(PupilField::new(1.0, 1.0, 1.0, 1.0).is_err());

        let opts = QuadOptions::with_rel_tol(1e-12);
        for wl in [1e-3, 0.5, 3.0] {
            let p = PupilField::new(wl, 1e6, 10.0, 1.0).unwrap();
            let total =
                integrate_to_infinity(|r| p.intensity_pdf(r).unwrap() * 2.0 * PI * r, 0.0, wl, &opts).unwrap();
            assert_relative_eq!(total.value, 1.0, max_relative = 1e-11);
        }
    }

    #[test]
    fn gaussian_field_intensity_matches_pdf() {
        let b = BeamParams::from_rayleigh_range(500e-9, 1e-5).unwrap();
        for z in [0.0, 3e-6, -2e-5] {
            let w_sq = b.beam_width_sq(z);
            let r = 0.6 * w_sq.sqrt();
            assert_relative_eq!(b.field(r, z).norm_sqr(), gaussian_pdf(w_sq, r), max_relative = 1e-12);
        }
    }

    #[test]
    fn relayed_derivative_matches_finite_difference() {
        let b = unit_beam();
        let rw = RelayedWidth {
            beam: b,
            focal_length: 1.0,
            detector_plane: 4.0 / 3.0,
        };
        for z in [5.0, 2.5, -1.0, 0.3] {
            let h = 1e-5;
            let fd = (rw.width_sq(z + h) - rw.width_sq(z - h)) / (2.0 * h);
            assert_relative_eq!(rw.dwidth_sq_dz(z), fd, max_relative = 1e-7);
        }
    }

    #[test]
    fn geometry_nominal_and_width() {
        let b = unit_beam();
        let direct = DetectionGeometry::Direct { beam: b, plane: -1.0 };
        assert_eq!(direct.nominal_z(), -1.0);
        assert_relative_eq!(direct.width_sq_at(1.0), 1.0);
        assert_relative_eq!(direct.log_width_slope_at(0.0), -1.0);

        let relay = RelaySystem::new(1.0, 5.0).unwrap();
        let relayed = DetectionGeometry::Relayed {
            beam: b,
            relay,
            detector_plane: 4.0 / 3.0,
        };
        assert_eq!(relayed.nominal_z(), 5.0);
        assert_relative_eq!(relayed.width_sq_at(0.0), 2.0 / 9.0, max_relative = 1e-14);
    }

    proptest! {
        #[test]
        fn width_is_even(z in -1e3f64..1e3, w0 in 1e-7f64..1e-2, lambda in 1e-7f64..1e-5) {
            let b = BeamParams::new(lambda, w0).unwrap();
            prop_assert_eq!(b.beam_width_sq(z), b.beam_width_sq(-z));
            prop_assert!(b.beam_width_sq(z) >= b.beam_width_sq(0.0));
        }

        #[test]
        fn image_rayleigh_consistency(
            z in -10.0f64..10.0, f in prop_oneof![-5.0f64..-0.1, 0.1f64..5.0], zr in 0.05f64..5.0,
        ) {
            let b = BeamParams::from_rayleigh_range(1e-6, zr).unwrap();
            let img = relay_transform(&b, &RelaySystem::new(f, z).unwrap());
            prop_assert!((img.rayleigh_range / (img.m_sq * zr) - 1.0).abs() < 1e-12);
            prop_assert!((img.waist_sq / (img.m_sq * b.waist() * b.waist()) - 1.0).abs() < 1e-12);
            for zp in [img.waist_position + img.rayleigh_range, img.waist_position - img.rayleigh_range] {
                prop_assert!((img.width_sq(zp) / (2.0 * img.waist_sq) - 1.0).abs() < 1e-9);
            }
        }
    }
}
