//! Resolved run configurations and their `key=value` text form.
//!
//! The same text form is used for the config file, for command-line flags
//! and for the `#` header written at the top of every output, so a header
//! parses back into the exact configuration that produced it.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use axial_core::estimators::{EstimatorKind, FractionNormalization};
use axial_core::photon_sim::CountModel;

use crate::CliError;

/// Default seed, `0xA71A10C`.
pub const DEFAULT_SEED: u64 = 0xA71A_10C;

pub trait Value: Sized {
    fn parse(s: &str) -> Result<Self, String>;
    fn render(&self) -> String;
}

/// A length in meters; accepts `nm`, `um`, `µm`, `mm`, `m` and `km`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Length(pub f64);

pub fn parse_length(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let units = [("nm", 1e-9), ("um", 1e-6), ("µm", 1e-6), ("mm", 1e-3), ("km", 1e3), ("m", 1.0)];
    let (number, scale) = units
        .iter()
        .find_map(|&(suffix, scale)| s.strip_suffix(suffix).map(|n| (n.trim_end(), scale)))
        .unwrap_or((s, 1.0));
    let x: f64 = number.parse().map_err(|_| format!("not a length: {s:?}"))?;
    if !x.is_finite() {
        return Err(format!("not a finite length: {s:?}"));
    }
    Ok(x * scale)
}

impl Value for Length {
    fn parse(s: &str) -> Result<Self, String> {
        parse_length(s).map(Length)
    }
    fn render(&self) -> String {
        format!("{:e}", self.0)
    }
}

impl Value for f64 {
    fn parse(s: &str) -> Result<Self, String> {
        s.trim()
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| format!("not a finite number: {s:?}"))
    }
    fn render(&self) -> String {
        format!("{self:e}")
    }
}

fn parse_count(s: &str) -> Result<u64, String> {
    let s = s.trim();
    if let Ok(n) = s.parse::<u64>() {
        return Ok(n);
    }
    // Counts like 1.6e6.
    match s.parse::<f64>() {
        Ok(x) if x >= 0.0 && x.fract() == 0.0 && x < u64::MAX as f64 => Ok(x as u64),
        _ => Err(format!("not a non-negative integer: {s:?}")),
    }
}

impl Value for u64 {
    fn parse(s: &str) -> Result<Self, String> {
        parse_count(s)
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

impl Value for usize {
    fn parse(s: &str) -> Result<Self, String> {
        parse_count(s).and_then(|n| usize::try_from(n).map_err(|e| e.to_string()))
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

impl Value for bool {
    fn parse(s: &str) -> Result<Self, String> {
        match s.trim() {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            other => Err(format!("not a boolean: {other:?}")),
        }
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

/// Optional setting written as `none` when absent.
impl<T: Value> Value for Option<T> {
    fn parse(s: &str) -> Result<Self, String> {
        match s.trim() {
            "none" => Ok(None),
            other => T::parse(other).map(Some),
        }
    }
    fn render(&self) -> String {
        self.as_ref().map_or_else(|| "none".into(), Value::render)
    }
}

/// Setting derived from the others unless given, written as `auto`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Auto<T>(pub Option<T>);

impl<T: Value> Value for Auto<T> {
    fn parse(s: &str) -> Result<Self, String> {
        match s.trim() {
            "auto" => Ok(Auto(None)),
            other => T::parse(other).map(|v| Auto(Some(v))),
        }
    }
    fn render(&self) -> String {
        self.0.as_ref().map_or_else(|| "auto".into(), Value::render)
    }
}

/// Seeds may be written in decimal or as `0x` hex; they are echoed in decimal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seed(pub u64);

impl Value for Seed {
    fn parse(s: &str) -> Result<Self, String> {
        let s = s.trim().replace('_', "");
        let parsed = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
            Some(hex) => u64::from_str_radix(hex, 16),
            None => s.parse(),
        };
        parsed.map(Seed).map_err(|_| format!("not a u64 seed: {s:?}"))
    }
    fn render(&self) -> String {
        self.0.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

macro_rules! word_enum {
    ($ty:ty { $($variant:path => $word:literal),* $(,)? }) => {
        impl Value for $ty {
            fn parse(s: &str) -> Result<Self, String> {
                match s.trim() {
                    $($word => Ok($variant),)*
                    other => Err(format!(
                        "expected one of {}, got {other:?}",
                        [$($word),*].join("|")
                    )),
                }
            }
            fn render(&self) -> String {
                match self {
                    $($variant => $word.to_string(),)*
                }
            }
        }
    };
}

word_enum!(Format { Format::Csv => "csv", Format::Json => "json" });
word_enum!(EstimatorKind {
    EstimatorKind::Fraction => "fraction",
    EstimatorKind::MleWidth => "mle-width",
});
word_enum!(CountModel { CountModel::Fixed => "fixed", CountModel::Poisson => "poisson" });
word_enum!(FractionNormalization {
    FractionNormalization::TotalCount => "total-count",
    FractionNormalization::Absolute => "absolute",
});

/// A group of settings addressable by key.
pub trait Settings {
    /// `(key, help)` for every setting, in header order.
    fn keys() -> Vec<(&'static str, &'static str)>;
    /// Returns `Ok(false)` for keys this group does not own.
    fn set(&mut self, key: &str, value: &str) -> Result<bool, CliError>;
    fn entries(&self) -> Vec<(&'static str, String)>;
}

macro_rules! settings {
    (
        $(#[$meta:meta])*
        pub struct $name:ident {
            $($(#[doc = $help:literal])* $field:ident : $ty:ty = $default:expr, $key:literal;)*
        }
    ) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name {
            $(pub $field: $ty,)*
        }

        impl Default for $name {
            fn default() -> Self {
                Self { $($field: $default,)* }
            }
        }

        impl Settings for $name {
            fn keys() -> Vec<(&'static str, &'static str)> {
                vec![$(($key, concat!($($help),*).trim_start())),*]
            }

            fn set(&mut self, key: &str, value: &str) -> Result<bool, CliError> {
                match key {
                    $($key => {
                        self.$field = <$ty as Value>::parse(value).map_err(|reason| CliError::Value {
                            key: key.to_string(),
                            reason,
                        })?;
                    })*
                    _ => return Ok(false),
                }
                Ok(true)
            }

            fn entries(&self) -> Vec<(&'static str, String)> {
                vec![$(($key, Value::render(&self.$field))),*]
            }
        }
    };
}

settings! {
    /// Source beam and optional relay lens.
    pub struct Geometry {
        /// Wavelength of the source.
        wavelength: Length = Length(PI), "wavelength";
        /// Rayleigh range of the source beam.
        rayleigh_range: Length = Length(1.0), "rayleigh-range";
        /// Relay focal length; `none` puts the camera directly in the beam.
        focal_length: Option<Length> = Some(Length(1.0)), "focal-length";
        /// Waist-to-lens distance (give this or --magnification).
        object_distance: Option<Length> = Some(Length(5.0)), "object-distance";
        /// Lateral relay magnification, used to place the object.
        magnification: Option<f64> = None, "magnification";
        /// Camera plane; `auto` picks the optimal plane farthest from the geometric image.
        detector_plane: Auto<Length> = Auto(None), "detector-plane";
    }
}

impl Geometry {
    /// The bench used for the simulated experiment: 632.8 nm, z_R = 18.9 um,
    /// 20x relay with a 100 mm lens.
    pub fn experiment() -> Self {
        Self {
            wavelength: Length(632.8e-9),
            rayleigh_range: Length(18.9e-6),
            focal_length: Some(Length(0.1)),
            object_distance: None,
            magnification: Some(20.0),
            detector_plane: Auto(None),
        }
    }
}

settings! {
    pub struct ScanGrid {
        /// First detector plane; `auto` is the image waist minus 4 image Rayleigh ranges.
        z_start: Auto<Length> = Auto(None), "z-start";
        /// Last detector plane; `auto` is the image waist plus 4 image Rayleigh ranges.
        z_end: Auto<Length> = Auto(None), "z-end";
        /// Number of planes.
        steps: usize = 401, "steps";
    }
}

settings! {
    pub struct RadialGrid {
        /// Largest radius; `auto` is three beam widths.
        r_max: Auto<Length> = Auto(None), "r-max";
        /// Number of radii.
        steps: usize = 301, "steps";
    }
}

settings! {
    pub struct TrialSettings {
        /// Axial displacement of the source from its nominal position.
        delta: Length = Length(100e-9), "delta";
        /// Detections per exposure.
        detections: u64 = 1_600_000, "detections";
        /// Number of simulated exposures.
        trials: usize = 200, "trials";
        /// fraction or mle-width.
        estimator: EstimatorKind = EstimatorKind::Fraction, "estimator";
        /// fixed or poisson photon number per exposure.
        count_model: CountModel = CountModel::Fixed, "count-model";
        /// total-count or absolute normalization of the outside fraction.
        normalization: FractionNormalization = FractionNormalization::TotalCount, "normalization";
    }
}

settings! {
    pub struct ExperimentSettings {
        /// Smallest displacement in the grid.
        delta_min: Length = Length(10e-9), "delta-min";
        /// Largest displacement in the grid.
        delta_max: Length = Length(1650e-9), "delta-max";
        /// Number of displacements.
        delta_steps: usize = 12, "delta-steps";
        /// Detections per exposure.
        detections: u64 = 1_600_000, "detections";
        /// Exposures per displacement.
        trials: usize = 200, "trials";
    }
}

settings! {
    pub struct PointSourceSettings {
        /// Wavenumber, 1/m.
        wavenumber: f64 = 1e7, "wavenumber";
        /// Gaussian pupil width.
        pupil_width: Length = Length(1.0), "pupil-width";
        /// Source-to-pupil distance.
        distance: Length = Length(2e5), "distance";
        /// Focal length of the pupil lens.
        focal_length: Length = Length(0.0), "focal-length";
        /// Number of detections.
        detections: u64 = 2_000_000, "detections";
    }
}

impl<A: Settings, B: Settings> Settings for (A, B) {
    fn keys() -> Vec<(&'static str, &'static str)> {
        let mut keys = A::keys();
        keys.extend(B::keys());
        keys
    }
    fn set(&mut self, key: &str, value: &str) -> Result<bool, CliError> {
        Ok(self.0.set(key, value)? || self.1.set(key, value)?)
    }
    fn entries(&self) -> Vec<(&'static str, String)> {
        let mut entries = self.0.entries();
        entries.extend(self.1.entries());
        entries
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandName {
    FiScan,
    FiDensity,
    OptimalPlane,
    Simulate,
    ReproduceExperiment,
    PointSource,
}

impl CommandName {
    pub const ALL: [CommandName; 6] = [
        Self::FiScan,
        Self::FiDensity,
        Self::OptimalPlane,
        Self::Simulate,
        Self::ReproduceExperiment,
        Self::PointSource,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::FiScan => "fi-scan",
            Self::FiDensity => "fi-density",
            Self::OptimalPlane => "optimal-plane",
            Self::Simulate => "simulate",
            Self::ReproduceExperiment => "reproduce-experiment",
            Self::PointSource => "point-source",
        }
    }

    pub fn about(self) -> &'static str {
        match self {
            Self::FiScan => "Image-space Fisher information against detector position (CSV)",
            Self::FiDensity => "Radial density of Fisher information at a detector plane (CSV)",
            Self::OptimalPlane => "Closed-form optimal detector planes behind a relay (JSON)",
            Self::Simulate => "Monte Carlo trials of one estimator at one displacement",
            Self::ReproduceExperiment => "Estimator statistics over the experiment's displacement grid",
            Self::PointSource => "Quantum Fisher information for a point source seen through a pupil (JSON)",
        }
    }

    pub fn default_format(self) -> Format {
        match self {
            Self::FiScan | Self::FiDensity | Self::ReproduceExperiment => Format::Csv,
            Self::OptimalPlane | Self::Simulate | Self::PointSource => Format::Json,
        }
    }

    pub fn keys(self) -> Vec<(&'static str, &'static str)> {
        match self {
            Self::FiScan => <(Geometry, ScanGrid)>::keys(),
            Self::FiDensity => <(Geometry, RadialGrid)>::keys(),
            Self::OptimalPlane => Geometry::keys(),
            Self::Simulate => <(Geometry, TrialSettings)>::keys(),
            Self::ReproduceExperiment => <(Geometry, ExperimentSettings)>::keys(),
            Self::PointSource => PointSourceSettings::keys(),
        }
    }
}

impl fmt::Display for CommandName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CommandName {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| CliError::Usage(format!("unknown command {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Params {
    FiScan(Geometry, ScanGrid),
    FiDensity(Geometry, RadialGrid),
    OptimalPlane(Geometry),
    Simulate(Geometry, TrialSettings),
    ReproduceExperiment(Geometry, ExperimentSettings),
    PointSource(PointSourceSettings),
}

impl Params {
    fn defaults(command: CommandName) -> Self {
        match command {
            CommandName::FiScan => Self::FiScan(Geometry::default(), ScanGrid::default()),
            CommandName::FiDensity => Self::FiDensity(Geometry::default(), RadialGrid::default()),
            CommandName::OptimalPlane => Self::OptimalPlane(Geometry::default()),
            CommandName::Simulate => Self::Simulate(Geometry::experiment(), TrialSettings::default()),
            CommandName::ReproduceExperiment => {
                Self::ReproduceExperiment(Geometry::experiment(), ExperimentSettings::default())
            }
            CommandName::PointSource => Self::PointSource(PointSourceSettings::default()),
        }
    }

    fn set(&mut self, key: &str, value: &str) -> Result<bool, CliError> {
        match self {
            Self::FiScan(g, s) => Ok(g.set(key, value)? || s.set(key, value)?),
            Self::FiDensity(g, s) => Ok(g.set(key, value)? || s.set(key, value)?),
            Self::OptimalPlane(g) => g.set(key, value),
            Self::Simulate(g, s) => Ok(g.set(key, value)? || s.set(key, value)?),
            Self::ReproduceExperiment(g, s) => Ok(g.set(key, value)? || s.set(key, value)?),
            Self::PointSource(s) => s.set(key, value),
        }
    }

    pub fn geometry_mut(&mut self) -> Option<&mut Geometry> {
        match self {
            Self::FiScan(g, _)
            | Self::FiDensity(g, _)
            | Self::OptimalPlane(g)
            | Self::Simulate(g, _)
            | Self::ReproduceExperiment(g, _) => Some(g),
            Self::PointSource(_) => None,
        }
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        fn both(a: &impl Settings, b: &impl Settings) -> Vec<(&'static str, String)> {
            let mut entries = a.entries();
            entries.extend(b.entries());
            entries
        }
        match self {
            Self::FiScan(g, s) => both(g, s),
            Self::FiDensity(g, s) => both(g, s),
            Self::OptimalPlane(g) => g.entries(),
            Self::Simulate(g, s) => both(g, s),
            Self::ReproduceExperiment(g, s) => both(g, s),
            Self::PointSource(s) => s.entries(),
        }
    }
}

/// Everything a run depends on.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: CommandName,
    pub seed: u64,
    pub format: Format,
    /// `None` writes to stdout.
    pub out: Option<String>,
    pub check: bool,
    pub params: Params,
}

impl RunConfig {
    pub fn new(command: CommandName) -> Self {
        Self {
            command,
            seed: DEFAULT_SEED,
            format: command.default_format(),
            out: None,
            check: false,
            params: Params::defaults(command),
        }
    }

    /// Applies one `key=value` setting. Keys may use `_` or `-`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let key = key.trim().replace('_', "-");
        let bad = |reason: String| CliError::Value {
            key: key.clone(),
            reason,
        };
        match key.as_str() {
            "seed" => self.seed = Seed::parse(value).map_err(bad)?.0,
            "format" => self.format = Format::parse(value).map_err(bad)?,
            "out" => self.out = Some(value.trim().to_string()).filter(|v| v != "-"),
            "check" => self.check = bool::parse(value).map_err(bad)?,
            _ => {
                if !self.params.set(&key, value)? {
                    return Err(CliError::Usage(format!("{} has no setting {key:?}", self.command)));
                }
                // The relay is placed by whichever of these was given last.
                if let Some(g) = self.params.geometry_mut() {
                    match key.as_str() {
                        "magnification" if g.magnification.is_some() => g.object_distance = None,
                        "object-distance" if g.object_distance.is_some() => g.magnification = None,
                        _ => {}
                    }
                }
            }
        }
        Ok(())
    }

    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let mut entries = vec![
            ("seed", self.seed.to_string()),
            ("format", self.format.render()),
            ("out", self.out.clone().unwrap_or_else(|| "-".into())),
            ("check", self.check.to_string()),
        ];
        entries.extend(self.params.entries());
        entries
    }

    /// Single-line text form: `axial <command> key=value ...`.
    pub fn header(&self) -> String {
        let mut line = format!("axial {}", self.command);
        for (key, value) in self.entries() {
            line.push(' ');
            line.push_str(key);
            line.push('=');
            line.push_str(&value);
        }
        line
    }

    /// Inverse of [`RunConfig::header`]. A leading `#` and anything after a
    /// ` | ` separator (derived values) are ignored.
    pub fn parse_header(line: &str) -> Result<Self, CliError> {
        let line = line.trim().trim_start_matches('#');
        let line = line.split(" | ").next().unwrap_or_default();
        let mut words = line.split_whitespace();
        if words.next() != Some("axial") {
            return Err(CliError::Usage("header does not start with `axial`".into()));
        }
        let command: CommandName = words
            .next()
            .ok_or_else(|| CliError::Usage("header names no command".into()))?
            .parse()?;
        let mut config = Self::new(command);
        for word in words {
            let (key, value) = word
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("malformed setting {word:?}")))?;
            config.set(key, value)?;
        }
        Ok(config)
    }
}

/// Parses a config file of `key = value` lines; `#` starts a comment.
pub fn parse_config_file(text: &str) -> Result<Vec<(String, String)>, CliError> {
    text.lines()
        .enumerate()
        .filter_map(|(i, raw)| {
            let line = raw.split('#').next().unwrap_or_default().trim();
            (!line.is_empty()).then(|| {
                line.split_once('=')
                    .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                    .ok_or_else(|| CliError::Usage(format!("config line {}: expected key=value", i + 1)))
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lengths_with_units() {
        assert_eq!(parse_length("18.9um").unwrap(), 18.9e-6);
        assert_eq!(parse_length("632.8 nm").unwrap(), 632.8e-9);
        assert_eq!(parse_length("7.56mm").unwrap(), 7.56e-3);
        assert_eq!(parse_length("200km").unwrap(), 2e5);
        assert_eq!(parse_length("2m").unwrap(), 2.0);
        assert_eq!(parse_length("1.5e-3").unwrap(), 1.5e-3);
        assert_eq!(parse_length("3µm").unwrap(), 3e-6);
        assert!(parse_length("3 furlongs").is_err());
        assert!(parse_length("inf").is_err());
    }

    #[test]
    fn counts_accept_exponents() {
        assert_eq!(u64::parse("1.6e6").unwrap(), 1_600_000);
        assert_eq!(u64::parse("42").unwrap(), 42);
        assert!(u64::parse("1.5").is_err());
        assert!(u64::parse("-3").is_err());
    }

    #[test]
    fn seeds_in_hex() {
        assert_eq!(Seed::parse("0xA71A10C").unwrap().0, DEFAULT_SEED);
        assert_eq!(Seed::parse("7").unwrap().0, 7);
        assert!(Seed::parse("0xA71AL0C").is_err());
    }

    #[test]
    fn header_round_trips_defaults() {
        for command in CommandName::ALL {
            let config = RunConfig::new(command);
            assert_eq!(RunConfig::parse_header(&config.header()).unwrap(), config);
        }
    }

    #[test]
    fn header_round_trips_odd_values() {
        let mut config = RunConfig::new(CommandName::Simulate);
        config.set("seed", "0xdeadbeef").unwrap();
        config.set("rayleigh-range", "18.9um").unwrap();
        config.set("wavelength", "0.1").unwrap();
        config.set("delta", "1e-7").unwrap();
        config.set("estimator", "mle-width").unwrap();
        config.set("detector_plane", "0.30000000000000004").unwrap();
        config.set("out", "runs/a.json").unwrap();
        let header = format!("# {} | qfi=1", config.header());
        assert_eq!(RunConfig::parse_header(&header).unwrap(), config);
    }

    #[test]
    fn unknown_keys_are_usage_errors() {
        let mut config = RunConfig::new(CommandName::PointSource);
        assert!(matches!(config.set("steps", "3"), Err(CliError::Usage(_))));
        assert!(matches!(config.set("distance", "far"), Err(CliError::Value { .. })));
    }

    #[test]
    fn config_file_lines() {
        let pairs = parse_config_file("# comment\nseed = 7\n\nrayleigh_range=1um # inline\n").unwrap();
        assert_eq!(
            pairs,
            vec![("seed".into(), "7".into()), ("rayleigh_range".into(), "1um".into())]
        );
        assert!(parse_config_file("oops").is_err());
    }
}
