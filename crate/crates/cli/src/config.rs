//! Scenario files: a TOML tree describing one field and the experiments run on it.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

use fhlab_core::frequency::WINDOW_MARGIN;
use fhlab_core::BuiltinKind;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub s: f64,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub grid: GridSpec,
    pub field: FieldSpec,
    #[serde(default)]
    pub potential: PotentialSpec,
    #[serde(default, rename = "experiment")]
    pub experiments: Vec<Experiment>,
}

fn default_dim() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Spatial period.
    pub length_x: f64,
    pub points_x: usize,
    /// Temporal period; samples cover `[-time_window, 0)`.
    pub time_window: f64,
    pub points_t: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { length_x: 2.0 * PI, points_x: 64, time_window: 2.0, points_t: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FieldSpec {
    /// Linear combination of closed-form solutions.
    Builtin { terms: Vec<Term> },
    /// Band-limited boundary datum given by its Fourier coefficients.
    Spectrum {
        modes: Vec<ModeSpec>,
        /// Each listed mode contributes `2 Re(c e^{iθ})` and the zero mode `Re c`.
        #[serde(default = "default_true")]
        real: bool,
    },
    /// Real datum `offset + Σ` of `modes` seeded random conjugate pairs.
    Random {
        modes: usize,
        #[serde(default = "default_amplitude")]
        amplitude: f64,
        #[serde(default)]
        offset: f64,
        #[serde(default = "default_max_k")]
        max_k: i64,
        #[serde(default = "default_max_m")]
        max_m: i64,
    },
}

fn default_true() -> bool {
    true
}
fn default_amplitude() -> f64 {
    1.0
}
fn default_max_k() -> i64 {
    3
}
fn default_max_m() -> i64 {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Term {
    pub name: String,
    #[serde(default = "default_amplitude")]
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSpec {
    pub k: Vec<i64>,
    pub m: i64,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PotentialSpec {
    #[default]
    None,
    Manufactured {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        floor: Option<f64>,
    },
    /// Samples read from a field container, relative to the scenario file.
    Explicit { path: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ExpectedOrder {
    Finite(f64),
    Named(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum Experiment {
    #[serde(rename = "op-check")]
    OpCheck {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        s_values: Option<Vec<f64>>,
        #[serde(default = "tol_op")]
        tolerance: f64,
    },
    #[serde(rename = "extend-check")]
    ExtendCheck {
        #[serde(default = "tol_extend")]
        tolerance: f64,
    },
    #[serde(rename = "frequency")]
    Frequency {
        radii: Vec<f64>,
        #[serde(default, rename = "C")]
        c: f64,
        #[serde(default = "tol_frequency")]
        tolerance: f64,
        #[serde(default = "tol_slack")]
        slack: f64,
    },
    #[serde(rename = "blowup")]
    Blowup {
        radii: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        expected_kappa: Option<f64>,
        #[serde(default = "tol_blowup")]
        tolerance: f64,
    },
    #[serde(rename = "harnack")]
    Harnack {
        radii: Vec<f64>,
        #[serde(default = "origin")]
        x0: Vec<f64>,
        #[serde(default = "default_samples")]
        samples: usize,
    },
    #[serde(rename = "vanishing-order")]
    VanishingOrder {
        radii: Vec<f64>,
        center: Vec<f64>,
        #[serde(default)]
        t0: f64,
        #[serde(default)]
        half_space: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        expected: Option<ExpectedOrder>,
        #[serde(default = "tol_vanishing")]
        tolerance: f64,
        #[serde(default = "default_samples")]
        samples: usize,
    },
    #[serde(rename = "calibrate-C")]
    CalibrateC {
        radii: Vec<f64>,
        #[serde(default = "tol_slack")]
        slack: f64,
    },
}

fn tol_op() -> f64 {
    1e-6
}
fn tol_extend() -> f64 {
    1e-8
}
fn tol_frequency() -> f64 {
    1e-6
}
fn tol_slack() -> f64 {
    1e-8
}
fn tol_blowup() -> f64 {
    1e-3
}
fn tol_vanishing() -> f64 {
    0.05
}
fn origin() -> Vec<f64> {
    vec![0.0]
}
fn default_samples() -> usize {
    9
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::OpCheck { .. } => "op-check",
            Experiment::ExtendCheck { .. } => "extend-check",
            Experiment::Frequency { .. } => "frequency",
            Experiment::Blowup { .. } => "blowup",
            Experiment::Harnack { .. } => "harnack",
            Experiment::VanishingOrder { .. } => "vanishing-order",
            Experiment::CalibrateC { .. } => "calibrate-C",
        }
    }

    /// The experiment with every tolerance and slack multiplied by `scale`.
    pub fn scaled(&self, scale: f64) -> Self {
        let mut e = self.clone();
        match &mut e {
            Experiment::OpCheck { tolerance, .. }
            | Experiment::ExtendCheck { tolerance }
            | Experiment::Blowup { tolerance, .. }
            | Experiment::VanishingOrder { tolerance, .. } => *tolerance *= scale,
            Experiment::Frequency { tolerance, slack, .. } => {
                *tolerance *= scale;
                *slack *= scale;
            }
            Experiment::CalibrateC { slack, .. } => *slack *= scale,
            Experiment::Harnack { .. } => {}
        }
        e
    }

    /// Parameters used when a subcommand finds no matching experiment in the scenario.
    pub fn default_for(kind: &str, scenario: &Scenario) -> Option<Self> {
        let r_max = scenario.radius_bound().min(0.5);
        let increasing: Vec<f64> = (1..=10).map(|k| r_max * k as f64 / 10.0).collect();
        let decreasing: Vec<f64> = (0..5).map(|k| r_max * 0.5f64.powi(k + 1)).collect();
        Some(match kind {
            "op-check" => Experiment::OpCheck { s_values: None, tolerance: tol_op() },
            "extend-check" => Experiment::ExtendCheck { tolerance: tol_extend() },
            "frequency" => {
                Experiment::Frequency { radii: increasing, c: 0.0, tolerance: tol_frequency(), slack: tol_slack() }
            }
            "blowup" => Experiment::Blowup { radii: decreasing, expected_kappa: None, tolerance: tol_blowup() },
            "harnack" => Experiment::Harnack { radii: decreasing, x0: vec![0.0; scenario.dim], samples: default_samples() },
            "vanishing-order" => Experiment::VanishingOrder {
                radii: decreasing,
                center: vec![0.0; scenario.dim],
                t0: 0.0,
                half_space: false,
                expected: None,
                tolerance: tol_vanishing(),
                samples: default_samples(),
            },
            "calibrate-C" => Experiment::CalibrateC { radii: increasing, slack: tol_slack() },
            _ => return None,
        })
    }
}

/// A configuration problem, located by field path and, when known, line.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub field: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "config error at line {line}, field `{}`: {}", self.field, self.message),
            None => write!(f, "config error, field `{}`: {}", self.field, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

impl Scenario {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            field: "<file>".into(),
            line: None,
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let scenario: Scenario = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|sp| text[..sp.start].matches('\n').count() + 1);
            let field = e
                .span()
                .and_then(|sp| key_at(text, sp.start))
                .unwrap_or_else(|| "<document>".to_string());
            ConfigError { field, line, message: e.message().trim().to_string() }
        })?;
        scenario.validate().map_err(|(field, message)| ConfigError { line: locate(text, &field), field, message })?;
        Ok(scenario)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn is_grid_field(&self) -> bool {
        !matches!(self.field, FieldSpec::Builtin { .. })
    }

    /// Largest admissible strip radius for the functionals.
    pub fn radius_bound(&self) -> f64 {
        if self.is_grid_field() {
            self.grid.time_window.sqrt() * (1.0 - WINDOW_MARGIN)
        } else {
            f64::INFINITY
        }
    }

    fn validate(&self) -> Result<(), (String, String)> {
        let err = |field: &str, msg: String| Err((field.to_string(), msg));
        if self.name.trim().is_empty() {
            return err("name", "must not be empty".into());
        }
        if !(self.s > 0.0 && self.s < 1.0) {
            return err("s", format!("must lie in (0, 1), got {}", self.s));
        }
        if !(self.dim == 1 || self.dim == 2) {
            return err("dim", format!("must be 1 or 2, got {}", self.dim));
        }
        let g = &self.grid;
        if !(g.length_x > 0.0 && g.length_x.is_finite()) {
            return err("grid.length_x", format!("must be positive, got {}", g.length_x));
        }
        if !(g.time_window > 0.0 && g.time_window.is_finite()) {
            return err("grid.time_window", format!("must be positive, got {}", g.time_window));
        }
        for (name, n) in [("grid.points_x", g.points_x), ("grid.points_t", g.points_t)] {
            if n < 8 || !n.is_power_of_two() {
                return err(name, format!("must be a power of two of at least 8, got {n}"));
            }
        }
        match &self.field {
            FieldSpec::Builtin { terms } => {
                if terms.is_empty() {
                    return err("field.terms", "needs at least one builtin".into());
                }
                for t in terms {
                    let Some(kind) = BuiltinKind::from_name(&t.name) else {
                        let names: Vec<&str> = BuiltinKind::ALL.iter().map(|k| k.name()).collect();
                        return err("field.terms", format!("unknown builtin `{}`; expected one of {names:?}", t.name));
                    };
                    if kind == BuiltinKind::X1X2 && self.dim != 2 {
                        return err("field.terms", "builtin `x1x2` needs dim = 2".into());
                    }
                    if !t.coefficient.is_finite() {
                        return err("field.terms", format!("coefficient of `{}` is not finite", t.name));
                    }
                }
            }
            FieldSpec::Spectrum { modes, .. } => {
                if modes.is_empty() {
                    return err("field.modes", "needs at least one mode".into());
                }
                let (kx, km) = ((g.points_x / 2) as i64, (g.points_t / 2) as i64);
                for md in modes {
                    if md.k.len() != self.dim {
                        return err("field.modes", format!("k = {:?} needs {} entries", md.k, self.dim));
                    }
                    if md.k.iter().any(|k| k.abs() >= kx) || md.m.abs() >= km {
                        return err("field.modes", format!("mode k = {:?}, m = {} exceeds the grid", md.k, md.m));
                    }
                }
            }
            FieldSpec::Random { modes, amplitude, max_k, max_m, .. } => {
                if *modes == 0 {
                    return err("field.modes", "needs at least one mode".into());
                }
                if !(*amplitude > 0.0) {
                    return err("field.amplitude", format!("must be positive, got {amplitude}"));
                }
                if *max_k < 0 || *max_k >= (g.points_x / 2) as i64 {
                    return err("field.max_k", format!("must lie in [0, {}), got {max_k}", g.points_x / 2));
                }
                if *max_m < 0 || *max_m >= (g.points_t / 2) as i64 {
                    return err("field.max_m", format!("must lie in [0, {}), got {max_m}", g.points_t / 2));
                }
            }
        }
        match &self.potential {
            PotentialSpec::None => {}
            PotentialSpec::Manufactured { floor } => {
                if !self.is_grid_field() {
                    return err("potential.mode", "a manufactured potential needs a grid field".into());
                }
                if let Some(f) = floor {
                    if !(*f > 0.0) {
                        return err("potential.floor", format!("must be positive, got {f}"));
                    }
                }
            }
            PotentialSpec::Explicit { .. } => {
                if !self.is_grid_field() {
                    return err("potential.mode", "an explicit potential needs a grid field".into());
                }
            }
        }
        let r_max = self.radius_bound();
        for (j, e) in self.experiments.iter().enumerate() {
            let at = |key: &str| format!("experiment[{j}].{key}");
            let radii_ok = |radii: &[f64], key: &str| -> Result<(), (String, String)> {
                if radii.is_empty() {
                    return Err((at(key), "needs at least one radius".into()));
                }
                if let Some(r) = radii.iter().find(|r| !(**r > 0.0 && **r <= r_max)) {
                    return Err((at(key), format!("radius {r} outside (0, {r_max:.6}]")));
                }
                Ok(())
            };
            let positive = |v: f64, key: &str| -> Result<(), (String, String)> {
                if v > 0.0 && v.is_finite() {
                    Ok(())
                } else {
                    Err((at(key), format!("must be positive, got {v}")))
                }
            };
            match e {
                Experiment::OpCheck { s_values, tolerance } => {
                    positive(*tolerance, "tolerance")?;
                    if !self.is_grid_field() {
                        return Err((at("kind"), "op-check needs a grid field".into()));
                    }
                    if let Some(sv) = s_values {
                        if sv.is_empty() || sv.iter().any(|s| !(*s > 0.0 && *s < 1.0)) {
                            return Err((at("s_values"), "each value must lie in (0, 1)".into()));
                        }
                    }
                }
                Experiment::ExtendCheck { tolerance } => {
                    positive(*tolerance, "tolerance")?;
                    if !self.is_grid_field() {
                        return Err((at("kind"), "extend-check needs a grid field".into()));
                    }
                }
                Experiment::Frequency { radii, c, tolerance, slack } => {
                    radii_ok(radii, "radii")?;
                    positive(*tolerance, "tolerance")?;
                    positive(*slack, "slack")?;
                    if !(*c >= 0.0) {
                        return Err((at("C"), format!("must be non-negative, got {c}")));
                    }
                    if radii.windows(2).any(|w| w[1] <= w[0]) {
                        return Err((at("radii"), "must be strictly increasing".into()));
                    }
                }
                Experiment::Blowup { radii, tolerance, .. } => {
                    radii_ok(radii, "radii")?;
                    positive(*tolerance, "tolerance")?;
                    if radii.windows(2).any(|w| w[1] >= w[0]) {
                        return Err((at("radii"), "must be strictly decreasing".into()));
                    }
                }
                Experiment::Harnack { radii, x0, samples } => {
                    if !self.is_grid_field() {
                        return Err((at("kind"), "harnack needs a grid field".into()));
                    }
                    radii_ok(radii, "radii")?;
                    if x0.len() != self.dim {
                        return Err((at("x0"), format!("needs {} coordinates", self.dim)));
                    }
                    if *samples < 2 {
                        return Err((at("samples"), "must be at least 2".into()));
                    }
                }
                Experiment::VanishingOrder { radii, center, t0, half_space, expected, tolerance, samples } => {
                    if radii.is_empty() || radii.iter().any(|r| !(*r > 0.0)) {
                        return Err((at("radii"), "radii must be positive".into()));
                    }
                    positive(*tolerance, "tolerance")?;
                    let want = self.dim + usize::from(*half_space);
                    if center.len() != want {
                        return Err((at("center"), format!("needs {want} coordinates, got {}", center.len())));
                    }
                    if *samples < 2 {
                        return Err((at("samples"), "must be at least 2".into()));
                    }
                    if *t0 > 0.0 {
                        return Err((at("t0"), format!("must be non-positive, got {t0}")));
                    }
                    if self.is_grid_field() {
                        let r = radii.iter().copied().fold(0.0, f64::max);
                        if t0 - r * r < -self.grid.time_window {
                            return Err((at("radii"), format!("cylinder of radius {r} leaves the time window")));
                        }
                    }
                    if let Some(ExpectedOrder::Named(name)) = expected {
                        if name != "infinite" {
                            return Err((at("expected"), format!("must be a number or \"infinite\", got `{name}`")));
                        }
                    }
                }
                Experiment::CalibrateC { radii, slack } => {
                    radii_ok(radii, "radii")?;
                    positive(*slack, "slack")?;
                    if radii.windows(2).any(|w| w[1] <= w[0]) {
                        return Err((at("radii"), "must be strictly increasing".into()));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Dotted key path of the assignment containing byte `offset`.
fn key_at(text: &str, offset: usize) -> Option<String> {
    let line_start = text[..offset].rfind('\n').map_or(0, |p| p + 1);
    let line = text[line_start..].lines().next()?;
    let key = line.split('=').next()?.trim();
    if key.is_empty() {
        return None;
    }
    if key.starts_with('[') {
        // tagged tables report errors at their header
        let count = text[..line_start].lines().filter(|l| l.trim() == "[[experiment]]").count();
        return Some(if key == "[[experiment]]" {
            format!("experiment[{count}]")
        } else {
            key.trim_matches(|c| c == '[' || c == ']').to_string()
        });
    }
    let mut table = String::new();
    let mut experiment = None::<usize>;
    let mut count = 0usize;
    for l in text[..line_start].lines() {
        let l = l.trim();
        if l == "[[experiment]]" {
            experiment = Some(count);
            count += 1;
            table.clear();
        } else if l.starts_with('[') {
            experiment = None;
            table = l.trim_matches(|c| c == '[' || c == ']').to_string();
        }
    }
    Some(match (experiment, table.is_empty()) {
        (Some(j), _) => format!("experiment[{j}].{key}"),
        (None, false) => format!("{table}.{key}"),
        (None, true) => key.to_string(),
    })
}

/// Line number of a dotted key path such as `s`, `grid.points_x` or `experiment[2].radii`.
pub fn locate(text: &str, path: &str) -> Option<usize> {
    let (section, key) = match path.rsplit_once('.') {
        Some((sec, key)) => (Some(sec), key),
        None => (None, path),
    };
    let mut in_section = section.is_none();
    let mut experiment_count = 0usize;
    for (n, line) in text.lines().enumerate() {
        let l = line.trim();
        if l.starts_with('[') {
            let here = if l == "[[experiment]]" {
                experiment_count += 1;
                format!("experiment[{}]", experiment_count - 1)
            } else {
                l.trim_matches(|c| c == '[' || c == ']').to_string()
            };
            in_section = section == Some(here.as_str());
            continue;
        }
        if in_section {
            if let Some((k, _)) = l.split_once('=') {
                if k.trim() == key {
                    return Some(n + 1);
                }
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"
name = "basic"
s = 0.5

[field]
kind = "builtin"
terms = [{ name = "x1" }]

[[experiment]]
kind = "frequency"
radii = [0.1, 0.2]
"#;

    #[test]
    fn parses_with_defaults() {
        let sc = Scenario::parse(BASIC).unwrap();
        assert_eq!(sc.dim, 1);
        assert_eq!(sc.grid, GridSpec::default());
        assert_eq!(sc.potential, PotentialSpec::None);
        match &sc.experiments[0] {
            Experiment::Frequency { tolerance, c, .. } => {
                assert_eq!(*tolerance, 1e-6);
                assert_eq!(*c, 0.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn round_trips_through_toml() {
        let sc = Scenario::parse(BASIC).unwrap();
        assert_eq!(Scenario::parse(&sc.to_toml()).unwrap(), sc);
    }

    #[test]
    fn negative_s_names_the_field_and_line() {
        let bad = BASIC.replace("s = 0.5", "s = -0.5");
        let e = Scenario::parse(&bad).unwrap_err();
        assert_eq!(e.field, "s");
        assert_eq!(e.line, Some(3));
        assert!(e.to_string().contains("line 3"));
    }

    #[test]
    fn unknown_builtin_is_rejected() {
        let bad = BASIC.replace("\"x1\"", "\"x9\"");
        let e = Scenario::parse(&bad).unwrap_err();
        assert_eq!(e.field, "field.terms");
        assert_eq!(e.line, Some(7));
    }

    #[test]
    fn syntax_errors_carry_a_line() {
        let bad = BASIC.replace("s = 0.5", "s = \"half\"");
        let e = Scenario::parse(&bad).unwrap_err();
        assert_eq!((e.field.as_str(), e.line), ("s", Some(3)));
        let bad = BASIC.replace("radii = [0.1, 0.2]", "radii = \"wide\"");
        let e = Scenario::parse(&bad).unwrap_err();
        assert_eq!((e.field.as_str(), e.line), ("experiment[0]", Some(9)));
        assert!(e.message.contains("wide"), "{}", e.message);
        let bad = BASIC.replace("s = 0.5", "s = 0.5\nfoo = 1");
        assert!(Scenario::parse(&bad).is_err());
    }

    #[test]
    fn experiment_fields_are_located() {
        let bad = BASIC.replace("radii = [0.1, 0.2]", "radii = [0.2, 0.1]");
        let e = Scenario::parse(&bad).unwrap_err();
        assert_eq!(e.field, "experiment[0].radii");
        assert_eq!(e.line, Some(11));
        let bad = BASIC.replace("radii = [0.1, 0.2]", "radii = [0.1, 0.2]\ntolerance = -1.0");
        assert_eq!(Scenario::parse(&bad).unwrap_err().field, "experiment[0].tolerance");
    }

    #[test]
    fn grid_radius_bound() {
        let text = r#"
name = "g"
s = 0.3
[field]
kind = "random"
modes = 3
[[experiment]]
kind = "frequency"
radii = [0.5, 1.5]
"#;
        let e = Scenario::parse(text).unwrap_err();
        assert_eq!(e.field, "experiment[0].radii");
    }

    #[test]
    fn tolerance_scaling() {
        let e = Experiment::Frequency { radii: vec![0.1], c: 0.0, tolerance: 1e-6, slack: 1e-8 };
        match e.scaled(10.0) {
            Experiment::Frequency { tolerance, slack, .. } => {
                assert!((tolerance - 1e-5).abs() < 1e-20 && (slack - 1e-7).abs() < 1e-22);
            }
            _ => unreachable!(),
        }
    }
}
