//! Flat `key = value` configuration: parsing, layering and echo.
//!
//! Layers apply in order: preset base, config file, `--set` overrides.
//! Unknown keys and malformed values are hard errors carrying a location.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use nfcrb::closedform::DeltaForm;
use nfcrb::experiments::{
    log_space, preset, scenario_monostatic_single, BoundMode, ClosedFormOptions, PresetScale, Quantity, ScenarioConfig,
    SweepAxis, SymbolChoice, TargetSpec,
};
use nfcrb::fim::SymbolModelKind;
use nfcrb::scene::{dbm_to_watts, GridConvention, Point2D};
use num_complex::Complex64;

use crate::CliError;

/// Seed used when neither the config nor `--seed` provides one.
pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ValidateScale {
    #[default]
    Ci,
    Full,
}

impl FromStr for ValidateScale {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ci" => Ok(ValidateScale::Ci),
            "full" => Ok(ValidateScale::Full),
            other => Err(format!("expected ci or full, got {other:?}")),
        }
    }
}

impl fmt::Display for ValidateScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ValidateScale::Ci => "ci",
            ValidateScale::Full => "full",
        })
    }
}

/// Where a setting came from, for error messages.
#[derive(Debug, Clone, PartialEq)]
pub enum Origin {
    File { path: String, line: usize, column: usize },
    Flag { name: &'static str, index: usize },
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::File { path, line, column } => write!(f, "{path}:{line}:{column}"),
            Origin::Flag { name, index } => write!(f, "{name} #{index}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub origin: Origin,
    /// Origin of the value itself, when it differs from the key's.
    pub value_origin: Origin,
}

/// Parses a config document into entries; comments start at `#`.
pub fn parse_document(text: &str, path: &str) -> Result<Vec<Entry>, CliError> {
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("");
        if line.trim().is_empty() {
            continue;
        }
        let at = |column: usize| Origin::File { path: path.to_string(), line: i + 1, column };
        let key_col = line.len() - line.trim_start().len() + 1;
        let Some(eq) = line.find('=') else {
            return Err(CliError::Config(format!("{}: expected `key = value`", at(key_col))));
        };
        let key = line[..eq].trim();
        if key.is_empty() {
            return Err(CliError::Config(format!("{}: missing key before `=`", at(key_col))));
        }
        let rest = &line[eq + 1..];
        let value_col = eq + 2 + (rest.len() - rest.trim_start().len());
        entries.push(Entry {
            key: key.to_string(),
            value: rest.trim().to_string(),
            origin: at(key_col),
            value_origin: at(value_col),
        });
    }
    Ok(entries)
}

/// Parses one `--set key=value` argument.
pub fn parse_override(arg: &str, index: usize) -> Result<Entry, CliError> {
    let origin = Origin::Flag { name: "--set", index };
    let (key, value) =
        arg.split_once('=').ok_or_else(|| CliError::Config(format!("{origin}: expected key=value, got {arg:?}")))?;
    Ok(Entry { key: key.trim().to_string(), value: value.trim().to_string(), value_origin: origin.clone(), origin })
}

/// Fully resolved settings with every default materialized.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub preset: Option<String>,
    pub scale: PresetScale,
    pub seed: u64,
    pub scenario: ScenarioConfig,
    pub symbol_model: SymbolModelKind,
    pub closed_form_enabled: bool,
    pub closed_form: ClosedFormOptions,
    pub validate_scale: ValidateScale,
}

impl Resolved {
    /// Applies `entries` on top of the base selected by the last `preset`
    /// and `sweep.scale` entries.
    pub fn from_entries(entries: &[Entry]) -> Result<Self, CliError> {
        let last = |key: &str| entries.iter().rev().find(|e| e.key == key);
        let scale = match last("sweep.scale") {
            Some(e) => e.value.parse().map_err(|err| bad_value(e, err))?,
            None => PresetScale::Reduced,
        };
        let preset_name = match last("preset") {
            Some(e) if e.value != "none" => Some(e.value.clone()),
            _ => None,
        };
        let scenario = match &preset_name {
            Some(name) => {
                let e = last("preset").expect("preset entry exists");
                preset(name, scale).map_err(|err| bad_value(e, err))?
            }
            None => scenario_monostatic_single(),
        };
        let closed_form = scenario.closed_form.unwrap_or_default();
        let mut resolved = Self {
            preset: preset_name,
            scale,
            seed: DEFAULT_SEED,
            closed_form_enabled: scenario.closed_form.is_some(),
            closed_form,
            symbol_model: SymbolModelKind::Expected,
            validate_scale: ValidateScale::Ci,
            scenario,
        };
        for e in entries {
            resolved.apply(e)?;
        }
        resolved.scenario.closed_form = resolved.closed_form_enabled.then_some(resolved.closed_form);
        resolved.scenario.symbols = match resolved.symbol_model {
            SymbolModelKind::Expected => SymbolChoice::Expected,
            SymbolModelKind::Fixed => SymbolChoice::Fixed { seed: resolved.seed },
        };
        Ok(resolved)
    }

    fn apply(&mut self, e: &Entry) -> Result<(), CliError> {
        let v = e.value.as_str();
        let sc = &mut self.scenario;
        let t = &mut sc.template;
        let g = &mut sc.grid;
        let r: Result<(), String> = match e.key.as_str() {
            "preset" | "sweep.scale" => Ok(()),
            "seed" => parse(v).map(|x| self.seed = x),
            "scene.n_elements" => parse(v).map(|x| t.n_elements = x),
            "scene.spacing_m" => match v {
                "auto" => {
                    t.spacing_m = None;
                    Ok(())
                }
                _ => number(v).map(|x| t.spacing_m = Some(x)),
            },
            "scene.tx_center_m" => number(v).map(|x| t.tx_center_x = x),
            "scene.rx_center_m" => number(v).map(|x| t.rx_center_x = x),
            "scene.noise_w" => number(v).map(|x| t.noise_w = x),
            "scene.noise_dbm" => number(v).map(|x| t.noise_w = dbm_to_watts(x)),
            "scene.targets" => parse::<usize>(v).map(|n| {
                let filler =
                    TargetSpec { angle_deg: 0.0, range_m: 100.0, velocity: [0.0, 0.0], rcs: Complex64::new(1.0, 0.0) };
                t.targets.resize(n, filler);
            }),
            "grid.fc_hz" => number(v).map(|x| g.carrier_hz = x),
            "grid.df_hz" => number(v).map(|x| g.subcarrier_spacing_hz = x),
            "grid.K" => parse(v).map(|x| g.n_subcarriers = x),
            "grid.M" => parse(v).map(|x| g.n_symbols = x),
            "grid.cp_fraction" => number(v).map(|x| g.cp_fraction = x),
            "grid.power_w" => number(v).map(|x| g.per_subcarrier_power_w = x),
            "grid.power_dbm" => number(v).map(|x| g.per_subcarrier_power_w = dbm_to_watts(x)),
            "grid.convention" => v.parse::<GridConvention>().map(|x| g.convention = x).map_err(|e| e.to_string()),
            "grid.c_mps" => number(v).map(|x| g.speed_of_light = x),
            "fim.symbol_model" => match v {
                "expected" => {
                    self.symbol_model = SymbolModelKind::Expected;
                    Ok(())
                }
                "fixed" => {
                    self.symbol_model = SymbolModelKind::Fixed;
                    Ok(())
                }
                other => Err(format!("expected expected or fixed, got {other:?}")),
            },
            "fim.bound_mode" => v.parse::<BoundMode>().map(|x| sc.bound_mode = x).map_err(|e| e.to_string()),
            "closedform.enabled" => parse(v).map(|x| self.closed_form_enabled = x),
            "closedform.delta_form" => {
                v.parse::<DeltaForm>().map(|x| self.closed_form.delta_form = x).map_err(|e| e.to_string())
            }
            "closedform.psi_x" => number(v).map(|x| self.closed_form.psi_x = x),
            "closedform.psi_y" => number(v).map(|x| self.closed_form.psi_y = x),
            "sweep.axis" => v.parse::<SweepAxis>().map(|x| sc.axis = x).map_err(|e| e.to_string()),
            "sweep.values" => sweep_values(v).map(|x| sc.sweep_values = x),
            "sweep.k_values" => list(v, parse).map(|x| sc.k_values = x),
            "sweep.parameters" => {
                list(v, |s| s.parse::<Quantity>().map_err(|e| e.to_string())).map(|x| sc.quantities = x)
            }
            "validate.scale" => v.parse().map(|x| self.validate_scale = x),
            key => match key.strip_prefix("target.").and_then(|rest| rest.split_once('.')) {
                Some((index, field)) => return self.apply_target(e, index, field),
                None => return Err(CliError::Config(format!("{}: unknown key `{}`", e.origin, e.key))),
            },
        };
        r.map_err(|err| bad_value(e, err))
    }

    fn apply_target(&mut self, e: &Entry, index: &str, field: &str) -> Result<(), CliError> {
        let unknown = || CliError::Config(format!("{}: unknown key `{}`", e.origin, e.key));
        let i: usize = index.parse().map_err(|_| unknown())?;
        if !matches!(field, "angle_deg" | "range_m" | "x_m" | "y_m" | "vx_mps" | "vy_mps" | "rcs_re" | "rcs_im") {
            return Err(unknown());
        }
        let count = self.scenario.template.targets.len();
        let target = self.scenario.template.targets.get_mut(i).ok_or_else(|| {
            CliError::Config(format!("{}: target {i} does not exist, scene.targets = {count}", e.origin))
        })?;
        let x = number(&e.value).map_err(|err| bad_value(e, err))?;
        let position = Point2D::from_polar_deg(target.angle_deg, target.range_m);
        let set_cartesian = |t: &mut TargetSpec, px: f64, py: f64| {
            t.range_m = px.hypot(py);
            t.angle_deg = px.atan2(py).to_degrees();
        };
        match field {
            "angle_deg" => target.angle_deg = x,
            "range_m" => target.range_m = x,
            "x_m" => set_cartesian(target, x, position.y),
            "y_m" => set_cartesian(target, position.x, x),
            "vx_mps" => target.velocity[0] = x,
            "vy_mps" => target.velocity[1] = x,
            "rcs_re" => target.rcs.re = x,
            _ => target.rcs.im = x,
        }
        Ok(())
    }

    /// Every setting as `key = value` lines, in a fixed order.
    pub fn echo(&self) -> Vec<String> {
        let sc = &self.scenario;
        let t = &sc.template;
        let g = &sc.grid;
        let mut lines = vec![
            format!("preset = {}", self.preset.as_deref().unwrap_or("none")),
            format!("seed = {}", self.seed),
            format!("scene.n_elements = {}", t.n_elements),
            format!("scene.spacing_m = {}", t.spacing_m.map(num).unwrap_or_else(|| "auto".into())),
            format!("scene.tx_center_m = {}", num(t.tx_center_x)),
            format!("scene.rx_center_m = {}", num(t.rx_center_x)),
            format!("scene.noise_w = {}", num(t.noise_w)),
            format!("scene.targets = {}", t.targets.len()),
        ];
        for (i, target) in t.targets.iter().enumerate() {
            lines.push(format!("target.{i}.angle_deg = {}", num(target.angle_deg)));
            lines.push(format!("target.{i}.range_m = {}", num(target.range_m)));
            lines.push(format!("target.{i}.vx_mps = {}", num(target.velocity[0])));
            lines.push(format!("target.{i}.vy_mps = {}", num(target.velocity[1])));
            lines.push(format!("target.{i}.rcs_re = {}", num(target.rcs.re)));
            lines.push(format!("target.{i}.rcs_im = {}", num(target.rcs.im)));
        }
        lines.extend([
            format!("grid.fc_hz = {}", num(g.carrier_hz)),
            format!("grid.df_hz = {}", num(g.subcarrier_spacing_hz)),
            format!("grid.K = {}", g.n_subcarriers),
            format!("grid.M = {}", g.n_symbols),
            format!("grid.cp_fraction = {}", num(g.cp_fraction)),
            format!("grid.power_w = {}", num(g.per_subcarrier_power_w)),
            format!("grid.convention = {}", g.convention),
            format!("grid.c_mps = {}", num(g.speed_of_light)),
            format!("fim.symbol_model = {}", self.symbol_model),
            format!("fim.bound_mode = {}", sc.bound_mode),
            format!("closedform.enabled = {}", self.closed_form_enabled),
            format!("closedform.delta_form = {}", self.closed_form.delta_form),
            format!("closedform.psi_x = {}", num(self.closed_form.psi_x)),
            format!("closedform.psi_y = {}", num(self.closed_form.psi_y)),
            format!("sweep.scale = {}", self.scale),
            format!("sweep.axis = {}", sc.axis),
            format!("sweep.values = {}", join(sc.sweep_values.iter().map(|v| num(*v)))),
            format!("sweep.k_values = {}", join(sc.k_values.iter().map(|k| k.to_string()))),
            format!("sweep.parameters = {}", join(sc.quantities.iter().map(|q| q.to_string()))),
            format!("validate.scale = {}", self.validate_scale),
        ]);
        lines
    }

    pub fn echo_block(&self) -> String {
        let mut out = String::from("# resolved configuration\n");
        for line in self.echo() {
            writeln!(out, "# {line}").expect("writing to a String cannot fail");
        }
        out
    }
}

fn bad_value(e: &Entry, err: impl fmt::Display) -> CliError {
    CliError::Config(format!("{}: invalid value {:?} for `{}`: {err}", e.value_origin, e.value, e.key))
}

fn parse<T: FromStr>(v: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    v.parse::<T>().map_err(|e| e.to_string())
}

fn number(v: &str) -> Result<f64, String> {
    let x: f64 = parse(v)?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err("value must be finite".into())
    }
}

fn list<T>(v: &str, item: impl Fn(&str) -> Result<T, String>) -> Result<Vec<T>, String> {
    v.split(',').map(|s| item(s.trim())).collect()
}

/// Comma-separated numbers or `log:lo:hi:count`.
fn sweep_values(v: &str) -> Result<Vec<f64>, String> {
    match v.strip_prefix("log:") {
        Some(spec) => {
            let parts: Vec<&str> = spec.split(':').collect();
            let [lo, hi, count] = parts[..] else {
                return Err("expected log:lo:hi:count".into());
            };
            let (lo, hi, count) = (number(lo)?, number(hi)?, parse::<usize>(count)?);
            if !(lo > 0.0 && hi > lo) || count < 2 {
                return Err("log spacing needs 0 < lo < hi and count >= 2".into());
            }
            Ok(log_space(lo, hi, count))
        }
        None => list(v, number),
    }
}

/// Shortest round-trip text, plain for moderate magnitudes and scientific otherwise.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || (1e-3..1e6).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn join(items: impl Iterator<Item = String>) -> String {
    items.collect::<Vec<_>>().join(", ")
}
