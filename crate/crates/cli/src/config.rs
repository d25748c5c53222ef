//! Run configuration: a TOML file whose keys are all optional, overlaid by
//! command-line flags.

use std::path::{Path, PathBuf};

use bsquant::pendulum::{EMValue, LoopSpec, Orientation, SpectrumOptions, SpectrumWindow};
use bsquant::prequant_grid::{dirac_default_spec, GridSpec};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Log level used when `BS_LOG` is unset.
    pub log: Option<String>,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub shift: ShiftConfig,
    #[serde(default)]
    pub pendulum: PendulumConfig,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub planck_h: Option<f64>,
    pub action_lower: Option<Vec<f64>>,
    pub action_upper: Option<Vec<f64>>,
    pub action_points: Option<usize>,
    pub angle_points: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftConfig {
    pub planck_h: Option<f64>,
    /// Half-width of the action box of the default single-chart atlas.
    pub box_half_width: Option<f64>,
    pub atlas: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PendulumConfig {
    pub h_planck: Option<f64>,
    pub critical_margin: Option<f64>,
    #[serde(default)]
    pub window: WindowConfig,
    #[serde(default, rename = "loop")]
    pub loop_: LoopConfig,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    pub h_min: Option<f64>,
    pub h_max: Option<f64>,
    pub j_min: Option<f64>,
    pub j_max: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopConfig {
    pub center_h: Option<f64>,
    pub center_j: Option<f64>,
    pub radius: Option<f64>,
    pub samples: Option<usize>,
    pub orientation: Option<Orientation>,
    pub start_angle: Option<f64>,
}

pub const DEFAULT_OUT_DIR: &str = "bsquant-out";
pub const DEFAULT_SHIFT_BOX: f64 = 10.0;
pub const DEFAULT_H_PLANCK: f64 = 0.1;

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn out_dir(&self) -> PathBuf {
        self.output.dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }

    pub fn grid_spec(&self) -> Result<GridSpec, CliError> {
        let base = dirac_default_spec();
        let g = &self.grid;
        let spec = GridSpec {
            dim: g.action_lower.as_ref().map_or(base.dim, Vec::len),
            action_lower: g.action_lower.clone().unwrap_or(base.action_lower),
            action_upper: g.action_upper.clone().unwrap_or(base.action_upper),
            action_points: g.action_points.unwrap_or(base.action_points),
            angle_points: g.angle_points.unwrap_or(base.angle_points),
            planck_h: g.planck_h.unwrap_or(base.planck_h),
        };
        spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(spec)
    }

    pub fn window(&self) -> Result<SpectrumWindow, CliError> {
        let d = SpectrumWindow::default();
        let w = &self.pendulum.window;
        SpectrumWindow::new(
            w.h_min.unwrap_or(d.h_min),
            w.h_max.unwrap_or(d.h_max),
            w.j_min.unwrap_or(d.j_min),
            w.j_max.unwrap_or(d.j_max),
        )
        .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn h_planck(&self) -> Result<f64, CliError> {
        positive("pendulum.h_planck", self.pendulum.h_planck.unwrap_or(DEFAULT_H_PLANCK))
    }

    pub fn spectrum_options(&self) -> Result<SpectrumOptions, CliError> {
        let m = self.pendulum.critical_margin.unwrap_or(SpectrumOptions::default().critical_margin);
        if !(m.is_finite() && m >= 0.0) {
            return Err(CliError::Config(format!("pendulum.critical_margin must be non-negative, got {m}")));
        }
        Ok(SpectrumOptions { critical_margin: m })
    }

    /// The monodromy loop. A radius of zero is rejected here even though the
    /// library accepts it: a point is not a loop around anything.
    pub fn loop_spec(&self) -> Result<LoopSpec, CliError> {
        let d = LoopSpec::default();
        let l = &self.pendulum.loop_;
        let spec = LoopSpec {
            center: EMValue { h: l.center_h.unwrap_or(d.center.h), j: l.center_j.unwrap_or(d.center.j) },
            radius: l.radius.unwrap_or(d.radius),
            samples: l.samples.unwrap_or(d.samples),
            orientation: l.orientation.unwrap_or(d.orientation),
            start_angle: l.start_angle.unwrap_or(d.start_angle),
        };
        positive("pendulum.loop.radius", spec.radius)?;
        spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(spec)
    }

    /// Copy with every default written out, for the run manifest. Values
    /// that fail validation are left as given.
    pub fn effective(&self) -> RunConfig {
        let mut c = self.clone();
        c.output.dir = Some(self.out_dir());
        if let Ok(g) = self.grid_spec() {
            c.grid = GridConfig {
                planck_h: Some(g.planck_h),
                action_lower: Some(g.action_lower),
                action_upper: Some(g.action_upper),
                action_points: Some(g.action_points),
                angle_points: Some(g.angle_points),
            };
        }
        c.shift.planck_h = Some(self.shift.planck_h.unwrap_or(1.0));
        c.shift.box_half_width = Some(self.shift.box_half_width.unwrap_or(DEFAULT_SHIFT_BOX));
        let p = &mut c.pendulum;
        p.h_planck = Some(self.pendulum.h_planck.unwrap_or(DEFAULT_H_PLANCK));
        p.critical_margin = Some(self.pendulum.critical_margin.unwrap_or(SpectrumOptions::default().critical_margin));
        if let Ok(w) = self.window() {
            p.window = WindowConfig { h_min: Some(w.h_min), h_max: Some(w.h_max), j_min: Some(w.j_min), j_max: Some(w.j_max) };
        }
        if let Ok(l) = self.loop_spec() {
            p.loop_ = LoopConfig {
                center_h: Some(l.center.h),
                center_j: Some(l.center.j),
                radius: Some(l.radius),
                samples: Some(l.samples),
                orientation: Some(l.orientation),
                start_angle: Some(l.start_angle),
            };
        }
        c
    }

    pub fn shift_planck(&self) -> Result<f64, CliError> {
        positive("shift.planck_h", self.shift.planck_h.unwrap_or(1.0))
    }

    pub fn shift_box(&self) -> Result<f64, CliError> {
        positive("shift.box_half_width", self.shift.box_half_width.unwrap_or(DEFAULT_SHIFT_BOX))
    }
}

fn positive(name: &str, x: f64) -> Result<f64, CliError> {
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(CliError::Config(format!("{name} must be positive, got {x}")))
    }
}
