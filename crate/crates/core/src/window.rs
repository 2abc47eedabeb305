//! Window-local boundaries over a row-major token grid.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Adaptive schedule defaults: small windows for down/up stages, large for the bottleneck.
pub const DEFAULT_SMALL_WINDOW: usize = 2;
pub const DEFAULT_LARGE_WINDOW: usize = 8;

/// Token grid; token `(r, c)` has index `r * width + c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub height: usize,
    pub width: usize,
}

impl GridSpec {
    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid(
                "grid",
                "height and width must be at least 1",
            ));
        }
        Ok(Self { height, width })
    }

    pub fn n_tokens(&self) -> usize {
        self.height * self.width
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.height, self.width)
    }
}

impl FromStr for GridSpec {
    type Err = Error;

    /// Parses `HxW`, e.g. `64x64`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid("grid", format!("expected HxW, got `{s}`"));
        let (h, w) = s.split_once(['x', 'X']).ok_or_else(bad)?;
        let h = h.trim().parse().map_err(|_| bad())?;
        let w = w.trim().parse().map_err(|_| bad())?;
        GridSpec::new(h, w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerRole {
    Down,
    Bottleneck,
    Up,
}

impl LayerRole {
    fn stage(self) -> u8 {
        match self {
            LayerRole::Down => 0,
            LayerRole::Bottleneck => 1,
            LayerRole::Up => 2,
        }
    }
}

impl fmt::Display for LayerRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LayerRole::Down => "down",
            LayerRole::Bottleneck => "bottleneck",
            LayerRole::Up => "up",
        })
    }
}

impl FromStr for LayerRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "down" => Ok(LayerRole::Down),
            "bottleneck" | "mid" => Ok(LayerRole::Bottleneck),
            "up" => Ok(LayerRole::Up),
            other => Err(Error::invalid(
                "role",
                format!("unknown layer role `{other}`"),
            )),
        }
    }
}

/// Parses a comma-separated role list such as `down,down,bottleneck,up,up`.
pub fn parse_roles(s: &str) -> Result<Vec<LayerRole>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(str::parse)
        .collect()
}

/// Roles must follow the U-Net order: all downs, then bottlenecks, then ups.
pub fn validate_role_sequence(roles: &[LayerRole]) -> Result<()> {
    if let Some(w) = roles.windows(2).find(|w| w[0].stage() > w[1].stage()) {
        return Err(Error::InvalidLayerSequence(format!(
            "`{}` cannot follow `{}`",
            w[1], w[0]
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub layer_id: usize,
    pub role: LayerRole,
    pub window_side: usize,
}

/// How window sides are assigned to layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WindowMode {
    Fixed(usize),
    Adaptive { small: usize, large: usize },
}

impl WindowMode {
    pub fn sides(&self, roles: &[LayerRole]) -> Result<Vec<usize>> {
        match *self {
            WindowMode::Fixed(s) => {
                if s == 0 {
                    return Err(Error::invalid("window", "fixed side must be at least 1"));
                }
                Ok(vec![s; roles.len()])
            }
            WindowMode::Adaptive { small, large } => adaptive_schedule(roles, small, large),
        }
    }

    pub fn layer_specs(&self, roles: &[LayerRole]) -> Result<Vec<LayerSpec>> {
        Ok(roles
            .iter()
            .zip(self.sides(roles)?)
            .enumerate()
            .map(|(layer_id, (&role, window_side))| LayerSpec {
                layer_id,
                role,
                window_side,
            })
            .collect())
    }
}

impl Default for WindowMode {
    fn default() -> Self {
        WindowMode::Adaptive {
            small: DEFAULT_SMALL_WINDOW,
            large: DEFAULT_LARGE_WINDOW,
        }
    }
}

impl fmt::Display for WindowMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WindowMode::Fixed(s) => write!(f, "fixed:{s}"),
            WindowMode::Adaptive { small, large } => write!(f, "adaptive:{small},{large}"),
        }
    }
}

impl FromStr for WindowMode {
    type Err = Error;

    /// `fixed:S`, `adaptive` or `adaptive:SMALL,LARGE`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = |why: &str| Error::invalid("window", format!("{why} in `{s}`"));
        let s = s.trim();
        let (kind, arg) = s.split_once(':').unwrap_or((s, ""));
        match kind {
            "fixed" => {
                let side: usize = arg.trim().parse().map_err(|_| bad("expected fixed:S"))?;
                if side == 0 {
                    return Err(bad("window side must be at least 1"));
                }
                Ok(WindowMode::Fixed(side))
            }
            "adaptive" if arg.trim().is_empty() => Ok(WindowMode::default()),
            "adaptive" => {
                let (a, b) = arg
                    .split_once(',')
                    .ok_or_else(|| bad("expected adaptive:SMALL,LARGE"))?;
                let small = a.trim().parse().map_err(|_| bad("bad small side"))?;
                let large = b.trim().parse().map_err(|_| bad("bad large side"))?;
                check_adaptive_sides(small, large)?;
                Ok(WindowMode::Adaptive { small, large })
            }
            _ => Err(bad("unknown window mode")),
        }
    }
}

fn check_adaptive_sides(small: usize, large: usize) -> Result<()> {
    if small == 0 {
        return Err(Error::invalid("window", "small side must be at least 1"));
    }
    if large < small {
        return Err(Error::invalid("window", "large side must be >= small side"));
    }
    Ok(())
}

/// Down and up layers get `small`, bottleneck layers get `large`.
pub fn adaptive_schedule(roles: &[LayerRole], small: usize, large: usize) -> Result<Vec<usize>> {
    check_adaptive_sides(small, large)?;
    Ok(roles
        .iter()
        .map(|role| match role {
            LayerRole::Down | LayerRole::Up => small,
            LayerRole::Bottleneck => large,
        })
        .collect())
}

/// Disjoint exact cover of the grid's token indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowPartition {
    windows: Vec<Vec<usize>>,
}

impl WindowPartition {
    /// Wraps explicit windows, checking they cover `0..total` exactly once.
    pub fn from_windows(windows: Vec<Vec<usize>>) -> Result<Self> {
        if windows.iter().any(Vec::is_empty) {
            return Err(Error::invalid("windows", "empty window"));
        }
        let total: usize = windows.iter().map(Vec::len).sum();
        let mut seen = vec![false; total];
        for &i in windows.iter().flatten() {
            if i >= total {
                return Err(Error::IndexOutOfRange {
                    index: i,
                    len: total,
                });
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::DuplicateIndex(i));
            }
        }
        Ok(Self { windows })
    }

    pub fn windows(&self) -> &[Vec<usize>] {
        &self.windows
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn n_tokens(&self) -> usize {
        self.windows.iter().map(Vec::len).sum()
    }

    pub fn into_windows(self) -> Vec<Vec<usize>> {
        self.windows
    }
}

/// Tiles the grid with `side × side` windows in tile row-major order.
/// Windows touching the right or bottom edge are clipped, never padded.
/// Indices inside each window are ascending.
pub fn partition(grid: GridSpec, side: usize) -> Result<WindowPartition> {
    if side == 0 {
        return Err(Error::invalid("window_side", "must be at least 1"));
    }
    let mut windows = Vec::with_capacity(grid.height.div_ceil(side) * grid.width.div_ceil(side));
    for r0 in (0..grid.height).step_by(side) {
        let r1 = (r0 + side).min(grid.height);
        for c0 in (0..grid.width).step_by(side) {
            let c1 = (c0 + side).min(grid.width);
            let window = (r0..r1)
                .flat_map(|r| (c0..c1).map(move |c| r * grid.width + c))
                .collect();
            windows.push(window);
        }
    }
    Ok(WindowPartition { windows })
}
