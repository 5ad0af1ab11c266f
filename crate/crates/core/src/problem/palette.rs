use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::Rgba;

/// What a sketch pixel means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Role {
    Material,
    Load,
    FixX,
    FixY,
    FixXY,
    Mask,
    Background,
}

impl Role {
    pub const ALL: [Role; 7] = [
        Role::Material,
        Role::Load,
        Role::FixX,
        Role::FixY,
        Role::FixXY,
        Role::Mask,
        Role::Background,
    ];

    pub fn is_constraint(self) -> bool {
        matches!(self, Role::Load | Role::FixX | Role::FixY | Role::FixXY)
    }
}

/// Brush color for one role with a per-channel tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColorCode {
    pub role: Role,
    /// Reference color. For codes that ignore alpha, the alpha channel is the
    /// value used when painting.
    pub color: Rgba,
    pub tolerance: u8,
    #[serde(default)]
    pub ignore_alpha: bool,
}

impl ColorCode {
    pub const fn new(role: Role, color: Rgba, tolerance: u8) -> Self {
        ColorCode {
            role,
            color,
            tolerance,
            ignore_alpha: false,
        }
    }

    fn channels(&self, other_ignores_alpha: bool) -> usize {
        if self.ignore_alpha || other_ignores_alpha {
            3
        } else {
            4
        }
    }

    /// Largest per-channel deviation from the reference color.
    pub fn deviation(&self, px: Rgba) -> u8 {
        let n = self.channels(false);
        (0..n)
            .map(|c| self.color[c].abs_diff(px[c]))
            .max()
            .unwrap_or(0)
    }

    pub fn matches(&self, px: Rgba) -> bool {
        if self.ignore_alpha && px[3] == 0 {
            return false;
        }
        self.deviation(px) <= self.tolerance
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PaletteError {
    #[error("palette colors for {0:?} and {1:?} overlap within tolerance")]
    Overlap(Role, Role),
    #[error("palette has no color for {0:?}")]
    MissingRole(Role),
    #[error("palette has two colors for {0:?}")]
    DuplicateRole(Role),
}

/// Mapping between brush colors and roles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Palette {
    codes: Vec<ColorCode>,
}

pub const DEFAULT_TOLERANCE: u8 = 30;

impl Default for Palette {
    /// Black material, red loads, yellow/blue/green supports in x/y/xy,
    /// semi-transparent azure mask, white background.
    fn default() -> Self {
        let t = DEFAULT_TOLERANCE;
        Palette {
            codes: vec![
                ColorCode::new(Role::Material, [0, 0, 0, 255], t),
                ColorCode::new(Role::Load, [255, 0, 0, 255], t),
                ColorCode::new(Role::FixX, [255, 255, 0, 255], t),
                ColorCode::new(Role::FixY, [0, 0, 255, 255], t),
                ColorCode::new(Role::FixXY, [0, 255, 0, 255], t),
                ColorCode {
                    role: Role::Mask,
                    color: [0, 127, 255, 128],
                    tolerance: t,
                    ignore_alpha: true,
                },
                ColorCode::new(Role::Background, [255, 255, 255, 255], t),
            ],
        }
    }
}

impl Palette {
    /// Build a palette, checking that all roles are covered exactly once and
    /// that no two colors can match the same pixel.
    pub fn new(codes: Vec<ColorCode>) -> Result<Self, PaletteError> {
        for role in Role::ALL {
            match codes.iter().filter(|c| c.role == role).count() {
                0 => return Err(PaletteError::MissingRole(role)),
                1 => {}
                _ => return Err(PaletteError::DuplicateRole(role)),
            }
        }
        for (i, a) in codes.iter().enumerate() {
            for b in &codes[i + 1..] {
                let n = a.channels(b.ignore_alpha);
                let separated = (0..n).any(|c| {
                    a.color[c].abs_diff(b.color[c]) as u16 > a.tolerance as u16 + b.tolerance as u16
                });
                if !separated {
                    return Err(PaletteError::Overlap(a.role, b.role));
                }
            }
        }
        Ok(Palette { codes })
    }

    pub fn codes(&self) -> &[ColorCode] {
        &self.codes
    }

    pub fn code(&self, role: Role) -> &ColorCode {
        self.codes
            .iter()
            .find(|c| c.role == role)
            .expect("palette covers every role")
    }

    pub fn color(&self, role: Role) -> Rgba {
        self.code(role).color
    }

    /// Nearest in-tolerance code, or Background when none matches.
    pub fn classify(&self, px: Rgba) -> Role {
        self.codes
            .iter()
            .filter(|c| c.matches(px))
            .min_by_key(|c| c.deviation(px))
            .map(|c| c.role)
            .unwrap_or(Role::Background)
    }
}
