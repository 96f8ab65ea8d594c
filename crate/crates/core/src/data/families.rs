use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// `sin(t - p pi)`, one parameter in `[0, 1.7]`.
    Shift,
    /// Cumulative sum of clipped, powered sine bursts; one parameter in `[1, 5]`.
    Stair,
    /// `sin(p1 pi t) + sin(p2 pi t)`.
    Freqs,
    /// Two Gaussian bumps centered at `p1` and `p2`.
    Gauss,
    /// Columns read from a file; the parameter is the column index.
    External,
}

impl Family {
    pub const SYNTHETIC: [Family; 4] = [Family::Shift, Family::Stair, Family::Freqs, Family::Gauss];

    pub fn param_dims(self) -> usize {
        match self {
            Family::Shift | Family::Stair | Family::External => 1,
            Family::Freqs | Family::Gauss => 2,
        }
    }

    /// Parameter box, one `(lo, hi)` per dimension.
    pub fn param_box(self) -> Vec<(f64, f64)> {
        match self {
            Family::Shift => vec![(0.0, 1.7)],
            Family::Stair => vec![(1.0, 5.0)],
            Family::Freqs => vec![(0.3, 0.5), (0.8, 1.0)],
            Family::Gauss => vec![(1.0, 3.0), (4.0, 6.0)],
            Family::External => vec![],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Shift => "shift",
            Family::Stair => "stair",
            Family::Freqs => "freqs",
            Family::Gauss => "gauss",
            Family::External => "external",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shift" => Ok(Family::Shift),
            "stair" => Ok(Family::Stair),
            "freqs" => Ok(Family::Freqs),
            "gauss" => Ok(Family::Gauss),
            "external" => Ok(Family::External),
            other => Err(Error::Config(format!("unknown dataset family `{other}`"))),
        }
    }
}

/// Uniform sampling of `[start, end]` with `points` samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub start: f64,
    pub end: f64,
    pub points: usize,
}

impl TimeGrid {
    pub fn new(start: f64, end: f64, points: usize) -> Result<Self> {
        let g = TimeGrid { start, end, points };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points < 2 || self.end.partial_cmp(&self.start) != Some(std::cmp::Ordering::Greater) || !self.start.is_finite() || !self.end.is_finite() {
            return Err(Error::Config(format!("invalid time grid {self:?}")));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        let step = (self.end - self.start) / (self.points - 1) as f64;
        (0..self.points)
            .map(|i| if i + 1 == self.points { self.end } else { self.start + step * i as f64 })
            .collect()
    }

    pub fn default_for(family: Family) -> TimeGrid {
        let (start, end) = match family {
            Family::Shift => (0.0, 2.0 * PI),
            Family::Stair => (0.0, STAIR_DEFAULT_END),
            Family::Freqs => (0.0, 10.0),
            Family::Gauss => (0.0, 7.0),
            Family::External => (0.0, 1.0),
        };
        TimeGrid { start, end, points: 200 }
    }
}

/// Default right end of the stair time grid; long enough that every curve
/// in the parameter box has several jumps.
pub const STAIR_DEFAULT_END: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StairParams {
    pub phase0: f64,
    pub amp0: f64,
    pub kappa: f64,
    pub y0: f64,
    pub w: f64,
}

impl Default for StairParams {
    fn default() -> Self {
        StairParams { phase0: 0.875, amp0: 1.0, kappa: 2.286, y0: 2.3, w: 2.0 * PI }
    }
}

pub fn gen_shift(t: &[f64], p: f64) -> Vec<f64> {
    t.iter().map(|&tj| (tj - p * PI).sin()).collect()
}

pub fn gen_stair(t: &[f64], p: f64, sp: &StairParams) -> Result<Vec<f64>> {
    if let Some(bad) = t.iter().find(|&&x| x < 0.0) {
        return Err(Error::Domain(format!("stair curves need t >= 0, got {bad}")));
    }
    if sp.w.is_nan() || sp.w <= 0.0 {
        return Err(Error::Config(format!("stair frequency must be positive, got {}", sp.w)));
    }
    let amp = p;
    let phase = sp.phase0 + sp.kappa * (amp - sp.amp0);
    let mut acc = 0.0;
    Ok(t.iter()
        .map(|&tj| {
            let g = amp * tj.sqrt() * (sp.w * (tj - phase)).sin() - sp.y0;
            let h = ((g.abs() + g) / 2.0).powi(5);
            acc += h;
            acc
        })
        .collect())
}

pub fn gen_freqs(t: &[f64], p1: f64, p2: f64) -> Vec<f64> {
    t.iter().map(|&tj| (p1 * PI * tj).sin() + (p2 * PI * tj).sin()).collect()
}

pub fn gen_gauss(t: &[f64], p1: f64, p2: f64) -> Vec<f64> {
    t.iter()
        .map(|&tj| 1.3 * (-(tj - p1).powi(2) / 0.08).exp() + 1.3 * (-(tj - p2).powi(2) / 0.08).exp())
        .collect()
}

/// One column of `family` at parameter vector `p`.
pub fn generate_column(family: Family, t: &[f64], p: &[f64], stair: &StairParams) -> Result<Vec<f64>> {
    let need = family.param_dims();
    if family != Family::External && p.len() != need {
        return Err(Error::Parameter(format!("{family} expects {need} parameters, got {}", p.len())));
    }
    match family {
        Family::Shift => Ok(gen_shift(t, p[0])),
        Family::Stair => gen_stair(t, p[0], stair),
        Family::Freqs => Ok(gen_freqs(t, p[0], p[1])),
        Family::Gauss => Ok(gen_gauss(t, p[0], p[1])),
        Family::External => Err(Error::Parameter("external data cannot be generated".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shift_values() {
        assert_eq!(gen_shift(&[0.0], 0.0), vec![0.0]);
        let t: Vec<f64> = (0..20).map(|i| i as f64 * 0.3).collect();
        for (a, b) in gen_shift(&t, 1.0).iter().zip(&t) {
            assert!((a + b.sin()).abs() < 1e-14);
        }
        assert!(gen_shift(&[PI / 2.0], 0.5)[0].abs() < 1e-15);
    }

    #[test]
    fn stair_starts_at_zero_and_never_decreases() {
        let t = TimeGrid::new(0.0, 10.0, 300).unwrap().values();
        for p in [1.0, 2.2, 3.7, 5.0] {
            let x = gen_stair(&t, p, &StairParams::default()).unwrap();
            assert_eq!(x[0], 0.0);
            assert!(x.windows(2).all(|w| w[1] >= w[0]));
        }
    }

    #[test]
    fn stair_rejects_negative_time() {
        assert!(matches!(gen_stair(&[-0.1, 0.0], 2.0, &StairParams::default()), Err(Error::Domain(_))));
    }

    #[test]
    fn freqs_values() {
        assert_eq!(gen_freqs(&[0.0], 0.4, 0.9), vec![0.0]);
        let t = [0.3, 1.1, 2.7];
        for (a, tj) in gen_freqs(&t, 0.35, 0.35).iter().zip(t) {
            assert!((a - 2.0 * (0.35 * PI * tj).sin()).abs() < 1e-14);
        }
        let v = gen_freqs(&[1.0], 0.4, 0.9)[0];
        let hand = (0.4 * PI).sin() + (0.9 * PI).sin();
        assert!((v - hand).abs() < 1e-15);
    }

    #[test]
    fn gauss_peak_and_symmetry() {
        let (p1, p2) = (2.0, 5.0);
        let peak = gen_gauss(&[p1], p1, p2)[0];
        assert!(peak >= 1.3 && peak <= 1.3 + 1.3 * (-1.0f64 / 0.08).exp());
        let second = |t: f64| 1.3 * (-(t - p2).powi(2) / 0.08).exp();
        let d = 0.17;
        let left = gen_gauss(&[p1 - d], p1, p2)[0] - second(p1 - d);
        let right = gen_gauss(&[p1 + d], p1, p2)[0] - second(p1 + d);
        assert!((left - right).abs() < 1e-14);
    }

    #[test]
    fn grid_is_strictly_increasing() {
        let g = TimeGrid::new(0.0, 7.0, 200).unwrap().values();
        assert_eq!(g.len(), 200);
        assert_eq!(g[199], 7.0);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        assert!(TimeGrid::new(0.0, 1.0, 1).is_err());
        assert!(TimeGrid::new(1.0, 1.0, 5).is_err());
    }

    #[test]
    fn family_names_round_trip() {
        for f in Family::SYNTHETIC {
            assert_eq!(f.as_str().parse::<Family>().unwrap(), f);
        }
        assert!("sines".parse::<Family>().is_err());
    }
}
