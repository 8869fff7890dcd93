use serde::{Deserialize, Serialize};

/// Ground height profile `h(x)`. Every profile is flat for `x < start`. Irregular
/// terrain starts under the spawn point so that a robot which barely walks still
/// stands on bumps; its first node is pinned to zero height at `start`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TerrainProfile {
    Flat,
    Slope { grade: f64, start: f64 },
    Stairs { rise: f64, run: f64, start: f64 },
    /// Piecewise-linear bumps with node heights in `[0, max_height]` every `cell` meters.
    Irregular { max_height: f64, cell: f64, start: f64, seed: u64 },
}

impl Default for TerrainProfile {
    fn default() -> Self {
        TerrainProfile::Flat
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

impl TerrainProfile {
    pub fn slope(grade: f64) -> Self {
        TerrainProfile::Slope { grade, start: 0.5 }
    }

    pub fn stairs(rise: f64, run: f64) -> Self {
        TerrainProfile::Stairs { rise, run, start: 0.5 }
    }

    pub fn irregular(max_height: f64, seed: u64) -> Self {
        TerrainProfile::Irregular { max_height, cell: 0.2, start: 0.0, seed }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TerrainProfile::Flat => "flat",
            TerrainProfile::Slope { .. } => "slope",
            TerrainProfile::Stairs { .. } => "stairs",
            TerrainProfile::Irregular { .. } => "irregular",
        }
    }

    fn node_height(max_height: f64, seed: u64, i: i64) -> f64 {
        let bits = splitmix(seed ^ splitmix(i as u64));
        let u = (bits >> 11) as f64 / (1u64 << 53) as f64;
        u * max_height
    }

    pub fn height(&self, x: f64) -> f64 {
        match *self {
            TerrainProfile::Flat => 0.0,
            TerrainProfile::Slope { grade, start } => grade * (x - start).max(0.0),
            TerrainProfile::Stairs { rise, run, start } => {
                if x < start {
                    0.0
                } else {
                    rise * (libm::floor((x - start) / run) + 1.0)
                }
            }
            TerrainProfile::Irregular { max_height, cell, start, seed } => {
                if x < start {
                    return 0.0;
                }
                let s = (x - start) / cell;
                let i = libm::floor(s) as i64;
                let frac = s - i as f64;
                // Node 0 sits at `start` with height 0 to keep the profile continuous.
                let h0 = if i == 0 { 0.0 } else { Self::node_height(max_height, seed, i) };
                let h1 = Self::node_height(max_height, seed, i + 1);
                h0 + (h1 - h0) * frac
            }
        }
    }

    /// `dh/dx`; zero on flat treads and risers of stairs.
    pub fn gradient(&self, x: f64) -> f64 {
        match *self {
            TerrainProfile::Flat | TerrainProfile::Stairs { .. } => 0.0,
            TerrainProfile::Slope { grade, start } => {
                if x > start {
                    grade
                } else {
                    0.0
                }
            }
            TerrainProfile::Irregular { max_height, cell, start, seed } => {
                if x < start {
                    return 0.0;
                }
                let i = libm::floor((x - start) / cell) as i64;
                let h0 = if i == 0 { 0.0 } else { Self::node_height(max_height, seed, i) };
                let h1 = Self::node_height(max_height, seed, i + 1);
                (h1 - h0) / cell
            }
        }
    }

    pub fn max_height_bound(&self) -> Option<f64> {
        match *self {
            TerrainProfile::Flat => Some(0.0),
            TerrainProfile::Irregular { max_height, .. } => Some(max_height),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stairs_are_steps_of_rise() {
        let t = TerrainProfile::stairs(0.10, 0.20);
        assert_eq!(t.height(0.0), 0.0);
        assert!((t.height(0.55) - 0.10).abs() < 1e-12);
        assert!((t.height(0.75) - 0.20).abs() < 1e-12);
        assert!((t.height(0.69) - 0.10).abs() < 1e-12);
    }

    #[test]
    fn slope_is_linear() {
        let t = TerrainProfile::slope(0.25);
        assert!((t.height(2.5) - 0.5).abs() < 1e-12);
        assert_eq!(t.gradient(1.0), 0.25);
        assert_eq!(t.height(0.2), 0.0);
    }

    #[test]
    fn irregular_is_bounded_and_continuous() {
        let t = TerrainProfile::irregular(0.10, 17);
        let mut prev = t.height(0.0);
        for i in 1..5000 {
            let x = i as f64 * 0.002;
            let h = t.height(x);
            assert!((0.0..=0.10).contains(&h));
            assert!((h - prev).abs() <= 0.10 / 0.2 * 0.002 + 1e-12);
            prev = h;
        }
        assert_ne!(t.height(3.0), TerrainProfile::irregular(0.10, 18).height(3.0));
    }
}
