//! Randomly shifted dyadic grids over a finite window of scales.
//!
//! A grid is fixed by a dimension `d`, a window `[l_min, l_max]` of scale
//! exponents, a shift `ω` and a number of root cubes per axis. Cubes of side
//! `2^L` are translated by `Σ_{s < L} ω_s 2^s`, where `ω_s ∈ {0,1}^d` is the
//! shift bit attached to side length `2^s`. Only `s ∈ [l_min, l_max)` can
//! matter inside the window, so every corner is an integer multiple of
//! `2^{l_min}` and all geometry below is exact integer arithmetic in those
//! units ("finest units").

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Inclusive range of scale exponents: finest side `2^l_min`, coarsest `2^l_max`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScaleWindow {
    pub l_min: i32,
    pub l_max: i32,
}

impl ScaleWindow {
    pub fn new(l_min: i32, l_max: i32) -> Result<Self> {
        if l_min > l_max {
            return Err(Error::InvalidArgument(format!(
                "empty scale window [{l_min}, {l_max}]"
            )));
        }
        if l_max - l_min > 30 {
            return Err(Error::InvalidArgument(
                "scale windows deeper than 30 levels are not supported".into(),
            ));
        }
        Ok(Self { l_min, l_max })
    }

    /// Number of refinements between the coarsest and finest level.
    pub fn depth(&self) -> u32 {
        (self.l_max - self.l_min) as u32
    }

    /// Number of distinct scales in the window.
    pub fn num_scales(&self) -> usize {
        self.depth() as usize + 1
    }

    pub fn contains(&self, level: i32) -> bool {
        (self.l_min..=self.l_max).contains(&level)
    }

    pub fn scales(&self) -> impl Iterator<Item = i32> {
        self.l_min..=self.l_max
    }
}

/// Shift bits `ω_s ∈ {0,1}^d`, one entry per `s = l_min, …, l_max − 1`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Omega {
    d: usize,
    bits: Vec<Vec<u8>>,
}

impl Omega {
    pub fn zero(d: usize, window: ScaleWindow) -> Self {
        Self {
            d,
            bits: vec![vec![0; d]; window.depth() as usize],
        }
    }

    pub fn new(d: usize, window: ScaleWindow, bits: Vec<Vec<u8>>) -> Result<Self> {
        if bits.len() != window.depth() as usize {
            return Err(Error::InvalidArgument(format!(
                "omega needs {} entries (one per scale below l_max), got {}",
                window.depth(),
                bits.len()
            )));
        }
        for b in &bits {
            if b.len() != d || b.iter().any(|&x| x > 1) {
                return Err(Error::InvalidArgument(
                    "each omega entry must be a 0/1 vector of length d".into(),
                ));
            }
        }
        Ok(Self { d, bits })
    }

    /// The `index`-th shift in a fixed enumeration of all `2^{d·depth}` shifts.
    pub fn from_index(d: usize, window: ScaleWindow, index: u64) -> Self {
        let depth = window.depth() as usize;
        let bits = (0..depth)
            .map(|s| {
                (0..d)
                    .map(|a| ((index >> (s * d + a)) & 1) as u8)
                    .collect()
            })
            .collect();
        Self { d, bits }
    }

    /// Number of independent shift bits.
    pub fn num_bits(d: usize, window: ScaleWindow) -> u32 {
        d as u32 * window.depth()
    }

    pub fn bits(&self) -> &[Vec<u8>] {
        &self.bits
    }

    pub fn dim(&self) -> usize {
        self.d
    }
}

/// Draws a uniformly random shift.
pub fn sample_shift(seed: u64, window: ScaleWindow, d: usize) -> Omega {
    let mut rng = crate::rng(seed);
    sample_shift_with(&mut rng, window, d)
}

pub fn sample_shift_with(rng: &mut crate::Rng, window: ScaleWindow, d: usize) -> Omega {
    let bits = (0..window.depth())
        .map(|_| (0..d).map(|_| rng.random_range(0..2u8)).collect())
        .collect();
    Omega { d, bits }
}

/// A dyadic cube: side `2^level`, lower corner in finest units.
///
/// Corners are absolute, so a cube value does not depend on which grid it
/// was produced by; grid membership is checked by [`Grid::contains_cube`].
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cube {
    pub level: i32,
    pub corner: Vec<i64>,
}

/// Serialized form of a [`Grid`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridDescriptor {
    pub d: usize,
    pub l_min: i32,
    pub l_max: i32,
    #[serde(default = "one")]
    pub roots: u32,
    #[serde(default)]
    pub omega: Vec<Vec<u8>>,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn one() -> u32 {
    1
}

/// A shifted dyadic grid restricted to a box of `roots^d` cubes of side `2^l_max`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "GridDescriptor", into = "GridDescriptor")]
pub struct Grid {
    d: usize,
    window: ScaleWindow,
    omega: Omega,
    roots: u32,
    seed: Option<u64>,
    offsets: Vec<Vec<i64>>,
}

impl TryFrom<GridDescriptor> for Grid {
    type Error = Error;

    fn try_from(g: GridDescriptor) -> Result<Self> {
        let window = ScaleWindow::new(g.l_min, g.l_max)?;
        if g.d == 0 {
            return Err(Error::InvalidArgument("dimension must be at least 1".into()));
        }
        let omega = if g.omega.is_empty() {
            match g.seed {
                Some(s) => sample_shift(s, window, g.d),
                None => Omega::zero(g.d, window),
            }
        } else {
            Omega::new(g.d, window, g.omega)?
        };
        let mut grid = Grid::new(g.d, window, omega, g.roots)?;
        grid.seed = g.seed;
        Ok(grid)
    }
}

impl From<Grid> for GridDescriptor {
    fn from(g: Grid) -> Self {
        GridDescriptor {
            d: g.d,
            l_min: g.window.l_min,
            l_max: g.window.l_max,
            roots: g.roots,
            omega: g.omega.bits.clone(),
            seed: g.seed,
        }
    }
}

impl Grid {
    pub fn new(d: usize, window: ScaleWindow, omega: Omega, roots: u32) -> Result<Self> {
        if d == 0 || roots == 0 {
            return Err(Error::InvalidArgument("need d >= 1 and roots >= 1".into()));
        }
        if omega.d != d || omega.bits.len() != window.depth() as usize {
            return Err(Error::InvalidArgument("omega does not fit the grid".into()));
        }
        let cells = (roots as u64) << window.depth();
        if (cells as f64).powi(d as i32) > 1e8 {
            return Err(Error::InvalidArgument("grid has too many finest cells".into()));
        }
        let offsets = window
            .scales()
            .map(|level| {
                (0..d)
                    .map(|a| {
                        (window.l_min..level)
                            .map(|s| {
                                (omega.bits[(s - window.l_min) as usize][a] as i64)
                                    << (s - window.l_min)
                            })
                            .sum()
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            d,
            window,
            omega,
            roots,
            seed: None,
            offsets,
        })
    }

    /// Unshifted grid (`ω = 0`).
    pub fn standard(d: usize, l_min: i32, l_max: i32, roots: u32) -> Result<Self> {
        let window = ScaleWindow::new(l_min, l_max)?;
        Self::new(d, window, Omega::zero(d, window), roots)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn window(&self) -> ScaleWindow {
        self.window
    }

    pub fn omega(&self) -> &Omega {
        &self.omega
    }

    pub fn roots_per_axis(&self) -> u32 {
        self.roots
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Side length of level-`level` cubes in finest units.
    pub fn unit(&self, level: i32) -> i64 {
        1i64 << (level - self.window.l_min)
    }

    /// Lower-corner translation of level-`level` cubes, in finest units.
    pub fn offset(&self, level: i32) -> &[i64] {
        &self.offsets[(level - self.window.l_min) as usize]
    }

    /// Lower corner of the bounding box in finest units.
    pub fn box_lo(&self) -> &[i64] {
        self.offset(self.window.l_max)
    }

    /// Number of finest cells along each axis.
    pub fn cells_per_axis(&self) -> usize {
        (self.roots as usize) << self.window.depth()
    }

    pub fn num_cells(&self) -> usize {
        self.cells_per_axis().pow(self.d as u32)
    }

    /// Side length in real units.
    pub fn side(&self, level: i32) -> f64 {
        (level as f64).exp2()
    }

    /// Lebesgue measure of a level-`level` cube.
    pub fn measure(&self, level: i32) -> f64 {
        ((level * self.d as i32) as f64).exp2()
    }

    pub fn cell_measure(&self) -> f64 {
        self.measure(self.window.l_min)
    }

    /// Number of finest cells inside a level-`level` cube.
    pub fn cells_in(&self, level: i32) -> usize {
        1usize << ((level - self.window.l_min) as usize * self.d)
    }

    /// Linear index of the finest cell with the given corner (row-major, axis 0 slowest).
    pub fn cell_index(&self, corner: &[i64]) -> Option<usize> {
        let n = self.cells_per_axis() as i64;
        let lo = self.box_lo();
        let mut idx = 0usize;
        for a in 0..self.d {
            let u = corner[a] - lo[a];
            if u < 0 || u >= n {
                return None;
            }
            idx = idx * n as usize + u as usize;
        }
        Some(idx)
    }

    pub fn cell_corner(&self, index: usize) -> Vec<i64> {
        let n = self.cells_per_axis();
        let lo = self.box_lo();
        let mut c = vec![0i64; self.d];
        let mut rest = index;
        for a in (0..self.d).rev() {
            c[a] = lo[a] + (rest % n) as i64;
            rest /= n;
        }
        c
    }

    /// Finest cell as a cube.
    pub fn cell_cube(&self, index: usize) -> Cube {
        Cube {
            level: self.window.l_min,
            corner: self.cell_corner(index),
        }
    }

    /// Real coordinates of the centre of a finest cell.
    pub fn cell_center(&self, index: usize) -> Vec<f64> {
        let h = self.side(self.window.l_min);
        self.cell_corner(index)
            .iter()
            .map(|&c| (c as f64 + 0.5) * h)
            .collect()
    }

    pub fn center(&self, q: &Cube) -> Vec<f64> {
        let h = self.side(self.window.l_min);
        let half = self.unit(q.level) as f64 / 2.0;
        q.corner.iter().map(|&c| (c as f64 + half) * h).collect()
    }

    pub fn contains_cube(&self, q: &Cube) -> bool {
        if !self.window.contains(q.level) || q.corner.len() != self.d {
            return false;
        }
        let u = self.unit(q.level);
        let off = self.offset(q.level);
        let lo = self.box_lo();
        let n = self.cells_per_axis() as i64;
        (0..self.d).all(|a| {
            (q.corner[a] - off[a]).rem_euclid(u) == 0
                && q.corner[a] >= lo[a]
                && q.corner[a] + u <= lo[a] + n
        })
    }

    /// All cubes of one level, in increasing [`Cube`] order.
    pub fn cubes_at(&self, level: i32) -> Vec<Cube> {
        if !self.window.contains(level) {
            return Vec::new();
        }
        let u = self.unit(level);
        let per = (self.cells_per_axis() as i64 / u) as usize;
        let lo = self.box_lo().to_vec();
        let total = per.pow(self.d as u32);
        (0..total)
            .map(|mut i| {
                let mut corner = vec![0i64; self.d];
                for a in (0..self.d).rev() {
                    corner[a] = lo[a] + (i % per) as i64 * u;
                    i /= per;
                }
                Cube { level, corner }
            })
            .collect()
    }

    pub fn roots(&self) -> Vec<Cube> {
        self.cubes_at(self.window.l_max)
    }

    /// Every cube of the grid, coarse levels first.
    pub fn all_cubes(&self) -> Vec<Cube> {
        (self.window.l_min..=self.window.l_max)
            .rev()
            .flat_map(|l| self.cubes_at(l))
            .collect()
    }

    /// Cubes that have children (level above `l_min`), coarse first.
    pub fn parent_cubes(&self) -> Vec<Cube> {
        (self.window.l_min + 1..=self.window.l_max)
            .rev()
            .flat_map(|l| self.cubes_at(l))
            .collect()
    }

    /// The `k`-th dyadic ancestor `Q^{(k)}`.
    pub fn parent(&self, q: &Cube, k: u32) -> Result<Cube> {
        let level = q.level + k as i32;
        if level > self.window.l_max {
            return Err(Error::ScaleOverflow {
                level,
                l_max: self.window.l_max,
            });
        }
        if !self.window.contains(q.level) {
            return Err(Error::NotInGrid);
        }
        let u = self.unit(level);
        let off = self.offset(level);
        let corner = (0..self.d)
            .map(|a| off[a] + (q.corner[a] - off[a]).div_euclid(u) * u)
            .collect();
        Ok(Cube { level, corner })
    }

    /// The `2^d` children, ordered by the bitmask `δ` (bit `a` set = upper half along axis `a`).
    pub fn children(&self, q: &Cube) -> Result<Vec<Cube>> {
        if q.level <= self.window.l_min {
            return Err(Error::NoChildren(q.level));
        }
        let h = self.unit(q.level - 1);
        Ok((0..1u32 << self.d)
            .map(|delta| Cube {
                level: q.level - 1,
                corner: (0..self.d)
                    .map(|a| q.corner[a] + if delta >> a & 1 == 1 { h } else { 0 })
                    .collect(),
            })
            .collect())
    }

    /// Linear indices of the finest cells inside `q`, increasing.
    pub fn cells_of(&self, q: &Cube) -> Vec<usize> {
        let u = self.unit(q.level) as usize;
        let n = self.cells_per_axis();
        let lo = self.box_lo();
        let mut out = Vec::with_capacity(u.pow(self.d as u32));
        let base: Vec<usize> = (0..self.d)
            .map(|a| (q.corner[a] - lo[a]) as usize)
            .collect();
        let total = u.pow(self.d as u32);
        for mut i in 0..total {
            let mut idx = 0usize;
            let mut local = vec![0usize; self.d];
            for a in (0..self.d).rev() {
                local[a] = i % u;
                i /= u;
            }
            for a in 0..self.d {
                idx = idx * n + base[a] + local[a];
            }
            out.push(idx);
        }
        out
    }

    /// The level-`level` cube containing the finest cell `index`.
    pub fn ancestor_of_cell(&self, index: usize, level: i32) -> Cube {
        let cell = self.cell_cube(index);
        self.parent(&cell, (level - self.window.l_min) as u32)
            .expect("level inside window")
    }

    /// Root cube containing `q`.
    pub fn root_of(&self, q: &Cube) -> Cube {
        self.parent(q, (self.window.l_max - q.level) as u32)
            .expect("cube inside window")
    }

    /// `b ⊂ a`.
    pub fn is_subcube(&self, b: &Cube, a: &Cube) -> bool {
        if b.level > a.level {
            return false;
        }
        let ua = self.unit(a.level);
        let ub = self.unit(b.level);
        (0..self.d).all(|i| a.corner[i] <= b.corner[i] && b.corner[i] + ub <= a.corner[i] + ua)
    }

    pub fn intersects(&self, a: &Cube, b: &Cube) -> bool {
        let ua = self.unit(a.level);
        let ub = self.unit(b.level);
        (0..self.d).all(|i| a.corner[i] < b.corner[i] + ub && b.corner[i] < a.corner[i] + ua)
    }

    /// Euclidean distance between two cubes, in real units.
    pub fn distance(&self, a: &Cube, b: &Cube) -> f64 {
        let ua = self.unit(a.level);
        let ub = self.unit(b.level);
        let s: i64 = (0..self.d)
            .map(|i| {
                let gap = (a.corner[i] - (b.corner[i] + ub))
                    .max(b.corner[i] - (a.corner[i] + ua))
                    .max(0);
                gap * gap
            })
            .sum();
        (s as f64).sqrt() * self.side(self.window.l_min)
    }

    /// Distance from `q` to the boundary of `r`, in real units.
    pub fn boundary_distance(&self, q: &Cube, r: &Cube) -> f64 {
        if self.is_subcube(q, r) {
            let uq = self.unit(q.level);
            let ur = self.unit(r.level);
            let m = (0..self.d)
                .map(|i| (q.corner[i] - r.corner[i]).min(r.corner[i] + ur - q.corner[i] - uq))
                .min()
                .unwrap_or(0);
            m as f64 * self.side(self.window.l_min)
        } else if self.intersects(q, r) {
            0.0
        } else {
            self.distance(q, r)
        }
    }

    /// `(γ, r)`-goodness of `q`, quantified over the in-window cubes `R` with `ℓ(R) ≥ 2^r ℓ(Q)`.
    ///
    /// Inside the bounding box a cube not containing `q` is never closer to
    /// `q` than the boundary of the same-level ancestor, so only ancestors are
    /// tested.
    pub fn is_good(&self, q: &Cube, gamma: f64, r: u32) -> bool {
        let lq = q.level as f64;
        let mut level = q.level + r as i32;
        while level <= self.window.l_max {
            let anc = self.parent(q, (level - q.level) as u32).expect("inside window");
            let threshold = (gamma * lq + (1.0 - gamma) * level as f64).exp2();
            if self.boundary_distance(q, &anc) <= threshold {
                return false;
            }
            level += 1;
        }
        true
    }

    /// Scales of the sub-lattice `{Q : ℓ(Q) = 2^{m(k+1)+j}}` inside the window.
    pub fn sublattice(&self, j: u32, k: u32) -> Result<Vec<i32>> {
        if j > k {
            return Err(Error::InvalidArgument(format!("need 0 <= j <= k, got j={j}, k={k}")));
        }
        let step = k as i32 + 1;
        Ok(self
            .window
            .scales()
            .filter(|&l| (l - j as i32).rem_euclid(step) == 0)
            .collect())
    }

    pub fn sublattice_cubes(&self, j: u32, k: u32) -> Result<Vec<Cube>> {
        Ok(self
            .sublattice(j, k)?
            .into_iter()
            .rev()
            .flat_map(|l| self.cubes_at(l))
            .collect())
    }

    /// Minimal cube of the grid containing `q` and every cube of `rs`.
    pub fn common_parent(&self, q: &Cube, rs: &[Cube]) -> Option<Cube> {
        let start = rs.iter().map(|r| r.level).chain([q.level]).max()?;
        let mut k = self.parent(q, (start - q.level) as u32).ok()?;
        loop {
            if rs.iter().all(|r| self.is_subcube(r, &k)) {
                return Some(k);
            }
            if k.level >= self.window.l_max {
                return None;
            }
            k = self.parent(&k, 1).ok()?;
        }
    }
}

/// Monte-Carlo estimate of a probability with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BadProbability {
    pub estimate: f64,
    pub stderr: f64,
    pub trials: u64,
}

/// Default goodness exponent `γ = α / (2(dn + α))`.
pub fn default_gamma(d: usize, n: usize, alpha: f64) -> f64 {
    alpha / (2.0 * ((d * n) as f64 + alpha))
}

/// Default goodness depth.
pub const DEFAULT_R: u32 = 2;

/// Is the reference cell bad in the grid with shift `omega`?
///
/// The reference cell is the last finest cell of the unshifted root; it lies
/// in the single root of every shifted grid, and its position relative to
/// each ancestor is uniformly distributed under a uniform shift.
fn reference_cell_bad(d: usize, window: ScaleWindow, omega: Omega, gamma: f64, r: u32) -> bool {
    let grid = Grid::new(d, window, omega, 1).expect("valid grid");
    let last = (1i64 << window.depth()) - 1;
    let q = Cube {
        level: window.l_min,
        corner: vec![last; d],
    };
    !grid.is_good(&q, gamma, r)
}

/// Monte-Carlo estimate of `P_bad(γ, r)` for a finest-level cube.
pub fn bad_probability(
    d: usize,
    window: ScaleWindow,
    gamma: f64,
    r: u32,
    trials: u64,
    seed: u64,
) -> Result<BadProbability> {
    if trials == 0 {
        return Err(Error::InvalidArgument("need at least one trial".into()));
    }
    let mut rng = crate::rng(seed);
    let mut bad = 0u64;
    for _ in 0..trials {
        let omega = sample_shift_with(&mut rng, window, d);
        if reference_cell_bad(d, window, omega, gamma, r) {
            bad += 1;
        }
    }
    let p = bad as f64 / trials as f64;
    Ok(BadProbability {
        estimate: p,
        stderr: (p * (1.0 - p) / trials as f64).sqrt(),
        trials,
    })
}

/// Exact `P_bad(γ, r)` by enumerating every shift (at most 2^24 of them).
pub fn bad_probability_exact(d: usize, window: ScaleWindow, gamma: f64, r: u32) -> Result<f64> {
    let bits = Omega::num_bits(d, window);
    if bits > 24 {
        return Err(Error::BudgetExceeded(format!(
            "{bits} shift bits exceed the enumeration limit of 24"
        )));
    }
    let total = 1u64 << bits;
    let bad = (0..total)
        .filter(|&i| reference_cell_bad(d, window, Omega::from_index(d, window, i), gamma, r))
        .count();
    Ok(bad as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn std1(l_min: i32, l_max: i32) -> Grid {
        Grid::standard(1, l_min, l_max, 1).unwrap()
    }

    fn cube(g: &Grid, level: i32, x: f64) -> Cube {
        let h = g.side(g.window().l_min);
        Cube {
            level,
            corner: vec![(x / h).round() as i64],
        }
    }

    #[test]
    fn standard_grid_has_seven_cubes() {
        let g = std1(-2, 0);
        assert_eq!(g.all_cubes().len(), 7);
        assert_eq!(g.roots(), vec![cube(&g, 0, 0.0)]);
        assert_eq!(g.num_cells(), 4);
    }

    #[test]
    fn shift_moves_the_unit_cube_by_a_half() {
        let w = ScaleWindow::new(-1, 0).unwrap();
        let g = Grid::new(1, w, Omega::new(1, w, vec![vec![1]]).unwrap(), 1).unwrap();
        let root = &g.roots()[0];
        // corner in units of 1/2: [1/2, 3/2)
        assert_eq!(root.corner, vec![1]);
        assert_eq!(g.unit(0), 2);
    }

    #[test]
    fn single_square() {
        let g = Grid::standard(2, 0, 0, 1).unwrap();
        assert_eq!(g.all_cubes().len(), 1);
        assert!(g.children(&g.roots()[0]).is_err());
    }

    #[test]
    fn empty_window_is_rejected() {
        assert!(ScaleWindow::new(1, 0).is_err());
    }

    #[test]
    fn parent_examples() {
        let g = std1(-2, 0);
        assert_eq!(g.parent(&cube(&g, -1, 0.0), 1).unwrap(), cube(&g, 0, 0.0));
        assert_eq!(g.parent(&cube(&g, -2, 0.75), 2).unwrap(), cube(&g, 0, 0.0));
        let q = cube(&g, -2, 0.25);
        assert_eq!(g.parent(&q, 0).unwrap(), q);
        assert!(matches!(
            g.parent(&cube(&g, 0, 0.0), 1),
            Err(Error::ScaleOverflow { .. })
        ));
    }

    #[test]
    fn children_examples() {
        let g = std1(-2, 0);
        let kids = g.children(&cube(&g, 0, 0.0)).unwrap();
        assert_eq!(kids, vec![cube(&g, -1, 0.0), cube(&g, -1, 0.5)]);
        let g2 = Grid::standard(2, -1, 0, 1).unwrap();
        assert_eq!(g2.children(&g2.roots()[0]).unwrap().len(), 4);
        assert!(matches!(
            g.children(&cube(&g, -2, 0.0)),
            Err(Error::NoChildren(-2))
        ));
    }

    #[test]
    fn bad_cube_example() {
        let g = std1(-2, 0);
        let q = cube(&g, -2, 0.25);
        // d(Q, ∂[0,1)) = 1/4 and the threshold is (1/4)^{1/2} = 1/2.
        assert_eq!(g.boundary_distance(&q, &g.roots()[0]), 0.25);
        assert!(!g.is_good(&q, 0.5, 2));
    }

    #[test]
    fn goodness_threshold_grows_as_gamma_decreases() {
        // [3/8, 1/2) sits 3/8 away from the boundary of [0,1); the threshold
        // (1/8)^γ tends to 1 as γ → 0, so only large γ makes it good.
        let g = std1(-3, 0);
        let q = cube(&g, -3, 0.375);
        assert!(g.is_good(&q, 0.9, 3));
        assert!(!g.is_good(&q, 0.01, 3));
    }

    #[test]
    fn goodness_is_vacuous_without_large_ancestors() {
        let g = std1(-2, 0);
        for q in g.cubes_at(-2) {
            assert!(g.is_good(&q, 0.99, 3));
        }
    }

    #[test]
    fn sublattice_examples() {
        let g = std1(-2, 0);
        assert_eq!(g.sublattice(0, 0).unwrap(), vec![-2, -1, 0]);
        assert_eq!(g.sublattice(0, 1).unwrap(), vec![-2, 0]);
        assert_eq!(g.sublattice(1, 1).unwrap(), vec![-1]);
        assert!(g.sublattice(2, 1).is_err());
        assert_eq!(g.sublattice_cubes(0, 0).unwrap().len(), 7);
    }

    #[test]
    fn common_parent_examples() {
        let g = std1(-2, 0);
        let half = cube(&g, -1, 0.0);
        assert_eq!(g.common_parent(&half, std::slice::from_ref(&half)), Some(half.clone()));
        let q = cube(&g, -2, 0.0);
        let r = cube(&g, -2, 0.5);
        assert_eq!(g.common_parent(&q, &[r]), Some(cube(&g, 0, 0.0)));
        let two = Grid::standard(1, -1, 0, 2).unwrap();
        let a = two.cubes_at(-1)[0].clone();
        let b = two.cubes_at(-1)[3].clone();
        assert_eq!(two.common_parent(&a, &[b]), None);
    }

    #[test]
    fn bad_probability_limits() {
        let w = ScaleWindow::new(-2, 0).unwrap();
        // gamma close to 1: every finest cube is within one cell of the
        // boundary of its grandparent, so all shifts make it bad.
        assert_eq!(bad_probability_exact(1, w, 0.999, 2).unwrap(), 1.0);
        // r deeper than the window: vacuously good.
        let est = bad_probability(1, w, 0.5, 5, 100, 1).unwrap();
        assert_eq!(est.estimate, 0.0);
        let a = bad_probability(1, w, 0.3, 1, 500, 9).unwrap();
        let b = bad_probability(1, w, 0.3, 1, 500, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn descriptor_round_trip() {
        let w = ScaleWindow::new(-3, 0).unwrap();
        let g = Grid::new(2, w, sample_shift(4, w, 2), 2).unwrap();
        let s = serde_json::to_string(&g).unwrap();
        let back: Grid = serde_json::from_str(&s).unwrap();
        assert_eq!(g, back);
        let bad = r#"{"d":1,"l_min":0,"l_max":-1}"#;
        assert!(serde_json::from_str::<Grid>(bad).is_err());
    }

    fn arb_grid() -> impl Strategy<Value = Grid> {
        (1usize..=2, -4i32..=0, 0i32..=3, 1u32..=2, any::<u64>()).prop_map(
            |(d, l_min, depth, roots, seed)| {
                let depth = if d == 2 { depth.min(2) } else { depth };
                let w = ScaleWindow::new(l_min, l_min + depth).unwrap();
                Grid::new(d, w, sample_shift(seed, w, d), roots).unwrap()
            },
        )
    }

    proptest! {
        #[test]
        fn children_partition_parent(g in arb_grid()) {
            for q in g.parent_cubes() {
                let kids = g.children(&q).unwrap();
                let mut cells: Vec<usize> = kids.iter().flat_map(|c| g.cells_of(c)).collect();
                let total = cells.len();
                cells.sort_unstable();
                cells.dedup();
                prop_assert_eq!(cells.len(), total);
                prop_assert_eq!(cells, g.cells_of(&q));
                for c in &kids {
                    prop_assert!(g.contains_cube(c));
                    prop_assert_eq!(&g.parent(c, 1).unwrap(), &q);
                }
            }
        }

        #[test]
        fn shift_formula(g in arb_grid()) {
            let w = g.window();
            for level in w.scales() {
                for a in 0..g.dim() {
                    let expected: i64 = (w.l_min..level)
                        .map(|s| (g.omega().bits()[(s - w.l_min) as usize][a] as i64) << (s - w.l_min))
                        .sum();
                    prop_assert_eq!(g.offset(level)[a], expected);
                    for q in g.cubes_at(level) {
                        prop_assert_eq!((q.corner[a] - expected).rem_euclid(g.unit(level)), 0);
                    }
                }
            }
        }

        #[test]
        fn sublattices_partition_scales(g in arb_grid(), k in 0u32..4) {
            let mut all: Vec<i32> = (0..=k).flat_map(|j| g.sublattice(j, k).unwrap()).collect();
            all.sort_unstable();
            prop_assert_eq!(all, g.window().scales().collect::<Vec<_>>());
        }

        #[test]
        fn every_cell_has_one_ancestor_per_level(g in arb_grid()) {
            for idx in 0..g.num_cells() {
                for level in g.window().scales() {
                    let a = g.ancestor_of_cell(idx, level);
                    prop_assert!(g.contains_cube(&a));
                    prop_assert!(g.cells_of(&a).binary_search(&idx).is_ok());
                }
            }
        }
    }
}
