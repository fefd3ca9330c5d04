use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How cells at the same level are declared adjacent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdjacencyMode {
    /// Closed cells touch, including corner contact.
    Closure,
    /// Closed cells share a piece of boundary of positive length.
    Edge,
}

impl fmt::Display for AdjacencyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AdjacencyMode::Closure => f.write_str("closure"),
            AdjacencyMode::Edge => f.write_str("edge"),
        }
    }
}

impl std::str::FromStr for AdjacencyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "closure" => Ok(AdjacencyMode::Closure),
            "edge" => Ok(AdjacencyMode::Edge),
            other => Err(Error::InvalidScheme(format!("unknown adjacency mode `{other}`"))),
        }
    }
}

/// Names accepted by [`SubdivisionScheme::builtin`].
pub const BUILTIN_SCHEMES: [&str; 4] = ["interval2", "square2", "square3", "sierpinski-carpet"];

/// An `L x L` (or `L`-adic, in dimension one) subdivision pattern.
///
/// Symbols are the kept cells in file order: row `j` first, then column `i`.
/// The symbol of a child is its position in that list.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubdivisionScheme {
    name: String,
    grid_side: usize,
    dimension: usize,
    kept: Vec<(usize, usize)>,
    lookup: Vec<Option<u16>>,
    mode: AdjacencyMode,
}

impl SubdivisionScheme {
    pub fn new(
        name: impl Into<String>,
        grid_side: usize,
        dimension: usize,
        kept: Vec<(usize, usize)>,
        mode: AdjacencyMode,
    ) -> Result<Self> {
        let name = name.into();
        if grid_side < 2 {
            return Err(Error::InvalidScheme(format!("grid side {grid_side} < 2")));
        }
        if dimension != 1 && dimension != 2 {
            return Err(Error::InvalidScheme(format!("dimension {dimension} not in {{1, 2}}")));
        }
        if kept.is_empty() {
            return Err(Error::InvalidScheme("no kept cells".into()));
        }
        let mut kept = kept;
        kept.sort_by_key(|&(i, j)| (j, i));
        kept.dedup();
        if kept.len() > u16::MAX as usize {
            return Err(Error::InvalidScheme("too many kept cells".into()));
        }
        let mut lookup = vec![None; grid_side * grid_side];
        for (s, &(i, j)) in kept.iter().enumerate() {
            if i >= grid_side || j >= grid_side || (dimension == 1 && j != 0) {
                return Err(Error::InvalidScheme(format!("cell ({i},{j}) out of range")));
            }
            lookup[i + j * grid_side] = Some(s as u16);
        }
        let scheme = Self { name, grid_side, dimension, kept, lookup, mode };
        if !scheme.pattern_connected() {
            return Err(Error::InvalidScheme(
                "kept cells are not connected under closure intersection".into(),
            ));
        }
        Ok(scheme)
    }

    /// One of the built-in schemes, see [`BUILTIN_SCHEMES`].
    pub fn builtin(name: &str) -> Result<Self> {
        let full = |l: usize| -> Vec<(usize, usize)> {
            (0..l).flat_map(|j| (0..l).map(move |i| (i, j))).collect()
        };
        match name {
            "interval2" => Self::new(name, 2, 1, vec![(0, 0), (1, 0)], AdjacencyMode::Closure),
            "square2" => Self::new(name, 2, 2, full(2), AdjacencyMode::Closure),
            "square3" => Self::new(name, 3, 2, full(3), AdjacencyMode::Closure),
            "sierpinski-carpet" => {
                let kept = full(3).into_iter().filter(|&c| c != (1, 1)).collect();
                Self::new(name, 3, 2, kept, AdjacencyMode::Closure)
            }
            other => Err(Error::InvalidScheme(format!(
                "unknown built-in scheme `{other}` (known: {})",
                BUILTIN_SCHEMES.join(", ")
            ))),
        }
    }

    /// Parses the text format: a header `L=<int> mode=<closure|edge>` followed by
    /// rows of `0`/`1`. A single row means a one-dimensional scheme.
    pub fn parse(name: impl Into<String>, text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(k, l)| (k + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hline, header) = lines.next().ok_or(Error::SchemeParse {
            line: 1,
            msg: "empty scheme file".into(),
        })?;
        let mut side = None;
        let mut mode = AdjacencyMode::Closure;
        for tok in header.split_whitespace() {
            let (key, val) = tok.split_once('=').ok_or_else(|| Error::SchemeParse {
                line: hline,
                msg: format!("expected key=value, found `{tok}`"),
            })?;
            match key {
                "L" => {
                    side = Some(val.parse::<usize>().map_err(|e| Error::SchemeParse {
                        line: hline,
                        msg: format!("bad L: {e}"),
                    })?)
                }
                "mode" => {
                    mode = val.parse().map_err(|_| Error::SchemeParse {
                        line: hline,
                        msg: format!("bad mode `{val}`"),
                    })?
                }
                _ => {
                    return Err(Error::SchemeParse {
                        line: hline,
                        msg: format!("unknown header key `{key}`"),
                    })
                }
            }
        }
        let side = side.ok_or(Error::SchemeParse { line: hline, msg: "missing L=".into() })?;
        let rows: Vec<(usize, &str)> = lines.collect();
        let dimension = match rows.len() {
            1 => 1,
            n if n == side => 2,
            n => {
                return Err(Error::SchemeParse {
                    line: rows.last().map(|r| r.0).unwrap_or(hline),
                    msg: format!("expected 1 or {side} rows, found {n}"),
                })
            }
        };
        let mut kept = Vec::new();
        for (j, &(line, row)) in rows.iter().enumerate() {
            if row.chars().count() != side {
                return Err(Error::SchemeParse {
                    line,
                    msg: format!("row has {} cells, expected {side}", row.chars().count()),
                });
            }
            for (i, ch) in row.chars().enumerate() {
                match ch {
                    '1' => kept.push((i, j)),
                    '0' => {}
                    other => {
                        return Err(Error::SchemeParse {
                            line,
                            msg: format!("unexpected character `{other}`"),
                        })
                    }
                }
            }
        }
        Self::new(name, side, dimension, kept, mode)
    }

    /// Inverse of [`SubdivisionScheme::parse`].
    pub fn to_text(&self) -> String {
        let mut out = format!("L={} mode={}\n", self.grid_side, self.mode);
        let rows = if self.dimension == 1 { 1 } else { self.grid_side };
        for j in 0..rows {
            for i in 0..self.grid_side {
                out.push(if self.symbol_at(i, j).is_some() { '1' } else { '0' });
            }
            out.push('\n');
        }
        out
    }

    /// The same pattern with a different adjacency mode.
    pub fn with_mode(&self, mode: AdjacencyMode) -> Self {
        Self { mode, ..self.clone() }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn grid_side(&self) -> usize {
        self.grid_side
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn mode(&self) -> AdjacencyMode {
        self.mode
    }

    /// Number of children of every cell.
    pub fn branching(&self) -> usize {
        self.kept.len()
    }

    pub fn kept(&self) -> &[(usize, usize)] {
        &self.kept
    }

    #[inline]
    pub fn symbol_at(&self, i: usize, j: usize) -> Option<u16> {
        self.lookup[i + j * self.grid_side]
    }

    /// Symbol of the kept cell closest to the origin corner.
    pub fn corner_symbol(&self) -> u16 {
        (0..self.kept.len())
            .min_by_key(|&s| {
                let (i, j) = self.kept[s];
                (i + j, j)
            })
            .unwrap() as u16
    }

    /// Number of cells at level `n`, or `None` on overflow.
    pub fn level_size(&self, n: usize) -> Option<usize> {
        self.branching().checked_pow(n as u32)
    }

    /// Integer coordinates of cell `idx` at level `n` in the `L^n` grid.
    #[inline]
    pub fn coords(&self, n: usize, mut idx: usize) -> (usize, usize) {
        let k = self.branching();
        let (mut x, mut y, mut scale) = (0, 0, 1);
        for _ in 0..n {
            let (i, j) = self.kept[idx % k];
            idx /= k;
            x += i * scale;
            y += j * scale;
            scale *= self.grid_side;
        }
        (x, y)
    }

    /// Grid isometries (as maps on `(x, y)` in a square of side `s`) that preserve the pattern.
    fn symmetries(&self) -> Vec<u8> {
        let cands: &[u8] = if self.dimension == 1 { &[0, 1] } else { &[0, 1, 2, 3, 4, 5, 6, 7] };
        cands
            .iter()
            .copied()
            .filter(|&t| {
                self.kept.iter().all(|&(i, j)| {
                    let (a, b) = apply_isometry(t, self.grid_side, i, j, self.dimension);
                    self.symbol_at(a, b).is_some()
                })
            })
            .collect()
    }

    /// Images of a level-`n` cell under the pattern-preserving grid isometries.
    /// They carry the level graph onto itself.
    pub fn symmetric_images(&self, n: usize, idx: usize) -> Vec<usize> {
        let side = self.grid_side.pow(n as u32);
        let (x, y) = self.coords(n, idx);
        let mut out: Vec<usize> = self
            .symmetries()
            .into_iter()
            .filter_map(|t| {
                let (a, b) = apply_isometry(t, side, x, y, self.dimension);
                self.index_at(n, a, b)
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Index of the level-`n` cell at grid position `(x, y)`, if it is kept.
    #[inline]
    pub fn index_at(&self, n: usize, mut x: usize, mut y: usize) -> Option<usize> {
        let k = self.branching();
        let (mut idx, mut scale) = (0, 1);
        for _ in 0..n {
            let s = self.symbol_at(x % self.grid_side, y % self.grid_side)? as usize;
            x /= self.grid_side;
            y /= self.grid_side;
            idx += s * scale;
            scale *= k;
        }
        if x != 0 || y != 0 {
            return None;
        }
        Some(idx)
    }

    /// Calls `f` for every cell adjacent to `idx` at level `n` (excluding `idx`).
    #[inline]
    pub fn for_each_neighbor(&self, n: usize, idx: usize, mut f: impl FnMut(usize)) {
        let (x, y) = self.coords(n, idx);
        let side = self.grid_side.pow(n as u32) as isize;
        let (x, y) = (x as isize, y as isize);
        let mut visit = |dx: isize, dy: isize| {
            let (nx, ny) = (x + dx, y + dy);
            if nx >= 0 && ny >= 0 && nx < side && ny < side {
                if let Some(j) = self.index_at(n, nx as usize, ny as usize) {
                    f(j);
                }
            }
        };
        if self.dimension == 1 {
            visit(-1, 0);
            visit(1, 0);
            return;
        }
        match self.mode {
            AdjacencyMode::Closure => {
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        if dx != 0 || dy != 0 {
                            visit(dx, dy);
                        }
                    }
                }
            }
            AdjacencyMode::Edge => {
                visit(-1, 0);
                visit(1, 0);
                visit(0, -1);
                visit(0, 1);
            }
        }
    }

    /// Closed boxes of two level-`n` cells intersect (respecting the mode).
    pub fn cells_touch(&self, a: (usize, usize), b: (usize, usize)) -> bool {
        let dx = a.0.abs_diff(b.0);
        let dy = a.1.abs_diff(b.1);
        match (self.dimension, self.mode) {
            (1, _) | (_, AdjacencyMode::Closure) => dx <= 1 && dy <= 1,
            (_, AdjacencyMode::Edge) => dx + dy <= 1,
        }
    }

    fn pattern_connected(&self) -> bool {
        let n = self.kept.len();
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(s) = stack.pop() {
            let a = self.kept[s];
            for t in 0..n {
                let b = self.kept[t];
                if !seen[t] && a.0.abs_diff(b.0) <= 1 && a.1.abs_diff(b.1) <= 1 {
                    seen[t] = true;
                    stack.push(t);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

fn apply_isometry(t: u8, side: usize, x: usize, y: usize, dimension: usize) -> (usize, usize) {
    let r = side - 1;
    if dimension == 1 {
        return if t == 0 { (x, y) } else { (r - x, y) };
    }
    let (x, y) = if t & 4 != 0 { (y, x) } else { (x, y) };
    let x = if t & 1 != 0 { r - x } else { x };
    let y = if t & 2 != 0 { r - y } else { y };
    (x, y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_have_expected_branching() {
        let b: Vec<_> = BUILTIN_SCHEMES
            .iter()
            .map(|n| SubdivisionScheme::builtin(n).unwrap().branching())
            .collect();
        assert_eq!(b, vec![2, 4, 9, 8]);
    }

    #[test]
    fn text_round_trip() {
        for name in BUILTIN_SCHEMES {
            let s = SubdivisionScheme::builtin(name).unwrap();
            let t = SubdivisionScheme::parse(name, &s.to_text()).unwrap();
            assert_eq!(s, t);
        }
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(
            SubdivisionScheme::parse("x", "L=3 mode=closure\n111\n1x1\n111\n"),
            Err(Error::SchemeParse { line: 3, .. })
        ));
        assert!(SubdivisionScheme::parse("x", "").is_err());
        assert!(SubdivisionScheme::parse("x", "L=3\n111\n11\n111\n").is_err());
        assert!(SubdivisionScheme::parse("x", "L=3 mode=diag\n111\n111\n111\n").is_err());
        assert!(SubdivisionScheme::parse("x", "mode=edge\n11\n").is_err());
    }

    #[test]
    fn rejects_disconnected_or_empty_patterns() {
        assert!(SubdivisionScheme::parse("x", "L=3\n100\n000\n001\n").is_err());
        assert!(SubdivisionScheme::parse("x", "L=2\n00\n00\n").is_err());
        assert!(SubdivisionScheme::new("x", 1, 1, vec![(0, 0)], AdjacencyMode::Closure).is_err());
        // diagonal contact is connected under closure intersection
        assert!(SubdivisionScheme::parse("x", "L=2\n10\n01\n").is_ok());
    }

    #[test]
    fn coords_and_index_are_inverse() {
        let s = SubdivisionScheme::builtin("sierpinski-carpet").unwrap();
        for n in 0..4 {
            for idx in 0..s.level_size(n).unwrap() {
                let (x, y) = s.coords(n, idx);
                assert_eq!(s.index_at(n, x, y), Some(idx));
            }
        }
        // the centre of the carpet is a hole
        assert_eq!(s.index_at(1, 1, 1), None);
        assert_eq!(s.index_at(2, 4, 4), None);
    }

    #[test]
    fn symmetric_images_of_cells() {
        let sq = SubdivisionScheme::builtin("square2").unwrap();
        let corner = sq.index_at(2, 0, 0).unwrap();
        assert_eq!(sq.symmetric_images(2, corner).len(), 4);
        let inner = sq.index_at(2, 1, 1).unwrap();
        assert_eq!(sq.symmetric_images(2, inner).len(), 4);
        let edge = sq.index_at(2, 1, 0).unwrap();
        assert_eq!(sq.symmetric_images(2, edge).len(), 8);
        let iv = SubdivisionScheme::builtin("interval2").unwrap();
        assert_eq!(iv.symmetric_images(3, 2), vec![2, 5]);
        let hook = SubdivisionScheme::parse("hook", "L=3\n110\n010\n000\n").unwrap();
        assert_eq!(hook.symmetric_images(1, 0), vec![0]);
    }
}
