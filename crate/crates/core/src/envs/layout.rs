//! Plain-text grid layouts.
//!
//! One row per line: `#` wall, `.` open, `S` start, `G` goal, `K` key,
//! `N` open cell inside the noisy region. Blank lines and lines starting with
//! `;` are ignored.

use std::path::Path;

use crate::error::{io_err, Error, Result};

pub type Cell = (usize, usize);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub rows: usize,
    pub cols: usize,
    walls: Vec<bool>,
    pub start: Option<Cell>,
    pub goal: Option<Cell>,
    pub key: Option<Cell>,
    pub noisy: Vec<Cell>,
}

impl Layout {
    pub fn parse(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text
            .lines()
            .map(str::trim_end)
            .filter(|l| !l.is_empty() && !l.starts_with(';'))
            .collect();
        if lines.is_empty() {
            return Err(bad("layout has no rows"));
        }
        let cols = lines[0].chars().count();
        let mut layout = Layout {
            rows: lines.len(),
            cols,
            walls: Vec::with_capacity(lines.len() * cols),
            start: None,
            goal: None,
            key: None,
            noisy: Vec::new(),
        };
        for (r, line) in lines.iter().enumerate() {
            if line.chars().count() != cols {
                return Err(bad(format!("row {r} has {} cells, expected {cols}", line.chars().count())));
            }
            for (c, ch) in line.chars().enumerate() {
                let cell = (r, c);
                layout.walls.push(ch == '#');
                let slot = match ch {
                    '#' | '.' => None,
                    'S' => Some(&mut layout.start),
                    'G' => Some(&mut layout.goal),
                    'K' => Some(&mut layout.key),
                    'N' => {
                        layout.noisy.push(cell);
                        None
                    }
                    other => return Err(bad(format!("unknown cell {other:?} at row {r}, column {c}"))),
                };
                if let Some(slot) = slot {
                    if slot.replace(cell).is_some() {
                        return Err(bad(format!("marker {ch:?} appears more than once")));
                    }
                }
            }
        }
        Ok(layout)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::parse(&text)
    }

    /// Layout shipped with the crate, by file stem.
    pub fn builtin(name: &str) -> Result<Self> {
        let text = match name {
            "serpentine" => include_str!("../../layouts/serpentine.txt"),
            "four_rooms" => include_str!("../../layouts/four_rooms.txt"),
            "five_rooms" => include_str!("../../layouts/five_rooms.txt"),
            "key_grid" => include_str!("../../layouts/key_grid.txt"),
            "umaze" => include_str!("../../layouts/umaze.txt"),
            "medium_maze" => include_str!("../../layouts/medium_maze.txt"),
            "large_maze" => include_str!("../../layouts/large_maze.txt"),
            other => return Err(Error::Config(format!("no built-in layout named {other:?}"))),
        };
        Self::parse(text)
    }

    /// A built-in name or a path to a layout file.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        let path = Path::new(name_or_path);
        if path.extension().is_some() || path.components().count() > 1 {
            Self::load(path)
        } else {
            Self::builtin(name_or_path)
        }
    }

    pub fn is_wall(&self, (r, c): Cell) -> bool {
        self.walls[r * self.cols + c]
    }

    pub fn in_bounds(&self, r: isize, c: isize) -> bool {
        r >= 0 && c >= 0 && (r as usize) < self.rows && (c as usize) < self.cols
    }

    /// Open cells in row-major order.
    pub fn open_cells(&self) -> Vec<Cell> {
        (0..self.rows)
            .flat_map(|r| (0..self.cols).map(move |c| (r, c)))
            .filter(|&cell| !self.is_wall(cell))
            .collect()
    }

    /// Open 4-neighbours in the order left, right, up, down.
    pub fn open_neighbours(&self, (r, c): Cell) -> Vec<Cell> {
        [(0isize, -1isize), (0, 1), (-1, 0), (1, 0)]
            .iter()
            .filter_map(|&(dr, dc)| {
                let (nr, nc) = (r as isize + dr, c as isize + dc);
                (self.in_bounds(nr, nc) && !self.is_wall((nr as usize, nc as usize)))
                    .then_some((nr as usize, nc as usize))
            })
            .collect()
    }

    /// Breadth-first distances from `from` to every cell (`None` when unreachable).
    pub fn bfs(&self, from: Cell) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.rows * self.cols];
        let mut queue = std::collections::VecDeque::new();
        dist[from.0 * self.cols + from.1] = Some(0);
        queue.push_back(from);
        while let Some(cell) = queue.pop_front() {
            let d = dist[cell.0 * self.cols + cell.1].unwrap_or(0);
            for n in self.open_neighbours(cell) {
                let slot = &mut dist[n.0 * self.cols + n.1];
                if slot.is_none() {
                    *slot = Some(d + 1);
                    queue.push_back(n);
                }
            }
        }
        dist
    }

    pub fn distance(&self, from: Cell, to: Cell) -> Option<usize> {
        self.bfs(from)[to.0 * self.cols + to.1]
    }
}

fn bad(detail: impl Into<String>) -> Error {
    Error::Format { what: "layout".into(), detail: detail.into() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_layouts_parse() {
        for name in ["serpentine", "four_rooms", "five_rooms", "key_grid", "umaze", "medium_maze", "large_maze"] {
            let l = Layout::builtin(name).unwrap();
            let (s, g) = (l.start.unwrap(), l.goal.unwrap());
            assert!(l.distance(s, g).is_some(), "{name}");
        }
    }

    #[test]
    fn serpentine_path_length() {
        let l = Layout::builtin("serpentine").unwrap();
        assert_eq!(l.open_cells().len(), 49);
        assert_eq!(l.distance(l.start.unwrap(), l.goal.unwrap()), Some(42));
    }

    #[test]
    fn rejects_ragged_rows_and_unknown_cells() {
        assert!(Layout::parse("..\n...").is_err());
        assert!(Layout::parse("..x").is_err());
        assert!(Layout::parse("S.S").is_err());
    }
}
