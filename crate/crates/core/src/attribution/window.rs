use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use super::AttributionError;

/// Inclusive rectangle `(r0, c0)..=(r1, c1)` on an input's 2-D grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub r0: usize,
    pub c0: usize,
    pub r1: usize,
    pub c1: usize,
}

impl Rect {
    pub fn new(r0: usize, c0: usize, r1: usize, c1: usize) -> Option<Self> {
        (r0 <= r1 && c0 <= c1).then_some(Self { r0, c0, r1, c1 })
    }
}

/// Rows, columns and channel count of an input viewed as a grid.
/// `[d]` is a single row, `[h, w]` one channel, `[c, h, w]` channel-first.
pub fn grid_dims(shape: &[usize]) -> Option<(usize, usize, usize)> {
    match *shape {
        [d] => Some((1, 1, d)),
        [h, w] => Some((1, h, w)),
        [c, h, w] => Some((c, h, w)),
        _ => None,
    }
}

/// Sorted, duplicate-free set of flat feature indices.
///
/// Equality and hashing consider only the indices; the rectangle a window
/// was built from is kept for display.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Window {
    indices: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rect: Option<Rect>,
}

impl PartialEq for Window {
    fn eq(&self, other: &Self) -> bool {
        self.indices == other.indices
    }
}

impl Eq for Window {}

impl Hash for Window {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.indices.hash(state);
    }
}

impl Window {
    /// Window over `indices` for an input of `len` features.
    pub fn new(mut indices: Vec<usize>, len: usize) -> Result<Self, AttributionError> {
        indices.sort_unstable();
        indices.dedup();
        if let Some(&index) = indices.iter().find(|&&i| i >= len) {
            return Err(AttributionError::IndexOutOfRange { index, len });
        }
        Ok(Self {
            indices,
            rect: None,
        })
    }

    pub fn full(len: usize) -> Self {
        Self {
            indices: (0..len).collect(),
            rect: None,
        }
    }

    pub fn empty() -> Self {
        Self {
            indices: Vec::new(),
            rect: None,
        }
    }

    /// All features inside `rect` (every channel) of an input with `shape`.
    pub fn from_rect(shape: &[usize], rect: Rect) -> Result<Self, AttributionError> {
        let (channels, rows, cols) =
            grid_dims(shape).ok_or_else(|| AttributionError::NotSpatial(shape.to_vec()))?;
        if rect.r1 >= rows || rect.c1 >= cols {
            return Err(AttributionError::RectOutOfBounds {
                rect,
                rows,
                cols,
            });
        }
        let mut indices = Vec::new();
        for ch in 0..channels {
            for r in rect.r0..=rect.r1 {
                for c in rect.c0..=rect.c1 {
                    indices.push((ch * rows + r) * cols + c);
                }
            }
        }
        Ok(Self {
            indices,
            rect: Some(rect),
        })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn rect(&self) -> Option<Rect> {
        self.rect
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.indices.binary_search(&index).is_ok()
    }

    pub fn is_full(&self, len: usize) -> bool {
        self.indices.len() == len && self.indices.last().is_none_or(|&i| i + 1 == len)
    }

    pub fn intersect(&self, other: &Window) -> Window {
        let indices = self
            .indices
            .iter()
            .copied()
            .filter(|&i| other.contains(i))
            .collect();
        Window {
            indices,
            rect: None,
        }
    }

    pub fn complement(&self, len: usize) -> Window {
        Window {
            indices: (0..len).filter(|&i| !self.contains(i)).collect(),
            rect: None,
        }
    }

    /// Errors if any index is outside an input of `len` features.
    pub fn check_len(&self, len: usize) -> Result<(), AttributionError> {
        match self.indices.last() {
            Some(&index) if index >= len => Err(AttributionError::IndexOutOfRange { index, len }),
            _ => Ok(()),
        }
    }
}

/// Unresolved window: a rectangle on the grid or explicit flat indices.
/// Resolved against an input shape when used.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowSpec {
    Rect(Rect),
    Indices(Vec<usize>),
}

impl WindowSpec {
    pub fn resolve(&self, shape: &[usize]) -> Result<Window, AttributionError> {
        match self {
            WindowSpec::Rect(rect) => Window::from_rect(shape, *rect),
            WindowSpec::Indices(indices) => Window::new(indices.clone(), shape.iter().product()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_sorts_and_dedups() {
        let w = Window::new(vec![3, 1, 3, 0], 4).unwrap();
        assert_eq!(w.indices(), &[0, 1, 3]);
        assert!(Window::new(vec![4], 4).is_err());
    }

    #[test]
    fn rect_covers_every_channel() {
        let w = Window::from_rect(&[2, 3, 3], Rect::new(1, 1, 2, 1).unwrap()).unwrap();
        assert_eq!(w.indices(), &[4, 7, 13, 16]);
        assert!(Window::from_rect(&[3, 3], Rect::new(0, 0, 3, 0).unwrap()).is_err());
        assert!(Window::from_rect(&[2, 2, 2, 2], Rect::new(0, 0, 0, 0).unwrap()).is_err());
    }

    #[test]
    fn set_operations() {
        let a = Window::new(vec![0, 1, 2], 5).unwrap();
        let b = Window::new(vec![1, 2, 4], 5).unwrap();
        assert_eq!(a.intersect(&b).indices(), &[1, 2]);
        assert_eq!(a.complement(5).indices(), &[3, 4]);
        assert!(Window::full(5).is_full(5));
        assert!(!a.is_full(5));
        assert!(Window::empty().is_full(0));
    }

    #[test]
    fn equality_ignores_rect_provenance() {
        let from_rect = Window::from_rect(&[2, 2], Rect::new(0, 0, 0, 1).unwrap()).unwrap();
        let plain = Window::new(vec![0, 1], 4).unwrap();
        assert_eq!(from_rect, plain);
    }
}
