use std::collections::VecDeque;

use super::GeometryError;

/// Single-channel foreground/background grid, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

/// Pixel adjacency used for component labeling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum Connectivity {
    #[serde(rename = "4")]
    Four,
    #[default]
    #[serde(rename = "8")]
    Eight,
}

impl Connectivity {
    pub(crate) fn offsets(self) -> &'static [(isize, isize)] {
        const FOUR: [(isize, isize); 4] = [(1, 0), (0, 1), (-1, 0), (0, -1)];
        const EIGHT: [(isize, isize); 8] = [
            (1, 0),
            (1, 1),
            (0, 1),
            (-1, 1),
            (-1, 0),
            (-1, -1),
            (0, -1),
            (1, -1),
        ];
        match self {
            Connectivity::Four => &FOUR,
            Connectivity::Eight => &EIGHT,
        }
    }
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Result<Self, GeometryError> {
        if width == 0 || height == 0 {
            return Err(GeometryError::InvalidDimensions { width, height });
        }
        Ok(Self {
            width,
            height,
            bits: vec![false; width * height],
        })
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self, GeometryError> {
        if width == 0 || height == 0 || bits.len() != width * height {
            return Err(GeometryError::InvalidDimensions { width, height });
        }
        Ok(Self { width, height, bits })
    }

    /// Build a mask by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> bool,
    ) -> Result<Self, GeometryError> {
        let mut m = Self::new(width, height)?;
        for y in 0..height {
            for x in 0..width {
                m.bits[y * width + x] = f(x, y);
            }
        }
        Ok(m)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    /// Like [`get`](Self::get) but treats everything outside the grid as background.
    #[inline]
    pub fn get_signed(&self, x: isize, y: isize) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.bits[y as usize * self.width + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Label connected foreground components. Returns the per-pixel label
    /// (0 = background, components numbered from 1 in order of their first
    /// pixel in row-major scan) and the pixel count of each component.
    pub fn label_components(&self, connectivity: Connectivity) -> (Vec<u32>, Vec<usize>) {
        let (w, h) = (self.width, self.height);
        let mut labels = vec![0u32; w * h];
        let mut sizes = Vec::new();
        let mut queue = VecDeque::new();
        for start in 0..w * h {
            if !self.bits[start] || labels[start] != 0 {
                continue;
            }
            let label = sizes.len() as u32 + 1;
            let mut size = 0usize;
            labels[start] = label;
            queue.push_back(start);
            while let Some(idx) = queue.pop_front() {
                size += 1;
                let (x, y) = ((idx % w) as isize, (idx / w) as isize);
                for &(dx, dy) in connectivity.offsets() {
                    let (nx, ny) = (x + dx, y + dy);
                    if self.get_signed(nx, ny) {
                        let n = ny as usize * w + nx as usize;
                        if labels[n] == 0 {
                            labels[n] = label;
                            queue.push_back(n);
                        }
                    }
                }
            }
            sizes.push(size);
        }
        (labels, sizes)
    }

    pub fn component_count(&self, connectivity: Connectivity) -> usize {
        self.label_components(connectivity).1.len()
    }
}

/// Keep only the largest connected foreground component.
///
/// Ties go to the component whose first pixel in row-major order comes first.
pub fn largest_component(
    mask: &BinaryMask,
    connectivity: Connectivity,
) -> Result<BinaryMask, GeometryError> {
    let (labels, sizes) = mask.label_components(connectivity);
    if sizes.is_empty() {
        return Err(GeometryError::EmptyMask);
    }
    // Labels are assigned in scan order, so a strict comparison keeps the
    // earliest component among equal sizes.
    let mut best = 0usize;
    for (i, &s) in sizes.iter().enumerate() {
        if s > sizes[best] {
            best = i;
        }
    }
    let keep = best as u32 + 1;
    let bits = labels.iter().map(|&l| l == keep).collect();
    BinaryMask::from_bits(mask.width, mask.height, bits)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect(m: &mut BinaryMask, x0: usize, y0: usize, w: usize, h: usize) {
        for y in y0..y0 + h {
            for x in x0..x0 + w {
                m.set(x, y, true);
            }
        }
    }

    /// Independent flood-fill oracle: recursive DFS over explicit stack,
    /// returns components as sorted pixel-index lists.
    fn components_oracle(m: &BinaryMask) -> Vec<Vec<usize>> {
        let (w, h) = (m.width(), m.height());
        let mut seen = vec![false; w * h];
        let mut out = Vec::new();
        for s in 0..w * h {
            if !m.bits()[s] || seen[s] {
                continue;
            }
            let mut comp = Vec::new();
            let mut stack = vec![s];
            seen[s] = true;
            while let Some(i) = stack.pop() {
                comp.push(i);
                let (x, y) = (i % w, i / w);
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                        if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                            continue;
                        }
                        let n = ny as usize * w + nx as usize;
                        if m.bits()[n] && !seen[n] {
                            seen[n] = true;
                            stack.push(n);
                        }
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    #[test]
    fn single_square_is_unchanged() {
        let mut m = BinaryMask::new(20, 20).unwrap();
        rect(&mut m, 5, 5, 10, 10);
        assert_eq!(largest_component(&m, Connectivity::Eight).unwrap(), m);
    }

    #[test]
    fn larger_component_wins() {
        let mut m = BinaryMask::new(40, 20).unwrap();
        rect(&mut m, 2, 2, 10, 10);
        rect(&mut m, 20, 2, 4, 5);
        let out = largest_component(&m, Connectivity::Eight).unwrap();
        assert_eq!(out.count(), 100);
        assert!(!out.get(21, 3));
    }

    #[test]
    fn equal_blobs_pick_smallest_first_index() {
        // Two 50-px blobs. The right one starts on an earlier row, so it has
        // the smaller minimal row-major index.
        let mut m = BinaryMask::new(40, 30).unwrap();
        rect(&mut m, 2, 10, 10, 5);
        rect(&mut m, 25, 3, 5, 10);
        let comps = components_oracle(&m);
        assert_eq!(comps.len(), 2);
        assert_eq!(comps[0].len(), 50);
        assert_eq!(comps[1].len(), 50);
        let winner = comps.iter().min_by_key(|c| c[0]).unwrap();
        let out = largest_component(&m, Connectivity::Eight).unwrap();
        let got: Vec<usize> = (0..m.bits().len()).filter(|&i| out.bits()[i]).collect();
        assert_eq!(&got, winner);
        assert!(out.get(25, 3));
    }

    #[test]
    fn diagonal_contact_depends_on_connectivity() {
        let mut m = BinaryMask::new(4, 4).unwrap();
        m.set(0, 0, true);
        m.set(1, 1, true);
        assert_eq!(m.component_count(Connectivity::Eight), 1);
        assert_eq!(m.component_count(Connectivity::Four), 2);
    }

    #[test]
    fn empty_mask_errors() {
        let m = BinaryMask::new(5, 5).unwrap();
        assert!(matches!(
            largest_component(&m, Connectivity::Eight),
            Err(GeometryError::EmptyMask)
        ));
    }

    #[test]
    fn zero_dimensions_rejected() {
        assert!(BinaryMask::new(0, 3).is_err());
        assert!(BinaryMask::from_bits(2, 2, vec![true; 3]).is_err());
    }
}
