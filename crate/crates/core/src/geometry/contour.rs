use super::{BinaryMask, Connectivity, GeometryError};

/// Ordered boundary of a single foreground component.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Contour {
    pub points: Vec<[i32; 2]>,
    pub closed: bool,
}

// Neighbor directions ordered by increasing angle in the pixel frame
// (rotating +x toward +y): E, SE, S, SW, W, NW, N, NE.
const DIRS: [(i32, i32); 8] = [
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
];

fn dir_index(dx: i32, dy: i32) -> usize {
    DIRS.iter()
        .position(|&d| d == (dx, dy))
        .expect("neighbor offset")
}

impl Contour {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn to_f64(&self) -> Vec<[f64; 2]> {
        self.points
            .iter()
            .map(|p| [p[0] as f64, p[1] as f64])
            .collect()
    }

    /// Closed polyline length (axial steps 1, diagonal steps √2).
    pub fn perimeter(&self) -> f64 {
        let n = self.points.len();
        if n < 2 {
            return 0.0;
        }
        (0..n)
            .map(|i| {
                let a = self.points[i];
                let b = self.points[(i + 1) % n];
                (((a[0] - b[0]).pow(2) + (a[1] - b[1]).pow(2)) as f64).sqrt()
            })
            .sum()
    }

    /// Shoelace signed area; positive for the orientation produced by
    /// [`trace_contour`].
    pub fn signed_area(&self) -> f64 {
        let n = self.points.len();
        let mut s = 0i64;
        for i in 0..n {
            let a = self.points[i];
            let b = self.points[(i + 1) % n];
            s += a[0] as i64 * b[1] as i64 - b[0] as i64 * a[1] as i64;
        }
        s as f64 / 2.0
    }
}

/// Moore-neighbor trace of the outer border of a single 8-connected
/// component.
///
/// The result is closed and oriented with positive signed area in pixel
/// coordinates (counter-clockwise with the y axis taken as the second
/// coordinate axis; on a y-down display this reads clockwise). Every pixel
/// is foreground with at least one background 4-neighbor.
pub fn trace_contour(mask: &BinaryMask) -> Result<Contour, GeometryError> {
    let components = mask.component_count(Connectivity::Eight);
    match components {
        0 => return Err(GeometryError::EmptyMask),
        1 => {}
        n => return Err(GeometryError::MultipleComponents(n)),
    }
    let w = mask.width();
    let start_idx = mask.bits().iter().position(|&b| b).expect("non-empty");
    let start = [(start_idx % w) as i32, (start_idx / w) as i32];
    let fg = |p: [i32; 2]| mask.get_signed(p[0] as isize, p[1] as isize);

    let mut points = vec![start];
    let mut current = start;
    // The west neighbor of the first raster pixel is background.
    let mut back_dir = 4usize;
    let max_steps = 4 * mask.width() * mask.height() + 8;

    for _ in 0..max_steps {
        let mut next = None;
        for i in 1..=8 {
            let d = (back_dir + i) % 8;
            let cand = [current[0] + DIRS[d].0, current[1] + DIRS[d].1];
            if fg(cand) {
                let prev = (d + 7) % 8;
                let bg = [current[0] + DIRS[prev].0, current[1] + DIRS[prev].1];
                next = Some((cand, dir_index(bg[0] - cand[0], bg[1] - cand[1])));
                break;
            }
        }
        let Some((cand, new_back)) = next else {
            // Isolated pixel.
            return Ok(Contour { points, closed: true });
        };
        if current == start && points.len() >= 2 && cand == points[1] {
            points.pop();
            break;
        }
        points.push(cand);
        current = cand;
        back_dir = new_back;
    }

    let mut contour = Contour { points, closed: true };
    if contour.signed_area() < 0.0 {
        contour.points[1..].reverse();
    }
    Ok(contour)
}
