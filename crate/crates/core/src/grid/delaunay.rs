use spade::{DelaunayTriangulation, Point2, Triangulation};

use crate::error::{Error, Result};

/// Delaunay triangles of distinct points, as counter-clockwise index
/// triples sorted lexicographically. Returns an empty list when the points
/// are all collinear or fewer than three.
///
/// Points are inserted in the given order; callers wanting a result that does
/// not depend on input order should sort first, since co-circular point sets
/// have more than one valid triangulation.
pub fn triangulate(points: &[(f64, f64)]) -> Result<Vec<[usize; 3]>> {
    let mut dt: DelaunayTriangulation<Point2<f64>> = DelaunayTriangulation::new();
    for (i, &(x, y)) in points.iter().enumerate() {
        let h = dt.insert(Point2::new(x, y)).map_err(|e| {
            Error::contract(format!("cannot triangulate point {i} ({x}, {y}): {e:?}"))
        })?;
        if h.index() != i {
            return Err(Error::contract(format!(
                "point {i} duplicates an earlier point"
            )));
        }
    }
    let mut tris: Vec<[usize; 3]> = dt
        .inner_faces()
        .map(|f| {
            let [a, b, c] = f.vertices().map(|v| v.fix().index());
            // rotate so the smallest index leads, keeping orientation
            let m = a.min(b).min(c);
            if m == a {
                [a, b, c]
            } else if m == b {
                [b, c, a]
            } else {
                [c, a, b]
            }
        })
        .collect();
    tris.sort_unstable();
    Ok(tris)
}
