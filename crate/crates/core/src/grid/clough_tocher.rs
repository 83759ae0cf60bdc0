//! Clough–Tocher cubic patches on a triangle split at its centroid.
//!
//! Each sub-triangle `(P_i, P_j, C)` carries a cubic Bézier net `b_abc`
//! (`a + b + c = 3`, weights on `P_i`, `P_j`, `C`). Vertex-adjacent points come
//! from the tangent plane at each vertex; the edge point `b111` makes the
//! derivative across `P_i P_j` linear along the edge, so neighbouring macro
//! triangles that share the edge data join with C¹ continuity.

type P = (f64, f64);

fn sub(a: P, b: P) -> P {
    (a.0 - b.0, a.1 - b.1)
}

fn dot(a: P, b: P) -> f64 {
    a.0 * b.0 + a.1 * b.1
}

/// Gradient at `center` fitted to neighbouring samples by least squares with
/// weights `1 / d^2`. Returns `None` if the neighbours span fewer than two
/// directions.
pub fn least_squares_gradient(center: P, f0: f64, neighbors: &[(P, f64)]) -> Option<P> {
    let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(p, f) in neighbors {
        let d = sub(p, center);
        let w = 1.0 / dot(d, d);
        let df = f - f0;
        a11 += w * d.0 * d.0;
        a12 += w * d.0 * d.1;
        a22 += w * d.1 * d.1;
        b1 += w * d.0 * df;
        b2 += w * d.1 * df;
    }
    let det = a11 * a22 - a12 * a12;
    if det.abs() <= 1e-12 * (a11 * a22).max(f64::MIN_POSITIVE) {
        return None;
    }
    Some(((a22 * b1 - a12 * b2) / det, (a11 * b2 - a12 * b1) / det))
}

/// Value of the Clough–Tocher interpolant over triangle `p` with vertex
/// values `f` and gradients `g`, at barycentric coordinates `lambda`.
pub fn clough_tocher_eval(p: [P; 3], f: [f64; 3], g: [P; 3], lambda: [f64; 3]) -> f64 {
    let c = (
        (p[0].0 + p[1].0 + p[2].0) / 3.0,
        (p[0].1 + p[1].1 + p[2].1) / 3.0,
    );
    let along = |i: usize, j: usize| f[i] + dot(g[i], sub(p[j], p[i])) / 3.0;
    // spoke points one third of the way from each vertex to the centroid
    let a: [f64; 3] = std::array::from_fn(|i| f[i] + dot(g[i], sub(c, p[i])) / 3.0);

    // edge point for the sub-triangle on edge (i, j)
    let edge = |i: usize, j: usize| {
        let (b300, b030) = (f[i], f[j]);
        let (b210, b120) = (along(i, j), along(j, i));
        let e = sub(p[j], p[i]);
        let s = dot(sub(c, p[i]), e) / dot(e, e);
        0.5 * (a[i] + a[j])
            - 0.5 * ((1.0 - s) * (b300 + b120 - 2.0 * b210) + s * (b210 + b030 - 2.0 * b120))
    };
    let e01 = edge(0, 1);
    let e12 = edge(1, 2);
    let e20 = edge(2, 0);
    let e_of = |i: usize, j: usize| match (i, j) {
        (0, 1) | (1, 0) => e01,
        (1, 2) | (2, 1) => e12,
        _ => e20,
    };
    // interior spoke points and the centre, from C¹ across the spokes
    let ci: [f64; 3] =
        std::array::from_fn(|i| (a[i] + e_of(i, (i + 1) % 3) + e_of(i, (i + 2) % 3)) / 3.0);
    let center = (ci[0] + ci[1] + ci[2]) / 3.0;

    // sub-triangle opposite the vertex with the smallest weight
    let k = (0..3)
        .min_by(|&x, &y| lambda[x].total_cmp(&lambda[y]))
        .expect("three weights");
    let (i, j) = ((k + 1) % 3, (k + 2) % 3);
    let (u, v, w) = (
        lambda[i] - lambda[k],
        lambda[j] - lambda[k],
        3.0 * lambda[k],
    );

    let b300 = f[i];
    let b030 = f[j];
    let b003 = center;
    let b210 = along(i, j);
    let b120 = along(j, i);
    let b201 = a[i];
    let b021 = a[j];
    let b102 = ci[i];
    let b012 = ci[j];
    let b111 = e_of(i, j);

    b300 * u * u * u
        + b030 * v * v * v
        + b003 * w * w * w
        + 3.0
            * (b210 * u * u * v
                + b120 * u * v * v
                + b201 * u * u * w
                + b021 * v * v * w
                + b102 * u * w * w
                + b012 * v * w * w)
        + 6.0 * b111 * u * v * w
}

/// Barycentric coordinates of `q` in triangle `p`.
pub(crate) fn barycentric(p: [P; 3], q: P) -> [f64; 3] {
    let d = (p[1].0 - p[0].0) * (p[2].1 - p[0].1) - (p[2].0 - p[0].0) * (p[1].1 - p[0].1);
    let l1 = ((q.0 - p[0].0) * (p[2].1 - p[0].1) - (p[2].0 - p[0].0) * (q.1 - p[0].1)) / d;
    let l2 = ((p[1].0 - p[0].0) * (q.1 - p[0].1) - (q.0 - p[0].0) * (p[1].1 - p[0].1)) / d;
    [1.0 - l1 - l2, l1, l2]
}

#[cfg(test)]
mod tests {
    use super::*;

    const TRI: [P; 3] = [(0.0, 0.0), (4.0, 0.5), (1.0, 3.0)];

    fn affine(q: P) -> f64 {
        2.0 * q.0 + 3.0 * q.1 + 1.0
    }

    #[test]
    fn reproduces_affine_fields() {
        let f = TRI.map(affine);
        let g = [(2.0, 3.0); 3];
        for l in [
            [0.2, 0.3, 0.5],
            [0.9, 0.05, 0.05],
            [1.0 / 3.0; 3],
            [0.0, 0.5, 0.5],
        ] {
            let q = (
                l[0] * TRI[0].0 + l[1] * TRI[1].0 + l[2] * TRI[2].0,
                l[0] * TRI[0].1 + l[1] * TRI[1].1 + l[2] * TRI[2].1,
            );
            assert!((clough_tocher_eval(TRI, f, g, l) - affine(q)).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_vertex_values() {
        let f = [1.5, -2.0, 7.0];
        let g = [(0.3, -1.0), (2.0, 0.1), (-0.5, 0.5)];
        for i in 0..3 {
            let mut l = [0.0; 3];
            l[i] = 1.0;
            assert_eq!(clough_tocher_eval(TRI, f, g, l), f[i]);
        }
    }

    #[test]
    fn barycentric_round_trip() {
        let l = barycentric(TRI, (1.5, 1.0));
        let q = (
            l[0] * TRI[0].0 + l[1] * TRI[1].0 + l[2] * TRI[2].0,
            l[0] * TRI[0].1 + l[1] * TRI[1].1 + l[2] * TRI[2].1,
        );
        assert!((q.0 - 1.5).abs() < 1e-14 && (q.1 - 1.0).abs() < 1e-14);
        assert!((l.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn gradient_fit_is_exact_on_planes() {
        let nb = [
            ((1.0, 0.0), 3.0 + 2.0),
            ((0.0, 2.0), 3.0 + 6.0),
            ((-1.0, -1.0), 3.0 - 5.0),
        ];
        let g = least_squares_gradient((0.0, 0.0), 3.0, &nb).unwrap();
        assert!((g.0 - 2.0).abs() < 1e-12 && (g.1 - 3.0).abs() < 1e-12);
        assert!(
            least_squares_gradient((0.0, 0.0), 0.0, &[((1.0, 1.0), 1.0), ((2.0, 2.0), 2.0)])
                .is_none()
        );
    }
}
