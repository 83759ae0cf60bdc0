use crate::error::{Error, Result};

/// Explicit finite-volume advection–diffusion on a `rows x cols` lattice with
/// zero-flux walls. Row index grows northward, column index eastward.
///
/// Advection is first-order upwind. With the step size inside
/// [`Transport::max_stable_dt`] every new value is a nonnegative combination
/// of old ones, so the field stays nonnegative, and because every interior
/// face flux leaves one cell and enters its neighbour, total mass changes
/// only through sources and decay.
#[derive(Debug, Clone)]
pub struct Transport {
    pub rows: usize,
    pub cols: usize,
    /// Cell width east–west, km.
    pub dx: f64,
    /// Cell height north–south, km.
    pub dy: f64,
}

impl Transport {
    pub fn new(rows: usize, cols: usize, dx: f64, dy: f64) -> Result<Self> {
        if rows == 0 || cols == 0 || !(dx > 0.0) || !(dy > 0.0) {
            return Err(Error::config(
                "transport grid needs positive extents and spacing",
            ));
        }
        Ok(Self { rows, cols, dx, dy })
    }

    /// Largest step (hours) that keeps the update sign-preserving and meets
    /// `D dt / dx^2 <= 0.25` on each axis.
    pub fn max_stable_dt(&self, u: f64, v: f64, diffusion: f64) -> f64 {
        let rate = u.abs() / self.dx
            + v.abs() / self.dy
            + 2.0 * diffusion / (self.dx * self.dx)
            + 2.0 * diffusion / (self.dy * self.dy);
        let diff_cap = 0.25 * self.dx.min(self.dy).powi(2) / diffusion.max(f64::MIN_POSITIVE);
        let adv = if rate > 0.0 {
            1.0 / rate
        } else {
            f64::INFINITY
        };
        adv.min(diff_cap)
    }

    /// Checks a requested step against the stability bound.
    pub fn check_dt(&self, dt: f64, u: f64, v: f64, diffusion: f64) -> Result<()> {
        for (axis, h) in [("x", self.dx), ("y", self.dy)] {
            let r = diffusion * dt / (h * h);
            if r > 0.25 + 1e-12 {
                return Err(Error::config(format!(
                    "diffusion stability bound violated on {axis}: D*dt/dx^2 = {r:.4} > 0.25"
                )));
            }
        }
        let max = self.max_stable_dt(u, v, diffusion);
        if dt > max * (1.0 + 1e-12) {
            return Err(Error::config(format!(
                "step {dt} h exceeds the sign-preserving limit {max:.4} h for wind ({u}, {v}) km/h"
            )));
        }
        Ok(())
    }

    /// Advances `c` by `dt` hours under uniform wind `(u, v)` km/h (east,
    /// north) and diffusion `diffusion` km²/h. `scratch` must match `c`.
    pub fn step(
        &self,
        c: &mut [f64],
        scratch: &mut [f64],
        u: f64,
        v: f64,
        diffusion: f64,
        dt: f64,
    ) {
        let (rows, cols) = (self.rows, self.cols);
        scratch.fill(0.0);
        // east-west faces: flux from (r, j) to (r, j + 1)
        let ax = dt / self.dx;
        let kx = diffusion / self.dx;
        for r in 0..rows {
            for j in 0..cols.saturating_sub(1) {
                let (a, b) = (c[r * cols + j], c[r * cols + j + 1]);
                let adv = if u >= 0.0 { u * a } else { u * b };
                let flux = (adv - kx * (b - a)) * ax;
                scratch[r * cols + j] -= flux;
                scratch[r * cols + j + 1] += flux;
            }
        }
        let ay = dt / self.dy;
        let ky = diffusion / self.dy;
        for r in 0..rows.saturating_sub(1) {
            for j in 0..cols {
                let (a, b) = (c[r * cols + j], c[(r + 1) * cols + j]);
                let adv = if v >= 0.0 { v * a } else { v * b };
                let flux = (adv - ky * (b - a)) * ay;
                scratch[r * cols + j] -= flux;
                scratch[(r + 1) * cols + j] += flux;
            }
        }
        for (x, d) in c.iter_mut().zip(scratch.iter()) {
            // rounding can leave -1e-300-ish residue on empty cells
            *x = (*x + d).max(0.0);
        }
    }
}
