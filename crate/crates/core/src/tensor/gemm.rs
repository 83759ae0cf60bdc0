//! Dense kernels shared by matmul and convolution.

/// `c[m, n] += op(a)[m, k] * op(b)[k, n]` on row-major buffers, where
/// `op` transposes when the flag is set (the buffer then holds `[k, m]` or
/// `[n, k]`).
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm_acc(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    c: &mut [f64],
) {
    assert_eq!(a.len(), m * k, "gemm: a has {} values for {m}x{k}", a.len());
    assert_eq!(b.len(), k * n, "gemm: b has {} values for {k}x{n}", b.len());
    assert_eq!(c.len(), m * n, "gemm: c has {} values for {m}x{n}", c.len());
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    let (rsa, csa) = if a_t {
        (1, m as isize)
    } else {
        (k as isize, 1)
    };
    let (rsb, csb) = if b_t {
        (1, k as isize)
    } else {
        (n as isize, 1)
    };
    // SAFETY: the asserts above bound every index the strides can reach.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            1.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Geometry of a stride-1 convolution over one image.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub h: usize,
    pub w: usize,
    pub cin: usize,
    pub k: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    /// Width of one patch row, `k * k * cin`.
    pub fn patch(&self) -> usize {
        self.k * self.k * self.cin
    }

    /// Unfolds `image` into `[oh * ow, k * k * cin]` patch rows appended to
    /// `cols`; taps in the padding read zero.
    pub fn im2col(&self, image: &[f64], cols: &mut Vec<f64>) {
        let c = self.cin;
        for oy in 0..self.oh {
            for ox in 0..self.ow {
                for ky in 0..self.k {
                    let iy = (oy + ky) as isize - self.pad as isize;
                    for kx in 0..self.k {
                        let ix = (ox + kx) as isize - self.pad as isize;
                        if iy < 0 || ix < 0 || iy as usize >= self.h || ix as usize >= self.w {
                            cols.extend(std::iter::repeat_n(0.0, c));
                        } else {
                            let base = (iy as usize * self.w + ix as usize) * c;
                            cols.extend_from_slice(&image[base..base + c]);
                        }
                    }
                }
            }
        }
    }

    /// Adds patch-row gradients back onto the image they came from.
    pub fn col2im(&self, cols: &[f64], image: &mut [f64]) {
        let c = self.cin;
        let mut r = 0;
        for oy in 0..self.oh {
            for ox in 0..self.ow {
                for ky in 0..self.k {
                    let iy = (oy + ky) as isize - self.pad as isize;
                    for kx in 0..self.k {
                        let ix = (ox + kx) as isize - self.pad as isize;
                        if iy >= 0 && ix >= 0 && (iy as usize) < self.h && (ix as usize) < self.w {
                            let base = (iy as usize * self.w + ix as usize) * c;
                            for (d, s) in image[base..base + c].iter_mut().zip(&cols[r..r + c]) {
                                *d += s;
                            }
                        }
                        r += c;
                    }
                }
            }
        }
    }
}

/// Images per im2col chunk, keeping the unfolded buffer near 4M values.
pub(crate) fn chunk_images(g: &ConvGeom) -> usize {
    let per = (g.oh * g.ow * g.patch()).max(1);
    (4_000_000 / per).max(1)
}
