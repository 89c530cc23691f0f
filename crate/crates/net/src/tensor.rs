use std::fmt::Debug;

use num_traits::Float;

use crate::{NetError, Result};

/// Floating-point type the network can run in.
pub trait Real: Float + Debug + Default + Send + Sync + 'static {
    /// `c += a * b` on strided row/column views.
    ///
    /// # Safety
    /// Every addressed element must lie inside its allocation and `c` must
    /// not overlap `a` or `b`.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_acc(
        m: usize,
        k: usize,
        n: usize,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    fn of(x: f64) -> Self {
        Self::from(x).expect("representable")
    }

    fn f64(self) -> f64 {
        self.to_f64().expect("representable")
    }
}

impl Real for f32 {
    unsafe fn gemm_acc(
        m: usize,
        k: usize,
        n: usize,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, 1.0, a, rsa, csa, b, rsb, csb, 1.0, c, rsc, csc);
    }
}

impl Real for f64 {
    unsafe fn gemm_acc(
        m: usize,
        k: usize,
        n: usize,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, 1.0, a, rsa, csa, b, rsb, csb, 1.0, c, rsc, csc);
    }
}

/// A matrix view into a flat buffer: offset, row stride, column stride.
#[derive(Debug, Clone, Copy)]
pub(crate) struct View {
    pub off: usize,
    pub rs: usize,
    pub cs: usize,
}

impl View {
    pub fn new(off: usize, rs: usize, cs: usize) -> Self {
        View { off, rs, cs }
    }

    fn fits(&self, len: usize, rows: usize, cols: usize) -> bool {
        rows == 0 || cols == 0 || self.off + (rows - 1) * self.rs + (cols - 1) * self.cs < len
    }
}

/// Bounds-checked `c (m x n) += a (m x k) * b (k x n)`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm<T: Real>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    av: View,
    b: &[T],
    bv: View,
    c: &mut [T],
    cv: View,
) {
    assert!(av.fits(a.len(), m, k) && bv.fits(b.len(), k, n) && cv.fits(c.len(), m, n));
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    // SAFETY: the views were checked against the slice lengths above, and the
    // borrow of `c` is exclusive.
    unsafe {
        T::gemm_acc(
            m,
            k,
            n,
            a.as_ptr().add(av.off),
            av.rs as isize,
            av.cs as isize,
            b.as_ptr().add(bv.off),
            bv.rs as isize,
            bv.cs as isize,
            c.as_mut_ptr().add(cv.off),
            cv.rs as isize,
            cv.cs as isize,
        );
    }
}

/// Multi-channel volume, channel-major then x-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4<T> {
    channels: usize,
    dims: [usize; 3],
    values: Vec<T>,
}

impl<T: Real> Tensor4<T> {
    pub fn new(channels: usize, dims: [usize; 3], values: Vec<T>) -> Result<Self> {
        let voxels: usize = dims.iter().product();
        if channels == 0 || voxels == 0 {
            return Err(NetError::Shape {
                what: "tensor",
                expected: "at least one channel and voxel".into(),
                found: format!("{channels} x {dims:?}"),
            });
        }
        if values.len() != channels * voxels {
            return Err(NetError::Shape {
                what: "tensor values",
                expected: format!("{}", channels * voxels),
                found: format!("{}", values.len()),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(NetError::Shape {
                what: "tensor values",
                expected: "finite values".into(),
                found: "a non-finite value".into(),
            });
        }
        Ok(Tensor4 { channels, dims, values })
    }

    pub fn zeros(channels: usize, dims: [usize; 3]) -> Self {
        let n = channels * dims.iter().product::<usize>();
        Tensor4 { channels, dims, values: vec![T::zero(); n] }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn voxels(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn channel(&self, c: usize) -> &[T] {
        let n = self.voxels();
        &self.values[c * n..(c + 1) * n]
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn cast<U: Real>(&self) -> Tensor4<U> {
        Tensor4 {
            channels: self.channels,
            dims: self.dims,
            values: self.values.iter().map(|v| U::of(v.f64())).collect(),
        }
    }

    pub(crate) fn shape(&self) -> String {
        format!("{} x {:?}", self.channels, self.dims)
    }
}

/// Interior dims plus a one-voxel zero border on every side. Shifting a
/// whole channel by a fixed flat offset then reads the zero padding exactly
/// where "same" convolution needs it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Grid {
    pub dims: [usize; 3],
    pub padded: [usize; 3],
    pub len: usize,
}

impl Grid {
    pub fn new(dims: [usize; 3]) -> Self {
        let padded = [dims[0] + 2, dims[1] + 2, dims[2] + 2];
        Grid { dims, padded, len: padded.iter().product() }
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i + 1) + self.padded[0] * ((j + 1) + self.padded[1] * (k + 1))
    }

    /// First and one-past-last flat positions spanning the interior.
    pub fn span(&self) -> (usize, usize) {
        let [nx, ny, nz] = self.dims;
        (self.index(0, 0, 0), self.index(nx - 1, ny - 1, nz - 1) + 1)
    }

    /// Flat offset of the neighbour at `(dx, dy, dz)`, each in -1..=1.
    pub fn shift(&self, d: [isize; 3]) -> isize {
        let [px, py, _] = self.padded;
        d[0] + px as isize * (d[1] + py as isize * d[2])
    }

    pub fn half(&self) -> Grid {
        Grid::new([self.dims[0] / 2, self.dims[1] / 2, self.dims[2] / 2])
    }

    pub fn double(&self) -> Grid {
        Grid::new([self.dims[0] * 2, self.dims[1] * 2, self.dims[2] * 2])
    }

    /// Zeroes the border of every channel.
    pub fn zero_border<T: Real>(&self, data: &mut [T]) {
        let [px, py, pz] = self.padded;
        for channel in data.chunks_mut(self.len) {
            for k in 0..pz {
                for j in 0..py {
                    let row = &mut channel[px * (j + py * k)..px * (j + 1 + py * k)];
                    if k == 0 || k + 1 == pz || j == 0 || j + 1 == py {
                        row.fill(T::zero());
                    } else {
                        row[0] = T::zero();
                        row[px - 1] = T::zero();
                    }
                }
            }
        }
    }

    /// Calls `f(padded_index, interior_index)` for every interior voxel.
    pub fn for_each_interior(&self, mut f: impl FnMut(usize, usize)) {
        let [nx, ny, nz] = self.dims;
        let mut n = 0;
        for k in 0..nz {
            for j in 0..ny {
                let row = self.index(0, j, k);
                for i in 0..nx {
                    f(row + i, n);
                    n += 1;
                }
            }
        }
    }
}

/// Activations in the padded layout.
#[derive(Debug, Clone)]
pub(crate) struct Padded<T> {
    pub channels: usize,
    pub grid: Grid,
    pub data: Vec<T>,
}

impl<T: Real> Padded<T> {
    pub fn zeros(channels: usize, grid: Grid) -> Self {
        Padded { channels, grid, data: vec![T::zero(); channels * grid.len] }
    }

    pub fn from_tensor(t: &Tensor4<T>) -> Self {
        let grid = Grid::new(t.dims());
        let mut p = Padded::zeros(t.channels(), grid);
        let n = t.voxels();
        for c in 0..t.channels() {
            let src = &t.values()[c * n..(c + 1) * n];
            let dst = &mut p.data[c * grid.len..(c + 1) * grid.len];
            grid.for_each_interior(|pi, ii| dst[pi] = src[ii]);
        }
        p
    }

    pub fn to_tensor(&self) -> Tensor4<T> {
        let n: usize = self.grid.dims.iter().product();
        let mut values = vec![T::zero(); self.channels * n];
        for c in 0..self.channels {
            let src = &self.data[c * self.grid.len..(c + 1) * self.grid.len];
            let dst = &mut values[c * n..(c + 1) * n];
            self.grid.for_each_interior(|pi, ii| dst[ii] = src[pi]);
        }
        Tensor4 { channels: self.channels, dims: self.grid.dims, values }
    }

    pub fn channel(&self, c: usize) -> &[T] {
        &self.data[c * self.grid.len..(c + 1) * self.grid.len]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [T] {
        &mut self.data[c * self.grid.len..(c + 1) * self.grid.len]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn padded_round_trip() {
        let values: Vec<f64> = (0..2 * 3 * 4 * 5).map(|v| v as f64).collect();
        let t = Tensor4::new(2, [3, 4, 5], values).unwrap();
        let p = Padded::from_tensor(&t);
        assert_eq!(p.data.len(), 2 * 5 * 6 * 7);
        assert_eq!(p.data.iter().filter(|v| **v != 0.0).count(), 2 * 60 - 1);
        assert_eq!(p.to_tensor(), t);
    }

    #[test]
    fn shifts_address_neighbours() {
        let g = Grid::new([4, 5, 6]);
        let c = g.index(2, 2, 2);
        assert_eq!((c as isize + g.shift([1, 0, 0])) as usize, g.index(3, 2, 2));
        assert_eq!((c as isize + g.shift([0, -1, 0])) as usize, g.index(2, 1, 2));
        assert_eq!((c as isize + g.shift([-1, 1, 1])) as usize, g.index(1, 3, 3));
        let (lo, hi) = g.span();
        assert!(lo as isize + g.shift([-1, -1, -1]) == 0);
        assert!(hi as isize - 1 + g.shift([1, 1, 1]) == g.len as isize - 1);
    }

    #[test]
    fn gemm_matches_loops() {
        let a: Vec<f64> = (0..6).map(|v| v as f64).collect(); // 2 x 3
        let b: Vec<f64> = (0..12).map(|v| (v as f64) * 0.5).collect(); // 3 x 4
        let mut c = vec![1.0; 8];
        gemm(2, 3, 4, &a, View::new(0, 3, 1), &b, View::new(0, 4, 1), &mut c, View::new(0, 4, 1));
        for r in 0..2 {
            for col in 0..4 {
                let want = 1.0 + (0..3).map(|t| a[r * 3 + t] * b[t * 4 + col]).sum::<f64>();
                assert_eq!(c[r * 4 + col], want);
            }
        }
    }

    #[test]
    #[should_panic]
    fn gemm_checks_bounds() {
        let a = vec![0.0f32; 5];
        let mut c = vec![0.0f32; 4];
        gemm(2, 3, 2, &a, View::new(0, 3, 1), &a, View::new(0, 2, 1), &mut c, View::new(0, 2, 1));
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(Tensor4::<f32>::new(1, [2, 2, 2], vec![0.0; 7]).is_err());
        assert!(Tensor4::<f32>::new(0, [2, 2, 2], vec![]).is_err());
        assert!(Tensor4::new(1, [1, 1, 1], vec![f32::NAN]).is_err());
    }
}
