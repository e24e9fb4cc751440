//! Strided matrix products over row-major slices, with a per-thread
//! multiply-add counter used to check flop accounting.

use std::cell::Cell;

use super::Real;

thread_local! {
    static MULTIPLY_ADDS: Cell<u64> = const { Cell::new(0) };
}

/// Multiply-add counter for the current thread.
pub mod flops {
    use super::MULTIPLY_ADDS;

    pub fn reset() {
        MULTIPLY_ADDS.with(|c| c.set(0));
    }

    pub fn read() -> u64 {
        MULTIPLY_ADDS.with(|c| c.get())
    }

    pub(crate) fn add(n: u64) {
        MULTIPLY_ADDS.with(|c| c.set(c.get().wrapping_add(n)));
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Trans {
    No,
    Yes,
}

impl Trans {
    fn strides(self, ld: usize) -> (isize, isize) {
        match self {
            Trans::No => (ld as isize, 1),
            Trans::Yes => (1, ld as isize),
        }
    }
}

fn check_extent(name: &str, len: usize, rows: usize, cols: usize, rs: isize, cs: isize) {
    if rows == 0 || cols == 0 {
        return;
    }
    let last = (rows - 1) * rs as usize + (cols - 1) * cs as usize;
    assert!(
        last < len,
        "gemm operand {name}: {rows}x{cols} view overruns slice of length {len}"
    );
}

/// `C = alpha * op(A) * op(B) + beta * C` where `op(A)` is `m x k`, `op(B)`
/// is `k x n` and `C` is `m x n`. Leading dimensions are row strides of the
/// stored (untransposed) row-major arrays.
#[allow(clippy::too_many_arguments)]
pub fn gemm<T: Real>(
    ta: Trans,
    tb: Trans,
    m: usize,
    n: usize,
    k: usize,
    alpha: T,
    a: &[T],
    lda: usize,
    b: &[T],
    ldb: usize,
    beta: T,
    c: &mut [T],
    ldc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = ta.strides(lda);
    let (rsb, csb) = tb.strides(ldb);
    check_extent("A", a.len(), m, k, rsa, csa);
    check_extent("B", b.len(), k, n, rsb, csb);
    check_extent("C", c.len(), m, n, ldc as isize, 1);
    flops::add((m * n * k) as u64);
    // SAFETY: every strided access was bounds-checked above.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            ldc as isize,
            1,
        );
    }
}

#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let xa = &a[c * 8..c * 8 + 8];
        let xb = &b[c * 8..c * 8 + 8];
        for l in 0..8 {
            acc[l] += xa[l] * xb[l];
        }
    }
    let mut tail = T::zero();
    for i in chunks * 8..a.len() {
        tail += a[i] * b[i];
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `y += W x` for a row-major `rows x cols` matrix.
pub fn matvec_acc<T: Real>(w: &[T], rows: usize, cols: usize, x: &[T], y: &mut [T]) {
    assert_eq!(w.len(), rows * cols);
    assert_eq!(x.len(), cols);
    assert_eq!(y.len(), rows);
    flops::add((rows * cols) as u64);
    for (yi, row) in y.iter_mut().zip(w.chunks_exact(cols)) {
        *yi += dot(row, x);
    }
}
