//! Dense phase-one simplex: decides whether `A λ = b, λ ≥ 0`
//! has a solution. Generic over exact rationals and `f64`.

use num_rational::BigRational;
use num_traits::{Signed, Zero};

pub trait Scalar: Clone + std::fmt::Debug {
    fn zero() -> Self;
    fn one() -> Self;
    fn is_pos(&self) -> bool;
    fn is_neg(&self) -> bool;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn div(&self, o: &Self) -> Self;
    fn is_zero_ish(&self) -> bool {
        !self.is_pos() && !self.is_neg()
    }
}

impl Scalar for BigRational {
    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        num_traits::One::one()
    }
    fn is_pos(&self) -> bool {
        self.is_positive()
    }
    fn is_neg(&self) -> bool {
        self.is_negative()
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
}

/// Absolute tolerance used by the floating-point path.
pub const FLOAT_TOLERANCE: f64 = 1e-9;

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn is_pos(&self) -> bool {
        *self > FLOAT_TOLERANCE
    }
    fn is_neg(&self) -> bool {
        *self < -FLOAT_TOLERANCE
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
}

/// Returns a nonnegative `λ` with `A λ = b` when one exists.
///
/// `a` is row-major with `rows` rows and `cols` columns. Runs phase one of the
/// simplex method with one artificial variable per row.
pub fn feasible<T: Scalar>(a: &[Vec<T>], b: &[T]) -> Option<Vec<T>> {
    let rows = a.len();
    let cols = a.first().map_or(0, |r| r.len());
    let width = cols + rows + 1;
    let mut tab: Vec<Vec<T>> = Vec::with_capacity(rows + 1);
    for (i, row) in a.iter().enumerate() {
        let negate = b[i].is_neg();
        let mut t = Vec::with_capacity(width);
        for v in row {
            t.push(if negate { T::zero().sub(v) } else { v.clone() });
        }
        for j in 0..rows {
            t.push(if i == j { T::one() } else { T::zero() });
        }
        t.push(if negate {
            T::zero().sub(&b[i])
        } else {
            b[i].clone()
        });
        tab.push(t);
    }
    // Objective row: minimise the sum of artificials, expressed in reduced form.
    let mut obj = vec![T::zero(); width];
    for row in &tab {
        for (j, v) in row.iter().enumerate() {
            if j < cols || j == width - 1 {
                obj[j] = obj[j].add(v);
            }
        }
    }
    tab.push(obj);
    let mut basis: Vec<usize> = (cols..cols + rows).collect();
    // Largest-coefficient pivoting, falling back to Bland's rule for good once
    // a run of degenerate pivots suggests stalling.
    let mut bland = false;
    let mut stalled = 0usize;

    loop {
        let objective = &tab[rows];
        let entering = if bland {
            (0..cols + rows).find(|&j| objective[j].is_pos())
        } else {
            let mut best: Option<usize> = None;
            for j in 0..cols + rows {
                if objective[j].is_pos()
                    && best.map_or(true, |b| objective[j].sub(&objective[b]).is_pos())
                {
                    best = Some(j);
                }
            }
            best
        };
        let Some(e) = entering else { break };
        let mut leave: Option<(usize, T)> = None;
        for (i, row) in tab.iter().take(rows).enumerate() {
            if row[e].is_pos() {
                let ratio = row[width - 1].div(&row[e]);
                let better = match &leave {
                    None => true,
                    Some((li, lr)) => {
                        let diff = ratio.sub(lr);
                        diff.is_neg() || (diff.is_zero_ish() && basis[i] < basis[*li])
                    }
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let Some((l, ratio)) = leave else { break };
        if ratio.is_zero_ish() {
            stalled += 1;
            if stalled > 50 {
                bland = true;
            }
        } else {
            stalled = 0;
        }
        pivot(&mut tab, l, e);
        basis[l] = e;
    }

    if tab[rows][width - 1].is_pos() {
        return None;
    }
    let mut x = vec![T::zero(); cols];
    for (i, &bv) in basis.iter().enumerate() {
        if bv < cols {
            x[bv] = tab[i][width - 1].clone();
        }
    }
    Some(x)
}

fn pivot<T: Scalar>(tab: &mut [Vec<T>], l: usize, e: usize) {
    let p = tab[l][e].clone();
    for v in tab[l].iter_mut() {
        *v = v.div(&p);
    }
    let pivot_row = tab[l].clone();
    for (i, row) in tab.iter_mut().enumerate() {
        if i == l || row[e].is_zero_ish() {
            continue;
        }
        let factor = row[e].clone();
        for (v, pv) in row.iter_mut().zip(&pivot_row) {
            *v = v.sub(&factor.mul(pv));
        }
    }
}
