use nalgebra::{DMatrix, DVector};

use super::GeometryError;

/// Relative gap below which the two smallest singular values are treated as equal.
const KERNEL_GAP_TOL: f64 = 1e-12;

/// Unit vector `x` minimising `‖A x‖₂`.
///
/// This is the right singular vector belonging to the smallest singular value.
/// Wide matrices are padded with zero rows so the full right singular basis is
/// available. The sign is fixed so that the first entry of largest magnitude
/// is positive.
pub fn solve_homogeneous(a: &DMatrix<f64>) -> Result<DVector<f64>, GeometryError> {
    let (rows, cols) = a.shape();
    if rows < 2 || cols < 2 {
        return Err(GeometryError::InvalidInput(format!(
            "homogeneous system must be at least 2x2, got {rows}x{cols}"
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(GeometryError::InvalidInput("non-finite matrix entry".into()));
    }

    let padded;
    let work = if rows < cols {
        let mut m = DMatrix::zeros(cols, cols);
        m.view_mut((0, 0), (rows, cols)).copy_from(a);
        padded = m;
        &padded
    } else {
        a
    };

    let svd = work.clone().svd(false, true);
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let sv = &svd.singular_values;

    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[i].total_cmp(&sv[j]));
    let smallest = sv[order[0]];
    let second = sv[order[1]];
    let largest = sv[order[order.len() - 1]];
    if largest == 0.0 || second - smallest <= KERNEL_GAP_TOL * largest {
        return Err(GeometryError::AmbiguousKernel);
    }

    let mut x: DVector<f64> = v_t.row(order[0]).transpose();
    x /= x.norm();
    fix_sign(&mut x);
    Ok(x)
}

/// Flip `x` so that its first entry of largest magnitude is positive.
pub(crate) fn fix_sign(x: &mut DVector<f64>) {
    let max = x.amax();
    // entries equal to the maximum up to rounding count as ties
    let best = x.iter().position(|v| v.abs() >= max * (1.0 - 1e-12)).unwrap_or(0);
    if x[best] < 0.0 {
        x.neg_mut();
    }
}
