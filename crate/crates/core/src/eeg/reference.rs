use ndarray::Axis;

use super::EegMatrix;
use crate::num::Real;

/// Subtracts the instantaneous mean over channels from every channel.
pub fn common_average_reference<T: Real>(x: &EegMatrix<T>) -> EegMatrix<T> {
    let mut out = x.clone();
    if let Some(mean) = x.data.mean_axis(Axis(0)) {
        for mut row in out.data.axis_iter_mut(Axis(0)) {
            row.zip_mut_with(&mean, |v, &m| *v = *v - m);
        }
    }
    out
}
