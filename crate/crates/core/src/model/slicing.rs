use std::ops::Range;

use crate::error::{Error, Result};

/// Overlapping ROI windows for the sliced BiLSTM.
///
/// Window `s` covers ROIs `s*stride .. s*stride + length` (0-based) for
/// `s < ceil((n - length) / stride)`; one final window always covers the
/// last `length` ROIs. The window count is `ceil((n - length) / stride) + 1`.
pub fn slice_sequence(n_rois: usize, length: usize, stride: usize) -> Result<Vec<Range<usize>>> {
    if length == 0 || stride == 0 || stride > length || length > n_rois {
        return Err(Error::InvalidSlicing(format!(
            "need 1 <= stride <= length <= ROI count, got stride {stride}, length {length}, {n_rois} ROIs"
        )));
    }
    let regular = (n_rois - length).div_ceil(stride);
    let mut out: Vec<Range<usize>> = (0..regular).map(|s| s * stride..s * stride + length).collect();
    out.push(n_rois - length..n_rois);
    Ok(out)
}

/// Slicing parameters reduced to fit `n_rois` when fewer ROIs than the
/// window length are selected.
pub fn fit_slicing(n_rois: usize, length: usize, stride: usize) -> (usize, usize) {
    let length = length.min(n_rois).max(1);
    (length, stride.min(length).max(1))
}
