use super::volume::Volume3D;
use crate::error::{Error, Result};

/// Trilinear resampling onto a `target³` grid with corner-aligned sampling:
/// target index `j` reads source coordinate `j * (E - 1) / (E' - 1)`.
pub fn resample_trilinear(volume: &Volume3D, target: usize) -> Result<Volume3D> {
    let dims = volume.dims();
    if target < 2 || dims.iter().any(|&d| d < 2) {
        return Err(Error::invalid(format!(
            "resampling needs extents >= 2, got source {dims:?} and target {target}"
        )));
    }
    if volume.is_cube(target) {
        return Ok(volume.clone());
    }

    // Per-axis (lower index, weight of the upper neighbour).
    let axis_taps = |src: usize| -> Vec<(usize, f64)> {
        (0..target)
            .map(|j| {
                let pos = j as f64 * (src - 1) as f64 / (target - 1) as f64;
                let lo = (pos.floor() as usize).min(src - 2);
                (lo, pos - lo as f64)
            })
            .collect()
    };
    let (tx, ty, tz) = (axis_taps(dims[0]), axis_taps(dims[1]), axis_taps(dims[2]));

    let mut data = Vec::with_capacity(target * target * target);
    for &(z0, wz) in &tz {
        for &(y0, wy) in &ty {
            for &(x0, wx) in &tx {
                let v = |x: usize, y: usize, z: usize| volume.get(x, y, z) as f64;
                let c00 = v(x0, y0, z0) * (1.0 - wx) + v(x0 + 1, y0, z0) * wx;
                let c10 = v(x0, y0 + 1, z0) * (1.0 - wx) + v(x0 + 1, y0 + 1, z0) * wx;
                let c01 = v(x0, y0, z0 + 1) * (1.0 - wx) + v(x0 + 1, y0, z0 + 1) * wx;
                let c11 = v(x0, y0 + 1, z0 + 1) * (1.0 - wx) + v(x0 + 1, y0 + 1, z0 + 1) * wx;
                let c0 = c00 * (1.0 - wy) + c10 * wy;
                let c1 = c01 * (1.0 - wy) + c11 * wy;
                data.push((c0 * (1.0 - wz) + c1 * wz) as f32);
            }
        }
    }
    Volume3D::cube(target, data)
}

/// Model input preprocessing: resampling to `extent³` followed by
/// per-volume min-max normalization to `[0, 1]`.
pub fn prepare_volume(volume: &Volume3D, extent: usize) -> Result<Volume3D> {
    Ok(resample_trilinear(volume, extent)?.normalized_minmax())
}
