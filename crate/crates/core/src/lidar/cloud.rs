use super::RangeImage;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<[f64; 3]>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Azimuth and elevation (radians) of beam `(row, col)`.
///
/// Beams sit at pixel centres of a uniform grid centred on the optical axis:
/// azimuth grows with the column, elevation shrinks with the row (row 0 is the
/// top of the image).
pub fn beam_angles(row: usize, col: usize, height: usize, width: usize, h_fov: f64, v_fov: f64) -> (f64, f64) {
    let azimuth = ((col as f64 + 0.5) / width as f64 - 0.5) * h_fov;
    let elevation = (0.5 - (row as f64 + 0.5) / height as f64) * v_fov;
    (azimuth, elevation)
}

/// Spherical-to-Cartesian conversion of every beam with a return:
/// `(r cos(el) cos(az), r cos(el) sin(az), r sin(el))`, row-major order.
pub fn range_image_to_point_cloud(img: &RangeImage) -> PointCloud {
    let cfg = img.config();
    let (h, w) = img.dims();
    let mut points = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            if !img.is_return(r, c) {
                continue;
            }
            let range = img.get(r, c);
            let (az, el) = beam_angles(r, c, h, w, cfg.h_fov, cfg.v_fov);
            let (sin_el, cos_el) = el.sin_cos();
            let (sin_az, cos_az) = az.sin_cos();
            points.push([range * cos_el * cos_az, range * cos_el * sin_az, range * sin_el]);
        }
    }
    PointCloud { points }
}
