use super::{BinaryMask, ImagingError, Polygon};

const ON_EDGE_EPS: f64 = 1e-9;

fn on_segment(px: f64, py: f64, a: [f64; 2], b: [f64; 2]) -> bool {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let cross = dx * (py - a[1]) - dy * (px - a[0]);
    let len = dx.hypot(dy);
    if cross.abs() > ON_EDGE_EPS * len.max(1.0) {
        return false;
    }
    let dot = (px - a[0]) * dx + (py - a[1]) * dy;
    dot >= -ON_EDGE_EPS && dot <= dx * dx + dy * dy + ON_EDGE_EPS
}

/// Boundary-inclusive point-in-polygon test (even-odd crossings).
pub fn point_in_polygon(px: f64, py: f64, poly: &Polygon) -> bool {
    let v = &poly.vertices;
    let n = v.len();
    let mut inside = false;
    for i in 0..n {
        let a = v[i];
        let b = v[(i + 1) % n];
        if on_segment(px, py, a, b) {
            return true;
        }
        if (a[1] > py) != (b[1] > py) {
            let x_cross = a[0] + (py - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if px < x_cross {
                inside = !inside;
            }
        }
    }
    inside
}

/// Marks every pixel whose center lies inside (or on) any polygon.
pub fn rasterize_polygons(polygons: &[Polygon], width: usize, height: usize) -> Result<BinaryMask, ImagingError> {
    if width == 0 || height == 0 {
        return Err(ImagingError::Dimensions(format!("{width}x{height} raster")));
    }
    for p in polygons {
        p.validate()?;
    }
    let mut mask = BinaryMask::new(width, height);
    for poly in polygons {
        let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for [x, y] in &poly.vertices {
            x0 = x0.min(*x);
            y0 = y0.min(*y);
            x1 = x1.max(*x);
            y1 = y1.max(*y);
        }
        // Pixel centers i + 0.5 inside the bounding box.
        let lo = |v: f64, n: usize| ((v - 0.5).ceil().max(0.0) as usize).min(n);
        let hi = |v: f64, n: usize| {
            let h = (v - 0.5).floor();
            if h < 0.0 {
                0
            } else {
                (h as usize + 1).min(n)
            }
        };
        for y in lo(y0, height)..hi(y1, height) {
            for x in lo(x0, width)..hi(x1, width) {
                if !mask.get(x, y) && point_in_polygon(x as f64 + 0.5, y as f64 + 0.5, poly) {
                    mask.set(x, y, true);
                }
            }
        }
    }
    Ok(mask)
}
