//! Review composites: panels side by side with boxes outlined.

use crate::dataset::{BBox, ImageBuffer};

const PALETTE: [[u8; 3]; 6] = [
    [255, 64, 64],
    [64, 200, 64],
    [64, 128, 255],
    [255, 200, 0],
    [200, 64, 255],
    [0, 220, 220],
];

pub fn palette_color(index: usize) -> [u8; 3] {
    PALETTE[index % PALETTE.len()]
}

/// Outlines `bbox` with a line `thickness` pixels wide, inside the image.
pub fn draw_box(img: &mut ImageBuffer, bbox: &BBox, rgb: [u8; 3], thickness: u32) {
    let (w, h) = (img.width(), img.height());
    if w == 0 || h == 0 {
        return;
    }
    let x0 = (bbox.x_min.floor().max(0.0) as u32).min(w - 1);
    let y0 = (bbox.y_min.floor().max(0.0) as u32).min(h - 1);
    let x1 = ((bbox.x_max.ceil() as u32).saturating_sub(1)).clamp(x0, w - 1);
    let y1 = ((bbox.y_max.ceil() as u32).saturating_sub(1)).clamp(y0, h - 1);
    for t in 0..thickness {
        for x in x0..=x1 {
            img.set_pixel(x, (y0 + t).min(y1), rgb);
            img.set_pixel(x, y1.saturating_sub(t).max(y0), rgb);
        }
        for y in y0..=y1 {
            img.set_pixel((x0 + t).min(x1), y, rgb);
            img.set_pixel(x1.saturating_sub(t).max(x0), y, rgb);
        }
    }
}

/// Lays panels out left to right on a white canvas, top-aligned.
pub fn side_by_side(panels: &[ImageBuffer], gap: u32) -> ImageBuffer {
    let width = panels.iter().map(ImageBuffer::width).sum::<u32>()
        + gap * panels.len().saturating_sub(1) as u32;
    let height = panels.iter().map(ImageBuffer::height).max().unwrap_or(0);
    let mut canvas = ImageBuffer::filled(width, height, [255, 255, 255]);
    let mut x_off = 0;
    for p in panels {
        for y in 0..p.height() {
            for x in 0..p.width() {
                canvas.set_pixel(x_off + x, y, p.pixel(x, y));
            }
        }
        x_off += p.width() + gap;
    }
    canvas
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outline_only_touches_border() {
        let mut img = ImageBuffer::filled(10, 10, [0, 0, 0]);
        draw_box(&mut img, &BBox::new(2.0, 2.0, 6.0, 6.0), [9, 9, 9], 1);
        assert_eq!(img.pixel(2, 2), [9, 9, 9]);
        assert_eq!(img.pixel(5, 5), [9, 9, 9]);
        assert_eq!(img.pixel(3, 3), [0, 0, 0]);
        assert_eq!(img.pixel(6, 6), [0, 0, 0]);
    }

    #[test]
    fn composite_dimensions() {
        let a = ImageBuffer::filled(4, 3, [1, 1, 1]);
        let b = ImageBuffer::filled(5, 6, [2, 2, 2]);
        let c = side_by_side(&[a, b], 2);
        assert_eq!((c.width(), c.height()), (11, 6));
        assert_eq!(c.pixel(4, 0), [255, 255, 255]);
        assert_eq!(c.pixel(6, 5), [2, 2, 2]);
    }
}
