//! Bare-bones PNG line charts: axes, grid, tick labels, legend, and one
//! coloured polyline per series. Text uses a built-in 5×7 bitmap font
//! (upper-case letters, digits and a little punctuation).

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};

const PALETTE: [[u8; 3]; 6] = [
    [31, 119, 180],
    [214, 39, 40],
    [44, 160, 44],
    [255, 127, 14],
    [148, 103, 189],
    [23, 190, 207],
];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

pub struct LinePlot {
    pub width: u32,
    pub height: u32,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

impl LinePlot {
    pub fn new(series: Vec<Series>) -> Self {
        LinePlot {
            width: 640,
            height: 480,
            title: String::new(),
            x_label: String::new(),
            y_label: String::new(),
            series,
        }
    }

    pub fn labels(mut self, title: &str, x_label: &str, y_label: &str) -> Self {
        self.title = title.to_string();
        self.x_label = x_label.to_string();
        self.y_label = y_label.to_string();
        self
    }

    fn bounds(&self) -> Option<(f64, f64, f64, f64)> {
        let pts = self.series.iter().flat_map(|s| s.points.iter()).filter(|(x, y)| x.is_finite() && y.is_finite());
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in pts {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !x0.is_finite() {
            return None;
        }
        if x1 - x0 < 1e-12 {
            x0 -= 0.5;
            x1 += 0.5;
        }
        let pad = ((y1 - y0) * 0.05).max(1e-6);
        Some((x0, x1, y0 - pad, y1 + pad))
    }

    pub fn render(&self) -> RgbImage {
        let (w, h) = (self.width, self.height);
        let mut img = RgbImage::from_pixel(w, h, Rgb([255, 255, 255]));
        let (left, top) = (80i64, 40i64);
        let margin = top;
        let (pw, ph) = (w as i64 - left - 30, h as i64 - top - 60);
        let grey = Rgb([220, 220, 220]);
        for i in 0..=10 {
            let gx = left + pw * i / 10;
            let gy = margin + ph * i / 10;
            line(&mut img, (gx, margin), (gx, margin + ph), grey);
            line(&mut img, (left, gy), (left + pw, gy), grey);
        }
        let black = Rgb([0, 0, 0]);
        line(&mut img, (left, margin + ph), (left + pw, margin + ph), black);
        line(&mut img, (left, margin), (left, margin + ph), black);
        text(&mut img, &self.title, left + pw / 2 - text_width(&self.title, 2) / 2, 12, 2, black);
        text(&mut img, &self.x_label, left + pw / 2 - text_width(&self.x_label, 2) / 2, margin + ph + 34, 2, black);
        text_vertical(&mut img, &self.y_label, 8, margin + ph / 2 + text_width(&self.y_label, 2) / 2, 2, black);

        let Some((x0, x1, y0, y1)) = self.bounds() else {
            return img;
        };
        for i in (0..=10).step_by(2) {
            let xv = x0 + (x1 - x0) * i as f64 / 10.0;
            let label = tick(xv, x1 - x0);
            text(&mut img, &label, left + pw * i / 10 - text_width(&label, 1) / 2, margin + ph + 8, 1, black);
            let yv = y0 + (y1 - y0) * i as f64 / 10.0;
            let label = tick(yv, y1 - y0);
            text(&mut img, &label, left - 6 - text_width(&label, 1), margin + ph - ph * i / 10 - 3, 1, black);
        }
        let map = |(x, y): (f64, f64)| -> (i64, i64) {
            (
                left + ((x - x0) / (x1 - x0) * pw as f64).round() as i64,
                margin + ph - ((y - y0) / (y1 - y0) * ph as f64).round() as i64,
            )
        };
        for (si, s) in self.series.iter().enumerate() {
            let colour = Rgb(PALETTE[si % PALETTE.len()]);
            let pts: Vec<(i64, i64)> = s.points.iter().copied().filter(|(x, y)| x.is_finite() && y.is_finite()).map(map).collect();
            for pair in pts.windows(2) {
                line(&mut img, pair[0], pair[1], colour);
            }
            for &(px, py) in &pts {
                for dy in -2..=2 {
                    for dx in -2..=2 {
                        put(&mut img, px + dx, py + dy, colour);
                    }
                }
            }
            // legend, top-left inside the axes, one row per series
            let ly = margin + 8 + 14 * si as i64;
            for dy in 0..7 {
                for dx in 0..16 {
                    put(&mut img, left + 8 + dx, ly + dy, colour);
                }
            }
            text(&mut img, &s.label, left + 30, ly, 1, black);
        }
        img
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        self.render()
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| Error::io(path, std::io::Error::other(e)))
    }
}

fn tick(v: f64, range: f64) -> String {
    let step = range / 10.0;
    let digits = if step >= 1.0 { 0 } else { (-step.log10()).ceil().min(4.0) as usize };
    let s = format!("{v:.digits$}");
    if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') { s.trim_start_matches('-').to_string() } else { s }
}

fn glyph(c: char) -> [u8; 7] {
    match c.to_ascii_uppercase() {
        '0' => [0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E],
        '1' => [0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E],
        '2' => [0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F],
        '3' => [0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E],
        '4' => [0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02],
        '5' => [0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E],
        '6' => [0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E],
        '7' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08],
        '8' => [0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E],
        '9' => [0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C],
        'A' => [0x0E, 0x11, 0x11, 0x11, 0x1F, 0x11, 0x11],
        'B' => [0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E],
        'C' => [0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E],
        'D' => [0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C],
        'E' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F],
        'F' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10],
        'G' => [0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F],
        'H' => [0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
        'I' => [0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E],
        'J' => [0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C],
        'K' => [0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11],
        'L' => [0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F],
        'M' => [0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11],
        'N' => [0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11],
        'O' => [0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'P' => [0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10],
        'Q' => [0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D],
        'R' => [0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11],
        'S' => [0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E],
        'T' => [0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04],
        'U' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'V' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04],
        'W' => [0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A],
        'X' => [0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11],
        'Y' => [0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04],
        'Z' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F],
        '.' => [0, 0, 0, 0, 0, 0x0C, 0x0C],
        ',' => [0, 0, 0, 0, 0x0C, 0x04, 0x08],
        ':' => [0, 0x0C, 0x0C, 0, 0x0C, 0x0C, 0],
        '-' => [0, 0, 0, 0x1F, 0, 0, 0],
        '+' => [0, 0x04, 0x04, 0x1F, 0x04, 0x04, 0],
        '=' => [0, 0, 0x1F, 0, 0x1F, 0, 0],
        '/' => [0, 0x01, 0x02, 0x04, 0x08, 0x10, 0],
        '(' => [0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02],
        ')' => [0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08],
        _ => [0; 7],
    }
}

fn text_width(s: &str, scale: i64) -> i64 {
    s.chars().count() as i64 * 6 * scale
}

fn text(img: &mut RgbImage, s: &str, x: i64, y: i64, scale: i64, c: Rgb<u8>) {
    for (i, ch) in s.chars().enumerate() {
        let g = glyph(ch);
        for (row, bits) in g.iter().enumerate() {
            for col in 0..5 {
                if bits & (0x10 >> col) != 0 {
                    for sy in 0..scale {
                        for sx in 0..scale {
                            put(img, x + (i as i64 * 6 + col) * scale + sx, y + row as i64 * scale + sy, c);
                        }
                    }
                }
            }
        }
    }
}

/// Text rotated a quarter turn anticlockwise, starting at `(x, y)` and running upwards.
fn text_vertical(img: &mut RgbImage, s: &str, x: i64, y: i64, scale: i64, c: Rgb<u8>) {
    for (i, ch) in s.chars().enumerate() {
        let g = glyph(ch);
        for (row, bits) in g.iter().enumerate() {
            for col in 0..5 {
                if bits & (0x10 >> col) != 0 {
                    for sy in 0..scale {
                        for sx in 0..scale {
                            put(img, x + row as i64 * scale + sx, y - (i as i64 * 6 + col) * scale - sy, c);
                        }
                    }
                }
            }
        }
    }
}

fn put(img: &mut RgbImage, x: i64, y: i64, c: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, c);
    }
}

/// Bresenham line.
fn line(img: &mut RgbImage, (mut x0, mut y0): (i64, i64), (x1, y1): (i64, i64), c: Rgb<u8>) {
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        put(img, x0, y0, c);
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}
