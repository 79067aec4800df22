//! Built-in glyph and shape rasterizer.
//!
//! A small embedded vector-stroke alphabet plus a handful of solid test
//! shapes, rasterized at arbitrary sizes. Glyphs are normalized so the ink
//! touches all four sides of the requested box, which keeps the bounding
//! box of a rasterized letter equal to its extent.

use serde::{Deserialize, Serialize};
use shapebound::hypotheses::BinaryMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum GlyphKind {
    Letter { letter: char },
    Square,
    Disc,
    Triangle,
    Star,
}

/// Polyline strokes per letter on a 10x10 design grid, y pointing down.
fn letter_strokes(letter: char) -> Vec<Vec<(f64, f64)>> {
    let seg = |pts: &[(f64, f64)]| pts.to_vec();
    match letter.to_ascii_uppercase() {
        'A' => vec![seg(&[(0.0, 10.0), (5.0, 0.0), (10.0, 10.0)]), seg(&[(2.2, 6.0), (7.8, 6.0)])],
        'B' => vec![
            seg(&[(0.0, 0.0), (0.0, 10.0)]),
            seg(&[(0.0, 0.0), (6.5, 0.0), (8.0, 1.3), (8.0, 3.6), (6.5, 5.0), (0.0, 5.0)]),
            seg(&[(0.0, 5.0), (7.0, 5.0), (8.7, 6.4), (8.7, 8.7), (7.0, 10.0), (0.0, 10.0)]),
        ],
        'C' => vec![seg(&[
            (9.0, 1.8),
            (6.5, 0.0),
            (3.0, 0.0),
            (0.0, 3.0),
            (0.0, 7.0),
            (3.0, 10.0),
            (6.5, 10.0),
            (9.0, 8.2),
        ])],
        'D' => vec![seg(&[
            (0.0, 0.0),
            (5.0, 0.0),
            (9.0, 3.0),
            (9.0, 7.0),
            (5.0, 10.0),
            (0.0, 10.0),
            (0.0, 0.0),
        ])],
        'E' => vec![
            seg(&[(9.0, 0.0), (0.0, 0.0), (0.0, 10.0), (9.0, 10.0)]),
            seg(&[(0.0, 5.0), (7.0, 5.0)]),
        ],
        'F' => vec![seg(&[(9.0, 0.0), (0.0, 0.0), (0.0, 10.0)]), seg(&[(0.0, 5.0), (7.0, 5.0)])],
        'G' => vec![seg(&[
            (9.0, 1.8),
            (6.5, 0.0),
            (3.0, 0.0),
            (0.0, 3.0),
            (0.0, 7.0),
            (3.0, 10.0),
            (6.5, 10.0),
            (9.0, 9.0),
            (9.0, 5.6),
            (5.5, 5.6),
        ])],
        'H' => vec![
            seg(&[(0.0, 0.0), (0.0, 10.0)]),
            seg(&[(10.0, 0.0), (10.0, 10.0)]),
            seg(&[(0.0, 5.0), (10.0, 5.0)]),
        ],
        'I' => vec![
            seg(&[(2.0, 0.0), (8.0, 0.0)]),
            seg(&[(5.0, 0.0), (5.0, 10.0)]),
            seg(&[(2.0, 10.0), (8.0, 10.0)]),
        ],
        'J' => vec![seg(&[(8.0, 0.0), (8.0, 7.0), (6.0, 10.0), (3.0, 10.0), (1.0, 8.0)])],
        'K' => vec![
            seg(&[(0.0, 0.0), (0.0, 10.0)]),
            seg(&[(9.0, 0.0), (0.0, 5.5)]),
            seg(&[(3.0, 3.9), (9.5, 10.0)]),
        ],
        'L' => vec![seg(&[(0.0, 0.0), (0.0, 10.0), (9.0, 10.0)])],
        'M' => vec![seg(&[(0.0, 10.0), (0.0, 0.0), (5.0, 6.5), (10.0, 0.0), (10.0, 10.0)])],
        'N' => vec![seg(&[(0.0, 10.0), (0.0, 0.0), (10.0, 10.0), (10.0, 0.0)])],
        'O' => vec![seg(&[
            (3.0, 0.0),
            (7.0, 0.0),
            (10.0, 3.0),
            (10.0, 7.0),
            (7.0, 10.0),
            (3.0, 10.0),
            (0.0, 7.0),
            (0.0, 3.0),
            (3.0, 0.0),
        ])],
        'P' => vec![seg(&[
            (0.0, 10.0),
            (0.0, 0.0),
            (7.0, 0.0),
            (9.0, 1.8),
            (9.0, 4.2),
            (7.0, 6.0),
            (0.0, 6.0),
        ])],
        'Q' => vec![
            seg(&[
                (3.0, 0.0),
                (7.0, 0.0),
                (10.0, 3.0),
                (10.0, 7.0),
                (7.0, 10.0),
                (3.0, 10.0),
                (0.0, 7.0),
                (0.0, 3.0),
                (3.0, 0.0),
            ]),
            seg(&[(6.0, 6.5), (10.0, 10.0)]),
        ],
        'R' => vec![
            seg(&[
                (0.0, 10.0),
                (0.0, 0.0),
                (7.0, 0.0),
                (9.0, 1.8),
                (9.0, 4.2),
                (7.0, 6.0),
                (0.0, 6.0),
            ]),
            seg(&[(4.0, 6.0), (9.5, 10.0)]),
        ],
        'S' => vec![seg(&[
            (9.0, 1.6),
            (6.5, 0.0),
            (2.5, 0.0),
            (0.5, 1.8),
            (2.0, 4.3),
            (8.0, 5.7),
            (9.5, 8.0),
            (7.5, 10.0),
            (3.0, 10.0),
            (0.5, 8.4),
        ])],
        'T' => vec![seg(&[(0.0, 0.0), (10.0, 0.0)]), seg(&[(5.0, 0.0), (5.0, 10.0)])],
        'U' => vec![seg(&[(0.0, 0.0), (0.0, 7.0), (3.0, 10.0), (7.0, 10.0), (10.0, 7.0), (10.0, 0.0)])],
        'V' => vec![seg(&[(0.0, 0.0), (5.0, 10.0), (10.0, 0.0)])],
        'W' => vec![seg(&[(0.0, 0.0), (2.5, 10.0), (5.0, 3.5), (7.5, 10.0), (10.0, 0.0)])],
        'X' => vec![seg(&[(0.0, 0.0), (10.0, 10.0)]), seg(&[(10.0, 0.0), (0.0, 10.0)])],
        'Y' => vec![seg(&[(0.0, 0.0), (5.0, 5.0), (10.0, 0.0)]), seg(&[(5.0, 5.0), (5.0, 10.0)])],
        'Z' => vec![seg(&[(0.0, 0.0), (10.0, 0.0), (0.0, 10.0), (10.0, 10.0)])],
        other => panic!("no stroke table for {other:?}"),
    }
}

fn dist_to_segment(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (vx, vy) = (b.0 - a.0, b.1 - a.1);
    let (wx, wy) = (p.0 - a.0, p.1 - a.1);
    let len2 = vx * vx + vy * vy;
    let t = if len2 > 0.0 { ((wx * vx + wy * vy) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let (dx, dy) = (p.0 - (a.0 + t * vx), p.1 - (a.1 + t * vy));
    (dx * dx + dy * dy).sqrt()
}

/// Crossing-number point-in-polygon test.
fn inside_polygon(p: (f64, f64), poly: &[(f64, f64)]) -> bool {
    let mut inside = false;
    let n = poly.len();
    for i in 0..n {
        let (x1, y1) = poly[i];
        let (x2, y2) = poly[(i + 1) % n];
        if (y1 > p.1) != (y2 > p.1) {
            let x_cross = x1 + (p.1 - y1) / (y2 - y1) * (x2 - x1);
            if p.0 < x_cross {
                inside = !inside;
            }
        }
    }
    inside
}

/// Maps polygon vertices so their bounding box exactly fills `w x h`.
fn fit_polygon(poly: &[(f64, f64)], w: u32, h: u32) -> Vec<(f64, f64)> {
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for &(x, y) in poly {
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    poly.iter()
        .map(|&(x, y)| {
            ((x - x0) / (x1 - x0) * w as f64, (y - y0) / (y1 - y0) * h as f64)
        })
        .collect()
}

fn rasterize_polygon(poly: &[(f64, f64)], w: u32, h: u32) -> BinaryMask {
    let fitted = fit_polygon(poly, w, h);
    let mut bits = vec![false; (w as usize) * (h as usize)];
    for y in 0..h {
        for x in 0..w {
            if inside_polygon((x as f64 + 0.5, y as f64 + 0.5), &fitted) {
                bits[(y as usize) * (w as usize) + x as usize] = true;
            }
        }
    }
    // stamp the vertices so pointed tips reach the borders they define
    for &(x, y) in &fitted {
        let px = (x.floor() as u32).min(w - 1) as usize;
        let py = (y.floor() as u32).min(h - 1) as usize;
        bits[py * (w as usize) + px] = true;
    }
    BinaryMask::new(w, h, bits)
}

/// Rasterizes a glyph to a `w x h` mask whose ink touches all four sides.
pub fn rasterize(kind: GlyphKind, w: u32, h: u32) -> BinaryMask {
    assert!(w >= 4 && h >= 4, "glyphs need at least a 4x4 canvas");
    match kind {
        GlyphKind::Square => BinaryMask::new(w, h, vec![true; (w as usize) * (h as usize)]),
        GlyphKind::Disc => {
            let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
            let r = w.min(h) as f64 / 2.0;
            let mut bits = Vec::with_capacity((w as usize) * (h as usize));
            for y in 0..h {
                for x in 0..w {
                    let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                    bits.push((dx * dx + dy * dy).sqrt() <= r);
                }
            }
            BinaryMask::new(w, h, bits)
        }
        GlyphKind::Triangle => {
            rasterize_polygon(&[(5.0, 0.0), (0.0, 10.0), (10.0, 10.0)], w, h)
        }
        GlyphKind::Star => {
            let mut poly = Vec::new();
            for i in 0..10 {
                let angle = -std::f64::consts::FRAC_PI_2 + i as f64 * std::f64::consts::PI / 5.0;
                let r = if i % 2 == 0 { 1.0 } else { 0.40 };
                poly.push((r * angle.cos(), r * angle.sin()));
            }
            rasterize_polygon(&poly, w, h)
        }
        GlyphKind::Letter { letter } => {
            let strokes = letter_strokes(letter);
            let thickness = 0.06 * w.min(h) as f64;
            // map the stroke bounding box, inflated by the pen radius, onto
            // the full canvas so the ink reaches every border
            let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
            for s in &strokes {
                for &(x, y) in s {
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x);
                    y1 = y1.max(y);
                }
            }
            let sx = (w as f64 - 2.0 * thickness) / (x1 - x0);
            let sy = (h as f64 - 2.0 * thickness) / (y1 - y0);
            let mapped: Vec<Vec<(f64, f64)>> = strokes
                .iter()
                .map(|s| {
                    s.iter()
                        .map(|&(x, y)| {
                            ((x - x0) * sx + thickness, (y - y0) * sy + thickness)
                        })
                        .collect()
                })
                .collect();
            let mut bits = Vec::with_capacity((w as usize) * (h as usize));
            for y in 0..h {
                for x in 0..w {
                    let p = (x as f64 + 0.5, y as f64 + 0.5);
                    let ink = mapped.iter().any(|s| {
                        s.windows(2).any(|ab| dist_to_segment(p, ab[0], ab[1]) <= thickness)
                    });
                    bits.push(ink);
                }
            }
            BinaryMask::new(w, h, bits)
        }
    }
}

/// The alphabet covered by the stroke table.
pub fn alphabet() -> impl Iterator<Item = char> {
    'A'..='Z'
}

#[cfg(test)]
mod tests {
    use super::*;

    fn touches_all_sides(mask: &BinaryMask) -> bool {
        let (w, h) = (mask.width as i64, mask.height as i64);
        let top = (0..w).any(|x| mask.get(x, 0));
        let bottom = (0..w).any(|x| mask.get(x, h - 1));
        let left = (0..h).any(|y| mask.get(0, y));
        let right = (0..h).any(|y| mask.get(w - 1, y));
        top && bottom && left && right
    }

    #[test]
    fn every_letter_rasterizes_tight() {
        for letter in alphabet() {
            let mask = rasterize(GlyphKind::Letter { letter }, 48, 48);
            assert!(mask.count() > 100, "letter {letter} too thin");
            assert!(mask.count() < 48 * 48 * 11 / 20, "letter {letter} too fat");
            assert!(touches_all_sides(&mask), "letter {letter} does not fill its box");
        }
    }

    #[test]
    fn shapes_rasterize_tight() {
        for kind in [GlyphKind::Square, GlyphKind::Disc, GlyphKind::Triangle, GlyphKind::Star] {
            let mask = rasterize(kind, 64, 64);
            assert!(touches_all_sides(&mask), "{kind:?} does not fill its box");
        }
        let square = rasterize(GlyphKind::Square, 16, 16);
        assert_eq!(square.count(), 256);
        let disc = rasterize(GlyphKind::Disc, 64, 64);
        let expected = std::f64::consts::PI * 32.0 * 32.0;
        assert!((disc.count() as f64 - expected).abs() / expected < 0.05);
    }

    #[test]
    fn letters_are_distinct() {
        let a = rasterize(GlyphKind::Letter { letter: 'A' }, 32, 32);
        let b = rasterize(GlyphKind::Letter { letter: 'B' }, 32, 32);
        assert_ne!(a, b);
    }
}
