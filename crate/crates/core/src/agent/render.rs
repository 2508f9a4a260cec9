use crate::model::{bbox_of, Person};
use crate::preproc::RasterImage;

/// Padding around a person's box that may be touched by its overlay.
pub const LABEL_MARGIN: usize = 16;

const BODY_EDGES: [(usize, usize); 19] = [
    (15, 13),
    (13, 11),
    (16, 14),
    (14, 12),
    (11, 12),
    (5, 11),
    (6, 12),
    (5, 6),
    (5, 7),
    (6, 8),
    (7, 9),
    (8, 10),
    (1, 2),
    (0, 1),
    (0, 2),
    (1, 3),
    (2, 4),
    (3, 5),
    (4, 6),
];

const PALETTE: [[u8; 3]; 8] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
];

/// 3x5 glyphs, one row per byte, most significant of the low three bits on the left.
fn glyph(ch: char) -> [u8; 5] {
    match ch {
        'P' => [0b110, 0b101, 0b110, 0b100, 0b100],
        '0' => [0b111, 0b101, 0b101, 0b101, 0b111],
        '1' => [0b010, 0b110, 0b010, 0b010, 0b111],
        '2' => [0b111, 0b001, 0b111, 0b100, 0b111],
        '3' => [0b111, 0b001, 0b011, 0b001, 0b111],
        '4' => [0b101, 0b101, 0b111, 0b001, 0b001],
        '5' => [0b111, 0b100, 0b111, 0b001, 0b111],
        '6' => [0b111, 0b100, 0b111, 0b101, 0b111],
        '7' => [0b111, 0b001, 0b010, 0b010, 0b010],
        '8' => [0b111, 0b101, 0b111, 0b101, 0b111],
        '9' => [0b111, 0b101, 0b111, 0b001, 0b111],
        _ => [0; 5],
    }
}

/// Overlay color of person `index`.
pub fn person_color(index: usize) -> [u8; 3] {
    PALETTE[index % PALETTE.len()]
}

struct Canvas<'a> {
    img: &'a mut RasterImage,
}

impl Canvas<'_> {
    fn put(&mut self, x: i64, y: i64, rgb: [u8; 3]) {
        if x >= 0 && y >= 0 && (x as usize) < self.img.width() && (y as usize) < self.img.height() {
            self.img.set_pixel(x as usize, y as usize, rgb);
        }
    }

    fn line(&mut self, (mut x0, mut y0): (i64, i64), (x1, y1): (i64, i64), rgb: [u8; 3]) {
        let dx = (x1 - x0).abs();
        let dy = -(y1 - y0).abs();
        let sx = if x0 < x1 { 1 } else { -1 };
        let sy = if y0 < y1 { 1 } else { -1 };
        let mut err = dx + dy;
        loop {
            self.put(x0, y0, rgb);
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

    fn rect(&mut self, x0: i64, y0: i64, x1: i64, y1: i64, rgb: [u8; 3]) {
        self.line((x0, y0), (x1, y0), rgb);
        self.line((x1, y0), (x1, y1), rgb);
        self.line((x1, y1), (x0, y1), rgb);
        self.line((x0, y1), (x0, y0), rgb);
    }

    fn text(&mut self, x: i64, y: i64, s: &str, fg: [u8; 3]) {
        let w = 4 * s.chars().count() as i64 + 1;
        for yy in y..y + 7 {
            for xx in x..x + w {
                self.put(xx, yy, [0, 0, 0]);
            }
        }
        for (i, ch) in s.chars().enumerate() {
            for (row, bits) in glyph(ch).iter().enumerate() {
                for col in 0..3 {
                    if bits & (0b100 >> col) != 0 {
                        self.put(x + 1 + 4 * i as i64 + col, y + 1 + row as i64, fg);
                    }
                }
            }
        }
    }
}

/// Draws each person's skeleton, tight box and `P<i>` label.
///
/// Only keypoints at or above `conf_threshold` are drawn; persons with fewer
/// than two such keypoints get no overlay. Skeleton edges follow the COCO
/// body layout when the pose has at least 17 joints.
pub fn render_indexed_poses(image: &RasterImage, persons: &[Person], conf_threshold: f64) -> RasterImage {
    let mut out = image.clone();
    let mut canvas = Canvas { img: &mut out };
    for (i, person) in persons.iter().enumerate() {
        let Some(b) = bbox_of(person, conf_threshold) else {
            continue;
        };
        let color = person_color(i);
        let px = |k: usize| {
            let kp = &person.keypoints[k];
            (kp.x.round() as i64, kp.y.round() as i64)
        };
        let ok = |k: usize| person.keypoints[k].passes(conf_threshold);
        if person.keypoints.len() >= 17 {
            for &(a, c) in &BODY_EDGES {
                if ok(a) && ok(c) {
                    canvas.line(px(a), px(c), color);
                }
            }
        }
        for k in (0..person.keypoints.len()).filter(|&k| ok(k)) {
            let (x, y) = px(k);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    canvas.put(x + dx, y + dy, color);
                }
            }
        }
        let (x0, y0, x1, y1) = (
            b.x0.floor() as i64 - 2,
            b.y0.floor() as i64 - 2,
            b.x1.ceil() as i64 + 2,
            b.y1.ceil() as i64 + 2,
        );
        canvas.rect(x0, y0, x1, y1, color);
        canvas.text(x0, (y0 - 8).max(0), &format!("P{i}"), color);
    }
    out
}
