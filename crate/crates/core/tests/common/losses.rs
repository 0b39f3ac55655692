//! Seeded box-pair generators for gradient checks.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use trapeval::BoundingBox;

#[derive(Clone, Copy, Debug)]
pub enum Layout {
    Overlapping,
    Disjoint,
    Contained,
}

pub fn random_box(rng: &mut ChaCha8Rng) -> BoundingBox {
    let x = rng.gen_range(0.0..10.0);
    let y = rng.gen_range(0.0..10.0);
    BoundingBox::new(x, y, x + rng.gen_range(0.5..5.0), y + rng.gen_range(0.5..5.0))
}

pub fn random_pair(rng: &mut ChaCha8Rng, layout: Layout) -> (BoundingBox, BoundingBox) {
    let gt = random_box(rng);
    let pred = match layout {
        Layout::Overlapping => {
            let dx = rng.gen_range(-0.8..0.8) * gt.width();
            let dy = rng.gen_range(-0.8..0.8) * gt.height();
            let sx = rng.gen_range(0.5..1.8);
            let sy = rng.gen_range(0.5..1.8);
            let (cx, cy) = gt.center();
            let (hw, hh) = (gt.width() * sx / 2.0, gt.height() * sy / 2.0);
            BoundingBox::new(cx + dx - hw, cy + dy - hh, cx + dx + hw, cy + dy + hh)
        }
        Layout::Disjoint => {
            let w = rng.gen_range(0.5..5.0);
            let h = rng.gen_range(0.5..5.0);
            let gap = rng.gen_range(0.1..4.0);
            match rng.gen_range(0..4) {
                0 => BoundingBox::new(gt.x2 + gap, gt.y1 - 1.0, gt.x2 + gap + w, gt.y1 - 1.0 + h),
                1 => BoundingBox::new(gt.x1 - gap - w, gt.y1 + 0.3, gt.x1 - gap, gt.y1 + 0.3 + h),
                2 => BoundingBox::new(gt.x1 + 0.2, gt.y2 + gap, gt.x1 + 0.2 + w, gt.y2 + gap + h),
                _ => BoundingBox::new(gt.x1 - 2.0, gt.y1 - gap - h, gt.x1 - 2.0 + w, gt.y1 - gap),
            }
        }
        Layout::Contained => {
            let (outer_shrink, flip) = (rng.gen_range(0.1..0.45), rng.gen_bool(0.5));
            let fx = rng.gen_range(0.05..outer_shrink);
            let fy = rng.gen_range(0.05..outer_shrink);
            let inner = BoundingBox::new(
                gt.x1 + fx * gt.width(),
                gt.y1 + fy * gt.height(),
                gt.x2 - (outer_shrink - fx + 0.05) * gt.width(),
                gt.y2 - (outer_shrink - fy + 0.05) * gt.height(),
            );
            if flip {
                // pred encloses gt instead
                let (ex, ey) = (rng.gen_range(0.1..2.0), rng.gen_range(0.1..2.0));
                BoundingBox::new(gt.x1 - ex, gt.y1 - ey, gt.x2 + ey, gt.y2 + ex)
            } else {
                inner
            }
        }
    };
    (pred, gt)
}
