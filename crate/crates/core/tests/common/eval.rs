//! Random evaluation instances and a from-the-definition AP oracle.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use trapeval::{BoundingBox, Detection, GroundTruth};

pub struct Instance {
    pub dets: Vec<Detection>,
    pub gts: Vec<GroundTruth>,
}

fn grid_box(rng: &mut ChaCha8Rng) -> BoundingBox {
    let x = rng.gen_range(0..6) as f64;
    let y = rng.gen_range(0..6) as f64;
    BoundingBox::new(x, y, x + rng.gen_range(1..5) as f64, y + rng.gen_range(1..5) as f64)
}

/// At most `max_dets` detections, 1..=`max_gts` ground truths, categories
/// drawn from `0..n_categories`, spread over one or two images. Detections
/// are often jittered copies of ground truths and confidences repeat.
pub fn random_instance(rng: &mut ChaCha8Rng, max_dets: usize, max_gts: usize, n_categories: u32) -> Instance {
    let images = ["p", "q"];
    let n_images = rng.gen_range(1..=2);
    let gts: Vec<GroundTruth> = (0..rng.gen_range(1..=max_gts))
        .map(|_| GroundTruth::new(images[rng.gen_range(0..n_images)], rng.gen_range(0..n_categories), grid_box(rng)))
        .collect();
    let dets = (0..rng.gen_range(0..=max_dets))
        .map(|_| {
            let (image, bbox) = if rng.gen_bool(0.6) {
                let g = &gts[rng.gen_range(0..gts.len())];
                let j = |rng: &mut ChaCha8Rng| rng.gen_range(-1..=1) as f64 * 0.5;
                let b = g.bbox;
                (g.image_id.clone(), BoundingBox::new(b.x1 + j(rng), b.y1 + j(rng), b.x2 + j(rng), b.y2 + j(rng)))
            } else {
                (images[rng.gen_range(0..n_images)].to_string(), grid_box(rng))
            };
            let category = if rng.gen_bool(0.8) { 0 } else { rng.gen_range(0..n_categories) };
            let category = (category + rng.gen_range(0..n_categories)) % n_categories;
            let confidence = rng.gen_range(1..=10) as f64 / 10.0;
            Detection::new(image, category, confidence, bbox).unwrap()
        })
        .collect();
    Instance { dets, gts }
}

/// For one image and one category: enumerates every one-to-one assignment
/// and keeps the one whose IoU list, read in confidence order, is
/// lexicographically largest (lower GT index wins exact ties). Returns TP
/// flags indexed like `dets`.
fn exhaustive_flags(dets: &[&Detection], gts: &[&GroundTruth], order: &[usize], thr: f64) -> Vec<bool> {
    fn rec(
        k: usize,
        dets: &[&Detection],
        gts: &[&GroundTruth],
        order: &[usize],
        thr: f64,
        used: &mut [bool],
        key: &mut Vec<(f64, i64)>,
        pick: &mut Vec<Option<usize>>,
        best: &mut Option<(Vec<(f64, i64)>, Vec<Option<usize>>)>,
    ) {
        if k == order.len() {
            let better = best.as_ref().map_or(true, |(b, _)| key.as_slice().partial_cmp(b.as_slice()) == Some(Ordering::Greater));
            if better {
                *best = Some((key.clone(), pick.clone()));
            }
            return;
        }
        key.push((-1.0, 0));
        pick.push(None);
        rec(k + 1, dets, gts, order, thr, used, key, pick, best);
        key.pop();
        pick.pop();
        for g in 0..gts.len() {
            let o = trapeval::bbox::iou(&dets[order[k]].bbox, &gts[g].bbox);
            if !used[g] && o >= thr {
                used[g] = true;
                key.push((o, -(g as i64)));
                pick.push(Some(g));
                rec(k + 1, dets, gts, order, thr, used, key, pick, best);
                key.pop();
                pick.pop();
                used[g] = false;
            }
        }
    }
    let mut best = None;
    rec(0, dets, gts, order, thr, &mut vec![false; gts.len()], &mut Vec::new(), &mut Vec::new(), &mut best);
    let (_, pick) = best.expect("search always yields the empty assignment");
    let mut flags = vec![false; dets.len()];
    for (&d, p) in order.iter().zip(pick) {
        flags[d] = p.is_some();
    }
    flags
}

fn desc_conf_order(dets: &[&Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].confidence.partial_cmp(&dets[a].confidence).unwrap().then(a.cmp(&b)));
    order
}

/// AP of one category, evaluating max{precision : recall >= r} at each of
/// the 101 recall levels by scanning every row of the cumulative table.
pub fn oracle_ap(dets: &[Detection], gts: &[GroundTruth], category: u32, thr: f64) -> f64 {
    let d: Vec<&Detection> = dets.iter().filter(|d| d.category_id == category).collect();
    let g: Vec<&GroundTruth> = gts.iter().filter(|g| g.category_id == category).collect();
    assert!(!g.is_empty());
    let images: BTreeSet<&str> = d.iter().map(|x| x.image_id.as_str()).collect();
    let mut tp = vec![false; d.len()];
    for img in images {
        let di: Vec<usize> = (0..d.len()).filter(|&i| d[i].image_id == img).collect();
        let dd: Vec<&Detection> = di.iter().map(|&i| d[i]).collect();
        let gg: Vec<&GroundTruth> = g.iter().copied().filter(|x| x.image_id == img).collect();
        let flags = exhaustive_flags(&dd, &gg, &desc_conf_order(&dd), thr);
        for (k, &i) in di.iter().enumerate() {
            tp[i] = flags[k];
        }
    }
    let mut rows = Vec::new();
    let (mut ctp, mut cfp) = (0usize, 0usize);
    for i in desc_conf_order(&d) {
        if tp[i] {
            ctp += 1
        } else {
            cfp += 1
        }
        rows.push((ctp as f64 / g.len() as f64, ctp as f64 / (ctp + cfp) as f64));
    }
    let mut total = 0.0;
    for k in 0..=100 {
        let r = k as f64 / 100.0;
        let mut p: f64 = 0.0;
        for &(rec, prec) in &rows {
            if rec >= r {
                p = p.max(prec);
            }
        }
        total += p;
    }
    total / 101.0
}

/// mAP over categories that have ground truth.
pub fn oracle_map(dets: &[Detection], gts: &[GroundTruth], thr: f64) -> f64 {
    let cats: BTreeSet<u32> = gts.iter().map(|g| g.category_id).collect();
    cats.iter().map(|&c| oracle_ap(dets, gts, c, thr)).sum::<f64>() / cats.len() as f64
}
