use std::io::{self, Write};

use super::matching::{DetectionStatus, GtStatus, MatchOutcome};
use super::CategorySet;

/// Counts indexed by (true category, predicted category). The extra last
/// row and column stand for background: the background column holds ground
/// truths no detection touched, the background row holds detections that
/// touched no ground truth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    categories: Vec<u32>,
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(categories: &CategorySet) -> Self {
        let categories: Vec<u32> = categories.ids().collect();
        let n = categories.len() + 1;
        Self {
            categories,
            counts: vec![vec![0; n]; n],
        }
    }

    /// Tallies the outcomes of per-image matching.
    pub fn from_outcomes<'a>(
        categories: &CategorySet,
        outcomes: impl IntoIterator<Item = &'a MatchOutcome>,
    ) -> Self {
        let mut m = Self::new(categories);
        for o in outcomes {
            m.add(o);
        }
        m
    }

    pub fn add(&mut self, outcome: &MatchOutcome) {
        let bg = self.background();
        for (status, &cat) in outcome.detections.iter().zip(&outcome.detection_categories) {
            let col = self.index(cat);
            match status {
                DetectionStatus::TruePositive { gt } | DetectionStatus::Misclassified { gt } => {
                    let row = self.index(outcome.gt_categories[*gt]);
                    self.counts[row][col] += 1;
                }
                DetectionStatus::Unmatched => self.counts[bg][col] += 1,
                DetectionStatus::Discarded => {}
            }
        }
        for (status, &cat) in outcome.ground_truths.iter().zip(&outcome.gt_categories) {
            if *status == GtStatus::Missed {
                let row = self.index(cat);
                self.counts[row][bg] += 1;
            }
        }
    }

    fn index(&self, category: u32) -> usize {
        self.categories
            .binary_search(&category)
            .expect("outcomes were validated against the category set")
    }

    pub fn categories(&self) -> &[u32] {
        &self.categories
    }

    /// Index of the background row and column.
    pub fn background(&self) -> usize {
        self.categories.len()
    }

    /// Count at (true, predicted); `None` addresses background.
    pub fn get(&self, truth: Option<u32>, predicted: Option<u32>) -> u64 {
        let r = truth.map_or(self.background(), |c| self.index(c));
        let c = predicted.map_or(self.background(), |c| self.index(c));
        self.counts[r][c]
    }

    pub fn rows(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let label = |i: usize| {
            if i == self.background() {
                "background".to_string()
            } else {
                self.categories[i].to_string()
            }
        };
        let n = self.counts.len();
        let header: Vec<String> = (0..n).map(label).collect();
        writeln!(out, "true\\predicted,{}", header.join(","))?;
        for (i, row) in self.counts.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(u64::to_string).collect();
            writeln!(out, "{},{}", label(i), cells.join(","))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bbox::{BoundingBox, Detection, GroundTruth};
    use crate::eval::{match_corpus, MatchConfig};

    fn d(img: &str, x: f64, cat: u32, conf: f64) -> Detection {
        Detection::new(img, cat, conf, BoundingBox::new(x, 0., x + 10., 10.)).unwrap()
    }

    fn g(img: &str, x: f64, cat: u32) -> GroundTruth {
        GroundTruth::new(img, cat, BoundingBox::new(x, 0., x + 10., 10.))
    }

    fn matrix(dets: &[Detection], gts: &[GroundTruth]) -> ConfusionMatrix {
        let cats = CategorySet::new([1, 2, 3]);
        let outcomes = match_corpus(dets, gts, &MatchConfig::default(), &cats).unwrap();
        ConfusionMatrix::from_outcomes(&cats, outcomes.iter().map(|o| &o.outcome))
    }

    #[test]
    fn perfect_corpus_is_diagonal() {
        let gts = [g("a", 0., 1), g("a", 50., 2), g("b", 0., 3)];
        let dets: Vec<Detection> = gts
            .iter()
            .map(|t| Detection::new(t.image_id.clone(), t.category_id, 1.0, t.bbox).unwrap())
            .collect();
        let m = matrix(&dets, &gts);
        for (i, row) in m.rows().iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert_eq!(v, u64::from(i == j && i < 3), "({i},{j})");
            }
        }
    }

    #[test]
    fn no_detections_fill_background_column() {
        let gts = [g("a", 0., 1), g("a", 50., 1), g("b", 0., 3)];
        let m = matrix(&[], &gts);
        assert_eq!(m.get(Some(1), None), 2);
        assert_eq!(m.get(Some(3), None), 1);
        assert_eq!(m.total(), 3);
    }

    #[test]
    fn mixed_corpus_hand_tally() {
        // a: cat-1 GT hit by cat-1 (TP), cat-2 GT hit by cat-3 (confusion),
        //    stray cat-2 detection (background row).
        // b: cat-3 GT missed, a low-confidence cat-3 detection discarded.
        // c: cat-1 GT hit by cat-1, second cat-1 detection on it is a duplicate.
        let gts = [g("a", 0., 1), g("a", 50., 2), g("b", 0., 3), g("c", 0., 1)];
        let dets = [
            d("a", 0., 1, 0.9),
            d("a", 51., 3, 0.8),
            d("a", 200., 2, 0.7),
            d("b", 0., 3, 0.1),
            d("c", 0., 1, 0.95),
            d("c", 1., 1, 0.6),
        ];
        let m = matrix(&dets, &gts);
        assert_eq!(m.get(Some(1), Some(1)), 2);
        assert_eq!(m.get(Some(2), Some(3)), 1);
        assert_eq!(m.get(None, Some(2)), 1);
        assert_eq!(m.get(None, Some(1)), 1);
        assert_eq!(m.get(Some(3), None), 1);
        assert_eq!(m.get(Some(2), None), 0);
        assert_eq!(m.total(), 6);
    }

    #[test]
    fn csv_layout() {
        let m = matrix(&[d("a", 0., 2, 0.9)], &[g("a", 0., 1)]);
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "true\\predicted,1,2,3,background");
        assert_eq!(lines[1], "1,0,1,0,0");
        assert_eq!(lines[4], "background,0,0,0,0");
    }
}
