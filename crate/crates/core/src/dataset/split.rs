//! Cis/trans location split: whole locations are held out for the trans
//! sets, and the remaining (cis) locations are divided by capture day.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use chrono::Datelike;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::coco::ImageRecord;
use super::DatasetError;

/// Which day number decides odd versus even.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DayBasis {
    #[default]
    DayOfMonth,
    DayOfYear,
}

impl DayBasis {
    pub fn is_odd(self, record: &ImageRecord) -> bool {
        let day = match self {
            Self::DayOfMonth => record.date.day(),
            Self::DayOfYear => record.date.ordinal(),
        };
        day % 2 == 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitConfig {
    pub trans_test_locations: Vec<u32>,
    pub trans_val_location: u32,
    pub cis_val_fraction: f64,
    pub seed: u64,
    pub day_basis: DayBasis,
}

pub const TRANS_TEST_LOCATIONS: usize = 9;

impl SplitConfig {
    pub fn new(trans_test_locations: Vec<u32>, trans_val_location: u32, seed: u64) -> Self {
        Self {
            trans_test_locations,
            trans_val_location,
            cis_val_fraction: 0.05,
            seed,
            day_basis: DayBasis::default(),
        }
    }

    /// Picks 9 trans-test locations and one trans-val location at random.
    pub fn choose(locations: &[u32], seed: u64) -> Result<Self, DatasetError> {
        let mut pool: Vec<u32> = locations.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
        if pool.len() < TRANS_TEST_LOCATIONS + 1 {
            return Err(DatasetError::TooFewLocations {
                found: pool.len(),
                required: TRANS_TEST_LOCATIONS + 1,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        pool.shuffle(&mut rng);
        let mut test = pool[..TRANS_TEST_LOCATIONS].to_vec();
        test.sort_unstable();
        Ok(Self::new(test, pool[TRANS_TEST_LOCATIONS], seed))
    }

    fn validate(&self) -> Result<(), DatasetError> {
        let bad = |m: String| Err(DatasetError::InvalidSplitConfig(m));
        if !(0.0..=1.0).contains(&self.cis_val_fraction) {
            return bad(format!("cis-val fraction {} is outside [0, 1]", self.cis_val_fraction));
        }
        let set: BTreeSet<u32> = self.trans_test_locations.iter().copied().collect();
        if set.len() != self.trans_test_locations.len() {
            return bad("trans-test locations repeat".into());
        }
        if set.contains(&self.trans_val_location) {
            return bad(format!(
                "location {} is both trans-val and trans-test",
                self.trans_val_location
            ));
        }
        Ok(())
    }

    fn trans_locations(&self) -> BTreeSet<u32> {
        let mut s: BTreeSet<u32> = self.trans_test_locations.iter().copied().collect();
        s.insert(self.trans_val_location);
        s
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SplitResult {
    pub train: Vec<ImageRecord>,
    pub cis_val: Vec<ImageRecord>,
    pub cis_test: Vec<ImageRecord>,
    pub trans_val: Vec<ImageRecord>,
    pub trans_test: Vec<ImageRecord>,
}

pub const SPLIT_NAMES: [&str; 5] = ["train", "cis_val", "cis_test", "trans_val", "trans_test"];

impl SplitResult {
    pub fn parts(&self) -> [(&'static str, &[ImageRecord]); 5] {
        [
            (SPLIT_NAMES[0], &self.train),
            (SPLIT_NAMES[1], &self.cis_val),
            (SPLIT_NAMES[2], &self.cis_test),
            (SPLIT_NAMES[3], &self.trans_val),
            (SPLIT_NAMES[4], &self.trans_test),
        ]
    }

    pub fn counts(&self) -> [usize; 5] {
        self.parts().map(|(_, r)| r.len())
    }

    pub fn total(&self) -> usize {
        self.counts().iter().sum()
    }

    /// Image counts per location, one column per split.
    pub fn per_location(&self) -> BTreeMap<u32, [usize; 5]> {
        let mut out: BTreeMap<u32, [usize; 5]> = BTreeMap::new();
        for (k, (_, records)) in self.parts().iter().enumerate() {
            for r in records.iter() {
                out.entry(r.location).or_default()[k] += 1;
            }
        }
        out
    }

    /// Every broken invariant, as a readable message. Empty means valid.
    pub fn violations(&self, cfg: &SplitConfig) -> Vec<String> {
        let mut out = Vec::new();
        let locs = |rs: &[&[ImageRecord]]| -> BTreeSet<u32> {
            rs.iter().flat_map(|r| r.iter().map(|x| x.location)).collect()
        };
        let cis = locs(&[&self.train, &self.cis_val, &self.cis_test]);
        let trans = locs(&[&self.trans_val, &self.trans_test]);
        for l in cis.intersection(&trans) {
            out.push(format!("location {l} appears in both cis and trans splits"));
        }
        let val_locs = locs(&[&self.trans_val]);
        if val_locs.iter().any(|&l| l != cfg.trans_val_location) {
            out.push(format!("trans_val holds locations {val_locs:?}"));
        }
        let test_allowed: BTreeSet<u32> = cfg.trans_test_locations.iter().copied().collect();
        for l in locs(&[&self.trans_test]).difference(&test_allowed) {
            out.push(format!("trans_test holds non-test location {l}"));
        }
        for (name, records, odd) in [
            ("cis_test", &self.cis_test, true),
            ("train", &self.train, false),
            ("cis_val", &self.cis_val, false),
        ] {
            for r in records {
                if cfg.day_basis.is_odd(r) != odd {
                    out.push(format!("{name} image {} was taken on the wrong day parity ({})", r.image_id, r.date));
                }
            }
        }
        let mut seen = HashSet::new();
        for (name, records) in self.parts() {
            for r in records {
                if !seen.insert(r.image_id.as_str()) {
                    out.push(format!("image {} appears twice (again in {name})", r.image_id));
                }
            }
        }
        let train_seqs: HashSet<&str> = self.train.iter().filter_map(|r| r.seq_id.as_deref()).collect();
        for r in &self.cis_val {
            if let Some(s) = r.seq_id.as_deref() {
                if train_seqs.contains(s) {
                    out.push(format!("sequence {s} is split between train and cis_val"));
                }
            }
        }
        out
    }
}

/// Applies the split protocol. Output lists keep input order.
pub fn split_cis_trans(records: &[ImageRecord], cfg: &SplitConfig) -> Result<SplitResult, DatasetError> {
    cfg.validate()?;
    let present: BTreeSet<u32> = records.iter().map(|r| r.location).collect();
    let required = cfg.trans_test_locations.len() + 1;
    if present.len() < required {
        return Err(DatasetError::TooFewLocations {
            found: present.len(),
            required,
        });
    }
    let trans = cfg.trans_locations();
    if let Some(l) = trans.iter().find(|l| !present.contains(l)) {
        return Err(DatasetError::InvalidSplitConfig(format!("location {l} has no images")));
    }

    let mut out = SplitResult::default();
    let mut even = Vec::new();
    for (i, r) in records.iter().enumerate() {
        if r.location == cfg.trans_val_location {
            out.trans_val.push(r.clone());
        } else if trans.contains(&r.location) {
            out.trans_test.push(r.clone());
        } else if cfg.day_basis.is_odd(r) {
            out.cis_test.push(r.clone());
        } else {
            even.push(i);
        }
    }

    // whole sequences go to validation so no burst straddles train and val
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for &i in &even {
        let key = records[i].seq_id.as_deref().unwrap_or(&records[i].image_id);
        groups.entry(key).or_default().push(i);
    }
    let mut groups: Vec<Vec<usize>> = groups.into_values().collect();
    groups.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let target = (cfg.cis_val_fraction * even.len() as f64).round() as usize;
    let mut to_val = HashSet::new();
    for g in groups {
        if to_val.len() >= target {
            break;
        }
        to_val.extend(g);
    }
    for i in even {
        if to_val.contains(&i) {
            out.cis_val.push(records[i].clone());
        } else {
            out.train.push(records[i].clone());
        }
    }
    Ok(out)
}

/// Image counts per split after empty filtering, as reported for the real
/// camera-trap subset. There is no trans-val figure.
pub const REFERENCE_COUNTS: [(&str, usize); 4] =
    [("train", 12099), ("cis_val", 1665), ("cis_test", 12691), ("trans_test", 18033)];

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceComparison {
    /// `(split, expected, found)`.
    pub rows: Vec<(&'static str, usize, usize)>,
    pub per_location: BTreeMap<u32, [usize; 5]>,
}

impl ReferenceComparison {
    pub fn new(result: &SplitResult) -> Self {
        let counts = result.counts();
        let rows = REFERENCE_COUNTS
            .iter()
            .map(|&(name, expected)| {
                let k = SPLIT_NAMES.iter().position(|n| *n == name).expect("reference names are split names");
                (name, expected, counts[k])
            })
            .collect();
        Self {
            rows,
            per_location: result.per_location(),
        }
    }

    pub fn matches(&self) -> bool {
        self.rows.iter().all(|(_, e, f)| e == f)
    }
}

impl fmt::Display for ReferenceComparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "split,expected,found,diff")?;
        for (name, e, n) in &self.rows {
            writeln!(f, "{name},{e},{n},{}", *n as i64 - *e as i64)?;
        }
        if !self.matches() {
            writeln!(f, "location,{}", SPLIT_NAMES.join(","))?;
            for (loc, c) in &self.per_location {
                let cells: Vec<String> = c.iter().map(usize::to_string).collect();
                writeln!(f, "{loc},{}", cells.join(","))?;
            }
        }
        Ok(())
    }
}
