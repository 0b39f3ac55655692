//! COCO-style annotation files with the camera-trap `location` and `date`
//! image fields.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::DatasetError;
use crate::bbox::{BoundingBox, GroundTruth};
use crate::eval::CategorySet;

/// One image and the boxes drawn on it.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub image_id: String,
    pub location: u32,
    pub date: NaiveDate,
    pub width: u32,
    pub height: u32,
    pub file_name: Option<String>,
    /// Burst the image belongs to, when the metadata has one.
    pub seq_id: Option<String>,
    pub annotations: Vec<GroundTruth>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryInfo {
    pub id: u32,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationSet {
    pub images: Vec<ImageRecord>,
    pub categories: Vec<CategoryInfo>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Id {
    Num(u64),
    Str(String),
}

impl Id {
    fn into_string(self) -> String {
        match self {
            Id::Num(n) => n.to_string(),
            Id::Str(s) => s,
        }
    }
}

#[derive(Debug, Deserialize)]
struct RawImage {
    id: Id,
    width: u32,
    height: u32,
    location: Id,
    #[serde(alias = "date_captured")]
    date: String,
    #[serde(default)]
    file_name: Option<String>,
    #[serde(default)]
    seq_id: Option<Id>,
}

#[derive(Debug, Deserialize)]
struct RawAnnotation {
    image_id: Id,
    category_id: u32,
    #[serde(default)]
    bbox: Option<[f64; 4]>,
}

#[derive(Debug, Deserialize)]
struct RawFile {
    images: Vec<RawImage>,
    #[serde(default)]
    annotations: Vec<RawAnnotation>,
    categories: Vec<CategoryInfo>,
}

#[derive(Serialize)]
struct OutImage<'a> {
    id: &'a str,
    width: u32,
    height: u32,
    location: u32,
    date: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    file_name: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seq_id: Option<&'a str>,
}

#[derive(Serialize)]
struct OutAnnotation<'a> {
    id: usize,
    image_id: &'a str,
    category_id: u32,
    bbox: [f64; 4],
}

#[derive(Serialize)]
struct OutFile<'a> {
    images: Vec<OutImage<'a>>,
    annotations: Vec<OutAnnotation<'a>>,
    categories: &'a [CategoryInfo],
}

/// Accepts `YYYY-MM-DD`, optionally followed by a time of day.
fn parse_date(s: &str) -> Option<NaiveDate> {
    let head = s.get(..10)?;
    NaiveDate::parse_from_str(head, "%Y-%m-%d").ok()
}

impl AnnotationSet {
    pub fn parse_str(text: &str) -> Result<Self, DatasetError> {
        let raw: RawFile = serde_json::from_str(text).map_err(|e| DatasetError::Json {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        let known: CategorySet = raw.categories.iter().map(|c| c.id).collect();
        if known.len() != raw.categories.len() {
            return Err(DatasetError::Invalid {
                element: "categories".into(),
                message: "duplicate category id".into(),
            });
        }
        let mut images = Vec::with_capacity(raw.images.len());
        let mut index = HashMap::new();
        for (i, im) in raw.images.into_iter().enumerate() {
            let image_id = im.id.into_string();
            let element = format!("images[{i}] ({image_id})");
            let location = match im.location {
                Id::Num(n) => u32::try_from(n).ok(),
                Id::Str(s) => s.trim().parse().ok(),
            }
            .ok_or_else(|| DatasetError::Invalid {
                element: element.clone(),
                message: "location is not a non-negative integer".into(),
            })?;
            let date = parse_date(&im.date).ok_or_else(|| DatasetError::Invalid {
                element: element.clone(),
                message: format!("date `{}` is not YYYY-MM-DD", im.date),
            })?;
            if index.insert(image_id.clone(), images.len()).is_some() {
                return Err(DatasetError::Invalid {
                    element,
                    message: "duplicate image id".into(),
                });
            }
            images.push(ImageRecord {
                image_id,
                location,
                date,
                width: im.width,
                height: im.height,
                file_name: im.file_name,
                seq_id: im.seq_id.map(Id::into_string),
                annotations: Vec::new(),
            });
        }
        for (i, a) in raw.annotations.into_iter().enumerate() {
            let image_id = a.image_id.into_string();
            let element = format!("annotations[{i}]");
            let &slot = index.get(&image_id).ok_or_else(|| DatasetError::Invalid {
                element: element.clone(),
                message: format!("refers to unknown image {image_id}"),
            })?;
            if !known.contains(a.category_id) {
                return Err(DatasetError::Invalid {
                    element,
                    message: format!("unknown category {}", a.category_id),
                });
            }
            // image-level labels without a box carry no geometry
            let Some([x, y, w, h]) = a.bbox else { continue };
            if ![x, y, w, h].iter().all(|v| v.is_finite()) || w < 0.0 || h < 0.0 {
                return Err(DatasetError::Invalid {
                    element,
                    message: format!("bad bbox [{x}, {y}, {w}, {h}]"),
                });
            }
            let rec = &mut images[slot];
            let bbox = BoundingBox::new(x, y, x + w, y + h).clamp_to(f64::from(rec.width), f64::from(rec.height));
            rec.annotations.push(GroundTruth::new(image_id, a.category_id, bbox));
        }
        Ok(Self {
            images,
            categories: raw.categories,
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        Self::parse_str(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        let images = self
            .images
            .iter()
            .map(|r| OutImage {
                id: &r.image_id,
                width: r.width,
                height: r.height,
                location: r.location,
                date: r.date.format("%Y-%m-%d").to_string(),
                file_name: r.file_name.as_deref(),
                seq_id: r.seq_id.as_deref(),
            })
            .collect();
        let annotations = self
            .images
            .iter()
            .flat_map(|r| &r.annotations)
            .enumerate()
            .map(|(i, g)| OutAnnotation {
                id: i + 1,
                image_id: &g.image_id,
                category_id: g.category_id,
                bbox: [g.bbox.x1, g.bbox.y1, g.bbox.width(), g.bbox.height()],
            })
            .collect();
        let file = OutFile {
            images,
            annotations,
            categories: &self.categories,
        };
        serde_json::to_string_pretty(&file).expect("annotation structs always serialize")
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), DatasetError> {
        let mut f = fs::File::create(path)?;
        f.write_all(self.to_json().as_bytes())?;
        f.write_all(b"\n")?;
        Ok(())
    }

    /// Same categories, different images.
    pub fn with_images(&self, images: Vec<ImageRecord>) -> Self {
        Self {
            images,
            categories: self.categories.clone(),
        }
    }

    pub fn category_set(&self) -> CategorySet {
        self.categories.iter().map(|c| c.id).collect()
    }

    /// Ids of categories named `empty`.
    pub fn empty_categories(&self) -> Vec<u32> {
        self.categories
            .iter()
            .filter(|c| c.name.eq_ignore_ascii_case("empty"))
            .map(|c| c.id)
            .collect()
    }

    /// Drops images without a box of a real category.
    pub fn filter_empty(&self) -> Self {
        self.with_images(filter_empty(&self.images, &self.empty_categories()))
    }

    pub fn ground_truths(&self) -> Vec<GroundTruth> {
        self.images.iter().flat_map(|r| r.annotations.iter().cloned()).collect()
    }

    pub fn locations(&self) -> Vec<u32> {
        let set: std::collections::BTreeSet<u32> = self.images.iter().map(|r| r.location).collect();
        set.into_iter().collect()
    }
}

/// Keeps records with at least one annotation outside `empty_categories`.
pub fn filter_empty(records: &[ImageRecord], empty_categories: &[u32]) -> Vec<ImageRecord> {
    let empty: HashSet<u32> = empty_categories.iter().copied().collect();
    records
        .iter()
        .filter(|r| r.annotations.iter().any(|a| !empty.contains(&a.category_id)))
        .cloned()
        .collect()
}

/// Number of annotations per category.
pub fn class_distribution(records: &[ImageRecord]) -> BTreeMap<u32, usize> {
    let mut out = BTreeMap::new();
    for a in records.iter().flat_map(|r| &r.annotations) {
        *out.entry(a.category_id).or_insert(0) += 1;
    }
    out
}

pub const DISTRIBUTION_CSV_HEADER: &str = "category_id,name,count";

pub fn write_distribution_csv<W: Write>(
    dist: &BTreeMap<u32, usize>,
    categories: &[CategoryInfo],
    out: W,
) -> Result<(), DatasetError> {
    let names: HashMap<u32, &str> = categories.iter().map(|c| (c.id, c.name.as_str())).collect();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(DISTRIBUTION_CSV_HEADER.split(','))?;
    for (id, count) in dist {
        w.write_record([id.to_string(), names.get(id).unwrap_or(&"").to_string(), count.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
