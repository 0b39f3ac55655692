use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::bbox::{BoundingBox, Detection};

pub const DETECTIONS_CSV_HEADER: &str = "image_id,category_id,confidence,x1,y1,x2,y2";

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    image_id: String,
    category_id: u32,
    confidence: f64,
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

fn csv_error(e: &csv::Error) -> EvalError {
    EvalError::Csv {
        line: e.position().map_or(0, |p| p.line()),
        message: e.to_string(),
    }
}

/// Reads detections in the `image_id,category_id,confidence,x1,y1,x2,y2`
/// layout. An empty input yields no detections.
pub fn read_detections_csv<R: Read>(reader: R) -> Result<Vec<Detection>, EvalError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_error(&e))?.clone();
    if headers.is_empty() {
        return Ok(Vec::new());
    }
    let found: Vec<&str> = headers.iter().collect();
    if found.join(",") != DETECTIONS_CSV_HEADER {
        return Err(EvalError::Csv {
            line: 1,
            message: format!("expected header `{DETECTIONS_CSV_HEADER}`, found `{}`", found.join(",")),
        });
    }
    let mut out = Vec::new();
    let mut record = csv::StringRecord::new();
    while rdr.read_record(&mut record).map_err(|e| csv_error(&e))? {
        let line = record.position().map_or(0, |p| p.line());
        let row: Row = record.deserialize(Some(&headers)).map_err(|e| EvalError::Csv {
            line,
            message: e.to_string(),
        })?;
        let bbox = BoundingBox::new(row.x1, row.y1, row.x2, row.y2);
        if !bbox.is_finite() {
            return Err(EvalError::Csv {
                line,
                message: "non-finite box coordinate".into(),
            });
        }
        let det = Detection::new(row.image_id, row.category_id, row.confidence, bbox).map_err(|e| {
            EvalError::Csv {
                line,
                message: e.to_string(),
            }
        })?;
        out.push(det);
    }
    Ok(out)
}

pub fn write_detections_csv<W: Write>(out: W, dets: &[Detection]) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    let header: Vec<&str> = DETECTIONS_CSV_HEADER.split(',').collect();
    w.write_record(&header).map_err(|e| csv_error(&e))?;
    for d in dets {
        w.write_record(&[
            d.image_id.clone(),
            d.category_id.to_string(),
            format!("{:?}", d.confidence),
            format!("{:?}", d.bbox.x1),
            format!("{:?}", d.bbox.y1),
            format!("{:?}", d.bbox.x2),
            format!("{:?}", d.bbox.y2),
        ])
        .map_err(|e| csv_error(&e))?;
    }
    w.flush()?;
    Ok(())
}
