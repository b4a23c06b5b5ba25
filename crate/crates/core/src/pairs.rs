//! Pair file: CSV with header `image_id,y1,x1,y2,x2,r`, 0-based row/col
//! coordinates, one relative-depth query per record.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::depth::Pixel;
use crate::error::{Error, Result};
use crate::loss::{PairQuery, Relation};

pub const PAIR_HEADER: [&str; 6] = ["image_id", "y1", "x1", "y2", "x2", "r"];

/// One query tied to the image it belongs to.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairRecord {
    pub image_id: String,
    pub query: PairQuery,
}

#[derive(Serialize, Deserialize)]
pub(crate) struct PairRow {
    pub image_id: String,
    pub y1: usize,
    pub x1: usize,
    pub y2: usize,
    pub x2: usize,
    pub r: i8,
}

impl From<&PairRecord> for PairRow {
    fn from(p: &PairRecord) -> Self {
        Self {
            image_id: p.image_id.clone(),
            y1: p.query.i.row,
            x1: p.query.i.col,
            y2: p.query.j.row,
            x2: p.query.j.col,
            r: p.query.r.sign(),
        }
    }
}

impl TryFrom<PairRow> for PairRecord {
    type Error = Error;

    fn try_from(row: PairRow) -> Result<Self> {
        if row.image_id.is_empty() {
            return Err(Error::Format("empty image_id".into()));
        }
        let query = PairQuery::new(
            Pixel::new(row.y1, row.x1),
            Pixel::new(row.y2, row.x2),
            Relation::try_from(row.r)?,
        )?;
        Ok(Self {
            image_id: row.image_id,
            query,
        })
    }
}

pub(crate) fn check_header(found: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    let found: Vec<&str> = found.iter().map(str::trim).collect();
    if found != expected {
        return Err(Error::Format(format!(
            "header {:?} does not match expected {:?}",
            found.join(","),
            expected.join(",")
        )));
    }
    Ok(())
}

pub(crate) fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

pub fn write_pairs<W: Write>(out: W, records: &[PairRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(PAIR_HEADER)?;
    for r in records {
        w.serialize(PairRow::from(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_pairs<R: Read>(input: R) -> Result<Vec<PairRecord>> {
    let mut rd = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    check_header(rd.headers()?, &PAIR_HEADER)?;
    let header = rd.headers()?.clone();
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let row: PairRow = rec.deserialize(Some(&header))?;
        out.push(
            PairRecord::try_from(row)
                .map_err(|e| Error::Format(format!("pair file line {line}: {e}")))?,
        );
    }
    Ok(out)
}

pub fn save_pairs(path: impl AsRef<Path>, records: &[PairRecord]) -> Result<()> {
    write_pairs(BufWriter::new(File::create(path)?), records)
}

pub fn load_pairs(path: impl AsRef<Path>) -> Result<Vec<PairRecord>> {
    read_pairs(BufReader::new(File::open(path)?))
}

/// Queries per image, in file order within each image.
pub fn group_by_image(records: &[PairRecord]) -> BTreeMap<String, Vec<PairQuery>> {
    let mut out: BTreeMap<String, Vec<PairQuery>> = BTreeMap::new();
    for r in records {
        out.entry(r.image_id.clone()).or_default().push(r.query);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(id: &str, y1: usize, x1: usize, y2: usize, x2: usize, r: Relation) -> PairRecord {
        PairRecord {
            image_id: id.into(),
            query: PairQuery::new(Pixel::new(y1, x1), Pixel::new(y2, x2), r).unwrap(),
        }
    }

    #[test]
    fn writes_expected_text() {
        let mut buf = Vec::new();
        write_pairs(
            &mut buf,
            &[
                rec("img_0001", 3, 4, 5, 6, Relation::Closer),
                rec("img_0002", 0, 1, 0, 8, Relation::Equal),
            ],
        )
        .unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "image_id,y1,x1,y2,x2,r\nimg_0001,3,4,5,6,1\nimg_0002,0,1,0,8,0\n"
        );
    }

    #[test]
    fn empty_file_has_header_only() {
        let mut buf = Vec::new();
        write_pairs(&mut buf, &[]).unwrap();
        assert_eq!(buf, b"image_id,y1,x1,y2,x2,r\n");
        assert!(read_pairs(&buf[..]).unwrap().is_empty());
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(read_pairs(&b"id,a,b,c,d,e\n"[..]).is_err());
        assert!(read_pairs(&b"image_id,y1,x1,y2,x2,r\na,1,1,1,1,1\n"[..]).is_err());
        let err = read_pairs(&b"image_id,y1,x1,y2,x2,r\na,1,2,3,4,1\nb,1,2,3,4,7\n"[..])
            .unwrap_err()
            .to_string();
        assert!(err.contains("line 3"), "{err}");
        assert!(read_pairs(&b"image_id,y1,x1,y2,x2,r\na,-1,2,3,4,1\n"[..]).is_err());
    }

    #[test]
    fn groups_in_file_order() {
        let records = vec![
            rec("b", 0, 0, 0, 1, Relation::Closer),
            rec("a", 0, 0, 1, 0, Relation::Farther),
            rec("b", 1, 1, 0, 1, Relation::Equal),
        ];
        let g = group_by_image(&records);
        assert_eq!(g.keys().collect::<Vec<_>>(), ["a", "b"]);
        assert_eq!(g["b"], vec![records[0].query, records[2].query]);
    }

    proptest! {
        #[test]
        fn round_trip(rows in prop::collection::vec(
            ("[a-z0-9_]{1,12}", 0usize..500, 0usize..500, 0usize..500, 0usize..500, -1i8..=1),
            0..40,
        )) {
            let records: Vec<PairRecord> = rows
                .into_iter()
                .filter(|(_, y1, x1, y2, x2, _)| (y1, x1) != (y2, x2))
                .map(|(id, y1, x1, y2, x2, r)| rec(&id, y1, x1, y2, x2, Relation::try_from(r).unwrap()))
                .collect();
            let mut buf = Vec::new();
            write_pairs(&mut buf, &records).unwrap();
            prop_assert_eq!(read_pairs(&buf[..]).unwrap(), records);
        }
    }
}
