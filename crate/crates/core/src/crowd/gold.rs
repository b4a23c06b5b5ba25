//! Gold bank: a pair file with a trailing `verified` column (1 or 0).
//! Only verified rows become gold tasks; `r` is the verified answer.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::pairs::{check_header, line_of, PairRecord, PairRow};

pub const GOLD_HEADER: [&str; 7] = ["image_id", "y1", "x1", "y2", "x2", "r", "verified"];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GoldRecord {
    pub pair: PairRecord,
    pub verified: bool,
}

pub fn write_gold_bank<W: Write>(out: W, records: &[GoldRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(GOLD_HEADER)?;
    for r in records {
        let p = PairRow::from(&r.pair);
        w.write_record([
            p.image_id,
            p.y1.to_string(),
            p.x1.to_string(),
            p.y2.to_string(),
            p.x2.to_string(),
            p.r.to_string(),
            u8::from(r.verified).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_gold_bank<R: Read>(input: R) -> Result<Vec<GoldRecord>> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    check_header(rd.headers()?, &GOLD_HEADER)?;
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let at = |e: Error| Error::Format(format!("gold bank line {line}: {e}"));
        let field = |k: usize| rec.get(k).unwrap_or_default();
        let num = |k: usize| {
            field(k)
                .parse::<usize>()
                .map_err(|e| at(Error::Format(format!("{}: {e}", GOLD_HEADER[k]))))
        };
        let row = PairRow {
            image_id: field(0).to_string(),
            y1: num(1)?,
            x1: num(2)?,
            y2: num(3)?,
            x2: num(4)?,
            r: field(5)
                .parse()
                .map_err(|e| at(Error::Format(format!("r: {e}"))))?,
        };
        let verified = match field(6) {
            "1" => true,
            "0" => false,
            other => return Err(at(Error::Format(format!("verified must be 0 or 1, got {other:?}")))),
        };
        out.push(GoldRecord {
            pair: PairRecord::try_from(row).map_err(at)?,
            verified,
        });
    }
    Ok(out)
}

pub fn save_gold_bank(path: impl AsRef<Path>, records: &[GoldRecord]) -> Result<()> {
    write_gold_bank(BufWriter::new(File::create(path)?), records)
}

pub fn load_gold_bank(path: impl AsRef<Path>) -> Result<Vec<GoldRecord>> {
    read_gold_bank(BufReader::new(File::open(path)?))
}
