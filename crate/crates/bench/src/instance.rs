//! Binary instance files for exact replay.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! "RISR"  u16 version  u64 p1  u64 p2  u64 n  u64 r  u8 variant
//! payload   variant 0: n matrices p1×p2, row-major f64
//!           variant 1: n index pairs (u64 row, u64 col)
//!           variant 2: n vectors of length p1 (p1 = p2), f64
//! y         n f64
//! u8 has_truth, then p1×p2 row-major f64 if 1
//! ```

use std::fs;
use std::path::Path;

use risro_core::{DenseSensing, EntrySampling, Mat, ProblemInstance, RankOneSensing, SensingOperator, Vector};

use crate::error::{BenchError, Result};

pub const MAGIC: &[u8; 4] = b"RISR";
pub const VERSION: u16 = 1;

const TAG_DENSE: u8 = 0;
const TAG_ENTRIES: u8 = 1;
const TAG_RANK_ONE: u8 = 2;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u64(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u64).to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn row_major(&mut self, m: &Mat) {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                self.f64(m[(i, j)]);
            }
        }
    }
}

pub fn encode(prob: &ProblemInstance) -> Vec<u8> {
    let (p1, p2, n) = prob.dims();
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.0.extend_from_slice(&VERSION.to_le_bytes());
    for v in [p1, p2, n, prob.rank()] {
        w.u64(v);
    }
    match prob.operator() {
        SensingOperator::Dense(d) => {
            w.u8(TAG_DENSE);
            for i in 0..n {
                w.row_major(&d.matrix(i).into_owned());
            }
        }
        SensingOperator::EntrySampling(e) => {
            w.u8(TAG_ENTRIES);
            for (i, j) in e.indices() {
                w.u64(i);
                w.u64(j);
            }
        }
        SensingOperator::SymmetricRankOne(s) => {
            w.u8(TAG_RANK_ONE);
            w.row_major(s.vectors());
        }
    }
    for v in prob.y().iter() {
        w.f64(*v);
    }
    match prob.truth() {
        Some(t) => {
            w.u8(1);
            w.row_major(t);
        }
        None => w.u8(0),
    }
    w.0
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, len: usize, field: &str) -> Result<&[u8]> {
        let end = self.pos.checked_add(len).filter(|e| *e <= self.buf.len()).ok_or_else(|| {
            BenchError::Data(format!(
                "file ends at byte {} while reading {field} ({len} bytes needed at offset {})",
                self.buf.len(),
                self.pos
            ))
        })?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u8(&mut self, field: &str) -> Result<u8> {
        Ok(self.take(1, field)?[0])
    }
    fn u64(&mut self, field: &str) -> Result<usize> {
        let b = self.take(8, field)?;
        let v = u64::from_le_bytes(b.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| BenchError::Data(format!("{field} = {v} does not fit in memory")))
    }
    fn f64(&mut self, field: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, field)?.try_into().expect("8 bytes")))
    }
    fn row_major(&mut self, rows: usize, cols: usize, field: &str) -> Result<Mat> {
        self.expect_remaining(rows.saturating_mul(cols).saturating_mul(8), field)?;
        let mut m = Mat::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = self.f64(field)?;
            }
        }
        Ok(m)
    }
    /// Fails early, before allocating, when a declared size cannot fit.
    fn expect_remaining(&self, len: usize, field: &str) -> Result<()> {
        if self.buf.len() - self.pos < len {
            return Err(BenchError::Data(format!(
                "{field} needs {len} bytes at offset {} but only {} remain",
                self.pos,
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

pub fn decode(buf: &[u8]) -> Result<ProblemInstance> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(BenchError::Data("bad magic bytes, expected \"RISR\"".into()));
    }
    let version = u16::from_le_bytes(r.take(2, "version")?.try_into().expect("2 bytes"));
    if version != VERSION {
        return Err(BenchError::Data(format!("unsupported version {version}")));
    }
    let p1 = r.u64("p1")?;
    let p2 = r.u64("p2")?;
    let n = r.u64("n")?;
    let rank = r.u64("r")?;
    let tag = r.u8("variant")?;
    let op: SensingOperator = match tag {
        TAG_DENSE => {
            let size = p1.checked_mul(p2).ok_or_else(|| BenchError::Data("p1·p2 overflows".into()))?;
            r.expect_remaining(size.saturating_mul(n).saturating_mul(8), "dense payload")?;
            let mut stacked = Mat::zeros(size, n);
            for i in 0..n {
                let m = r.row_major(p1, p2, "dense payload")?;
                stacked.column_mut(i).copy_from_slice(m.as_slice());
            }
            DenseSensing::from_stacked(p1, p2, stacked)?.into()
        }
        TAG_ENTRIES => {
            r.expect_remaining(n.saturating_mul(16), "entry payload")?;
            let mut idx = Vec::with_capacity(n);
            for _ in 0..n {
                idx.push((r.u64("entry row")?, r.u64("entry column")?));
            }
            EntrySampling::new(p1, p2, &idx).map_err(|e| BenchError::Data(e.to_string()))?.into()
        }
        TAG_RANK_ONE => {
            if p1 != p2 {
                return Err(BenchError::Data(format!("rank-one variant needs p1 = p2, got {p1} and {p2}")));
            }
            RankOneSensing::new(r.row_major(n, p1, "rank-one payload")?).into()
        }
        other => return Err(BenchError::Data(format!("unknown variant tag {other}"))),
    };
    r.expect_remaining(n.saturating_mul(8), "y")?;
    let mut y = Vector::zeros(n);
    for k in 0..n {
        y[k] = r.f64("y")?;
    }
    let mut prob = ProblemInstance::new(op, y, rank).map_err(|e| BenchError::Data(e.to_string()))?;
    match r.u8("truth flag")? {
        0 => {}
        1 => {
            let t = r.row_major(p1, p2, "truth")?;
            prob = prob.with_truth(t).map_err(|e| BenchError::Data(e.to_string()))?;
        }
        other => return Err(BenchError::Data(format!("truth flag must be 0 or 1, got {other}"))),
    }
    if r.pos != buf.len() {
        return Err(BenchError::Data(format!("{} trailing bytes after offset {}", buf.len() - r.pos, r.pos)));
    }
    Ok(prob)
}

pub fn dump_instance(prob: &ProblemInstance, path: &Path) -> Result<()> {
    fs::write(path, encode(prob)).map_err(|e| BenchError::io(path, e))
}

pub fn load_instance(path: &Path) -> Result<ProblemInstance> {
    let buf = fs::read(path).map_err(|e| BenchError::io(path, e))?;
    decode(&buf).map_err(|e| match e {
        BenchError::Data(msg) => BenchError::Data(format!("{}: {msg}", path.display())),
        other => other,
    })
}
