//! Text dump of a count tensor: a `#dims V A T` header, then one
//! `i j a t count` line per nonzero cell in sorted key order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use bptd_core::events::TensorDims;
use bptd_core::{CountTensor, EventToken, Vocabulary};

use crate::error::{AppError, Result};

pub fn write_tensor<W: Write>(mut w: W, tensor: &CountTensor) -> Result<()> {
    let d = tensor.dims();
    writeln!(w, "#dims\t{}\t{}\t{}", d.countries, d.actions, d.steps)?;
    for (e, n) in tensor.entries() {
        writeln!(w, "{}\t{}\t{}\t{}\t{}", e.sender, e.receiver, e.action, e.time, n)?;
    }
    w.flush()?;
    Ok(())
}

fn field<T: std::str::FromStr>(s: Option<&str>, lineno: usize) -> Result<T> {
    s.and_then(|x| x.trim().parse().ok())
        .ok_or_else(|| AppError::Data(format!("tensor dump line {lineno}: bad or missing field")))
}

pub fn read_tensor<R: BufRead>(r: R) -> Result<CountTensor> {
    let mut tensor: Option<CountTensor> = None;
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        let lineno = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("#dims") {
            let mut f = rest.split_whitespace();
            let dims = TensorDims::new(field(f.next(), lineno)?, field(f.next(), lineno)?, field(f.next(), lineno)?);
            tensor = Some(CountTensor::new(dims));
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let t = tensor
            .as_mut()
            .ok_or_else(|| AppError::Data("tensor dump lacks a #dims header".into()))?;
        let mut f = line.split('\t');
        let cell = EventToken::new(
            field(f.next(), lineno)?,
            field(f.next(), lineno)?,
            field(f.next(), lineno)?,
            field(f.next(), lineno)?,
        );
        let count: u64 = field(f.next(), lineno)?;
        t.add(cell, count)
            .map_err(|e| AppError::Data(format!("tensor dump line {lineno}: {e}")))?;
    }
    tensor.ok_or_else(|| AppError::Data("tensor dump lacks a #dims header".into()))
}

pub fn save_tensor(path: &Path, tensor: &CountTensor) -> Result<()> {
    let f = File::create(path).map_err(AppError::io(format!("creating {}", path.display())))?;
    write_tensor(BufWriter::new(f), tensor)
}

pub fn load_tensor(path: &Path) -> Result<CountTensor> {
    let f = File::open(path).map_err(AppError::io(format!("opening {}", path.display())))?;
    read_tensor(BufReader::new(f))
}

/// One label per line, in index order.
pub fn save_vocabulary(path: &Path, vocab: &Vocabulary) -> Result<()> {
    let f = File::create(path).map_err(AppError::io(format!("creating {}", path.display())))?;
    let mut w = BufWriter::new(f);
    for l in vocab.labels() {
        writeln!(w, "{l}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_vocabulary(path: &Path) -> Result<Vocabulary> {
    let f = File::open(path).map_err(AppError::io(format!("opening {}", path.display())))?;
    let labels: Vec<String> = BufReader::new(f)
        .lines()
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .filter(|l| !l.is_empty())
        .collect();
    Vocabulary::from_labels(labels).map_err(|e| AppError::Data(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_roundtrip() {
        let mut t = CountTensor::new(TensorDims::new(3, 2, 4));
        t.add(EventToken::new(2, 0, 1, 3), 5).unwrap();
        t.add(EventToken::new(0, 1, 0, 0), 2).unwrap();
        let mut buf = Vec::new();
        write_tensor(&mut buf, &t).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text, "#dims\t3\t2\t4\n0\t1\t0\t0\t2\n2\t0\t1\t3\t5\n");
        assert_eq!(read_tensor(&buf[..]).unwrap(), t);
    }

    #[test]
    fn rejects_bad_dumps() {
        assert!(read_tensor("0\t1\t0\t0\t1\n".as_bytes()).is_err());
        assert!(read_tensor("#dims\t2\t1\t1\n0\t5\t0\t0\t1\n".as_bytes()).is_err());
        assert!(read_tensor("#dims\t2\t1\t1\n0\t1\t0\n".as_bytes()).is_err());
        assert!(read_tensor("".as_bytes()).is_err());
    }
}
