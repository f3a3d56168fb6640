//! Shared CSV reading: exact header check and error mapping.

use std::fs::File;
use std::path::Path;

use crate::error::{Error, Result};

pub(crate) fn map_err(what: &'static str, path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        if let csv::ErrorKind::Io(io) = e.into_kind() {
            return Error::io(path, io);
        }
        unreachable!("is_io_error implies an Io kind");
    }
    Error::format(what, e.to_string())
}

/// Opens `path` with whitespace trimming and requires the header to be `expected`.
pub(crate) fn open(path: &Path, what: &'static str, expected: &[&str]) -> Result<csv::Reader<File>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| map_err(what, path, e))?;
    let header = rdr.headers().map_err(|e| map_err(what, path, e))?;
    if !header.iter().eq(expected.iter().copied()) {
        return Err(Error::format(what, format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
    }
    Ok(rdr)
}
