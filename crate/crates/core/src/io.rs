//! Binary containers for rasters, series and ESD estimates, plus a
//! long-form text table for plotting.
//!
//! All binary formats start with a 16-byte magic string followed by a
//! little-endian header of 64-bit fields. Files are written to a temporary
//! sibling and renamed into place.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::obs::SpikeRaster;
use crate::series::TimeSeries;
use crate::taper::{EsdSeries, FreqGrid};

pub const RASTER_MAGIC: &[u8; 16] = b"PPMT-RASTER\0\0\0\0\x01";
pub const SERIES_MAGIC: &[u8; 16] = b"PPMT-SERIES\0\0\0\0\x01";
pub const ESD_MAGIC: &[u8; 16] = b"PPMT-ESD\0\0\0\0\0\0\0\x01";

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

fn put_u64(w: &mut impl Write, v: usize) -> Result<()> {
    w.write_all(&(v as u64).to_le_bytes())?;
    Ok(())
}

fn put_f64(w: &mut impl Write, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u64(r: &mut impl Read) -> Result<usize> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|_| format_err("truncated header"))?;
    usize::try_from(u64::from_le_bytes(b)).map_err(|_| format_err("header field out of range"))
}

fn get_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|_| format_err("truncated data"))?;
    Ok(f64::from_le_bytes(b))
}

fn expect_magic(r: &mut impl Read, magic: &[u8; 16], what: &str) -> Result<()> {
    let mut b = [0u8; 16];
    r.read_exact(&mut b).map_err(|_| format_err(format!("too short to be a {what} file")))?;
    if &b != magic {
        return Err(format_err(format!("not a {what} file")));
    }
    Ok(())
}

fn expect_end(r: &mut impl Read) -> Result<()> {
    let mut b = [0u8; 1];
    match r.read(&mut b)? {
        0 => Ok(()),
        _ => Err(format_err("trailing bytes after data")),
    }
}

fn checked_len(dims: &[usize]) -> Result<usize> {
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| format_err("dimensions overflow"))
}

pub fn write_raster(w: &mut impl Write, raster: &SpikeRaster) -> Result<()> {
    w.write_all(RASTER_MAGIC)?;
    put_u64(w, raster.bins())?;
    put_u64(w, raster.channels())?;
    put_u64(w, raster.trials())?;
    put_f64(w, raster.bin_width())?;
    let mut packed = vec![0u8; raster.data().len().div_ceil(8)];
    for (i, &s) in raster.data().iter().enumerate() {
        packed[i / 8] |= s << (i % 8);
    }
    w.write_all(&packed)?;
    Ok(())
}

pub fn read_raster(r: &mut impl Read) -> Result<SpikeRaster> {
    expect_magic(r, RASTER_MAGIC, "raster")?;
    let (k, j, l) = (get_u64(r)?, get_u64(r)?, get_u64(r)?);
    let dt = get_f64(r)?;
    let n = checked_len(&[k, j, l])?;
    let mut packed = vec![0u8; n.div_ceil(8)];
    r.read_exact(&mut packed).map_err(|_| format_err("truncated spike data"))?;
    expect_end(r)?;
    let data = (0..n).map(|i| (packed[i / 8] >> (i % 8)) & 1).collect();
    SpikeRaster::new(k, j, l, dt, data)
}

pub fn write_series(w: &mut impl Write, series: &TimeSeries) -> Result<()> {
    w.write_all(SERIES_MAGIC)?;
    put_u64(w, series.samples())?;
    put_u64(w, series.channels())?;
    for &v in series.data() {
        put_f64(w, v)?;
    }
    Ok(())
}

pub fn read_series(r: &mut impl Read) -> Result<TimeSeries> {
    expect_magic(r, SERIES_MAGIC, "series")?;
    let (k, j) = (get_u64(r)?, get_u64(r)?);
    let n = checked_len(&[k, j])?;
    let data = (0..n).map(|_| get_f64(r)).collect::<Result<Vec<_>>>()?;
    expect_end(r)?;
    TimeSeries::new(k, j, data)
}

/// Header `M, N_max, J, N` (u64), `f_s` (f64), `W` (u64), then interleaved
/// real and imaginary parts in (m, n, r, t) order.
pub fn write_esd(w: &mut impl Write, esd: &EsdSeries) -> Result<()> {
    let g = esd.grid();
    w.write_all(ESD_MAGIC)?;
    put_u64(w, esd.windows())?;
    put_u64(w, g.n_max)?;
    put_u64(w, esd.channels())?;
    put_u64(w, g.n)?;
    put_f64(w, g.sample_rate)?;
    put_u64(w, esd.window_length())?;
    for v in esd.values() {
        put_f64(w, v.re)?;
        put_f64(w, v.im)?;
    }
    Ok(())
}

pub fn read_esd(r: &mut impl Read) -> Result<EsdSeries> {
    expect_magic(r, ESD_MAGIC, "ESD")?;
    let (m, n_max, j, n) = (get_u64(r)?, get_u64(r)?, get_u64(r)?, get_u64(r)?);
    let fs = get_f64(r)?;
    let w = get_u64(r)?;
    let grid = FreqGrid::new(n, n_max, fs)?;
    let count = checked_len(&[m, grid.bins(), j, j])?;
    let values = (0..count)
        .map(|_| Ok(Complex64::new(get_f64(r)?, get_f64(r)?)))
        .collect::<Result<Vec<_>>>()?;
    expect_end(r)?;
    EsdSeries::from_values(m, j, w, grid, values)
}

/// Tab-separated long-form table with columns `window`, `frequency_hz`,
/// `r`, `t`, `magnitude_db` and `phase_rad`. Windows and channels are
/// 0-based.
pub fn write_esd_table(w: &mut impl Write, esd: &EsdSeries) -> Result<()> {
    writeln!(w, "window\tfrequency_hz\tr\tt\tmagnitude_db\tphase_rad")?;
    let j = esd.channels();
    for m in 0..esd.windows() {
        for b in 0..esd.bins() {
            let f = esd.grid().frequency_hz(b);
            for r in 0..j {
                for t in 0..j {
                    let v = esd.get(m, b, r, t);
                    writeln!(w, "{m}\t{f}\t{r}\t{t}\t{}\t{}", 10.0 * v.norm().log10(), v.arg())?;
                }
            }
        }
    }
    Ok(())
}

fn temp_sibling(path: &Path) -> PathBuf {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!(".{name}.{}.tmp", std::process::id()))
}

/// Write through `f` into a temporary file next to `path`, then rename it
/// over `path`. On failure the temporary file is removed.
pub fn atomic_write(path: &Path, f: impl FnOnce(&mut BufWriter<fs::File>) -> Result<()>) -> Result<()> {
    let tmp = temp_sibling(path);
    let result = (|| {
        let mut w = BufWriter::new(fs::File::create(&tmp)?);
        f(&mut w)?;
        w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        fs::rename(&tmp, path)?;
        Ok(())
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

fn read_file<T>(path: &Path, f: impl FnOnce(&mut BufReader<fs::File>) -> Result<T>) -> Result<T> {
    let file = fs::File::open(path)
        .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    f(&mut BufReader::new(file))
}

pub fn save_raster(path: &Path, raster: &SpikeRaster) -> Result<()> {
    atomic_write(path, |w| write_raster(w, raster))
}

pub fn load_raster(path: &Path) -> Result<SpikeRaster> {
    read_file(path, read_raster)
}

pub fn save_series(path: &Path, series: &TimeSeries) -> Result<()> {
    atomic_write(path, |w| write_series(w, series))
}

pub fn load_series(path: &Path) -> Result<TimeSeries> {
    read_file(path, read_series)
}

pub fn save_esd(path: &Path, esd: &EsdSeries) -> Result<()> {
    atomic_write(path, |w| write_esd(w, esd))
}

pub fn load_esd(path: &Path) -> Result<EsdSeries> {
    read_file(path, read_esd)
}

pub fn save_esd_table(path: &Path, esd: &EsdSeries) -> Result<()> {
    atomic_write(path, |w| write_esd_table(w, esd))
}
