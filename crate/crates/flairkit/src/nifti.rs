//! NIfTI-1 reading and writing (.nii, optionally gzip-compressed).
//!
//! Gzip is detected from the magic bytes when reading, never the extension;
//! writing compresses when the path ends in `.gz`. Orientation information
//! beyond origin and spacing (quaternion, sform) is carried through as an
//! opaque [`HeaderInfo`] and re-emitted by [`save_volume_like`], not
//! interpreted.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{BigEndian, ByteOrder, LittleEndian, WriteBytesExt};
use flate2::bufread::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use flair_core::volume::{mask_volume_ml, voxel_volume_ml};
use flair_core::{BinaryMask, Geometry, ProbabilityMap, ScalarVolume};

const HEADER_SIZE: usize = 348;
const VOX_OFFSET: usize = 352;
const MAGIC_NIP1: &[u8; 4] = b"n+1\0";
const MAGIC_NI1: &[u8; 4] = b"ni1\0";

pub const DT_UINT8: i16 = 2;
pub const DT_INT16: i16 = 4;
pub const DT_INT32: i16 = 8;
pub const DT_FLOAT32: i16 = 16;
pub const DT_FLOAT64: i16 = 64;
pub const DT_INT8: i16 = 256;
pub const DT_UINT16: i16 = 512;
pub const DT_UINT32: i16 = 768;

#[derive(Debug, thiserror::Error)]
pub enum NiftiError {
    #[error("file not found: {0}")]
    Missing(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("malformed NIfTI header in {path}: {reason}")]
    Header { path: String, reason: String },
    #[error("unsupported NIfTI datatype {datatype} in {path}")]
    UnsupportedDatatype { path: String, datatype: i16 },
    #[error("file {path} truncated: expected {expected} data bytes, found {found}")]
    Truncated {
        path: String,
        expected: usize,
        found: usize,
    },
    #[error("{0}")]
    Volume(#[from] flair_core::Error),
}

type Result<T> = std::result::Result<T, NiftiError>;

/// Orientation and annotation fields carried through load→save untouched.
#[derive(Debug, Clone, PartialEq)]
pub struct HeaderInfo {
    pub qform_code: i16,
    pub sform_code: i16,
    pub quatern: [f32; 3],
    pub qfac: f32,
    pub srow: [[f32; 4]; 3],
    pub xyzt_units: u8,
    pub descrip: [u8; 80],
    /// dims/spacing at load time; lets the writer notice geometry changes.
    loaded_dims: [usize; 3],
    loaded_spacing: [f32; 3],
}

impl Default for HeaderInfo {
    fn default() -> Self {
        HeaderInfo {
            qform_code: 1,
            sform_code: 0,
            quatern: [0.0; 3],
            qfac: 1.0,
            srow: [[0.0; 4]; 3],
            xyzt_units: 2, // millimetres
            descrip: [0u8; 80],
            loaded_dims: [0; 3],
            loaded_spacing: [0.0; 3],
        }
    }
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let file = File::open(path).map_err(|e| {
        if e.kind() == io::ErrorKind::NotFound {
            NiftiError::Missing(path.display().to_string())
        } else {
            NiftiError::Io {
                path: path.display().to_string(),
                source: e,
            }
        }
    })?;
    let mut reader = BufReader::new(file);
    let mut head = [0u8; 2];
    let n = reader.read(&mut head).map_err(|e| NiftiError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut bytes = Vec::new();
    if n == 2 && head == [0x1f, 0x8b] {
        // gzip magic
        let chained = io::Cursor::new(head).chain(reader);
        let mut dec = MultiGzDecoder::new(BufReader::new(chained));
        dec.read_to_end(&mut bytes).map_err(|e| NiftiError::Header {
            path: path.display().to_string(),
            reason: format!("gzip decode failed: {e}"),
        })?;
    } else {
        bytes.extend_from_slice(&head[..n]);
        reader
            .read_to_end(&mut bytes)
            .map_err(|e| NiftiError::Io {
                path: path.display().to_string(),
                source: e,
            })?;
    }
    Ok(bytes)
}

struct ParsedHeader {
    dims: [usize; 3],
    spacing: [f32; 3],
    origin: [f32; 3],
    datatype: i16,
    vox_offset: usize,
    scl_slope: f32,
    scl_inter: f32,
    little_endian: bool,
    info: HeaderInfo,
}

fn parse_header(bytes: &[u8], path: &Path) -> Result<ParsedHeader> {
    let perr = |reason: String| NiftiError::Header {
        path: path.display().to_string(),
        reason,
    };
    if bytes.len() < HEADER_SIZE {
        return Err(perr(format!(
            "file holds {} bytes, header needs {HEADER_SIZE}",
            bytes.len()
        )));
    }
    let sz_le = LittleEndian::read_i32(&bytes[0..4]);
    let sz_be = BigEndian::read_i32(&bytes[0..4]);
    let little_endian = if sz_le == 348 {
        true
    } else if sz_be == 348 {
        false
    } else {
        return Err(perr(format!(
            "sizeof_hdr is {sz_le} (LE) / {sz_be} (BE), expected 348"
        )));
    };
    let magic = &bytes[344..348];
    if magic != MAGIC_NIP1 && magic != MAGIC_NI1 {
        return Err(perr(format!("bad magic {magic:?}")));
    }

    macro_rules! rd {
        (i16, $off:expr) => {
            if little_endian {
                LittleEndian::read_i16(&bytes[$off..$off + 2])
            } else {
                BigEndian::read_i16(&bytes[$off..$off + 2])
            }
        };
        (f32, $off:expr) => {
            if little_endian {
                LittleEndian::read_f32(&bytes[$off..$off + 4])
            } else {
                BigEndian::read_f32(&bytes[$off..$off + 4])
            }
        };
    }

    let ndim = rd!(i16, 40);
    if !(1..=7).contains(&ndim) {
        return Err(perr(format!("dim[0] = {ndim} outside 1..=7")));
    }
    let mut dim = [1usize; 7];
    for (i, d) in dim.iter_mut().enumerate().take(ndim as usize) {
        let v = rd!(i16, 42 + 2 * i);
        if v < 1 {
            return Err(perr(format!("dim[{}] = {v} is not positive", i + 1)));
        }
        *d = v as usize;
    }
    if dim[3..].iter().any(|&d| d != 1) {
        return Err(perr(format!(
            "volume has {ndim} dimensions with trailing extents {:?}; only 3D volumes are supported",
            &dim[3..]
        )));
    }
    let dims = [dim[0], dim[1], dim[2]];

    let datatype = rd!(i16, 70);
    let spacing = [rd!(f32, 80), rd!(f32, 84), rd!(f32, 88)];
    if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(perr(format!("non-positive pixdim {spacing:?}")));
    }
    let vox_offset = rd!(f32, 108);
    if !vox_offset.is_finite() || vox_offset < HEADER_SIZE as f32 {
        return Err(perr(format!("bad vox_offset {vox_offset}")));
    }
    let scl_slope = rd!(f32, 112);
    let scl_inter = rd!(f32, 116);
    let qform_code = rd!(i16, 252);
    let sform_code = rd!(i16, 254);
    let quatern = [rd!(f32, 256), rd!(f32, 260), rd!(f32, 264)];
    let origin = [rd!(f32, 268), rd!(f32, 272), rd!(f32, 276)];
    let mut srow = [[0.0f32; 4]; 3];
    for (r, row) in srow.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = rd!(f32, 280 + 16 * r + 4 * c);
        }
    }
    let qfac = {
        let p0 = rd!(f32, 76);
        if p0 < 0.0 {
            -1.0
        } else {
            1.0
        }
    };
    let mut descrip = [0u8; 80];
    descrip.copy_from_slice(&bytes[148..228]);

    Ok(ParsedHeader {
        dims,
        spacing,
        origin,
        datatype,
        vox_offset: vox_offset as usize,
        scl_slope,
        scl_inter,
        little_endian,
        info: HeaderInfo {
            qform_code,
            sform_code,
            quatern,
            qfac,
            srow,
            xyzt_units: bytes[123],
            descrip,
            loaded_dims: dims,
            loaded_spacing: spacing,
        },
    })
}

fn decode_data(bytes: &[u8], hdr: &ParsedHeader, path: &Path) -> Result<Vec<f32>> {
    let n = hdr.dims[0] * hdr.dims[1] * hdr.dims[2];
    let elem = match hdr.datatype {
        DT_UINT8 | DT_INT8 => 1,
        DT_INT16 | DT_UINT16 => 2,
        DT_INT32 | DT_UINT32 | DT_FLOAT32 => 4,
        DT_FLOAT64 => 8,
        dt => {
            return Err(NiftiError::UnsupportedDatatype {
                path: path.display().to_string(),
                datatype: dt,
            })
        }
    };
    let need = n * elem;
    let avail = bytes.len().saturating_sub(hdr.vox_offset);
    if avail < need {
        return Err(NiftiError::Truncated {
            path: path.display().to_string(),
            expected: need,
            found: avail,
        });
    }
    let raw = &bytes[hdr.vox_offset..hdr.vox_offset + need];
    let le = hdr.little_endian;
    let mut data = Vec::with_capacity(n);
    match hdr.datatype {
        DT_UINT8 => data.extend(raw.iter().map(|&b| b as f32)),
        DT_INT8 => data.extend(raw.iter().map(|&b| b as i8 as f32)),
        DT_INT16 => {
            for c in raw.chunks_exact(2) {
                let v = if le {
                    LittleEndian::read_i16(c)
                } else {
                    BigEndian::read_i16(c)
                };
                data.push(v as f32);
            }
        }
        DT_UINT16 => {
            for c in raw.chunks_exact(2) {
                let v = if le {
                    LittleEndian::read_u16(c)
                } else {
                    BigEndian::read_u16(c)
                };
                data.push(v as f32);
            }
        }
        DT_INT32 => {
            for c in raw.chunks_exact(4) {
                let v = if le {
                    LittleEndian::read_i32(c)
                } else {
                    BigEndian::read_i32(c)
                };
                data.push(v as f32);
            }
        }
        DT_UINT32 => {
            for c in raw.chunks_exact(4) {
                let v = if le {
                    LittleEndian::read_u32(c)
                } else {
                    BigEndian::read_u32(c)
                };
                data.push(v as f32);
            }
        }
        DT_FLOAT32 => {
            for c in raw.chunks_exact(4) {
                data.push(if le {
                    LittleEndian::read_f32(c)
                } else {
                    BigEndian::read_f32(c)
                });
            }
        }
        DT_FLOAT64 => {
            for c in raw.chunks_exact(8) {
                data.push(if le {
                    LittleEndian::read_f64(c)
                } else {
                    BigEndian::read_f64(c)
                } as f32);
            }
        }
        _ => unreachable!(),
    }
    // value scaling per the header; slope 0 means "no scaling stored"
    if hdr.scl_slope != 0.0 && !(hdr.scl_slope == 1.0 && hdr.scl_inter == 0.0) {
        for v in data.iter_mut() {
            *v = *v * hdr.scl_slope + hdr.scl_inter;
        }
    }
    Ok(data)
}

/// Load a scalar volume and its orientation passthrough.
pub fn load_volume_with_header(path: impl AsRef<Path>) -> Result<(ScalarVolume, HeaderInfo)> {
    let path = path.as_ref();
    let bytes = read_all(path)?;
    let hdr = parse_header(&bytes, path)?;
    let data = decode_data(&bytes, &hdr, path)?;
    let geometry = Geometry::new(hdr.dims, hdr.spacing, hdr.origin)?;
    // NaNs in the wild become zeros so the volume invariant holds.
    let data = data
        .into_iter()
        .map(|v| if v.is_finite() { v } else { 0.0 })
        .collect();
    Ok((ScalarVolume::new(geometry, data)?, hdr.info))
}

pub fn load_volume(path: impl AsRef<Path>) -> Result<ScalarVolume> {
    Ok(load_volume_with_header(path)?.0)
}

/// Load a label image as a mask; any nonzero voxel is set.
pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let (vol, _) = load_volume_with_header(path)?;
    Ok(BinaryMask {
        geometry: vol.geometry,
        data: vol.data.iter().map(|&v| v != 0.0).collect(),
    })
}

/// Load a probability map, clamping stray values into [0, 1].
pub fn load_prob(path: impl AsRef<Path>) -> Result<ProbabilityMap> {
    let (vol, _) = load_volume_with_header(path)?;
    let data = vol.data.iter().map(|&v| v.clamp(0.0, 1.0)).collect();
    Ok(ProbabilityMap::new(vol.geometry, data)?)
}

fn write_header(
    out: &mut Vec<u8>,
    geometry: &Geometry,
    datatype: i16,
    bitpix: i16,
    info: &HeaderInfo,
) {
    out.resize(HEADER_SIZE, 0);
    LittleEndian::write_i32(&mut out[0..4], 348);
    out[39] = b'r'; // regular
    LittleEndian::write_i16(&mut out[40..42], 3);
    for i in 0..3 {
        LittleEndian::write_i16(
            &mut out[42 + 2 * i..44 + 2 * i],
            geometry.dims[i] as i16,
        );
    }
    for i in 3..7 {
        LittleEndian::write_i16(&mut out[42 + 2 * i..44 + 2 * i], 1);
    }
    LittleEndian::write_i16(&mut out[70..72], datatype);
    LittleEndian::write_i16(&mut out[72..74], bitpix);
    LittleEndian::write_f32(&mut out[76..80], info.qfac);
    for i in 0..3 {
        LittleEndian::write_f32(
            &mut out[80 + 4 * i..84 + 4 * i],
            geometry.spacing[i],
        );
    }
    LittleEndian::write_f32(&mut out[108..112], VOX_OFFSET as f32);
    LittleEndian::write_f32(&mut out[112..116], 1.0); // scl_slope
    LittleEndian::write_f32(&mut out[116..120], 0.0); // scl_inter
    out[123] = info.xyzt_units;
    out[148..228].copy_from_slice(&info.descrip);

    let geometry_changed =
        info.loaded_dims != geometry.dims || info.loaded_spacing != geometry.spacing;
    LittleEndian::write_i16(&mut out[252..254], info.qform_code.max(1));
    // the sform bakes spacing into its matrix; passing it through after a
    // geometry change would lie, so it is dropped in that case
    let sform_code = if geometry_changed { 0 } else { info.sform_code };
    LittleEndian::write_i16(&mut out[254..256], sform_code);
    for i in 0..3 {
        LittleEndian::write_f32(&mut out[256 + 4 * i..260 + 4 * i], info.quatern[i]);
    }
    for i in 0..3 {
        LittleEndian::write_f32(
            &mut out[268 + 4 * i..272 + 4 * i],
            geometry.origin[i],
        );
    }
    if sform_code > 0 {
        let mut srow = info.srow;
        for (r, row) in srow.iter_mut().enumerate() {
            row[3] = geometry.origin[r];
        }
        for (r, row) in srow.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                LittleEndian::write_f32(
                    &mut out[280 + 16 * r + 4 * c..284 + 16 * r + 4 * c],
                    *v,
                );
            }
        }
    }
    out[344..348].copy_from_slice(MAGIC_NIP1);
    // four zero bytes: no header extensions
    out.resize(VOX_OFFSET, 0);
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let ioerr = |e: io::Error| NiftiError::Io {
        path: path.display().to_string(),
        source: e,
    };
    let file = File::create(path).map_err(ioerr)?;
    let gz = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("gz"));
    if gz {
        let mut enc = GzEncoder::new(BufWriter::new(file), Compression::fast());
        enc.write_all(bytes).map_err(ioerr)?;
        enc.finish().map_err(ioerr)?;
    } else {
        let mut w = BufWriter::new(file);
        w.write_all(bytes).map_err(ioerr)?;
        w.flush().map_err(ioerr)?;
    }
    Ok(())
}

/// Write a scalar volume as float32 with the given orientation passthrough.
pub fn save_volume_like(
    vol: &ScalarVolume,
    info: &HeaderInfo,
    path: impl AsRef<Path>,
) -> Result<()> {
    let mut bytes = Vec::with_capacity(VOX_OFFSET + vol.data.len() * 4);
    write_header(&mut bytes, &vol.geometry, DT_FLOAT32, 32, info);
    for &v in &vol.data {
        bytes.write_f32::<LittleEndian>(v).unwrap();
    }
    write_file(path.as_ref(), &bytes)
}

pub fn save_volume(vol: &ScalarVolume, path: impl AsRef<Path>) -> Result<()> {
    save_volume_like(vol, &HeaderInfo::default(), path)
}

/// Write a mask as uint8 {0, 1}; round-trips bit-exactly.
pub fn save_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    save_mask_like(mask, &HeaderInfo::default(), path)
}

pub fn save_mask_like(
    mask: &BinaryMask,
    info: &HeaderInfo,
    path: impl AsRef<Path>,
) -> Result<()> {
    let mut bytes = Vec::with_capacity(VOX_OFFSET + mask.data.len());
    write_header(&mut bytes, &mask.geometry, DT_UINT8, 8, info);
    bytes.extend(mask.data.iter().map(|&b| b as u8));
    write_file(path.as_ref(), &bytes)
}

/// Write a probability map as float32.
pub fn save_prob(prob: &ProbabilityMap, path: impl AsRef<Path>) -> Result<()> {
    save_prob_like(prob, &HeaderInfo::default(), path)
}

pub fn save_prob_like(
    prob: &ProbabilityMap,
    info: &HeaderInfo,
    path: impl AsRef<Path>,
) -> Result<()> {
    let mut bytes = Vec::with_capacity(VOX_OFFSET + prob.data.len() * 4);
    write_header(&mut bytes, &prob.geometry, DT_FLOAT32, 32, info);
    for &v in &prob.data {
        bytes.write_f32::<LittleEndian>(v).unwrap();
    }
    write_file(path.as_ref(), &bytes)
}

/// The ground-truth volume in mL straight from a label file.
pub fn gt_volume_ml(path: impl AsRef<Path>) -> Result<f64> {
    let mask = load_mask(path)?;
    Ok(mask_volume_ml(&mask))
}

/// Voxel volume in mL from a file header alone.
pub fn voxel_ml_of(path: impl AsRef<Path>) -> Result<f64> {
    let path = path.as_ref();
    let bytes = read_all(path)?;
    let hdr = parse_header(&bytes, path)?;
    Ok(voxel_volume_ml(hdr.spacing))
}
