//! The `MCC1` container.
//!
//! Little-endian, no padding:
//!
//! ```text
//! magic  "MCC1"
//! u16    version (1)
//! u32    p1, p2, n1, n2
//! u16    nu code (0 = infinity)
//! u8     prior mode (0 uniform, 1 inline SVD, 2 external reference)
//! u16    rank r (0 unless mode 1)
//! [mode 2] u16 name length, UTF-8 name bytes
//! f64    (n1 + 1)(n2 + 1) moments, row-major over (k1, k2)
//! [mode 1] f32 p1*r entries of M1, column-major
//! [mode 1] f32 r*p2 entries of M2, row-major
//! u32    CRC-32 of the moment and factor bytes
//! ```

use ndarray::Array2;

use crate::divergence::Nu;
use crate::priors::SvdFactors;
use crate::spectral::{GridDims, IndexSet, MomentSet};
use crate::{Error, FormatError, Result};

pub const MAGIC: [u8; 4] = *b"MCC1";
pub const VERSION: u16 = 1;
/// Header bytes before the optional prior name.
pub const FIXED_HEADER_LEN: usize = 4 + 2 + 4 * 4 + 2 + 1 + 2;
pub const CHECKSUM_LEN: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub enum PriorPayload {
    Uniform,
    InlineSvd { m1: Array2<f32>, m2: Array2<f32> },
    External { name: String },
}

impl PriorPayload {
    pub fn mode(&self) -> u8 {
        match self {
            PriorPayload::Uniform => 0,
            PriorPayload::InlineSvd { .. } => 1,
            PriorPayload::External { .. } => 2,
        }
    }

    pub fn rank(&self) -> usize {
        match self {
            PriorPayload::InlineSvd { m1, .. } => m1.ncols(),
            _ => 0,
        }
    }

    pub fn inline(factors: &SvdFactors) -> Self {
        PriorPayload::InlineSvd {
            m1: factors.m1().mapv(|v| v as f32),
            m2: factors.m2().mapv(|v| v as f32),
        }
    }

    /// Inline factors widened back to `f64`.
    pub fn factors(&self) -> Option<SvdFactors> {
        match self {
            PriorPayload::InlineSvd { m1, m2 } => SvdFactors::new(m1.mapv(f64::from), m2.mapv(f64::from)).ok(),
            _ => None,
        }
    }
}

/// A compressed image.
#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    p1: usize,
    p2: usize,
    nu: Nu,
    moments: MomentSet,
    prior: PriorPayload,
}

impl Container {
    pub fn new(image_dim: (usize, usize), moments: MomentSet, nu: Nu, prior: PriorPayload) -> Result<Self> {
        let (p1, p2) = image_dim;
        let invalid = |msg: String| Error::Format(FormatError::InvalidHeader(msg));
        if p1 < 2 || p2 < 2 || p1 > u32::MAX as usize || p2 > u32::MAX as usize {
            return Err(invalid(format!("image size {p1}x{p2}")));
        }
        if moments.index_set().grid != GridDims::for_image(p1, p2) {
            return Err(invalid(format!(
                "moments live on a {} grid, image {p1}x{p2} needs {}",
                moments.index_set().grid,
                GridDims::for_image(p1, p2)
            )));
        }
        match &prior {
            PriorPayload::InlineSvd { m1, m2 } => {
                let r = m1.ncols();
                if r == 0 || r > u16::MAX as usize || m1.nrows() != p1 || m2.dim() != (r, p2) {
                    return Err(invalid(format!(
                        "factor shapes {:?} and {:?} do not fit a {p1}x{p2} image",
                        m1.dim(),
                        m2.dim()
                    )));
                }
                if m1.iter().chain(m2.iter()).any(|v| !v.is_finite()) {
                    return Err(FormatError::NonFinitePayload.into());
                }
            }
            PriorPayload::External { name } => {
                if name.is_empty() || name.len() > u16::MAX as usize {
                    return Err(invalid("prior reference name must be 1..=65535 bytes".into()));
                }
            }
            PriorPayload::Uniform => {}
        }
        Ok(Self {
            p1,
            p2,
            nu,
            moments,
            prior,
        })
    }

    pub fn image_dim(&self) -> (usize, usize) {
        (self.p1, self.p2)
    }

    pub fn nu(&self) -> Nu {
        self.nu
    }

    pub fn moments(&self) -> &MomentSet {
        &self.moments
    }

    pub fn index_set(&self) -> IndexSet {
        self.moments.index_set()
    }

    pub fn prior(&self) -> &PriorPayload {
        &self.prior
    }

    pub fn rank(&self) -> usize {
        self.prior.rank()
    }

    /// Stored reals: `(n1 + 1)(n2 + 1)` moments plus `(p1 + p2) r` factor entries.
    pub fn parameter_count(&self) -> usize {
        self.index_set().quadrant_len() + (self.p1 + self.p2) * self.rank()
    }

    fn header_len(&self) -> usize {
        FIXED_HEADER_LEN
            + match &self.prior {
                PriorPayload::External { name } => 2 + name.len(),
                _ => 0,
            }
    }

    fn payload_len(&self) -> usize {
        8 * self.index_set().quadrant_len() + 4 * (self.p1 + self.p2) * self.rank()
    }

    pub fn serialize(&self) -> Vec<u8> {
        let idx = self.index_set();
        let mut out = Vec::with_capacity(self.header_len() + self.payload_len() + CHECKSUM_LEN);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for v in [self.p1, self.p2, idx.n1, idx.n2] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.extend_from_slice(&self.nu.code().to_le_bytes());
        out.push(self.prior.mode());
        out.extend_from_slice(&(self.rank() as u16).to_le_bytes());
        if let PriorPayload::External { name } = &self.prior {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
        }

        let payload_start = out.len();
        for v in self.moments.coeffs().iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        if let PriorPayload::InlineSvd { m1, m2 } = &self.prior {
            for v in m1.t().iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
            for v in m2.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out[payload_start..]);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn deserialize(bytes: &[u8]) -> Result<Self> {
        let mut rd = Reader { bytes, pos: 0 };
        if bytes.len() >= 4 && bytes[..4] != MAGIC {
            return Err(FormatError::BadMagic.into());
        }
        rd.take(4, FIXED_HEADER_LEN)?;
        let version = rd.u16(FIXED_HEADER_LEN)?;
        if version != VERSION {
            return Err(FormatError::UnsupportedVersion(version).into());
        }
        let mut dims = [0usize; 4];
        for d in &mut dims {
            *d = rd.u32(FIXED_HEADER_LEN)? as usize;
        }
        let [p1, p2, n1, n2] = dims;
        let nu = Nu::from_code(rd.u16(FIXED_HEADER_LEN)?);
        let mode = rd.take(1, FIXED_HEADER_LEN)?[0];
        let rank = rd.u16(FIXED_HEADER_LEN)? as usize;

        let invalid = |msg: String| Error::Format(FormatError::InvalidHeader(msg));
        let name = match mode {
            0 | 1 => None,
            2 => {
                let len = rd.u16(FIXED_HEADER_LEN + 2)? as usize;
                let raw = rd.take(len, FIXED_HEADER_LEN + 2 + len)?;
                Some(String::from_utf8(raw.to_vec()).map_err(|_| invalid("prior reference is not UTF-8".into()))?)
            }
            m => return Err(invalid(format!("unknown prior mode {m}"))),
        };
        if (mode == 1) != (rank > 0) {
            return Err(invalid(format!("prior mode {mode} with rank {rank}")));
        }

        let payload_len = (n1 as u64 + 1)
            .checked_mul(n2 as u64 + 1)
            .and_then(|q| q.checked_mul(8))
            .and_then(|m| {
                let f = (p1 as u64 + p2 as u64).checked_mul(rank as u64)?.checked_mul(4)?;
                m.checked_add(f)
            })
            .ok_or_else(|| invalid("declared sizes overflow".into()))?;
        let expected = rd.pos as u64 + payload_len + CHECKSUM_LEN as u64;
        if expected != bytes.len() as u64 {
            return Err(FormatError::LengthMismatch {
                expected: usize::try_from(expected).unwrap_or(usize::MAX),
                found: bytes.len(),
            }
            .into());
        }

        let payload = &bytes[rd.pos..bytes.len() - CHECKSUM_LEN];
        let stored_crc = u32::from_le_bytes(bytes[bytes.len() - CHECKSUM_LEN..].try_into().unwrap());
        if crc32fast::hash(payload) != stored_crc {
            return Err(FormatError::ChecksumMismatch.into());
        }

        let quadrant = (n1 + 1) * (n2 + 1);
        let (moment_bytes, factor_bytes) = payload.split_at(8 * quadrant);
        let moments: Vec<f64> = moment_bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let factors: Vec<f32> = factor_bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if moments.iter().any(|v| !v.is_finite()) || factors.iter().any(|v| !v.is_finite()) {
            return Err(FormatError::NonFinitePayload.into());
        }

        if p1 < 2 || p2 < 2 {
            return Err(invalid(format!("image size {p1}x{p2}")));
        }
        let idx = IndexSet::new(n1, n2, GridDims::for_image(p1, p2)).map_err(|e| invalid(e.to_string()))?;
        let moments = MomentSet::new(Array2::from_shape_vec((n1 + 1, n2 + 1), moments).unwrap(), idx)
            .map_err(|e| invalid(e.to_string()))?;
        let prior = match (mode, name) {
            (0, _) => PriorPayload::Uniform,
            (1, _) => {
                let (m1_raw, m2_raw) = factors.split_at(p1 * rank);
                // M1 is column-major on disk
                let m1 = Array2::from_shape_vec((rank, p1), m1_raw.to_vec())
                    .unwrap()
                    .reversed_axes();
                let m2 = Array2::from_shape_vec((rank, p2), m2_raw.to_vec()).unwrap();
                PriorPayload::InlineSvd {
                    m1: m1.as_standard_layout().into_owned(),
                    m2,
                }
            }
            (_, Some(name)) => PriorPayload::External { name },
            _ => unreachable!("mode checked above"),
        };
        Container::new((p1, p2), moments, nu, prior)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    /// `need` is the minimum total length reported when the stream is short.
    fn take(&mut self, n: usize, need: usize) -> Result<&'a [u8], FormatError> {
        if self.pos + n > self.bytes.len() {
            return Err(FormatError::LengthMismatch {
                expected: need.max(self.pos + n),
                found: self.bytes.len(),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u16(&mut self, need: usize) -> Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.take(2, need)?.try_into().unwrap()))
    }

    fn u32(&mut self, need: usize) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4, need)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(prior: PriorPayload) -> Container {
        let idx = IndexSet::new(2, 1, GridDims::for_image(5, 4)).unwrap();
        let coeffs = Array2::from_shape_fn((3, 2), |(a, b)| 1.5 - 0.1 * (a + 2 * b) as f64);
        Container::new((5, 4), MomentSet::new(coeffs, idx).unwrap(), Nu::Finite(2), prior).unwrap()
    }

    #[test]
    fn uniform_size_accounting() {
        let bytes = sample(PriorPayload::Uniform).serialize();
        assert_eq!(bytes.len(), FIXED_HEADER_LEN + 8 * 6 + CHECKSUM_LEN);
        assert_eq!(&bytes[..4], b"MCC1");
        assert_eq!(Container::deserialize(&bytes).unwrap(), sample(PriorPayload::Uniform));
    }

    #[test]
    fn inline_layout_is_column_major_then_row_major() {
        let m1 = Array2::from_shape_fn((5, 2), |(i, c)| (10 * i + c) as f32);
        let m2 = Array2::from_shape_fn((2, 4), |(c, j)| (100 + 10 * c + j) as f32);
        let c = sample(PriorPayload::InlineSvd { m1, m2 });
        let bytes = c.serialize();
        let start = FIXED_HEADER_LEN + 8 * 6;
        let f = |k: usize| f32::from_le_bytes(bytes[start + 4 * k..start + 4 * k + 4].try_into().unwrap());
        assert_eq!((f(0), f(1), f(5)), (0.0, 10.0, 1.0));
        assert_eq!((f(10), f(11), f(14)), (100.0, 101.0, 110.0));
        assert_eq!(Container::deserialize(&bytes).unwrap(), c);
        assert_eq!(c.parameter_count(), 6 + 9 * 2);
    }

    #[test]
    fn external_reference_round_trips() {
        let c = sample(PriorPayload::External { name: "face_db".into() });
        let bytes = c.serialize();
        assert_eq!(bytes.len(), FIXED_HEADER_LEN + 2 + 7 + 8 * 6 + CHECKSUM_LEN);
        let back = Container::deserialize(&bytes).unwrap();
        assert_eq!(back.serialize(), bytes);
    }

    fn format_err(bytes: &[u8]) -> FormatError {
        match Container::deserialize(bytes) {
            Err(Error::Format(e)) => e,
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn corruption_classes() {
        let bytes = sample(PriorPayload::Uniform).serialize();
        assert!(matches!(
            format_err(&bytes[..bytes.len() - 1]),
            FormatError::LengthMismatch { .. }
        ));
        assert!(matches!(format_err(&bytes[..10]), FormatError::LengthMismatch { .. }));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(format_err(&extra), FormatError::LengthMismatch { .. }));

        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert_eq!(format_err(&magic), FormatError::BadMagic);

        let mut version = bytes.clone();
        version[4] = 2;
        assert_eq!(format_err(&version), FormatError::UnsupportedVersion(2));

        let mut flipped = bytes.clone();
        flipped[FIXED_HEADER_LEN + 3] ^= 0x10;
        assert_eq!(format_err(&flipped), FormatError::ChecksumMismatch);

        // NaN with a valid checksum
        let mut nan = bytes.clone();
        let end = nan.len() - CHECKSUM_LEN;
        nan[FIXED_HEADER_LEN + 8..FIXED_HEADER_LEN + 16].copy_from_slice(&f64::NAN.to_le_bytes());
        let crc = crc32fast::hash(&nan[FIXED_HEADER_LEN..end]);
        nan[end..].copy_from_slice(&crc.to_le_bytes());
        assert_eq!(format_err(&nan), FormatError::NonFinitePayload);

        let mut mode = bytes;
        mode[FIXED_HEADER_LEN - 3] = 7;
        assert!(matches!(format_err(&mode), FormatError::InvalidHeader(_)));
    }
}
