//! Basis cache file, all fields little-endian:
//!
//! ```text
//! 0   4      magic "FGTB"
//! 4   1      version (1)
//! 5   1      source (0 adjacency, 1 laplacian)
//! 6   2      reserved, zero
//! 8   8      n (u64)
//! 16  8      t (u64)
//! 24  8      tol (f64)
//! 32  32     SHA-256 of the adjacency (see CsrMatrix::content_hash)
//! 64  8·n·t  eigenvector matrix, row-major f64
//! ..  8·t    eigenvalues f64
//! ..  8·t    residuals f64
//! ```

use std::fs;
use std::path::Path;

use super::{BasisSource, SpectralBasis};
use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, Matrix};

const MAGIC: &[u8; 4] = b"FGTB";
const VERSION: u8 = 1;
const HEADER: usize = 64;

pub fn save_basis(path: &Path, basis: &SpectralBasis, adjacency: &CsrMatrix) -> Result<()> {
    let (n, t) = (basis.n(), basis.t());
    let mut buf = Vec::with_capacity(HEADER + 8 * (n * t + 2 * t));
    buf.extend_from_slice(MAGIC);
    buf.push(VERSION);
    buf.push(match basis.source {
        BasisSource::AdjacencyLargestMagnitude => 0,
        BasisSource::LaplacianSmallestNontrivial => 1,
    });
    buf.extend_from_slice(&[0, 0]);
    buf.extend_from_slice(&(n as u64).to_le_bytes());
    buf.extend_from_slice(&(t as u64).to_le_bytes());
    buf.extend_from_slice(&basis.tol.to_le_bytes());
    buf.extend_from_slice(&adjacency.content_hash());
    for v in basis.vectors.data().iter().chain(&basis.eigenvalues).chain(&basis.residuals) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf)?;
    Ok(())
}

/// `Ok(None)` when the cached basis belongs to a different adjacency.
pub fn load_basis(path: &Path, adjacency: &CsrMatrix) -> Result<Option<SpectralBasis>> {
    let bytes = fs::read(path)?;
    let bad = |what: &str| Error::Format(format!("{}: {what}", path.display()));
    if bytes.len() < HEADER || &bytes[..4] != MAGIC {
        return Err(bad("not a basis cache"));
    }
    if bytes[4] != VERSION {
        return Err(bad(&format!("unsupported version {}", bytes[4])));
    }
    let source = match bytes[5] {
        0 => BasisSource::AdjacencyLargestMagnitude,
        1 => BasisSource::LaplacianSmallestNontrivial,
        s => return Err(bad(&format!("unknown source tag {s}"))),
    };
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let (n, t) = (u64_at(8) as usize, u64_at(16) as usize);
    let tol = f64::from_bits(u64_at(24));
    if bytes[32..64] != adjacency.content_hash() {
        return Ok(None);
    }
    let count = n
        .checked_mul(t)
        .and_then(|x| x.checked_add(2 * t))
        .ok_or_else(|| bad("size overflow"))?;
    if bytes.len() != HEADER + 8 * count {
        return Err(bad("length does not match header"));
    }
    let vals: Vec<f64> = bytes[HEADER..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Some(SpectralBasis {
        vectors: Matrix::new(n, t, vals[..n * t].to_vec())?,
        eigenvalues: vals[n * t..n * t + t].to_vec(),
        residuals: vals[n * t + t..].to_vec(),
        source,
        tol,
        warnings: Vec::new(),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{top_magnitude_eigenpairs_of, EigenOptions};

    #[test]
    fn round_trip_and_invalidation() {
        let a = CsrMatrix::adjacency_from_edges(4, &[(0, 1), (1, 2), (2, 3), (0, 2)]).unwrap();
        let b = top_magnitude_eigenpairs_of(&a, 2, &EigenOptions::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("basis.bin");
        save_basis(&path, &b, &a).unwrap();
        let back = load_basis(&path, &a).unwrap().unwrap();
        assert_eq!(back.vectors, b.vectors);
        assert_eq!(back.eigenvalues, b.eigenvalues);
        let other = CsrMatrix::adjacency_from_edges(4, &[(0, 1)]).unwrap();
        assert!(load_basis(&path, &other).unwrap().is_none());
        fs::write(&path, b"junk").unwrap();
        assert!(matches!(load_basis(&path, &a), Err(Error::Format(_))));
    }
}
