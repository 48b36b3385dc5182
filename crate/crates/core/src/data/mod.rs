//! Volumes, masks, file I/O, preprocessing, subject splits and phantoms.

mod dataset;
mod phantom;
mod preprocess;
mod split;
pub mod svol;
mod volume;

pub use dataset::{
    load_subject, mask_path, phantom_dataset, read_manifest, subject_id, volume_path, write_manifest, write_phantom_dataset,
    MANIFEST,
};
pub use phantom::{generate_phantom, PhantomSpec};
pub use preprocess::{minmax_normalize, resize_mask, resize_volume};
pub use split::{derive_seed, make_split, partition_sizes, subsample_size, subsample_train, SplitSpec};
pub use svol::{read_mask, read_volume, write_mask, write_volume};
pub use volume::{linear_index, Mask, Volume};

use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("axis {axis}: extent {extent} is below the minimum of 2")]
    Extent { axis: usize, extent: usize },
    #[error("expected {expected} voxels, got {found}")]
    Length { expected: usize, found: usize },
    #[error("non-finite value at voxel {index}")]
    NonFinite { index: usize },
    #[error("not an SVOL file (bad magic)")]
    BadMagic,
    #[error("SVOL header truncated at {found} bytes")]
    TruncatedHeader { found: usize },
    #[error("unsupported SVOL version {0}")]
    UnsupportedVersion(u8),
    #[error("unknown SVOL dtype {0:#04x}")]
    UnknownDtype(u8),
    #[error("SVOL dtype {found:#04x} where {expected:#04x} was expected")]
    DtypeMismatch { expected: u8, found: u8 },
    #[error("SVOL reserved bytes are not zero")]
    ReservedBytes,
    #[error("SVOL payload truncated: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("SVOL payload has {extra} trailing bytes")]
    TrailingBytes { extra: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("subject {id}: volume extents {volume:?} differ from mask extents {mask:?}")]
    PairMismatch {
        id: String,
        volume: [usize; 3],
        mask: [usize; 3],
    },
    #[error("{0} partition is empty")]
    EmptyPartition(&'static str),
    #[error("fraction {0} out of range")]
    Fraction(f64),
    #[error("subject {0} appears in more than one partition")]
    Leakage(String),
    #[error("duplicate subject id")]
    DuplicateSubject,
    #[error("split needs {needed} subjects, only {available} available")]
    NotEnoughSubjects { needed: usize, available: usize },
    #[error("phantom: {0}")]
    Phantom(String),
}

impl DataError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
