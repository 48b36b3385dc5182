use super::DataError;

/// Row-major index with z varying fastest.
#[inline]
pub fn linear_index(extents: [usize; 3], x: usize, y: usize, z: usize) -> usize {
    (x * extents[1] + y) * extents[2] + z
}

fn check_extents(extents: [usize; 3]) -> Result<(), DataError> {
    match extents.iter().position(|&n| n < 2) {
        Some(axis) => Err(DataError::Extent {
            axis,
            extent: extents[axis],
        }),
        None => Ok(()),
    }
}

/// Dense scalar field.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    extents: [usize; 3],
    data: Vec<f64>,
    /// Voxel size in millimetres.
    pub spacing: [f64; 3],
}

impl Volume {
    pub fn new(extents: [usize; 3], data: Vec<f64>) -> Result<Self, DataError> {
        check_extents(extents)?;
        let n = extents.iter().product();
        if data.len() != n {
            return Err(DataError::Length {
                expected: n,
                found: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(DataError::NonFinite { index: i });
        }
        Ok(Self {
            extents,
            data,
            spacing: [1.0; 3],
        })
    }

    pub fn filled(extents: [usize; 3], value: f64) -> Result<Self, DataError> {
        Self::new(extents, vec![value; extents.iter().product()])
    }

    pub fn extents(&self) -> [usize; 3] {
        self.extents
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[linear_index(self.extents, x, y, z)]
    }
}

/// Integer label field; 0 is background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    extents: [usize; 3],
    labels: Vec<u8>,
}

impl Mask {
    pub fn new(extents: [usize; 3], labels: Vec<u8>) -> Result<Self, DataError> {
        check_extents(extents)?;
        let n = extents.iter().product();
        if labels.len() != n {
            return Err(DataError::Length {
                expected: n,
                found: labels.len(),
            });
        }
        Ok(Self { extents, labels })
    }

    pub fn empty(extents: [usize; 3]) -> Result<Self, DataError> {
        Self::new(extents, vec![0; extents.iter().product()])
    }

    pub fn extents(&self) -> [usize; 3] {
        self.extents
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn labels_mut(&mut self) -> &mut [u8] {
        &mut self.labels
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> u8 {
        self.labels[linear_index(self.extents, x, y, z)]
    }

    pub fn max_label(&self) -> u8 {
        self.labels.iter().copied().max().unwrap_or(0)
    }

    pub fn foreground_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l != 0).count()
    }

    /// Binary mask of voxels carrying `label`.
    pub fn select(&self, label: u8) -> Mask {
        Mask {
            extents: self.extents,
            labels: self.labels.iter().map(|&l| u8::from(l == label)).collect(),
        }
    }

    pub fn to_volume(&self) -> Volume {
        Volume {
            extents: self.extents,
            data: self.labels.iter().map(|&l| f64::from(l)).collect(),
            spacing: [1.0; 3],
        }
    }
}
