use serde::{Deserialize, Serialize};

/// Element type of a channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DType {
    F32,
    U8,
    I32,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::F32 | DType::I32 => 4,
            DType::U8 => 1,
        }
    }
}

#[derive(Debug, Clone)]
pub enum TensorData {
    F32(Vec<f32>),
    U8(Vec<u8>),
    I32(Vec<i32>),
}

/// A dense row-major tensor. Equality is bitwise, so NaN payloads compare
/// equal to themselves.
#[derive(Debug, Clone)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: TensorData,
}

impl PartialEq for Tensor {
    fn eq(&self, other: &Self) -> bool {
        self.shape == other.shape && self.dtype() == other.dtype() && self.to_le_bytes() == other.to_le_bytes()
    }
}

impl Tensor {
    pub fn f32(shape: Vec<usize>, data: Vec<f32>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data: TensorData::F32(data) }
    }

    pub fn u8(shape: Vec<usize>, data: Vec<u8>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data: TensorData::U8(data) }
    }

    pub fn i32(shape: Vec<usize>, data: Vec<i32>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data: TensorData::I32(data) }
    }

    pub fn zeros(dtype: DType, shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        match dtype {
            DType::F32 => Self::f32(shape, vec![0.0; n]),
            DType::U8 => Self::u8(shape, vec![0; n]),
            DType::I32 => Self::i32(shape, vec![0; n]),
        }
    }

    pub fn dtype(&self) -> DType {
        match self.data {
            TensorData::F32(_) => DType::F32,
            TensorData::U8(_) => DType::U8,
            TensorData::I32(_) => DType::I32,
        }
    }

    pub fn numel(&self) -> usize {
        match &self.data {
            TensorData::F32(v) => v.len(),
            TensorData::U8(v) => v.len(),
            TensorData::I32(v) => v.len(),
        }
    }

    pub fn as_f32(&self) -> Option<&[f32]> {
        match &self.data {
            TensorData::F32(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_u8(&self) -> Option<&[u8]> {
        match &self.data {
            TensorData::U8(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_i32(&self) -> Option<&[i32]> {
        match &self.data {
            TensorData::I32(v) => Some(v),
            _ => None,
        }
    }

    /// Element values widened to f64, whatever the dtype.
    pub fn to_f64_vec(&self) -> Vec<f64> {
        match &self.data {
            TensorData::F32(v) => v.iter().map(|&x| x as f64).collect(),
            TensorData::U8(v) => v.iter().map(|&x| x as f64).collect(),
            TensorData::I32(v) => v.iter().map(|&x| x as f64).collect(),
        }
    }

    pub fn to_le_bytes(&self) -> Vec<u8> {
        match &self.data {
            TensorData::F32(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            TensorData::U8(v) => v.clone(),
            TensorData::I32(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
        }
    }

    /// Decodes little-endian bytes. Returns `None` if the byte count does not
    /// match the shape.
    pub fn from_le_bytes(dtype: DType, shape: Vec<usize>, bytes: &[u8]) -> Option<Self> {
        let n: usize = shape.iter().product();
        if bytes.len() != n * dtype.size() {
            return None;
        }
        let data = match dtype {
            DType::F32 => TensorData::F32(
                bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect(),
            ),
            DType::U8 => TensorData::U8(bytes.to_vec()),
            DType::I32 => TensorData::I32(
                bytes.chunks_exact(4).map(|c| i32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect(),
            ),
        };
        Some(Self { shape, data })
    }

    /// Number of elements in one leading-axis row.
    pub fn row_len(&self) -> usize {
        self.shape.iter().skip(1).product()
    }

    /// Stacks equally shaped tensors along a new leading axis.
    pub fn stack(rows: &[&Tensor]) -> Option<Tensor> {
        let first = rows.first()?;
        let mut shape = vec![rows.len()];
        shape.extend_from_slice(&first.shape);
        if rows.iter().any(|r| r.shape != first.shape || r.dtype() != first.dtype()) {
            return None;
        }
        let data = match first.dtype() {
            DType::F32 => TensorData::F32(rows.iter().flat_map(|r| r.as_f32().unwrap().iter().copied()).collect()),
            DType::U8 => TensorData::U8(rows.iter().flat_map(|r| r.as_u8().unwrap().iter().copied()).collect()),
            DType::I32 => TensorData::I32(rows.iter().flat_map(|r| r.as_i32().unwrap().iter().copied()).collect()),
        };
        Some(Tensor { shape, data })
    }

    /// Row `i` of the leading axis as its own tensor.
    pub fn row(&self, i: usize) -> Tensor {
        let n = self.row_len();
        let shape = self.shape[1..].to_vec();
        let range = i * n..(i + 1) * n;
        match &self.data {
            TensorData::F32(v) => Tensor::f32(shape, v[range].to_vec()),
            TensorData::U8(v) => Tensor::u8(shape, v[range].to_vec()),
            TensorData::I32(v) => Tensor::i32(shape, v[range].to_vec()),
        }
    }
}
