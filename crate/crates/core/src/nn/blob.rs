//! Binary serialization of parameter stores and optimizer state.
//!
//! Little-endian, exact f64 bits, so save/load round-trips are lossless and
//! resumed training is bit-identical to an uninterrupted run.

use ndarray::Array2;

use super::adam::Adam;
use super::params::ParamStore;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"RVXB";
const VERSION: u32 = 1;

pub struct AdamState {
    pub t: u64,
    pub m: Vec<Array2<f64>>,
    pub v: Vec<Array2<f64>>,
}

pub struct Snapshot {
    pub params: Vec<(String, Array2<f64>)>,
    pub opt: Option<AdamState>,
}

fn put_matrix(out: &mut Vec<u8>, m: &Array2<f64>) {
    out.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    for &v in m.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::CheckpointMismatch("truncated parameter blob".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn matrix(&mut self) -> Result<Array2<f64>> {
        let rows = self.u64()? as usize;
        let cols = self.u64()? as usize;
        let raw = self.take(rows * cols * 8)?;
        let mut data = Vec::with_capacity(rows * cols);
        for chunk in raw.chunks_exact(8) {
            data.push(f64::from_le_bytes(chunk.try_into().unwrap()));
        }
        Array2::from_shape_vec((rows, cols), data)
            .map_err(|e| Error::CheckpointMismatch(format!("bad matrix shape: {e}")))
    }
}

pub fn encode(store: &ParamStore, opt: Option<&Adam>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (name, value) in store.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        put_matrix(&mut out, value);
    }
    match opt {
        Some(adam) => {
            out.push(1);
            out.extend_from_slice(&adam.t.to_le_bytes());
            for m in &adam.m {
                put_matrix(&mut out, m);
            }
            for v in &adam.v {
                put_matrix(&mut out, v);
            }
        }
        None => out.push(0),
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Snapshot> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::CheckpointMismatch("not a parameter blob".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::CheckpointMismatch(format!("unsupported blob version {version}")));
    }
    let n = r.u32()? as usize;
    let mut params = Vec::with_capacity(n);
    for _ in 0..n {
        let name_len = r.u32()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| Error::CheckpointMismatch("invalid parameter name".into()))?;
        let value = r.matrix()?;
        params.push((name, value));
    }
    let has_opt = r.take(1)?[0];
    if has_opt > 1 {
        return Err(Error::CheckpointMismatch("corrupt optimizer-state flag".into()));
    }
    let opt = if has_opt == 1 {
        let t = r.u64()?;
        let mut m = Vec::with_capacity(n);
        for _ in 0..n {
            m.push(r.matrix()?);
        }
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            v.push(r.matrix()?);
        }
        Some(AdamState { t, m, v })
    } else {
        None
    };
    Ok(Snapshot { params, opt })
}

/// Copy decoded parameters into a freshly built store; names, order, and
/// shapes must match exactly.
pub fn apply_params(store: &mut ParamStore, params: &[(String, Array2<f64>)]) -> Result<()> {
    if params.len() != store.len() {
        return Err(Error::CheckpointMismatch(format!(
            "checkpoint has {} parameters, model expects {}",
            params.len(),
            store.len()
        )));
    }
    let ids: Vec<_> = store.ids().collect();
    for (id, (name, value)) in ids.into_iter().zip(params.iter()) {
        if store.name(id) != name {
            return Err(Error::CheckpointMismatch(format!(
                "parameter {} does not match expected {}",
                name,
                store.name(id)
            )));
        }
        if store.get(id).dim() != value.dim() {
            return Err(Error::CheckpointMismatch(format!(
                "parameter {name} has shape {:?}, expected {:?}",
                value.dim(),
                store.get(id).dim()
            )));
        }
        store.get_mut(id).assign(value);
    }
    Ok(())
}

/// Restore optimizer moments; shapes must match the store.
pub fn apply_opt(adam: &mut Adam, state: AdamState) -> Result<()> {
    if state.m.len() != adam.m.len() || state.v.len() != adam.v.len() {
        return Err(Error::CheckpointMismatch("optimizer state size mismatch".into()));
    }
    for (slot, m) in adam.m.iter_mut().zip(state.m) {
        if slot.dim() != m.dim() {
            return Err(Error::CheckpointMismatch("optimizer moment shape mismatch".into()));
        }
        *slot = m;
    }
    for (slot, v) in adam.v.iter_mut().zip(state.v) {
        if slot.dim() != v.dim() {
            return Err(Error::CheckpointMismatch("optimizer moment shape mismatch".into()));
        }
        *slot = v;
    }
    adam.t = state.t;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::adam::AdamConfig;
    use crate::nn::glorot;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample_store() -> ParamStore {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut s = ParamStore::new();
        s.add("a.w", glorot(&mut rng, 3, 4));
        s.add("a.b", glorot(&mut rng, 1, 4));
        s.add("b.w", glorot(&mut rng, 4, 2));
        s
    }

    #[test]
    fn round_trip_preserves_bits() {
        let mut store = sample_store();
        let mut adam = Adam::new(&store, AdamConfig::default());
        let g: Vec<_> = store.iter().map(|(_, p)| Some(p.mapv(|v| v * 0.1))).collect();
        adam.step(&mut store, &g);

        let bytes = encode(&store, Some(&adam));
        let snap = decode(&bytes).unwrap();

        let mut restored = sample_store();
        apply_params(&mut restored, &snap.params).unwrap();
        assert_eq!(restored.checksum(), store.checksum());

        let mut adam2 = Adam::new(&restored, AdamConfig::default());
        apply_opt(&mut adam2, snap.opt.unwrap()).unwrap();
        assert_eq!(adam2.t, adam.t);
        for (a, b) in adam.m.iter().zip(adam2.m.iter()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn name_mismatch_is_rejected() {
        let store = sample_store();
        let bytes = encode(&store, None);
        let snap = decode(&bytes).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut other = ParamStore::new();
        other.add("different", glorot(&mut rng, 3, 4));
        other.add("a.b", glorot(&mut rng, 1, 4));
        other.add("b.w", glorot(&mut rng, 4, 2));
        assert!(matches!(
            apply_params(&mut other, &snap.params),
            Err(Error::CheckpointMismatch(_))
        ));
    }

    #[test]
    fn truncation_is_detected() {
        let store = sample_store();
        let bytes = encode(&store, None);
        assert!(matches!(
            decode(&bytes[..bytes.len() - 3]),
            Err(Error::CheckpointMismatch(_))
        ));
    }
}
