//! Flat binary weight files.
//!
//! ```text
//! magic    8 bytes   "DSCWGT01"
//! count    u32 LE    number of tensors
//! header   count ×   { name_len: u32, name: UTF-8, rank: u32, dims: rank × u32 }
//! payload  count ×   row-major f32 LE data, in header order
//! ```
//!
//! Tensor names are the dotted parameter paths produced by [`Params`].

use std::collections::HashMap;

use super::Params;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const MAGIC: &[u8; 8] = b"DSCWGT01";

pub fn save(params: &dyn Params) -> Vec<u8> {
    let mut header = Vec::new();
    let mut payload = Vec::new();
    let mut count = 0u32;
    params.visit("", &mut |name, t| {
        count += 1;
        header.extend_from_slice(&(name.len() as u32).to_le_bytes());
        header.extend_from_slice(name.as_bytes());
        header.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            header.extend_from_slice(&(d as u32).to_le_bytes());
        }
        payload.extend_from_slice(&t.to_le_bytes());
    });
    let mut out = Vec::with_capacity(12 + header.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&count.to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&payload);
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::format("weight file", "unexpected end of data"))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Overwrites every parameter of `params` from `bytes`. Names and shapes must
/// match exactly; missing or surplus tensors are errors.
pub fn load_into(params: &mut dyn Params, bytes: &[u8]) -> Result<()> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(8)? != MAGIC {
        return Err(Error::format("weight file", "bad magic"));
    }
    let count = cur.u32()? as usize;
    let mut header = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let len = cur.u32()? as usize;
        let name = std::str::from_utf8(cur.take(len)?)
            .map_err(|_| Error::format("weight file", "tensor name is not UTF-8"))?
            .to_string();
        let rank = cur.u32()? as usize;
        let dims = (0..rank)
            .map(|_| cur.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        header.push((name, dims));
    }
    let mut tensors = HashMap::with_capacity(header.len());
    for (name, dims) in header {
        let numel: usize = dims.iter().product();
        let raw = cur.take(numel * 4)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let t = Tensor::new(dims, data).map_err(|e| {
            Error::format("weight file", format!("tensor {name}: {e}"))
        })?;
        if tensors.insert(name.clone(), t).is_some() {
            return Err(Error::format("weight file", format!("duplicate tensor {name}")));
        }
    }
    if cur.pos != bytes.len() {
        return Err(Error::format("weight file", "trailing bytes after payload"));
    }

    let mut failure = None;
    params.visit_mut("", &mut |name, slot| {
        if failure.is_some() {
            return;
        }
        match tensors.remove(name) {
            Some(t) if t.shape() == slot.shape() => *slot = t,
            Some(t) => {
                failure = Some(Error::shape(format!(
                    "weight {name}: file has {:?}, model expects {:?}",
                    t.shape(),
                    slot.shape()
                )))
            }
            None => failure = Some(Error::format("weight file", format!("missing tensor {name}"))),
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    if let Some(extra) = tensors.keys().next() {
        return Err(Error::format("weight file", format!("unexpected tensor {extra}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Linear;
    use crate::numerics::seeded_rng;

    #[test]
    fn round_trip_and_rejections() {
        let a = Linear::init(&mut seeded_rng(1), 3, 2, 0.5).unwrap();
        let bytes = save(&a);
        let mut b = Linear::init(&mut seeded_rng(2), 3, 2, 0.5).unwrap();
        assert_ne!(a, b);
        load_into(&mut b, &bytes).unwrap();
        assert_eq!(a, b);

        let mut wrong = Linear::init(&mut seeded_rng(2), 4, 2, 0.5).unwrap();
        assert!(load_into(&mut wrong, &bytes).is_err());
        assert!(load_into(&mut b, &bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(load_into(&mut b, &bad).is_err());
    }
}
