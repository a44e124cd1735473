//! Bytes to field symbols and back, `m` bits per symbol, most significant
//! bit first. The tail of the last stripe is zero-filled.

use hiercode::gf::Gf;

/// Packs `bytes` into `stripes * stripe_len` symbols. Returns the symbols and
/// the number of padding bits appended.
pub fn pack(bytes: &[u8], m: u32, stripe_len: usize) -> (Vec<Gf>, usize) {
    let m = m as usize;
    let bits = bytes.len() * 8;
    let needed = bits.div_ceil(m);
    let stripes = needed.div_ceil(stripe_len).max(1);
    let total = stripes * stripe_len;
    let mut out = Vec::with_capacity(total);
    for s in 0..total {
        let mut v = 0u16;
        for j in 0..m {
            let bit = s * m + j;
            let b = bit < bits && bytes[bit / 8] >> (7 - bit % 8) & 1 == 1;
            v = v << 1 | b as u16;
        }
        out.push(Gf(v));
    }
    (out, total * m - bits)
}

/// Inverse of [`pack`]: the first `len` bytes carried by `symbols`.
pub fn unpack(symbols: &[Gf], m: u32, len: usize) -> Vec<u8> {
    let m = m as usize;
    let mut out = vec![0u8; len];
    for bit in 0..(len * 8).min(symbols.len() * m) {
        let sym = symbols[bit / m].0;
        if sym >> (m - 1 - bit % m) & 1 == 1 {
            out[bit / 8] |= 1 << (7 - bit % 8);
        }
    }
    out
}
