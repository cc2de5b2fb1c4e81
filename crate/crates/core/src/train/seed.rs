/// Purpose tags mixed into derived seeds.
#[derive(Clone, Copy, Debug)]
#[repr(u64)]
pub enum Stream {
    Split = 1,
    Validation = 2,
    Init = 3,
    Shuffle = 4,
    Dropout = 5,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic child seed of `master` for a purpose and index path.
pub fn derive_seed(master: u64, stream: Stream, path: &[u64]) -> u64 {
    let mut h = splitmix(master ^ splitmix(stream as u64));
    for &p in path {
        h = splitmix(h ^ splitmix(p.wrapping_add(0x1234_5678)));
    }
    h
}
