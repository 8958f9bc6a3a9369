//! Order-independent fading draws keyed by (seed, realization, link).

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Identifies one transmitter-receiver pair, including the periodic copy of
/// the transmitter when the window is tiled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LinkKey {
    pub receiver: u64,
    pub transmitter: u64,
    pub image: u64,
}

const BS_FLAG: u64 = 1 << 63;
const GROUP_SHIFT: u32 = 40;

/// Receiver id of the added reference requester.
pub const REFERENCE_RECEIVER: u64 = u64::MAX;

pub fn user_id(group: usize, index: usize) -> u64 {
    ((group as u64) << GROUP_SHIFT) | index as u64
}

pub fn bs_id(index: usize) -> u64 {
    BS_FLAG | index as u64
}

/// Uniform on (0, 1].
pub fn unit_uniform(seed: u64, realization: u64, key: LinkKey) -> f64 {
    let mut h = mix(seed ^ 0x5bd1_e995);
    h = mix(h ^ realization);
    h = mix(h ^ key.receiver);
    h = mix(h ^ key.transmitter);
    h = mix(h ^ key.image);
    ((h >> 11) as f64 + 1.0) * (1.0 / (1u64 << 53) as f64)
}

/// Unit-mean exponential power gain of a Rayleigh link.
pub fn exponential(seed: u64, realization: u64, key: LinkKey) -> f64 {
    -unit_uniform(seed, realization, key).ln()
}
