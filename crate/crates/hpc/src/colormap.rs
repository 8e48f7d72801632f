//! Viridis color ramp for response maps.

const STOPS: [[u8; 3]; 10] = [
    [0x44, 0x01, 0x54],
    [0x48, 0x28, 0x78],
    [0x3E, 0x4A, 0x89],
    [0x31, 0x68, 0x8E],
    [0x26, 0x82, 0x8E],
    [0x1F, 0x9E, 0x89],
    [0x35, 0xB7, 0x79],
    [0x6D, 0xCD, 0x59],
    [0xB4, 0xDE, 0x2C],
    [0xFD, 0xE7, 0x25],
];

/// Maps `t` in [0, 1] (clamped) to sRGB, dark to bright.
pub fn viridis(t: f64) -> [u8; 3] {
    let t = if t.is_nan() { 0.0 } else { t.clamp(0.0, 1.0) };
    let x = t * (STOPS.len() - 1) as f64;
    let i = (x.floor() as usize).min(STOPS.len() - 2);
    let frac = x - i as f64;
    let mut out = [0u8; 3];
    for c in 0..3 {
        let a = STOPS[i][c] as f64;
        let b = STOPS[i + 1][c] as f64;
        out[c] = (a + (b - a) * frac).round() as u8;
    }
    out
}

/// Colors for `values` scaled to their own min..max range.
pub fn colorize(values: &[f64]) -> Vec<[u8; 3]> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    values
        .iter()
        .map(|&v| viridis(if span > 0.0 { (v - lo) / span } else { 0.0 }))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_clamping() {
        assert_eq!(viridis(0.0), [0x44, 0x01, 0x54]);
        assert_eq!(viridis(1.0), [0xFD, 0xE7, 0x25]);
        assert_eq!(viridis(-3.0), viridis(0.0));
        assert_eq!(viridis(7.0), viridis(1.0));
    }

    #[test]
    fn brightness_increases() {
        let lum = |c: [u8; 3]| 0.2126 * c[0] as f64 + 0.7152 * c[1] as f64 + 0.0722 * c[2] as f64;
        let samples: Vec<f64> = (0..=20).map(|i| lum(viridis(i as f64 / 20.0))).collect();
        assert!(samples.windows(2).all(|w| w[1] > w[0]));
    }
}
