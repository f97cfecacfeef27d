//! Shared neighbourhood machinery: reflect-101 border handling and dense 2-D
//! convolution over a single plane.

use alloc::vec::Vec;

use crate::image::Channel;

/// Reflect-101 index (`dcb|abcd|cba`). Valid while the overshoot is < `n`.
#[inline]
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let mut i = i;
    // a single bounce suffices when radius < n
    if i < 0 {
        i = -i;
    }
    if i >= n {
        i = 2 * (n - 1) - i;
    }
    debug_assert!((0..n).contains(&i));
    i as usize
}

/// True convolution `out(x, y) = sum k(dx, dy) * in(x - dx, y - dy)` with
/// reflect-101 padding. `weights` is `side x side`, row-major, indexed by
/// `(dy + r) * side + (dx + r)`. The result is not clamped.
pub(crate) fn convolve_plane(plane: &Channel, weights: &[f64], side: usize) -> Vec<f64> {
    let (w, h) = (plane.width(), plane.height());
    let r = (side / 2) as isize;
    let src = plane.values();
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut acc = 0.0;
            for dy in -r..=r {
                let sy = reflect(y - dy, h);
                let row = &weights[((dy + r) as usize) * side..];
                for dx in -r..=r {
                    let sx = reflect(x - dx, w);
                    acc += row[(dx + r) as usize] * src[sy * w + sx];
                }
            }
            out.push(acc);
        }
    }
    out
}

/// Calls `f` with every pixel's `side x side` neighbourhood (reflect-101),
/// gathered into a scratch buffer, and collects the results.
pub(crate) fn map_windows(
    plane: &Channel,
    side: usize,
    mut f: impl FnMut(&mut [f64]) -> f64,
) -> Vec<f64> {
    let (w, h) = (plane.width(), plane.height());
    let r = (side / 2) as isize;
    let src = plane.values();
    let mut scratch = Vec::with_capacity(side * side);
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            scratch.clear();
            for dy in -r..=r {
                let sy = reflect(y + dy, h);
                for dx in -r..=r {
                    scratch.push(src[sy * w + reflect(x + dx, w)]);
                }
            }
            out.push(f(&mut scratch));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn reflect_101() {
        let got: Vec<usize> = (-3..8).map(|i| reflect(i, 5)).collect();
        assert_eq!(got, vec![3, 2, 1, 0, 1, 2, 3, 4, 3, 2, 1]);
        assert_eq!(reflect(-1, 1), 0);
    }

    #[test]
    fn convolution_is_not_correlation() {
        // asymmetric kernel: only weight at (dx, dy) = (1, 0)
        let mut k = vec![0.0; 9];
        k[1 * 3 + 2] = 1.0;
        let mut values = vec![0.0; 25];
        values[2 * 5 + 2] = 1.0;
        let plane = Channel::new(5, 5, values).unwrap();
        let out = convolve_plane(&plane, &k, 3);
        // impulse at (2,2) lands at (3,2)
        assert_eq!(out[2 * 5 + 3], 1.0);
        assert_eq!(out.iter().sum::<f64>(), 1.0);
    }
}
