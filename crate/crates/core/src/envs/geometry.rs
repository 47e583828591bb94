//! Sensing-disk metrics: pairwise overlap area and network connectivity.

use std::f64::consts::PI;

use super::distance;

/// Area of intersection of two disks with radii `r1`, `r2` whose centers are
/// `d` apart.
pub fn lens_area(d: f64, r1: f64, r2: f64) -> f64 {
    if d >= r1 + r2 {
        return 0.0;
    }
    if d <= (r1 - r2).abs() {
        let r = r1.min(r2);
        return PI * r * r;
    }
    let a1 = ((d * d + r1 * r1 - r2 * r2) / (2.0 * d * r1)).clamp(-1.0, 1.0).acos();
    let a2 = ((d * d + r2 * r2 - r1 * r1) / (2.0 * d * r2)).clamp(-1.0, 1.0).acos();
    let k = ((-d + r1 + r2) * (d + r1 - r2) * (d - r1 + r2) * (d + r1 + r2)).max(0.0);
    r1 * r1 * a1 + r2 * r2 * a2 - 0.5 * k.sqrt()
}

/// Sum over unordered pairs of the intersection area of their sensing disks, m².
pub fn pairwise_overlap(positions: &[[f64; 2]], radii: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..positions.len() {
        for j in i + 1..positions.len() {
            total += lens_area(distance(positions[i], positions[j]), radii[i], radii[j]);
        }
    }
    total
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Whether the graph linking robots whose disks touch or overlap
/// (`‖p_i − p_j‖ ≤ r_i + r_j`) is a single component.
pub fn connectivity_check(positions: &[[f64; 2]], radii: &[f64]) -> bool {
    let n = positions.len();
    let mut parent: Vec<usize> = (0..n).collect();
    let mut components = n;
    for i in 0..n {
        for j in i + 1..n {
            if distance(positions[i], positions[j]) <= radii[i] + radii[j] {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a] = b;
                    components -= 1;
                }
            }
        }
    }
    components <= 1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disjoint_and_contained() {
        assert_eq!(lens_area(1.0, 0.3, 0.7), 0.0);
        assert_eq!(lens_area(2.0, 0.3, 0.7), 0.0);
        assert_eq!(lens_area(0.0, 0.4, 0.4), PI * 0.16);
        assert_eq!(lens_area(0.1, 0.2, 0.5), PI * 0.04);
    }

    #[test]
    fn equal_disks_half_apart_closed_form() {
        // two unit disks at distance 1: 2π/3 − √3/2
        let expected = 2.0 * PI / 3.0 - 3f64.sqrt() / 2.0;
        assert!((lens_area(1.0, 1.0, 1.0) - expected).abs() < 1e-12);
    }

    #[test]
    fn lens_is_continuous_at_tangency() {
        assert!(lens_area(0.999_999, 0.5, 0.5) < 1e-8);
        let inner = lens_area(0.300_001, 0.2, 0.5);
        assert!((inner - PI * 0.04).abs() < 1e-4);
    }

    #[test]
    fn connectivity_cases() {
        assert!(connectivity_check(&[[0.0, 0.0]], &[0.2]));
        assert!(connectivity_check(&[[0.0, 0.0], [0.5, 0.0]], &[0.25, 0.25]));
        assert!(!connectivity_check(&[[0.0, 0.0], [0.51, 0.0]], &[0.25, 0.25]));
        // chain: ends far apart but both overlap the middle
        let chain = [[0.0, 0.0], [0.4, 0.0], [0.8, 0.0]];
        assert!(connectivity_check(&chain, &[0.25, 0.25, 0.25]));
        let split = [[0.0, 0.0], [0.4, 0.0], [2.0, 0.0], [2.4, 0.0]];
        assert!(!connectivity_check(&split, &[0.25; 4]));
    }
}
