//! Variation operators on integer genomes.
//!
//! Both operators work in continuous space and then map back with
//! round-half-up followed by a clamp to `[1, bound]`, so every child is a
//! valid coding.

use rand::Rng;

use super::MooError;

const EPS: f64 = 1e-14;

fn integerize(x: f64, bound: u32) -> u32 {
    let r = (x + 0.5).floor();
    r.clamp(1.0, f64::from(bound.max(1))) as u32
}

/// Simulated binary crossover applied gene by gene.
pub fn sbx_integer<R: Rng + ?Sized>(
    p1: &[u32],
    p2: &[u32],
    bounds: &[u32],
    eta_c: f64,
    rng: &mut R,
) -> Result<(Vec<u32>, Vec<u32>), MooError> {
    if p1.len() != p2.len() || p1.len() != bounds.len() {
        return Err(MooError::LengthMismatch {
            left: p1.len(),
            right: p2.len(),
            bounds: bounds.len(),
        });
    }
    let mut c1 = Vec::with_capacity(p1.len());
    let mut c2 = Vec::with_capacity(p1.len());
    for ((&a, &b), &bound) in p1.iter().zip(p2).zip(bounds) {
        let (y1, y2) = (f64::from(a), f64::from(b));
        if (y1 - y2).abs() < EPS {
            c1.push(a);
            c2.push(b);
            continue;
        }
        let u: f64 = rng.random();
        let exponent = 1.0 / (eta_c + 1.0);
        let beta = if u <= 0.5 {
            (2.0 * u).powf(exponent)
        } else {
            (1.0 / (2.0 * (1.0 - u))).powf(exponent)
        };
        let (lo, hi) = if y1 < y2 { (y1, y2) } else { (y2, y1) };
        let mid = 0.5 * (lo + hi);
        let spread = 0.5 * beta * (hi - lo);
        let (low_child, high_child) = (mid - spread, mid + spread);
        let (x1, x2) = if y1 < y2 {
            (low_child, high_child)
        } else {
            (high_child, low_child)
        };
        c1.push(integerize(x1, bound));
        c2.push(integerize(x2, bound));
    }
    Ok((c1, c2))
}

/// Bounded polynomial mutation, in place. Each gene is selected with
/// probability `prob`; returns how many genes were selected.
pub fn poly_mutate_integer<R: Rng + ?Sized>(
    genes: &mut [u32],
    bounds: &[u32],
    eta_m: f64,
    prob: f64,
    rng: &mut R,
) -> usize {
    let mut selected = 0;
    for (g, &bound) in genes.iter_mut().zip(bounds) {
        if rng.random::<f64>() >= prob {
            continue;
        }
        selected += 1;
        let (lo, hi) = (1.0, f64::from(bound));
        if hi - lo < EPS {
            *g = 1;
            continue;
        }
        let y = f64::from(*g);
        let d1 = (y - lo) / (hi - lo);
        let d2 = (hi - y) / (hi - lo);
        let r: f64 = rng.random();
        let pow = 1.0 / (eta_m + 1.0);
        let dq = if r < 0.5 {
            let v = 2.0 * r + (1.0 - 2.0 * r) * (1.0 - d1).powf(eta_m + 1.0);
            v.powf(pow) - 1.0
        } else {
            let v = 2.0 * (1.0 - r) + 2.0 * (r - 0.5) * (1.0 - d2).powf(eta_m + 1.0);
            1.0 - v.powf(pow)
        };
        *g = integerize(y + dq * (hi - lo), bound);
    }
    selected
}
