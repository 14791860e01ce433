//! Reference implementations that the library is checked against. None of
//! these call into the code paths they verify.
#![allow(dead_code)]

use alignscope::EmbeddingSet;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};

/// Plain triple loop over rows, rows and coordinates, with general weights.
pub fn naive_mmd2(a: &[Vec<f64>], b: &[Vec<f64>], sigma: f64) -> f64 {
    let k = |u: &[f64], v: &[f64]| {
        let mut d = 0.0;
        for t in 0..u.len() {
            d += (u[t] - v[t]) * (u[t] - v[t]);
        }
        (-d / (sigma * sigma)).exp()
    };
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let mut saa = 0.0;
    for x in a {
        for y in a {
            saa += k(x, y);
        }
    }
    let mut sbb = 0.0;
    for x in b {
        for y in b {
            sbb += k(x, y);
        }
    }
    let mut sab = 0.0;
    for x in a {
        for y in b {
            sab += k(x, y);
        }
    }
    saa / (na * na) + sbb / (nb * nb) - 2.0 * sab / (na * nb)
}

/// Median of squared pairwise distances by full sort, then its square root.
pub fn naive_median_sigma(rows: &[Vec<f64>]) -> f64 {
    let mut d = Vec::new();
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            d.push(rows[i].iter().zip(&rows[j]).map(|(x, y)| (x - y) * (x - y)).sum::<f64>());
        }
    }
    d.sort_by(|x, y| x.partial_cmp(y).unwrap());
    d[(d.len() - 1) / 2].sqrt()
}

fn exact(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite")
}

/// Pearson r from exact rational moments; one rounding before the square root.
pub fn exact_pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = BigRational::from_integer(BigInt::from(xs.len()));
    let xs: Vec<BigRational> = xs.iter().map(|&v| exact(v)).collect();
    let ys: Vec<BigRational> = ys.iter().map(|&v| exact(v)).collect();
    let mx = xs.iter().fold(BigRational::zero(), |acc, v| acc + v) / &n;
    let my = ys.iter().fold(BigRational::zero(), |acc, v| acc + v) / &n;
    let mut sxy = BigRational::zero();
    let mut sxx = BigRational::zero();
    let mut syy = BigRational::zero();
    for (x, y) in xs.iter().zip(&ys) {
        let dx = x - &mx;
        let dy = y - &my;
        sxy += &dx * &dy;
        sxx += &dx * &dx;
        syy += &dy * &dy;
    }
    let r2 = (&sxy * &sxy) / (sxx * syy);
    let r = r2.to_f64().unwrap().sqrt();
    if sxy.is_negative() {
        -r
    } else {
        r
    }
}

/// Two-sided Student-t p-value from an independent t distribution implementation.
pub fn reference_p(r: f64, n: usize) -> f64 {
    let df = (n - 2) as f64;
    let t = r * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).unwrap();
    2.0 * dist.cdf(-t.abs())
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_rows(rng: &mut ChaCha8Rng, n: usize, d: usize, spread: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(-spread..spread)).collect())
        .collect()
}

pub fn set(rows: &[Vec<f64>]) -> EmbeddingSet {
    EmbeddingSet::from_vecs(rows).unwrap()
}
