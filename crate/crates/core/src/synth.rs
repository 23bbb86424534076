//! Synthetic labeled embeddings for benchmarks and tests.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::eval::LabeledRecord;
use crate::rng::rng_from_seed;
use crate::saam::AnchorBank;
use crate::BinaryLabel;

fn random_unit(d: usize, rng: &mut impl Rng) -> Array1<f64> {
    loop {
        let v: Array1<f64> = (0..d)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let n = v.dot(&v).sqrt();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// Random orthogonal matrix (Gram-Schmidt on a Gaussian matrix).
pub fn random_rotation(d: usize, seed: u64) -> Array2<f64> {
    let mut rng = rng_from_seed(seed);
    let mut q = Array2::<f64>::zeros((d, d));
    let mut i = 0;
    while i < d {
        let mut v: Array1<f64> = (0..d)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        for j in 0..i {
            let r = q.row(j).to_owned();
            v = &v - &(&r * r.dot(&v));
        }
        let n = v.dot(&v).sqrt();
        if n > 1e-8 {
            q.row_mut(i).assign(&(v / n));
            i += 1;
        }
    }
    q
}

/// Standard-normal anchors `a0..a{n-1}` with alternating labels, positives at
/// even indices.
pub fn random_bank(n: usize, d: usize, seed: u64) -> AnchorBank {
    let mut rng = rng_from_seed(seed);
    let rows = Array2::from_shape_fn((n, d), |_| rng.sample::<f64, _>(StandardNormal));
    let labels = (0..n)
        .map(|i| {
            if i % 2 == 0 {
                BinaryLabel::Positive
            } else {
                BinaryLabel::Negative
            }
        })
        .collect();
    let ids = (0..n).map(|i| format!("a{i}")).collect();
    AnchorBank::new(ids, labels, rows).expect("n > 0")
}

fn record(id: String, label: BinaryLabel, keyword: &str, x: Array1<f64>) -> LabeledRecord {
    LabeledRecord {
        id,
        label,
        keyword: keyword.to_string(),
        embedding: x.to_vec(),
    }
}

/// Two isotropic Gaussian classes whose means are `separation` apart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoGaussians {
    pub dim: usize,
    pub per_class: usize,
    pub separation: f64,
    pub sigma: f64,
    /// Distance of the midpoint between the means from the origin.
    pub offset: f64,
}

impl Default for TwoGaussians {
    fn default() -> Self {
        Self {
            dim: 32,
            per_class: 100,
            separation: 1.0,
            sigma: 0.3,
            offset: 0.0,
        }
    }
}

impl TwoGaussians {
    pub fn generate(&self, seed: u64) -> Vec<LabeledRecord> {
        let mut rng = rng_from_seed(seed);
        let axis = random_unit(self.dim, &mut rng);
        let mut center = random_unit(self.dim, &mut rng);
        center = &center - &(&axis * axis.dot(&center));
        let center = &center / center.dot(&center).sqrt() * self.offset;
        let noise = Normal::new(0.0, self.sigma).expect("sigma >= 0");
        let mut out = Vec::with_capacity(2 * self.per_class);
        for (label, sign) in [(BinaryLabel::Positive, 0.5), (BinaryLabel::Negative, -0.5)] {
            let mean = &center + &(&axis * (sign * self.separation));
            for i in 0..self.per_class {
                let x = mean.mapv(|m| m + noise.sample(&mut rng));
                out.push(record(format!("{label}-{i}"), label, "synthetic", x));
            }
        }
        out
    }
}

/// Each class is a mixture of `modes` Gaussian sub-clusters. The `2 * modes`
/// sub-cluster centres sit on a circle of radius `radius` in a random plane
/// with alternating labels, so neither class can be split from the other
/// inside that plane. The classes differ only by `separation` along an axis
/// orthogonal to the plane, and noise along that axis has standard deviation
/// `axis_sigma` (`sigma` elsewhere).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Multimodal {
    pub dim: usize,
    pub total: usize,
    pub modes: usize,
    pub radius: f64,
    pub separation: f64,
    pub sigma: f64,
    pub axis_sigma: f64,
}

impl Default for Multimodal {
    fn default() -> Self {
        Self {
            dim: 32,
            total: 300,
            modes: 3,
            radius: 6.0,
            separation: 1.0,
            sigma: 0.3,
            axis_sigma: 1.0,
        }
    }
}

impl Multimodal {
    pub fn generate(&self, seed: u64) -> Vec<LabeledRecord> {
        assert!(self.dim >= 3, "need a plane plus a class axis");
        let mut rng = rng_from_seed(seed);
        let basis = random_rotation(self.dim, rng.random());
        let (u, v, axis) = (
            basis.row(0).to_owned(),
            basis.row(1).to_owned(),
            basis.row(2).to_owned(),
        );
        let noise = Normal::new(0.0, self.sigma).expect("sigma >= 0");
        let extra = Normal::new(
            0.0,
            (self.axis_sigma.powi(2) - self.sigma.powi(2))
                .max(0.0)
                .sqrt(),
        )
        .expect("sigma >= 0");
        let clusters = 2 * self.modes;
        let mut out = Vec::with_capacity(self.total);
        for i in 0..self.total {
            // cluster j: even j positive, odd j negative
            let j = i % clusters;
            let (label, sign) = if j.is_multiple_of(2) {
                (BinaryLabel::Positive, 0.5)
            } else {
                (BinaryLabel::Negative, -0.5)
            };
            let theta = std::f64::consts::TAU * j as f64 / clusters as f64;
            let center = &u * (self.radius * theta.cos())
                + &v * (self.radius * theta.sin())
                + &axis * (sign * self.separation);
            let x = center.mapv(|c| c + noise.sample(&mut rng)) + &axis * extra.sample(&mut rng);
            out.push(record(
                format!("{label}-{i}"),
                label,
                &format!("mode{}", j / 2),
                x,
            ));
        }
        out
    }
}

/// Rotate every embedding by a fixed random rotation after appending
/// `extra_dims` high-variance nuisance coordinates. The class signal ends up
/// mixed into every output coordinate alongside the nuisance.
pub fn corrupt(
    records: &[LabeledRecord],
    extra_dims: usize,
    nuisance_sigma: f64,
    seed: u64,
) -> Vec<LabeledRecord> {
    let Some(first) = records.first() else {
        return Vec::new();
    };
    let d = first.embedding.len() + extra_dims;
    let rot = random_rotation(d, seed);
    let mut rng = rng_from_seed(seed ^ 0x9E37_79B9_7F4A_7C15);
    let noise = Normal::new(0.0, nuisance_sigma).expect("sigma >= 0");
    records
        .iter()
        .map(|r| {
            let mut x: Vec<f64> = r.embedding.clone();
            x.extend((0..extra_dims).map(|_| noise.sample(&mut rng)));
            let y = rot.dot(&Array1::from(x));
            LabeledRecord {
                embedding: y.to_vec(),
                ..r.clone()
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotation_is_orthogonal() {
        let q = random_rotation(6, 3);
        let eye = q.dot(&q.t());
        for ((i, j), v) in eye.indexed_iter() {
            assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
        }
    }

    #[test]
    fn two_gaussians_have_requested_geometry() {
        let g = TwoGaussians {
            per_class: 2000,
            ..TwoGaussians::default()
        };
        let data = g.generate(1);
        assert_eq!(data.len(), 4000);
        let mean = |l: BinaryLabel| -> Array1<f64> {
            let rows: Vec<&LabeledRecord> = data.iter().filter(|r| r.label == l).collect();
            rows.iter().fold(Array1::zeros(32), |acc, r| {
                acc + Array1::from(r.embedding.clone())
            }) / rows.len() as f64
        };
        let diff = mean(BinaryLabel::Positive) - mean(BinaryLabel::Negative);
        assert!((diff.dot(&diff).sqrt() - 1.0).abs() < 0.1);
        assert_eq!(g.generate(1), data);
    }

    #[test]
    fn corruption_preserves_distances_of_original_coordinates() {
        let data = Multimodal::default().generate(2);
        let c = corrupt(&data, 0, 1.0, 5);
        let dist = |a: &[f64], b: &[f64]| {
            a.iter()
                .zip(b)
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        let before = dist(&data[0].embedding, &data[1].embedding);
        let after = dist(&c[0].embedding, &c[1].embedding);
        assert!((before - after).abs() < 1e-9);
        assert_eq!(corrupt(&data, 4, 1.0, 5)[0].embedding.len(), 36);
    }
}
