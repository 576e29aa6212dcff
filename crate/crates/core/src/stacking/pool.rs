use serde::{Deserialize, Serialize};

use super::TrialVector;

pub const DEFAULT_POOL_SIZE: usize = 36;
const RINGS: i32 = 3;

/// Trial vectors on a hexagonal lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorPool {
    vectors: Vec<TrialVector>,
    /// Axial lattice coordinates `(q, r)` of each vector.
    lattice: Vec<(i32, i32)>,
    lattice_spacing: f64,
}

impl VectorPool {
    /// Pool with arbitrary vectors; `lattice_spacing` is the tolerance used
    /// when matching a vector against truth.
    pub fn from_vectors(vectors: Vec<TrialVector>, lattice_spacing: f64) -> Self {
        Self {
            lattice: Vec::new(),
            vectors,
            lattice_spacing,
        }
    }

    pub fn vectors(&self) -> &[TrialVector] {
        &self.vectors
    }

    /// Axial coordinates for lattice-built pools; empty otherwise.
    pub fn lattice_coords(&self) -> &[(i32, i32)] {
        &self.lattice
    }

    pub fn lattice_spacing(&self) -> f64 {
        self.lattice_spacing
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Index of the pool vector nearest to `v`.
    pub fn nearest(&self, v: &TrialVector) -> Option<usize> {
        self.vectors
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.distance(v).total_cmp(&b.1.distance(v)))
            .map(|(i, _)| i)
    }

    /// True when `a` and `b` are the same or lattice-adjacent vectors.
    pub fn within_spacing(&self, a: &TrialVector, b: &TrialVector) -> bool {
        a.distance(b) <= self.lattice_spacing * (1.0 + 1e-9)
    }
}

fn hex_ring(q: i32, r: i32) -> i32 {
    (q.abs() + r.abs() + (q + r).abs()) / 2
}

fn lattice_point(q: i32, r: i32, spacing: f64) -> TrialVector {
    let (q, r) = (f64::from(q), f64::from(r));
    TrialVector::new(spacing * (q + 0.5 * r), spacing * (r * 3f64.sqrt() / 2.0))
}

/// The 36-vector pool: hexagonal lattice rings 1 to 3 around the origin
/// (6 + 12 + 18 points), scaled so the outer ring's vertices sit at
/// `max_displacement`. Ordered by ring, then counter-clockwise from +x.
pub fn make_hex_pool(max_displacement: f64) -> VectorPool {
    assert!(max_displacement > 0.0, "max_displacement must be positive");
    let spacing = max_displacement / f64::from(RINGS);
    let mut points: Vec<(i32, i32)> = (-RINGS..=RINGS)
        .flat_map(|q| (-RINGS..=RINGS).map(move |r| (q, r)))
        .filter(|&(q, r)| (1..=RINGS).contains(&hex_ring(q, r)))
        .collect();
    let angle = |&(q, r): &(i32, i32)| {
        let v = lattice_point(q, r, 1.0);
        let a = v.vy.atan2(v.vx);
        if a < 0.0 {
            a + std::f64::consts::TAU
        } else {
            a
        }
    };
    points.sort_by(|a, b| {
        hex_ring(a.0, a.1)
            .cmp(&hex_ring(b.0, b.1))
            .then(angle(a).total_cmp(&angle(b)))
    });
    VectorPool {
        vectors: points
            .iter()
            .map(|&(q, r)| lattice_point(q, r, spacing))
            .collect(),
        lattice: points,
        lattice_spacing: spacing,
    }
}
