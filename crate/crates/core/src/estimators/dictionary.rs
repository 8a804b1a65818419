use alloc::vec;
use alloc::vec::Vec;

use crate::channel::ArrayGeometry;
use crate::linalg::{self, CMatrix};
use crate::math::{self, TAU};
use crate::C64;

use super::EstimatorError;

/// Safety margin on the power-iteration estimate, which approaches the true
/// top eigenvalue from below.
const LIPSCHITZ_MARGIN: f64 = 1.0 + 1e-4;

#[derive(Debug, Clone)]
enum Operator {
    /// `A = (V kron H) / sqrt(N)` with `V: rows x d_el`, `H: cols x d_az`.
    Separable {
        vert: CMatrix,
        horiz: CMatrix,
        scale: f64,
    },
    Dense,
}

/// Sparsifying basis of unit-norm steering vectors on a direction-cosine
/// grid.
///
/// Column `k_el * d_az + k_az` steers toward vertical cosine
/// `grid_vertical[k_el]` and horizontal cosine `grid_horizontal[k_az]` (see
/// [`crate::channel::steering_vector_cosines`]). With `d_az = cols` and
/// `d_el = rows` the grid is the 2D DFT and the matrix is unitary.
#[derive(Debug, Clone)]
pub struct AngularDictionary {
    a: CMatrix,
    grid_vertical: Vec<f64>,
    grid_horizontal: Vec<f64>,
    op: Operator,
    lipschitz: f64,
}

fn grid(d: usize, spacing: f64) -> Vec<f64> {
    (0..d).map(|k| (k as f64 / d as f64 - 0.5) / spacing).collect()
}

fn phases(n: usize, cosines: &[f64], spacing: f64) -> CMatrix {
    CMatrix::from_fn(n, cosines.len(), |p, k| {
        math::cis(TAU * spacing * p as f64 * cosines[k])
    })
}

pub fn build_angular_dictionary(
    geometry: &ArrayGeometry,
    d_az: usize,
    d_el: usize,
) -> Result<AngularDictionary, EstimatorError> {
    geometry
        .validate()
        .map_err(|e| EstimatorError::Config(alloc::format!("{e}")))?;
    if d_az < geometry.cols || d_el < geometry.rows {
        return Err(EstimatorError::Config(alloc::format!(
            "grid {d_el}x{d_az} is smaller than the {}x{} array",
            geometry.rows,
            geometry.cols
        )));
    }
    let grid_vertical = grid(d_el, geometry.spacing);
    let grid_horizontal = grid(d_az, geometry.spacing);
    let vert = phases(geometry.rows, &grid_vertical, geometry.spacing);
    let horiz = phases(geometry.cols, &grid_horizontal, geometry.spacing);
    let n = geometry.num_elements();
    let scale = 1.0 / math::sqrt(n as f64);
    let a = CMatrix::from_fn(n, d_el * d_az, |i, k| {
        let (p, q) = (i / geometry.cols, i % geometry.cols);
        let (ke, ka) = (k / d_az, k % d_az);
        vert[(p, ke)] * horiz[(q, ka)] * scale
    });
    let mut dict = AngularDictionary {
        a,
        grid_vertical,
        grid_horizontal,
        op: Operator::Separable { vert, horiz, scale },
        lipschitz: 0.0,
    };
    dict.lipschitz = dict.estimate_lipschitz();
    Ok(dict)
}

impl AngularDictionary {
    /// Wraps an arbitrary `N x D` matrix, normalizing its columns. Zero
    /// columns are rejected.
    pub fn from_matrix(mut a: CMatrix) -> Result<Self, EstimatorError> {
        if a.rows() == 0 || a.cols() == 0 {
            return Err(EstimatorError::Config("empty dictionary".into()));
        }
        for c in 0..a.cols() {
            let n = linalg::norm(&a.col(c));
            if !(n > 0.0) || !n.is_finite() {
                return Err(EstimatorError::Config(alloc::format!(
                    "dictionary column {c} has norm {n}"
                )));
            }
            for r in 0..a.rows() {
                a[(r, c)] /= n;
            }
        }
        let mut dict = AngularDictionary {
            a,
            grid_vertical: Vec::new(),
            grid_horizontal: Vec::new(),
            op: Operator::Dense,
            lipschitz: 0.0,
        };
        dict.lipschitz = dict.estimate_lipschitz();
        Ok(dict)
    }

    fn estimate_lipschitz(&self) -> f64 {
        let top = linalg::power_iteration(self.num_atoms(), 1e-6, 10_000, |v| {
            self.adjoint_apply(&self.apply(v))
        });
        top * LIPSCHITZ_MARGIN
    }

    /// The materialized `N x D` matrix.
    pub fn matrix(&self) -> &CMatrix {
        &self.a
    }

    pub fn num_elements(&self) -> usize {
        self.a.rows()
    }

    pub fn num_atoms(&self) -> usize {
        self.a.cols()
    }

    /// Vertical direction cosines of the grid (`sin el`); empty for a
    /// dictionary built from a matrix.
    pub fn grid_vertical(&self) -> &[f64] {
        &self.grid_vertical
    }

    /// Horizontal direction cosines of the grid (`sin az cos el`).
    pub fn grid_horizontal(&self) -> &[f64] {
        &self.grid_horizontal
    }

    /// Upper bound on the largest eigenvalue of `A^H A`.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// `A x`.
    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        debug_assert_eq!(x.len(), self.num_atoms());
        match &self.op {
            Operator::Dense => self.a.matvec(x).expect("length checked"),
            Operator::Separable { vert, horiz, scale } => {
                let (rows, d_el) = vert.shape();
                let (cols, d_az) = horiz.shape();
                // T = X H^T  (d_el x cols)
                let mut t = vec![C64::new(0.0, 0.0); d_el * cols];
                for ke in 0..d_el {
                    let xr = &x[ke * d_az..(ke + 1) * d_az];
                    for q in 0..cols {
                        let hr = horiz.row(q);
                        t[ke * cols + q] = xr.iter().zip(hr).map(|(a, b)| a * b).sum();
                    }
                }
                // out = V T
                let mut out = vec![C64::new(0.0, 0.0); rows * cols];
                for p in 0..rows {
                    let o = &mut out[p * cols..(p + 1) * cols];
                    for (ke, v) in vert.row(p).iter().enumerate() {
                        let v = v * scale;
                        for (oq, tq) in o.iter_mut().zip(&t[ke * cols..(ke + 1) * cols]) {
                            *oq += v * tq;
                        }
                    }
                }
                out
            }
        }
    }

    /// `A^H r`.
    pub fn adjoint_apply(&self, r: &[C64]) -> Vec<C64> {
        debug_assert_eq!(r.len(), self.num_elements());
        match &self.op {
            Operator::Dense => self.a.adjoint_matvec(r).expect("length checked"),
            Operator::Separable { vert, horiz, scale } => {
                let (rows, d_el) = vert.shape();
                let (cols, d_az) = horiz.shape();
                // T = V^H R  (d_el x cols)
                let mut t = vec![C64::new(0.0, 0.0); d_el * cols];
                for p in 0..rows {
                    let rr = &r[p * cols..(p + 1) * cols];
                    for (ke, v) in vert.row(p).iter().enumerate() {
                        let v = v.conj() * scale;
                        for (tq, rq) in t[ke * cols..(ke + 1) * cols].iter_mut().zip(rr) {
                            *tq += v * rq;
                        }
                    }
                }
                // out = T conj(H)
                let mut out = vec![C64::new(0.0, 0.0); d_el * d_az];
                for ke in 0..d_el {
                    let o = &mut out[ke * d_az..(ke + 1) * d_az];
                    for q in 0..cols {
                        let tq = t[ke * cols + q];
                        for (oa, h) in o.iter_mut().zip(horiz.row(q)) {
                            *oa += tq * h.conj();
                        }
                    }
                }
                out
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn upa() -> ArrayGeometry {
        ArrayGeometry::upa_8x8(30.0)
    }

    #[test]
    fn critical_grid_is_unitary() {
        let d = build_angular_dictionary(&upa(), 8, 8).unwrap();
        let gram = d.matrix().adjoint().matmul(d.matrix()).unwrap();
        assert!(gram.max_abs_diff(&CMatrix::identity(64)) < 1e-10);
        assert!((d.lipschitz() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn columns_have_unit_norm() {
        let d = build_angular_dictionary(&upa(), 16, 12).unwrap();
        for c in 0..d.num_atoms() {
            assert!((linalg::norm(&d.matrix().col(c)) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn oversampled_grid_is_a_tight_frame() {
        // A A^H = (D / N) I for a 2x oversampled DFT grid on each axis
        let d = build_angular_dictionary(&upa(), 16, 16).unwrap();
        let frame = d.matrix().matmul(&d.matrix().adjoint()).unwrap();
        let mut expected = CMatrix::identity(64);
        expected = expected.scale(C64::new(4.0, 0.0));
        assert!(frame.max_abs_diff(&expected) < 1e-10);
        assert!((d.lipschitz() - 4.0).abs() < 4e-3);
    }

    #[test]
    fn fast_operators_match_dense_products() {
        let d = build_angular_dictionary(&upa(), 16, 16).unwrap();
        let x: Vec<C64> = (0..256)
            .map(|i| C64::new(math::sin(i as f64), math::cos(0.3 * i as f64)))
            .collect();
        let fast = d.apply(&x);
        let dense = d.matrix().matvec(&x).unwrap();
        for (a, b) in fast.iter().zip(&dense) {
            assert!(math::abs(a - b) < 1e-12);
        }
        let r: Vec<C64> = (0..64).map(|i| C64::new(0.1 * i as f64, -1.0)).collect();
        let fast = d.adjoint_apply(&r);
        let dense = d.matrix().adjoint_matvec(&r).unwrap();
        for (a, b) in fast.iter().zip(&dense) {
            assert!(math::abs(a - b) < 1e-11);
        }
    }

    #[test]
    fn columns_are_steering_vectors() {
        let g = upa();
        let d = build_angular_dictionary(&g, 16, 8).unwrap();
        let k = 5 * 16 + 11;
        let sv = crate::channel::steering_vector_cosines(&g, d.grid_vertical()[5], d.grid_horizontal()[11]);
        for (i, s) in sv.iter().enumerate() {
            assert!(math::abs(d.matrix()[(i, k)] - s / 8.0) < 1e-12);
        }
    }

    #[test]
    fn on_grid_two_path_channel_is_two_sparse() {
        let d = build_angular_dictionary(&upa(), 8, 8).unwrap();
        let (i, j) = (9, 42);
        let h: Vec<C64> = (0..64)
            .map(|r| d.matrix()[(r, i)] * C64::new(0.8, 0.3) + d.matrix()[(r, j)] * C64::new(-0.2, 0.5))
            .collect();
        let coeffs = d.adjoint_apply(&h);
        let nonzero: Vec<usize> = (0..64).filter(|&k| math::abs(coeffs[k]) > 1e-9).collect();
        assert_eq!(nonzero, vec![i, j]);
    }

    #[test]
    fn undersized_grid_is_rejected() {
        assert!(matches!(
            build_angular_dictionary(&upa(), 7, 8),
            Err(EstimatorError::Config(_))
        ));
    }

    #[test]
    fn from_matrix_normalizes() {
        let a = CMatrix::from_fn(3, 2, |r, c| C64::new((r + c + 1) as f64, 0.0));
        let d = AngularDictionary::from_matrix(a).unwrap();
        assert!((linalg::norm(&d.matrix().col(1)) - 1.0).abs() < 1e-14);
        assert!(AngularDictionary::from_matrix(CMatrix::zeros(3, 2)).is_err());
    }
}
