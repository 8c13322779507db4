use nalgebra::{Matrix3, SymmetricEigen};

/// Symmetric 3×3 tensor stored as its six independent components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymTensor3 {
    pub xx: f64,
    pub xy: f64,
    pub xz: f64,
    pub yy: f64,
    pub yz: f64,
    pub zz: f64,
}

impl SymTensor3 {
    pub const IDENTITY: SymTensor3 = SymTensor3::diag(1.0, 1.0, 1.0);

    pub const fn diag(a: f64, b: f64, c: f64) -> Self {
        SymTensor3 {
            xx: a,
            xy: 0.0,
            xz: 0.0,
            yy: b,
            yz: 0.0,
            zz: c,
        }
    }

    /// Components in the order xx, xy, xz, yy, yz, zz.
    pub fn from_array(c: [f64; 6]) -> Self {
        SymTensor3 {
            xx: c[0],
            xy: c[1],
            xz: c[2],
            yy: c[3],
            yz: c[4],
            zz: c[5],
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.xx, self.xy, self.xz, self.yy, self.yz, self.zz]
    }

    /// Takes the upper triangle; the lower one is ignored.
    pub fn from_upper(m: &Matrix3<f64>) -> Self {
        SymTensor3 {
            xx: m[(0, 0)],
            xy: m[(0, 1)],
            xz: m[(0, 2)],
            yy: m[(1, 1)],
            yz: m[(1, 2)],
            zz: m[(2, 2)],
        }
    }

    pub fn to_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.xx, self.xy, self.xz, //
            self.xy, self.yy, self.yz, //
            self.xz, self.yz, self.zz,
        )
    }

    pub fn det(&self) -> f64 {
        self.xx * (self.yy * self.zz - self.yz * self.yz)
            - self.xy * (self.xy * self.zz - self.yz * self.xz)
            + self.xz * (self.xy * self.yz - self.yy * self.xz)
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy + self.zz
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> [f64; 3] {
        let e = SymmetricEigen::new(self.to_matrix()).eigenvalues;
        let mut v = [e[0], e[1], e[2]];
        v.sort_by(|a, b| a.total_cmp(b));
        v
    }

    pub fn max_abs_diff(&self, other: &SymTensor3) -> f64 {
        self.to_array()
            .iter()
            .zip(other.to_array().iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|c| c.is_finite())
    }

    /// Q·T·Qᵀ.
    pub fn conjugate(&self, q: &Matrix3<f64>) -> SymTensor3 {
        SymTensor3::from_upper(&(q * self.to_matrix() * q.transpose()))
    }
}

impl Default for SymTensor3 {
    fn default() -> Self {
        SymTensor3::IDENTITY
    }
}
