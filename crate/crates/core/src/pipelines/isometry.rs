use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model_spaces::{supporting_functional, Point, C64, ONE, ZERO};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IsometryKind {
    Rotation,
    RankOneContraction,
    Identity,
}

/// A map `X -> X` as a dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct IsometryBlock {
    pub matrix: Matrix,
    pub kind: IsometryKind,
}

impl IsometryBlock {
    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        self.matrix.mul_vec(x)
    }

    /// `U - I`.
    pub fn deviation(&self) -> Matrix {
        self.matrix.sub(&Matrix::identity(self.matrix.rows))
    }
}

const UNIT_TOL: f64 = 1e-8;

fn hermitian(x: &[C64], y: &[C64]) -> C64 {
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

fn unit(x: &Point, what: &str) -> Result<Vec<C64>> {
    let n = x.norm();
    if (n - 1.0).abs() > UNIT_TOL {
        return Err(Error::Precondition(format!("{what} has norm {n}, expected 1")));
    }
    Ok(x.coords.iter().map(|z| z / n).collect())
}

/// The rotation of the (complex) plane `span{x, y}` taking `x` to `y`,
/// identity on the orthogonal complement.
///
/// With `y = a x + b e`, `e` a unit vector orthogonal to `x` and `b >= 0`,
/// the plane map is `[[a, -b], [b, conj a]]`; its eigenvalues are
/// `exp(+-i phi)` with `cos phi = Re a`, so `||U - I|| = ||x - y||`.
/// When `y` is a unimodular multiple of `x` (including `y = -x`) the map
/// is `I + (a - 1) x x^H`.
pub fn micro_transitive_isometry(x: &Point, y: &Point) -> Result<IsometryBlock> {
    if x.space != y.space {
        return Err(Error::DimensionMismatch {
            expected: x.space.dim,
            found: y.space.dim,
        });
    }
    if !x.space.is_hilbert() {
        return Err(Error::UnsupportedSpace(format!(
            "{} is not a Hilbert space",
            x.space
        )));
    }
    let d = x.space.dim;
    let xs = unit(x, "x")?;
    let ys = unit(y, "y")?;
    if xs == ys {
        return Ok(IsometryBlock {
            matrix: Matrix::identity(d),
            kind: IsometryKind::Identity,
        });
    }
    let a = hermitian(&xs, &ys);
    let r: Vec<C64> = ys.iter().zip(&xs).map(|(v, u)| v - a * u).collect();
    let b = r.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let xc: Vec<C64> = xs.iter().map(|z| z.conj()).collect();
    let mut u = Matrix::identity(d).add(&Matrix::outer(&xs, &xc).scale(a - ONE));
    if b > 1e-15 {
        let e: Vec<C64> = r.iter().map(|z| z / b).collect();
        let ec: Vec<C64> = e.iter().map(|z| z.conj()).collect();
        let bb = C64::new(b, 0.0);
        u = u
            .add(&Matrix::outer(&e, &xc).scale(bb))
            .sub(&Matrix::outer(&xs, &ec).scale(bb))
            .add(&Matrix::outer(&e, &ec).scale(a.conj() - ONE));
    }
    Ok(IsometryBlock {
        matrix: u,
        kind: IsometryKind::Rotation,
    })
}

/// The rank-one map `w (x) J(xhat)` with `J(xhat)` a unit functional
/// attaining its norm at `xhat`.
pub fn contraction_through_point(xhat: &Point, w: &Point) -> Result<IsometryBlock> {
    if xhat.space != w.space {
        return Err(Error::DimensionMismatch {
            expected: xhat.space.dim,
            found: w.space.dim,
        });
    }
    let n = xhat.norm();
    if n == 0.0 {
        return Err(Error::Precondition("xhat = 0".into()));
    }
    if (n - 1.0).abs() > UNIT_TOL {
        return Err(Error::Precondition(format!("xhat has norm {n}, expected 1")));
    }
    if w.norm() > 1.0 + UNIT_TOL {
        return Err(Error::Precondition(format!("w has norm {} > 1", w.norm())));
    }
    let j = supporting_functional(&xhat.space, &xhat.coords)
        .ok_or_else(|| Error::NoNormingSelection("xhat = 0".into()))?;
    let matrix = if w.coords.iter().all(|z| *z == ZERO) {
        Matrix::zeros(w.space.dim, w.space.dim)
    } else {
        Matrix::outer(&w.coords, &j)
    };
    Ok(IsometryBlock {
        matrix,
        kind: IsometryKind::RankOneContraction,
    })
}
