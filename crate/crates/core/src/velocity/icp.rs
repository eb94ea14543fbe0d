//! Point-to-point ICP with closed-form (Kabsch) alignment.

use nalgebra::{Matrix3, Vector3};

use super::kdtree::KdTree;
use super::RigidTransform;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct IcpConfig {
    pub max_iters: usize,
    /// Stop when the mean correspondence distance changes by less than this.
    pub tol: f64,
}

impl Default for IcpConfig {
    fn default() -> Self {
        Self {
            max_iters: 100,
            tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IcpResult {
    /// Maps source points into the destination frame.
    pub transform: RigidTransform,
    pub iterations: usize,
    pub converged: bool,
    /// Mean correspondence distance before each alignment step, then after
    /// the last one.
    pub history: Vec<f64>,
}

/// Least-squares rigid transform taking `src[i]` onto `dst[i]`.
pub fn kabsch(src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> Result<RigidTransform> {
    if src.len() != dst.len() {
        return Err(Error::Dimension("kabsch needs paired points".into()));
    }
    if src.len() < 3 {
        return Err(Error::DegenerateGeometry(format!("{} points, need at least 3", src.len())));
    }
    let n = src.len() as f64;
    let cs = src.iter().sum::<Vector3<f64>>() / n;
    let cd = dst.iter().sum::<Vector3<f64>>() / n;
    let mut h = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        h += (s - cs) * (d - cd).transpose();
    }
    let svd = h.svd(true, true);
    let sv = svd.singular_values;
    if !(sv[1] > 1e-12 * sv[0].max(f64::MIN_POSITIVE)) {
        return Err(Error::DegenerateGeometry("rank-deficient cross-covariance".into()));
    }
    let u = svd.u.expect("svd u");
    let vt = svd.v_t.expect("svd v_t");
    let v = vt.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let r = v * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * u.transpose();
    Ok(RigidTransform::new(r, cd - r * cs))
}

/// Registers `src` onto `dst` starting from the identity.
pub fn icp_register(src: &[Vector3<f64>], dst: &[Vector3<f64>], cfg: &IcpConfig) -> Result<IcpResult> {
    if src.len() < 3 || dst.len() < 3 {
        return Err(Error::DegenerateGeometry("ICP needs at least 3 points per cloud".into()));
    }
    if src.iter().chain(dst).any(|p| !p.iter().all(|c| c.is_finite())) {
        return Err(Error::Validation("non-finite point".into()));
    }
    let tree = KdTree::new(dst);
    let mut tr = RigidTransform::identity();
    let mut history = Vec::new();
    let mut matched = Vec::with_capacity(src.len());
    let mut moved = Vec::with_capacity(src.len());
    let mut converged = false;
    let mut iterations = 0;
    let mut prev = f64::INFINITY;
    while iterations < cfg.max_iters {
        moved.clear();
        matched.clear();
        let mut total = 0.0;
        for p in src {
            let q = tr.apply(p);
            let (j, d2) = tree.nearest(&q).expect("non-empty tree");
            total += d2.sqrt();
            moved.push(q);
            matched.push(dst[j]);
        }
        let mean = total / src.len() as f64;
        history.push(mean);
        if (prev - mean).abs() < cfg.tol || mean == 0.0 {
            converged = true;
            break;
        }
        prev = mean;
        let step = kabsch(&moved, &matched)?;
        tr = step.compose(&tr);
        iterations += 1;
    }
    Ok(IcpResult {
        transform: tr,
        iterations,
        converged,
        history,
    })
}
