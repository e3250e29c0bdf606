//! Brouwer degree of a vector field on a box.
//!
//! The primary engine enumerates zeros with multi-start damped Newton and
//! adds up the signs of the Jacobian determinants at them. In the plane an
//! independent boundary winding count is available as a cross-check.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{norm, FieldHandle};

/// Axis-aligned box `Π [lowerᵢ, upperᵢ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl DomainBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::InvalidInput(format!(
                "box bounds must be nonempty and of equal length ({} vs {})",
                lower.len(),
                upper.len()
            )));
        }
        for (i, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !(l < u) || !l.is_finite() || !u.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "box coordinate {i}: need finite lower < upper, got [{l}, {u}]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// `[-r, r]^dim`.
    pub fn symmetric(dim: usize, r: f64) -> Result<Self> {
        Self::new(vec![-r; dim], vec![r; dim])
    }

    pub fn from_bounds(bounds: &[(f64, f64)]) -> Result<Self> {
        Self::new(
            bounds.iter().map(|b| b.0).collect(),
            bounds.iter().map(|b| b.1).collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn diameter(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| (u - l) * (u - l))
            .sum::<f64>()
            .sqrt()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (l + u)).collect()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && p.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (l, u))| *l <= *x && *x <= *u)
    }

    pub fn contains_strictly(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && p.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (l, u))| *l < *x && *x < *u)
    }

    /// True when the interiors do not intersect.
    pub fn is_disjoint(&self, other: &DomainBox) -> bool {
        (0..self.dim()).any(|i| self.upper[i] <= other.lower[i] || other.upper[i] <= self.lower[i])
    }

    /// Box with each side scaled by `factor` about the center.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let c = self.center();
        Self::new(
            self.lower.iter().zip(&c).map(|(l, c)| c + factor * (l - c)).collect(),
            self.upper.iter().zip(&c).map(|(u, c)| c + factor * (u - c)).collect(),
        )
    }

    /// Restriction to the first `n` coordinates.
    pub fn leading(&self, n: usize) -> Result<Self> {
        Self::new(self.lower[..n].to_vec(), self.upper[..n].to_vec())
    }

    /// Restriction to the coordinates from `start` on.
    pub fn trailing(&self, start: usize) -> Result<Self> {
        Self::new(self.lower[start..].to_vec(), self.upper[start..].to_vec())
    }

    /// Tensor grid with `per_axis` nodes per coordinate, endpoints included.
    pub fn grid(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let m = self.dim();
        let per_axis = per_axis.max(2);
        let total = per_axis.pow(m as u32);
        let mut out = Vec::with_capacity(total);
        for flat in 0..total {
            let mut rem = flat;
            let mut p = Vec::with_capacity(m);
            for i in 0..m {
                let k = rem % per_axis;
                rem /= per_axis;
                let s = k as f64 / (per_axis - 1) as f64;
                p.push(self.lower[i] + s * (self.upper[i] - self.lower[i]));
            }
            out.push(p);
        }
        out
    }

    /// Sample points on the boundary: a `per_face^(m-1)` grid on each of
    /// the `2m` faces.
    pub fn boundary_grid(&self, per_face: usize) -> Vec<Vec<f64>> {
        let m = self.dim();
        let per_face = per_face.max(2);
        let mut out = Vec::new();
        for axis in 0..m {
            for side in [self.lower[axis], self.upper[axis]] {
                if m == 1 {
                    out.push(vec![side]);
                    continue;
                }
                let total = per_face.pow((m - 1) as u32);
                for flat in 0..total {
                    let mut rem = flat;
                    let mut p = vec![0.0; m];
                    for (i, v) in p.iter_mut().enumerate() {
                        if i == axis {
                            *v = side;
                            continue;
                        }
                        let k = rem % per_face;
                        rem /= per_face;
                        let s = k as f64 / (per_face - 1) as f64;
                        *v = self.lower[i] + s * (self.upper[i] - self.lower[i]);
                    }
                    out.push(p);
                }
            }
        }
        out
    }
}

/// A located zero of a field.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroRecord {
    pub location: Vec<f64>,
    pub residual: f64,
    pub determinant: f64,
    /// `sign det J`, or 0 for a degenerate zero.
    pub index: i32,
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DegreeMethod {
    SignSum,
    Winding,
}

impl DegreeMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            DegreeMethod::SignSum => "sign-sum",
            DegreeMethod::Winding => "winding",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegreeResult {
    pub degree: i64,
    pub zeros: Vec<ZeroRecord>,
    pub method: DegreeMethod,
    pub boundary_min: f64,
    /// Distance of the raw winding count from the nearest integer.
    pub rounding_gap: Option<f64>,
    pub warnings: Vec<String>,
}

/// Tunables for zero enumeration and admissibility checking.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeParams {
    /// Newton starts per axis; `None` picks a default from the dimension.
    pub grid_density: Option<usize>,
    /// Residual `|F|` below which a Newton end point counts as a zero.
    pub newton_tol: f64,
    /// `None` means `1e-6 · diameter`.
    pub dedup_radius: Option<f64>,
    pub max_newton_iter: usize,
    /// Boundary samples per axis per face; `None` picks by dimension.
    pub boundary_samples: Option<usize>,
    /// Minimal sampled `|F|` on the boundary for the box to count as admissible.
    pub admissibility_threshold: f64,
    /// Zeros with `|det J| / max(1, Π‖rowᵢ‖)` below this are degenerate.
    pub degeneracy_threshold: f64,
}

impl Default for DegreeParams {
    fn default() -> Self {
        Self {
            grid_density: None,
            newton_tol: 1e-10,
            dedup_radius: None,
            max_newton_iter: 60,
            boundary_samples: None,
            admissibility_threshold: 1e-8,
            degeneracy_threshold: 1e-10,
        }
    }
}

impl DegreeParams {
    pub fn grid_density_for(&self, dim: usize) -> usize {
        self.grid_density.unwrap_or(match dim {
            0..=2 => 16,
            3 => 8,
            4 => 6,
            _ => 4,
        })
    }

    pub fn boundary_samples_for(&self, dim: usize) -> usize {
        self.boundary_samples.unwrap_or(match dim {
            0..=2 => 257,
            3 => 65,
            4 => 21,
            _ => 9,
        })
    }

    pub fn dedup_radius_for(&self, domain: &DomainBox) -> f64 {
        self.dedup_radius.unwrap_or(1e-6 * domain.diameter())
    }
}

const HEURISTIC_NOTE: &str = "admissibility checked by boundary sampling only";

fn check_square(field: &FieldHandle, domain: &DomainBox) -> Result<()> {
    if field.input_dim() != field.output_dim() || field.input_dim() != domain.dim() {
        return Err(Error::InvalidInput(format!(
            "field {} -> {} does not match box dimension {}",
            field.input_dim(),
            field.output_dim(),
            domain.dim()
        )));
    }
    Ok(())
}

/// Solve `J dx = rhs`; falls back to the minimum-norm least-squares step
/// when `J` is singular.
pub(crate) fn newton_direction(jac: DMatrix<f64>, rhs: DVector<f64>) -> Option<DVector<f64>> {
    if let Some(dx) = jac.clone().lu().solve(&rhs) {
        if dx.iter().all(|v| v.is_finite()) {
            return Some(dx);
        }
    }
    let svd = jac.svd(true, true);
    let eps = 1e-12 * svd.singular_values.max();
    svd.solve(&rhs, eps).ok().filter(|dx| dx.iter().all(|v| v.is_finite()))
}

/// Damped Newton from `start`; returns the end point and its residual.
fn newton_from(
    field: &FieldHandle,
    start: &[f64],
    max_iter: usize,
    escape_radius: f64,
    center: &[f64],
) -> Option<(Vec<f64>, f64)> {
    let mut x = start.to_vec();
    let mut f = field.eval(0.0, &x).ok()?;
    let mut r = norm(&f);
    for _ in 0..max_iter {
        if r == 0.0 {
            break;
        }
        let jac = field.jacobian(0.0, &x).ok()?;
        let dx = newton_direction(jac, -DVector::from_column_slice(&f))?;
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..=20 {
            let trial: Vec<f64> = x.iter().zip(dx.iter()).map(|(a, d)| a + step * d).collect();
            if let Ok(ft) = field.eval(0.0, &trial) {
                let rt = norm(&ft);
                if rt < r {
                    x = trial;
                    f = ft;
                    r = rt;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        let dist: f64 = norm(&x.iter().zip(center).map(|(a, c)| a - c).collect::<Vec<_>>());
        if dist > escape_radius {
            return None;
        }
        if step * dx.norm() <= 1e-15 * (1.0 + norm(&x)) {
            break;
        }
    }
    Some((x, r))
}

fn determinant_and_index(jac: &DMatrix<f64>, threshold: f64) -> (f64, i32, bool) {
    let det = jac.clone().lu().determinant();
    let scale: f64 = jac.row_iter().map(|r| r.norm()).product();
    let degenerate = !(scale > 0.0) || !det.is_finite() || det.abs() <= threshold * scale.max(1.0);
    let index = if degenerate {
        0
    } else if det > 0.0 {
        1
    } else {
        -1
    };
    (det, index, degenerate)
}

/// Multi-start damped Newton from every node of a grid over the box.
/// Converged points inside the box are deduplicated and classified.
pub fn find_zeros(
    field: &FieldHandle,
    domain: &DomainBox,
    grid_density: usize,
    newton_tol: f64,
    dedup_radius: f64,
) -> Result<Vec<ZeroRecord>> {
    let params = DegreeParams {
        grid_density: Some(grid_density),
        newton_tol,
        dedup_radius: Some(dedup_radius),
        ..DegreeParams::default()
    };
    find_zeros_with(field, domain, &params)
}

pub fn find_zeros_with(field: &FieldHandle, domain: &DomainBox, params: &DegreeParams) -> Result<Vec<ZeroRecord>> {
    check_square(field, domain)?;
    let density = params.grid_density_for(domain.dim());
    if density < 2 || !(params.newton_tol > 0.0) {
        return Err(Error::InvalidInput(
            "grid density must be at least 2 and tolerances positive".into(),
        ));
    }
    let dedup = params.dedup_radius_for(domain);
    if !(dedup > 0.0) {
        return Err(Error::InvalidInput("dedup radius must be positive".into()));
    }
    let center = domain.center();
    let escape = 2.0 * domain.diameter();
    let starts = domain.grid(density);
    let mut found: Vec<(Vec<f64>, f64)> = starts
        .par_iter()
        .filter_map(|s| newton_from(field, s, params.max_newton_iter, escape, &center))
        .filter(|(x, r)| *r <= params.newton_tol && domain.contains(x))
        .collect();

    found.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| lex_cmp(&a.0, &b.0)));
    let mut kept: Vec<(Vec<f64>, f64)> = Vec::new();
    for (x, r) in found {
        let duplicate = kept
            .iter()
            .any(|(y, _)| norm(&x.iter().zip(y).map(|(a, b)| a - b).collect::<Vec<_>>()) <= dedup);
        if !duplicate {
            kept.push((x, r));
        }
    }
    kept.sort_by(|a, b| lex_cmp(&a.0, &b.0));

    kept.into_iter()
        .map(|(location, residual)| {
            let jac = field.jacobian(0.0, &location)?;
            let (determinant, index, degenerate) = determinant_and_index(&jac, params.degeneracy_threshold);
            Ok(ZeroRecord {
                location,
                residual,
                determinant,
                index,
                degenerate,
            })
        })
        .collect()
}

fn inside_by(domain: &DomainBox, p: &[f64], margin: f64) -> bool {
    p.iter()
        .zip(domain.lower().iter().zip(domain.upper()))
        .all(|(x, (l, u))| *x > l + margin && *x < u - margin)
}

fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    std::cmp::Ordering::Equal
}

/// Index `sign det F'(zero)` of a nondegenerate zero.
pub fn local_index(field: &FieldHandle, zero: &[f64], newton_tol: f64) -> Result<i32> {
    if field.input_dim() != field.output_dim() || zero.len() != field.input_dim() {
        return Err(Error::InvalidInput("local index needs a square field".into()));
    }
    let r = field.norm_at(0.0, zero)?;
    if r > newton_tol {
        return Err(Error::InvalidInput(format!(
            "point is not a zero: |F| = {r:e} exceeds {newton_tol:e}"
        )));
    }
    let jac = field.jacobian(0.0, zero)?;
    let (determinant, index, degenerate) = determinant_and_index(&jac, DegreeParams::default().degeneracy_threshold);
    if degenerate {
        return Err(Error::DegenerateZero {
            location: zero.to_vec(),
            determinant,
        });
    }
    Ok(index)
}

/// Minimum of `|F|` over a sampled boundary grid. An evaluation failure on
/// the boundary is reported as an error.
pub fn boundary_min(field: &FieldHandle, domain: &DomainBox, per_face: usize) -> Result<f64> {
    check_square(field, domain)?;
    let pts = domain.boundary_grid(per_face);
    let norms: Vec<f64> = pts
        .par_iter()
        .map(|p| field.norm_at(0.0, p))
        .collect::<std::result::Result<_, _>>()?;
    Ok(norms.into_iter().fold(f64::INFINITY, f64::min))
}

/// `deg(F, box) = Σ sign det F'(ζ)` over the zeros found in the box.
pub fn degree_sign_sum(field: &FieldHandle, domain: &DomainBox, params: &DegreeParams) -> Result<DegreeResult> {
    check_square(field, domain)?;
    let bmin = boundary_min(field, domain, params.boundary_samples_for(domain.dim()))?;
    if !(bmin >= params.admissibility_threshold) {
        return Err(Error::Admissibility {
            boundary_min: bmin,
            threshold: params.admissibility_threshold,
        });
    }
    let zeros = find_zeros_with(field, domain, params)?;
    let margin = params.dedup_radius_for(domain);
    if let Some(z) = zeros.iter().find(|z| !inside_by(domain, &z.location, margin)) {
        return Err(Error::BoundaryZero {
            location: z.location.clone(),
            norm: z.residual,
        });
    }
    if let Some(z) = zeros.iter().find(|z| z.degenerate) {
        return Err(Error::DegenerateZero {
            location: z.location.clone(),
            determinant: z.determinant,
        });
    }
    let degree = zeros.iter().map(|z| i64::from(z.index)).sum();
    Ok(DegreeResult {
        degree,
        zeros,
        method: DegreeMethod::SignSum,
        boundary_min: bmin,
        rounding_gap: None,
        warnings: vec![HEURISTIC_NOTE.to_string()],
    })
}

/// Winding number of `F` along the positively oriented boundary of a
/// rectangle. Segments are bisected until the direction turns by less than
/// π/8 between neighbours.
pub fn degree_winding_2d(field: &FieldHandle, domain: &DomainBox, boundary_samples: usize) -> Result<DegreeResult> {
    check_square(field, domain)?;
    if domain.dim() != 2 {
        return Err(Error::InvalidInput("winding oracle requires a planar field".into()));
    }
    let (lo, hi) = (domain.lower(), domain.upper());
    let corners = [[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]];
    let n = boundary_samples.max(4);
    let near_zero = DegreeParams::default().admissibility_threshold;
    let mut walk = Walk {
        field,
        near_zero,
        total: 0.0,
        min_norm: f64::INFINITY,
    };
    for e in 0..4 {
        let (a, b) = (corners[e], corners[(e + 1) % 4]);
        let mut prev = a;
        let mut fprev = walk.sample(&prev)?;
        for i in 1..=n {
            let s = i as f64 / n as f64;
            let p = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
            let fp = walk.sample(&p)?;
            walk.segment(prev, fprev, p, fp, 0)?;
            prev = p;
            fprev = fp;
        }
    }
    let turns = walk.total / std::f64::consts::TAU;
    let degree = turns.round();
    Ok(DegreeResult {
        degree: degree as i64,
        zeros: Vec::new(),
        method: DegreeMethod::Winding,
        boundary_min: walk.min_norm,
        rounding_gap: Some((turns - degree).abs()),
        warnings: Vec::new(),
    })
}

struct Walk<'a> {
    field: &'a FieldHandle,
    near_zero: f64,
    total: f64,
    min_norm: f64,
}

const MAX_REFINE: usize = 40;

impl Walk<'_> {
    fn sample(&mut self, p: &[f64; 2]) -> Result<[f64; 2]> {
        let v = self.field.eval(0.0, p)?;
        let n = norm(&v);
        self.min_norm = self.min_norm.min(n);
        if !(n >= self.near_zero) {
            return Err(Error::BoundaryZero {
                location: p.to_vec(),
                norm: n,
            });
        }
        Ok([v[0], v[1]])
    }

    fn segment(&mut self, p: [f64; 2], fp: [f64; 2], q: [f64; 2], fq: [f64; 2], depth: usize) -> Result<()> {
        let cross = fp[0] * fq[1] - fp[1] * fq[0];
        let dot = fp[0] * fq[0] + fp[1] * fq[1];
        let step = cross.atan2(dot);
        if step.abs() <= std::f64::consts::PI / 8.0 {
            self.total += step;
            return Ok(());
        }
        if depth >= MAX_REFINE {
            if step.abs() > std::f64::consts::FRAC_PI_2 {
                return Err(Error::AngleStep { step });
            }
            self.total += step;
            return Ok(());
        }
        let m = [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
        let fm = self.sample(&m)?;
        self.segment(p, fp, m, fm, depth + 1)?;
        self.segment(m, fm, q, fq, depth + 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example_reduced_map() -> FieldHandle {
        FieldHandle::from_expressions(&["x*(y^2 + 1)", "x^3 - y^3 - 3*y"], &["x", "y"], None, &[]).unwrap()
    }

    fn neg_identity(m: usize) -> FieldHandle {
        FieldHandle::from_fn(m, m, |x, o| {
            for (o, x) in o.iter_mut().zip(x) {
                *o = -x;
            }
        })
    }

    #[test]
    fn box_validation() {
        assert!(DomainBox::new(vec![0.0], vec![0.0]).is_err());
        assert!(DomainBox::new(vec![], vec![]).is_err());
        assert!(DomainBox::new(vec![0.0, 1.0], vec![1.0]).is_err());
        let b = DomainBox::symmetric(2, 1.0).unwrap();
        assert_eq!(b.grid(3).len(), 9);
        assert_eq!(b.boundary_grid(5).len(), 20);
        assert!(b.contains_strictly(&[0.0, 0.0]));
        assert!(!b.contains_strictly(&[1.0, 0.0]));
    }

    #[test]
    fn disjointness() {
        let a = DomainBox::from_bounds(&[(0.0, 1.0), (0.0, 1.0)]).unwrap();
        let b = DomainBox::from_bounds(&[(1.0, 2.0), (0.0, 1.0)]).unwrap();
        let c = DomainBox::from_bounds(&[(0.5, 2.0), (0.5, 1.0)]).unwrap();
        assert!(a.is_disjoint(&b));
        assert!(!a.is_disjoint(&c));
    }

    #[test]
    fn zeros_of_reduced_map() {
        let f = example_reduced_map();
        let b = DomainBox::symmetric(2, 2.0).unwrap();
        let z = find_zeros(&f, &b, 16, 1e-10, 1e-6).unwrap();
        assert_eq!(z.len(), 1);
        assert!(norm(&z[0].location) < 1e-12);
        assert_eq!(z[0].index, -1);
        assert!((z[0].determinant + 3.0).abs() < 1e-12);
    }

    #[test]
    fn zeros_of_identity() {
        let b = DomainBox::symmetric(2, 1.0).unwrap();
        let z = find_zeros(&FieldHandle::identity(2), &b, 16, 1e-10, 1e-6).unwrap();
        assert_eq!(z.len(), 1);
        assert_eq!(z[0].location, vec![0.0, 0.0]);
    }

    #[test]
    fn zeros_of_three_dimensional_reduced_map() {
        let f = FieldHandle::from_expressions(&["x1", "1 + x2^3", "x1^2 - y"], &["x1", "x2", "y"], None, &[]).unwrap();
        let b = DomainBox::symmetric(3, 2.0).unwrap();
        let z = find_zeros(&f, &b, 8, 1e-10, 1e-6).unwrap();
        assert_eq!(z.len(), 1);
        let expected = [0.0, -1.0, 0.0];
        for (a, e) in z[0].location.iter().zip(expected) {
            assert!((a - e).abs() < 1e-8);
        }
    }

    #[test]
    fn no_zeros_is_not_an_error() {
        let f = FieldHandle::from_fn(2, 2, |x, o| {
            o[0] = 1.0 + x[0] * x[0];
            o[1] = x[1];
        });
        let b = DomainBox::symmetric(2, 1.0).unwrap();
        assert!(find_zeros(&f, &b, 8, 1e-10, 1e-6).unwrap().is_empty());
        let d = degree_sign_sum(&f, &b, &DegreeParams::default()).unwrap();
        assert_eq!(d.degree, 0);
    }

    #[test]
    fn local_indices() {
        for m in 1..=4 {
            assert_eq!(local_index(&FieldHandle::identity(m), &vec![0.0; m], 1e-12).unwrap(), 1);
        }
        assert_eq!(local_index(&neg_identity(3), &[0.0; 3], 1e-12).unwrap(), -1);
        assert_eq!(local_index(&example_reduced_map(), &[0.0, 0.0], 1e-12).unwrap(), -1);
        let flat = FieldHandle::from_fn(2, 2, |x, o| {
            o[0] = x[0] * x[0];
            o[1] = x[1];
        });
        assert!(matches!(
            local_index(&flat, &[0.0, 0.0], 1e-12),
            Err(Error::DegenerateZero { .. })
        ));
        assert!(local_index(&FieldHandle::identity(2), &[0.5, 0.0], 1e-12).is_err());
    }

    #[test]
    fn sign_sum_examples() {
        let p = DegreeParams::default();
        let d = degree_sign_sum(&example_reduced_map(), &DomainBox::symmetric(2, 2.0).unwrap(), &p).unwrap();
        assert_eq!(d.degree, -1);
        assert_eq!(d.zeros.len(), 1);
        for m in 1..=3 {
            let d = degree_sign_sum(&FieldHandle::identity(m), &DomainBox::symmetric(m, 1.0).unwrap(), &p).unwrap();
            assert_eq!(d.degree, 1);
        }
        let phi = FieldHandle::from_expressions(&["x + y", "y^3 + y - x^2"], &["x", "y"], None, &[]).unwrap();
        let d = degree_sign_sum(&phi, &DomainBox::symmetric(2, 2.0).unwrap(), &p).unwrap();
        assert_eq!(d.degree, 1);
    }

    #[test]
    fn sign_sum_rejects_boundary_zero() {
        let shifted = FieldHandle::from_fn(2, 2, |x, o| {
            o[0] = x[0] - 1.0;
            o[1] = x[1];
        });
        let err = degree_sign_sum(
            &shifted,
            &DomainBox::symmetric(2, 1.0).unwrap(),
            &DegreeParams::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Admissibility { .. } | Error::BoundaryZero { .. }));
    }

    #[test]
    fn sign_sum_rejects_degenerate_zero() {
        // z ↦ z² in real coordinates, shifted so no boundary sample hits zero
        let f = FieldHandle::from_fn(2, 2, |x, o| {
            o[0] = x[0] * x[0] - x[1] * x[1];
            o[1] = 2.0 * x[0] * x[1];
        });
        let b = DomainBox::from_bounds(&[(-1.0, 1.1), (-0.9, 1.0)]).unwrap();
        let err = degree_sign_sum(&f, &b, &DegreeParams::default()).unwrap_err();
        assert!(matches!(err, Error::DegenerateZero { .. }), "{err:?}");
    }

    #[test]
    fn winding_examples() {
        let b = DomainBox::symmetric(2, 1.0).unwrap();
        let w = degree_winding_2d(&FieldHandle::identity(2), &b, 64).unwrap();
        assert_eq!(w.degree, 1);
        assert!(w.rounding_gap.unwrap() < 1e-12);

        let square = FieldHandle::from_fn(2, 2, |x, o| {
            o[0] = x[0] * x[0] - x[1] * x[1];
            o[1] = 2.0 * x[0] * x[1];
        });
        assert_eq!(degree_winding_2d(&square, &b, 64).unwrap().degree, 2);

        let b2 = DomainBox::symmetric(2, 2.0).unwrap();
        assert_eq!(degree_winding_2d(&example_reduced_map(), &b2, 64).unwrap().degree, -1);
    }

    #[test]
    fn winding_refines_coarse_sampling() {
        let b = DomainBox::symmetric(2, 1.0).unwrap();
        let cube = FieldHandle::from_fn(2, 2, |x, o| {
            // Re/Im of (x + iy)^5
            let (a, c) = (x[0], x[1]);
            let z2 = (a * a - c * c, 2.0 * a * c);
            let z4 = (z2.0 * z2.0 - z2.1 * z2.1, 2.0 * z2.0 * z2.1);
            o[0] = z4.0 * a - z4.1 * c;
            o[1] = z4.0 * c + z4.1 * a;
        });
        assert_eq!(degree_winding_2d(&cube, &b, 4).unwrap().degree, 5);
    }

    #[test]
    fn winding_rejects_boundary_zero() {
        let b = DomainBox::symmetric(2, 1.0).unwrap();
        let shifted = FieldHandle::from_fn(2, 2, |x, o| {
            o[0] = x[0] - 1.0;
            o[1] = x[1];
        });
        assert!(matches!(
            degree_winding_2d(&shifted, &b, 64),
            Err(Error::BoundaryZero { .. })
        ));
        assert!(degree_winding_2d(&FieldHandle::identity(3), &DomainBox::symmetric(3, 1.0).unwrap(), 8).is_err());
    }

    #[test]
    fn boundary_minimum_examples() {
        let b = DomainBox::symmetric(2, 1.0).unwrap();
        let m = boundary_min(&FieldHandle::identity(2), &b, 257).unwrap();
        assert!((m - 1.0).abs() < 1e-12);
        let c = FieldHandle::from_fn(2, 2, |_, o| {
            o[0] = 1.0;
            o[1] = 0.0;
        });
        let b3 = DomainBox::from_bounds(&[(-3.0, 5.0), (0.5, 0.7)]).unwrap();
        assert_eq!(boundary_min(&c, &b3, 16).unwrap(), 1.0);
        let m = boundary_min(&example_reduced_map(), &DomainBox::symmetric(2, 2.0).unwrap(), 64).unwrap();
        assert!(m > 0.0);
    }

    #[test]
    fn negated_identity_parity() {
        for m in 1..=4 {
            let d = degree_sign_sum(
                &neg_identity(m),
                &DomainBox::symmetric(m, 1.0).unwrap(),
                &DegreeParams::default(),
            )
            .unwrap();
            assert_eq!(d.degree, if m % 2 == 0 { 1 } else { -1 });
        }
    }
}
