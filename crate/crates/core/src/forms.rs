//! Differential forms on flat periodic grids and the Lie-derivative algebra.
//!
//! Forms are stored through Euclidean vector proxies:
//!
//! | grade     | 2D                  | 3D                         |
//! |-----------|---------------------|----------------------------|
//! | scalar    | `b`                 | `b`                        |
//! | one-form  | `A₁dx₁ + A₂dx₂`     | `A·dx`                     |
//! | two-form  | `ζ dx₁∧dx₂`         | `B·dS` (`B₁ = dx₂∧dx₃`, …) |
//! | density   | `D dx₁∧dx₂`         | `D d³x`                    |
//!
//! In 2D the two-form and the density are both top forms and share one
//! component. Every product is dealiased with the two-thirds rule, so for
//! band-limited inputs the operator identities hold to round-off.
//!
//! Dual elements (`DualForm`) pair with forms of one grade through the sum of
//! componentwise L² products; the diamond maps such a pair to a momentum
//! (a one-form density) defined by `⟨p ⋄ q, X⟩ = −⟨p, £_X q⟩`.

use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::grid::{dealias, dot_unchecked, gradient, partial, Field, PeriodicGrid};
use crate::noise::NoiseBasis;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Grade {
    Scalar,
    OneForm,
    TwoForm,
    Density,
}

impl Grade {
    pub fn degree(self, dims: usize) -> usize {
        match self {
            Grade::Scalar => 0,
            Grade::OneForm => 1,
            Grade::TwoForm => 2,
            Grade::Density => dims,
        }
    }

    /// Number of scalar components in `dims` dimensions.
    pub fn components(self, dims: usize) -> usize {
        match (self, dims) {
            (Grade::Scalar, _) | (Grade::Density, _) => 1,
            (Grade::OneForm, d) => d,
            (Grade::TwoForm, 2) => 1,
            (Grade::TwoForm, _) => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Grade::Scalar => "scalar",
            Grade::OneForm => "one_form",
            Grade::TwoForm => "two_form",
            Grade::Density => "density",
        }
    }

    pub fn parse(s: &str) -> Option<Grade> {
        match s {
            "scalar" => Some(Grade::Scalar),
            "one_form" => Some(Grade::OneForm),
            "two_form" => Some(Grade::TwoForm),
            "density" => Some(Grade::Density),
            _ => None,
        }
    }
}

fn check_components(grid: &PeriodicGrid, components: &[Field], expected: usize) -> Result<()> {
    if components.len() != expected {
        return Err(Error::ShapeMismatch {
            expected,
            found: components.len(),
        });
    }
    for c in components {
        grid.check_same(c.grid())?;
    }
    Ok(())
}

fn l2_norm(components: &[Field]) -> f64 {
    components
        .iter()
        .map(|c| dot_unchecked(c, c))
        .sum::<f64>()
        .sqrt()
}

/// A graded geometric quantity built from scalar component fields.
#[derive(Debug, Clone)]
pub struct DifferentialForm {
    grade: Grade,
    components: Vec<Field>,
}

impl DifferentialForm {
    pub fn new(grade: Grade, components: Vec<Field>) -> Result<Self> {
        let grid = components
            .first()
            .ok_or_else(|| Error::Unsupported("form without components".into()))?
            .grid()
            .clone();
        check_components(&grid, &components, grade.components(grid.dims()))?;
        Ok(Self { grade, components })
    }

    pub fn scalar(b: Field) -> Self {
        Self {
            grade: Grade::Scalar,
            components: vec![b],
        }
    }

    pub fn density(d: Field) -> Self {
        Self {
            grade: Grade::Density,
            components: vec![d],
        }
    }

    pub fn one_form(components: Vec<Field>) -> Result<Self> {
        Self::new(Grade::OneForm, components)
    }

    pub fn two_form(components: Vec<Field>) -> Result<Self> {
        Self::new(Grade::TwoForm, components)
    }

    pub fn zeros(grid: &PeriodicGrid, grade: Grade) -> Self {
        Self {
            grade,
            components: vec![Field::zeros(grid); grade.components(grid.dims())],
        }
    }

    pub fn grade(&self) -> Grade {
        self.grade
    }

    pub fn grid(&self) -> &PeriodicGrid {
        self.components[0].grid()
    }

    pub fn dims(&self) -> usize {
        self.grid().dims()
    }

    pub fn degree(&self) -> usize {
        self.grade.degree(self.dims())
    }

    pub fn is_top(&self) -> bool {
        self.degree() == self.dims()
    }

    pub fn components(&self) -> &[Field] {
        &self.components
    }

    pub fn into_components(self) -> Vec<Field> {
        self.components
    }

    /// L² norm of the component vector.
    pub fn norm(&self) -> f64 {
        l2_norm(&self.components)
    }

    pub fn max_abs(&self) -> f64 {
        self.components.iter().fold(0.0, |m, c| m.max(c.max_abs()))
    }

    pub fn map(&self, op: impl Fn(&Field) -> Field) -> Self {
        Self {
            grade: self.grade,
            components: self.components.iter().map(op).collect(),
        }
    }

    pub fn zip(&self, other: &Self, op: impl Fn(&Field, &Field) -> Field) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(Self {
            grade: self.grade,
            components: self
                .components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| op(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|c| c * s)
    }

    /// `self + alpha * other`.
    pub fn axpy(&self, alpha: f64, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a.axpy(alpha, b))
    }

    /// Grade-wise L² pairing of two forms of the same type.
    pub fn inner(&self, other: &Self) -> Result<f64> {
        self.check_compatible(other)?;
        Ok(self
            .components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| dot_unchecked(a, b))
            .sum())
    }

    pub fn dealiased(&self) -> Self {
        self.map(dealias)
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        self.grid().check_same(other.grid())?;
        let same_top = self.is_top() && other.is_top();
        if self.grade != other.grade && !same_top {
            return Err(Error::Unsupported(format!(
                "grades {} and {} do not match",
                self.grade.name(),
                other.grade.name()
            )));
        }
        Ok(())
    }

    fn with_grade(mut self, grade: Grade) -> Self {
        self.grade = grade;
        self
    }
}

/// Vector field on a grid with an optional validated incompressibility flag.
#[derive(Debug, Clone)]
pub struct VectorFieldOnGrid {
    components: Vec<Field>,
    divergence_free: bool,
    /// `gradient[j][i] = ∂_i X_j`, filled on first use.
    gradient: OnceLock<Arc<Vec<Vec<Field>>>>,
}

/// Relative tolerance used when validating `divergence_free`.
pub const DIVERGENCE_TOLERANCE: f64 = 1e-10;

impl VectorFieldOnGrid {
    pub fn new(components: Vec<Field>) -> Result<Self> {
        let grid = components
            .first()
            .ok_or_else(|| Error::Unsupported("vector field without components".into()))?
            .grid()
            .clone();
        check_components(&grid, &components, grid.dims())?;
        Ok(Self {
            components,
            divergence_free: false,
            gradient: OnceLock::new(),
        })
    }

    /// Builds a field flagged divergence-free; fails if the flag does not hold.
    pub fn divergence_free(components: Vec<Field>) -> Result<Self> {
        let mut v = Self::new(components)?;
        let residual = v.divergence_residual();
        let tolerance = DIVERGENCE_TOLERANCE * v.norm();
        if residual > tolerance {
            return Err(Error::NotDivergenceFree {
                residual,
                tolerance,
            });
        }
        v.divergence_free = true;
        Ok(v)
    }

    pub fn constant(grid: &PeriodicGrid, value: &[f64]) -> Result<Self> {
        if value.len() != grid.dims() {
            return Err(Error::ShapeMismatch {
                expected: grid.dims(),
                found: value.len(),
            });
        }
        Self::divergence_free(value.iter().map(|&v| Field::constant(grid, v)).collect())
    }

    pub fn zeros(grid: &PeriodicGrid) -> Self {
        Self {
            components: vec![Field::zeros(grid); grid.dims()],
            divergence_free: true,
            gradient: OnceLock::new(),
        }
    }

    /// `ẑ × ∇ξ = (−∂₂ξ, ∂₁ξ)` for a 2D stream function.
    pub fn from_stream_function(xi: &Field) -> Result<Self> {
        let dims = xi.grid().dims();
        if dims != 2 {
            return Err(Error::Dimension {
                required: 2,
                found: dims,
            });
        }
        Self::divergence_free(vec![-&partial(xi, 1), partial(xi, 0)])
    }

    pub fn grid(&self) -> &PeriodicGrid {
        self.components[0].grid()
    }

    pub fn dims(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Field] {
        &self.components
    }

    pub fn is_divergence_free(&self) -> bool {
        self.divergence_free
    }

    fn gradient(&self) -> &[Vec<Field>] {
        self.gradient
            .get_or_init(|| Arc::new(self.components.iter().map(gradient).collect()))
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.components)
    }

    pub fn max_abs(&self) -> f64 {
        self.components.iter().fold(0.0, |m, c| m.max(c.max_abs()))
    }

    pub fn divergence(&self) -> Field {
        div(&self.components)
    }

    /// L² norm of the divergence.
    pub fn divergence_residual(&self) -> f64 {
        let d = self.divergence();
        dot_unchecked(&d, &d).sqrt()
    }

    /// Spatial means of the components (the uniform part of the field).
    pub fn mean(&self) -> Vec<f64> {
        self.components.iter().map(Field::mean).collect()
    }

    /// The field with its spatial mean removed; flag is preserved.
    pub fn fluctuation(&self) -> Self {
        Self {
            components: self
                .components
                .iter()
                .map(|c| {
                    let m = c.mean();
                    c.map(|v| v - m)
                })
                .collect(),
            divergence_free: self.divergence_free,
            gradient: OnceLock::new(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            components: self.components.iter().map(|c| c * s).collect(),
            divergence_free: self.divergence_free,
            gradient: OnceLock::new(),
        }
    }

    /// Pairing `∫ m·X` with a momentum.
    pub fn pair(&self, m: &Momentum) -> Result<f64> {
        self.grid().check_same(m.grid())?;
        Ok(self
            .components
            .iter()
            .zip(&m.components)
            .map(|(a, b)| dot_unchecked(a, b))
            .sum())
    }

    /// Jacobi–Lie bracket `[X, Y] = (X·∇)Y − (Y·∇)X`, the Lie derivative of `Y` along `X`.
    pub fn bracket(&self, other: &Self) -> Result<Self> {
        self.grid().check_same(other.grid())?;
        let x = &self.components;
        let y = &other.components;
        Self::new(
            (0..self.dims())
                .map(|i| &advect(x, &y[i]) - &advect(y, &x[i]))
                .collect(),
        )
    }
}

/// Element of the L² dual of forms of a given primal grade.
#[derive(Debug, Clone)]
pub struct DualForm {
    primal: Grade,
    components: Vec<Field>,
}

impl DualForm {
    pub fn new(primal: Grade, components: Vec<Field>) -> Result<Self> {
        let grid = components
            .first()
            .ok_or_else(|| Error::Unsupported("dual element without components".into()))?
            .grid()
            .clone();
        check_components(&grid, &components, primal.components(grid.dims()))?;
        Ok(Self { primal, components })
    }

    pub fn zeros(grid: &PeriodicGrid, primal: Grade) -> Self {
        Self {
            primal,
            components: vec![Field::zeros(grid); primal.components(grid.dims())],
        }
    }

    pub fn primal(&self) -> Grade {
        self.primal
    }

    pub fn grid(&self) -> &PeriodicGrid {
        self.components[0].grid()
    }

    pub fn components(&self) -> &[Field] {
        &self.components
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.components)
    }

    /// `⟨p, q⟩ = Σ_i ∫ p_i q_i`.
    pub fn pair(&self, q: &DifferentialForm) -> Result<f64> {
        self.grid().check_same(q.grid())?;
        let dims = q.dims();
        if self.primal.degree(dims) != q.degree() {
            return Err(Error::Unsupported(format!(
                "dual of {} cannot pair with {}",
                self.primal.name(),
                q.grade().name()
            )));
        }
        Ok(self
            .components
            .iter()
            .zip(q.components())
            .map(|(a, b)| dot_unchecked(a, b))
            .sum())
    }
}

/// One-form density `m·dx ⊗ d^n x`, the output of the diamond.
#[derive(Debug, Clone)]
pub struct Momentum {
    components: Vec<Field>,
}

impl Momentum {
    pub fn new(components: Vec<Field>) -> Result<Self> {
        let grid = components
            .first()
            .ok_or_else(|| Error::Unsupported("momentum without components".into()))?
            .grid()
            .clone();
        check_components(&grid, &components, grid.dims())?;
        Ok(Self { components })
    }

    pub fn grid(&self) -> &PeriodicGrid {
        self.components[0].grid()
    }

    pub fn components(&self) -> &[Field] {
        &self.components
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.components)
    }

    pub fn add(&self, other: &Momentum) -> Result<Momentum> {
        self.grid().check_same(other.grid())?;
        Ok(Momentum {
            components: self
                .components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &Momentum) -> Result<Momentum> {
        self.add(&Momentum {
            components: other.components.iter().map(|c| -c).collect(),
        })
    }

    /// `£_X m = (X·∇)m + (∇X)ᵀ m + m div X`.
    pub fn lie_derivative(&self, x: &VectorFieldOnGrid) -> Result<Momentum> {
        self.grid().check_same(x.grid())?;
        let xs = x.components();
        let m = &self.components;
        let divx = div(xs);
        let d = xs.len();
        let components = (0..d)
            .map(|i| {
                let mut terms = vec![advect(xs, &m[i]), pmul(&m[i], &divx)];
                for (j, mj) in m.iter().enumerate() {
                    terms.push(pmul(mj, &partial(&xs[j], i)));
                }
                sum(&terms)
            })
            .collect();
        Ok(Momentum { components })
    }
}

// --- pointwise helpers: every product is dealiased ---

fn pmul(a: &Field, b: &Field) -> Field {
    dealias(&a.mul(b))
}

fn sum(terms: &[Field]) -> Field {
    let refs: Vec<(f64, &Field)> = terms.iter().map(|t| (1.0, t)).collect();
    Field::combination(&refs)
}

fn dot(a: &[Field], b: &[Field]) -> Field {
    let products: Vec<Field> = a.iter().zip(b).map(|(x, y)| x.mul(y)).collect();
    dealias(&sum(&products))
}

/// `(X·∇) f`.
fn advect(x: &[Field], f: &Field) -> Field {
    let g = gradient(f);
    dot(x, &g)
}

fn div(v: &[Field]) -> Field {
    let terms: Vec<Field> = v.iter().enumerate().map(|(a, c)| partial(c, a)).collect();
    sum(&terms)
}

fn curl3(a: &[Field]) -> Vec<Field> {
    vec![
        &partial(&a[2], 1) - &partial(&a[1], 2),
        &partial(&a[0], 2) - &partial(&a[2], 0),
        &partial(&a[1], 0) - &partial(&a[0], 1),
    ]
}

fn cross3(a: &[Field], b: &[Field]) -> Vec<Field> {
    vec![
        dealias(&a[1].mul(&b[2]).zip(&a[2].mul(&b[1]), |x, y| x - y)),
        dealias(&a[2].mul(&b[0]).zip(&a[0].mul(&b[2]), |x, y| x - y)),
        dealias(&a[0].mul(&b[1]).zip(&a[1].mul(&b[0]), |x, y| x - y)),
    ]
}

fn scale_vec(s: &Field, v: &[Field]) -> Vec<Field> {
    v.iter().map(|c| pmul(s, c)).collect()
}

fn check_pair(x: &VectorFieldOnGrid, grid: &PeriodicGrid) -> Result<()> {
    x.grid().check_same(grid)
}

/// Curl of a 3D one-form proxy (vector proxy of `dA`).
pub fn curl(a: &[Field]) -> Result<Vec<Field>> {
    let dims = a[0].grid().dims();
    if dims != 3 || a.len() != 3 {
        return Err(Error::Dimension {
            required: 3,
            found: dims,
        });
    }
    Ok(curl3(a))
}

/// `d q`, raising the degree by one.
pub fn exterior_derivative(q: &DifferentialForm) -> Result<DifferentialForm> {
    let c = q.components();
    let dims = q.dims();
    if q.is_top() {
        return Err(Error::TopGrade(q.grade()));
    }
    Ok(match q.grade() {
        Grade::Scalar => DifferentialForm {
            grade: Grade::OneForm,
            components: gradient(&c[0]),
        },
        Grade::OneForm if dims == 2 => DifferentialForm {
            grade: Grade::TwoForm,
            components: vec![&partial(&c[1], 0) - &partial(&c[0], 1)],
        },
        Grade::OneForm => DifferentialForm {
            grade: Grade::TwoForm,
            components: curl3(c),
        },
        Grade::TwoForm => DifferentialForm {
            grade: Grade::Density,
            components: vec![div(c)],
        },
        Grade::Density => unreachable!("density is always top degree"),
    })
}

/// `i_X q`, lowering the degree by one.
pub fn interior_product(x: &VectorFieldOnGrid, q: &DifferentialForm) -> Result<DifferentialForm> {
    check_pair(x, q.grid())?;
    let xs = x.components();
    let c = q.components();
    let dims = q.dims();
    Ok(match (q.grade(), dims) {
        (Grade::Scalar, _) => return Err(Error::InteriorOfScalar),
        (Grade::OneForm, _) => DifferentialForm::scalar(dot(xs, c)),
        // top form in 2D: i_X(ζ dx₁∧dx₂) = −ζX₂ dx₁ + ζX₁ dx₂
        (Grade::TwoForm, 2) | (Grade::Density, 2) => DifferentialForm {
            grade: Grade::OneForm,
            components: vec![-&pmul(&c[0], &xs[1]), pmul(&c[0], &xs[0])],
        },
        // i_X(B·dS) = (B × X)·dx
        (Grade::TwoForm, _) => DifferentialForm {
            grade: Grade::OneForm,
            components: cross3(c, xs),
        },
        // i_X(D d³x) = (D X)·dS
        (Grade::Density, _) => DifferentialForm {
            grade: Grade::TwoForm,
            components: scale_vec(&c[0], xs),
        },
    })
}

/// Lie derivative by the Cartan formula `£_X = d i_X + i_X d`.
pub fn lie_derivative(x: &VectorFieldOnGrid, q: &DifferentialForm) -> Result<DifferentialForm> {
    check_pair(x, q.grid())?;
    let grade = q.grade();
    let out = match grade {
        Grade::Scalar => interior_product(x, &exterior_derivative(q)?)?,
        _ if q.is_top() => exterior_derivative(&interior_product(x, q)?)?,
        _ => exterior_derivative(&interior_product(x, q)?)?
            .add(&interior_product(x, &exterior_derivative(q)?)?)?,
    };
    Ok(out.with_grade(grade))
}

/// Lie derivative by the vector-calculus formulas:
/// scalar `X·∇b`; one-form `(X·∇)A + A_j∇X_j`;
/// 3D two-form `(X·∇)B − (B·∇)X + B div X`; top form `div(D X)`.
pub fn lie_derivative_closed(x: &VectorFieldOnGrid, q: &DifferentialForm) -> Result<DifferentialForm> {
    check_pair(x, q.grid())?;
    let xs = x.components();
    let c = q.components();
    let d = xs.len();
    let components = match q.grade() {
        Grade::Scalar => vec![advect(xs, &c[0])],
        _ if q.is_top() => vec![div(&scale_vec(&c[0], xs))],
        Grade::OneForm => (0..d)
            .map(|i| {
                let grad_c = gradient(&c[i]);
                let dx = x.gradient();
                let products: Vec<Field> = (0..d)
                    .map(|j| xs[j].mul(&grad_c[j]).zip(&c[j].mul(&dx[j][i]), |a, b| a + b))
                    .collect();
                dealias(&sum(&products))
            })
            .collect(),
        Grade::TwoForm => {
            let dx = x.gradient();
            let divx = sum(&[dx[0][0].clone(), dx[1][1].clone(), dx[2][2].clone()]);
            (0..3)
                .map(|i| {
                    let grad_c = gradient(&c[i]);
                    let mut acc = c[i].mul(&divx);
                    for j in 0..3 {
                        acc = acc.zip(&xs[j].mul(&grad_c[j]), |a, b| a + b);
                        acc = acc.zip(&c[j].mul(&dx[i][j]), |a, b| a - b);
                    }
                    dealias(&acc)
                })
                .collect()
        }
        Grade::Density => unreachable!("density is always top degree"),
    };
    Ok(DifferentialForm {
        grade: q.grade(),
        components,
    })
}

/// L² transpose `£ᵀ_X p`, defined by `⟨£ᵀ_X p, q⟩ = ⟨p, £_X q⟩`.
pub fn lie_derivative_transpose(x: &VectorFieldOnGrid, p: &DualForm) -> Result<DualForm> {
    check_pair(x, p.grid())?;
    let xs = x.components();
    let c = p.components();
    let dims = xs.len();
    let top = p.primal.degree(dims) == dims;
    let components: Vec<Field> = match p.primal {
        // p is a density
        Grade::Scalar => vec![-&div(&scale_vec(&c[0], xs))],
        // p is a scalar
        _ if top => vec![-&advect(xs, &c[0])],
        // p is a vector density
        Grade::OneForm => {
            let divx = div(xs);
            (0..dims)
                .map(|i| -&sum(&[advect(xs, &c[i]), -&advect(c, &xs[i]), pmul(&c[i], &divx)]))
                .collect()
        }
        // p is a one-form
        Grade::TwoForm => (0..3)
            .map(|i| {
                let dxi: Vec<Field> = xs.iter().map(|xj| partial(xj, i)).collect();
                -&(&advect(xs, &c[i]) + &dot(c, &dxi))
            })
            .collect(),
        Grade::Density => unreachable!("density is always top degree"),
    };
    Ok(DualForm {
        primal: p.primal,
        components,
    })
}

/// Diamond `p ⋄ q`: scalar `−p∇b`; top form `D∇p`;
/// one-form `(p·∇)A − p_i∇A_i + A div p` (in 3D `−p × curl A + A div p`);
/// 3D two-form `B × curl p − p div B`.
pub fn diamond(p: &DualForm, q: &DifferentialForm) -> Result<Momentum> {
    p.grid().check_same(q.grid())?;
    let dims = q.dims();
    if p.primal.degree(dims) != q.degree() {
        return Err(Error::Unsupported(format!(
            "diamond of dual {} with {}",
            p.primal.name(),
            q.grade().name()
        )));
    }
    let pc = p.components();
    let qc = q.components();
    let components = match q.grade() {
        Grade::Scalar => gradient(&qc[0]).iter().map(|g| -&pmul(&pc[0], g)).collect(),
        _ if q.is_top() => scale_vec(&qc[0], &gradient(&pc[0])),
        Grade::OneForm => {
            let divp = div(pc);
            (0..dims)
                .map(|j| {
                    let dja: Vec<Field> = qc.iter().map(|a| partial(a, j)).collect();
                    sum(&[advect(pc, &qc[j]), -&dot(pc, &dja), pmul(&qc[j], &divp)])
                })
                .collect()
        }
        Grade::TwoForm => {
            let curlp = curl3(pc);
            let divb = div(qc);
            cross3(qc, &curlp)
                .iter()
                .zip(pc)
                .map(|(bc, pj)| bc - &pmul(pj, &divb))
                .collect()
        }
        Grade::Density => unreachable!("density is always top degree"),
    };
    Ok(Momentum { components })
}

/// Lie-dual `δ_ξ q = i_ξ d(i_ξ q)`. On scalars it is zero by convention.
pub fn lie_dual(xi: &VectorFieldOnGrid, q: &DifferentialForm) -> Result<DifferentialForm> {
    check_pair(xi, q.grid())?;
    if q.grade() == Grade::Scalar {
        return Ok(DifferentialForm::zeros(q.grid(), Grade::Scalar));
    }
    let inner = interior_product(xi, q)?;
    interior_product(xi, &exterior_derivative(&inner)?)
}

/// `δ_ξ d q + d δ_ξ q`, with each term dropped where it is undefined
/// (no `d` of a top form, no `δ` of a scalar).
pub fn lie_dual_square(xi: &VectorFieldOnGrid, q: &DifferentialForm) -> Result<DifferentialForm> {
    check_pair(xi, q.grid())?;
    let mut out = DifferentialForm::zeros(q.grid(), q.grade());
    if !q.is_top() {
        let dq = exterior_derivative(q)?;
        let t = lie_dual(xi, &dq)?;
        out = out.add(&t.with_grade(q.grade()))?;
    }
    if q.degree() >= 1 {
        let t = exterior_derivative(&lie_dual(xi, q)?)?;
        out = out.add(&t.with_grade(q.grade()))?;
    }
    Ok(out)
}

/// `Σ_j £_{ξ_j} £_{ξ_j} q` over the velocity fields of a noise basis.
pub fn lie_laplacian(basis: &NoiseBasis, q: &DifferentialForm) -> Result<DifferentialForm> {
    let fields = basis.velocity_fields()?;
    let mut out = DifferentialForm::zeros(q.grid(), q.grade());
    for xi in &fields {
        let once = lie_derivative_closed(xi, q)?;
        out = out.add(&lie_derivative_closed(xi, &once)?)?;
    }
    Ok(out)
}

/// Lie-Laplacian assembled from Lie-duals, `Σ_j (δ_{ξ_j} d + d δ_{ξ_j}) q`.
pub fn lie_laplacian_dual(basis: &NoiseBasis, q: &DifferentialForm) -> Result<DifferentialForm> {
    let fields = basis.velocity_fields()?;
    let mut out = DifferentialForm::zeros(q.grid(), q.grade());
    for xi in &fields {
        out = out.add(&lie_dual_square(xi, q)?)?;
    }
    Ok(out)
}

/// Helicity `∫ v·curl v d³x` of a 3D one-form.
pub fn helicity(v: &DifferentialForm) -> Result<f64> {
    let dims = v.dims();
    if dims != 3 {
        return Err(Error::Dimension {
            required: 3,
            found: dims,
        });
    }
    if v.grade() != Grade::OneForm {
        return Err(Error::Unsupported("helicity needs a one-form".into()));
    }
    let w = exterior_derivative(v)?;
    Ok(v
        .components()
        .iter()
        .zip(w.components())
        .map(|(a, b)| dot_unchecked(a, b))
        .sum())
}

/// Residual of `(£ᵀ_X p)⋄q − p⋄(£_X q) + £_X(p⋄q) = 0`, tested against probe
/// fields and normalised by the largest single term.
pub fn check_lemma22(
    p: &DualForm,
    q: &DifferentialForm,
    x: &VectorFieldOnGrid,
    probes: &[VectorFieldOnGrid],
) -> Result<f64> {
    let t1 = diamond(&lie_derivative_transpose(x, p)?, q)?;
    let t2 = diamond(p, &lie_derivative(x, q)?)?;
    let t3 = diamond(p, q)?.lie_derivative(x)?;
    let mut worst = 0.0f64;
    for eta in probes {
        let a = eta.pair(&t1)?;
        let b = eta.pair(&t2)?;
        let c = eta.pair(&t3)?;
        let scale = a.abs().max(b.abs()).max(c.abs());
        if scale > 0.0 {
            worst = worst.max((a - b + c).abs() / scale);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{NoiseBasis, NoiseMode};
    use crate::synth::{band_limited, solenoidal_field, vector_field};
    use proptest::prelude::*;
    use std::f64::consts::TAU;

    fn g2() -> PeriodicGrid {
        PeriodicGrid::new(&[32, 32]).unwrap()
    }

    fn g3() -> PeriodicGrid {
        PeriodicGrid::new(&[16, 16, 16]).unwrap()
    }

    fn rand_form(grid: &PeriodicGrid, grade: Grade, seed: u64, kmax: usize) -> DifferentialForm {
        let n = grade.components(grid.dims());
        let comps = (0..n)
            .map(|i| band_limited(grid, seed * 17 + i as u64, kmax, 1.0))
            .collect();
        DifferentialForm::new(grade, comps).unwrap()
    }

    fn rand_dual(grid: &PeriodicGrid, grade: Grade, seed: u64, kmax: usize) -> DualForm {
        DualForm::new(grade, rand_form(grid, grade, seed + 1000, kmax).into_components()).unwrap()
    }

    fn rand_vec(grid: &PeriodicGrid, seed: u64, kmax: usize, solenoidal: bool) -> VectorFieldOnGrid {
        if solenoidal {
            VectorFieldOnGrid::divergence_free(solenoidal_field(grid, seed, kmax, 1.0)).unwrap()
        } else {
            VectorFieldOnGrid::new(vector_field(grid, seed, kmax, 1.0)).unwrap()
        }
    }

    fn rel(a: &DifferentialForm, b: &DifferentialForm) -> f64 {
        a.sub(b).unwrap().norm() / a.norm().max(b.norm()).max(1e-300)
    }

    fn grades(dims: usize) -> Vec<Grade> {
        if dims == 2 {
            vec![Grade::Scalar, Grade::OneForm, Grade::TwoForm, Grade::Density]
        } else {
            vec![Grade::Scalar, Grade::OneForm, Grade::TwoForm, Grade::Density]
        }
    }

    #[test]
    fn d_of_constant_is_zero() {
        let g = g3();
        let b = DifferentialForm::scalar(Field::constant(&g, 2.5));
        assert!(exterior_derivative(&b).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn d_of_sin_x1_dx2() {
        // symbolic curl of (0, sin x₁, 0) is (0, 0, cos x₁)
        let g = g3();
        let a = DifferentialForm::one_form(vec![
            Field::zeros(&g),
            Field::from_fn(&g, |x| x[0].sin()),
            Field::zeros(&g),
        ])
        .unwrap();
        let da = exterior_derivative(&a).unwrap();
        assert_eq!(da.grade(), Grade::TwoForm);
        let cos = Field::from_fn(&g, |x| x[0].cos());
        assert!(da.components()[0].max_abs() < 1e-13);
        assert!(da.components()[1].max_abs() < 1e-13);
        assert!((&da.components()[2] - &cos).max_abs() < 1e-13);
        // in 2D the same form gives the pseudoscalar cos x₁
        let g = g2();
        let a = DifferentialForm::one_form(vec![Field::zeros(&g), Field::from_fn(&g, |x| x[0].sin())]).unwrap();
        let da = exterior_derivative(&a).unwrap();
        assert!((&da.components()[0] - &Field::from_fn(&g, |x| x[0].cos())).max_abs() < 1e-13);
    }

    #[test]
    fn top_grade_has_no_derivative() {
        let g = g2();
        let top = DifferentialForm::two_form(vec![Field::zeros(&g)]).unwrap();
        assert_eq!(exterior_derivative(&top).unwrap_err(), Error::TopGrade(Grade::TwoForm));
        let d = DifferentialForm::density(Field::zeros(&g3()));
        assert!(exterior_derivative(&d).is_err());
    }

    #[test]
    fn d_squared_vanishes() {
        for g in [g2(), g3()] {
            for (s, grade) in [Grade::Scalar, Grade::OneForm].into_iter().enumerate() {
                let q = rand_form(&g, grade, s as u64 + 3, 4);
                let dq = exterior_derivative(&q).unwrap();
                if dq.is_top() {
                    continue;
                }
                let ddq = exterior_derivative(&dq).unwrap();
                assert!(ddq.norm() <= 1e-12 * dq.norm().max(1.0) * 10.0);
            }
        }
    }

    #[test]
    fn curl_of_one_form_is_divergence_free() {
        let g = g3();
        let a = rand_form(&g, Grade::OneForm, 8, 4);
        let b = exterior_derivative(&a).unwrap();
        let divb = div(b.components());
        assert!(dot_unchecked(&divb, &divb).sqrt() <= 1e-10 * b.norm());
    }

    #[test]
    fn interior_product_cases() {
        let g = g3();
        let b = DifferentialForm::scalar(Field::constant(&g, 1.0));
        let e1 = VectorFieldOnGrid::constant(&g, &[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(interior_product(&e1, &b).unwrap_err(), Error::InteriorOfScalar);
        let dx1 = DifferentialForm::one_form(vec![
            Field::constant(&g, 1.0),
            Field::zeros(&g),
            Field::zeros(&g),
        ])
        .unwrap();
        let one = interior_product(&e1, &dx1).unwrap();
        assert!(one.components()[0].values().iter().all(|v| (v - 1.0).abs() < 1e-14));
        // keep X and q at a quarter of the grid so no intermediate product is truncated
        for g in [g2(), g3()] {
            let x = rand_vec(&g, 2, 2, false);
            let q = rand_form(&g, Grade::TwoForm, 5, 2);
            let iq = interior_product(&x, &q).unwrap();
            let iiq = interior_product(&x, &iq).unwrap();
            assert!(iiq.max_abs() <= 1e-12 * iq.max_abs().max(1.0));
        }
    }

    #[test]
    fn lie_derivative_examples() {
        let g = g2();
        let x = rand_vec(&g, 1, 4, false);
        let c = DifferentialForm::scalar(Field::constant(&g, 3.0));
        assert!(lie_derivative(&x, &c).unwrap().max_abs() < 1e-12);

        let e1 = VectorFieldOnGrid::constant(&g, &[1.0, 0.0]).unwrap();
        let b = DifferentialForm::scalar(Field::from_fn(&g, |x| x[0].sin()));
        let lb = lie_derivative(&e1, &b).unwrap();
        let cos = Field::from_fn(&g, |x| x[0].cos());
        assert!((&lb.components()[0] - &cos).max_abs() < 1e-12);
        // finite-difference cross-check
        let h = g.spacing(0);
        let fd = Field::from_fn(&g, |x| ((x[0] + h).sin() - (x[0] - h).sin()) / (2.0 * h));
        assert!((&lb.components()[0] - &fd).max_abs() < h * h);

        for g in [g2(), g3()] {
            let x = rand_vec(&g, 4, 4, true);
            let d = DifferentialForm::density(Field::constant(&g, 1.7));
            assert!(lie_derivative(&x, &d).unwrap().max_abs() < 1e-10);
        }
    }

    #[test]
    fn cartan_matches_closed_forms() {
        for g in [g2(), g3()] {
            for grade in grades(g.dims()) {
                for solenoidal in [false, true] {
                    let x = rand_vec(&g, 11, 4, solenoidal);
                    let q = rand_form(&g, grade, 12, 4);
                    let a = lie_derivative(&x, &q).unwrap();
                    let b = lie_derivative_closed(&x, &q).unwrap();
                    assert!(rel(&a, &b) < 1e-12, "{grade:?} {}D", g.dims());
                }
            }
        }
    }

    #[test]
    fn two_form_closed_form_is_minus_curl_of_cross_when_b_solenoidal() {
        let g = g3();
        let x = rand_vec(&g, 3, 3, false);
        let b = exterior_derivative(&rand_form(&g, Grade::OneForm, 4, 3)).unwrap();
        let lb = lie_derivative_closed(&x, &b).unwrap();
        let xb = cross3(x.components(), b.components());
        let expect = DifferentialForm::two_form(curl3(&xb).iter().map(|c| -c).collect()).unwrap();
        assert!(rel(&lb, &expect) < 1e-12);
    }

    #[test]
    fn lie_commutes_with_d() {
        for g in [g2(), g3()] {
            for grade in [Grade::Scalar, Grade::OneForm, Grade::TwoForm] {
                let q = rand_form(&g, grade, 21, 3);
                if q.is_top() {
                    continue;
                }
                let x = rand_vec(&g, 22, 3, false);
                let a = exterior_derivative(&lie_derivative(&x, &q).unwrap()).unwrap();
                let b = lie_derivative(&x, &exterior_derivative(&q).unwrap()).unwrap();
                assert!(rel(&a, &b) < 1e-11);
            }
        }
    }

    #[test]
    fn transpose_and_diamond_duality() {
        for g in [g2(), g3()] {
            for grade in grades(g.dims()) {
                for solenoidal in [false, true] {
                    let x = rand_vec(&g, 31, 4, solenoidal);
                    let q = rand_form(&g, grade, 32, 4);
                    let p = rand_dual(&g, grade, 33, 4);
                    let lq = lie_derivative(&x, &q).unwrap();
                    let lhs = lie_derivative_transpose(&x, &p).unwrap().pair(&q).unwrap();
                    let rhs = p.pair(&lq).unwrap();
                    assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(rhs.abs()), "{grade:?}");
                    let m = diamond(&p, &q).unwrap();
                    let dual = x.pair(&m).unwrap();
                    assert!((dual + rhs).abs() <= 1e-10 * rhs.abs(), "{grade:?}");
                }
            }
        }
    }

    #[test]
    fn zero_dual_gives_zero() {
        let g = g2();
        let x = rand_vec(&g, 1, 4, false);
        let p = DualForm::zeros(&g, Grade::Scalar);
        assert_eq!(lie_derivative_transpose(&x, &p).unwrap().norm(), 0.0);
        let q = rand_form(&g, Grade::Scalar, 2, 4);
        assert_eq!(diamond(&p, &q).unwrap().norm(), 0.0);
        assert_eq!(check_lemma22(&p, &q, &x, &[x.clone()]).unwrap(), 0.0);
    }

    #[test]
    fn scalar_transpose_for_solenoidal_field() {
        // for div X = 0, −div(pX) = −X·∇p
        let g = g2();
        let x = rand_vec(&g, 5, 4, true);
        let p = rand_dual(&g, Grade::Scalar, 6, 4);
        let t = lie_derivative_transpose(&x, &p).unwrap();
        let expect = -&advect(x.components(), &p.components()[0]);
        assert!((&t.components()[0] - &expect).max_abs() < 1e-11);
    }

    fn random_probes(g: &PeriodicGrid, count: usize, kmax: usize) -> Vec<VectorFieldOnGrid> {
        (0..count).map(|s| rand_vec(g, 500 + s as u64, kmax, s % 2 == 0)).collect()
    }

    #[test]
    fn diamond_examples_by_duality() {
        let g = g2();
        let probes = random_probes(&g, 20, 3);
        // b = sin x₁, p = cos x₁ → −cos²x₁ e₁
        let b = DifferentialForm::scalar(Field::from_fn(&g, |x| x[0].sin()));
        let p = DualForm::new(Grade::Scalar, vec![Field::from_fn(&g, |x| x[0].cos())]).unwrap();
        let m = diamond(&p, &b).unwrap();
        let expect = Momentum::new(vec![
            Field::from_fn(&g, |x| -x[0].cos().powi(2)),
            Field::zeros(&g),
        ])
        .unwrap();
        assert!(m.sub(&expect).unwrap().norm() < 1e-12);
        for eta in &probes {
            let lhs = eta.pair(&expect).unwrap();
            let rhs = -p.pair(&lie_derivative(eta, &b).unwrap()).unwrap();
            assert!((lhs - rhs).abs() < 1e-10);
        }
        // D = 1 + 0.1 sin x₂, p = cos x₂ → −(1+0.1 sin x₂) sin x₂ e₂
        let d = DifferentialForm::density(Field::from_fn(&g, |x| 1.0 + 0.1 * x[1].sin()));
        let p = DualForm::new(Grade::Density, vec![Field::from_fn(&g, |x| x[1].cos())]).unwrap();
        let m = diamond(&p, &d).unwrap();
        let expect = Momentum::new(vec![
            Field::zeros(&g),
            Field::from_fn(&g, |x| -(1.0 + 0.1 * x[1].sin()) * x[1].sin()),
        ])
        .unwrap();
        assert!(m.sub(&expect).unwrap().norm() < 1e-12);
        for eta in &probes {
            let lhs = eta.pair(&expect).unwrap();
            let rhs = -p.pair(&lie_derivative(eta, &d).unwrap()).unwrap();
            assert!((lhs - rhs).abs() < 1e-10);
        }
    }

    #[test]
    fn one_form_diamond_matches_cross_product_form() {
        let g = g3();
        let a = rand_form(&g, Grade::OneForm, 40, 3);
        let p = rand_dual(&g, Grade::OneForm, 41, 3);
        let m = diamond(&p, &a).unwrap();
        let curl_a = curl3(a.components());
        let divp = div(p.components());
        let pc = cross3(p.components(), &curl_a);
        let expect: Vec<Field> = (0..3)
            .map(|i| &pmul(&a.components()[i], &divp) - &pc[i])
            .collect();
        let expect = Momentum::new(expect).unwrap();
        assert!(m.sub(&expect).unwrap().norm() <= 1e-12 * m.norm());
    }

    #[test]
    fn lemma_residual_all_grades() {
        for g in [g2(), PeriodicGrid::new(&[32, 32, 32]).unwrap()] {
            let probes = random_probes(&g, 4, 3);
            for grade in grades(g.dims()) {
                let x = rand_vec(&g, 61, 3, false);
                let q = rand_form(&g, grade, 62, 3);
                let p = rand_dual(&g, grade, 63, 3);
                let r = check_lemma22(&p, &q, &x, &probes).unwrap();
                assert!(r <= 1e-10, "{grade:?} {}D residual {r}", g.dims());
            }
        }
    }

    #[test]
    fn lie_dual_examples() {
        let g = g2();
        let e1 = VectorFieldOnGrid::constant(&g, &[1.0, 0.0]).unwrap();
        let dx1 = DifferentialForm::one_form(vec![Field::constant(&g, 1.0), Field::zeros(&g)]).unwrap();
        assert!(lie_dual(&e1, &dx1).unwrap().max_abs() < 1e-14);
        let q = DifferentialForm::one_form(vec![Field::from_fn(&g, |x| x[1].sin()), Field::zeros(&g)]).unwrap();
        // i_{e₁} d(sin x₂) = ∂₁ sin x₂ = 0
        assert!(lie_dual(&e1, &q).unwrap().max_abs() < 1e-13);
    }

    #[test]
    fn lie_square_equals_dual_sum() {
        for g in [g2(), PeriodicGrid::new(&[32, 32, 32]).unwrap()] {
            for grade in grades(g.dims()) {
                let xi = rand_vec(&g, 71, 3, false);
                let q = rand_form(&g, grade, 72, 3);
                let once = lie_derivative(&xi, &q).unwrap();
                let twice = lie_derivative(&xi, &once).unwrap();
                let dual = lie_dual_square(&xi, &q).unwrap();
                assert!(rel(&twice, &dual) < 1e-11, "{grade:?} {}D", g.dims());
            }
        }
    }

    fn const_basis(g: &PeriodicGrid) -> NoiseBasis {
        let d = g.dims();
        let fields = (0..d)
            .map(|j| {
                let mut e = vec![0.0; d];
                e[j] = 1.0;
                VectorFieldOnGrid::constant(g, &e).unwrap()
            })
            .collect();
        NoiseBasis::vector(fields, vec![1.0; d]).unwrap()
    }

    #[test]
    fn lie_laplacian_reductions() {
        let g = g2();
        let basis = const_basis(&g);
        let c = DifferentialForm::scalar(Field::constant(&g, 1.0));
        assert!(lie_laplacian(&basis, &c).unwrap().max_abs() < 1e-13);
        let f = rand_form(&g, Grade::Scalar, 80, 8);
        let ll = lie_laplacian(&basis, &f).unwrap();
        let lap = crate::grid::laplacian(&f.components()[0]);
        let err = (&ll.components()[0] - &lap).norm();
        assert!(err <= 1e-10 * lap.norm());

        // single constant ξ on e^{ik·x}: −(ξ·k)² q
        let xi = VectorFieldOnGrid::constant(&g, &[0.6, -0.3]).unwrap();
        let single = NoiseBasis::vector(vec![xi], vec![1.0]).unwrap();
        let k = [2.0, 3.0];
        let q = DifferentialForm::scalar(Field::from_fn(&g, |x| (k[0] * x[0] + k[1] * x[1]).cos()));
        let ll = lie_laplacian(&single, &q).unwrap();
        let s = 0.6 * k[0] - 0.3 * k[1];
        let expect = &q.components()[0] * (-s * s);
        assert!((&ll.components()[0] - &expect).max_abs() < 1e-12);
        // finite differences along ξ
        let h = 1e-3;
        let fd = Field::from_fn(&g, |x| {
            let f = |t: f64| (k[0] * (x[0] + 0.6 * t) + k[1] * (x[1] - 0.3 * t)).cos();
            (f(h) - 2.0 * f(0.0) + f(-h)) / (h * h)
        });
        assert!((&ll.components()[0] - &fd).max_abs() < 1e-5);
    }

    #[test]
    fn lie_laplacian_commutes_with_d() {
        for g in [g2(), g3()] {
            let fields = (0..2).map(|s| rand_vec(&g, 90 + s, 2, false)).collect();
            let basis = NoiseBasis::vector_unchecked(fields, vec![1.0, 0.5]);
            for grade in [Grade::Scalar, Grade::OneForm] {
                let q = rand_form(&g, grade, 95, 2);
                let a = exterior_derivative(&lie_laplacian(&basis, &q).unwrap()).unwrap();
                let b = lie_laplacian(&basis, &exterior_derivative(&q).unwrap()).unwrap();
                assert!(rel(&a, &b) < 1e-10);
                let c = lie_laplacian_dual(&basis, &q).unwrap();
                let d = lie_laplacian(&basis, &q).unwrap();
                assert!(rel(&c, &d) < 1e-10);
            }
        }
    }

    #[test]
    fn helicity_examples() {
        let g = g3();
        let phi = band_limited(&g, 3, 4, 1.0);
        let v = exterior_derivative(&DifferentialForm::scalar(phi)).unwrap();
        assert!(helicity(&v).unwrap().abs() <= 1e-10 * v.norm().powi(2));
        let e3 = DifferentialForm::one_form(vec![Field::zeros(&g), Field::zeros(&g), Field::constant(&g, 1.0)]).unwrap();
        assert!(helicity(&e3).unwrap().abs() < 1e-14);
        let abc = |g: &PeriodicGrid| {
            DifferentialForm::one_form(vec![
                Field::from_fn(g, |x| x[2].sin() + x[1].cos()),
                Field::from_fn(g, |x| x[0].sin() + x[2].cos()),
                Field::from_fn(g, |x| x[1].sin() + x[0].cos()),
            ])
            .unwrap()
        };
        let exact = 3.0 * TAU.powi(3);
        for n in [8, 16, 32] {
            let g = PeriodicGrid::new(&[n, n, n]).unwrap();
            let h = helicity(&abc(&g)).unwrap();
            assert!((h - exact).abs() <= 1e-12 * exact, "n = {n}");
        }
        assert!(helicity(&rand_form(&g2(), Grade::OneForm, 1, 3)).is_err());
    }

    #[test]
    fn vector_field_validation() {
        let g = g2();
        let bad = vec![Field::from_fn(&g, |x| x[0].sin()), Field::zeros(&g)];
        assert!(matches!(
            VectorFieldOnGrid::divergence_free(bad),
            Err(Error::NotDivergenceFree { .. })
        ));
        let xi = Field::from_fn(&g, |x| x[1].sin());
        let v = VectorFieldOnGrid::from_stream_function(&xi).unwrap();
        assert!((&v.components()[0] + &Field::from_fn(&g, |x| x[1].cos())).max_abs() < 1e-13);
        assert!(v.components()[1].max_abs() < 1e-13);
        assert!(VectorFieldOnGrid::from_stream_function(&Field::zeros(&g3())).is_err());
        let _ = NoiseMode::Vector;
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn prop_cartan_equals_closed(seed in 0u64..10_000, grade_ix in 0usize..4, three in any::<bool>()) {
            let g = if three { g3() } else { g2() };
            let grade = grades(g.dims())[grade_ix];
            let x = rand_vec(&g, seed, 3, seed % 2 == 0);
            let q = rand_form(&g, grade, seed + 1, 3);
            let a = lie_derivative(&x, &q).unwrap();
            let b = lie_derivative_closed(&x, &q).unwrap();
            prop_assert!(rel(&a, &b) < 1e-11);
        }

        #[test]
        fn prop_diamond_duality(seed in 0u64..10_000, grade_ix in 0usize..4, three in any::<bool>()) {
            let g = if three { g3() } else { g2() };
            let grade = grades(g.dims())[grade_ix];
            let x = rand_vec(&g, seed, 3, false);
            let q = rand_form(&g, grade, seed + 1, 3);
            let p = rand_dual(&g, grade, seed + 2, 3);
            let lhs = x.pair(&diamond(&p, &q).unwrap()).unwrap();
            let rhs = p.pair(&lie_derivative(&x, &q).unwrap()).unwrap();
            prop_assert!((lhs + rhs).abs() <= 1e-10 * rhs.abs().max(1e-12));
        }

        #[test]
        fn prop_integration_by_parts(seed in 0u64..10_000, axis in 0usize..2) {
            let g = g2();
            let f = band_limited(&g, seed, 8, 1.0);
            let h = band_limited(&g, seed + 7, 8, 1.0);
            let a = dot_unchecked(&partial(&f, axis), &h);
            let b = -dot_unchecked(&f, &partial(&h, axis));
            prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
        }

        #[test]
        fn prop_leibniz(seed in 0u64..10_000, axis in 0usize..2) {
            let g = g2();
            let f = band_limited(&g, seed, 8, 1.0);
            let h = band_limited(&g, seed + 3, 8, 1.0);
            let lhs = partial(&pmul(&f, &h), axis);
            let rhs = &pmul(&partial(&f, axis), &h) + &pmul(&f, &partial(&h, axis));
            prop_assert!((&lhs - &rhs).max_abs() <= 1e-10 * lhs.max_abs().max(1.0));
        }

        #[test]
        fn prop_helmholtz_two_sided(seed in 0u64..10_000, f_number in 0.0f64..3.0) {
            let g = g2();
            let mu = crate::synth::band_limited_zero_mean(&g, seed, 8, 1.0);
            let psi = crate::grid::invert_helmholtz(&mu, f_number).unwrap();
            let back = &crate::grid::laplacian(&psi) - &(&psi * f_number);
            prop_assert!((&back - &mu).max_abs() <= 1e-12 * mu.max_abs() * 10.0);
            let fwd = &crate::grid::laplacian(&mu) - &(&mu * f_number);
            let again = crate::grid::invert_helmholtz(&fwd, f_number).unwrap();
            prop_assert!((&again - &mu).max_abs() <= 1e-12 * mu.max_abs() * 10.0);
        }
    }
}
