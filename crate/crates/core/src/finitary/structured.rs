//! Structured functions `Σ_i c_i e(φ_i(x̂_ℓ) x_ℓ) ∏_j b_{i,j}(x̂_j)`.

use num_complex::Complex64;

use super::witness::BoxWitness;
use super::{GridFunction, Shape};
use crate::error::{LabError, Result};
use crate::numeric::{clip_radius, e, ComplexSum};

const DISC_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct Atom {
    pub c: Complex64,
    /// Table over `[-N..N]^{ℓ-1}` (the coordinates other than the last).
    pub phi: Vec<f64>,
    /// `b[j]` is a table over the coordinates other than `j`.
    pub b: Vec<Vec<Complex64>>,
}

impl Atom {
    /// The conjugate of a witness atom, so that `⟨f, atom⟩` equals the
    /// witness correlation.
    pub fn from_witness(w: &BoxWitness, c: Complex64) -> Atom {
        Atom {
            c,
            phi: w.phi.iter().map(|&p| if p == 0.0 { 0.0 } else { 1.0 - p }).collect(),
            b: w.b.iter().map(|t| t.iter().map(|v| v.conj()).collect()).collect(),
        }
    }
}

/// An `M`-structured function on `[-N..N]^ℓ`, optionally clipped radially.
#[derive(Clone, Debug, PartialEq)]
pub struct StructuredFunction {
    ell: usize,
    n: usize,
    atoms: Vec<Atom>,
    clip: Option<f64>,
}

impl StructuredFunction {
    pub fn new(ell: usize, n: usize, atoms: Vec<Atom>, clip: Option<f64>) -> Result<Self> {
        if ell < 1 {
            return Err(LabError::invalid("structured functions need ell >= 1"));
        }
        let shape = Shape::new(ell, n)?;
        let table = shape.hat_len();
        for (i, a) in atoms.iter().enumerate() {
            if a.phi.len() != table || a.b.len() != ell || a.b.iter().any(|t| t.len() != table) {
                return Err(LabError::invalid(format!("atom {i} has tables of the wrong size")));
            }
            if a.phi.iter().any(|p| !(0.0..1.0).contains(p)) {
                return Err(LabError::invalid(format!("atom {i} has a phase outside [0, 1)")));
            }
            if a.b.iter().flatten().any(|v| !(v.norm() <= 1.0 + DISC_TOL)) {
                return Err(LabError::invalid(format!("atom {i} has a factor outside the unit disc")));
            }
            if !a.c.re.is_finite() || !a.c.im.is_finite() {
                return Err(LabError::invalid(format!("atom {i} has a non-finite coefficient")));
            }
        }
        if let Some(r) = clip {
            if !(r > 0.0) {
                return Err(LabError::invalid("clip radius must be positive"));
            }
        }
        Ok(StructuredFunction { ell, n, atoms, clip })
    }

    pub fn zero(ell: usize, n: usize) -> Result<Self> {
        Self::new(ell, n, Vec::new(), None)
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn clip(&self) -> Option<f64> {
        self.clip
    }

    /// The structure parameter: the least `M` with at most `M` atoms and
    /// every `|c_i| ≤ M`.
    pub fn m(&self) -> usize {
        let cmax = self.atoms.iter().map(|a| a.c.norm()).fold(0.0, f64::max);
        self.atoms.len().max(cmax.ceil() as usize)
    }

    /// One atom without its coefficient, on the whole box.
    pub fn atom_values(&self, k: usize) -> Vec<Complex64> {
        let shape = Shape::new(self.ell, self.n).expect("validated");
        let a = &self.atoms[k];
        let last = self.ell - 1;
        let mut out = Vec::with_capacity(shape.len);
        shape.points(&shape.full_lo(), &shape.full_hi(), |_, x| {
            let mut p = e(a.phi[shape.hat_index(x, last)] * x[last] as f64);
            for (j, t) in a.b.iter().enumerate() {
                p *= t[shape.hat_index(x, j)];
            }
            out.push(p);
        });
        out
    }

    /// Values on `[-N..N]^ℓ`, atoms summed in order and then clipped.
    pub fn eval_grid(&self) -> GridFunction {
        let shape = Shape::new(self.ell, self.n).expect("validated");
        let mut acc = vec![Complex64::new(0.0, 0.0); shape.len];
        for k in 0..self.atoms.len() {
            let c = self.atoms[k].c;
            for (s, v) in acc.iter_mut().zip(self.atom_values(k)) {
                *s += c * v;
            }
        }
        if let Some(r) = self.clip {
            for s in &mut acc {
                *s = clip_radius(*s, r);
            }
        }
        GridFunction::new(self.ell, self.n, acc).expect("finite by construction")
    }

    pub fn eval(&self, x: &[i64]) -> Complex64 {
        let shape = Shape::new(self.ell, self.n).expect("validated");
        match shape.index(x) {
            Some(i) => self.eval_grid().values()[i],
            None => Complex64::new(0.0, 0.0),
        }
    }
}

/// `E_{x ∈ [-N..N]^ℓ} f(x)·conj ψ(x)`, with `N` the radius of `f` and `ψ`
/// zero outside its own box.
pub fn correlate_structured(f: &GridFunction, psi: &StructuredFunction) -> Result<Complex64> {
    if f.ell() != psi.ell() {
        return Err(LabError::invalid("function and structured function have different dimensions"));
    }
    let shape = f.shape();
    let pg = psi.eval_grid();
    let mut acc = ComplexSum::new();
    shape.points(&shape.full_lo(), &shape.full_hi(), |idx, x| {
        acc.add(f.values()[idx] * pg.get(x).conj());
    });
    Ok(acc.value() / f.len() as f64)
}
