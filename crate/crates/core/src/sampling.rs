//! Elliptical data generation `x_i = sqrt(tau_i) A y_i` and model checks.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::weights::{WeightFunction, WeightSpec};

/// Law of the texture variables `tau_i`.
///
/// Built-in laws are rescaled to unit mean by [`TauDistribution::normalized`];
/// every model stores the normalized form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TauDistribution {
    Constant {
        value: f64,
    },
    Gamma {
        shape: f64,
        scale: f64,
    },
    /// `tau = (dof - 2) / chi2(dof)`, which makes `x` Student distributed.
    InverseChiSquare {
        dof: f64,
    },
    /// Fixed list of texture values, reused cyclically when sampling.
    Empirical {
        values: Vec<f64>,
    },
}

impl TauDistribution {
    /// Checks parameters and rescales to unit mean.
    pub fn normalized(&self) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidModel(msg));
        match self {
            TauDistribution::Constant { value } => {
                if !(*value > 0.0 && value.is_finite()) {
                    return bad(format!("constant tau must be positive, got {value}"));
                }
                Ok(TauDistribution::Constant { value: 1.0 })
            }
            TauDistribution::Gamma { shape, scale } => {
                if !(*shape > 0.0 && *scale > 0.0 && shape.is_finite() && scale.is_finite()) {
                    return bad(format!(
                        "gamma parameters must be positive, got ({shape}, {scale})"
                    ));
                }
                Ok(TauDistribution::Gamma {
                    shape: *shape,
                    scale: 1.0 / shape,
                })
            }
            TauDistribution::InverseChiSquare { dof } => {
                if !(*dof > 2.0 && dof.is_finite()) {
                    return bad(format!("inverse chi-square needs dof > 2, got {dof}"));
                }
                Ok(self.clone())
            }
            TauDistribution::Empirical { values } => {
                if values.is_empty() || values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                    return bad("empirical tau list must be nonempty and nonnegative".into());
                }
                let mean = values.iter().sum::<f64>() / values.len() as f64;
                if !(mean > 0.0) {
                    return bad("empirical tau list has zero mean".into());
                }
                Ok(TauDistribution::Empirical {
                    values: values.iter().map(|v| v / mean).collect(),
                })
            }
        }
    }

    /// Analytic mean of the law as stored.
    pub fn mean(&self) -> f64 {
        match self {
            TauDistribution::Constant { value } => *value,
            TauDistribution::Gamma { shape, scale } => shape * scale,
            // E[1 / chi2_k] = 1 / (k - 2)
            TauDistribution::InverseChiSquare { .. } => 1.0,
            TauDistribution::Empirical { values } => {
                values.iter().sum::<f64>() / values.len() as f64
            }
        }
    }

    /// Draws `n` values.
    pub fn draw_n<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        match self {
            TauDistribution::Constant { value } => vec![*value; n],
            TauDistribution::Gamma { shape, scale } => {
                let d = Gamma::new(*shape, *scale).expect("validated gamma parameters");
                (0..n).map(|_| d.sample(rng)).collect()
            }
            TauDistribution::InverseChiSquare { dof } => {
                let d = ChiSquared::new(*dof).expect("validated dof");
                (0..n).map(|_| (dof - 2.0) / d.sample(rng)).collect()
            }
            TauDistribution::Empirical { values } => {
                (0..n).map(|i| values[i % values.len()]).collect()
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Block {
    pub size: usize,
    pub value: f64,
}

/// Population scatter matrix `C`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScatterSpec {
    Identity,
    Diagonal {
        values: Vec<f64>,
    },
    /// Block-diagonal `diag(v_1 I_{s_1}, v_2 I_{s_2}, ...)`.
    Blocks {
        blocks: Vec<Block>,
    },
    Dense {
        rows: Vec<Vec<f64>>,
    },
}

impl ScatterSpec {
    /// The same structure at dimension `to`: block sizes scale with the
    /// dimension (the last block absorbs rounding). Explicit diagonal and
    /// dense matrices cannot be resized.
    pub fn resized(&self, from: usize, to: usize) -> Result<ScatterSpec> {
        if from == to {
            return Ok(self.clone());
        }
        match self {
            ScatterSpec::Identity => Ok(ScatterSpec::Identity),
            ScatterSpec::Blocks { blocks } => {
                let total: usize = blocks.iter().map(|b| b.size).sum();
                if total != from || blocks.is_empty() {
                    return Err(Error::InvalidModel(format!(
                        "blocks cover {total} coordinates, expected {from}"
                    )));
                }
                let mut out: Vec<Block> = blocks
                    .iter()
                    .map(|b| Block {
                        size: (b.size as f64 * to as f64 / from as f64).round() as usize,
                        value: b.value,
                    })
                    .collect();
                let head: usize = out[..out.len() - 1].iter().map(|b| b.size).sum();
                if head >= to {
                    return Err(Error::InvalidModel(format!(
                        "cannot resize blocks to dimension {to}"
                    )));
                }
                out.last_mut().unwrap().size = to - head;
                Ok(ScatterSpec::Blocks { blocks: out })
            }
            _ => Err(Error::InvalidModel(
                "only identity and block scatter can be resized".into(),
            )),
        }
    }

    pub fn to_matrix(&self, dim: usize) -> Result<DMatrix<f64>> {
        let diag = |vals: Vec<f64>| -> Result<DMatrix<f64>> {
            if vals.len() != dim {
                return Err(Error::InvalidModel(format!(
                    "scatter has {} diagonal entries for dimension {dim}",
                    vals.len()
                )));
            }
            Ok(DMatrix::from_diagonal(&DVector::from_vec(vals)))
        };
        match self {
            ScatterSpec::Identity => Ok(DMatrix::identity(dim, dim)),
            ScatterSpec::Diagonal { values } => diag(values.clone()),
            ScatterSpec::Blocks { blocks } => diag(
                blocks
                    .iter()
                    .flat_map(|b| std::iter::repeat_n(b.value, b.size))
                    .collect(),
            ),
            ScatterSpec::Dense { rows } => {
                if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                    return Err(Error::InvalidModel(format!(
                        "dense scatter must be {dim}x{dim}"
                    )));
                }
                Ok(DMatrix::from_fn(dim, dim, |i, j| rows[i][j]))
            }
        }
    }
}

/// Serializable description of a [`ScatterModel`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    /// Population dimension `N`.
    pub dim: usize,
    /// Sample count `n`.
    pub samples: usize,
    /// Inner dimension `N_bar >= N`; defaults to `N`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner_dim: Option<usize>,
    pub scatter: ScatterSpec,
    pub tau: TauDistribution,
}

impl ModelSpec {
    /// The same model at another size.
    pub fn resized(&self, dim: usize, samples: usize) -> Result<ModelSpec> {
        let inner_dim = match self.inner_dim {
            None => None,
            Some(inner) if inner == self.dim => Some(dim),
            Some(_) => {
                return Err(Error::InvalidModel(
                    "models with a larger inner dimension cannot be resized".into(),
                ))
            }
        };
        Ok(ModelSpec {
            dim,
            samples,
            inner_dim,
            scatter: self.scatter.resized(self.dim, dim)?,
            tau: self.tau.clone(),
        })
    }

    /// The configuration of the three-cluster experiment: `C = diag(I, 3I, 10I)`
    /// with block sizes `N/4, N/4, N/2` and `tau ~ Gamma(0.5, 2)`.
    pub fn three_cluster(dim: usize, samples: usize) -> Self {
        let q = dim / 4;
        ModelSpec {
            dim,
            samples,
            inner_dim: None,
            scatter: ScatterSpec::Blocks {
                blocks: vec![
                    Block {
                        size: q,
                        value: 1.0,
                    },
                    Block {
                        size: q,
                        value: 3.0,
                    },
                    Block {
                        size: dim - 2 * q,
                        value: 10.0,
                    },
                ],
            },
            tau: TauDistribution::Gamma {
                shape: 0.5,
                scale: 2.0,
            },
        }
    }
}

/// A validated population model.
#[derive(Clone, Debug)]
pub struct ScatterModel {
    spec: ModelSpec,
    tau: TauDistribution,
    scatter: DMatrix<f64>,
    factor: DMatrix<f64>,
    scatter_eigenvalues: Vec<f64>,
}

impl ScatterModel {
    pub fn new(spec: ModelSpec) -> Result<Self> {
        let (dim, n) = (spec.dim, spec.samples);
        if dim == 0 || n <= dim {
            return Err(Error::InvalidModel(format!(
                "need 0 < N < n, got N = {dim}, n = {n}"
            )));
        }
        let inner = spec.inner_dim.unwrap_or(dim);
        if inner < dim {
            return Err(Error::InvalidModel(format!(
                "inner dimension {inner} must be at least N = {dim}"
            )));
        }
        let scatter = spec.scatter.to_matrix(dim)?;
        let asym = (&scatter - scatter.transpose()).abs().max();
        if asym > 1e-12 * scatter.abs().max() {
            return Err(Error::InvalidModel(
                "scatter matrix is not symmetric".into(),
            ));
        }
        let factor = sqrt_factor(&scatter, inner)?;
        let scatter_eigenvalues = linalg::sym_eigenvalues(&scatter);
        let tau = spec.tau.normalized()?;
        Ok(Self {
            spec,
            tau,
            scatter,
            factor,
            scatter_eigenvalues,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }
    pub fn dim(&self) -> usize {
        self.spec.dim
    }
    pub fn samples(&self) -> usize {
        self.spec.samples
    }
    pub fn inner_dim(&self) -> usize {
        self.spec.inner_dim.unwrap_or(self.spec.dim)
    }
    /// `c_N = N / n`.
    pub fn aspect_ratio(&self) -> f64 {
        self.spec.dim as f64 / self.spec.samples as f64
    }
    /// Mean-one texture law used for draws.
    pub fn tau(&self) -> &TauDistribution {
        &self.tau
    }
    pub fn scatter(&self) -> &DMatrix<f64> {
        &self.scatter
    }
    /// Shaping factor `A` (`N x N_bar`) with `A A^T = C`.
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }
    /// Eigenvalues of `C`, ascending.
    pub fn scatter_eigenvalues(&self) -> &[f64] {
        &self.scatter_eigenvalues
    }
    pub fn scatter_norm(&self) -> f64 {
        self.scatter_eigenvalues.last().copied().unwrap_or(0.0)
    }
}

/// Symmetric square root of `c`, zero-padded on the right to `inner` columns.
pub fn sqrt_factor(c: &DMatrix<f64>, inner: usize) -> Result<DMatrix<f64>> {
    let n = c.nrows();
    if c.ncols() != n || inner < n {
        return Err(Error::InvalidArgument(format!(
            "sqrt_factor needs a square matrix and inner >= {n}"
        )));
    }
    let root = linalg::sym_sqrt(c)?;
    if inner == n {
        return Ok(root);
    }
    let mut out = DMatrix::zeros(n, inner);
    out.view_mut((0, 0), (n, n)).copy_from(&root);
    Ok(out)
}

/// Uniform direction on the sphere of radius `sqrt(inner)`.
pub fn draw_direction<R: Rng + ?Sized>(inner: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let g = DVector::<f64>::from_fn(inner, |_, _| rng.sample(StandardNormal));
        let norm = g.norm();
        if norm > 0.0 {
            return g * ((inner as f64).sqrt() / norm);
        }
    }
}

/// A generated data set.
#[derive(Clone, Debug)]
pub struct SampleSet {
    /// Data matrix, one sample per column (`N x n`).
    pub x: DMatrix<f64>,
    /// Unscaled samples `z_i = A y_i` (`N x n`).
    pub z: DMatrix<f64>,
    /// Sphere directions `y_i` (`N_bar x n`).
    pub y: DMatrix<f64>,
    pub taus: Vec<f64>,
    pub seed: u64,
    pub model: Arc<ScatterModel>,
}

impl SampleSet {
    pub fn dim(&self) -> usize {
        self.x.nrows()
    }
    pub fn len(&self) -> usize {
        self.x.ncols()
    }
    pub fn is_empty(&self) -> bool {
        self.x.ncols() == 0
    }
    pub fn aspect_ratio(&self) -> f64 {
        self.dim() as f64 / self.len() as f64
    }

    /// Applies a linear map to the data: `x_i -> a x_i`, `z_i -> a z_i`.
    /// The model back-reference is kept unchanged.
    pub fn transformed(&self, a: &DMatrix<f64>) -> SampleSet {
        SampleSet {
            x: a * &self.x,
            z: a * &self.z,
            y: self.y.clone(),
            taus: self.taus.clone(),
            seed: self.seed,
            model: Arc::clone(&self.model),
        }
    }

    /// Plain sample covariance `(1/n) sum_i x_i x_i^T`.
    pub fn sample_covariance(&self) -> DMatrix<f64> {
        linalg::weighted_gram(&self.x, &vec![1.0; self.len()])
    }
}

/// Draws a data set from `model`; deterministic in `seed`.
pub fn sample(model: &Arc<ScatterModel>, seed: u64) -> SampleSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, inner) = (model.samples(), model.inner_dim());
    let taus = model.tau().draw_n(n, &mut rng);
    let mut y = DMatrix::zeros(inner, n);
    for mut col in y.column_iter_mut() {
        col.copy_from(&draw_direction(inner, &mut rng));
    }
    let z = model.factor() * &y;
    let mut x = z.clone();
    for (mut col, &t) in x.column_iter_mut().zip(&taus) {
        col *= t.sqrt();
    }
    SampleSet {
        x,
        z,
        y,
        taus,
        seed,
        model: Arc::clone(model),
    }
}

/// Outcome of [`check_assumptions`]. Only the aspect-ratio block is a hard
/// requirement; the other two are warnings.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub aspect_ratio: f64,
    pub phi_inf: f64,
    pub hard_pass: bool,
    pub small_tau_threshold: f64,
    pub small_tau_fraction: f64,
    pub small_tau_limit: f64,
    pub small_tau_warning: bool,
    /// Hill estimate of the tail index of the tau sample (student-type u only).
    pub tail_index: Option<f64>,
    pub tail_warning: bool,
    pub notes: Vec<String>,
}

/// Threshold `m` below which a texture value counts as "near zero".
pub const SMALL_TAU_THRESHOLD: f64 = 1e-3;

/// Checks the model constraints at the level a single finite sample allows.
pub fn check_assumptions(
    model: &ScatterModel,
    w: &WeightFunction,
    s: &SampleSet,
) -> AssumptionReport {
    let c = model.aspect_ratio();
    let phi_inf = w.phi_inf();
    let hard_pass = c > 0.0 && c < 1.0 && phi_inf < 1.0 / c;
    let mut notes = vec![
        "the tail and small-mass conditions are asymptotic; only finite-sample sufficient conditions are checked".to_string(),
    ];
    if !hard_pass {
        notes.push(format!(
            "phi_inf = {phi_inf} violates phi_inf < 1/c = {}",
            1.0 / c
        ));
    }

    let n = s.taus.len().max(1) as f64;
    let small = s.taus.iter().filter(|&&t| t < SMALL_TAU_THRESHOLD).count() as f64 / n;
    let limit = 1.0 - 1.0 / phi_inf;
    let small_tau_warning = small >= limit;
    if small_tau_warning {
        notes.push(format!(
            "fraction {small:.4} of tau below {SMALL_TAU_THRESHOLD} exceeds 1 - 1/phi_inf = {limit:.4}"
        ));
    }

    let (tail_index, tail_warning) = match w.spec() {
        WeightSpec::StudentType { .. } => {
            let idx = hill_tail_index(&s.taus);
            let warn = idx.is_some_and(|a| a <= 1.0);
            if warn {
                notes.push(format!(
                    "estimated tail index {:.3} <= 1: tail of tau may not be o(1/t)",
                    idx.unwrap_or(f64::NAN)
                ));
            }
            (idx, warn)
        }
        WeightSpec::Custom(_) => (None, false),
    };

    AssumptionReport {
        aspect_ratio: c,
        phi_inf,
        hard_pass,
        small_tau_threshold: SMALL_TAU_THRESHOLD,
        small_tau_fraction: small,
        small_tau_limit: limit,
        small_tau_warning,
        tail_index,
        tail_warning,
        notes,
    }
}

/// Hill estimator on the top `max(10, sqrt(n))` order statistics. `None` when
/// the sample is too small or the top values are not positive.
pub fn hill_tail_index(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| *x > 0.0).collect();
    let k = ((v.len() as f64).sqrt() as usize).max(10);
    if v.len() <= k + 1 {
        return None;
    }
    v.sort_by(|a, b| b.total_cmp(a));
    let base = v[k].ln();
    let mean = v[..k].iter().map(|x| x.ln() - base).sum::<f64>() / k as f64;
    if mean > 0.0 {
        Some(1.0 / mean)
    } else {
        Some(f64::INFINITY)
    }
}
