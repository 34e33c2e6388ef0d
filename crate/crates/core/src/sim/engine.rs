use std::io::Write;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{InputPolicy, NoiseKind, SimConfig, OVERFLOW_LIMIT};
use crate::error::{CsviuError, Result};
use crate::model::CsviuModel;

/// Where and when a path left the representable range.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Abort {
    pub path: u64,
    pub stage: usize,
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

/// Flattened copies of the model matrices for the inner loop.
#[derive(Clone, Debug)]
struct Dynamics {
    n: usize,
    r: usize,
    m: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    sx: Vec<f64>,
    sbx: Vec<f64>,
    sigma: Vec<f64>,
    noise: NoiseKind,
    policy: Policy,
}

#[derive(Clone, Debug)]
enum Policy {
    Zero,
    Constant(Vec<f64>),
    Feedback(Vec<f64>),
}

impl Dynamics {
    fn new(model: &CsviuModel, cfg: &SimConfig) -> Self {
        let policy = match &cfg.input_policy {
            InputPolicy::Zero => Policy::Zero,
            InputPolicy::Constant(l) => Policy::Constant(l.clone()),
            InputPolicy::StateFeedback(rows) => Policy::Feedback(rows.concat()),
        };
        Dynamics {
            n: model.n(),
            r: model.r(),
            m: model.m(),
            a: row_major(model.a()),
            b: model.b().map(row_major).unwrap_or_default(),
            sx: row_major(model.sigma_x()),
            sbx: row_major(model.sigma_bar_x()),
            sigma: row_major(model.sigma()),
            noise: cfg.noise_kind,
            policy,
        }
    }

    fn input(&self, x: &[f64], out: &mut [f64]) {
        match &self.policy {
            Policy::Zero => out.fill(0.0),
            Policy::Constant(l) => out.copy_from_slice(l),
            Policy::Feedback(k) => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = dot(&k[i * self.n..(i + 1) * self.n], x);
                }
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Per-thread scratch space holding one full trajectory.
struct PathBuffer {
    x: Vec<f64>,
    l: Vec<f64>,
    incr: Vec<f64>,
    eps: Vec<f64>,
    omega: Vec<f64>,
}

impl PathBuffer {
    fn new(d: &Dynamics, horizon: usize) -> Self {
        PathBuffer {
            x: vec![0.0; (horizon + 1) * d.n],
            l: vec![0.0; (horizon + 1) * d.m],
            incr: vec![0.0; horizon * d.n],
            eps: vec![0.0; d.n],
            omega: vec![0.0; d.r],
        }
    }
}

/// Read-only view of one sampled trajectory.
#[derive(Clone, Copy, Debug)]
pub struct PathView<'a> {
    pub index: u64,
    pub n: usize,
    pub m: usize,
    pub horizon: usize,
    x: &'a [f64],
    l: &'a [f64],
    incr: &'a [f64],
}

impl<'a> PathView<'a> {
    /// `x_k` for `k = 0..=horizon`
    pub fn state(&self, k: usize) -> &'a [f64] {
        &self.x[k * self.n..(k + 1) * self.n]
    }

    /// `ℓ_k` for `k = 0..=horizon`
    pub fn input(&self, k: usize) -> &'a [f64] {
        &self.l[k * self.m..(k + 1) * self.m]
    }

    /// Noise increment `σ(x_k)ω_{0,k} = x_{k+1} − A x_k − B ℓ_k` for `k < horizon`
    pub fn increment(&self, k: usize) -> &'a [f64] {
        &self.incr[k * self.n..(k + 1) * self.n]
    }
}

/// Per-path values in path order, with the paths that overflowed listed apart.
#[derive(Clone, Debug)]
pub struct PathResults<T> {
    pub values: Vec<T>,
    pub aborted: Vec<Abort>,
}

impl<T> PathResults<T> {
    pub fn abort_fraction(&self) -> f64 {
        let total = self.values.len() + self.aborted.len();
        self.aborted.len() as f64 / total.max(1) as f64
    }

    /// Error when more than `max_fraction` of the paths were aborted.
    pub fn check_overflow(&self, max_fraction: f64) -> Result<()> {
        match self.aborted.first() {
            Some(a) if self.abort_fraction() > max_fraction || self.values.is_empty() => {
                Err(CsviuError::Overflow {
                    path: a.path,
                    stage: a.stage,
                })
            }
            _ => Ok(()),
        }
    }

    fn from_results(results: Vec<std::result::Result<T, Abort>>) -> Self {
        let mut values = Vec::with_capacity(results.len());
        let mut aborted = Vec::new();
        for r in results {
            match r {
                Ok(v) => values.push(v),
                Err(a) => aborted.push(a),
            }
        }
        PathResults { values, aborted }
    }
}

/// Anything that can hand out sampled trajectories.
pub trait PathSource {
    fn model(&self) -> &CsviuModel;
    fn config(&self) -> &SimConfig;
    fn map_paths<T, F>(&self, f: F) -> PathResults<T>
    where
        T: Send,
        F: Fn(&PathView<'_>) -> T + Sync;
}

/// Streaming simulator: trajectories are regenerated on demand and never
/// stored, so memory stays flat in the number of paths.
pub struct Simulator {
    model: CsviuModel,
    cfg: SimConfig,
    dynamics: Dynamics,
    pool: Option<Arc<rayon::ThreadPool>>,
}

impl Simulator {
    pub fn new(model: &CsviuModel, cfg: &SimConfig) -> Result<Self> {
        cfg.validate_for(model)?;
        Ok(Simulator {
            model: model.clone(),
            cfg: cfg.clone(),
            dynamics: Dynamics::new(model, cfg),
            pool: None,
        })
    }

    /// Run on a dedicated pool of `threads` workers. Results do not depend
    /// on the choice.
    pub fn with_threads(mut self, threads: usize) -> Result<Self> {
        if threads == 0 {
            return Err(CsviuError::Value("thread count must be positive".into()));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| CsviuError::InternalInconsistency(format!("thread pool: {e}")))?;
        self.pool = Some(Arc::new(pool));
        Ok(self)
    }

    fn run_path(&self, index: u64, buf: &mut PathBuffer) -> std::result::Result<(), Abort> {
        let d = &self.dynamics;
        let (n, m) = (d.n, d.m);
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(index);
        buf.x[..n].copy_from_slice(&self.cfg.x0);
        for k in 0..self.cfg.horizon {
            let (past, future) = buf.x.split_at_mut((k + 1) * n);
            let x = &past[k * n..];
            let next = &mut future[..n];
            let l = &mut buf.l[k * m..(k + 1) * m];
            d.input(x, l);
            for e in buf.eps.iter_mut() {
                *e = d.noise.sample(&mut rng);
            }
            for w in buf.omega.iter_mut() {
                *w = d.noise.sample(&mut rng);
            }
            let incr = &mut buf.incr[k * n..(k + 1) * n];
            for i in 0..n {
                let mut noise = 0.0;
                for j in 0..n {
                    noise += (d.sx[i * n + j] + d.sbx[i * n + j] * x[j].abs()) * buf.eps[j];
                }
                noise += dot(&d.sigma[i * d.r..(i + 1) * d.r], &buf.omega);
                let drift = dot(&d.a[i * n..(i + 1) * n], x) + dot(&d.b[i * m..(i + 1) * m], l);
                incr[i] = noise;
                next[i] = drift + noise;
                if next[i].is_nan() || next[i].abs() > OVERFLOW_LIMIT {
                    return Err(Abort { path: index, stage: k + 1 });
                }
            }
        }
        let kappa = self.cfg.horizon;
        d.input(&buf.x[kappa * n..], &mut buf.l[kappa * m..]);
        Ok(())
    }

    /// Materialize the ensemble. Aborted paths are kept out of the stored
    /// trajectories and listed in [`Ensemble::aborted`].
    pub fn ensemble(&self) -> Ensemble {
        let res = self.map_paths(|p| StoredPath {
            index: p.index,
            x: p.x.to_vec(),
            l: p.l.to_vec(),
            incr: p.incr.to_vec(),
        });
        Ensemble {
            model: self.model.clone(),
            cfg: self.cfg.clone(),
            paths: res.values,
            aborted: res.aborted,
        }
    }
}

impl PathSource for Simulator {
    fn model(&self) -> &CsviuModel {
        &self.model
    }

    fn config(&self) -> &SimConfig {
        &self.cfg
    }

    fn map_paths<T, F>(&self, f: F) -> PathResults<T>
    where
        T: Send,
        F: Fn(&PathView<'_>) -> T + Sync,
    {
        let horizon = self.cfg.horizon;
        let (n, m) = (self.dynamics.n, self.dynamics.m);
        let work = || {
            (0..self.cfg.n_paths as u64)
                .into_par_iter()
                .map_init(
                    || PathBuffer::new(&self.dynamics, horizon),
                    |buf, i| {
                        self.run_path(i, buf)?;
                        Ok(f(&PathView {
                            index: i,
                            n,
                            m,
                            horizon,
                            x: &buf.x,
                            l: &buf.l,
                            incr: &buf.incr,
                        }))
                    },
                )
                .collect::<Vec<_>>()
        };
        let results = match &self.pool {
            Some(pool) => pool.install(work),
            None => work(),
        };
        PathResults::from_results(results)
    }
}

#[derive(Clone, Debug)]
struct StoredPath {
    index: u64,
    x: Vec<f64>,
    l: Vec<f64>,
    incr: Vec<f64>,
}

/// A materialized trajectory ensemble.
#[derive(Clone, Debug)]
pub struct Ensemble {
    model: CsviuModel,
    cfg: SimConfig,
    paths: Vec<StoredPath>,
    pub aborted: Vec<Abort>,
}

impl Ensemble {
    /// Simulate and store every path, failing on the first overflow.
    pub fn simulate(model: &CsviuModel, cfg: &SimConfig) -> Result<Self> {
        let ens = Simulator::new(model, cfg)?.ensemble();
        if let Some(a) = ens.aborted.first() {
            return Err(CsviuError::Overflow {
                path: a.path,
                stage: a.stage,
            });
        }
        Ok(ens)
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.cfg.horizon
    }

    pub fn path(&self, i: usize) -> PathView<'_> {
        let p = &self.paths[i];
        PathView {
            index: p.index,
            n: self.model.n(),
            m: self.model.m(),
            horizon: self.cfg.horizon,
            x: &p.x,
            l: &p.l,
            incr: &p.incr,
        }
    }

    /// States of path `i` as a `(horizon+1) × n` row-major slice.
    pub fn states(&self, i: usize) -> &[f64] {
        &self.paths[i].x
    }

    /// `y_k = C x_k + D ℓ_k` for path `i`, stage `k`.
    pub fn output(&self, i: usize, k: usize) -> Vec<f64> {
        output_of(&self.model, &self.path(i), k)
    }
}

fn output_of(model: &CsviuModel, p: &PathView<'_>, k: usize) -> Vec<f64> {
    let x = nalgebra::DVector::from_column_slice(p.state(k));
    let l = (p.m > 0).then(|| nalgebra::DVector::from_column_slice(p.input(k)));
    model.output(&x, l.as_ref()).iter().copied().collect()
}

impl PathSource for Ensemble {
    fn model(&self) -> &CsviuModel {
        &self.model
    }

    fn config(&self) -> &SimConfig {
        &self.cfg
    }

    fn map_paths<T, F>(&self, f: F) -> PathResults<T>
    where
        T: Send,
        F: Fn(&PathView<'_>) -> T + Sync,
    {
        let values = (0..self.paths.len())
            .into_par_iter()
            .map(|i| f(&self.path(i)))
            .collect();
        PathResults {
            values,
            aborted: self.aborted.clone(),
        }
    }
}

/// One CSV row per (path, stage): `path,k,x0..,y0..`.
pub fn write_trajectory_csv<S: PathSource, W: Write>(src: &S, out: W) -> Result<()> {
    let model = src.model();
    let mut w = std::io::BufWriter::new(out);
    let mut header = vec!["path".to_string(), "k".to_string()];
    header.extend((0..model.n()).map(|i| format!("x{i}")));
    header.extend((0..model.p()).map(|i| format!("y{i}")));
    writeln!(w, "{}", header.join(","))?;
    let chunks = src.map_paths(|p| {
        let mut s = String::new();
        for k in 0..=p.horizon {
            let mut row = vec![p.index.to_string(), k.to_string()];
            row.extend(p.state(k).iter().map(|v| format!("{v:e}")));
            row.extend(output_of(model, p, k).iter().map(|v| format!("{v:e}")));
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    });
    for chunk in &chunks.values {
        w.write_all(chunk.as_bytes())?;
    }
    w.flush()?;
    Ok(())
}
