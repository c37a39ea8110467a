//! Differentially private counting by tuple-sensitivity truncation.
//!
//! Tuples of the primary private relation whose sensitivity exceeds a
//! threshold `tau` are dropped, which bounds the global sensitivity of the
//! truncated count by `tau`. The threshold is learned privately with the
//! sparse vector technique and the truncated count is released with Laplace
//! noise of scale `tau / (epsilon - epsilon_tsens)`.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::query::ConjunctiveQuery;
use crate::relation::{Count, Database, Relation};
use crate::sensitivity::{tuple_sensitivity, Analysis, Engine, Plan};

#[derive(Clone, Debug, PartialEq)]
pub struct DpConfig {
    /// Total privacy budget.
    pub epsilon: f64,
    /// Part of `epsilon` spent on learning the threshold; `0 < epsilon_tsens < epsilon`.
    pub epsilon_tsens: f64,
    /// Upper bound on the threshold, at least 1.
    pub ell: Count,
    pub primary_private: String,
    pub seed: u64,
    /// Replace every noise draw by zero and compare with `>=` in the sparse vector scan.
    pub test_mode: bool,
    /// Fraction of `epsilon_tsens` spent on the noisy full-threshold count; the rest goes to the scan.
    pub estimate_fraction: f64,
}

impl DpConfig {
    pub fn new(epsilon: f64, epsilon_tsens: f64, ell: Count, primary_private: impl Into<String>) -> DpConfig {
        DpConfig {
            epsilon,
            epsilon_tsens,
            ell,
            primary_private: primary_private.into(),
            seed: 0,
            test_mode: false,
            estimate_fraction: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(self.epsilon_tsens > 0.0 && self.epsilon_tsens < self.epsilon) {
            return bad(format!(
                "epsilon_tsens must lie strictly between 0 and epsilon, got {}",
                self.epsilon_tsens
            ));
        }
        if self.ell == 0 {
            return bad("ell must be at least 1".into());
        }
        if !(self.estimate_fraction > 0.0 && self.estimate_fraction < 1.0) {
            return bad(format!(
                "estimate fraction must lie strictly between 0 and 1, got {}",
                self.estimate_fraction
            ));
        }
        Ok(())
    }

    pub fn budget(&self) -> Budget {
        let estimate = self.epsilon_tsens * self.estimate_fraction;
        Budget {
            epsilon: self.epsilon,
            epsilon_tsens: self.epsilon_tsens,
            estimate,
            sparse_vector: self.epsilon_tsens - estimate,
            answer: self.epsilon - self.epsilon_tsens,
        }
    }
}

/// How the total budget is spent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Budget {
    pub epsilon: f64,
    pub epsilon_tsens: f64,
    /// Noisy count at the upper bound `ell`.
    pub estimate: f64,
    /// Sparse vector scan over thresholds.
    pub sparse_vector: f64,
    /// Final noisy answer.
    pub answer: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DpAnswer {
    /// Released value, never negative.
    pub value: f64,
    pub tau: Count,
    /// Exact truncated count; not differentially private.
    pub raw_truncated: Count,
    /// Noisy count before clamping; not released.
    pub unclamped: f64,
    pub noise_scale: f64,
    pub budget: Budget,
}

/// Source of Laplace noise: a seeded ChaCha stream, or exact zeros.
#[derive(Clone, Debug)]
pub enum Noise {
    Seeded(Box<ChaCha20Rng>),
    Off,
}

impl Noise {
    pub fn seeded(seed: u64) -> Noise {
        Noise::Seeded(Box::new(ChaCha20Rng::seed_from_u64(seed)))
    }

    pub fn for_config(cfg: &DpConfig) -> Noise {
        if cfg.test_mode {
            Noise::Off
        } else {
            Noise::seeded(cfg.seed)
        }
    }

    pub fn laplace(&mut self, scale: f64) -> Result<f64> {
        match self {
            Noise::Seeded(rng) => laplace_sample(scale, rng.as_mut()),
            Noise::Off => {
                check_scale(scale)?;
                Ok(0.0)
            }
        }
    }
}

fn check_scale(scale: f64) -> Result<()> {
    if scale.is_finite() && scale > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("Laplace scale must be positive, got {scale}")))
    }
}

/// One draw from Laplace(0, scale) by inverting the CDF.
pub fn laplace_sample<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> Result<f64> {
    check_scale(scale)?;
    let u = loop {
        let x: f64 = rng.random();
        if x > 0.0 {
            break x - 0.5;
        }
    };
    Ok(-scale * u.signum() * (1.0 - 2.0 * u.abs()).ln())
}

/// CDF of Laplace(0, scale).
pub fn laplace_cdf(x: f64, scale: f64) -> f64 {
    if x < 0.0 {
        0.5 * (x / scale).exp()
    } else {
        1.0 - 0.5 * (-x / scale).exp()
    }
}

/// `db` without the tuples of `primary` whose sensitivity exceeds `tau`.
/// Other relations are untouched.
pub fn truncate(db: &Database, analysis: &Analysis, primary: &str, tau: Count) -> Result<Database> {
    let rel = db
        .relation(primary)
        .ok_or_else(|| Error::UnknownRelation(primary.to_owned()))?;
    let tables = analysis.tables();
    let mut failure = None;
    let kept = rel.filter(|t| match tuple_sensitivity(tables, primary, t) {
        Ok(s) => s <= tau,
        Err(e) => {
            failure.get_or_insert(e);
            true
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    let mut out = db.clone();
    out.insert(kept);
    Ok(out)
}

/// `i ↦ Q(T(D, i))`, evaluated once per distinct sensitivity of the
/// primary relation since the truncated instance only changes there.
pub struct TruncationCurve<'a> {
    db: &'a Database,
    plan: &'a Plan,
    engine: Engine,
    primary: String,
    /// Primary rows sorted by sensitivity.
    rows: Vec<(Count, usize)>,
    /// Distinct sensitivities, ascending.
    levels: Vec<Count>,
    cache: HashMap<usize, Count>,
}

impl<'a> TruncationCurve<'a> {
    pub fn new(
        db: &'a Database,
        plan: &'a Plan,
        analysis: &Analysis,
        primary: &str,
        engine: Engine,
    ) -> Result<TruncationCurve<'a>> {
        let rel = db
            .relation(primary)
            .ok_or_else(|| Error::UnknownRelation(primary.to_owned()))?;
        if analysis.table(primary).is_none() {
            return Err(Error::UnknownRelation(primary.to_owned()));
        }
        let mut rows = Vec::with_capacity(rel.distinct_len());
        for (i, (t, _)) in rel.rows().iter().enumerate() {
            rows.push((tuple_sensitivity(analysis.tables(), primary, t)?, i));
        }
        rows.sort_unstable();
        let mut levels: Vec<Count> = rows.iter().map(|(s, _)| *s).collect();
        levels.dedup();
        Ok(TruncationCurve {
            db,
            plan,
            engine: Engine { topk: None, ..engine },
            primary: primary.to_owned(),
            rows,
            levels,
            cache: HashMap::new(),
        })
    }

    /// Largest sensitivity of a primary tuple.
    pub fn max_level(&self) -> Count {
        self.levels.last().copied().unwrap_or(0)
    }

    fn truncated(&self, kept: usize) -> Database {
        let rel = self.db.relation(&self.primary).expect("checked at construction");
        let mut keep = vec![false; rel.distinct_len()];
        for &(_, i) in &self.rows[..kept] {
            keep[i] = true;
        }
        let mut i = 0;
        let kept_rel: Relation = rel.filter(|_| {
            i += 1;
            keep[i - 1]
        });
        let mut out = self.db.clone();
        out.insert(kept_rel);
        out
    }

    /// The instance truncated at `tau`.
    pub fn instance(&self, tau: Count) -> Database {
        self.truncated(self.rows.partition_point(|(s, _)| *s <= tau))
    }

    /// Q(T(D, tau)).
    pub fn count(&mut self, tau: Count) -> Result<Count> {
        let kept = self.rows.partition_point(|(s, _)| *s <= tau);
        if let Some(&c) = self.cache.get(&kept) {
            return Ok(c);
        }
        let c = self.engine.join_size(&self.truncated(kept), self.plan)?;
        self.cache.insert(kept, c);
        Ok(c)
    }
}

/// Sparse-vector search for the smallest threshold that loses little of the count.
pub fn learn_threshold(curve: &mut TruncationCurve<'_>, cfg: &DpConfig, noise: &mut Noise) -> Result<Count> {
    cfg.validate()?;
    let budget = cfg.budget();
    let ell = cfg.ell;
    let estimate = curve.count(ell)? as f64 + noise.laplace(ell as f64 / budget.estimate)?;
    let threshold = noise.laplace(2.0 / budget.sparse_vector)?;
    for i in 1..ell {
        let q = (curve.count(i)? as f64 - estimate) / i as f64 + noise.laplace(4.0 / budget.sparse_vector)?;
        let stop = if cfg.test_mode { q >= threshold } else { q > threshold };
        if stop {
            return Ok(i);
        }
    }
    Ok(ell)
}

/// Differentially private answer to the counting query `q` on `db`.
pub fn tsens_dp(db: &Database, q: &ConjunctiveQuery, plan: &Plan, cfg: &DpConfig, engine: Engine) -> Result<DpAnswer> {
    cfg.validate()?;
    let analysis = engine.analyze(db, q, plan)?;
    let mut curve = TruncationCurve::new(db, plan, &analysis, &cfg.primary_private, engine)?;
    let mut noise = Noise::for_config(cfg);
    let tau = learn_threshold(&mut curve, cfg, &mut noise)?;
    let raw = curve.count(tau)?;
    let budget = cfg.budget();
    let noise_scale = tau as f64 / budget.answer;
    let unclamped = raw as f64 + noise.laplace(noise_scale)?;
    Ok(DpAnswer {
        value: unclamped.max(0.0),
        tau,
        raw_truncated: raw,
        unclamped,
        noise_scale,
        budget,
    })
}
