//! Flat `key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored. Unknown keys are rejected so a
//! typo never silently falls back to a default.

use std::collections::BTreeMap;
use std::path::Path;

use aot_core::amortize::OaConfig;
use aot_core::eval::{BenchConfig, Method};
use aot_core::measures::CostFamily;
use aot_core::sinkhorn::SinkhornConfig;
use aot_core::slicing::ProjectionFamily;
use aot_core::tasks::{TaskFamily, TaskSpec};
use aot_core::{AotError, Result};

pub const KEYS: &[&str] = &[
    "task",
    "n",
    "m",
    "epsilon",
    "cost",
    "seed",
    "count",
    "split_ratio",
    "projection",
    "projection_seed",
    "L",
    "lambda",
    "lr",
    "iters",
    "batch",
    "train_seed",
    "sinkhorn_max_iters",
    "sinkhorn_tol",
    "L_values",
    "M_values",
    "methods",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub spec: TaskSpec,
    pub split_ratio: f64,
    pub projection: ProjectionFamily,
    pub projection_seed: u64,
    pub l: usize,
    pub ridge_lambda: f64,
    pub oa: OaConfig,
    pub sinkhorn: SinkhornConfig,
    pub l_values: Vec<usize>,
    pub m_values: Vec<usize>,
    pub methods: Vec<Method>,
}

fn bad(msg: impl Into<String>) -> AotError {
    AotError::InvalidConfig(msg.into())
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| bad(format!("{key}: cannot parse {v:?}")))
}

pub fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| num(key, s)).collect()
}

pub fn parse_methods(v: &str) -> Result<Vec<Method>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| Method::parse(s).ok_or_else(|| bad(format!("unknown method {s:?}"))))
        .collect()
}

pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("line {}: expected key = value", lineno + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.contains(&k) {
            return Err(bad(format!("line {}: unknown key {k:?}", lineno + 1)));
        }
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(bad(format!("line {}: duplicate key {k:?}", lineno + 1)));
        }
    }
    Ok(out)
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| bad(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let kv = parse_pairs(text)?;
        let get = |k: &str| kv.get(k).map(String::as_str);

        let family = match get("task") {
            Some(v) => TaskFamily::parse(v).ok_or_else(|| bad(format!("unknown task {v:?}")))?,
            None => return Err(bad("missing key \"task\"")),
        };
        let mut spec = TaskSpec::new(family, 100, 0);
        if let Some(v) = get("n") {
            spec.n = num("n", v)?;
        }
        if let Some(v) = get("m") {
            spec.m = num("m", v)?;
        }
        if let Some(v) = get("epsilon") {
            spec.epsilon = num("epsilon", v)?;
        }
        if let Some(v) = get("cost") {
            spec.cost = CostFamily::parse(v).ok_or_else(|| bad(format!("unknown cost {v:?}")))?;
        }
        if let Some(v) = get("seed") {
            spec.seed = num("seed", v)?;
        }
        if let Some(v) = get("count") {
            spec.count = num("count", v)?;
        }
        spec.validate()?;

        let projection = match get("projection") {
            Some(v) => ProjectionFamily::parse(v).ok_or_else(|| bad(format!("unknown projection {v:?}")))?,
            None => family.default_projection(),
        };
        let mut oa = OaConfig::default();
        if let Some(v) = get("lr") {
            oa.lr = num("lr", v)?;
        }
        if let Some(v) = get("iters") {
            oa.iters = num("iters", v)?;
        }
        if let Some(v) = get("batch") {
            oa.batch = Some(num("batch", v)?);
        }
        if let Some(v) = get("train_seed") {
            oa.seed = num("train_seed", v)?;
        }
        let mut sinkhorn = SinkhornConfig::new(spec.epsilon)?;
        if let Some(v) = get("sinkhorn_max_iters") {
            sinkhorn.max_iters = num("sinkhorn_max_iters", v)?;
        }
        if let Some(v) = get("sinkhorn_tol") {
            sinkhorn.marginal_tol = num("sinkhorn_tol", v)?;
        }
        let cfg = Self {
            spec,
            split_ratio: get("split_ratio").map(|v| num("split_ratio", v)).transpose()?.unwrap_or(0.7),
            projection,
            projection_seed: get("projection_seed").map(|v| num("projection_seed", v)).transpose()?.unwrap_or(0),
            l: get("L").map(|v| num("L", v)).transpose()?.unwrap_or(100),
            ridge_lambda: get("lambda").map(|v| num("lambda", v)).transpose()?.unwrap_or(1e-3),
            oa,
            sinkhorn: sinkhorn.validated()?,
            l_values: get("L_values").map(|v| parse_list("L_values", v)).transpose()?.unwrap_or(vec![3, 5, 10, 20, 50, 100]),
            m_values: get("M_values").map(|v| parse_list("M_values", v)).transpose()?.unwrap_or(vec![10, 20, 50, 200]),
            methods: get("methods").map(parse_methods).transpose()?.unwrap_or(vec![Method::Ra, Method::Oa, Method::MinSwgg]),
        };
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(bad(format!("split_ratio {} must lie in (0, 1)", self.split_ratio)));
        }
        if self.l == 0 || self.l_values.contains(&0) {
            return Err(bad("L must be >= 1"));
        }
        if !(self.ridge_lambda > 0.0) {
            return Err(bad(format!("lambda {} must be positive", self.ridge_lambda)));
        }
        if !(self.oa.lr > 0.0) || self.oa.iters == 0 {
            return Err(bad("lr must be positive and iters >= 1"));
        }
        if self.projection == ProjectionFamily::Stereographic && self.spec.family != TaskFamily::SphereSupplyDemand {
            return Err(bad("stereographic projection needs the sphere task"));
        }
        Ok(())
    }

    pub fn bench_config(&self) -> BenchConfig {
        BenchConfig {
            split_ratio: self.split_ratio,
            ridge_lambda: self.ridge_lambda,
            oa: self.oa,
            projection: self.projection,
            projection_seed: self.projection_seed,
            sinkhorn: self.sinkhorn,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_task() {
        let cfg = RunConfig::parse("task = grid2d\n").unwrap();
        assert_eq!(cfg.spec.n, 196);
        assert_eq!(cfg.spec.epsilon, 0.1);
        assert_eq!((cfg.l, cfg.ridge_lambda, cfg.oa.lr, cfg.oa.iters), (100, 1e-3, 1e-3, 5000));
        assert_eq!(cfg.l_values, vec![3, 5, 10, 20, 50, 100]);
    }

    #[test]
    fn overrides_and_comments() {
        let cfg = RunConfig::parse(
            "# sphere run\ntask = sphere\nn = 50 # supply\nm=500\nL = 20\nmethods = oa, minswgg\nbatch = 8\n",
        )
        .unwrap();
        assert_eq!((cfg.spec.n, cfg.spec.m, cfg.l), (50, 500, 20));
        assert_eq!(cfg.projection, ProjectionFamily::Stereographic);
        assert_eq!(cfg.methods, vec![Method::Oa, Method::MinSwgg]);
        assert_eq!(cfg.oa.batch, Some(8));
    }

    #[test]
    fn rejects_bad_input() {
        for text in [
            "",
            "task = nope",
            "task = grid2d\nfoo = 1",
            "task = grid2d\nL = x",
            "task = grid2d\nn = 10",
            "task = grid2d\nL = 1\nL = 2",
            "task = grid2d\nprojection = stereographic",
            "task = grid2d\nsplit_ratio = 1.0",
            "task = grid2d\nepsilon = -1",
            "just text",
        ] {
            assert!(RunConfig::parse(text).is_err(), "{text:?}");
        }
    }
}
