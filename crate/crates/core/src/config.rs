//! Run configuration: flat `key = value` text files with `#` comments.
//!
//! Every key has a default matching the reference experiment, so an empty
//! file is a complete configuration. Parsing revalidates all positivity and
//! range constraints; violations report the offending key and line.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::mesh::{BoundaryTag, GeometricTargets, TagMap};

/// Which max-operator drives the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    /// Semismooth treatment of the exact max; the regularized model is kept
    /// as a line-search safeguard.
    UnregularizedWithSafeguard,
    /// Fully smoothed max-operator everywhere.
    Regularized,
}

/// Validated run configuration with experiment defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mesh_path: String,
    pub tag_inflow: String,
    pub tag_walls: String,
    pub tag_outflow: String,
    pub tag_shape: String,

    pub mu: f64,
    pub rho: f64,
    pub g: f64,
    pub gamma: f64,
    pub delta: f64,
    pub f: [f64; 2],

    pub target_volume: f64,
    pub target_barycenter: [f64; 2],
    pub target_perimeter: f64,

    pub nu: f64,
    pub lambda: [f64; 4],
    pub tau: f64,
    pub xi: f64,

    pub inner_iterations: usize,
    pub outer_iterations: usize,
    pub t_max: f64,

    pub newton_eps: f64,
    pub newton_max_iterations: usize,
    pub armijo_beta: f64,

    pub mode: RunMode,
    pub output_dir: String,
    pub emit_fields: bool,
    pub emit_trace: bool,

    pub v_floor: f64,
    pub c_tol: f64,
    pub quality_floor: f64,
    pub mu_hat_shape: f64,
    pub mu_hat_outer: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mesh_path: "mesh.msh".into(),
            tag_inflow: "inflow".into(),
            tag_walls: "walls".into(),
            tag_outflow: "outflow".into(),
            tag_shape: "shape".into(),
            mu: 1.0,
            rho: 0.0,
            g: 20.0,
            gamma: 1e3,
            delta: 1e-1,
            f: [0.0, 0.0],
            target_volume: 0.04,
            target_barycenter: [0.3, 0.45],
            target_perimeter: 0.76,
            nu: 1e5,
            lambda: [0.0; 4],
            tau: 0.9,
            xi: 2.0,
            inner_iterations: 2000,
            outer_iterations: 10,
            t_max: 6.25e-6,
            newton_eps: 1e-6,
            newton_max_iterations: 200,
            armijo_beta: 1e-4,
            mode: RunMode::UnregularizedWithSafeguard,
            output_dir: "out".into(),
            emit_fields: true,
            emit_trace: true,
            v_floor: 1e-12,
            c_tol: 0.0,
            quality_floor: 0.05,
            mu_hat_shape: 5.0,
            mu_hat_outer: 1.0,
        }
    }
}

impl RunConfig {
    /// Parses a config file.
    pub fn load(path: &std::path::Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Parses `key = value` text; unknown keys and invalid values are errors.
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        let mut seen = BTreeSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::Parse {
                line,
                message: format!("expected `key = value`, found {content:?}"),
            })?;
            let key = key.trim();
            let value = value.trim();
            if !seen.insert(key.to_string()) {
                return Err(Error::Parse { line, message: format!("duplicate key {key:?}") });
            }
            cfg.set(key, value, line)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        let bad = |what: &str| Error::Parse {
            line,
            message: format!("invalid value {value:?} for key {key:?} ({what})"),
        };
        let as_f64 = || value.parse::<f64>().map_err(|_| bad("expected a number"));
        let as_usize = || value.parse::<usize>().map_err(|_| bad("expected a nonneg integer"));
        let as_bool = || match value {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            _ => Err(bad("expected a boolean")),
        };
        match key {
            "mesh" => self.mesh_path = value.to_string(),
            "tag_inflow" => self.tag_inflow = value.to_string(),
            "tag_walls" => self.tag_walls = value.to_string(),
            "tag_outflow" => self.tag_outflow = value.to_string(),
            "tag_shape" => self.tag_shape = value.to_string(),
            "mu" => self.mu = as_f64()?,
            "rho" => self.rho = as_f64()?,
            "g" => self.g = as_f64()?,
            "gamma" => self.gamma = as_f64()?,
            "delta" => self.delta = as_f64()?,
            "f_x" => self.f[0] = as_f64()?,
            "f_y" => self.f[1] = as_f64()?,
            "target_volume" => self.target_volume = as_f64()?,
            "target_barycenter_x" => self.target_barycenter[0] = as_f64()?,
            "target_barycenter_y" => self.target_barycenter[1] = as_f64()?,
            "target_perimeter" => self.target_perimeter = as_f64()?,
            "nu" => self.nu = as_f64()?,
            "lambda1" => self.lambda[0] = as_f64()?,
            "lambda2" => self.lambda[1] = as_f64()?,
            "lambda3" => self.lambda[2] = as_f64()?,
            "lambda4" => self.lambda[3] = as_f64()?,
            "tau" => self.tau = as_f64()?,
            "xi" => self.xi = as_f64()?,
            "inner_iterations" => self.inner_iterations = as_usize()?,
            "outer_iterations" => self.outer_iterations = as_usize()?,
            "t_max" => self.t_max = as_f64()?,
            "newton_eps" => self.newton_eps = as_f64()?,
            "newton_max_iterations" => self.newton_max_iterations = as_usize()?,
            "armijo_beta" => self.armijo_beta = as_f64()?,
            "mode" => {
                self.mode = match value {
                    "unregularized" => RunMode::UnregularizedWithSafeguard,
                    "regularized" => RunMode::Regularized,
                    _ => return Err(bad("expected `unregularized` or `regularized`")),
                }
            }
            "output_dir" => self.output_dir = value.to_string(),
            "emit_fields" => self.emit_fields = as_bool()?,
            "emit_trace" => self.emit_trace = as_bool()?,
            "v_floor" => self.v_floor = as_f64()?,
            "c_tol" => self.c_tol = as_f64()?,
            "quality_floor" => self.quality_floor = as_f64()?,
            "mu_hat_shape" => self.mu_hat_shape = as_f64()?,
            "mu_hat_outer" => self.mu_hat_outer = as_f64()?,
            _ => {
                return Err(Error::Parse { line, message: format!("unknown key {key:?}") });
            }
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(msg.to_string()))
            }
        };
        check(self.mu > 0.0, "mu must be > 0")?;
        check(self.rho >= 0.0, "rho must be >= 0")?;
        check(self.g > 0.0, "g must be > 0")?;
        check(self.gamma > 0.0, "gamma must be > 0")?;
        check(self.delta > 0.0, "delta must be > 0")?;
        check(self.nu > 0.0, "nu must be > 0")?;
        check(self.tau > 0.0 && self.tau < 1.0, "tau must lie in (0, 1)")?;
        check(self.xi > 1.0, "xi must be > 1")?;
        check(self.t_max > 0.0, "t_max must be > 0")?;
        check(self.newton_eps > 0.0, "newton_eps must be > 0")?;
        check(self.newton_max_iterations > 0, "newton_max_iterations must be > 0")?;
        check(
            self.armijo_beta > 0.0 && self.armijo_beta < 0.5,
            "armijo_beta must lie in (0, 0.5)",
        )?;
        check(self.v_floor >= 0.0, "v_floor must be >= 0")?;
        check(self.c_tol >= 0.0, "c_tol must be >= 0")?;
        check(self.quality_floor >= 0.0 && self.quality_floor < 1.0, "quality_floor must lie in [0, 1)")?;
        check(self.mu_hat_shape > 0.0, "mu_hat_shape must be > 0")?;
        check(self.mu_hat_outer > 0.0, "mu_hat_outer must be > 0")?;
        check(self.target_volume > 0.0, "target_volume must be > 0")?;
        check(self.target_perimeter > 0.0, "target_perimeter must be > 0")?;
        Ok(())
    }

    /// Serializes every key; `parse(serialize())` is the identity.
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "mesh = {}", self.mesh_path);
        let _ = writeln!(s, "tag_inflow = {}", self.tag_inflow);
        let _ = writeln!(s, "tag_walls = {}", self.tag_walls);
        let _ = writeln!(s, "tag_outflow = {}", self.tag_outflow);
        let _ = writeln!(s, "tag_shape = {}", self.tag_shape);
        let _ = writeln!(s, "mu = {}", self.mu);
        let _ = writeln!(s, "rho = {}", self.rho);
        let _ = writeln!(s, "g = {}", self.g);
        let _ = writeln!(s, "gamma = {}", self.gamma);
        let _ = writeln!(s, "delta = {}", self.delta);
        let _ = writeln!(s, "f_x = {}", self.f[0]);
        let _ = writeln!(s, "f_y = {}", self.f[1]);
        let _ = writeln!(s, "target_volume = {}", self.target_volume);
        let _ = writeln!(s, "target_barycenter_x = {}", self.target_barycenter[0]);
        let _ = writeln!(s, "target_barycenter_y = {}", self.target_barycenter[1]);
        let _ = writeln!(s, "target_perimeter = {}", self.target_perimeter);
        let _ = writeln!(s, "nu = {}", self.nu);
        for (i, l) in self.lambda.iter().enumerate() {
            let _ = writeln!(s, "lambda{} = {}", i + 1, l);
        }
        let _ = writeln!(s, "tau = {}", self.tau);
        let _ = writeln!(s, "xi = {}", self.xi);
        let _ = writeln!(s, "inner_iterations = {}", self.inner_iterations);
        let _ = writeln!(s, "outer_iterations = {}", self.outer_iterations);
        let _ = writeln!(s, "t_max = {}", self.t_max);
        let _ = writeln!(s, "newton_eps = {}", self.newton_eps);
        let _ = writeln!(s, "newton_max_iterations = {}", self.newton_max_iterations);
        let _ = writeln!(s, "armijo_beta = {}", self.armijo_beta);
        let mode = match self.mode {
            RunMode::UnregularizedWithSafeguard => "unregularized",
            RunMode::Regularized => "regularized",
        };
        let _ = writeln!(s, "mode = {mode}");
        let _ = writeln!(s, "output_dir = {}", self.output_dir);
        let _ = writeln!(s, "emit_fields = {}", self.emit_fields);
        let _ = writeln!(s, "emit_trace = {}", self.emit_trace);
        let _ = writeln!(s, "v_floor = {}", self.v_floor);
        let _ = writeln!(s, "c_tol = {}", self.c_tol);
        let _ = writeln!(s, "quality_floor = {}", self.quality_floor);
        let _ = writeln!(s, "mu_hat_shape = {}", self.mu_hat_shape);
        let _ = writeln!(s, "mu_hat_outer = {}", self.mu_hat_outer);
        s
    }

    pub fn tag_map(&self) -> TagMap {
        let mut map = TagMap::new();
        map.insert(&self.tag_inflow, BoundaryTag::Inflow);
        map.insert(&self.tag_walls, BoundaryTag::Walls);
        map.insert(&self.tag_outflow, BoundaryTag::Outflow);
        map.insert(&self.tag_shape, BoundaryTag::Shape);
        map
    }

    pub fn targets(&self) -> GeometricTargets {
        GeometricTargets {
            volume: self.target_volume,
            barycenter: self.target_barycenter,
            perimeter: self.target_perimeter,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_experiment_defaults() {
        let cfg = RunConfig::parse("").unwrap();
        assert_eq!(cfg.mu, 1.0);
        assert_eq!(cfg.rho, 0.0);
        assert_eq!(cfg.g, 20.0);
        assert_eq!(cfg.gamma, 1e3);
        assert_eq!(cfg.delta, 1e-1);
        assert_eq!(cfg.nu, 1e5);
        assert_eq!(cfg.tau, 0.9);
        assert_eq!(cfg.xi, 2.0);
        assert_eq!(cfg.t_max, 6.25e-6);
        assert_eq!(cfg.inner_iterations, 2000);
        assert_eq!(cfg.outer_iterations, 10);
        assert_eq!(cfg.newton_eps, 1e-6);
        assert_eq!(cfg.armijo_beta, 1e-4);
        assert_eq!(cfg.target_volume, 0.04);
        assert_eq!(cfg.target_barycenter, [0.3, 0.45]);
        assert_eq!(cfg.target_perimeter, 0.76);
        assert_eq!(cfg.mode, RunMode::UnregularizedWithSafeguard);
    }

    #[test]
    fn rho_override_for_convective_run() {
        let cfg = RunConfig::parse("rho = 10\n").unwrap();
        assert_eq!(cfg.rho, 10.0);
    }

    #[test]
    fn negative_gamma_is_rejected() {
        assert!(matches!(RunConfig::parse("gamma = -1\n"), Err(Error::Config(_))));
    }

    #[test]
    fn unknown_key_names_key_and_line() {
        match RunConfig::parse("mu = 1\nwhatever = 2\n") {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("whatever"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let cfg = RunConfig::parse("# comment\n\nmu = 2 # trailing\n").unwrap();
        assert_eq!(cfg.mu, 2.0);
    }

    #[test]
    fn serialize_round_trip_is_identity() {
        let mut cfg = RunConfig::default();
        cfg.rho = 10.0;
        cfg.mode = RunMode::Regularized;
        cfg.lambda = [0.5, -1.0, 2.0, 3.5];
        cfg.emit_fields = false;
        let round = RunConfig::parse(&cfg.serialize()).unwrap();
        assert_eq!(cfg, round);
    }
}
