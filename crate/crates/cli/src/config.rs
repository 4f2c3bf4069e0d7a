//! Problem definition files: an INI-like key-value tree with `[section]`
//! headers, `key = value` lines, comma-separated arrays and `#` comments.
//!
//! ```text
//! [network]
//! rays = 2
//! length = 1.0
//!
//! [problem]
//! order = first            # first | second
//!
//! [hamiltonian]            # default family for every ray
//! family = eikonal         # advection | eikonal | viscous
//! lambda = 1.0
//! c = 1.0
//! f = 1                    # source term, an expression in x
//!
//! [hamiltonian.2]          # optional per-ray override
//! family = advection
//! lambda = 1.0
//! b = -0.5
//! f = exp(-x)
//!
//! [kirchhoff]
//! family = linear
//! gamma = 1, 1             # one weight per ray, or a single shared value
//! beta = 0.0
//! c0 = 0.0
//!
//! [dirichlet]
//! a = 0.9, 0.7
//!
//! [solver]
//! nodes = 100
//! tolerance = 1e-10
//! max_sweeps = 1000000
//! ```
//!
//! Unknown sections and keys are rejected with their line number.

use std::collections::BTreeMap;

use starhjb::hamiltonian::{HamiltonianSet, KirchhoffCondition, RayFamily, SourceTerm};
use starhjb::network::StarNetwork;
use starhjb::solver::{Grid, Problem, ProblemOrder, SolverConfig};

use crate::expr::{parse_expr, Expr};

/// Parse error with a 1-based line and column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, out: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(out, "line {}, column {}: {}", self.line, self.column, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(line: usize, column: usize, message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError { line, column, message: message.into() })
}

/// Per-ray Hamiltonian choice. `lambda` must agree across rays; the source
/// term is kept as written so configs serialize back verbatim.
#[derive(Debug, Clone, PartialEq)]
pub enum HamiltonianSpec {
    Advection { lambda: f64, b: f64, f: String },
    Eikonal { lambda: f64, c: f64, f: String },
    Viscous { lambda: f64, c: f64, nu: f64, f: String },
}

impl HamiltonianSpec {
    fn lambda(&self) -> f64 {
        match self {
            HamiltonianSpec::Advection { lambda, .. }
            | HamiltonianSpec::Eikonal { lambda, .. }
            | HamiltonianSpec::Viscous { lambda, .. } => *lambda,
        }
    }

    fn source(&self) -> &str {
        match self {
            HamiltonianSpec::Advection { f, .. }
            | HamiltonianSpec::Eikonal { f, .. }
            | HamiltonianSpec::Viscous { f, .. } => f,
        }
    }

    fn family_name(&self) -> &'static str {
        match self {
            HamiltonianSpec::Advection { .. } => "advection",
            HamiltonianSpec::Eikonal { .. } => "eikonal",
            HamiltonianSpec::Viscous { .. } => "viscous",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KirchhoffSpec {
    pub gamma: Vec<f64>,
    pub beta: f64,
    pub c0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderSpec {
    First,
    Second,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemConfig {
    pub rays: usize,
    pub length: f64,
    pub order: OrderSpec,
    pub default_hamiltonian: HamiltonianSpec,
    pub per_ray: BTreeMap<usize, HamiltonianSpec>,
    pub kirchhoff: KirchhoffSpec,
    pub dirichlet: Vec<f64>,
    pub nodes: usize,
    pub tolerance: f64,
    pub max_sweeps: usize,
}

type Section = BTreeMap<String, (String, usize)>;

/// Parses a config file; rejects unknown sections, unknown keys, duplicate
/// keys, and arity mismatches.
pub fn parse_config(text: &str) -> Result<ProblemConfig, ConfigError> {
    let mut sections: BTreeMap<String, (Section, usize)> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(at) => &raw[..at],
            None => raw,
        };
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('[') {
            let Some(name) = rest.strip_suffix(']') else {
                return err(line_no, raw.find('[').unwrap_or(0) + 1, "unterminated section header");
            };
            let name = name.trim().to_string();
            if sections.contains_key(&name) {
                return err(line_no, 1, format!("duplicate section [{name}]"));
            }
            sections.insert(name.clone(), (Section::new(), line_no));
            current = Some(name);
            continue;
        }
        let Some(eq) = line.find('=') else {
            return err(line_no, 1, "expected 'key = value'");
        };
        let key = line[..eq].trim().to_string();
        let value = line[eq + 1..].trim().to_string();
        if key.is_empty() {
            return err(line_no, 1, "empty key");
        }
        let Some(section) = &current else {
            return err(line_no, 1, format!("key '{key}' outside any [section]"));
        };
        let entries = &mut sections.get_mut(section).unwrap().0;
        if entries.contains_key(&key) {
            return err(line_no, 1, format!("duplicate key '{key}' in [{section}]"));
        }
        entries.insert(key, (value, line_no));
    }

    let mut reader = SectionReader { sections };
    let config = reader.interpret()?;
    reader.reject_leftovers()?;
    Ok(config)
}

struct SectionReader {
    sections: BTreeMap<String, (Section, usize)>,
}

impl SectionReader {
    fn take(&mut self, name: &str) -> Option<Section> {
        self.sections.remove(name).map(|(s, _)| s)
    }

    fn require(&mut self, name: &str) -> Result<Section, ConfigError> {
        self.take(name)
            .ok_or_else(|| ConfigError {
                line: 1,
                column: 1,
                message: format!("missing required section [{name}]"),
            })
    }

    fn reject_leftovers(&self) -> Result<(), ConfigError> {
        if let Some((name, (_, line))) = self.sections.iter().next() {
            return err(*line, 1, format!("unknown section [{name}]"));
        }
        Ok(())
    }

    fn interpret(&mut self) -> Result<ProblemConfig, ConfigError> {
        let mut network = self.require("network")?;
        let rays = take_usize(&mut network, "rays", "network")?;
        let length = take_f64(&mut network, "length", "network")?;
        reject_keys(&network, "network")?;
        if rays.0 < 2 {
            return err(rays.1, 1, format!("rays must be at least 2, got {}", rays.0));
        }
        let rays = rays.0;

        let order = match self.take("problem") {
            Some(mut problem) => {
                let (text, line) = take_string(&mut problem, "order", "problem")?;
                reject_keys(&problem, "problem")?;
                match text.as_str() {
                    "first" => OrderSpec::First,
                    "second" => OrderSpec::Second,
                    other => return err(line, 1, format!("order must be first|second, got '{other}'")),
                }
            }
            None => OrderSpec::First,
        };

        let default_section = self.require("hamiltonian")?;
        let default_hamiltonian = interpret_hamiltonian(default_section)?;
        let mut per_ray = BTreeMap::new();
        let override_names: Vec<String> = self
            .sections
            .keys()
            .filter(|name| name.starts_with("hamiltonian."))
            .cloned()
            .collect();
        for name in override_names {
            let (section, line) = self.sections.remove(&name).unwrap();
            let suffix = &name["hamiltonian.".len()..];
            let ray: usize = suffix
                .parse()
                .map_err(|_| ConfigError {
                    line,
                    column: 1,
                    message: format!("bad ray index in [{name}]"),
                })?;
            if ray == 0 || ray > rays {
                return err(line, 1, format!("[{name}]: ray index outside 1..={rays}"));
            }
            per_ray.insert(ray, interpret_hamiltonian(section)?);
        }

        let mut kirchhoff = self.require("kirchhoff")?;
        let (family, family_line) = take_string(&mut kirchhoff, "family", "kirchhoff")?;
        if family != "linear" {
            return err(family_line, 1, format!("unknown kirchhoff family '{family}'"));
        }
        let (gamma, gamma_line) = take_f64_list(&mut kirchhoff, "gamma", "kirchhoff")?;
        let beta = take_f64_or(&mut kirchhoff, "beta", 0.0)?;
        let c0 = take_f64_or(&mut kirchhoff, "c0", 0.0)?;
        reject_keys(&kirchhoff, "kirchhoff")?;
        let gamma = match gamma.len() {
            1 => vec![gamma[0]; rays],
            n if n == rays => gamma,
            n => {
                return err(
                    gamma_line,
                    1,
                    format!("gamma needs 1 or {rays} entries, got {n}"),
                )
            }
        };

        let mut dirichlet_section = self.require("dirichlet")?;
        let (dirichlet, dirichlet_line) = take_f64_list(&mut dirichlet_section, "a", "dirichlet")?;
        reject_keys(&dirichlet_section, "dirichlet")?;
        if dirichlet.len() != rays {
            return err(
                dirichlet_line,
                1,
                format!("dirichlet needs {rays} entries, got {}", dirichlet.len()),
            );
        }

        let (nodes, tolerance, max_sweeps) = match self.take("solver") {
            Some(mut solver) => {
                let nodes = take_usize_or(&mut solver, "nodes", 100)?;
                let tolerance = take_f64_or(&mut solver, "tolerance", 1e-10)?;
                let max_sweeps = take_usize_or(&mut solver, "max_sweeps", 1_000_000)?;
                reject_keys(&solver, "solver")?;
                (nodes, tolerance, max_sweeps)
            }
            None => (100, 1e-10, 1_000_000),
        };

        Ok(ProblemConfig {
            rays,
            length: length.0,
            order,
            default_hamiltonian,
            per_ray,
            kirchhoff: KirchhoffSpec { gamma, beta, c0 },
            dirichlet,
            nodes,
            tolerance,
            max_sweeps,
        })
    }
}

fn interpret_hamiltonian(mut section: Section) -> Result<HamiltonianSpec, ConfigError> {
    let (family, family_line) = take_string(&mut section, "family", "hamiltonian")?;
    let lambda = take_f64(&mut section, "lambda", "hamiltonian")?.0;
    let f = match section.remove("f") {
        Some((text, line)) => {
            parse_expr(&text).map_err(|e| ConfigError {
                line,
                column: 1,
                message: format!("bad source expression: {e}"),
            })?;
            text
        }
        None => "0".to_string(),
    };
    let spec = match family.as_str() {
        "advection" => HamiltonianSpec::Advection {
            lambda,
            b: take_f64(&mut section, "b", "hamiltonian")?.0,
            f,
        },
        "eikonal" => HamiltonianSpec::Eikonal {
            lambda,
            c: take_f64(&mut section, "c", "hamiltonian")?.0,
            f,
        },
        "viscous" => HamiltonianSpec::Viscous {
            lambda,
            c: take_f64(&mut section, "c", "hamiltonian")?.0,
            nu: take_f64(&mut section, "nu", "hamiltonian")?.0,
            f,
        },
        other => return err(family_line, 1, format!("unknown hamiltonian family '{other}'")),
    };
    reject_keys(&section, &format!("hamiltonian ({family})"))?;
    Ok(spec)
}

fn reject_keys(section: &Section, name: &str) -> Result<(), ConfigError> {
    if let Some((key, (_, line))) = section.iter().next() {
        return err(*line, 1, format!("unknown key '{key}' in [{name}]"));
    }
    Ok(())
}

fn take_string(section: &mut Section, key: &str, where_: &str) -> Result<(String, usize), ConfigError> {
    section
        .remove(key)
        .ok_or_else(|| ConfigError {
            line: 1,
            column: 1,
            message: format!("missing key '{key}' in [{where_}]"),
        })
}

fn take_f64(section: &mut Section, key: &str, where_: &str) -> Result<(f64, usize), ConfigError> {
    let (text, line) = take_string(section, key, where_)?;
    let value = text
        .parse::<f64>()
        .map_err(|_| ConfigError { line, column: 1, message: format!("bad number '{text}'") })?;
    Ok((value, line))
}

fn take_f64_or(section: &mut Section, key: &str, default: f64) -> Result<f64, ConfigError> {
    match section.remove(key) {
        Some((text, line)) => text.parse::<f64>().map_err(|_| ConfigError {
            line,
            column: 1,
            message: format!("bad number '{text}'"),
        }),
        None => Ok(default),
    }
}

fn take_usize(section: &mut Section, key: &str, where_: &str) -> Result<(usize, usize), ConfigError> {
    let (text, line) = take_string(section, key, where_)?;
    let value = text
        .parse::<usize>()
        .map_err(|_| ConfigError { line, column: 1, message: format!("bad integer '{text}'") })?;
    Ok((value, line))
}

fn take_usize_or(section: &mut Section, key: &str, default: usize) -> Result<usize, ConfigError> {
    match section.remove(key) {
        Some((text, line)) => text.parse::<usize>().map_err(|_| ConfigError {
            line,
            column: 1,
            message: format!("bad integer '{text}'"),
        }),
        None => Ok(default),
    }
}

fn take_f64_list(
    section: &mut Section,
    key: &str,
    where_: &str,
) -> Result<(Vec<f64>, usize), ConfigError> {
    let (text, line) = take_string(section, key, where_)?;
    let mut values = Vec::new();
    for part in text.split(',') {
        let part = part.trim();
        let value = part.parse::<f64>().map_err(|_| ConfigError {
            line,
            column: 1,
            message: format!("bad number '{part}' in list"),
        })?;
        values.push(value);
    }
    Ok((values, line))
}

impl ProblemConfig {
    /// Canonical text form; parsing it back yields an equal config.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("[network]\nrays = {}\nlength = {}\n\n", self.rays, self.length));
        out.push_str(&format!(
            "[problem]\norder = {}\n\n",
            match self.order {
                OrderSpec::First => "first",
                OrderSpec::Second => "second",
            }
        ));
        serialize_hamiltonian(&mut out, "hamiltonian", &self.default_hamiltonian);
        for (ray, spec) in &self.per_ray {
            serialize_hamiltonian(&mut out, &format!("hamiltonian.{ray}"), spec);
        }
        out.push_str(&format!(
            "[kirchhoff]\nfamily = linear\ngamma = {}\nbeta = {}\nc0 = {}\n\n",
            join(&self.kirchhoff.gamma),
            self.kirchhoff.beta,
            self.kirchhoff.c0
        ));
        out.push_str(&format!("[dirichlet]\na = {}\n\n", join(&self.dirichlet)));
        out.push_str(&format!(
            "[solver]\nnodes = {}\ntolerance = {}\nmax_sweeps = {}\n",
            self.nodes, self.tolerance, self.max_sweeps
        ));
        out
    }

    fn spec_for(&self, ray: usize) -> &HamiltonianSpec {
        self.per_ray.get(&ray).unwrap_or(&self.default_hamiltonian)
    }

    /// Compiles the config into core objects.
    pub fn build(&self) -> Result<(Problem, Grid, SolverConfig), ConfigError> {
        let lambda = self.default_hamiltonian.lambda();
        for (ray, spec) in &self.per_ray {
            if (spec.lambda() - lambda).abs() > 0.0 {
                return err(
                    1,
                    1,
                    format!(
                        "lambda must agree across rays (ray {ray} declares {}, default {lambda})",
                        spec.lambda()
                    ),
                );
            }
        }
        let mut families = Vec::with_capacity(self.rays);
        for ray in 1..=self.rays {
            let spec = self.spec_for(ray);
            let ast: Expr = parse_expr(spec.source()).map_err(|e| ConfigError {
                line: 1,
                column: 1,
                message: format!("ray {ray}: bad source expression: {e}"),
            })?;
            let f = SourceTerm::new(move |x| ast.eval(x));
            families.push(match spec {
                HamiltonianSpec::Advection { b, .. } => RayFamily::Advection { b: *b, f },
                HamiltonianSpec::Eikonal { c, .. } => RayFamily::Eikonal { c: *c, f },
                HamiltonianSpec::Viscous { c, nu, .. } => {
                    RayFamily::Viscous { c: *c, nu: *nu, f }
                }
            });
        }
        let to_config_error = |e: starhjb::Error| ConfigError {
            line: 1,
            column: 1,
            message: e.to_string(),
        };
        let network = StarNetwork::new(self.rays, self.length).map_err(to_config_error)?;
        let hamiltonians =
            HamiltonianSet::builtin(families, lambda, self.length).map_err(to_config_error)?;
        let kirchhoff = KirchhoffCondition::linear(
            self.kirchhoff.gamma.clone(),
            self.kirchhoff.beta,
            self.kirchhoff.c0,
        )
        .map_err(to_config_error)?;
        let order = match self.order {
            OrderSpec::First => ProblemOrder::First,
            OrderSpec::Second => ProblemOrder::Second,
        };
        let problem = Problem::new(network, hamiltonians, kirchhoff, self.dirichlet.clone(), order)
            .map_err(to_config_error)?;
        let grid = Grid::new(problem.network(), self.nodes).map_err(to_config_error)?;
        let solver = SolverConfig {
            tolerance: self.tolerance,
            max_sweeps: self.max_sweeps,
            ..Default::default()
        };
        Ok((problem, grid, solver))
    }
}

fn serialize_hamiltonian(out: &mut String, section: &str, spec: &HamiltonianSpec) {
    out.push_str(&format!("[{section}]\nfamily = {}\n", spec.family_name()));
    out.push_str(&format!("lambda = {}\n", spec.lambda()));
    match spec {
        HamiltonianSpec::Advection { b, .. } => out.push_str(&format!("b = {b}\n")),
        HamiltonianSpec::Eikonal { c, .. } => out.push_str(&format!("c = {c}\n")),
        HamiltonianSpec::Viscous { c, nu, .. } => {
            out.push_str(&format!("c = {c}\nnu = {nu}\n"));
        }
    }
    out.push_str(&format!("f = {}\n\n", spec.source()));
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ")
}
