//! Shared test support: independent oracles, a random legal-stencil
//! generator and helpers to run one program on several backends.
#![allow(dead_code)]

use std::path::PathBuf;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use stencil_forge::backends::{BackendId, BuildOptions};
use stencil_forge::frontend::SourceProgram;
use stencil_forge::runtime::{compile_stencil_with, CompiledStencil, ExecutionReport, InvocationArgs};
use stencil_forge::storage::{FieldStorage, Fill, LayoutSpec};

pub fn cache_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("gts-cache")
}

pub fn options() -> BuildOptions {
    BuildOptions { cache_dir: Some(cache_dir()), ..Default::default() }
}

pub fn compile(src: &str, name: &str, backend: BackendId) -> CompiledStencil {
    compile_with(src, name, backend, &options())
}

pub fn compile_with(src: &str, name: &str, backend: BackendId, opts: &BuildOptions) -> CompiledStencil {
    compile_stencil_with(&SourceProgram::new(src), name, backend, &Default::default(), opts)
        .unwrap_or_else(|e| panic!("compiling `{name}` for {backend}: {e}\n{src}"))
}

/// Logical values of a field over the whole shape, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct HostField {
    pub shape: [usize; 3],
    pub origin: [usize; 3],
    pub data: Vec<f64>,
}

impl HostField {
    pub fn new(shape: [usize; 3], origin: [usize; 3], mut f: impl FnMut([usize; 3]) -> f64) -> Self {
        let mut data = Vec::with_capacity(shape.iter().product());
        for i in 0..shape[0] {
            for j in 0..shape[1] {
                for k in 0..shape[2] {
                    data.push(f([i, j, k]));
                }
            }
        }
        HostField { shape, origin, data }
    }

    pub fn at(&self, idx: [usize; 3]) -> f64 {
        self.data[(idx[0] * self.shape[1] + idx[1]) * self.shape[2] + idx[2]]
    }

    /// Value at compute-domain point `p` (relative to the origin).
    pub fn rel(&self, p: [i64; 3]) -> f64 {
        self.at([0, 1, 2].map(|a| (self.origin[a] as i64 + p[a]) as usize))
    }

    pub fn to_storage(&self, layout: &LayoutSpec) -> FieldStorage {
        let mut s = FieldStorage::with_shape(stencil_forge::ir::DType::F64, self.shape, self.origin, layout, Fill::Poison)
            .unwrap();
        s.fill_with(|idx| self.at(idx));
        s
    }

    pub fn from_storage(s: &FieldStorage) -> Self {
        HostField::new(s.shape(), s.origin(), |idx| s.get(idx))
    }

    /// Values over the `domain` box starting at the origin.
    pub fn domain_values(&self, domain: [usize; 3]) -> Vec<f64> {
        let mut out = Vec::new();
        for i in 0..domain[0] as i64 {
            for j in 0..domain[1] as i64 {
                for k in 0..domain[2] as i64 {
                    out.push(self.rel([i, j, k]));
                }
            }
        }
        out
    }
}

/// Normwise relative difference `max|a-b| / max|b|` (NaNs count as
/// infinite difference).
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut diff: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for (x, y) in a.iter().zip(b) {
        if x.to_bits() == y.to_bits() {
            scale = scale.max(y.abs());
            continue;
        }
        let d = (x - y).abs();
        if d.is_nan() {
            return f64::INFINITY;
        }
        diff = diff.max(d);
        scale = scale.max(y.abs());
    }
    if diff == 0.0 {
        0.0
    } else if scale == 0.0 {
        f64::INFINITY
    } else {
        diff / scale
    }
}

/// Runs `stencil` on copies of `inputs` laid out for its backend; returns
/// the resulting fields in declaration order.
pub fn run(
    stencil: &CompiledStencil,
    fields: &[(&str, &HostField)],
    scalars: &[(&str, f64)],
) -> (Vec<HostField>, ExecutionReport) {
    run_domain(stencil, fields, scalars, None)
}

/// Like [`run`] with an explicit compute domain.
pub fn run_domain(
    stencil: &CompiledStencil,
    fields: &[(&str, &HostField)],
    scalars: &[(&str, f64)],
    domain: Option<[usize; 3]>,
) -> (Vec<HostField>, ExecutionReport) {
    let layout = stencil.backend().default_layout();
    let mut storages: Vec<FieldStorage> = fields.iter().map(|(_, h)| h.to_storage(&layout)).collect();
    let report = {
        let mut args = InvocationArgs::new();
        for ((name, _), s) in fields.iter().zip(storages.iter_mut()) {
            args = args.field(name, s);
        }
        for (name, v) in scalars {
            args = args.scalar(name, *v);
        }
        if let Some(d) = domain {
            args = args.domain(d);
        }
        stencil.invoke(&mut args).unwrap_or_else(|e| panic!("invoking {}: {e}", stencil.backend()))
    };
    (storages.iter().map(HostField::from_storage).collect(), report)
}

/// Fields sized exactly for `domain` plus each field's extent, with a
/// margin of NaN beyond; values inside the extent come from `value`.
/// Run these with an explicit domain: the default one reaches into the margin.
pub fn poisoned_inputs(
    stencil: &CompiledStencil,
    domain: [usize; 3],
    margin: usize,
    mut value: impl FnMut(&str, [i64; 3]) -> f64,
) -> Vec<(String, HostField)> {
    stencil
        .implementation()
        .api_fields
        .iter()
        .map(|f| {
            let e = stencil.field_extent(&f.name).unwrap();
            let origin = [0, 1, 2].map(|a| (margin as i64 - e.lo[a]) as usize);
            let shape = [0, 1, 2].map(|a| (domain[a] as i64 + e.hi[a] - e.lo[a]) as usize + 2 * margin);
            let h = HostField::new(shape, origin, |idx| {
                let p = [0, 1, 2].map(|a| idx[a] as i64 - origin[a] as i64);
                let inside = (0..3).all(|a| p[a] >= e.lo[a] && p[a] < domain[a] as i64 + e.hi[a]);
                if inside {
                    value(&f.name, p)
                } else {
                    f64::NAN
                }
            });
            (f.name.clone(), h)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Oracles

/// Direct nested-loop evaluation of flux-limited horizontal diffusion.
pub fn hdiff_oracle(inp: &HostField, domain: [usize; 3], coeff: f64) -> Vec<f64> {
    let u = |i: i64, j: i64, k: i64| inp.rel([i, j, k]);
    let lap = |i: i64, j: i64, k: i64| 4.0 * u(i, j, k) - (u(i - 1, j, k) + u(i + 1, j, k) + u(i, j - 1, k) + u(i, j + 1, k));
    let flx = |i: i64, j: i64, k: i64| {
        let f = lap(i + 1, j, k) - lap(i, j, k);
        if f * (u(i + 1, j, k) - u(i, j, k)) > 0.0 {
            0.0
        } else {
            f
        }
    };
    let fly = |i: i64, j: i64, k: i64| {
        let f = lap(i, j + 1, k) - lap(i, j, k);
        if f * (u(i, j + 1, k) - u(i, j, k)) > 0.0 {
            0.0
        } else {
            f
        }
    };
    let mut out = Vec::new();
    for i in 0..domain[0] as i64 {
        for j in 0..domain[1] as i64 {
            for k in 0..domain[2] as i64 {
                out.push(u(i, j, k) - coeff * (flx(i, j, k) - flx(i - 1, j, k) + fly(i, j, k) - fly(i, j - 1, k)));
            }
        }
    }
    out
}

/// Solves the tridiagonal system given by sub-, main- and super-diagonal
/// `a`, `b`, `c` with right-hand side `d`, assembling the dense matrix and
/// applying Gaussian elimination with partial pivoting.
pub fn dense_tridiagonal_solve(a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m = vec![vec![0.0; n + 1]; n];
    for k in 0..n {
        if k > 0 {
            m[k][k - 1] = a[k];
        }
        m[k][k] = b[k];
        if k + 1 < n {
            m[k][k + 1] = c[k];
        }
        m[k][n] = d[k];
    }
    for col in 0..n {
        let pivot = (col..n).max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs())).unwrap();
        m.swap(col, pivot);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            if f != 0.0 {
                let (upper, lower) = m.split_at_mut(row);
                for (x, y) in lower[0][col..].iter_mut().zip(&upper[col][col..]) {
                    *x -= f * y;
                }
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|cc| m[row][cc] * x[cc]).sum();
        x[row] = (m[row][n] - s) / m[row][row];
    }
    x
}

// ---------------------------------------------------------------------------
// Random legal stencils

pub const RANDOM_INPUTS: [&str; 3] = ["in0", "in1", "in2"];
pub const RANDOM_OUTPUTS: [&str; 2] = ["out0", "out1"];
const TEMPS: [&str; 3] = ["t0", "t1", "t2"];

pub struct RandomStencil {
    pub source: String,
}

struct Generator {
    rng: StdRng,
}

#[derive(Clone, Copy, PartialEq)]
enum Role {
    Input,
    Output,
    Temp,
}

fn role(name: &str) -> Role {
    if RANDOM_INPUTS.contains(&name) {
        Role::Input
    } else if RANDOM_OUTPUTS.contains(&name) {
        Role::Output
    } else {
        Role::Temp
    }
}

impl Generator {
    fn read(&mut self, names: &[&str]) -> String {
        let name = names[self.rng.gen_range(0..names.len())];
        let mut o = [0i64; 3];
        let r = role(name);
        if r != Role::Output && self.rng.gen_bool(0.6) {
            o[0] = self.rng.gen_range(-2..=2);
            o[1] = self.rng.gen_range(-2..=2);
        }
        if r == Role::Input && self.rng.gen_bool(0.3) {
            o[2] = self.rng.gen_range(-2..=2);
        }
        if o == [0, 0, 0] && self.rng.gen_bool(0.5) {
            name.to_string()
        } else {
            format!("{name}[{},{},{}]", o[0], o[1], o[2])
        }
    }

    fn expr(&mut self, names: &[&str], depth: u32) -> String {
        if depth == 0 || self.rng.gen_bool(0.25) {
            return match self.rng.gen_range(0..10) {
                0 => format!("{:.3}", self.rng.gen_range(0.1..2.0)),
                1 => "s0".to_string(),
                _ => self.read(names),
            };
        }
        let a = self.expr(names, depth - 1);
        let b = self.expr(names, depth - 1);
        match self.rng.gen_range(0..9) {
            0 | 1 => format!("({a} + {b})"),
            2 => format!("({a} - {b})"),
            3 | 4 => format!("({a} * {b})"),
            5 => format!("({a} / (abs({b}) + 1.0))"),
            6 => format!("min({a}, {b})"),
            7 => format!("max({a}, {b})"),
            _ => format!("sqrt(abs({a}) + 0.5)"),
        }
    }

    fn cond(&mut self, names: &[&str]) -> String {
        let a = self.expr(names, 1);
        let b = self.expr(names, 1);
        let op = ["<", "<=", ">", ">=", "!="][self.rng.gen_range(0..5)];
        let c = format!("{a} {op} {b}");
        if self.rng.gen_bool(0.2) {
            let d = self.expr(names, 0);
            format!("{c} and not {d} > 0.5")
        } else {
            c
        }
    }

    fn stmt(&mut self, indent: &str, target: &str, targets: &[&str], readable: &[&str]) -> String {
        if self.rng.gen_bool(0.25) {
            let cond = self.cond(readable);
            let t2 = targets[self.rng.gen_range(0..targets.len())];
            let v1 = self.expr(readable, 2);
            let v2 = self.expr(readable, 2);
            format!("{indent}if {cond}:\n{indent}    {target} = {v1}\n{indent}else:\n{indent}    {t2} = {v2}\n")
        } else {
            let v = self.expr(readable, 3);
            format!("{indent}{target} = {v}\n")
        }
    }

    fn program(&mut self) -> String {
        let mut src = String::from(
            "stencil rnd(in0: Field[f64], in1: Field[f64], in2: Field[f64], out0: Field[f64], out1: Field[f64], s0: f64):\n",
        );
        let n_comp = self.rng.gen_range(1..=3);
        // Temporaries become readable once assigned unconditionally on
        // every level by an earlier computation or statement.
        let mut defined: Vec<&str> = Vec::new();
        for c in 0..n_comp {
            let order = ["PARALLEL", "FORWARD", "BACKWARD"][self.rng.gen_range(0..3)];
            let mut intervals: Vec<(&str, &str)> = match self.rng.gen_range(0..5) {
                0 | 1 => vec![("0", "None")],
                2 => vec![("0", "1"), ("1", "None")],
                3 => vec![("0", "-1"), ("-1", "None")],
                _ => vec![("0", "1"), ("1", "-1"), ("-1", "None")],
            };
            if order == "BACKWARD" {
                intervals.reverse();
            }
            let full = intervals.len() == 1;
            src.push_str(&format!("    with computation({order}):\n"));
            let n_stmts = self.rng.gen_range(1..=4);
            let last_comp = c + 1 == n_comp;
            let mut new_defs: Vec<&str> = Vec::new();
            for (s, e) in intervals {
                src.push_str(&format!("        with interval({s}, {e}):\n"));
                let mut local = defined.clone();
                for n in 0..n_stmts {
                    let mut readable: Vec<&str> = RANDOM_INPUTS.to_vec();
                    readable.extend(RANDOM_OUTPUTS);
                    readable.extend(local.iter().copied());
                    let output = (last_comp && n + 1 == n_stmts) || self.rng.gen_bool(0.4);
                    let target = if output {
                        RANDOM_OUTPUTS[self.rng.gen_range(0..RANDOM_OUTPUTS.len())]
                    } else {
                        TEMPS[self.rng.gen_range(0..TEMPS.len())]
                    };
                    let st = if role(target) == Role::Temp && !local.contains(&target) {
                        // First definition is unconditional.
                        let v = self.expr(&readable, 3);
                        format!("            {target} = {v}\n")
                    } else {
                        self.stmt("            ", target, &[target], &readable)
                    };
                    if role(target) == Role::Temp && !local.contains(&target) {
                        local.push(target);
                        if full && !new_defs.contains(&target) {
                            new_defs.push(target);
                        }
                    }
                    src.push_str(&st);
                }
            }
            defined.extend(new_defs);
        }
        src
    }
}

/// Draws random programs until one passes analysis. Returns the source and
/// the number of rejected candidates.
pub fn random_legal_stencil(seed: u64) -> (RandomStencil, usize) {
    let mut g = Generator { rng: StdRng::seed_from_u64(seed) };
    let mut rejected = 0;
    loop {
        let source = g.program();
        let def = stencil_forge::frontend::load_stencil(&SourceProgram::new(source.clone()), "rnd", &Default::default());
        if let Ok(def) = def {
            if stencil_forge::analysis::analyze(&def).is_ok() {
                return (RandomStencil { source }, rejected);
            }
        }
        rejected += 1;
    }
}
