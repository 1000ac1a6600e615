//! Built-in models, registered by name.
//!
//! A name may carry arguments: `pm1(0.25)`, `three_patch_reducible(1,-0.8)`.
//! Arguments accept decimals or exact fractions such as `-3/2`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{migration_matrix, PatchModel};

/// A family of models selectable by name.
pub trait ModelFactory: Send + Sync {
    fn name(&self) -> &'static str;
    /// Human-readable argument list, e.g. `(eps)`.
    fn signature(&self) -> &'static str;
    fn description(&self) -> &'static str;
    fn build(&self, args: &[f64]) -> Result<PatchModel>;
}

struct Family {
    name: &'static str,
    signature: &'static str,
    description: &'static str,
    build: fn(&[f64]) -> Result<PatchModel>,
}

impl ModelFactory for Family {
    fn name(&self) -> &'static str {
        self.name
    }
    fn signature(&self) -> &'static str {
        self.signature
    }
    fn description(&self) -> &'static str {
        self.description
    }
    fn build(&self, args: &[f64]) -> Result<PatchModel> {
        (self.build)(args)
    }
}

pub struct Catalog {
    factories: Vec<Box<dyn ModelFactory>>,
}

impl Default for Catalog {
    fn default() -> Self {
        Self::standard()
    }
}

impl Catalog {
    pub fn empty() -> Self {
        Self {
            factories: Vec::new(),
        }
    }

    pub fn register(&mut self, factory: Box<dyn ModelFactory>) {
        self.factories.retain(|f| f.name() != factory.name());
        self.factories.push(factory);
    }

    pub fn standard() -> Self {
        let mut c = Self::empty();
        let families = [
            Family {
                name: "pm1",
                signature: "(eps=0.5)",
                description: "two patches, rates 1-eps and -1-eps in antiphase, symmetric unit migration",
                build: pm1,
            },
            Family {
                name: "ab1",
                signature: "",
                description: "two patches, half-period rates, constant migration l12=2, l21=1",
                build: ab1,
            },
            Family {
                name: "ab2s",
                signature: "",
                description: "as ab1 with migration (l12, l21) = (1, 2) then (2, 1)",
                build: ab2s,
            },
            Family {
                name: "ab_mstar_inf",
                signature: "",
                description: "as ab1 with migration (l12, l21) = (5, 1) then (1, 5); growth for all large T",
                build: ab_mstar_inf,
            },
            Family {
                name: "abc_two_patch",
                signature: "",
                description: "two patches, three equal sub-periods, time-dependent migration",
                build: abc_two_patch,
            },
            Family {
                name: "three_patch_circular",
                signature: "",
                description: "three patches, circular one-way migration 1->2->3->1",
                build: three_patch_circular,
            },
            Family {
                name: "fainshil",
                signature: "(eps, delta) | (e1..e5, d1..d4)",
                description: "three-patch switching counterexample; no arguments gives the weakly coupled default",
                build: fainshil,
            },
            Family {
                name: "unidir_favorable",
                signature: "",
                description: "two patches, one-way migration toward the currently better patch",
                build: unidir_favorable,
            },
            Family {
                name: "unidir_unfavorable",
                signature: "",
                description: "two patches, one-way migration toward the currently worse patch",
                build: unidir_unfavorable,
            },
            Family {
                name: "three_patch_reducible",
                signature: "(a=1, b=-0.8)",
                description: "three patches, each sub-period couples only two of them",
                build: three_patch_reducible,
            },
        ];
        for f in families {
            c.register(Box::new(f));
        }
        c
    }

    pub fn factories(&self) -> impl Iterator<Item = &dyn ModelFactory> {
        self.factories.iter().map(|f| f.as_ref())
    }

    /// Resolves `name` or `name(arg, ...)`.
    pub fn get(&self, spec: &str) -> Result<PatchModel> {
        let (name, args) = parse_spec(spec)?;
        let factory = self
            .factories
            .iter()
            .find(|f| f.name() == name)
            .ok_or_else(|| Error::UnknownModel(spec.to_string()))?;
        Ok(factory.build(&args)?.with_name(spec.trim()))
    }

    pub fn contains(&self, spec: &str) -> bool {
        parse_spec(spec)
            .map(|(name, _)| self.factories.iter().any(|f| f.name() == name))
            .unwrap_or(false)
    }
}

/// Looks up a model in the standard catalog.
pub fn builtin(spec: &str) -> Result<PatchModel> {
    Catalog::standard().get(spec)
}

fn parse_spec(spec: &str) -> Result<(String, Vec<f64>)> {
    let spec = spec.trim();
    match spec.find('(') {
        None => Ok((spec.to_string(), Vec::new())),
        Some(open) => {
            let inner = spec[open + 1..]
                .strip_suffix(')')
                .ok_or_else(|| Error::UnknownModel(spec.to_string()))?;
            let args = if inner.trim().is_empty() {
                Vec::new()
            } else {
                inner
                    .split(',')
                    .map(parse_number)
                    .collect::<Result<Vec<_>>>()?
            };
            Ok((spec[..open].trim().to_string(), args))
        }
    }
}

/// Parses a decimal or an exact fraction `p/q`.
pub fn parse_number(s: &str) -> Result<f64> {
    let s = s.trim();
    let bad = || Error::InvalidParameter(format!("cannot parse number `{s}`"));
    let v = match s.split_once('/') {
        Some((p, q)) => {
            let p: f64 = p.trim().parse().map_err(|_| bad())?;
            let q: f64 = q.trim().parse().map_err(|_| bad())?;
            p / q
        }
        None => s.parse().map_err(|_| bad())?,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(bad())
    }
}

/// Exact rational constant; `p / q` rounds once.
fn q(s: &str) -> f64 {
    parse_number(s).expect("catalog constant")
}

fn arity(name: &str, args: &[f64], defaults: &[f64]) -> Result<Vec<f64>> {
    match args.len() {
        0 => Ok(defaults.to_vec()),
        k if k == defaults.len() => Ok(args.to_vec()),
        k => Err(Error::InvalidParameter(format!(
            "{name} takes {} arguments, got {k}",
            defaults.len()
        ))),
    }
}

fn halves(r_first: Vec<f64>, r_second: Vec<f64>, l_first: DMatrix<f64>, l_second: Option<DMatrix<f64>>) -> Result<PatchModel> {
    let migration = match l_second {
        Some(l2) => vec![(0.0, l_first), (0.5, l2)],
        None => vec![(0.0, l_first)],
    };
    PatchModel::from_segments(vec![(0.0, r_first), (0.5, r_second)], migration)
}

fn two_patch_l(l12: f64, l21: f64) -> DMatrix<f64> {
    migration_matrix(2, &[(0, 1, l12), (1, 0, l21)])
}

fn pm1(args: &[f64]) -> Result<PatchModel> {
    let eps = arity("pm1", args, &[0.5])?[0];
    let a = 1.0 - eps;
    let b = -1.0 - eps;
    halves(vec![a, b], vec![b, a], two_patch_l(1.0, 1.0), None)
}

fn ab_growth() -> (Vec<f64>, Vec<f64>) {
    (vec![q("1/2"), q("-3/2")], vec![q("-1"), q("1/2")])
}

fn ab1(args: &[f64]) -> Result<PatchModel> {
    arity("ab1", args, &[])?;
    let (a, b) = ab_growth();
    halves(a, b, two_patch_l(2.0, 1.0), None)
}

fn ab2s(args: &[f64]) -> Result<PatchModel> {
    arity("ab2s", args, &[])?;
    let (a, b) = ab_growth();
    halves(a, b, two_patch_l(1.0, 2.0), Some(two_patch_l(2.0, 1.0)))
}

fn ab_mstar_inf(args: &[f64]) -> Result<PatchModel> {
    arity("ab_mstar_inf", args, &[])?;
    let (a, b) = ab_growth();
    halves(a, b, two_patch_l(5.0, 1.0), Some(two_patch_l(1.0, 5.0)))
}

fn abc_two_patch(args: &[f64]) -> Result<PatchModel> {
    arity("abc_two_patch", args, &[])?;
    let t1 = q("1/3");
    let t2 = q("2/3");
    PatchModel::from_segments(
        vec![
            (0.0, vec![0.0, q("-1/10")]),
            (t1, vec![q("-4/5"), q("3/2")]),
            (t2, vec![q("1/2"), q("-2")]),
        ],
        vec![
            (0.0, two_patch_l(q("1/10"), q("1"))),
            (t1, two_patch_l(q("2"), q("1/5"))),
            (t2, two_patch_l(q("1/100"), q("1/100"))),
        ],
    )
}

fn three_patch_circular(args: &[f64]) -> Result<PatchModel> {
    arity("three_patch_circular", args, &[])?;
    let l = migration_matrix(3, &[(1, 0, 1.0), (2, 1, 1.0), (0, 2, 1.0)]);
    halves(
        vec![q("3/20"), q("-9/20"), q("-1/5")],
        vec![q("-9/20"), q("3/20"), q("-1/5")],
        l,
        None,
    )
}

/// Default perturbation: only ε3, ε4 and δ1 are switched on, at 0.1.
const FAINSHIL_DEFAULT: [f64; 9] = [0.0, 0.0, 0.1, 0.1, 0.0, 0.1, 0.0, 0.0, 0.0];

fn fainshil(args: &[f64]) -> Result<PatchModel> {
    let p: [f64; 9] = match args.len() {
        0 => FAINSHIL_DEFAULT,
        2 => {
            let (e, d) = (args[0], args[1]);
            [e, e, e, e, e, d, d, d, d]
        }
        9 => args.try_into().expect("nine values"),
        k => {
            return Err(Error::InvalidParameter(format!(
                "fainshil takes 0, 2 or 9 arguments, got {k}"
            )))
        }
    };
    if p.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidParameter(
            "fainshil perturbations must be ≥ 0".into(),
        ));
    }
    let [e1, e2, e3, e4, e5, d1, d2, d3, d4] = p;
    // (i, j) entries are 0-based here
    let h = migration_matrix(
        3,
        &[
            (0, 1, e2),
            (0, 2, e3),
            (1, 0, 10.0),
            (1, 2, e5),
            (2, 0, e1),
            (2, 1, e4),
        ],
    );
    let k = migration_matrix(
        3,
        &[
            (0, 1, d2),
            (0, 2, 10.0),
            (1, 0, d1),
            (1, 2, d3),
            (2, 0, d4),
            (2, 1, 10.0),
        ],
    );
    halves(vec![9.0, -1.0, -10.0], vec![-10.0, 0.0, 9.0], h, Some(k))
}

fn unidir_favorable(args: &[f64]) -> Result<PatchModel> {
    arity("unidir_favorable", args, &[])?;
    let (a, b) = ab_growth();
    halves(a, b, two_patch_l(1.0, 0.0), Some(two_patch_l(0.0, 1.0)))
}

fn unidir_unfavorable(args: &[f64]) -> Result<PatchModel> {
    arity("unidir_unfavorable", args, &[])?;
    let (a, b) = ab_growth();
    halves(a, b, two_patch_l(0.0, 1.0), Some(two_patch_l(1.0, 0.0)))
}

fn three_patch_reducible(args: &[f64]) -> Result<PatchModel> {
    let p = arity("three_patch_reducible", args, &[1.0, -0.8])?;
    let (a, b) = (p[0], p[1]);
    let t1 = q("1/3");
    let t2 = q("2/3");
    let pair = |i: usize, j: usize| migration_matrix(3, &[(i, j, 1.0), (j, i, 1.0)]);
    PatchModel::from_segments(
        vec![(0.0, vec![b, b, a]), (t1, vec![b, a, b]), (t2, vec![a, b, b])],
        vec![(0.0, pair(0, 1)), (t1, pair(0, 2)), (t2, pair(1, 2))],
    )
}
