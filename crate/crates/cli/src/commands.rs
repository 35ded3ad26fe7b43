//! Parameters and bodies of the subcommands.
//!
//! Every parameter struct rejects unknown keys and fills missing ones from
//! its `Default`.

use std::f64::consts::{PI, TAU};

use ivory::billiards::{OrientedLine, PlanarNet, Point};
use ivory::potentials::{
    antisymmetry_check, arnold_field_check, field_at, is_hyperbolic_at, point_field,
    point_potential, point_potential_quadrature, radial_laplacian, Charge, CurvedEllipsoid,
    FieldEstimate, HyperbolicSurface, HyperbolicityOptions, Polynomial, SamplerOptions,
};
use ivory::quadrics::{minkowski, Geometry};
use ivory::staeckel::{
    builtin_metric, staeckel_billiard_trajectory, BilliardOptions, CoordBox, StaeckelMetric, Stop,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{
    config_error, Cell, Check, CliError, Command, ExperimentConfig, Outcome, Scene, Table,
};

type Result<T> = std::result::Result<T, CliError>;

/// Significance of Monte Carlo checks, in standard errors.
pub const SIGMAS: f64 = 3.0;
/// Relative tolerance of the point-mass comparison.
pub const POINT_MASS_REL: f64 = 0.01;

pub fn execute(command: Command, cfg: &ExperimentConfig) -> Result<Outcome> {
    match command {
        Command::IvoryCheck => ivory_check(cfg),
        Command::BilliardOrbit => billiard_orbit(cfg),
        Command::PonceletGrid => poncelet_grid(cfg),
        Command::InscribedCircles => inscribed_circles(cfg),
        Command::Geodesic => geodesic(cfg),
        Command::StaeckelIvory => staeckel_ivory(cfg),
        Command::StaeckelBilliard => staeckel_billiard(cfg),
        Command::PotentialScan => potential_scan(cfg),
        Command::NewtonCheck => newton_check(cfg),
        Command::ArnoldCheck => arnold_check(cfg),
    }
}

fn echo<P: Serialize>(p: &P) -> serde_json::Value {
    serde_json::to_value(p).expect("parameters serialize")
}

fn rng_for(cfg: &ExperimentConfig, random: usize) -> Result<Option<ChaCha8Rng>> {
    if random == 0 {
        Ok(None)
    } else {
        Ok(Some(ChaCha8Rng::seed_from_u64(cfg.require_seed()?)))
    }
}

fn net(a: [f64; 2]) -> Result<PlanarNet> {
    Ok(PlanarNet::new(a[0], a[1])?)
}

fn ellipse(a: [f64; 2], lambda: f64) -> Vec<Point> {
    let (sa, sb) = ((a[0] - lambda).sqrt(), (a[1] - lambda).sqrt());
    (0..256)
        .map(|k| k as f64 * TAU / 256.0)
        .map(|t| [sa * t.cos(), sb * t.sin()])
        .collect()
}

/// Both branches of the confocal hyperbola `λ`, cut at `|x|, |y| ≤ extent`.
fn hyperbola(a: [f64; 2], lambda: f64, extent: f64) -> [Vec<Point>; 2] {
    let (sa, sb) = ((a[0] - lambda).sqrt(), (lambda - a[1]).sqrt());
    let smax = (extent / sb).asinh().min((extent / sa).max(1.0).acosh());
    let branch = |sign: f64| {
        (0..=128)
            .map(|k| smax * (2.0 * k as f64 / 128.0 - 1.0))
            .map(|s| [sign * sa * s.cosh(), sb * s.sinh()])
            .collect()
    };
    [branch(1.0), branch(-1.0)]
}

fn conic(scene: &mut Scene, a: [f64; 2], lambda: f64, extent: f64, stroke: &str) {
    if lambda < a[1] {
        scene.polyline(ellipse(a, lambda), true, stroke);
    } else if lambda < a[0] {
        for b in hyperbola(a, lambda, extent) {
            scene.polyline(b, false, stroke);
        }
    }
}

fn segment(line: &OrientedLine, half: f64) -> Vec<Point> {
    vec![line.point_at(-half), line.point_at(half)]
}

// ----- ivory-check -----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadSpec {
    /// Parameters of the two confocal ellipses, below `a₂`.
    pub e: [f64; 2],
    /// Parameters of the two confocal hyperbolas, in `(a₂, a₁)`.
    pub h: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IvoryCheckParams {
    pub a: [f64; 2],
    pub quadrilaterals: Vec<QuadSpec>,
    /// Extra quadrilaterals drawn at random; needs a seed.
    pub random: usize,
}

impl Default for IvoryCheckParams {
    fn default() -> Self {
        Self {
            a: [4.0, 1.0],
            quadrilaterals: vec![QuadSpec {
                e: [0.0, 0.6],
                h: [1.4, 3.0],
            }],
            random: 0,
        }
    }
}

fn ivory_check(cfg: &ExperimentConfig) -> Result<Outcome> {
    let p: IvoryCheckParams = cfg.params()?;
    let net = net(p.a)?;
    let mut quads = p.quadrilaterals.clone();
    if let Some(mut rng) = rng_for(cfg, p.random)? {
        let d = p.a[0] - p.a[1];
        for _ in 0..p.random {
            let mut e = || rng.random_range(p.a[1] - d..p.a[1] - 0.02 * d);
            let e = [e(), e()];
            let mut h = || rng.random_range(p.a[1] + 0.02 * d..p.a[0] - 0.02 * d);
            let h = [h(), h()];
            quads.push(QuadSpec { e, h });
        }
    }
    if quads.is_empty() {
        return Err(config_error("no quadrilaterals to check"));
    }
    let mut table = Table::new([
        "e1",
        "e2",
        "h1",
        "h2",
        "ac",
        "bd",
        "spread",
        "caustic_ac",
        "caustic_bd",
    ]);
    let (mut spread, mut caustic) = (0.0f64, 0.0f64);
    let mut first = None;
    for q in &quads {
        let r = net.ivory_quadrilateral(q.e, q.h)?;
        spread = spread.max((r.ac - r.bd).abs());
        caustic = caustic.max((r.caustic_ac - r.caustic_bd).abs());
        table.push(vec![
            q.e[0].into(),
            q.e[1].into(),
            q.h[0].into(),
            q.h[1].into(),
            r.ac.into(),
            r.bd.into(),
            (r.ac - r.bd).abs().into(),
            r.caustic_ac.into(),
            r.caustic_bd.into(),
        ]);
        first.get_or_insert(r);
    }
    let r = first.expect("at least one quadrilateral");
    let mut scene = Scene::new("Ivory quadrilateral");
    let extent = (p.a[0] - r.e[0].min(r.e[1])).sqrt();
    for &e in &r.e {
        conic(&mut scene, p.a, e, extent, "#1f77b4");
    }
    for &h in &r.h {
        conic(&mut scene, p.a, h, extent, "#ff7f0e");
    }
    conic(&mut scene, p.a, r.caustic_ac, extent, "#999999");
    scene.polyline(r.vertices.to_vec(), true, "#000000");
    scene.polyline(vec![r.a(), r.c()], false, "#d62728");
    scene.polyline(vec![r.b(), r.d()], false, "#2ca02c");
    scene.dots(r.vertices.to_vec(), "#000000");
    let tol = cfg.tol(1e-9);
    Ok(Outcome {
        params: echo(&IvoryCheckParams {
            quadrilaterals: quads,
            random: 0,
            ..p
        }),
        checks: vec![
            Check::below("diagonal_spread", spread, tol),
            Check::below("caustic_agreement", caustic, tol),
        ],
        table,
        scene: Some(scene),
    })
}

// ----- billiard-orbit -----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BilliardOrbitParams {
    pub a: [f64; 2],
    /// The mirror is the confocal ellipse with this parameter.
    pub lambda0: f64,
    pub orbits: usize,
    pub bounces: usize,
}

impl Default for BilliardOrbitParams {
    fn default() -> Self {
        Self {
            a: [4.0, 1.0],
            lambda0: 0.0,
            orbits: 200,
            bounces: 100,
        }
    }
}

/// Phase portrait of the billiard map in the line coordinates `(α, p)`.
/// Orbit `k` starts on the vertical line `x = cₖ`, `0 < cₖ` below the
/// semi-major axis; `x = ±c` share a caustic.
fn billiard_orbit(cfg: &ExperimentConfig) -> Result<Outcome> {
    let p: BilliardOrbitParams = cfg.params()?;
    if p.orbits == 0 || p.bounces == 0 {
        return Err(config_error("orbits and bounces must be positive"));
    }
    if p.lambda0 >= p.a[1] {
        return Err(config_error("lambda0 must lie below a[1]"));
    }
    let net = net(p.a)?;
    let half = (p.a[0] - p.lambda0).sqrt();
    let mut table = Table::new(["orbit", "bounce", "alpha", "p", "caustic"]);
    let mut drift = 0.0f64;
    let mut dots = Vec::new();
    for k in 0..p.orbits {
        let c = half * (k as f64 + 0.5) / p.orbits as f64;
        let start = OrientedLine::through([c, 0.0], [0.0, 1.0]);
        let (lines, _) = net.billiard_orbit(p.lambda0, start, p.bounces)?;
        let c0 = net.caustic_parameter(&lines[0]);
        for (j, l) in lines.iter().enumerate() {
            let lc = net.caustic_parameter(l);
            drift = drift.max((lc - c0).abs());
            table.push(vec![
                k.into(),
                j.into(),
                l.alpha.into(),
                l.p.into(),
                lc.into(),
            ]);
            if j > 0 {
                dots.push([l.alpha, l.p]);
            }
        }
    }
    let mut scene = Scene::new("Phase portrait of the billiard map");
    scene.polyline(
        vec![[0.0, -half], [TAU, -half], [TAU, half], [0.0, half]],
        true,
        "#999999",
    );
    scene.dots(dots, "#1f77b4");
    Ok(Outcome {
        params: echo(&p),
        checks: vec![Check::below("caustic_drift", drift, cfg.tol(1e-9))],
        table,
        scene: Some(scene),
    })
}

// ----- poncelet-grid -----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PonceletGridParams {
    pub a: [f64; 2],
    pub lambda0: f64,
    pub q: usize,
    pub p: usize,
    /// Eccentric angle of the first tangency point on the caustic.
    pub psi: f64,
}

impl Default for PonceletGridParams {
    fn default() -> Self {
        Self {
            a: [4.0, 1.0],
            lambda0: 0.0,
            q: 9,
            p: 2,
            psi: 0.4,
        }
    }
}

fn poncelet_grid(cfg: &ExperimentConfig) -> Result<Outcome> {
    let p: PonceletGridParams = cfg.params()?;
    let net = net(p.a)?;
    let g = net.poncelet_grid(p.lambda0, p.q, p.p, p.psi)?;
    let lc = net.caustic_parameter(&g.lines[0]);
    let gap = net.poncelet_closure_gap(p.lambda0, lc, p.q, p.psi)?;
    let mut table = Table::new(["family", "set", "x", "y", "lambda"]);
    for (fam, sets, lams) in [
        ("concentric", &g.concentric_sets, &g.concentric_lambda),
        ("radial", &g.radial_sets, &g.radial_lambda),
    ] {
        for (k, (set, lam)) in sets.iter().zip(lams.iter()).enumerate() {
            for x in set {
                table.push(vec![
                    fam.into(),
                    k.into(),
                    x[0].into(),
                    x[1].into(),
                    (*lam).into(),
                ]);
            }
        }
    }
    let mut scene = Scene::new(format!("Poncelet grid, n={}", p.q));
    let extent = g
        .concentric_sets
        .iter()
        .flatten()
        .map(|x| x[0].hypot(x[1]))
        .fold((p.a[0] - p.lambda0).sqrt(), f64::max);
    for l in &g.radial_lambda {
        conic(&mut scene, p.a, *l, extent, "#ff7f0e");
    }
    for l in &g.concentric_lambda {
        conic(&mut scene, p.a, *l, extent, "#1f77b4");
    }
    conic(&mut scene, p.a, p.lambda0, extent, "#000000");
    conic(&mut scene, p.a, lc, extent, "#999999");
    for l in &g.lines {
        scene.polyline(segment(l, 1.1 * extent), false, "#2ca02c");
    }
    for set in &g.concentric_sets {
        scene.dots(set.clone(), "#d62728");
    }
    let tol = cfg.tol(1e-8);
    Ok(Outcome {
        params: echo(&p),
        checks: vec![
            Check::below("closure_gap", gap, cfg.tol(1e-7)),
            Check::below("concentric_spread", g.concentric_spread, tol),
            Check::below("radial_spread", g.radial_spread, tol),
            Check::below("quadrilateral_residual", g.quadrilateral_residual, tol),
        ],
        table,
        scene: Some(scene),
    })
}

// ----- inscribed-circles -----

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSpec {
    /// Eccentric angles of `A` and `B` on the outer ellipse.
    pub t1: f64,
    pub t2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InscribedCirclesParams {
    pub a: [f64; 2],
    /// Ellipse carrying `A` and `B`.
    pub lambda_ellipse: f64,
    pub lambda_caustic: f64,
    pub configurations: Vec<PairSpec>,
    pub random: usize,
}

impl Default for InscribedCirclesParams {
    fn default() -> Self {
        Self {
            a: [4.0, 1.0],
            lambda_ellipse: -1.0,
            lambda_caustic: 0.5,
            configurations: vec![PairSpec { t1: 0.5, t2: 1.6 }],
            random: 0,
        }
    }
}

fn inscribed_circles(cfg: &ExperimentConfig) -> Result<Outcome> {
    let p: InscribedCirclesParams = cfg.params()?;
    if !(p.lambda_ellipse < p.lambda_caustic && p.lambda_caustic < p.a[1]) {
        return Err(config_error("need lambda_ellipse < lambda_caustic < a[1]"));
    }
    let net = net(p.a)?;
    let mut pairs = p.configurations.clone();
    if let Some(mut rng) = rng_for(cfg, p.random)? {
        for _ in 0..p.random {
            let t1 = rng.random_range(0.0..TAU);
            pairs.push(PairSpec {
                t1,
                t2: t1 + rng.random_range(0.3..1.5),
            });
        }
    }
    if pairs.is_empty() {
        return Err(config_error("no configurations to check"));
    }
    let (sa, sb) = (
        (p.a[0] - p.lambda_ellipse).sqrt(),
        (p.a[1] - p.lambda_ellipse).sqrt(),
    );
    let on = |t: f64| [sa * t.cos(), sb * t.sin()];
    let mut table = Table::new([
        "t1",
        "t2",
        "perimeter_residual",
        "unsigned_residual",
        "tangency_residual",
        "center_x",
        "center_y",
        "radius",
    ]);
    let (mut res, mut tan, mut hyp) = (0.0f64, 0.0f64, 0.0f64);
    let mut first = None;
    for pr in &pairs {
        let r = net.circumscribed_check(on(pr.t1), on(pr.t2), p.lambda_caustic)?;
        res = res.max(r.perimeter_residual.abs());
        tan = tan.max(r.tangency_residual);
        hyp = hyp.max((r.h_c - r.h_d).abs());
        table.push(vec![
            pr.t1.into(),
            pr.t2.into(),
            r.perimeter_residual.into(),
            r.unsigned_residual.into(),
            r.tangency_residual.into(),
            r.center[0].into(),
            r.center[1].into(),
            r.radius.into(),
        ]);
        first.get_or_insert(r);
    }
    let r = first.expect("at least one configuration");
    let mut scene = Scene::new("Circumscribed quadrilateral");
    conic(&mut scene, p.a, p.lambda_ellipse, sa, "#000000");
    conic(&mut scene, p.a, p.lambda_caustic, sa, "#999999");
    conic(&mut scene, p.a, r.h_c, sa, "#ff7f0e");
    scene.polyline(vec![r.a, r.c, r.b, r.d], true, "#1f77b4");
    scene.circle(r.center, r.radius, "#d62728");
    scene.dots(vec![r.a, r.b, r.c, r.d, r.center], "#000000");
    let tol = cfg.tol(1e-9);
    Ok(Outcome {
        params: echo(&InscribedCirclesParams {
            configurations: pairs,
            random: 0,
            ..p
        }),
        checks: vec![
            Check::below("perimeter_residual", res, tol),
            Check::below("tangency_residual", tan, tol),
            Check::below("hyperbola_agreement", hyp, tol),
        ],
        table,
        scene: Some(scene),
    })
}

// ----- Stäckel commands -----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeodesicParams {
    /// Builtin metric name, e.g. `elliptic_R2` or `sphere_conical`.
    pub metric: String,
    pub params: Vec<f64>,
    pub from: Vec<f64>,
    pub to: Vec<f64>,
}

impl Default for GeodesicParams {
    fn default() -> Self {
        Self {
            metric: "elliptic_R2".into(),
            params: vec![4.0, 1.0],
            from: vec![1.5, -1.0],
            to: vec![2.8, 0.5],
        }
    }
}

fn metric(name: &str, params: &[f64]) -> Result<StaeckelMetric> {
    builtin_metric(name, params).map_err(|e| config_error(e.to_string()))
}

/// Embedding of first-orthant coordinates, for metrics with a known one.
fn embedding(name: &str, params: &[f64], q: &[f64]) -> Option<Vec<f64>> {
    match (name, params.len(), q.len()) {
        ("elliptic_R2", 2, 2) => {
            let (a, b) = (params[0], params[1]);
            Some(vec![
                ((a - q[0]) * (a - q[1]) / (a - b)).sqrt(),
                ((b - q[0]) * (b - q[1]) / (b - a)).sqrt(),
            ])
        }
        ("sphere_conical", 3, 2) => {
            let e = |i: usize| {
                let (j, k) = ((i + 1) % 3, (i + 2) % 3);
                let ai = params[i];
                ((ai - q[0]) * (ai - q[1]) / ((ai - params[j]) * (ai - params[k]))).sqrt()
            };
            Some(vec![e(0), e(1), e(2)])
        }
        _ => None,
    }
}

/// Ambient distance: a chord in the plane, an arc on the sphere.
fn oracle_length(name: &str, x: &[f64], y: &[f64]) -> f64 {
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    if name == "sphere_conical" {
        2.0 * (0.5 * d2.sqrt()).asin()
    } else {
        d2.sqrt()
    }
}

fn indexed(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (0..n).map(move |i| format!("{prefix}{i}"))
}

fn geodesic(cfg: &ExperimentConfig) -> Result<Outcome> {
    let p: GeodesicParams = cfg.params()?;
    let m = metric(&p.metric, &p.params)?;
    let n = m.dim();
    if p.from.len() != n || p.to.len() != n {
        return Err(config_error(format!(
            "{} needs {n} coordinates per endpoint",
            p.metric
        )));
    }
    let g = m.geodesic_between(&p.from, &p.to)?;
    let header: Vec<String> = ["length".to_string(), "residual".to_string()]
        .into_iter()
        .chain(indexed("from", n))
        .chain(indexed("to", n))
        .chain(indexed("sign", n))
        .chain(indexed("alpha", n))
        .collect();
    let mut table = Table::new(header);
    let mut row: Vec<Cell> = vec![g.length.into(), g.residual.into()];
    row.extend(g.from.iter().chain(&g.to).map(|&v| Cell::Num(v)));
    row.extend(g.signs.iter().map(|&s| Cell::Int(i64::from(s))));
    row.extend(g.alpha.iter().map(|&v| Cell::Num(v)));
    table.push(row);
    let mut checks = vec![Check::below("residual", g.residual, cfg.tol(1e-9))];
    if let (Some(x), Some(y)) = (
        embedding(&p.metric, &p.params, &g.from),
        embedding(&p.metric, &p.params, &g.to),
    ) {
        checks.push(Check::below(
            "oracle_gap",
            (g.length - oracle_length(&p.metric, &x, &y)).abs(),
            cfg.tol(1e-8),
        ));
    }
    Ok(Outcome {
        params: echo(&p),
        checks,
        table,
        scene: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StaeckelIvoryParams {
    pub metric: String,
    pub params: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Default for StaeckelIvoryParams {
    fn default() -> Self {
        Self {
            metric: "elliptic_R2".into(),
            params: vec![4.0, 1.0],
            lower: vec![1.5, -1.0],
            upper: vec![2.8, 0.5],
        }
    }
}

fn coord_box(m: &StaeckelMetric, lower: &[f64], upper: &[f64]) -> Result<CoordBox> {
    if lower.len() != m.dim() || upper.len() != m.dim() {
        return Err(config_error(format!(
            "the box needs {} bounds on each side",
            m.dim()
        )));
    }
    CoordBox::new(lower.to_vec(), upper.to_vec()).map_err(|e| config_error(e.to_string()))
}

fn staeckel_ivory(cfg: &ExperimentConfig) -> Result<Outcome> {
    let p: StaeckelIvoryParams = cfg.params()?;
    let m = metric(&p.metric, &p.params)?;
    let bx = coord_box(&m, &p.lower, &p.upper)?;
    let r = m.ivory_check(&bx)?;
    let n = m.dim();
    let header: Vec<String> = [
        "diagonal".to_string(),
        "length".to_string(),
        "residual".to_string(),
    ]
    .into_iter()
    .chain(indexed("from", n))
    .chain(indexed("to", n))
    .collect();
    let mut table = Table::new(header);
    for (k, g) in r.diagonals.iter().enumerate() {
        let mut row: Vec<Cell> = vec![k.into(), g.length.into(), g.residual.into()];
        row.extend(g.from.iter().chain(&g.to).map(|&v| Cell::Num(v)));
        table.push(row);
    }
    let tol = cfg.tol(1e-8);
    Ok(Outcome {
        params: echo(&p),
        checks: vec![
            Check::below("diagonal_spread", r.spread, tol),
            Check::below("alpha_spread", r.alpha_spread, tol),
        ],
        table,
        scene: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StaeckelBilliardParams {
    pub metric: String,
    pub params: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Start point; the box centre when absent.
    pub start: Option<Vec<f64>>,
    /// Initial coordinate velocity, rescaled to unit speed.
    pub velocity: Vec<f64>,
    pub bounces: usize,
    pub dt: f64,
}

impl Default for StaeckelBilliardParams {
    fn default() -> Self {
        Self {
            metric: "elliptic_R2".into(),
            params: vec![4.0, 1.0],
            lower: vec![1.5, -1.0],
            upper: vec![2.8, 0.5],
            start: None,
            velocity: vec![1.0, 0.7],
            bounces: 100,
            dt: BilliardOptions::default().dt,
        }
    }
}

fn staeckel_billiard(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut p: StaeckelBilliardParams = cfg.params()?;
    let m = metric(&p.metric, &p.params)?;
    let bx = coord_box(&m, &p.lower, &p.upper)?;
    let n = m.dim();
    let q0 = p.start.clone().unwrap_or_else(|| {
        p.lower
            .iter()
            .zip(&p.upper)
            .map(|(a, b)| 0.5 * (a + b))
            .collect()
    });
    if q0.len() != n || p.velocity.len() != n {
        return Err(config_error(format!(
            "start and velocity need {n} components"
        )));
    }
    if !(p.dt > 0.0) || p.bounces == 0 {
        return Err(config_error("dt and bounces must be positive"));
    }
    let g = m.metric_coeffs(&q0)?;
    let speed: f64 = p
        .velocity
        .iter()
        .zip(&g)
        .map(|(v, g)| g * v * v)
        .sum::<f64>()
        .sqrt();
    if !(speed > 0.0) {
        return Err(config_error("velocity must be nonzero"));
    }
    let p0: Vec<f64> = p
        .velocity
        .iter()
        .zip(&g)
        .map(|(v, g)| g * v / speed)
        .collect();
    let opts = BilliardOptions {
        dt: p.dt,
        ..Default::default()
    };
    let orbit = staeckel_billiard_trajectory(&m, &bx, &q0, &p0, Stop::Bounces(p.bounces), opts)?;
    let header: Vec<String> = [
        "bounce".to_string(),
        "time".to_string(),
        "walls".to_string(),
    ]
    .into_iter()
    .chain(indexed("q", n))
    .collect();
    let mut table = Table::new(header);
    for (k, b) in orbit.bounces.iter().enumerate() {
        let walls: Vec<String> = b
            .walls
            .iter()
            .map(|(i, up)| format!("{i}{}", if *up { '+' } else { '-' }))
            .collect();
        let mut row: Vec<Cell> = vec![k.into(), b.time.into(), Cell::Text(walls.join(" "))];
        row.extend(b.q.iter().map(|&v| Cell::Num(v)));
        table.push(row);
    }
    let scene = (n == 2).then(|| {
        let mut s = Scene::new("Billiard in a coordinate box");
        let (l, u) = (&p.lower, &p.upper);
        s.polyline(
            vec![[l[0], l[1]], [u[0], l[1]], [u[0], u[1]], [l[0], u[1]]],
            true,
            "#000000",
        );
        s.dots(
            orbit.bounces.iter().map(|b| [b.q[0], b.q[1]]).collect(),
            "#1f77b4",
        );
        s
    });
    p.start = Some(q0);
    Ok(Outcome {
        params: echo(&p),
        checks: vec![
            Check::below("alpha_drift", orbit.alpha_drift, cfg.tol(1e-9)),
            Check::flag("bounce_count", orbit.reflections() >= p.bounces),
        ],
        table,
        scene,
    })
}

// ----- potentials -----

fn geometry(name: &str, dim: usize) -> Result<Geometry> {
    if dim == 0 {
        return Err(config_error("dim must be positive"));
    }
    match name {
        "euclidean" => Ok(Geometry::Euclidean(dim)),
        "spherical" => Ok(Geometry::Spherical(dim)),
        "hyperbolic" => Ok(Geometry::Hyperbolic(dim)),
        _ => Err(config_error(format!("unknown geometry {name:?}"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PotentialScanParams {
    pub geometry: String,
    pub dim: usize,
    pub r_min: f64,
    /// Upper end; `π − r_min` on spheres and `3` otherwise when absent.
    pub r_max: Option<f64>,
    pub points: usize,
    pub laplacian_step: f64,
}

impl Default for PotentialScanParams {
    fn default() -> Self {
        Self {
            geometry: "spherical".into(),
            dim: 3,
            r_min: 0.3,
            r_max: None,
            points: 100,
            laplacian_step: 1e-3,
        }
    }
}

fn potential_scan(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut p: PotentialScanParams = cfg.params()?;
    let g = geometry(&p.geometry, p.dim)?;
    if !g.is_curved() {
        return Err(config_error("potential-scan needs a curved geometry"));
    }
    let spherical = matches!(g, Geometry::Spherical(_));
    let r_max = p
        .r_max
        .unwrap_or(if spherical { PI - p.r_min } else { 3.0 });
    if p.points < 2 || !(0.0 < p.r_min && p.r_min < r_max) {
        return Err(config_error("need points ≥ 2 and 0 < r_min < r_max"));
    }
    let mut table = Table::new(["r", "potential", "quadrature", "laplacian", "antisymmetry"]);
    let (mut gap, mut lap, mut anti) = (0.0f64, 0.0f64, 0.0f64);
    let mut curve = Vec::new();
    for k in 0..p.points {
        let r = p.r_min + (r_max - p.r_min) * k as f64 / (p.points - 1) as f64;
        let u = point_potential(g, r)?;
        let uq = point_potential_quadrature(g, r)?;
        let l = radial_laplacian(g, r, p.laplacian_step)?;
        let a = if spherical {
            antisymmetry_check(p.dim, r)?
        } else {
            0.0
        };
        gap = gap.max((u - uq).abs());
        lap = lap.max(l.abs());
        anti = anti.max(a);
        table.push(vec![r.into(), u.into(), uq.into(), l.into(), a.into()]);
        curve.push([r, u.clamp(-5.0, 5.0)]);
    }
    let mut scene = Scene::new("Point potential");
    scene.polyline(vec![[p.r_min, 0.0], [r_max, 0.0]], false, "#999999");
    scene.polyline(curve, false, "#1f77b4");
    p.r_max = Some(r_max);
    let mut checks = vec![
        Check::below("quadrature_gap", gap, cfg.tol(1e-10)),
        Check::below("laplacian", lap, cfg.tol(1e-8)),
    ];
    if spherical {
        checks.push(Check::below("antisymmetry", anti, cfg.tol(1e-10)));
    }
    Ok(Outcome {
        params: echo(&p),
        checks,
        table,
        scene: Some(scene),
    })
}

fn sampler(cfg: &ExperimentConfig, offset: u64) -> Result<SamplerOptions> {
    let samples = cfg.samples.unwrap_or(100_000);
    if samples == 0 {
        return Err(config_error("samples must be positive"));
    }
    let batch_size = cfg.batch_size.unwrap_or(4096);
    if batch_size == 0 {
        return Err(config_error("batch_size must be positive"));
    }
    Ok(SamplerOptions {
        samples,
        batch_size,
        seed: cfg.require_seed()?.wrapping_add(offset),
    })
}

/// Significance of a field estimate, `‖F‖ / σ`.
fn significance(f: &FieldEstimate) -> f64 {
    if f.norm_error > 0.0 {
        f.norm / f.norm_error
    } else if f.norm == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Expect {
    /// The field vanishes within the statistical error.
    Zero,
    /// The field equals that of a unit point mass at the centre.
    PointMass,
    /// Report only.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldPoint {
    /// Point of the model space in ambient coordinates.
    pub x: Vec<f64>,
    pub expect: Expect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NewtonCheckParams {
    pub geometry: String,
    pub dim: usize,
    /// Semi-axes of the ellipsoid `Σ xᵢ²/aᵢ = x₀²/b`.
    pub a: Vec<f64>,
    pub b: f64,
    pub points: Vec<FieldPoint>,
}

impl Default for NewtonCheckParams {
    fn default() -> Self {
        Self {
            geometry: "spherical".into(),
            dim: 3,
            a: vec![0.9, 0.5, 0.3],
            b: 1.0,
            points: vec![
                FieldPoint {
                    x: vec![1.0, 0.0, 0.0, 0.0],
                    expect: Expect::Zero,
                },
                FieldPoint {
                    x: vec![-1.0, 0.0, 0.0, 0.0],
                    expect: Expect::Zero,
                },
            ],
        }
    }
}

fn model_norm(g: Geometry, v: &[f64]) -> f64 {
    match g {
        Geometry::Hyperbolic(_) => minkowski(v, v).max(0.0).sqrt(),
        _ => v.iter().map(|a| a * a).sum::<f64>().sqrt(),
    }
}

fn newton_check(cfg: &ExperimentConfig) -> Result<Outcome> {
    let p: NewtonCheckParams = cfg.params()?;
    sampler(cfg, 0)?;
    let g = geometry(&p.geometry, p.dim)?;
    if p.points.is_empty() {
        return Err(config_error("no evaluation points"));
    }
    let e = CurvedEllipsoid::new(g, &p.a, p.b)?;
    let n = g.ambient_dim();
    let header: Vec<String> = [
        "point".to_string(),
        "expect".to_string(),
        "norm".to_string(),
        "norm_error".to_string(),
        "sigmas".to_string(),
    ]
    .into_iter()
    .chain(indexed("x", n))
    .chain(indexed("field", n))
    .collect();
    let mut table = Table::new(header);
    let mut checks = Vec::new();
    let mut centre = vec![0.0; n];
    centre[0] = 1.0;
    for (k, pt) in p.points.iter().enumerate() {
        if pt.x.len() != n {
            return Err(config_error(format!(
                "point {k} needs {n} ambient coordinates"
            )));
        }
        let f = field_at(&e, &pt.x, &sampler(cfg, k as u64)?)?;
        let s = significance(&f);
        match pt.expect {
            Expect::Zero => checks.push(Check::below(format!("zero_field_{k}"), s, SIGMAS)),
            Expect::PointMass => {
                let pf = point_field(g, &centre, &pt.x)?;
                let d: Vec<f64> = f.vector.iter().zip(&pf).map(|(a, b)| a - b).collect();
                checks.push(Check::below(
                    format!("point_mass_{k}"),
                    model_norm(g, &d) / model_norm(g, &pf),
                    POINT_MASS_REL,
                ));
            }
            Expect::None => {}
        }
        let mut row: Vec<Cell> = vec![
            k.into(),
            Cell::Text(format!("{:?}", pt.expect).to_lowercase()),
            f.norm.into(),
            f.norm_error.into(),
            s.into(),
        ];
        row.extend(pt.x.iter().chain(&f.vector).map(|&v| Cell::Num(v)));
        table.push(row);
    }
    Ok(Outcome {
        params: echo(&p),
        checks,
        table,
        scene: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChargeSpec {
    Standard,
    /// Uniform layer `{0 ≤ p ≤ ε}`.
    Layer(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArnoldPoint {
    pub x: Vec<f64>,
    /// Expected verdict of the hyperbolicity probe at `x`.
    pub hyperbolic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArnoldCheckParams {
    pub geometry: String,
    pub dim: usize,
    /// Dense coefficients in graded lexicographic order; homogeneous in
    /// `dim + 1` variables for curved geometries.
    pub coefficients: Vec<f64>,
    pub charge: ChargeSpec,
    pub points: Vec<ArnoldPoint>,
    pub probes: usize,
}

impl Default for ArnoldCheckParams {
    fn default() -> Self {
        Self {
            geometry: "euclidean".into(),
            dim: 2,
            coefficients: vec![-1.0, 0.0, 0.0, 1.0 / 3.0, 0.4, 1.0],
            charge: ChargeSpec::Standard,
            points: vec![ArnoldPoint {
                x: vec![0.4, -0.2],
                hyperbolic: true,
            }],
            probes: 64,
        }
    }
}

fn arnold_check(cfg: &ExperimentConfig) -> Result<Outcome> {
    let p: ArnoldCheckParams = cfg.params()?;
    sampler(cfg, 0)?;
    let g = geometry(&p.geometry, p.dim)?;
    if p.points.is_empty() || p.probes == 0 {
        return Err(config_error("need at least one point and one probe"));
    }
    let vars = g.ambient_dim();
    let poly = Polynomial::from_graded_lex(vars, &p.coefficients)
        .map_err(|e| config_error(e.to_string()))?;
    let s = HyperbolicSurface::new(g, poly).map_err(|e| config_error(e.to_string()))?;
    let charge = match p.charge {
        ChargeSpec::Standard => Charge::Standard,
        ChargeSpec::Layer(eps) => Charge::Layer(eps),
    };
    let hopts = HyperbolicityOptions {
        probes: p.probes,
        seed: cfg.require_seed()?,
        ..Default::default()
    };
    let header: Vec<String> = [
        "point".to_string(),
        "hyperbolic".to_string(),
        "norm".to_string(),
        "norm_error".to_string(),
        "sigmas".to_string(),
    ]
    .into_iter()
    .chain(indexed("x", vars))
    .collect();
    let mut table = Table::new(header);
    let mut checks = Vec::new();
    for (k, pt) in p.points.iter().enumerate() {
        if pt.x.len() != vars {
            return Err(config_error(format!("point {k} needs {vars} coordinates")));
        }
        let h = is_hyperbolic_at(&s, &pt.x, &hopts)?;
        checks.push(Check::flag(
            format!("hyperbolicity_{k}"),
            h.hyperbolic == pt.hyperbolic,
        ));
        let (norm, err, sig) = if h.hyperbolic {
            let f = arnold_field_check(&s, charge, &pt.x, &sampler(cfg, k as u64)?, &hopts)?;
            let sig = significance(&f);
            checks.push(Check::below(format!("zero_field_{k}"), sig, SIGMAS));
            (f.norm, f.norm_error, sig)
        } else {
            (f64::NAN, f64::NAN, f64::NAN)
        };
        let mut row: Vec<Cell> = vec![
            k.into(),
            h.hyperbolic.into(),
            norm.into(),
            err.into(),
            sig.into(),
        ];
        row.extend(pt.x.iter().map(|&v| Cell::Num(v)));
        table.push(row);
    }
    Ok(Outcome {
        params: echo(&p),
        checks,
        table,
        scene: None,
    })
}
