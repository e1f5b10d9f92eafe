use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use super::config::{
    FieldCheck, RecoverWCheck, RoundTripCheck, SectionCheck, ShiftCheck, ShiftExpectation, TrajectoryCheck,
};
use super::report::{names, Bound, CheckReport, RunOptions, Table};
use super::{Generator, Scenario, ScenarioError};
use crate::dynamics::{conservation, integrate, StepPolicy, TrajectoryRecord};
use crate::error::Error;
use crate::expr::Expression;
use crate::field::{ForceField, ForceVector, Forces, OmegaAnsatz, OmegaForce, PairAnsatz, PairForce, PhaseState};
use crate::grid::{CoordBox, PhaseBox};
use crate::pfaff::{
    invert_to_w, line_integral_w, path_independence_check, reconstructed_section, solve_cauchy, PathPolicy, Stepping,
};
use crate::roots::{safeguarded_newton, scan_brackets, NewtonOptions};
use crate::section::{
    closedness_residual, closedness_sweep, normalizing_sweep, omega_closedness_sweep, CovectorField, Sweep,
};
use crate::shift::{default_w0, normal_shift, HypersurfacePatch, ShiftOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    FieldEval,
    Trajectory,
    Shift,
    SectionCheck,
    RecoverW,
    RoundTrip,
    ScenarioRun,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::FieldEval => "field eval",
            Command::Trajectory => "trajectory",
            Command::Shift => "shift",
            Command::SectionCheck => "section check",
            Command::RecoverW => "recover-w",
            Command::RoundTrip => "round-trip",
            Command::ScenarioRun => "scenario run",
        }
    }
}

#[derive(Debug, Default)]
pub struct Outcome {
    pub checks: Vec<CheckReport>,
    pub details: BTreeMap<String, Value>,
}

struct Ctx<'a> {
    sc: &'a Scenario,
    out: &'a Path,
    seed: u64,
    scale: f64,
    outcome: Outcome,
}

impl Ctx<'_> {
    /// Upper bound, scaled by `--threshold-scale`.
    fn below(&mut self, check: &str, value: f64, threshold: f64, message: String) {
        self.outcome.checks.push(CheckReport::new(check, value, Bound::Below, threshold * self.scale, message));
    }

    /// Bound that `--threshold-scale` leaves alone.
    fn fixed(&mut self, check: &str, value: f64, bound: Bound, threshold: f64, message: String) {
        self.outcome.checks.push(CheckReport::new(check, value, bound, threshold, message));
    }

    fn detail(&mut self, key: &str, value: Value) {
        self.outcome.details.insert(key.to_string(), value);
    }

    /// Independent stream per check, so enabling one check never shifts
    /// another's samples.
    fn rng(&self, salt: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }
}

pub(crate) fn execute(sc: &Scenario, command: Command, opts: &RunOptions, out: &Path) -> Result<Outcome, ScenarioError> {
    let mut ctx = Ctx { sc, out, seed: opts.seed(sc), scale: opts.threshold_scale, outcome: Outcome::default() };
    let c = &sc.config.checks;
    match command {
        Command::FieldEval => field_eval(&mut ctx, &c.field.clone().unwrap_or_default())?,
        Command::Trajectory => trajectory(&mut ctx, &c.trajectory.clone().unwrap_or_default())?,
        Command::SectionCheck => section_check(&mut ctx, &c.section.clone().unwrap_or_default())?,
        Command::RoundTrip => round_trip(&mut ctx, &c.round_trip.clone().unwrap_or_default())?,
        Command::RecoverW => {
            let spec = c
                .recover_w
                .as_ref()
                .ok_or_else(|| ScenarioError::Config("checks.recover_w: block required (evaluation range `v`)".into()))?;
            recover_w(&mut ctx, spec)?
        }
        Command::Shift => {
            if c.shift.is_empty() {
                return Err(ScenarioError::Config("checks.shift: no shift blocks configured".into()));
            }
            for (i, s) in c.shift.iter().enumerate() {
                shift(&mut ctx, i, s)?;
            }
        }
        Command::ScenarioRun => {
            if let Some(f) = c.field.as_ref().filter(|f| f.enabled) {
                field_eval(&mut ctx, f)?;
            }
            if let Some(s) = c.section.as_ref().filter(|s| s.enabled) {
                section_check(&mut ctx, s)?;
            }
            if let Some(r) = c.round_trip.as_ref().filter(|r| r.enabled) {
                round_trip(&mut ctx, r)?;
            }
            if let Some(r) = c.recover_w.as_ref().filter(|r| r.enabled) {
                recover_w(&mut ctx, r)?;
            }
            if let Some(t) = c.trajectory.as_ref().filter(|t| t.enabled) {
                trajectory(&mut ctx, t)?;
            }
            for (i, s) in c.shift.iter().enumerate().filter(|(_, s)| s.enabled) {
                shift(&mut ctx, i, s)?;
            }
            if ctx.outcome.checks.is_empty() {
                return Err(ScenarioError::Config("checks: no enabled checks".into()));
            }
        }
    }
    Ok(ctx.outcome)
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
    let scale = b.iter().map(|q| q * q).sum::<f64>().sqrt();
    diff / scale.max(1.0)
}

fn rel1(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

fn default_speeds(domain: &PhaseBox) -> [f64; 2] {
    let (lo, hi) = domain.v_range;
    [lo + 0.05 * (hi - lo), lo + 0.25 * (hi - lo)]
}

/// States with `x` uniform in `region`, a uniform direction and `|v|`
/// uniform in `speeds`.
fn random_states<R: Rng>(sc: &Scenario, rng: &mut R, count: usize, region: &CoordBox, speeds: [f64; 2]) -> Result<Vec<PhaseState>, Error> {
    let n = sc.dim();
    (0..count)
        .map(|_| {
            let x = region.sample(rng);
            let dir = loop {
                let d: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let r2: f64 = d.iter().map(|c| c * c).sum();
                if r2 > 1e-2 && r2 <= 1.0 {
                    break d;
                }
            };
            let speed = rng.random_range(speeds[0]..speeds[1]);
            let norm = sc.chart.norm(&x, &dir)?;
            Ok(PhaseState::new(x, dir.iter().map(|c| c * speed / norm).collect()))
        })
        .collect()
}

fn runtime(context: &str) -> impl FnOnce(Error) -> ScenarioError {
    ScenarioError::runtime(context.to_string())
}

enum Law<'a> {
    Pair(PairForce<'a>),
    Omega(OmegaForce<'a>),
}

impl Law<'_> {
    fn force(&self) -> &dyn ForceField {
        match self {
            Law::Pair(f) => f,
            Law::Omega(f) => f,
        }
    }
}

fn force_law<'a>(sc: &'a Scenario, omega: &'a Option<CovectorField>, what: &str) -> Result<Law<'a>, ScenarioError> {
    let forces = Forces::new(&sc.chart);
    match (&sc.generator, omega) {
        (Generator::Pair(pair), _) => Ok(Law::Pair(PairForce { forces, pair })),
        (_, Some(omega)) => Ok(Law::Omega(OmegaForce { forces, omega })),
        _ => Err(ScenarioError::Config(format!("{what}: needs a pair, an ω, or a section with a non-vanishing normalizing scalar"))),
    }
}

fn state_a(law: &Law<'_>, s: &PhaseState) -> Result<f64, Error> {
    match law {
        Law::Pair(f) => f.forces.scalar_a_from_pair(f.pair, s),
        Law::Omega(f) => f.forces.a_from_omega(f.omega, s),
    }
}

fn state_force(law: &Law<'_>, s: &PhaseState) -> Result<ForceVector, Error> {
    match law {
        Law::Pair(f) => f.forces.force_from_pair(f.pair, s),
        Law::Omega(f) => f.forces.force_from_omega(f.omega, s),
    }
}

fn field_eval(ctx: &mut Ctx<'_>, spec: &FieldCheck) -> Result<(), ScenarioError> {
    let sc = ctx.sc;
    let n = sc.dim();
    let omega = sc.generator.omega().map_err(runtime("field eval"))?;
    let law = force_law(sc, &omega, "field eval")?;
    let speeds = spec.speed_range.unwrap_or_else(|| default_speeds(sc.generator.domain()));
    let mut rng = ctx.rng(1);
    let states = random_states(sc, &mut rng, spec.states, &sc.chart.domain().shrink(0.9), speeds).map_err(runtime("field eval: sampling"))?;

    let mut header = names("x", n);
    header.extend(names("v", n));
    header.push("speed".into());
    header.push("A".into());
    header.extend(names("F", n));
    let mut table = Table::new(header);
    let mut rows = Vec::with_capacity(states.len());
    for s in &states {
        let a = state_a(&law, s).map_err(runtime("field eval: A"))?;
        let f = state_force(&law, s).map_err(runtime("field eval: F"))?;
        let speed = sc.chart.norm(&s.x, &s.vel).map_err(runtime("field eval"))?;
        let mut row = s.x.clone();
        row.extend(&s.vel);
        row.push(speed);
        row.push(a);
        row.extend(&f.lower);
        table.push(row);
        rows.push((a, f));
    }
    table.write(&ctx.out.join("field_eval.csv"))?;
    ctx.detail("field.states", json!({ "count": states.len(), "speed_range": speeds }));

    let Some(pair) = sc.generator.pair() else {
        ctx.detail("field.note", json!("gauge and parity checks need a pair generator"));
        return Ok(());
    };
    let forces = Forces::new(&sc.chart);
    for (g, gauge) in spec.gauges.iter().enumerate() {
        let path = format!("checks.field.gauges[{g}]");
        let rho = Expression::parse(&gauge.rho).map_err(|e| ScenarioError::Config(format!("{path}.rho: {e}")))?;
        let rho_inv = Expression::parse(&gauge.rho_inv).map_err(|e| ScenarioError::Config(format!("{path}.rho_inv: {e}")))?;
        let gauged = pair.gauge_transform(&rho, &rho_inv).map_err(|e| ScenarioError::Config(format!("{path}: {e}")))?;
        let mut worst = 0.0f64;
        for (s, (a, f)) in states.iter().zip(&rows) {
            let ag = forces.scalar_a_from_pair(&gauged, s).map_err(runtime("field eval: gauged A"))?;
            let fg = forces.force_from_pair(&gauged, s).map_err(runtime("field eval: gauged F"))?;
            worst = worst.max(rel1(ag, *a)).max(rel(&fg.lower, &f.lower));
        }
        ctx.below(
            &format!("field.gauge[{}]", gauge.rho),
            worst,
            spec.threshold,
            format!("max relative change of A and F under ρ(w) = {} over {} states", gauge.rho, states.len()),
        );
    }

    let mut worst = 0.0f64;
    for s in &states {
        let flipped = PhaseState::new(s.x.clone(), s.vel.iter().map(|c| -c).collect());
        let ap = forces.scalar_a_from_pair(pair, s).map_err(runtime("field eval: parity"))?;
        let am = forces.scalar_a_from_pair(pair, &flipped).map_err(runtime("field eval: parity"))?;
        let k = forces.kinematics(&s.x, &s.vel).map_err(runtime("field eval: parity"))?;
        let d = pair.w_partials(&s.x, k.speed).map_err(runtime("field eval: parity"))?;
        let even = pair.h_at(d.w).map_err(runtime("field eval: parity"))? / d.w_v;
        let grad_n: f64 = d.grad.iter().zip(&k.n_up).map(|(g, c)| g * c).sum();
        let odd = -k.speed * grad_n / d.w_v;
        worst = worst.max(rel1(0.5 * (ap + am), even)).max(rel1(0.5 * (ap - am), odd));
    }
    ctx.below(
        "field.parity",
        worst,
        spec.parity_threshold,
        "even and odd parts of A in the velocity against h(W)/W_v and −|v|(∇W|N)/W_v".into(),
    );
    Ok(())
}

fn sweep_message(what: &str, s: &Sweep) -> String {
    let idx: Vec<String> = s.indices.iter().map(|i| i.to_string()).collect();
    format!("{what} residual ({}) = ({}) peaks at {:e} at x = {:?}, v = {} over {} points", index_names(s.indices.len()), idx.join(", "), s.value, s.x, s.v, s.points)
}

fn index_names(k: usize) -> &'static str {
    match k {
        1 => "i",
        2 => "i, j",
        _ => "indices",
    }
}

fn section_check(ctx: &mut Ctx<'_>, spec: &SectionCheck) -> Result<(), ScenarioError> {
    let sc = ctx.sc;
    let (b, a) = sc.generator.section().map_err(runtime("section check"))?;
    let points = b.domain().lattice(spec.lattice);
    let closed = closedness_sweep(&b, &points).map_err(runtime("section check: closedness"))?;
    ctx.below("section.closedness", closed.max_abs, spec.threshold, sweep_message("closedness", &closed));
    ctx.detail("section.closedness", serde_json::to_value(&closed).expect("sweep serializes"));
    if let Some(a) = &a {
        let norm = normalizing_sweep(&b, a, &points).map_err(runtime("section check: normalizing field"))?;
        ctx.below("section.normalizing", norm.max_abs, spec.threshold, sweep_message("normalizing-field commutator", &norm));
        ctx.detail("section.normalizing", serde_json::to_value(&norm).expect("sweep serializes"));
    }
    match sc.generator.omega().map_err(runtime("section check: ω"))? {
        Some(omega) => {
            let s = omega_closedness_sweep(&omega, &points).map_err(runtime("section check: ω closedness"))?;
            ctx.below("section.omega_closedness", s.max_abs, spec.threshold, sweep_message("dω", &s));
            ctx.detail("section.omega_closedness", serde_json::to_value(&s).expect("sweep serializes"));
        }
        None => ctx.detail("section.omega_note", json!("no ω: the normalizing scalar is absent or vanishes")),
    }
    if let Some(probe) = &spec.probe {
        let n = sc.dim();
        if probe.x.len() != n {
            return Err(ScenarioError::Config(format!("checks.section.probe.x: expected {n} coordinates")));
        }
        let mut table = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let r = closedness_residual(&b, &probe.x, probe.v, i, j).map_err(runtime("section check: probe"))?;
                table.push(json!({ "i": i + 1, "j": j + 1, "residual": r }));
            }
        }
        ctx.detail("section.probe", json!({ "x": probe.x, "v": probe.v, "closedness": table }));
    }
    Ok(())
}

fn round_trip(ctx: &mut Ctx<'_>, spec: &RoundTripCheck) -> Result<(), ScenarioError> {
    let sc = ctx.sc;
    let omega = sc.generator.omega().map_err(runtime("round-trip"))?;
    let law = force_law(sc, &omega, "round-trip")?;
    let forces = Forces::new(&sc.chart);
    let domain = sc.generator.domain().clone();
    let speeds = spec.speed_range.unwrap_or_else(|| default_speeds(&domain));
    let mut rng = ctx.rng(2);
    let states = random_states(sc, &mut rng, spec.states, &sc.chart.domain().shrink(0.9), speeds).map_err(runtime("round-trip: sampling"))?;

    let mut worst = 0.0f64;
    for s in &states {
        let f = state_force(&law, s).map_err(runtime("round-trip: F"))?;
        let a = state_a(&law, s).map_err(runtime("round-trip: A"))?;
        let rebuilt = match &law {
            Law::Pair(p) => forces.force_from_a(&PairAnsatz(p.pair), s),
            Law::Omega(o) => forces.force_from_a(&OmegaAnsatz(o.omega), s),
        }
        .map_err(runtime("round-trip: F from A"))?;
        let projected = forces.project_force_to_a(s, &f).map_err(runtime("round-trip: A from F"))?;
        worst = worst.max(rel(&rebuilt.lower, &f.lower)).max(rel1(projected, a));
    }
    ctx.below(
        "round_trip.ansatz",
        worst,
        spec.ansatz_threshold,
        format!("F → A → F over {} states (relative)", states.len()),
    );

    let Some(omega) = omega else {
        ctx.detail("round_trip.omega_note", json!("no ω: the normalizing scalar is absent or vanishes"));
        return Ok(());
    };
    let s = omega_closedness_sweep(&omega, &domain.lattice(spec.lattice)).map_err(runtime("round-trip: ω closedness"))?;
    ctx.below("round_trip.omega_closedness", s.max_abs, spec.threshold, sweep_message("dω", &s));

    if let Some(pair) = sc.generator.pair() {
        let mut worst = 0.0f64;
        for s in &states {
            let fp = forces.force_from_pair(pair, s).map_err(runtime("round-trip: F from pair"))?;
            let fo = forces.force_from_omega(&omega, s).map_err(runtime("round-trip: F from ω"))?;
            worst = worst.max(rel(&fo.lower, &fp.lower));
        }
        ctx.below("round_trip.omega_force", worst, spec.threshold, "force from ω against force from the pair (relative)".into());

        let dw = CovectorField::differential(pair.w_expr().clone(), domain.clone()).map_err(runtime("round-trip: dW"))?;
        let region = PhaseBox::new(sc.chart.domain().shrink(0.5), (speeds[0], speeds[1])).map_err(runtime("round-trip"))?;
        let mut recover = 0.0f64;
        let mut independence = 0.0f64;
        for _ in 0..spec.paths {
            let q0 = region.sample(&mut rng);
            let q1 = region.sample(&mut rng);
            let mid = region.sample(&mut rng);
            let straight = line_integral_w(&dw, &[q0.clone(), q1.clone()]).map_err(runtime("round-trip: line integral"))?;
            let bent = line_integral_w(&dw, &[q0.clone(), mid, q1.clone()]).map_err(runtime("round-trip: line integral"))?;
            let dwq = pair.w_at(&q1.0, q1.1).map_err(runtime("round-trip"))? - pair.w_at(&q0.0, q0.1).map_err(runtime("round-trip"))?;
            recover = recover.max((straight - dwq).abs());
            independence = independence.max((straight - bent).abs());
        }
        ctx.below("round_trip.line_integral", recover, spec.threshold, format!("∫dW against W(q1) − W(q0) over {} paths", spec.paths));
        ctx.below("round_trip.path_independence", independence, spec.threshold, "straight against bent paths".into());
    }
    Ok(())
}

fn recover_w(ctx: &mut Ctx<'_>, spec: &RecoverWCheck) -> Result<(), ScenarioError> {
    let sc = ctx.sc;
    let n = sc.dim();
    let (b, _) = sc.generator.section().map_err(runtime("recover-w"))?;
    let space = sc.chart.domain();
    let base = spec.base.clone().unwrap_or_else(|| space.center());
    let quarter = space.shrink(0.25);
    let x_lo = spec.x_lo.clone().unwrap_or_else(|| quarter.lo.clone());
    let x_hi = spec.x_hi.clone().unwrap_or_else(|| quarter.hi.clone());
    if base.len() != n || x_lo.len() != n || x_hi.len() != n {
        return Err(ScenarioError::Config(format!("checks.recover_w: base, x_lo and x_hi need {n} coordinates")));
    }
    let eval = CoordBox::new(x_lo, x_hi)
        .and_then(|x| PhaseBox::new(x, (spec.v[0], spec.v[1])))
        .map_err(|e| ScenarioError::Config(format!("checks.recover_w: {e}")))?;

    let sol = match solve_cauchy(&b, &base, PathPolicy::Segment) {
        Ok(sol) => sol.with_stepping(Stepping::Fixed(spec.steps)),
        Err(Error::Incompatible { residual, point }) => {
            ctx.below(
                "recover_w.compatibility",
                residual.abs(),
                spec.path_threshold,
                format!("section is not compatible: closedness residual {residual:e} at {point:?}"),
            );
            return Ok(());
        }
        Err(e) => return Err(ScenarioError::Runtime { context: "recover-w".into(), cause: e }),
    };
    let points = eval.lattice(spec.lattice);
    let rows: Vec<(f64, Vec<f64>, f64)> = points
        .par_iter()
        .map(|(x, v)| {
            let w = invert_to_w(&sol, x, *v)?;
            let bt = reconstructed_section(&sol, x, *v, spec.fd_step)?;
            let gap = path_independence_check(&sol, x, w)?;
            Ok((w, bt, gap))
        })
        .collect::<Result<_, Error>>()
        .map_err(runtime("recover-w"))?;

    let pair = sc.generator.pair();
    let mut header = names("x", n);
    header.push("v".into());
    header.push("W_reconstructed".into());
    if pair.is_some() {
        header.push("W".into());
    }
    let mut table = Table::new(header);
    let mut b_err = 0.0f64;
    let mut b_at = (points[0].clone(), 0);
    let mut gap = 0.0f64;
    for ((x, v), (w, bt, g)) in points.iter().zip(&rows) {
        let bx = b.b_at(x, *v).map_err(runtime("recover-w"))?;
        for (i, (p, q)) in bt.iter().zip(&bx).enumerate() {
            if (p - q).abs() > b_err {
                b_err = (p - q).abs();
                b_at = ((x.clone(), *v), i + 1);
            }
        }
        gap = gap.max(*g);
        let mut row = x.clone();
        row.push(*v);
        row.push(*w);
        if let Some(p) = pair {
            row.push(p.w_at(x, *v).map_err(runtime("recover-w"))?);
        }
        table.push(row);
    }
    table.write(&ctx.out.join("recover_w.csv"))?;
    ctx.below(
        "recover_w.section",
        b_err,
        spec.threshold,
        format!("b of the reconstructed W against b; worst component {} at x = {:?}, v = {}", b_at.1, b_at.0 .0, b_at.0 .1),
    );
    ctx.below("recover_w.path_independence", gap, spec.path_threshold, "segment against staircase paths".into());

    if let Some(pair) = pair {
        let mut worst = 0.0f64;
        let mut compared = 0usize;
        let count = spec.level_pairs.min(points.len());
        for k in 0..count {
            let i = k * points.len() / count;
            let (x1, v1) = &points[i];
            let (x2, _) = &points[points.len() - 1 - i];
            let target = pair.w_at(x1, *v1).map_err(runtime("recover-w"))?;
            let Some(v2) = level_speed(pair, x2, target, eval.v_range) else {
                continue;
            };
            let w1 = rows[i].0;
            let Ok(w2) = invert_to_w(&sol, x2, v2) else {
                continue;
            };
            worst = worst.max((w1 - w2).abs());
            compared += 1;
        }
        let message = format!("|W̃(q1) − W̃(q2)| on {compared} pairs with W(q1) = W(q2)");
        if compared == 0 {
            ctx.fixed("recover_w.level_sets", f64::INFINITY, Bound::Below, spec.threshold, "no level pairs found in the evaluation box".into());
        } else {
            ctx.below("recover_w.level_sets", worst, spec.threshold, message);
        }
    }
    Ok(())
}

fn level_speed(pair: &crate::pair::GeneratingPair, x: &[f64], target: f64, (lo, hi): (f64, f64)) -> Option<f64> {
    let &(a, b) = scan_brackets(|v| Ok(pair.w_at(x, v)? - target), lo, hi, 65).first()?;
    if a == b {
        return Some(a);
    }
    safeguarded_newton(
        |v| {
            let d = pair.w_partials(x, v)?;
            Ok((d.w - target, d.w_v))
        },
        a,
        b,
        0.5 * (a + b),
        NewtonOptions::default(),
    )
    .ok()
}

fn trajectory(ctx: &mut Ctx<'_>, spec: &TrajectoryCheck) -> Result<(), ScenarioError> {
    let sc = ctx.sc;
    let n = sc.dim();
    let omega = sc.generator.omega().map_err(runtime("trajectory"))?;
    let law = force_law(sc, &omega, "trajectory")?;
    if !(spec.region > 0.0 && spec.region <= 1.0) || !(spec.speed_range[0] > 0.0 && spec.speed_range[0] < spec.speed_range[1]) {
        return Err(ScenarioError::Config("checks.trajectory: need 0 < region ≤ 1 and 0 < speed_range[0] < speed_range[1]".into()));
    }
    let mut rng = ctx.rng(3);
    let starts = random_states(sc, &mut rng, spec.count, &sc.chart.domain().shrink(spec.region), spec.speed_range)
        .map_err(runtime("trajectory: sampling"))?;
    let run = |dt: f64| -> Result<Vec<TrajectoryRecord>, ScenarioError> {
        starts
            .par_iter()
            .map(|s| integrate(law.force(), &s.x, &s.vel, (0.0, spec.t_end), StepPolicy::Fixed { dt }))
            .collect::<Result<_, Error>>()
            .map_err(runtime("trajectory"))
    };
    let records = run(spec.dt)?;
    let halted = records.iter().filter(|r| !r.completed()).count();
    ctx.fixed("trajectory.halts", halted as f64, Bound::Below, 0.5, format!("{halted} of {} trajectories halted early", records.len()));

    let pair = sc.generator.pair();
    let mut header = vec!["t".to_string()];
    header.extend(names("x", n));
    header.extend(names("v", n));
    header.push("speed".into());
    if pair.is_some() {
        header.push("W".into());
        header.push("deviation".into());
    }
    let mut worst = 0.0f64;
    let mut per_trajectory = Vec::new();
    for (k, rec) in records.iter().enumerate() {
        let cons = pair.map(|p| conservation(rec, p)).transpose().map_err(runtime("trajectory: conservation"))?;
        let mut table = Table::new(header.clone());
        for i in 0..rec.len() {
            let mut row = vec![rec.t[i]];
            row.extend(&rec.x[i]);
            row.extend(&rec.vel[i]);
            row.push(rec.speed[i]);
            if let Some(c) = &cons {
                row.push(c.w[i]);
                row.push(c.w[i] - c.reference[i]);
            }
            table.push(row);
        }
        table.write(&ctx.out.join(format!("trajectory_{k:02}.csv")))?;
        let dev = cons.as_ref().map(|c| c.max_abs);
        worst = worst.max(dev.unwrap_or(0.0));
        per_trajectory.push(json!({ "index": k, "steps": rec.len(), "halt": rec.halt, "max_deviation": dev }));
    }
    ctx.detail("trajectory.records", Value::Array(per_trajectory));
    if pair.is_none() {
        ctx.detail("trajectory.note", json!("conservation needs a pair generator"));
        return Ok(());
    }
    ctx.below(
        "trajectory.conservation",
        worst,
        spec.threshold,
        format!("max |W(x, |v|) − w(t)| over {} trajectories, dt = {}", records.len(), spec.dt),
    );
    if spec.order_check {
        let finer = run(0.5 * spec.dt)?;
        let mut fine_worst = 0.0f64;
        for rec in &finer {
            fine_worst = fine_worst.max(conservation(rec, pair.expect("checked")).map_err(runtime("trajectory: conservation"))?.max_abs);
        }
        let ratio = worst / fine_worst;
        ctx.fixed(
            "trajectory.order",
            ratio,
            Bound::Above,
            spec.order_ratio,
            format!("conservation residual {worst:e} at dt = {} against {fine_worst:e} at dt/2", spec.dt),
        );
    }
    Ok(())
}

fn shift(ctx: &mut Ctx<'_>, index: usize, spec: &ShiftCheck) -> Result<(), ScenarioError> {
    let sc = ctx.sc;
    let path = format!("checks.shift[{index}]");
    let pair = sc.generator.pair().ok_or_else(|| ScenarioError::Config(format!("{path}: needs a pair generator")))?;
    let params = CoordBox::new(spec.u_lo.clone(), spec.u_hi.clone()).map_err(|e| ScenarioError::Config(format!("{path}: {e}")))?;
    let patch =
        HypersurfacePatch::parse(&spec.embedding, params, spec.resolution).map_err(|e| ScenarioError::Config(format!("{path}: {e}")))?;
    let w0 = match spec.w0 {
        Some(w) => w,
        None => default_w0(pair, &patch).map_err(runtime(&path))?,
    };
    let opts = ShiftOptions {
        t_end: spec.t_end,
        dt: spec.dt,
        sample_every: spec.sample_every,
        reference: spec.reference.clone(),
        speed_override: spec.speed_override,
    };
    let r = normal_shift(&sc.chart, pair, &patch, w0, &opts).map_err(runtime(&path))?;
    let label = &spec.label;
    let threshold = spec.threshold();
    match spec.expect {
        ShiftExpectation::Normal => ctx.below(
            &format!("shift.{label}.orthogonality"),
            r.max_residual,
            threshold,
            format!("max |R| over the front for t in [0, {}]", spec.t_end),
        ),
        ShiftExpectation::NonNormal => ctx.fixed(
            &format!("shift.{label}.detects_non_normal"),
            r.max_residual,
            Bound::Above,
            threshold,
            format!("max |R| over the front for t in [0, {}] must expose the wrong speed law", spec.t_end),
        ),
    }
    ctx.below(&format!("shift.{label}.initial"), r.initial_orthogonality, 1e-10, "orthogonality of ν·n to the patch at t = 0".into());
    if spec.expect == ShiftExpectation::Normal {
        ctx.fixed(
            &format!("shift.{label}.halted"),
            r.halted.len() as f64,
            Bound::Below,
            0.5,
            format!("{} of {} grid trajectories halted", r.halted.len(), r.params.len()),
        );
        if spec.speed_override.is_none() {
            ctx.below(&format!("shift.{label}.w_equality"), r.w_deviation, spec.w_threshold, "max |W(f_t(p), |v_p(t)|) − w(t)| across the front".into());
        }
    }

    let m = patch.params().dim();
    let n = sc.dim();
    for s in 0..r.sample_times.len() {
        let mut header = vec!["p".to_string()];
        header.extend(names("u", m));
        header.extend(names("x", n));
        header.extend(names("R", m));
        let mut table = Table::new(header);
        for (p, u) in r.params.iter().enumerate() {
            let mut row = vec![p as f64];
            row.extend(u);
            match &r.fronts[s][p] {
                Some(x) => row.extend(x),
                None => row.extend(std::iter::repeat_n(f64::NAN, n)),
            }
            row.extend(r.residuals[s][p].iter().map(|c| c.unwrap_or(f64::NAN)));
            table.push(row);
        }
        table.write(&ctx.out.join(format!("shift_{label}_{s:02}.csv")))?;
    }
    let nu_min = r.nu.iter().copied().fold(f64::INFINITY, f64::min);
    let nu_max = r.nu.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let table: Vec<[f64; 2]> = r.times.iter().zip(&r.max_residual_vs_t).map(|(t, m)| [*t, *m]).collect();
    ctx.detail(
        &format!("shift.{label}"),
        json!({
            "w0": w0,
            "grid": r.params.len(),
            "nu_range": [nu_min, nu_max],
            "max_residual": r.max_residual,
            "initial_orthogonality": r.initial_orthogonality,
            "w_deviation": r.w_deviation,
            "sample_times": r.sample_times,
            "residual_vs_t": table,
            "halted": r.halted,
        }),
    );
    Ok(())
}
