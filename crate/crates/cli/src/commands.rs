use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde_json::json;

use eight4_core::choreography::{refine_constants, verify_choreography, ChoreographyReport};
use eight4_core::io::{curve_rows, write_orbit_records, write_trajectory, CurveWriter};
use eight4_core::kepler2b::{eccentricity_from_period, kepler_seed_at, Apsis};
use eight4_core::porbits::{
    Condition, ContinuationCurve, Family, Frozen, OrbitRecord, RowOutcome, SeedPoint, TABLE1,
};
use eight4_core::{integrator, ConstantsMode, EightConstants, IntegratorSettings, RestrictedProblem};

use crate::args::{ApsisArg, Cli, Command, DirectionArg, FamilyArg, FreezeArg, Global, TraceArgs};
use crate::exit::{self, Failure};

type Outcome = Result<u8, Failure>;

pub fn run(cli: Cli) -> Outcome {
    if let Some(n) = cli.global.jobs {
        if n == 0 {
            return Err(Failure::usage("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::systemic(e.to_string()))?;
    }
    let settings = IntegratorSettings::with_tolerance(cli.global.tol);
    settings.validate().map_err(|e| Failure::usage(e.to_string()))?;
    let constants = load_constants(&cli.global)?;

    match cli.command {
        Command::VerifyEight { json } => verify_eight(&cli.global, constants, settings, json),
        Command::Table1 { rows, out } => table1(problem(&cli.global, constants, settings)?, &rows, out.as_deref()),
        Command::Trace(args) => trace(problem(&cli.global, constants, settings)?, &args),
        Command::Orbit {
            x40,
            vy40,
            m,
            sample_step,
            out,
        } => {
            if !(sample_step > 0.0 && sample_step.is_finite()) {
                return Err(Failure::usage("--sample-step must be positive"));
            }
            if m == 0 {
                return Err(Failure::usage("--m must be positive"));
            }
            orbit(problem(&cli.global, constants, settings)?, x40, vy40, m, sample_step, out.as_deref())
        }
        Command::KeplerSeed {
            m,
            e,
            from_x4,
            apsis,
            refine,
        } => {
            if m == 0 {
                return Err(Failure::usage("--m must be positive"));
            }
            let t_bar = constants.t_bar();
            let e = match (e, from_x4) {
                (Some(e), _) => e,
                (None, Some(x4)) => eccentricity_from_period(x4, m, t_bar)?,
                (None, None) => return Err(Failure::usage("one of --e or --from-x4 is required")),
            };
            let apsis = match apsis {
                ApsisArg::Apocenter => Apsis::Apocenter,
                ApsisArg::Pericenter => Apsis::Pericenter,
            };
            let seed = kepler_seed_at(m, e, apsis, t_bar)?;
            let mut report = json!({
                "m": m,
                "e": e,
                "x40": seed.x40,
                "vy40": seed.vy40,
                "T0_over_Tbar": 2 * m,
            });
            let mut code = exit::PASS;
            if refine {
                let p = problem(&cli.global, constants, settings)?;
                let r = p.refine_periodic(seed.x40, seed.vy40, m)?;
                if !r.record.satisfies_invariants() {
                    code = exit::ASSERTION;
                }
                report["refined"] = serde_json::to_value(&r.record)?;
                report["correction"] = json!(r.correction);
                report["iterations"] = json!(r.iterations);
            }
            println!("{report}");
            Ok(code)
        }
    }
}

fn load_constants(global: &Global) -> Result<EightConstants, Failure> {
    match &global.constants {
        None => Ok(EightConstants::printed()),
        Some(path) => EightConstants::from_file(path).map_err(|e| {
            Failure::usage(format!("constants override {}: {e}", path.display()))
        }),
    }
}

fn problem(global: &Global, constants: EightConstants, settings: IntegratorSettings) -> Result<RestrictedProblem, Failure> {
    let mode = if global.as_given {
        ConstantsMode::AsGiven
    } else {
        ConstantsMode::Refined
    };
    let p = RestrictedProblem::new(constants, mode, settings)
        .map_err(|e| Failure::systemic(format!("setting up the restricted problem: {e}")))?;
    if let Some(r) = &p.refinement {
        log::info!(
            "constants refined by {:.3e}; isosceles residual at 2T̄ {:.3e} -> {:.3e}",
            r.correction,
            r.initial_residual,
            r.residual
        );
    }
    Ok(p)
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| {
            Failure::systemic(format!("{}: {e}", p.display()))
        })?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn verify_eight(global: &Global, constants: EightConstants, settings: IntegratorSettings, json: bool) -> Outcome {
    let report = verify_choreography(&constants, settings)
        .map_err(|e| Failure::systemic(format!("integrating the choreography: {e}")))?;
    let refined = if global.as_given {
        None
    } else {
        match refine_constants(&constants, settings) {
            Ok(r) => {
                let closure = integrator::flow(
                    &eight4_core::choreography::eight_config(),
                    &r.constants.initial_state(),
                    r.constants.period,
                    settings,
                )
                .map(|s| s.distance_inf(&r.constants.initial_state()))
                .ok();
                Some((r, closure))
            }
            Err(e) => {
                log::warn!("constants refinement failed: {e}");
                None
            }
        }
    };
    let failures = report.failures();
    if json {
        let mut v = json!({
            "constants": constants,
            "report": report,
            "passes": failures.is_empty(),
            "failures": failures,
        });
        if let Some((r, closure)) = &refined {
            v["refinement"] = json!({
                "constants": r.constants,
                "correction": r.correction,
                "initial_residual": r.initial_residual,
                "residual": r.residual,
                "closure": closure,
            });
        }
        println!("{}", serde_json::to_string_pretty(&v)?);
    } else {
        print_report(&report);
        if let Some((r, closure)) = &refined {
            println!(
                "refined constants: max correction {:.3e}, isosceles residual at 2T̄ {:.3e} -> {:.3e}, closure {}",
                r.correction,
                r.initial_residual,
                r.residual,
                closure.map_or("n/a".to_string(), |c| format!("{c:.3e}"))
            );
        }
        for f in &failures {
            println!("FAIL {f}");
        }
        println!("{}", if failures.is_empty() { "PASS" } else { "FAIL" });
    }
    Ok(if failures.is_empty() { exit::PASS } else { exit::ASSERTION })
}

fn print_report(r: &ChoreographyReport) {
    println!("period                  {}", r.period);
    println!("closure                 {:.3e}", r.closure);
    println!("refined period          {:.12}", r.refined_period);
    println!("closure (refined T)     {:.3e}", r.closure_refined);
    println!(
        "time-shift residual     {:.3e}  (σ = {:?})",
        r.shift_residual, r.shift_permutation
    );
    for c in &r.isosceles {
        println!("isosceles m = {}  j = {}  {:.3e}", c.m, c.label, c.residual);
    }
    println!("relative energy drift   {:.3e}", r.energy_drift);
}

fn table1(p: RestrictedProblem, rows: &[usize], out: Option<&Path>) -> Outcome {
    if let Some(bad) = rows.iter().find(|&&r| !(1..=TABLE1.len()).contains(&r)) {
        return Err(Failure::usage(format!("row {bad} is outside 1..={}", TABLE1.len())));
    }
    let check = verify_choreography(&p.constants, p.settings)
        .map_err(|e| Failure::systemic(format!("choreography verification: {e}")))?;
    if !check.passes() {
        return Err(Failure::systemic(format!(
            "choreography verification failed: {}",
            check.failures().join("; ")
        )));
    }
    let outcomes = p.reproduce_table1(rows)?;
    let records: Vec<OrbitRecord> = outcomes
        .iter()
        .filter_map(|o| o.result.as_ref().ok().map(|r| r.record.clone()))
        .collect();
    let table_to_stdout = out.is_some();
    write_orbit_records(output(out)?, &records)?;

    let mut table: Box<dyn Write> = if table_to_stdout {
        Box::new(io::stdout().lock())
    } else {
        Box::new(io::stderr().lock())
    };
    print_diff_table(&mut table, &outcomes)?;

    let failed: Vec<&RowOutcome> = outcomes.iter().filter(|o| !o.passes()).collect();
    let unflagged = failed.iter().filter(|o| !o.is_near_collision()).count();
    writeln!(
        table,
        "{} of {} rows pass; {} failures, {} not near-collision",
        outcomes.len() - failed.len(),
        outcomes.len(),
        failed.len(),
        unflagged
    )?;
    Ok(if failed.len() <= 2 && unflagged == 0 {
        exit::PASS
    } else {
        exit::ASSERTION
    })
}

fn print_diff_table(w: &mut dyn Write, outcomes: &[RowOutcome]) -> io::Result<()> {
    writeln!(
        w,
        "{:>3} {:>5} {:>7} {:>6} {:>10} {:>10} {:>9} {:>9} {:>9} {:>4}  status",
        "row", "T0/T̄", "T/T̄", "table", "Δx4", "Δvy4", "|y4|", "|vx4|", "closure", "it"
    )?;
    for o in outcomes {
        match &o.result {
            Ok(r) => {
                let f = o.failures();
                writeln!(
                    w,
                    "{:>3} {:>5} {:>7} {:>6} {:>10.2e} {:>10.2e} {:>9.1e} {:>9.1e} {:>9.1e} {:>4}  {}",
                    o.row.index,
                    o.row.t0_over_tbar,
                    r.record.t_over_tbar,
                    o.row.t_over_tbar,
                    r.correction[0],
                    r.correction[1],
                    r.record.res_y,
                    r.record.res_vx,
                    r.record.res_closure,
                    r.iterations,
                    if f.is_empty() { "ok".to_string() } else { f.join("; ") }
                )?;
            }
            Err(e) => writeln!(w, "{:>3} {:>5} {:>7} {:>6}  {e}", o.row.index, o.row.t0_over_tbar, "-", o.row.t_over_tbar)?,
        }
    }
    Ok(())
}

fn seed_for(p: &RestrictedProblem, family: Family, args: &TraceArgs) -> eight4_core::Result<SeedPoint> {
    let guess = SeedPoint {
        x40: args.x40,
        vy40: args.vy40_guess,
        t0: p.half_period(args.p),
    };
    let frozen = match args.freeze {
        FreezeArg::X40 => Frozen::X40,
        FreezeArg::Vy40 => Frozen::Vy40,
    };
    match family {
        Family::Y { p: k } => p.find_seed(k, Condition::Y, guess, frozen),
        Family::Vx { q } => p.find_seed(q, Condition::Vx, guess, frozen),
        Family::R => {
            let (z, _, _) = p.solve_periodic(args.x40, args.vy40_guess, args.p)?;
            Ok(SeedPoint {
                x40: z[0],
                vy40: z[1],
                t0: guess.t0,
            })
        }
    }
}

/// Backward branch reversed, then the forward branch without its repeated seed.
fn join(backward: Option<ContinuationCurve>, forward: Option<ContinuationCurve>) -> Vec<ContinuationCurve> {
    match (backward, forward) {
        (Some(mut b), Some(f)) => {
            b.points.reverse();
            b.points.extend(f.points.into_iter().skip(1));
            vec![b]
        }
        (b, f) => b.into_iter().chain(f).collect(),
    }
}

fn trace(p: RestrictedProblem, args: &TraceArgs) -> Outcome {
    if args.p == 0 {
        return Err(Failure::usage("--p must be positive"));
    }
    if !(args.step > 0.0 && args.step.is_finite()) {
        return Err(Failure::usage("--step must be positive"));
    }
    let mut families: Vec<Family> = Vec::new();
    for f in &args.family {
        let fam = match f {
            FamilyArg::Cy => Family::Y { p: args.p },
            FamilyArg::Cvx => Family::Vx { q: args.p },
            FamilyArg::Cr => Family::R,
        };
        if !families.contains(&fam) {
            families.push(fam);
        }
    }
    let mut writer = CurveWriter::new(output(args.out.as_deref())?)?;
    if args.max_points == 0 {
        writer.finish()?.flush()?;
        return Ok(exit::PASS);
    }

    let seeds = families
        .par_iter()
        .map(|&f| seed_for(&p, f, args).map(|s| (f, s)))
        .collect::<eight4_core::Result<Vec<_>>>()?;
    for (f, s) in &seeds {
        log::info!("{f} seed ({}, {}) at T0 = {} T̄", s.x40, s.vy40, s.t0 / p.t_bar);
    }

    let signs: &[f64] = match args.direction {
        DirectionArg::Forward => &[1.0],
        DirectionArg::Backward => &[-1.0],
        DirectionArg::Both => &[-1.0, 1.0],
    };
    let jobs: Vec<(usize, f64)> = (0..seeds.len())
        .flat_map(|k| signs.iter().map(move |&s| (k, s)))
        .collect();
    let traced = jobs
        .par_iter()
        .map(|&(k, sign)| {
            let (f, s) = seeds[k];
            p.trace_curve(s, f, sign * args.step, args.max_points)
        })
        .collect::<eight4_core::Result<Vec<_>>>()?;

    let mut per_family: Vec<Vec<ContinuationCurve>> = Vec::new();
    let mut it = traced.into_iter();
    for _ in &seeds {
        let mut b = None;
        let mut fw = None;
        for &sign in signs {
            let c = it.next().expect("one curve per job");
            eprintln!("{}: {} points, stopped by {:?}", c.family, c.len(), c.termination);
            if sign < 0.0 {
                b = Some(c);
            } else {
                fw = Some(c);
            }
        }
        per_family.push(join(b, fw));
    }
    for curves in &per_family {
        for c in curves {
            writer.write_rows(&curve_rows(c, p.t_bar))?;
        }
    }
    writer.finish()?.flush()?;

    let mut records: Vec<OrbitRecord> = Vec::new();
    for curves in &per_family {
        for c in curves.iter().filter(|c| c.family == Family::R) {
            records.extend(p.detect_periodic_on_curve(c)?);
        }
    }
    let y = per_family.iter().flatten().find(|c| matches!(c.family, Family::Y { .. }));
    let vx = per_family.iter().flatten().find(|c| matches!(c.family, Family::Vx { .. }));
    if let (Some(y), Some(vx)) = (y, vx) {
        for s in p.find_intersection(y, vx)? {
            eprintln!("intersection at ({}, {})", s.x40, s.vy40);
            match p.refine_periodic(s.x40, s.vy40, args.p) {
                Ok(r) => records.push(r.record),
                Err(e) => eprintln!("  not refined: {e}"),
            }
        }
    }
    records.sort_by(|a, b| a.x4.total_cmp(&b.x4));
    records.dedup_by(|a, b| {
        a.t0_over_tbar == b.t0_over_tbar && (a.x4 - b.x4).abs().max((a.vy4 - b.vy4).abs()) < 1e-8
    });
    for (i, r) in records.iter_mut().enumerate() {
        r.index = i + 1;
        eprintln!(
            "periodic: x40 = {}, vy40 = {}, T0 = {} T̄, T = {} T̄",
            r.x4, r.vy4, r.t0_over_tbar, r.t_over_tbar
        );
    }
    if let Some(path) = &args.records {
        write_orbit_records(output(Some(path))?, &records)?;
    }
    Ok(exit::PASS)
}

fn orbit(p: RestrictedProblem, x40: f64, vy40: f64, m: u32, step: f64, out: Option<&Path>) -> Outcome {
    let r = p.refine_periodic(x40, vy40, m)?;
    let rec = &r.record;
    let period = rec.t_over_tbar as f64 * p.t_bar;
    let traj = integrator::integrate(p.config(), &p.initial_state(rec.x4, rec.vy4)?, period, p.settings)?;
    let n = write_trajectory(output(out)?, &traj, step * p.t_bar, p.t_bar)?;
    eprintln!(
        "x40 = {}, vy40 = {}, T0 = {} T̄, T = {} T̄ (M = {}), |y4| = {:.1e}, |vx4| = {:.1e}, closure = {:.1e}, {} samples",
        rec.x4, rec.vy4, rec.t0_over_tbar, rec.t_over_tbar, rec.big_m, rec.res_y, rec.res_vx, rec.res_closure, n
    );
    Ok(if rec.satisfies_invariants() {
        exit::PASS
    } else {
        exit::ASSERTION
    })
}
