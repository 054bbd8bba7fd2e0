use std::fmt::Display;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{bail, Context as _};
use chsh_selftest::finite_stats::{certify as certify_tally, fidelities_for_s, finite_size_table as fs_table};
use chsh_selftest::oracle::verify_suite;
use chsh_selftest::quantum::state_fidelity_to_bell;
use chsh_selftest::selftest::{alpha_range_for_s, SValue, TSIRELSON};
use chsh_selftest::simulator::{
    find_peaks, linspace, simulate_with, sweep_angle as run_sweep, NullSink, SimulationSummary,
};
use chsh_selftest::timing::{locality_margin, SpaceTimeConfig};
use chsh_selftest::tomography::{
    combined_eps_z, eps_z_from_readout, exact_probabilities, reconstruct_from_probabilities, reconstruct_state,
    simulate_tomography, tomographic_measurement_fidelity, ConfusionMatrix,
};
use chsh_selftest::trial_log::{config_header, summarize_log, LogWriter};
use chsh_selftest::{DensityMatrix, Execution, ExperimentConfig, NoiseModel};

use crate::config::Resolver;
use crate::output::{num, Format, RunManifest};
use crate::{
    BoundsArgs, CertifyArgs, NoiseArgs, Preset, SimulateArgs, SweepArgs, TableArgs, TimingArgs, TomographyArgs,
    VerifyArgs, EXIT_OK, EXIT_TRIVIAL, EXIT_VERIFY,
};

pub struct Context {
    pub format: Format,
    pub exec: Execution,
}

/// Resolves flags against the config file and records each given value in
/// the manifest.
struct Rec<'a> {
    r: &'a mut Resolver,
    m: RunManifest,
}

impl<'a> Rec<'a> {
    fn new(command: &'static str, r: &'a mut Resolver, ctx: &Context) -> Self {
        let mut m = RunManifest::new(command);
        m.push("format", ctx.format);
        Self { r, m }
    }

    fn opt<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>) -> anyhow::Result<Option<T>> {
        let v = self.r.opt(key, flag)?;
        if let Some(x) = &v {
            self.m.push(key, x);
        }
        Ok(v)
    }

    fn get<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>, default: T) -> anyhow::Result<T> {
        let v = self.r.get(key, flag, default)?;
        self.m.push(key, &v);
        Ok(v)
    }

    fn list<T: FromStr + Display>(
        &mut self,
        key: &str,
        flag: Option<Vec<T>>,
        default: Vec<T>,
    ) -> anyhow::Result<Vec<T>> {
        let v = self.r.list(key, flag)?.unwrap_or(default);
        let joined: Vec<String> = v.iter().map(ToString::to_string).collect();
        self.m.push(key, joined.join(","));
        Ok(v)
    }

    fn path(&mut self, key: &str, flag: Option<PathBuf>) -> anyhow::Result<Option<PathBuf>> {
        Ok(self.r.opt(key, flag)?)
    }

    fn finish(self) -> anyhow::Result<RunManifest> {
        self.r.finish()?;
        Ok(self.m)
    }
}

fn resolve_noise(rec: &mut Rec, a: NoiseArgs, theta_from_flags: bool) -> anyhow::Result<(Preset, NoiseModel)> {
    let preset = rec.get("preset", a.preset, Preset::Ideal)?;
    let mut nm = match preset {
        Preset::Ideal => NoiseModel::ideal(),
        Preset::Lab => NoiseModel::lab(),
    };
    if let Some(v) = rec.opt("bell-fidelity", a.bell_fidelity)? {
        nm.bell_fidelity = v;
    }
    if theta_from_flags {
        if let Some(v) = rec.opt("theta-deg", a.theta_deg)? {
            nm.theta_offset = v.to_radians();
        }
    } else if rec.r.opt("theta-deg", a.theta_deg)?.is_some() {
        bail!("--theta-deg cannot be combined with an angle sweep");
    }
    if let Some(v) = rec.opt("alpha-deg", a.alpha_deg)? {
        nm.alpha_a = v.to_radians();
    }
    for (key, flag, slot) in [
        ("readout-eg-a", a.readout_eg_a, &mut nm.readout_eg_a),
        ("readout-ge-a", a.readout_ge_a, &mut nm.readout_ge_a),
        ("readout-eg-b", a.readout_eg_b, &mut nm.readout_eg_b),
        ("readout-ge-b", a.readout_ge_b, &mut nm.readout_ge_b),
    ] {
        if let Some(v) = rec.opt(key, flag)? {
            *slot = v;
        }
    }
    if let Some(v) = rec.opt("drift-amplitude-deg", a.drift_amplitude_deg)? {
        nm.drift_amplitude = v.to_radians();
    }
    if let Some(v) = rec.opt("drift-period", a.drift_period)? {
        nm.drift_period = v;
    }
    nm.validate()?;
    Ok((preset, nm))
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn write_blocks(
    out: &mut impl Write,
    kind: &str,
    blocks: &[chsh_selftest::simulator::BlockStats],
    f: Format,
) -> anyhow::Result<()> {
    for (k, b) in blocks.iter().enumerate() {
        let trials = b.counts.total();
        let wins = b.counts.wins();
        match f {
            Format::Text => writeln!(
                out,
                "{kind:<12} {k:>5} {:>12} {:>10} {:>10}",
                b.first_index,
                trials,
                num(b.s_value(), f)
            )?,
            Format::Csv => writeln!(
                out,
                "{kind},{k},{},{trials},{wins},{}",
                b.first_index,
                num(b.s_value(), f)
            )?,
        }
    }
    Ok(())
}

fn write_summary(out: &mut impl Write, s: &SimulationSummary, f: Format) -> anyhow::Result<()> {
    let t = &s.tally;
    match f {
        Format::Text => {
            writeln!(out, "trials: {}", t.trials())?;
            writeln!(out, "wins: {}", t.wins())?;
            writeln!(out, "S from wins (8c/n - 4): {}", num(t.s_value(), f))?;
            writeln!(out, "S from correlators: {}", num(s.counts.s_value(), f))?;
            writeln!(out, "S of the model: {}", num(s.model_s, f))?;
            writeln!(
                out,
                "{:<12} {:>5} {:>12} {:>10} {:>10}",
                "block", "index", "first_trial", "trials", "S"
            )?;
        }
        Format::Csv => {
            writeln!(out, "kind,index,first_trial,trials,wins,s")?;
            writeln!(
                out,
                "total,0,0,{},{},{}",
                t.trials(),
                t.wins(),
                num(s.counts.s_value(), f)
            )?;
        }
    }
    write_blocks(out, "calibration", &s.calibration_blocks, f)?;
    write_blocks(out, "report", &s.report_blocks, f)?;
    Ok(())
}

pub fn simulate(ctx: &Context, r: &mut Resolver, a: SimulateArgs, out: &mut impl Write) -> anyhow::Result<u8> {
    let mut rec = Rec::new("simulate", r, ctx);
    let (preset, noise) = resolve_noise(&mut rec, a.noise, true)?;
    let (default_n, preset_block, preset_report) = match preset {
        Preset::Lab => (1u64 << 24, 1u64 << 20, 1u64 << 17),
        Preset::Ideal => (1 << 20, 0, 0),
    };
    let n = rec.get("n", a.n, default_n)?;
    let divides = |s: u64| s > 0 && n % s == 0;
    let block_size = rec.get(
        "block-size",
        a.block_size,
        if divides(preset_block) { preset_block } else { n },
    )?;
    let report_size = rec.get(
        "report-size",
        a.report_size,
        if divides(preset_report) {
            preset_report
        } else {
            block_size
        },
    )?;
    let seed = rec.get("seed", a.seed, 1)?;
    let repetition_rate = rec.get("repetition-rate", a.repetition_rate, 50e3)?;
    let path = rec.path("out", a.out)?;
    let mut manifest = rec.finish()?;
    manifest.output = path.clone();

    let config = ExperimentConfig {
        n_trials: n,
        block_size,
        report_size,
        seed,
        noise,
        repetition_rate,
    };
    config.validate()?;

    let summary = match &path {
        Some(p) => {
            let file = File::create(p).with_context(|| format!("cannot create {}", p.display()))?;
            let mut writer = LogWriter::new(BufWriter::new(file), &config_header(&config))?;
            simulate_with(&config, &mut writer, ctx.exec)?
        }
        None => simulate_with(&config, NullSink, ctx.exec)?,
    };
    manifest.emit(out)?;
    write_summary(out, &summary, ctx.format)?;
    Ok(EXIT_OK)
}

pub fn certify(ctx: &Context, r: &mut Resolver, a: CertifyArgs, out: &mut impl Write) -> anyhow::Result<u8> {
    let mut rec = Rec::new("certify", r, ctx);
    let path = rec.path("log", a.log)?.context("certify needs a trial log path")?;
    rec.m.push("log", path.display());
    let conf = rec.get("conf", a.conf, 0.99)?;
    let mut manifest = rec.finish()?;

    let file = File::open(&path).with_context(|| format!("cannot open {}", path.display()))?;
    let log = summarize_log(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))?;
    if let Some(seed) = log.header.get("seed") {
        manifest.push("info.log-seed", seed);
    }
    let cert = certify_tally(&log.tally, conf)?;
    manifest.emit(out)?;
    let f = ctx.format;
    match f {
        Format::Text => {
            writeln!(out, "trials: {}", cert.tally.trials())?;
            writeln!(out, "wins: {}", cert.tally.wins())?;
            writeln!(out, "confidence: {}", num(conf, f))?;
            writeln!(out, "S measured: {}", num(cert.s_measured, f))?;
            writeln!(out, "S lower bound: {}", num(cert.bound.s_lower, f))?;
            writeln!(out, "win probability lower bound: {}", num(cert.bound.p_lower, f))?;
            writeln!(out, "state fidelity: {}", num(cert.f_state, f))?;
            writeln!(out, "measurement fidelity: {}", num(cert.f_measurement, f))?;
            writeln!(out, "state certificate trivial: {}", yes_no(cert.state_trivial))?;
            writeln!(
                out,
                "measurement certificate trivial: {}",
                yes_no(cert.measurement_trivial)
            )?;
        }
        Format::Csv => {
            writeln!(
                out,
                "n,c,conf,s_measured,s_lower,p_lower,f_state,f_measurement,state_trivial,measurement_trivial"
            )?;
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                cert.tally.trials(),
                cert.tally.wins(),
                num(conf, f),
                num(cert.s_measured, f),
                num(cert.bound.s_lower, f),
                num(cert.bound.p_lower, f),
                num(cert.f_state, f),
                num(cert.f_measurement, f),
                cert.state_trivial,
                cert.measurement_trivial
            )?;
        }
    }
    Ok(if cert.is_nontrivial() { EXIT_OK } else { EXIT_TRIVIAL })
}

pub fn sweep_angle(ctx: &Context, r: &mut Resolver, a: SweepArgs, out: &mut impl Write) -> anyhow::Result<u8> {
    let mut rec = Rec::new("sweep-angle", r, ctx);
    let (_, noise) = resolve_noise(&mut rec, a.noise, false)?;
    let start = rec.get("theta-start-deg", a.theta_start_deg, 0.0)?;
    let stop = rec.get("theta-stop-deg", a.theta_stop_deg, 360.0)?;
    let points = rec.get("points", a.points, 29)?;
    let trials = rec.get("trials", a.trials, 36_157)?;
    let seed = rec.get("seed", a.seed, 1)?;
    let manifest = rec.finish()?;
    if points == 0 {
        bail!("--points must be at least 1");
    }
    let thetas: Vec<f64> = linspace(start, stop, points).into_iter().map(f64::to_radians).collect();
    let rows = run_sweep(&noise, &thetas, trials, seed, ctx.exec)?;
    let peaks = find_peaks(&rows);
    manifest.emit(out)?;
    let f = ctx.format;
    match f {
        Format::Text => writeln!(
            out,
            "{:>10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}",
            "theta_deg", "E00", "E01", "E10", "E11", "S", "S_model"
        )?,
        Format::Csv => writeln!(out, "theta_deg,e00,e01,e10,e11,s,s_model")?,
    }
    for p in &rows {
        let cells: Vec<String> = [p.theta.to_degrees()]
            .into_iter()
            .chain(p.correlators)
            .chain([p.s, p.model_s])
            .map(|v| num(v, f))
            .collect();
        match f {
            Format::Text => {
                let padded: Vec<String> = cells.iter().map(|c| format!("{c:>10}")).collect();
                writeln!(out, "{}", padded.join(" "))?;
            }
            Format::Csv => writeln!(out, "{}", cells.join(","))?,
        }
    }
    for (k, p) in peaks.iter().take(2).enumerate() {
        writeln!(
            out,
            "# peak {}: theta_deg={} s={}",
            k + 1,
            num(p.theta.to_degrees(), f),
            num(p.s, f)
        )?;
    }
    if peaks.len() >= 2 {
        let d = (peaks[0].theta - peaks[1].theta).abs().to_degrees();
        writeln!(out, "# peak separation_deg={}", num(d.min(360.0 - d), f))?;
    }
    Ok(EXIT_OK)
}

pub fn bounds(ctx: &Context, r: &mut Resolver, a: BoundsArgs, out: &mut impl Write) -> anyhow::Result<u8> {
    let mut rec = Rec::new("bounds", r, ctx);
    let values = match rec.opt("s", a.s)? {
        Some(s) => vec![s],
        None => {
            let lo = rec.get("s-min", a.s_min, 2.0)?;
            let hi = rec.get("s-max", a.s_max, TSIRELSON)?;
            let steps = rec.get("steps", a.steps, 9)?;
            linspace(lo, hi, steps)
        }
    };
    let manifest = rec.finish()?;
    manifest.emit(out)?;
    let f = ctx.format;
    match f {
        Format::Text => writeln!(
            out,
            "{:>10} {:>10} {:>12} {:>13} {:>12} {:>12}",
            "S", "F_state", "F_measure", "state_trivial", "alpha_lo_deg", "alpha_hi_deg"
        )?,
        Format::Csv => writeln!(out, "s,f_state,f_measurement,state_trivial,alpha_lo_deg,alpha_hi_deg")?,
    }
    for s in values {
        let (fs, fm, trivial, _) = fidelities_for_s(s)?;
        let range = alpha_range_for_s(SValue::new(s)?)?;
        let cells = [
            num(s, f),
            num(fs, f),
            num(fm, f),
            trivial.to_string(),
            num(range.lo.to_degrees(), f),
            num(range.hi.to_degrees(), f),
        ];
        match f {
            Format::Text => writeln!(
                out,
                "{:>10} {:>10} {:>12} {:>13} {:>12} {:>12}",
                cells[0], cells[1], cells[2], cells[3], cells[4], cells[5]
            )?,
            Format::Csv => writeln!(out, "{}", cells.join(","))?,
        }
    }
    Ok(EXIT_OK)
}

pub fn finite_size_table(ctx: &Context, r: &mut Resolver, a: TableArgs, out: &mut impl Write) -> anyhow::Result<u8> {
    let mut rec = Rec::new("finite-size-table", r, ctx);
    let s = rec.list("s", a.s, vec![2.106, 2.15, 2.2, 2.236, 2.3, 2.4, 2.5])?;
    let n = rec.list(
        "n",
        a.n,
        vec![
            1_000,
            10_000,
            100_000,
            1_000_000,
            10_000_000,
            1 << 24,
            100_000_000,
            1_000_000_000,
        ],
    )?;
    let conf = rec.get("conf", a.conf, 0.99)?;
    let manifest = rec.finish()?;
    let rows = fs_table(&s, &n, conf)?;
    manifest.emit(out)?;
    let f = ctx.format;
    match f {
        Format::Text => writeln!(
            out,
            "{:>8} {:>12} {:>12} {:>10} {:>10} {:>10}",
            "S", "n", "c", "S_lower", "F_state", "F_measure"
        )?,
        Format::Csv => writeln!(out, "s,n,c,s_lower,f_state,f_measurement")?,
    }
    for row in rows {
        match f {
            Format::Text => writeln!(
                out,
                "{:>8} {:>12} {:>12} {:>10} {:>10} {:>10}",
                num(row.s, f),
                row.n,
                row.c,
                num(row.s_lower, f),
                num(row.f_state, f),
                num(row.f_measurement, f)
            )?,
            Format::Csv => writeln!(
                out,
                "{},{},{},{},{},{}",
                num(row.s, f),
                row.n,
                row.c,
                num(row.s_lower, f),
                num(row.f_state, f),
                num(row.f_measurement, f)
            )?,
        }
    }
    Ok(EXIT_OK)
}

pub fn timing(ctx: &Context, r: &mut Resolver, a: TimingArgs, out: &mut impl Write) -> anyhow::Result<u8> {
    let mut rec = Rec::new("timing", r, ctx);
    let defaults = SpaceTimeConfig::new(32.928, 106.7);
    let cfg = SpaceTimeConfig {
        separation_distance: rec.get("distance-m", a.distance_m, defaults.separation_distance)?,
        protocol_duration: rec.get("duration-ns", a.duration_ns, defaults.protocol_duration)?,
        distance_sigma: rec.get("distance-sigma-ns", a.distance_sigma_ns, defaults.distance_sigma)?,
        duration_sigma: rec.get("duration-sigma-ns", a.duration_sigma_ns, defaults.duration_sigma)?,
        k_sigma: rec.get("k", a.k, defaults.k_sigma)?,
    };
    let manifest = rec.finish()?;
    let m = locality_margin(&cfg)?;
    manifest.emit(out)?;
    let f = ctx.format;
    match f {
        Format::Text => {
            writeln!(out, "time budget (ns): {}", num(m.budget_ns, f))?;
            writeln!(out, "protocol duration (ns): {}", num(cfg.protocol_duration, f))?;
            writeln!(out, "margin (ns): {}", num(m.margin_ns, f))?;
            writeln!(out, "margin fraction: {}", num(m.margin_fraction, f))?;
            writeln!(out, "combined sigma (ns): {}", num(cfg.combined_sigma(), f))?;
            writeln!(out, "locality loophole closed: {}", yes_no(m.closed))?;
        }
        Format::Csv => {
            writeln!(out, "budget_ns,duration_ns,margin_ns,margin_fraction,sigma_ns,closed")?;
            writeln!(
                out,
                "{},{},{},{},{},{}",
                num(m.budget_ns, f),
                num(cfg.protocol_duration, f),
                num(m.margin_ns, f),
                num(m.margin_fraction, f),
                num(cfg.combined_sigma(), f),
                m.closed
            )?;
        }
    }
    Ok(EXIT_OK)
}

pub fn tomography(ctx: &Context, r: &mut Resolver, a: TomographyArgs, out: &mut impl Write) -> anyhow::Result<u8> {
    let mut rec = Rec::new("tomography", r, ctx);
    let bell_fidelity = rec.get("bell-fidelity", a.bell_fidelity, 0.859)?;
    let fr_a = rec.get("readout-fidelity-a", a.readout_fidelity_a, 0.989)?;
    let fr_b = rec.get("readout-fidelity-b", a.readout_fidelity_b, 0.972)?;
    let shots = rec.get("shots", a.shots, 100_000)?;
    let seed = rec.get("seed", a.seed, 1)?;
    let eps_r = rec.get("eps-r", a.eps_r, 0.0025)?;
    let manifest = rec.finish()?;

    let rho = DensityMatrix::werner(bell_fidelity)?;
    let conf = [
        ConfusionMatrix::from_readout_fidelity(fr_a)?,
        ConfusionMatrix::from_readout_fidelity(fr_b)?,
    ];
    let counts = simulate_tomography(&rho, shots, &conf, seed, ctx.exec)?;
    let corrected = state_fidelity_to_bell(&reconstruct_state(&counts, true, &conf)?);
    let raw = state_fidelity_to_bell(&reconstruct_state(&counts, false, &conf)?);
    let exact = exact_probabilities(&rho, &conf);
    let exact_corrected = state_fidelity_to_bell(&reconstruct_from_probabilities(&exact, true, &conf)?);
    let exact_raw = state_fidelity_to_bell(&reconstruct_from_probabilities(&exact, false, &conf)?);
    let (ez_a, ez_b) = (eps_z_from_readout(fr_a), eps_z_from_readout(fr_b));
    let eps_z = combined_eps_z(ez_a, ez_b);
    let bound = tomographic_measurement_fidelity(eps_r, eps_z)?;
    manifest.emit(out)?;
    let f = ctx.format;
    let rows = [
        ("fidelity_corrected", corrected),
        ("fidelity_uncorrected", raw),
        ("fidelity_corrected_exact", exact_corrected),
        ("fidelity_uncorrected_exact", exact_raw),
        ("eps_z_a", ez_a),
        ("eps_z_b", ez_b),
        ("eps_z", eps_z),
        ("eps_r", eps_r),
        ("measurement_fidelity_bound", bound),
    ];
    match f {
        Format::Text => {
            for (k, v) in rows {
                writeln!(out, "{k}: {}", num(v, f))?;
            }
        }
        Format::Csv => {
            let keys: Vec<&str> = rows.iter().map(|r| r.0).collect();
            let vals: Vec<String> = rows.iter().map(|r| num(r.1, f)).collect();
            writeln!(out, "{}", keys.join(","))?;
            writeln!(out, "{}", vals.join(","))?;
        }
    }
    Ok(EXIT_OK)
}

pub fn verify(ctx: &Context, r: &mut Resolver, a: VerifyArgs, out: &mut impl Write) -> anyhow::Result<u8> {
    let mut rec = Rec::new("verify", r, ctx);
    let seed = rec.get("seed", a.seed, 1)?;
    let manifest = rec.finish()?;
    let checks = verify_suite(seed, ctx.exec)?;
    manifest.emit(out)?;
    if ctx.format == Format::Csv {
        writeln!(out, "check,passed,detail")?;
    }
    for c in &checks {
        match ctx.format {
            Format::Text => writeln!(
                out,
                "{} {}: {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.detail
            )?,
            Format::Csv => writeln!(out, "{},{},{}", c.name, c.passed, c.detail)?,
        }
    }
    Ok(if checks.iter().all(|c| c.passed) {
        EXIT_OK
    } else {
        EXIT_VERIFY
    })
}
