//! Scenario files, experiment pipelines and run reports.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::circlemap::{
    circ_dist, koenigs_chart, t_to_theta, wrap01, Chart, CircleMap, GeneratorSet, GeneratorSpec, Interval,
};
use crate::discreteness::{
    build_family, commutator_probe, factor_block, frontier_stats, sufficient_estimate_report, write_estimate_csv,
    ProbeConfig, ProbeVerdict, DEFAULT_EPS0, DEFAULT_FAMILY_CAP,
};
use crate::endsenergy::{
    build_projective_atlas, check_energy_pair, check_q_pair, detect_gaps, end_limit, energy_series, gap_energy,
    gap_records, gap_stabilizer, nonl_increment_residual, point_records, point_stabilizer,
    projective_holonomy_test, q_increment_residual, write_records_csv, GAP_CELL, GAP_MIN_LEN,
};
use crate::error::{Error, Result};
use crate::groupaction::{default_ball, orbit, write_orbit_csv, DEFAULT_GROUP_TOL, DEFAULT_ORBIT_CAP, DEFAULT_ORBIT_TOL};
use crate::markov::{
    check_star, detect_ne, expand_point, expansion_stats, refine_levels, validate_partition, Atom, MarkovPartition,
    Side,
};
use crate::par::par_map;
use crate::schreier::build_schreier;
use crate::word::Word;

/// Pipelines in execution order.
pub const PIPELINES: [&str; 11] = [
    "jets-selftest",
    "orbit",
    "schreier-ends",
    "markov-validate",
    "expansion",
    "energy",
    "duminy",
    "holonomy",
    "atlas",
    "discreteness",
    "probe",
];

const BUILTIN: [(&str, &str); 5] = [
    ("psl2z", include_str!("../scenarios/psl2z.toml")),
    ("schottky", include_str!("../scenarios/schottky.toml")),
    ("rotations", include_str!("../scenarios/rotations.toml")),
    ("perturbed-rotations", include_str!("../scenarios/perturbed-rotations.toml")),
    ("perturbed-psl2z", include_str!("../scenarios/perturbed-psl2z.toml")),
];

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TrigDef {
    #[serde(default)]
    pub c0: f64,
    #[serde(default)]
    pub sin: Vec<f64>,
    #[serde(default)]
    pub cos: Vec<f64>,
}

/// Exactly one of the fields is set.
#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MapDef {
    pub mobius: Option<[f64; 4]>,
    pub rotation: Option<f64>,
    pub trig: Option<TrigDef>,
    /// Word in previously defined generators.
    pub word: Option<String>,
    /// Product in composition order, the last factor acting first.
    pub compose: Option<Vec<MapDef>>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct GenDef {
    pub label: String,
    #[serde(flatten)]
    pub map: MapDef,
    pub inverse: Option<MapDef>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct BaseCfg {
    #[serde(default)]
    pub x0: f64,
}

impl Default for BaseCfg {
    fn default() -> Self {
        BaseCfg { x0: 0.0 }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelftestCfg {
    pub words: usize,
    pub max_len: usize,
    pub points: usize,
}

impl Default for SelftestCfg {
    fn default() -> Self {
        SelftestCfg { words: 100, max_len: 6, points: 100 }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct OrbitCfg {
    pub radius: usize,
    pub tol: f64,
    pub cap: usize,
    /// Base point override.
    pub x0: Option<f64>,
}

impl Default for OrbitCfg {
    fn default() -> Self {
        OrbitCfg { radius: 6, tol: DEFAULT_ORBIT_TOL, cap: DEFAULT_ORBIT_CAP, x0: None }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct EndsCfg {
    pub rs: Vec<usize>,
    /// `R = r + extra`.
    pub extra: usize,
    pub tol: f64,
    pub x0: Option<f64>,
    pub expected: Option<Vec<usize>>,
}

impl Default for EndsCfg {
    fn default() -> Self {
        EndsCfg { rs: vec![0, 1, 2, 3], extra: 3, tol: DEFAULT_ORBIT_TOL, x0: None, expected: None }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct AtomDef {
    /// Endpoints in the circle coordinate.
    pub theta: Option<[f64; 2]>,
    /// Endpoints in the real-line chart; `±inf` allowed.
    pub t: Option<[f64; 2]>,
    pub word: String,
    pub ne: Option<usize>,
    pub side: Option<Side>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MarkovCfg {
    pub lambda: f64,
    pub ne_points: Vec<f64>,
    pub atoms: Vec<AtomDef>,
    #[serde(default = "default_grid")]
    pub grid: usize,
    #[serde(default = "default_repel")]
    pub repel_margin: f64,
    #[serde(default = "default_ne_radius")]
    pub ne_radius: usize,
    #[serde(default = "default_star_radius")]
    pub star_radius: usize,
    #[serde(default = "default_levels")]
    pub levels: usize,
}

fn default_grid() -> usize {
    1024
}
fn default_repel() -> f64 {
    1e-9
}
fn default_ne_radius() -> usize {
    10
}
fn default_star_radius() -> usize {
    2
}
fn default_levels() -> usize {
    2
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExpansionCfg {
    pub radius: usize,
    pub max_steps: usize,
}

impl Default for ExpansionCfg {
    fn default() -> Self {
        ExpansionCfg { radius: 6, max_steps: 64 }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnergyCfg {
    pub radius: usize,
    pub stabilizer_radius: usize,
    /// Ball radius searched for pairs of words with the same image of `x0`.
    pub pair_radius: usize,
    pub max_pairs: usize,
    pub rays: Vec<String>,
    pub tol: f64,
}

impl Default for EnergyCfg {
    fn default() -> Self {
        EnergyCfg {
            radius: 10,
            stabilizer_radius: 6,
            pair_radius: 8,
            max_pairs: 200,
            rays: Vec::new(),
            tol: DEFAULT_GROUP_TOL,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DuminyCfg {
    /// A point of the minimal set.
    pub seed: f64,
    #[serde(default = "default_closure_radius")]
    pub closure_radius: usize,
    #[serde(default = "default_cell")]
    pub cell: f64,
    #[serde(default = "default_min_len")]
    pub min_len: f64,
    #[serde(default = "default_stab_radius")]
    pub stabilizer_radius: usize,
    #[serde(default = "default_slack")]
    pub slack: f64,
    #[serde(default = "default_gap_radius")]
    pub orbit_radius: usize,
    #[serde(default = "default_fine_tol")]
    pub tol: f64,
    #[serde(default)]
    pub rays: Vec<String>,
}

fn default_closure_radius() -> usize {
    7
}
fn default_cell() -> f64 {
    GAP_CELL
}
fn default_min_len() -> f64 {
    GAP_MIN_LEN
}
fn default_stab_radius() -> usize {
    4
}
fn default_slack() -> f64 {
    5e-4
}
fn default_gap_radius() -> usize {
    8
}
fn default_fine_tol() -> f64 {
    1e-11
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ChartCfg {
    /// Word whose attracting fixed point carries the chart.
    pub word: String,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default = "default_chart_tol")]
    pub tol: f64,
}

fn default_n_max() -> usize {
    400
}
fn default_chart_tol() -> f64 {
    1e-8
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct HolonomyCfg {
    pub gammas: Vec<String>,
    pub grid: usize,
    pub projective_tol: f64,
    pub residual_tol: f64,
}

impl Default for HolonomyCfg {
    fn default() -> Self {
        HolonomyCfg { gammas: Vec::new(), grid: 64, projective_tol: 1e-8, residual_tol: 1e-10 }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct AtlasCfg {
    pub max_charts: usize,
    pub radius: usize,
    pub projective_tol: f64,
}

impl Default for AtlasCfg {
    fn default() -> Self {
        AtlasCfg { max_charts: 64, radius: 6, projective_tol: 1e-8 }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DiscretenessCfg {
    #[serde(default = "default_frontier_radii")]
    pub frontier_radii: Vec<usize>,
    pub g1: Vec<String>,
    #[serde(default)]
    pub z: Vec<String>,
    pub r1: usize,
    pub sigma: String,
    pub psi: String,
    pub n: Vec<usize>,
    #[serde(default = "default_family_grid")]
    pub grid: usize,
    #[serde(default = "default_family_cap")]
    pub cap: usize,
}

fn default_frontier_radii() -> Vec<usize> {
    (1..=6).collect()
}
fn default_family_grid() -> usize {
    256
}
fn default_family_cap() -> usize {
    DEFAULT_FAMILY_CAP
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeCfg {
    pub f1: String,
    pub f2: String,
    /// `[left, length]`.
    pub interval: [f64; 2],
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_eps0")]
    pub eps0: f64,
    pub enlarge: Option<f64>,
    #[serde(default = "default_probe_grid")]
    pub grid: usize,
    #[serde(default = "default_identity_tol")]
    pub identity_tol: f64,
}

fn default_steps() -> usize {
    6
}
fn default_eps0() -> f64 {
    DEFAULT_EPS0
}
fn default_probe_grid() -> usize {
    200
}
fn default_identity_tol() -> f64 {
    DEFAULT_GROUP_TOL
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub seed: u64,
    pub pipelines: Vec<String>,
    pub generators: Vec<GenDef>,
    #[serde(default)]
    pub base: BaseCfg,
    #[serde(default)]
    pub selftest: SelftestCfg,
    #[serde(default)]
    pub orbit: OrbitCfg,
    #[serde(default)]
    pub ends: EndsCfg,
    pub markov: Option<MarkovCfg>,
    #[serde(default)]
    pub expansion: ExpansionCfg,
    #[serde(default)]
    pub energy: EnergyCfg,
    pub duminy: Option<DuminyCfg>,
    pub chart: Option<ChartCfg>,
    #[serde(default)]
    pub holonomy: HolonomyCfg,
    #[serde(default)]
    pub atlas: AtlasCfg,
    pub discreteness: Option<DiscretenessCfg>,
    pub probe: Option<ProbeCfg>,
}

/// Shipped scenarios with their one-line descriptions, in catalog order.
pub fn list_examples() -> Vec<(&'static str, String)> {
    BUILTIN
        .iter()
        .map(|(name, text)| {
            let desc = parse_scenario(text, &[]).map(|s| s.description).unwrap_or_default();
            (*name, desc)
        })
        .collect()
}

pub fn builtin(name: &str) -> Option<&'static str> {
    BUILTIN.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

/// Sets `value` at a dotted path; numeric segments index arrays.
fn set_path(root: &mut toml::Value, path: &str, value: toml::Value) -> Result<()> {
    let mut cur = root;
    let segs: Vec<&str> = path.split('.').collect();
    for (i, seg) in segs.iter().enumerate() {
        let last = i + 1 == segs.len();
        cur = match cur {
            toml::Value::Table(t) => {
                if last {
                    t.insert(seg.to_string(), value);
                    return Ok(());
                }
                t.entry(seg.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()))
            }
            toml::Value::Array(a) => {
                let k: usize = seg
                    .parse()
                    .map_err(|_| Error::Config(format!("`{path}`: `{seg}` is not an array index")))?;
                let len = a.len();
                let slot = a
                    .get_mut(k)
                    .ok_or_else(|| Error::Config(format!("`{path}`: index {k} out of range ({len})")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(Error::Config(format!("`{path}`: `{seg}` is not a table"))),
        };
    }
    Ok(())
}

fn parse_override_value(text: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {text}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(text.to_string()))
}

/// Parses a scenario and applies `key=value` overrides.
pub fn parse_scenario(text: &str, overrides: &[String]) -> Result<Scenario> {
    let scn: Scenario = if overrides.is_empty() {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?
    } else {
        let mut root: toml::Value = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{o}` is not key=value")))?;
            set_path(&mut root, k.trim(), parse_override_value(v.trim()))?;
        }
        root.try_into().map_err(|e: toml::de::Error| Error::Config(format!("after overrides: {e}")))?
    };
    validate(&scn)?;
    Ok(scn)
}

/// Reads a scenario file, or a shipped scenario by name.
pub fn load_scenario(path: &Path, overrides: &[String]) -> Result<Scenario> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => match path.to_str().and_then(builtin) {
            Some(t) => t.to_string(),
            None => return Err(Error::Io(e)),
        },
    };
    parse_scenario(&text, overrides)
}

fn validate(s: &Scenario) -> Result<()> {
    for p in &s.pipelines {
        if !PIPELINES.contains(&p.as_str()) {
            return Err(Error::Config(format!("pipelines: unknown pipeline `{p}` (known: {})", PIPELINES.join(", "))));
        }
    }
    let need = |p: &str, present: bool, section: &str| -> Result<()> {
        if s.pipelines.iter().any(|q| q == p) && !present {
            return Err(Error::Config(format!("pipeline `{p}` needs a [{section}] section")));
        }
        Ok(())
    };
    need("markov-validate", s.markov.is_some(), "markov")?;
    need("expansion", s.markov.is_some(), "markov")?;
    need("duminy", s.duminy.is_some(), "duminy")?;
    need("holonomy", s.chart.is_some(), "chart")?;
    need("atlas", s.chart.is_some(), "chart")?;
    need("discreteness", s.discreteness.is_some(), "discreteness")?;
    need("probe", s.probe.is_some(), "probe")?;
    let positive = [
        ("orbit.tol", s.orbit.tol),
        ("ends.tol", s.ends.tol),
        ("energy.tol", s.energy.tol),
        ("holonomy.projective_tol", s.holonomy.projective_tol),
        ("atlas.projective_tol", s.atlas.projective_tol),
    ];
    for (k, v) in positive {
        if !(v > 0.0) {
            return Err(Error::Config(format!("{k} must be positive, got {v}")));
        }
    }
    if s.orbit.radius > 64 || s.energy.radius > 64 {
        return Err(Error::Config("radii above 64 are outside the module caps".into()));
    }
    Ok(())
}

fn build_map(def: &MapDef, prior: &[GeneratorSpec], what: &str) -> Result<CircleMap> {
    let set = [def.mobius.is_some(), def.rotation.is_some(), def.trig.is_some(), def.word.is_some(), def.compose.is_some()]
        .iter()
        .filter(|&&b| b)
        .count();
    if set != 1 {
        return Err(Error::Config(format!(
            "{what}: exactly one of mobius, rotation, trig, word, compose must be given"
        )));
    }
    let ctx = |e: Error| Error::Config(format!("{what}: {e}"));
    if let Some(m) = def.mobius {
        return CircleMap::mobius(m).map_err(ctx);
    }
    if let Some(a) = def.rotation {
        return Ok(CircleMap::rotation(a));
    }
    if let Some(t) = &def.trig {
        return CircleMap::trig(t.c0, t.sin.clone(), t.cos.clone()).map_err(ctx);
    }
    if let Some(w) = &def.word {
        if prior.is_empty() {
            return Err(Error::Config(format!("{what}: word `{w}` needs earlier generators")));
        }
        let g = GeneratorSet::new(prior.to_vec()).map_err(ctx)?;
        return Ok(g.word_map(&g.parse_word(w).map_err(ctx)?));
    }
    let parts = def.compose.as_ref().unwrap();
    let maps = parts
        .iter()
        .enumerate()
        .map(|(i, p)| build_map(p, prior, &format!("{what}.compose[{i}]")).map(Arc::new))
        .collect::<Result<Vec<_>>>()?;
    Ok(CircleMap::compose(maps))
}

pub fn build_generators(s: &Scenario) -> Result<GeneratorSet> {
    let mut specs: Vec<GeneratorSpec> = Vec::new();
    for (i, g) in s.generators.iter().enumerate() {
        let what = format!("generators[{i}] ({})", g.label);
        let map = build_map(&g.map, &specs, &what)?;
        let mut spec = GeneratorSpec::new(g.label.clone(), map);
        if let Some(inv) = &g.inverse {
            spec = spec.with_inverse(build_map(inv, &specs, &format!("{what}.inverse"))?);
        }
        specs.push(spec);
    }
    GeneratorSet::new(specs).map_err(|e| Error::Config(format!("generators: {e}")))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Provenance {
    pub radius: Option<usize>,
    pub grid: Option<usize>,
    pub tol: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Verdict {
    pub claim: String,
    pub status: Status,
    pub value: Option<f64>,
    pub provenance: Provenance,
}

fn prov(radius: Option<usize>, grid: Option<usize>, tol: Option<f64>) -> Provenance {
    Provenance { radius, grid, tol }
}

fn verdict(claim: impl Into<String>, ok: bool, value: Option<f64>, p: Provenance) -> Verdict {
    Verdict { claim: claim.into(), status: if ok { Status::Pass } else { Status::Fail }, value, provenance: p }
}

#[derive(Clone, Debug, Serialize)]
pub struct PipelineReport {
    pub name: String,
    pub ok: bool,
    pub error: Option<String>,
    pub verdicts: Vec<Verdict>,
    pub warnings: Vec<String>,
    pub outputs: Vec<String>,
    pub data: serde_json::Value,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub description: String,
    pub seed: u64,
    pub ok: bool,
    pub pipelines: Vec<PipelineReport>,
}

struct Ctx<'a> {
    s: &'a Scenario,
    gens: GeneratorSet,
    out: PathBuf,
}

#[derive(Default)]
struct Acc {
    verdicts: Vec<Verdict>,
    warnings: Vec<String>,
    outputs: Vec<String>,
    data: serde_json::Map<String, serde_json::Value>,
}

impl Acc {
    fn put(&mut self, key: &str, v: impl Serialize) -> Result<()> {
        self.data.insert(key.to_string(), serde_json::to_value(v)?);
        Ok(())
    }

    fn file(&mut self, ctx: &Ctx, name: &str) -> Result<BufWriter<File>> {
        self.outputs.push(name.to_string());
        Ok(BufWriter::new(File::create(ctx.out.join(name))?))
    }
}

/// Runs every requested pipeline and writes `report.json` under `out`.
pub fn run_scenario(s: &Scenario, out: &Path) -> Result<RunReport> {
    fs::create_dir_all(out)?;
    let gens = build_generators(s)?;
    let ctx = Ctx { s, gens, out: out.to_path_buf() };
    let names: Vec<&str> = PIPELINES.iter().copied().filter(|p| s.pipelines.iter().any(|q| q == p)).collect();
    let pipelines = par_map(&names, |&name| {
        let mut acc = Acc::default();
        let res = match name {
            "jets-selftest" => run_selftest(&ctx, &mut acc),
            "orbit" => run_orbit(&ctx, &mut acc),
            "schreier-ends" => run_ends(&ctx, &mut acc),
            "markov-validate" => run_markov(&ctx, &mut acc),
            "expansion" => run_expansion(&ctx, &mut acc),
            "energy" => run_energy(&ctx, &mut acc),
            "duminy" => run_duminy(&ctx, &mut acc),
            "holonomy" => run_holonomy(&ctx, &mut acc),
            "atlas" => run_atlas(&ctx, &mut acc),
            "discreteness" => run_discreteness(&ctx, &mut acc),
            "probe" => run_probe(&ctx, &mut acc),
            _ => unreachable!("validated pipeline name"),
        };
        PipelineReport {
            name: name.to_string(),
            ok: res.is_ok(),
            error: res.err().map(|e| e.to_string()),
            verdicts: acc.verdicts,
            warnings: acc.warnings,
            outputs: acc.outputs,
            data: serde_json::Value::Object(acc.data),
        }
    });
    let report = RunReport {
        scenario: s.name.clone(),
        description: s.description.clone(),
        seed: s.seed,
        ok: pipelines.iter().all(|p| p.ok),
        pipelines,
    };
    let f = File::create(out.join("report.json"))?;
    serde_json::to_writer_pretty(BufWriter::new(f), &report)?;
    Ok(report)
}

/// Jet and cocycle checks on the generators of every shipped scenario.
pub fn selftest_all() -> Result<Vec<(String, Vec<Verdict>)>> {
    let mut out = Vec::new();
    for (name, text) in BUILTIN {
        let s = parse_scenario(text, &[])?;
        let ctx = Ctx { gens: build_generators(&s)?, s: &s, out: PathBuf::new() };
        let mut acc = Acc::default();
        run_selftest(&ctx, &mut acc)?;
        out.push((name.to_string(), acc.verdicts));
    }
    Ok(out)
}

/// Worst relative errors of jets against central finite differences on
/// random words, seeded.
pub fn jet_fd_errors(gens: &GeneratorSet, seed: u64, words: usize, max_len: usize, points: usize) -> [f64; 3] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let letters = gens.letters();
    let cases: Vec<(Word, Vec<f64>)> = (0..words)
        .map(|_| {
            let len = rng.gen_range(1..=max_len);
            let w = Word::from_letters((0..len).map(|_| letters[rng.gen_range(0..letters.len())]));
            let xs = (0..points).map(|_| rng.gen::<f64>()).collect();
            (w, xs)
        })
        .collect();
    let errs = par_map(&cases, |(w, xs)| {
        let mut worst = [0.0f64; 3];
        for &x in xs {
            let e = fd_relative_errors(gens, w, x);
            for k in 0..3 {
                worst[k] = worst[k].max(e[k]);
            }
        }
        worst
    });
    errs.into_iter().fold([0.0; 3], |a, e| [a[0].max(e[0]), a[1].max(e[1]), a[2].max(e[2])])
}

/// Richardson-extrapolated central differences of the lift of the word map,
/// compared with the letter-by-letter jet; errors are relative with a unit
/// floor. Möbius words collapse to one matrix in the word map, which keeps
/// the rounding noise of the differences low.
pub fn fd_relative_errors(gens: &GeneratorSet, w: &Word, x: f64) -> [f64; 3] {
    let j = gens.word_jet(w, x);
    let m = gens.word_map(w);
    let f = |y: f64| m.lift(y);
    // Step scale from the local variation of the map.
    let s = 1.0 / (1.0 + (j.d2 / j.d1).abs() + (j.d3 / j.d1).abs().sqrt());
    let d1 = |h: f64| (f(x + h) - f(x - h)) / (2.0 * h);
    let d2 = |h: f64| (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
    let d3 = |h: f64| (f(x + 2.0 * h) - 2.0 * f(x + h) + 2.0 * f(x - h) - f(x - 2.0 * h)) / (2.0 * h * h * h);
    let rich = |g: &dyn Fn(f64) -> f64, h: f64| (4.0 * g(h / 2.0) - g(h)) / 3.0;
    let fd = [rich(&d1, 1e-4 * s), rich(&d2, 2e-3 * s), rich(&d3, 1e-2 * s)];
    let jet = [j.d1, j.d2, j.d3];
    [0, 1, 2].map(|k| (fd[k] - jet[k]).abs() / jet[k].abs().max(1.0))
}

fn run_selftest(ctx: &Ctx, acc: &mut Acc) -> Result<()> {
    let c = &ctx.s.selftest;
    let e = jet_fd_errors(&ctx.gens, ctx.s.seed, c.words, c.max_len, c.points);
    let tols = [1e-5, 1e-4, 1e-2];
    for k in 0..3 {
        acc.verdicts.push(verdict(
            format!("jet d{} matches finite differences within relative {:e}", k + 1, tols[k]),
            e[k] <= tols[k],
            Some(e[k]),
            prov(Some(c.max_len), Some(c.points), Some(tols[k])),
        ));
    }
    // Schwarzian and nonlinearity cocycles on random pairs.
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.s.seed.wrapping_add(1));
    let letters = ctx.gens.letters();
    let mut worst: [f64; 2] = [0.0, 0.0];
    for _ in 0..c.words {
        let mut rw = |n: usize| Word::from_letters((0..n).map(|_| letters[rng.gen_range(0..letters.len())]));
        let (a, b) = (rw(1 + c.max_len / 2), rw(1 + c.max_len / 2));
        let x = rng.gen::<f64>();
        let jb = ctx.gens.word_jet(&b, x);
        let ja = ctx.gens.word_jet(&a, jb.value);
        let jab = ctx.gens.word_jet(&a.mul(&b), x);
        let s_res = (jab.schwarzian() - (ja.schwarzian() * jb.d1 * jb.d1 + jb.schwarzian())).abs();
        let n_res = (jab.nonlinearity() - (ja.nonlinearity() * jb.d1 + jb.nonlinearity())).abs();
        let scale = |v: f64| v.abs().max(1.0);
        worst[0] = worst[0].max(s_res / scale(jab.schwarzian()));
        worst[1] = worst[1].max(n_res / scale(jab.nonlinearity()));
    }
    acc.verdicts.push(verdict("Schwarzian cocycle", worst[0] < 1e-9, Some(worst[0]), prov(Some(c.max_len), None, Some(1e-9))));
    acc.verdicts.push(verdict("nonlinearity cocycle", worst[1] < 1e-9, Some(worst[1]), prov(Some(c.max_len), None, Some(1e-9))));
    acc.put("fd_relative_errors", e)?;
    acc.put("cocycle_residuals", worst)?;
    Ok(())
}

fn run_orbit(ctx: &Ctx, acc: &mut Acc) -> Result<()> {
    let c = &ctx.s.orbit;
    let x0 = c.x0.unwrap_or(ctx.s.base.x0);
    let o = orbit(&ctx.gens, x0, c.radius, c.tol, c.cap)?;
    write_orbit_csv(&o, &ctx.gens, acc.file(ctx, "orbit.csv")?)?;
    let worst = o
        .points
        .iter()
        .map(|p| circ_dist(ctx.gens.apply_word(&p.witness, o.base), p.position))
        .fold(0.0, f64::max);
    acc.verdicts.push(verdict("witnesses reproduce orbit positions", worst <= c.tol, Some(worst), prov(Some(c.radius), None, Some(c.tol))));
    let shells: Vec<usize> = (0..=c.radius).map(|d| o.shell(d).count()).collect();
    if shells.last() == Some(&0) {
        acc.warnings.push(format!("orbit is finite with {} points", o.len()));
    }
    acc.put("base", o.base)?;
    acc.put("points", o.len())?;
    acc.put("shell_sizes", shells)?;
    Ok(())
}

fn run_ends(ctx: &Ctx, acc: &mut Acc) -> Result<()> {
    let c = &ctx.s.ends;
    let x0 = c.x0.unwrap_or(ctx.s.base.x0);
    let rmax = c.rs.iter().copied().max().unwrap_or(0) + c.extra + 1;
    let o = orbit(&ctx.gens, x0, rmax, c.tol, DEFAULT_ORBIT_CAP)?;
    let g = build_schreier(&o, &ctx.gens);
    g.write_edge_list(&ctx.gens, acc.file(ctx, "schreier_edges.txt")?)?;
    let mut w = csv::Writer::from_writer(acc.file(ctx, "ends.csv")?);
    w.write_record(["r", "R", "components", "reliable"])?;
    let mut rows = Vec::new();
    for (i, &r) in c.rs.iter().enumerate() {
        let e = g.ends_estimate(r, r + c.extra)?;
        w.write_record([r.to_string(), e.big_r.to_string(), e.components.to_string(), e.reliable.to_string()])?;
        let p = prov(Some(e.big_r), None, Some(c.tol));
        match c.expected.as_ref().and_then(|v| v.get(i)) {
            Some(&want) => acc.verdicts.push(verdict(
                format!("ends estimate at r = {r} equals {want}"),
                e.components == want,
                Some(e.components as f64),
                p,
            )),
            None => acc.verdicts.push(Verdict {
                claim: format!("ends estimate at r = {r} computed within the truncation"),
                status: if e.reliable { Status::Pass } else { Status::Inconclusive },
                value: Some(e.components as f64),
                provenance: p,
            }),
        }
        rows.push(e);
    }
    w.flush()?;
    acc.put("orbit_points", o.len())?;
    acc.put("edges", g.edges.len())?;
    acc.put("estimates", rows)?;
    Ok(())
}

/// Builds the configured partition.
pub fn build_partition(cfg: &MarkovCfg, gens: &GeneratorSet) -> Result<MarkovPartition> {
    let atoms = cfg
        .atoms
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let what = format!("markov.atoms[{i}]");
            let (l, r) = match (a.theta, a.t) {
                (Some([l, r]), None) => (wrap01(l), wrap01(r)),
                (None, Some([l, r])) => (t_to_theta(l), t_to_theta(r)),
                _ => return Err(Error::Config(format!("{what}: give exactly one of theta, t"))),
            };
            let adjacent = match (a.ne, a.side) {
                (Some(k), Some(s)) => Some((k, s)),
                (None, None) => None,
                _ => return Err(Error::Config(format!("{what}: ne and side go together"))),
            };
            Ok(Atom {
                interval: Interval::from_endpoints(l, r).map_err(|e| Error::Config(format!("{what}: {e}")))?,
                word: gens.parse_word(&a.word).map_err(|e| Error::Config(format!("{what}: {e}")))?,
                adjacent,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MarkovPartition::new(atoms, cfg.ne_points.iter().map(|&x| wrap01(x)).collect(), cfg.lambda, gens))
}

fn run_markov(ctx: &Ctx, acc: &mut Acc) -> Result<()> {
    let c = ctx.s.markov.as_ref().unwrap();
    let ne = detect_ne(&ctx.gens, c.ne_radius, c.grid, DEFAULT_GROUP_TOL)?;
    for &x in &c.ne_points {
        let hit = ne.candidates.iter().find(|k| circ_dist(k.point, x) <= 1e-7);
        acc.verdicts.push(Verdict {
            claim: format!("{x} is non-expandable"),
            status: if hit.is_some() { Status::Pass } else { Status::Fail },
            value: hit.map(|k| k.max_derivative),
            provenance: prov(Some(c.ne_radius), Some(c.grid), Some(DEFAULT_GROUP_TOL)),
        });
        let star = check_star(&ctx.gens, x, c.star_radius, 0.05);
        acc.verdicts.push(Verdict {
            claim: format!("(★) witnesses at {x}"),
            status: if star.is_ok() { Status::Pass } else { Status::Inconclusive },
            value: None,
            provenance: prov(Some(c.star_radius), None, Some(1e-9)),
        });
        if let Ok(w) = star {
            acc.put(
                &format!("star_{x}"),
                serde_json::json!({
                    "plus": ctx.gens.format_word(&w.plus),
                    "minus": ctx.gens.format_word(&w.minus),
                    "plus_repelling": w.plus_repelling,
                    "minus_repelling": w.minus_repelling,
                }),
            )?;
        }
    }
    if ne.degenerate {
        acc.warnings.push("more than half of the grid is non-expandable: degenerate action".into());
    }
    acc.put("ne", &ne)?;
    let p = build_partition(c, &ctx.gens)?;
    let rep = validate_partition(&p, c.grid, c.repel_margin)?;
    for it in &rep.items {
        acc.verdicts.push(verdict(
            format!("partition item ({})", it.item),
            it.pass,
            Some(it.worst_value),
            prov(None, Some(c.grid), Some(p.endpoint_tol)),
        ));
    }
    let mut w = csv::Writer::from_writer(acc.file(ctx, "markov_items.csv")?);
    w.write_record(["item", "pass", "worst_atom", "worst_value"])?;
    for it in &rep.items {
        let atom = it.worst_atom.map(|a| a.to_string()).unwrap_or_default();
        w.write_record([it.item.to_string(), it.pass.to_string(), atom, it.worst_value.to_string()])?;
    }
    w.flush()?;
    let levels = refine_levels(&p, c.levels, crate::markov::DEFAULT_MIN_GAP);
    acc.put("validation", &rep)?;
    acc.put("level_breakpoints", levels.iter().map(|l| l.breakpoints.len()).collect::<Vec<_>>())?;
    Ok(())
}

fn run_expansion(ctx: &Ctx, acc: &mut Acc) -> Result<()> {
    let c = &ctx.s.expansion;
    let m = ctx.s.markov.as_ref().unwrap();
    let p = build_partition(m, &ctx.gens)?;
    // NE points may share an orbit; each orbit point is expanded once.
    let mut xs = Vec::new();
    for &x in &p.ne_points {
        let o = orbit(&ctx.gens, x, c.radius, DEFAULT_ORBIT_TOL, DEFAULT_ORBIT_CAP)?;
        xs.extend(o.points.iter().map(|pt| pt.position));
    }
    xs.sort_by(f64::total_cmp);
    xs.dedup_by(|a, b| circ_dist(*a, *b) <= DEFAULT_ORBIT_TOL);
    if xs.len() > 1 && circ_dist(xs[0], xs[xs.len() - 1]) <= DEFAULT_ORBIT_TOL {
        xs.pop();
    }
    let results = par_map(&xs, |&x| expand_point(&p, &ctx.gens, x, c.max_steps)).into_iter().collect::<Result<Vec<_>>>()?;
    let st = expansion_stats(&results, p.lambda, p.endpoint_tol);
    let pr = || prov(Some(c.radius), None, Some(p.endpoint_tol));
    acc.verdicts.push(verdict("expansion terminates at every orbit point", true, Some(results.len() as f64), pr()));
    acc.verdicts.push(verdict("g_x'(x) ≥ λ^k(x)", st.derivative_growth_ok, None, pr()));
    acc.verdicts.push(verdict("J_x^+ disjoint within each level", st.overlapping_levels.is_empty(), None, pr()));
    acc.verdicts.push(verdict(
        "normalized comparability within e^C0",
        st.comparability_normalized <= st.comparability_normalized_bound * (1.0 + 1e-9),
        Some(st.comparability_normalized),
        pr(),
    ));
    let mut w = csv::Writer::from_writer(acc.file(ctx, "expansion.csv")?);
    w.write_record(["point", "level", "word", "derivative", "j_plus_left", "j_plus_length", "distortion"])?;
    for r in &results {
        w.write_record([
            r.point.to_string(),
            r.level.to_string(),
            r.word_text.clone(),
            r.derivative.to_string(),
            r.j_plus.left.to_string(),
            r.j_plus.length.to_string(),
            r.distortion.to_string(),
        ])?;
    }
    w.flush()?;
    acc.put("stats", &st)?;
    Ok(())
}

fn run_energy(ctx: &Ctx, acc: &mut Acc) -> Result<()> {
    let c = &ctx.s.energy;
    let g = &ctx.gens;
    let x0 = ctx.s.base.x0;
    let stab = point_stabilizer(g, x0, c.stabilizer_radius, c.tol)?;
    if !stab.h.is_empty() {
        acc.verdicts.push(verdict(
            "stabilizer generator has h'(x0) = 1",
            (stab.h_derivative - 1.0).abs() <= 1e-8,
            Some(stab.h_derivative),
            prov(Some(c.stabilizer_radius), None, Some(1e-8)),
        ));
    }
    acc.put("stabilizer", &stab)?;
    let o = orbit(g, x0, c.radius, DEFAULT_ORBIT_TOL, DEFAULT_ORBIT_CAP)?;
    let recs = point_records(g, &o, &stab);
    write_records_csv(&recs, g, acc.file(ctx, "energy.csv")?)?;
    let series = energy_series(g, &o);
    let mut w = csv::Writer::from_writer(acc.file(ctx, "series.csv")?);
    w.write_record(["distance", "shell_size", "increment", "partial_sum"])?;
    for d in 0..=series.radius {
        w.write_record([
            d.to_string(),
            series.shell_sizes[d].to_string(),
            series.increments[d].to_string(),
            series.partial_sums[d].to_string(),
        ])?;
    }
    w.flush()?;
    let pr = |tol: f64| prov(Some(c.radius), None, Some(tol));
    let monotone = series.partial_sums.windows(2).all(|w| w[1] >= w[0]);
    acc.verdicts.push(verdict("energy partial sums nondecreasing", monotone, None, pr(0.0)));
    acc.verdicts.push(Verdict {
        claim: "energy series reaches a plateau".into(),
        status: if series.plateau_radius.is_some() { Status::Pass } else { Status::Inconclusive },
        value: series.partial_sums.last().copied(),
        provenance: pr(crate::endsenergy::PLATEAU_INCREMENT),
    });
    if series.degenerate {
        acc.warnings.push("all energies equal 1: degenerate (isometric) action".into());
    }
    acc.put("series", &series)?;

    // Pairs of ball words with the same image of x0.
    let ball = default_ball(g, c.pair_radius)?;
    let mut imgs: Vec<(f64, &Word)> = ball.words().iter().map(|w| (g.apply_word(w, x0), w)).collect();
    imgs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut pairs = Vec::new();
    for k in 1..imgs.len() {
        if pairs.len() >= c.max_pairs {
            break;
        }
        if circ_dist(imgs[k].0, imgs[k - 1].0) <= c.tol {
            pairs.push((imgs[k - 1].1.clone(), imgs[k].1.clone()));
        }
    }
    let mut e_worst: f64 = 0.0;
    let mut q_worst: f64 = 0.0;
    for (a, b) in &pairs {
        e_worst = e_worst.max(check_energy_pair(g, x0, a, b, f64::INFINITY)?);
        q_worst = q_worst.max(check_q_pair(g, &stab, a, b, f64::INFINITY)?);
    }
    let pp = |tol: f64| prov(Some(c.pair_radius), None, Some(tol));
    if pairs.is_empty() {
        acc.verdicts.push(Verdict {
            claim: "energy well-defined across witness pairs".into(),
            status: Status::Inconclusive,
            value: None,
            provenance: pp(1e-7),
        });
    } else {
        acc.verdicts.push(verdict("energy well-defined across witness pairs", e_worst < 1e-7, Some(e_worst), pp(1e-7)));
        acc.verdicts.push(verdict("Q well-defined mod b across witness pairs", q_worst < 1e-6, Some(q_worst), pp(1e-6)));
    }
    acc.put("witness_pairs", pairs.len())?;

    let inner: Vec<&Word> = o.points.iter().filter(|p| p.distance < c.radius).map(|p| &p.witness).collect();
    let letters = g.letters();
    let inc = par_map(&inner, |w| {
        letters.iter().map(|&l| q_increment_residual(g, &stab, Some(&o), w, l)).fold(0.0, f64::max)
    })
    .into_iter()
    .fold(0.0, f64::max);
    acc.verdicts.push(verdict("Q increment identity", inc < 1e-9, Some(inc), pr(1e-9)));

    let sg = build_schreier(&o, g);
    let mut rays = Vec::new();
    for text in &c.rays {
        let f = g.parse_word(text)?;
        let ray = sg.contracting_ray(&o, g, &f)?;
        let vals: Vec<f64> = ray.iter().map(|&v| recs[v].qmod.unwrap()).collect();
        let lim = end_limit(&vals, stab.b);
        let status = match &lim {
            Ok(l) if l.cauchy => Status::Pass,
            _ => Status::Inconclusive,
        };
        acc.verdicts.push(Verdict {
            claim: format!("Q Cauchy along the ray of {text}"),
            status,
            value: lim.as_ref().ok().map(|l| l.tail),
            provenance: pr(crate::endsenergy::CAUCHY_TAIL),
        });
        rays.push(serde_json::json!({ "word": text, "length": ray.len(), "limit": lim.ok() }));
    }
    acc.put("rays", rays)?;
    Ok(())
}

fn run_duminy(ctx: &Ctx, acc: &mut Acc) -> Result<()> {
    let c = ctx.s.duminy.as_ref().unwrap();
    let g = &ctx.gens;
    let closure = orbit(g, c.seed, c.closure_radius, c.tol, DEFAULT_ORBIT_CAP)?;
    let gaps = detect_gaps(&closure, c.cell, c.min_len)?;
    let mut w = csv::Writer::from_writer(acc.file(ctx, "gaps.csv")?);
    w.write_record(["left", "length"])?;
    for gap in &gaps.gaps {
        w.write_record([gap.left.to_string(), gap.length.to_string()])?;
    }
    w.flush()?;
    let first = gaps.gaps.first().ok_or_else(|| Error::Precondition("no gaps above the length threshold".into()))?;
    let stab = gap_stabilizer(g, first, c.stabilizer_radius, c.slack)?;
    acc.put("gaps_found", gaps.gaps.len())?;
    acc.put("stabilizer", &stab)?;
    let o = orbit(g, stab.base, c.orbit_radius, c.tol, DEFAULT_ORBIT_CAP)?;
    let recs = gap_records(g, &o, &stab)?;
    write_records_csv(&recs, g, acc.file(ctx, "duminy.csv")?)?;
    let pr = |tol: f64| prov(Some(c.orbit_radius), None, Some(tol));
    let a = Word::letter(g.letters()[0]);
    let na = gap_energy(g, &stab, &a)?;
    acc.verdicts.push(verdict(
        format!("N({} J0) is nonzero", g.labels()[0]),
        na.abs() > 1e-6 && (stab.b.abs() - na).abs() > 1e-6,
        Some(na),
        pr(1e-6),
    ));
    let inner: Vec<&Word> = o.points.iter().filter(|p| p.distance < c.orbit_radius).map(|p| &p.witness).collect();
    let letters = g.letters();
    let inc = par_map(&inner, |w| {
        letters
            .iter()
            .map(|&l| nonl_increment_residual(g, &stab, Some(&o), w, l).unwrap_or(f64::INFINITY))
            .fold(0.0, f64::max)
    })
    .into_iter()
    .fold(0.0, f64::max);
    acc.verdicts.push(verdict("N increment identity", inc < 1e-9, Some(inc), pr(1e-9)));
    let sg = build_schreier(&o, g);
    let mut rays = Vec::new();
    for text in &c.rays {
        let f = g.parse_word(text)?;
        let ray = sg.contracting_ray(&o, g, &f)?;
        let vals: Vec<f64> = ray.iter().map(|&v| recs[v].qmod.unwrap()).collect();
        let lim = end_limit(&vals, stab.b);
        acc.verdicts.push(Verdict {
            claim: format!("N Cauchy along the ray of {text}"),
            status: match &lim {
                Ok(l) if l.cauchy => Status::Pass,
                Ok(_) => Status::Fail,
                Err(_) => Status::Inconclusive,
            },
            value: lim.as_ref().ok().map(|l| l.tail),
            provenance: pr(crate::endsenergy::CAUCHY_TAIL),
        });
        rays.push(serde_json::json!({ "word": text, "length": ray.len(), "limit": lim.ok() }));
    }
    acc.put("rays", rays)?;
    Ok(())
}

/// Koenigs chart at the attracting fixed point of the configured word.
pub fn build_chart(cfg: &ChartCfg, gens: &GeneratorSet) -> Result<Chart> {
    let w = gens.parse_word(&cfg.word)?;
    let m = gens.word_map(&w);
    let p = crate::markov::fixed_points(&m, 4096)
        .into_iter()
        .filter(|&x| m.jet_lift(x).d1 < 1.0)
        .min_by(|a, b| m.jet_lift(*a).d1.total_cmp(&m.jet_lift(*b).d1))
        .ok_or_else(|| Error::Precondition(format!("`{}` has no attracting fixed point", cfg.word)))?;
    koenigs_chart(Arc::new(m), p, cfg.n_max, cfg.tol)
}

fn run_holonomy(ctx: &Ctx, acc: &mut Acc) -> Result<()> {
    let cc = ctx.s.chart.as_ref().unwrap();
    let c = &ctx.s.holonomy;
    let chart = build_chart(cc, &ctx.gens)?;
    acc.verdicts.push(verdict(
        "Koenigs conjugacy residual",
        chart.residual() < c.residual_tol,
        Some(chart.residual()),
        prov(None, Some(64), Some(c.residual_tol)),
    ));
    acc.put(
        "chart",
        serde_json::json!({
            "word": cc.word,
            "fixed_point": chart.fixed_point(),
            "multiplier": chart.multiplier(),
            "domain": chart.domain(),
            "residual": chart.residual(),
        }),
    )?;
    let mut rows = Vec::new();
    for text in &c.gammas {
        let gm = ctx.gens.word_map(&ctx.gens.parse_word(text)?);
        let r = projective_holonomy_test(&chart, &gm, c.grid)?;
        acc.verdicts.push(verdict(
            format!("holonomy of {text} is projective in the chart"),
            r.max_abs_schwarzian < c.projective_tol,
            Some(r.max_abs_schwarzian),
            prov(None, Some(c.grid), Some(c.projective_tol)),
        ));
        rows.push(serde_json::json!({ "gamma": text, "report": r }));
    }
    acc.put("holonomy", rows)?;
    Ok(())
}

fn run_atlas(ctx: &Ctx, acc: &mut Acc) -> Result<()> {
    let cc = ctx.s.chart.as_ref().unwrap();
    let c = &ctx.s.atlas;
    let chart = build_chart(cc, &ctx.gens)?;
    let a = build_projective_atlas(&ctx.gens, c.max_charts, &chart, c.radius)?;
    let p = || prov(Some(c.radius), None, Some(c.projective_tol));
    acc.verdicts.push(verdict("atlas transitions are projective", a.overlap_max < c.projective_tol, Some(a.overlap_max), p()));
    acc.verdicts.push(verdict(
        "generators are projective in the atlas",
        a.generator_max < c.projective_tol,
        Some(a.generator_max),
        p(),
    ));
    acc.put("atlas", &a)?;
    Ok(())
}

fn run_discreteness(ctx: &Ctx, acc: &mut Acc) -> Result<()> {
    let c = ctx.s.discreteness.as_ref().unwrap();
    let g = &ctx.gens;
    let x0 = ctx.s.base.x0;
    let mut frontier = Vec::new();
    for &n in &c.frontier_radii {
        let b = default_ball(g, n)?;
        frontier.push(frontier_stats(g, b.words(), x0, DEFAULT_GROUP_TOL)?);
    }
    acc.put("frontier", &frontier)?;
    let z = c.z.iter().map(|t| g.parse_word(t)).collect::<Result<Vec<_>>>()?;
    let block = factor_block(g, &c.g1, &z, c.r1)?;
    let sigma = g.parse_word(&c.sigma)?;
    let psi = g.parse_word(&c.psi)?;
    let fams = c
        .n
        .iter()
        .map(|&n| build_family(g, &block, c.r1, &sigma, n, &psi, x0, c.grid, c.cap))
        .collect::<Result<Vec<_>>>()?;
    let rows = sufficient_estimate_report(g, &fams, x0, DEFAULT_GROUP_TOL)?;
    write_estimate_csv(&rows, acc.file(ctx, "estimate.csv")?)?;
    for f in &fams {
        let within = f.a.iter().all(|w| w.len() <= f.length_bound);
        acc.verdicts.push(verdict(
            format!("A({}) inside the ball of radius n(R1 + |σ|)", f.n),
            within,
            Some(f.rho_a as f64),
            prov(Some(f.length_bound), None, None),
        ));
        if f.n <= 4 {
            acc.verdicts.push(verdict(
                format!("conjugation lower bound at n = {}", f.n),
                f.s_conj >= f.conj_lower_bound * (1.0 - 1e-12),
                Some(f.s_conj),
                prov(None, Some(f.grid), None),
            ));
        }
    }
    let decays = rows.windows(2).all(|w| w[1].ratio < w[0].ratio);
    acc.verdicts.push(Verdict {
        claim: "criterion ratio ρc/S decreases along the families".into(),
        status: if rows.len() < 2 {
            Status::Inconclusive
        } else if decays {
            Status::Pass
        } else {
            Status::Fail
        },
        value: rows.last().map(|r| r.ratio),
        provenance: prov(rows.last().map(|r| r.rho), Some(c.grid), Some(DEFAULT_GROUP_TOL)),
    });
    acc.put("families", &fams)?;
    acc.put("estimates", &rows)?;
    Ok(())
}

fn run_probe(ctx: &Ctx, acc: &mut Acc) -> Result<()> {
    let c = ctx.s.probe.as_ref().unwrap();
    let g = &ctx.gens;
    let f1 = g.word_map(&g.parse_word(&c.f1)?);
    let f2 = g.word_map(&g.parse_word(&c.f2)?);
    let iv = Interval::new(c.interval[0], c.interval[1])?;
    let cfg = ProbeConfig { steps: c.steps, eps0: c.eps0, enlarge: c.enlarge, grid: c.grid, identity_tol: c.identity_tol };
    let r = commutator_probe(&f1, &f2, &iv, &cfg)?;
    let mut w = csv::Writer::from_writer(acc.file(ctx, "probe.csv")?);
    w.write_record(["k", "word_len", "c0", "c1"])?;
    for s in &r.steps {
        w.write_record([s.k.to_string(), s.word_len.to_string(), s.c0.to_string(), s.c1.to_string()])?;
    }
    w.flush()?;
    let status = match r.verdict {
        ProbeVerdict::Converging | ProbeVerdict::Trivialized { .. } => Status::Pass,
        ProbeVerdict::NonConverging => Status::Fail,
        ProbeVerdict::Inconclusive => Status::Inconclusive,
    };
    acc.verdicts.push(Verdict {
        claim: "iterated commutators approach the identity on I".into(),
        status,
        value: r.steps.last().map(|s| s.c1),
        provenance: prov(Some(c.steps), Some(c.grid), Some(c.eps0)),
    });
    if let Some(e) = &r.escape {
        acc.warnings.push(format!("probe aborted: {e}"));
    }
    acc.put("probe", &r)?;
    Ok(())
}
