use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use circles_core::eval::{match_circles, mean_stderr, Metric};
use circles_core::extensions::{fit_seeded, predict_memberships, NewNode, SeedSet};
use circles_core::io::{load_circles, load_ego_network, parse_circles, write_ego_network, LoadedEgo};
use circles_core::mcmc::{fit_mcmc, AnnealSchedule, McmcState};
use circles_core::synth::{generate, summarize, PlantedSpec};
use circles_core::trainer::{fit as fit_coordinate, fit_k};
use circles_core::{CircleAssignment, EdgeFeatureCache, EgoNetwork, FeatureScheme, FitConfig, KChoice, NodeId};
use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::output::{emit, emit_plot_data, emit_rows, to_json, write_atomic, FitOutput, Observation};
use crate::{
    thread_cap, BenchArgs, CliError, Command, Engine, EvalArgs, FitArgs, KArg, MaintainArgs, ModelArgs, SeedArgs, SeedSweepArgs,
    SynthArgs,
};

type Result<T> = std::result::Result<T, CliError>;

/// Above this many nodes pair features are computed on demand instead of
/// stored.
const MATERIALIZE_LIMIT: usize = 2000;

pub(crate) fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Fit(a) => fit(a),
        Command::Eval(a) => eval(a),
        Command::Maintain(a) => maintain(a),
        Command::Seed(a) => seed(a),
        Command::Synth(a) => synth(a),
        Command::Bench(a) => bench(a),
        Command::SeedSweep(a) => seed_sweep(a),
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| {
        circles_core::Error::Io {
            path: path.to_path_buf(),
            source,
        }
        .into()
    })
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn cache<'p>(loaded: &'p LoadedEgo, scheme: FeatureScheme) -> EdgeFeatureCache<'p> {
    if loaded.network.len() <= MATERIALIZE_LIMIT {
        EdgeFeatureCache::materialized(&loaded.profiles, scheme)
    } else {
        EdgeFeatureCache::lazy(&loaded.profiles, scheme)
    }
}

fn fit_config(m: &ModelArgs, k: KChoice, k_max: usize) -> FitConfig {
    FitConfig {
        k,
        lambda: m.lambda,
        max_outer_iters: m.max_iters,
        seed: m.seed,
        k_max,
        ..FitConfig::default()
    }
}

fn fit(a: FitArgs) -> Result<()> {
    let k = match a.k {
        KArg::Auto => KChoice::Auto,
        KArg::Fixed(k) => KChoice::Fixed(k),
    };
    if a.engine == Engine::Mcmc && k == KChoice::Auto {
        return Err(CliError::Usage("--engine mcmc needs an explicit --k".into()));
    }
    if a.ego.len() > 1 && a.out_dir.is_none() {
        return Err(CliError::Usage("several --ego values need --out-dir".into()));
    }
    let schedule = AnnealSchedule {
        t0: a.t0,
        decay: a.decay,
        sweeps: a.sweeps,
        param_every: a.param_every,
    };
    if a.engine == Engine::Mcmc {
        schedule.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let cfg = fit_config(&a.model, k, a.k_max);
    let run_one = |ego: &str| -> Result<FitOutput> {
        let loaded = load_ego_network(&a.model.dir, ego, a.model.directed)?;
        let features = cache(&loaded, a.model.features);
        let start = Instant::now();
        let result = match (a.engine, k) {
            (Engine::Mcmc, KChoice::Fixed(k)) => fit_mcmc(&loaded.network, &features, k, &cfg, &schedule)?,
            _ => fit_coordinate(&loaded.network, &features, &cfg)?,
        };
        info!("ego {ego}: {} circles in {:.2?}", result.circles.non_empty().len(), start.elapsed());
        Ok(FitOutput::new(&loaded.network, &result, a.model.features))
    };

    let Some(out_dir) = &a.out_dir else {
        return emit(a.out.as_deref(), &to_json(&run_one(&a.ego[0])?));
    };
    let next = AtomicUsize::new(0);
    let errors = Mutex::new(Vec::new());
    let workers = thread_cap()?.min(a.ego.len());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(ego) = a.ego.get(i) else { break };
                let done = run_one(ego).and_then(|out| write_atomic(&out_dir.join(format!("{ego}.fit.json")), &to_json(&out)));
                if let Err(e) = done {
                    errors.lock().unwrap().push((i, e));
                }
            });
        }
    });
    let mut errors = errors.into_inner().unwrap();
    errors.sort_by_key(|(i, _)| *i);
    match errors.into_iter().next() {
        Some((i, e)) => Err(CliError::Data(format!("ego {}: {e}", a.ego[i]))),
        None => Ok(()),
    }
}

/// Circles of a prediction file: a fit JSON or a `.circles` file.
#[derive(Deserialize)]
struct PredFile {
    circles: Vec<Vec<NodeId>>,
    features: Option<FeatureScheme>,
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "json")
}

/// Ids listed in `.circles` text, skipping each line's circle name.
fn circle_file_ids(path: &Path, text: &str, ids: &mut BTreeSet<NodeId>) -> Result<()> {
    for (ln, line) in text.lines().enumerate() {
        let fields: Vec<&str> = if line.contains('\t') {
            line.split('\t').map(str::trim).filter(|f| !f.is_empty()).collect()
        } else {
            line.split_whitespace().collect()
        };
        for tok in fields.iter().skip(1) {
            let id = tok
                .parse()
                .map_err(|_| CliError::Data(format!("{}:{}: bad node id {tok:?}", path.display(), ln + 1)))?;
            ids.insert(id);
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct EvalRow {
    network: String,
    k_pred: Option<usize>,
    k_truth: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ber: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    f1: Option<f64>,
}

fn eval(a: EvalArgs) -> Result<()> {
    if a.pred.len() != a.truth.len() {
        return Err(CliError::Usage(format!(
            "{} --pred files but {} --truth files",
            a.pred.len(),
            a.truth.len()
        )));
    }
    let metrics: Vec<Metric> = match a.metric {
        Some(m) => vec![m],
        None => vec![Metric::Ber, Metric::F1],
    };
    let mut rows = Vec::new();
    let mut observations = Vec::new();
    let mut per_metric: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (pred_path, truth_path) in a.pred.iter().zip(&a.truth) {
        let truth_text = read_text(truth_path)?;
        let mut ids = BTreeSet::new();
        circle_file_ids(truth_path, &truth_text, &mut ids)?;
        let (pred_json, pred_text) = if is_json(pred_path) {
            let p: PredFile = read_json(pred_path)?;
            ids.extend(p.circles.iter().flatten().copied());
            (Some(p), None)
        } else {
            let text = read_text(pred_path)?;
            circle_file_ids(pred_path, &text, &mut ids)?;
            (None, Some(text))
        };
        // Scores only compare node sets, so the universe is every id seen.
        let universe = EgoNetwork::new(ids.into_iter().collect::<Vec<_>>(), Vec::<(NodeId, NodeId)>::new(), false)?;
        let truth = parse_circles(truth_path, &truth_text, &universe)?;
        let (pred, scheme) = match (pred_json, pred_text) {
            (Some(p), _) => {
                let named: Vec<(String, Vec<NodeId>)> =
                    p.circles.into_iter().enumerate().map(|(k, c)| (k.to_string(), c)).collect();
                (CircleAssignment::from_id_sets(&universe, &named)?, p.features.map_or("unknown", |s| s.name()))
            }
            (None, Some(text)) => (parse_circles(pred_path, &text, &universe)?, "unknown"),
            (None, None) => unreachable!(),
        };
        let network = truth_path.file_stem().map_or_else(|| truth_path.display().to_string(), |s| s.to_string_lossy().into_owned());
        let mut row = EvalRow {
            network: network.clone(),
            k_pred: Some(pred.k()),
            k_truth: Some(truth.k()),
            ber: None,
            f1: None,
        };
        for &m in &metrics {
            let score = match_circles(&pred, &truth, m, a.strict).score;
            match m {
                Metric::Ber => row.ber = Some(score),
                Metric::F1 => row.f1 = Some(score),
            }
            per_metric.entry(m.name()).or_default().push(score);
            observations.push(Observation {
                dataset: network.clone(),
                scheme: scheme.into(),
                metric: m.name().into(),
                param: String::new(),
                value: score,
            });
        }
        rows.push(row);
    }
    if rows.len() > 1 {
        let stat = |name: &str, pick: fn((f64, f64)) -> f64| EvalRow {
            network: name.into(),
            k_pred: None,
            k_truth: None,
            ber: per_metric.get("ber").and_then(|v| mean_stderr(v)).map(pick),
            f1: per_metric.get("f1").and_then(|v| mean_stderr(v)).map(pick),
        };
        rows.push(stat("mean", |(m, _)| m));
        rows.push(stat("stderr", |(_, s)| s));
    }
    emit_rows(a.out.as_deref(), &rows)?;
    if let Some(path) = &a.plot_data {
        emit_rows(Some(path), &emit_plot_data(&observations)?)?;
    }
    Ok(())
}

fn parse_new_node(path: &Path, network: &EgoNetwork, leaves: usize) -> Result<NewNode> {
    let text = read_text(path)?;
    let bad = |ln: usize, msg: String| CliError::Data(format!("{}:{ln}: {msg}", path.display()));
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
    let (ln, first) = lines.next().ok_or_else(|| bad(1, "missing feature line".into()))?;
    let features = first
        .split_whitespace()
        .map(|t| match t {
            "0" => Ok(0),
            "1" => Ok(1),
            _ => Err(bad(ln, format!("feature value {t:?} is not 0 or 1"))),
        })
        .collect::<Result<Vec<u8>>>()?;
    if features.len() != leaves {
        return Err(bad(ln, format!("{} feature values, expected {leaves}", features.len())));
    }
    let mut node = NewNode {
        features,
        ..NewNode::default()
    };
    for (ln, line) in lines {
        let mut toks = line.split_whitespace().peekable();
        let incoming = toks.peek() == Some(&"in");
        if incoming {
            toks.next();
            if !network.is_directed() {
                return Err(bad(ln, "\"in\" edges need a directed network".into()));
            }
        }
        for t in toks {
            let id: NodeId = t.parse().map_err(|_| bad(ln, format!("bad node id {t:?}")))?;
            let i = network.index_of(id).ok_or_else(|| bad(ln, format!("unknown node id {id}")))?;
            if incoming {
                node.in_edges.push(i);
            } else {
                node.out_edges.push(i);
            }
        }
    }
    Ok(node)
}

#[derive(Serialize)]
struct Maintained {
    /// Membership of the new friend in each circle of the model.
    memberships: Vec<bool>,
    /// Indices of the circles they join.
    circles: Vec<usize>,
}

fn maintain(a: MaintainArgs) -> Result<()> {
    let model: FitOutput = read_json(&a.model)?;
    let loaded = load_ego_network(&a.dir, &a.ego, model.directed)?;
    let params = model.params()?;
    let dim = model.features.dim(&loaded.profiles);
    if params.dim() != dim {
        return Err(CliError::Data(format!(
            "model weights have dimension {}, but {} features of this ego have dimension {dim}",
            params.dim(),
            model.features
        )));
    }
    let circles = model.assignment(&loaded.network)?;
    let node = parse_new_node(&a.new_node, &loaded.network, loaded.profiles.leaf_count())?;
    let memberships = predict_memberships(&node, &loaded.network, &loaded.profiles, model.features, &circles, &params)?;
    let joined = (0..memberships.len()).filter(|&k| memberships[k]).collect();
    emit(
        a.out.as_deref(),
        &to_json(&Maintained {
            memberships,
            circles: joined,
        }),
    )
}

fn seed(a: SeedArgs) -> Result<()> {
    // Circles are ordered by name.
    let named: BTreeMap<String, Vec<NodeId>> = read_json(&a.seeds)?;
    if named.is_empty() {
        return Err(CliError::Data(format!("{}: no circles given", a.seeds.display())));
    }
    let loaded = load_ego_network(&a.model.dir, &a.ego, a.model.directed)?;
    let features = cache(&loaded, a.model.features);
    let seeds = SeedSet::new(named.into_values().collect());
    let cfg = fit_config(&a.model, KChoice::Fixed(seeds.k()), seeds.k());
    let result = fit_seeded(&loaded.network, &features, &seeds, &cfg)?;
    emit(a.out.as_deref(), &to_json(&FitOutput::new(&loaded.network, &result, a.model.features)))
}

fn synth(a: SynthArgs) -> Result<()> {
    let spec: PlantedSpec = read_json(&a.spec)?;
    let planted = generate(&spec)?;
    write_ego_network(&a.out_dir, &a.ego, &planted.network, &planted.profiles, Some(&planted.circles))?;
    emit(None, &to_json(&summarize(&planted.network, &planted.circles)))
}

#[derive(Serialize)]
struct BenchRow {
    engine: &'static str,
    n: usize,
    k: usize,
    edges: usize,
    /// Occupied node types (mcmc only).
    types: Option<usize>,
    iterations: usize,
    seconds: f64,
    seconds_per_iteration: f64,
}

fn bench(a: BenchArgs) -> Result<()> {
    if a.sizes.is_empty() || a.sweeps == 0 || a.k == 0 {
        return Err(CliError::Usage("bench needs sizes, --sweeps > 0 and --k > 0".into()));
    }
    let mut rows = Vec::new();
    for &n in &a.sizes {
        let planted = generate(&PlantedSpec {
            n,
            k: a.k,
            seed: a.seed,
            ..PlantedSpec::default()
        })?;
        let scheme = FeatureScheme::Phi1;
        let (types, iterations, seconds) = match a.engine {
            Engine::Mcmc => {
                let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
                let mut state = McmcState::new(&planted.network, &planted.profiles, scheme, &planted.circles, planted.params.clone())?;
                state.sweep(1.0, &mut rng);
                let start = Instant::now();
                for _ in 0..a.sweeps {
                    state.sweep(1.0, &mut rng);
                }
                (Some(state.table().len()), a.sweeps, start.elapsed().as_secs_f64())
            }
            Engine::Coordinate => {
                let features = EdgeFeatureCache::lazy(&planted.profiles, scheme);
                let cfg = FitConfig {
                    max_outer_iters: a.sweeps,
                    seed: a.seed,
                    ..FitConfig::with_k(a.k)
                };
                let start = Instant::now();
                let fit = fit_k(&planted.network, &features, a.k, &cfg)?;
                (None, fit.iterations, start.elapsed().as_secs_f64())
            }
        };
        info!("n = {n}: {seconds:.3}s");
        rows.push(BenchRow {
            engine: match a.engine {
                Engine::Mcmc => "mcmc",
                Engine::Coordinate => "coordinate",
            },
            n,
            k: a.k,
            edges: planted.network.edge_count(),
            types,
            iterations,
            seconds,
            seconds_per_iteration: seconds / iterations.max(1) as f64,
        });
    }
    emit_rows(a.out.as_deref(), &rows)
}

/// Seeded fits scored against the circles that were seeded. With `S > 0`
/// predicted circle `j` is scored against target `j` directly; with no
/// seeds the optimal matching to the same targets is used.
fn seed_sweep(a: SeedSweepArgs) -> Result<()> {
    if a.k == 0 || a.trials == 0 || a.seeds_per_circle.is_empty() {
        return Err(CliError::Usage("seed-sweep needs --k > 0, --trials > 0 and seed counts".into()));
    }
    let loaded = load_ego_network(&a.model.dir, &a.ego, a.model.directed)?;
    let truth_path: PathBuf = a.truth.clone().unwrap_or_else(|| a.model.dir.join(format!("{}.circles", a.ego)));
    let truth = load_circles(&truth_path, &loaded.network)?;
    let features = cache(&loaded, a.model.features);
    let max_s = a.seeds_per_circle.iter().copied().max().unwrap_or(0);
    let eligible: Vec<usize> = (0..truth.k()).filter(|&k| truth.size(k) > 0 && truth.size(k) >= max_s).collect();
    if eligible.len() < a.k {
        return Err(CliError::Data(format!(
            "only {} ground-truth circles have at least {max_s} members; {} needed",
            eligible.len(),
            a.k
        )));
    }
    let mut observations = Vec::new();
    for t in 0..a.trials {
        let trial_seed = a.model.seed.wrapping_add(t as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
        let targets: Vec<usize> = eligible.choose_multiple(&mut rng, a.k).copied().collect();
        let target = truth.select(&targets);
        let members: Vec<Vec<NodeId>> = (0..a.k)
            .map(|j| {
                let mut m: Vec<NodeId> = target.members(j).into_iter().map(|i| loaded.network.id(i)).collect();
                m.shuffle(&mut rng);
                m
            })
            .collect();
        let cfg = FitConfig {
            seed: trial_seed,
            ..fit_config(&a.model, KChoice::Fixed(a.k), a.k)
        };
        for &s in &a.seeds_per_circle {
            let score = if s == 0 {
                let fit = fit_k(&loaded.network, &features, a.k, &cfg)?;
                match_circles(&fit.circles, &target, a.metric, false).score
            } else {
                let seeds = SeedSet::new(members.iter().map(|m| m[..s].to_vec()).collect());
                let fit = fit_seeded(&loaded.network, &features, &seeds, &cfg)?;
                (0..a.k).map(|j| a.metric.score(fit.circles.mask(j), target.mask(j)).value).sum::<f64>() / a.k as f64
            };
            observations.push(Observation {
                dataset: format!("{}/trial{t}", a.ego),
                scheme: a.model.features.name().into(),
                metric: a.metric.name().into(),
                param: format!("seeds={s}"),
                value: score,
            });
        }
    }
    emit_rows(a.out.as_deref(), &emit_plot_data(&observations)?)
}
