use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{anyhow, Context};

use pivotmatch::evaluation::{anonymize, generate_instance, synthetic_instance, Bundle, EvalError, SyntheticSpec};
use pivotmatch::gateway::{ChatTransport, HttpTransport};
use pivotmatch::{
    apply_unpivot, build_matrix, load_table, run_search, score, EmbeddingProvider, Gateway, GatewayConfig,
    GroundTruth, HashingEmbedder, HttpEmbedder, MatchError, Matcher, MockScript, MockTransport, SearchConfig,
    SearchError, Table, UnpivotOperator,
};

use crate::config::FileConfig;
use crate::output::{metrics_json, MatchOutput, Stats};
use crate::{EmbedArgs, EmbedderKind, EvalArgs, Failure, GenArgs, Kind, MatchArgs, SimArgs, Tag, TableArgs};

const DEFAULT_EMBEDDING_MODEL: &str = "text-embedding-3-small";

fn required(flag: Option<PathBuf>, file: &Option<PathBuf>, name: &str) -> Result<PathBuf, Failure> {
    flag.or_else(|| file.clone())
        .ok_or_else(|| anyhow!("missing --{name} (or paths.{} in the config file)", name.replace('-', "_")))
        .tag(Kind::Config)
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .tag(Kind::Io)
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)
                    .with_context(|| format!("creating {}", dir.display()))
                    .tag(Kind::Io)?;
            }
            fs::write(p, text).with_context(|| format!("writing {}", p.display())).tag(Kind::Io)
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load(csv: &Path, desc: Option<&Path>, name: &str) -> Result<Table, Failure> {
    let text = read(csv)?;
    let desc = desc.map(read).transpose()?;
    load_table(&text, desc.as_deref(), name)
        .with_context(|| format!("loading {}", csv.display()))
        .tag(Kind::Io)
}

fn load_pair(t: TableArgs, file: &FileConfig) -> Result<(Table, Table), Failure> {
    let source = required(t.source, &file.paths.source, "source")?;
    let target = required(t.target, &file.paths.target, "target")?;
    let sd = t.source_desc.or_else(|| file.paths.source_desc.clone());
    let td = t.target_desc.or_else(|| file.paths.target_desc.clone());
    Ok((
        load(&source, sd.as_deref(), "source")?,
        load(&target, td.as_deref(), "target")?,
    ))
}

fn gateway_config(a: &MatchArgs, file: &FileConfig) -> GatewayConfig {
    let d = GatewayConfig::default();
    let g = &file.gateway;
    GatewayConfig {
        endpoint_url: a.endpoint.clone().or_else(|| g.endpoint.clone()).unwrap_or(d.endpoint_url),
        model_name: a.model.clone().or_else(|| g.model.clone()).unwrap_or(d.model_name),
        api_key_env_var: g.api_key_env.clone().unwrap_or(d.api_key_env_var),
        timeout: g.timeout_secs.map(Duration::from_secs).unwrap_or(d.timeout),
        max_retries: g.max_retries.unwrap_or(d.max_retries),
        ..d
    }
}

fn embedder(arg: &EmbedArgs, file: &FileConfig, gw: &GatewayConfig) -> Result<Arc<dyn EmbeddingProvider>, Failure> {
    let kind = match (arg.embedder, file.embedder.kind.as_deref()) {
        (Some(k), _) => k,
        (None, None | Some("local")) => EmbedderKind::Local,
        (None, Some("remote")) => EmbedderKind::Remote,
        (None, Some(other)) => {
            return Err(anyhow!("embedder.kind must be \"local\" or \"remote\", got {other:?}")).tag(Kind::Config)
        }
    };
    match kind {
        EmbedderKind::Local => Ok(Arc::new(HashingEmbedder)),
        EmbedderKind::Remote => {
            let endpoint = file
                .embedder
                .endpoint
                .clone()
                .unwrap_or_else(|| gw.endpoint_url.replace("chat/completions", "embeddings"));
            let model = file.embedder.model.clone().unwrap_or_else(|| DEFAULT_EMBEDDING_MODEL.into());
            let key = std::env::var(&gw.api_key_env_var).ok().filter(|k| !k.is_empty());
            let e = HttpEmbedder::new(endpoint, model, key, gw.timeout).tag(Kind::Config)?;
            Ok(Arc::new(e))
        }
    }
}

fn search_config(a: &MatchArgs, file: &FileConfig) -> SearchConfig {
    let d = file.search_defaults();
    SearchConfig {
        epsilon_random: a.epsilon.unwrap_or(d.epsilon_random),
        uct_constant: a.uct_c.unwrap_or(d.uct_constant),
        uct_epsilon: a.uct_eps.unwrap_or(d.uct_epsilon),
        max_children: a.max_children.unwrap_or(d.max_children),
        iterations: a.iterations.unwrap_or(d.iterations),
        workers: a.workers.unwrap_or(d.workers),
        rng_seed: a.seed.unwrap_or(d.rng_seed),
    }
}

fn search_failure(e: SearchError) -> Failure {
    let kind = match &e {
        SearchError::Config(_) => Kind::Config,
        SearchError::Gateway(_) | SearchError::Match(MatchError::Provider(_)) => Kind::Gateway,
        SearchError::Match(_) => Kind::Internal,
    };
    Failure {
        kind,
        error: e.into(),
    }
}

pub fn cmd_match(a: MatchArgs, file: &FileConfig) -> Result<(), Failure> {
    let cfg = search_config(&a, file);
    cfg.validate().map_err(search_failure)?;
    let gw_cfg = gateway_config(&a, file);
    let embed = embedder(&a.embed, file, &gw_cfg)?;
    let out = a.out.clone().or_else(|| file.paths.out.clone());
    let mock = a.mock.clone().or_else(|| file.gateway.mock.clone());
    let (source, target) = load_pair(a.tables, file)?;

    let transport: Arc<dyn ChatTransport> = match &mock {
        Some(path) => {
            let script = MockScript::from_json(&read(path)?)
                .with_context(|| format!("parsing mock script {}", path.display()))
                .tag(Kind::Config)?;
            Arc::new(MockTransport::new(script))
        }
        None => Arc::new(HttpTransport::from_config(&gw_cfg).tag(Kind::Config)?),
    };
    let gateway = Gateway::new(transport, gw_cfg);
    let (source, target) = (Arc::new(source), Arc::new(target));
    let matcher = Matcher::new(source.clone(), target.clone(), embed);

    let started = Instant::now();
    let result = run_search(&source, &target, &cfg, &gateway, &matcher).map_err(search_failure)?;
    let elapsed_ms = if a.deterministic {
        0
    } else {
        started.elapsed().as_millis() as u64
    };
    for f in &result.failures {
        tracing::warn!("{f}");
    }
    tracing::info!(
        reward = result.best.reward(),
        nodes = result.tree_stats.node_count,
        llm_calls = result.tree_stats.llm_call_count,
        "search finished"
    );
    let doc = MatchOutput::new(
        &result.best,
        Stats {
            llm_calls: result.tree_stats.llm_call_count,
            nodes: result.tree_stats.node_count,
            elapsed_ms,
        },
    );
    let text = serde_json::to_string_pretty(&doc).tag(Kind::Internal)? + "\n";
    write_or_print(out.as_deref(), &text)
}

pub fn cmd_eval(a: EvalArgs, file: &FileConfig) -> Result<(), Failure> {
    let gt_path = required(a.ground_truth, &file.paths.ground_truth, "ground-truth")?;
    let result_path = required(a.result, &file.paths.result, "result")?;
    let out = a.out.or_else(|| file.paths.out.clone());
    let (source, target) = load_pair(a.tables, file)?;
    let gt = GroundTruth::from_json(&read(&gt_path)?)
        .with_context(|| format!("parsing {}", gt_path.display()))
        .tag(Kind::Config)?;
    let result: MatchOutput = serde_json::from_str(&read(&result_path)?)
        .with_context(|| format!("parsing {}", result_path.display()))
        .tag(Kind::Config)?;
    let report = score(&gt, &result.prediction(), &source, &target)
        .context("result and ground truth do not fit the tables")
        .tag(Kind::Config)?;
    write_or_print(out.as_deref(), &metrics_json(&report))
}

pub fn cmd_gen(a: GenArgs, file: &FileConfig) -> Result<(), Failure> {
    let dir = required(a.out, &file.paths.out, "out")?;
    let seed = a.seed.unwrap_or(file.search_defaults().rng_seed);
    let (mut source, mut target, ground_truth) = match &a.tidy {
        Some(path) => {
            let tidy = load(path, None, "tidy")?;
            let spread = a.spread.as_deref().expect("clap enforces --spread");
            let value = a.value.as_deref().expect("clap enforces --value");
            let keys: Vec<String> = tidy
                .attributes()
                .iter()
                .filter(|x| x.as_str() != spread && x.as_str() != value)
                .cloned()
                .collect();
            generate_instance(&tidy, &keys, spread, value, seed).map_err(|e| Failure {
                kind: match e {
                    EvalError::Io { .. } => Kind::Io,
                    _ => Kind::Config,
                },
                error: e.into(),
            })?
        }
        None => synthetic_instance(&SyntheticSpec {
            entities: a.entities,
            metrics: a.metrics,
            seed,
        }),
    };
    if !a.anonymize.is_empty() {
        let pick = |t: &Table| -> Vec<String> {
            a.anonymize.iter().filter(|x| t.index_of(x).is_some()).cloned().collect()
        };
        for x in &a.anonymize {
            if source.index_of(x).is_none() && target.index_of(x).is_none() {
                return Err(anyhow!("--anonymize names unknown attribute {x:?}")).tag(Kind::Config);
            }
        }
        source = anonymize(&source, &pick(&source), seed).tag(Kind::Internal)?;
        target = anonymize(&target, &pick(&target), seed).tag(Kind::Internal)?;
    }
    if let Some(path) = &a.mock_out {
        let g = ground_truth.generated_targets.as_ref();
        let set: Vec<&str> = ground_truth.unpivot_set.iter().map(String::as_str).collect();
        let script = MockScript::always_propose(
            &set,
            g.map_or("Metric", |g| g.var.as_str()),
            g.map_or("Value", |g| g.value.as_str()),
        );
        let text = serde_json::to_string_pretty(&script).tag(Kind::Internal)? + "\n";
        write_or_print(Some(path), &text)?;
    }
    let bundle = Bundle {
        source,
        target,
        ground_truth,
    };
    bundle
        .write(&dir)
        .with_context(|| format!("writing bundle {}", dir.display()))
        .tag(Kind::Io)?;
    tracing::info!(dir = %dir.display(), "bundle written");
    Ok(())
}

pub fn cmd_sim(a: SimArgs, file: &FileConfig) -> Result<(), Failure> {
    let out = a.out.clone().or_else(|| file.paths.out.clone());
    let gw = GatewayConfig {
        endpoint_url: file
            .gateway
            .endpoint
            .clone()
            .unwrap_or_else(|| GatewayConfig::default().endpoint_url),
        ..GatewayConfig::default()
    };
    let embed = embedder(&a.embed, file, &gw)?;
    let (source, target) = load_pair(a.tables, file)?;
    let source = if a.unpivot.is_empty() {
        source
    } else {
        let op = UnpivotOperator::new(a.unpivot.clone(), a.var_name.clone(), a.value_name.clone());
        apply_unpivot(&source, &op).tag(Kind::Config)?
    };
    let m = build_matrix(&source, &target, embed.as_ref()).tag(Kind::Gateway)?;
    write_or_print(out.as_deref(), &m.to_csv())
}
