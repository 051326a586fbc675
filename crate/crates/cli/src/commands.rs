use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use acnn::checkpoint;
use acnn::datasets::{
    parse_split_csv, split_random, split_scaffold, split_stratified, split_temporal, SplitKind, SplitResult,
};
use acnn::featurize::{atom_type_conv, radial_pool, AtomTypeVocabulary, RadialFilterParams};
use acnn::geometry::{build_neighbor_context, merge_systems};
use acnn::parallel::{configure_threads, Exec};
use acnn::structio::{atomic_number_to_symbol, load_structure, parse_index, read_text, ComplexRecord};
use acnn::train::{
    derive_vocabulary, kcal_to_log_ki, load_examples, metrics, predict_all, predict_dg, prepare_examples, train_from,
    HistoryRow, Metrics, ModelParams, TrainingExample,
};
use serde_json::json;

use crate::config::RunConfig;
use crate::error::{CliError, EXIT_SHAPE};

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    write_file(
        path,
        serde_json::to_string_pretty(value).expect("json values serialize") + "\n",
    )
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

fn exec_for(cfg: &RunConfig) -> Exec {
    configure_threads(cfg.threads);
    if cfg.deterministic {
        Exec::Serial
    } else {
        Exec::Parallel
    }
}

struct Index {
    records: Vec<ComplexRecord>,
    base: PathBuf,
}

fn load_index(cfg: &RunConfig) -> Result<Index, CliError> {
    let path = cfg
        .index
        .as_ref()
        .ok_or_else(|| CliError::config("no index given (set `index` or pass --index)"))?;
    let records = parse_index(&read_text(path)?).map_err(|e| CliError::from(e).context(path))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(Index { records, base })
}

fn compute_split(cfg: &RunConfig, index: &Index) -> Result<SplitResult, CliError> {
    let recs = &index.records;
    Ok(match cfg.split_kind {
        SplitKind::Random => split_random(recs, cfg.ratio, cfg.split_seed)?,
        SplitKind::Stratified => split_stratified(recs, cfg.ratio, cfg.split_seed)?,
        SplitKind::Temporal => split_temporal(recs, cfg.ratio)?,
        SplitKind::Scaffold => {
            let mut graphs = HashMap::new();
            for r in recs {
                let (_, graph) = load_structure(&index.base.join(&r.ligand_path)).map_err(|e| e.with_record(&r.id))?;
                if let Some(g) = graph {
                    graphs.insert(r.id.clone(), g);
                }
            }
            split_scaffold(recs, &graphs, cfg.ratio)?
        }
    })
}

/// Write the split CSV and its provenance JSON. `source` names the split
/// file the assignment was read from, if any.
fn write_split(
    cfg: &RunConfig,
    index: &Index,
    split: &SplitResult,
    source: Option<&Path>,
    out: &Path,
) -> Result<(), CliError> {
    write_file(out, split.to_csv(index.records.iter().map(|r| r.id.as_str())))?;
    let kind = match source {
        Some(_) => "file".to_string(),
        None => cfg.split_kind.to_string(),
    };
    let provenance = json!({
        "kind": kind,
        "source": source.map(|p| p.display().to_string()),
        "seed": cfg.split_seed,
        "ratio": cfg.ratio,
        "index": cfg.index.as_ref().map(|p| p.display().to_string()),
        "counts": {
            "total": index.records.len(),
            "train": split.train_ids.len(),
            "test": split.test_ids.len(),
        },
    });
    write_json(&out.with_extension("json"), &provenance)
}

pub fn split(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let index = load_index(cfg)?;
    let split = compute_split(cfg, &index)?;
    write_split(cfg, &index, &split, None, out)?;
    eprintln!(
        "{} split: {} train, {} test -> {}",
        cfg.split_kind,
        split.train_ids.len(),
        split.test_ids.len(),
        out.display()
    );
    Ok(())
}

/// Records of each subset in index order. Every id of the split file must
/// be in the index.
fn partition<'a>(
    index: &'a Index,
    flags: &HashMap<String, bool>,
) -> Result<(Vec<ComplexRecord>, Vec<ComplexRecord>), CliError> {
    let known: HashMap<&str, &'a ComplexRecord> = index.records.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut missing: Vec<&String> = flags.keys().filter(|id| !known.contains_key(id.as_str())).collect();
    missing.sort();
    if let Some(id) = missing.first() {
        return Err(CliError::config(format!(
            "split lists {id:?}, which is not in the index"
        )));
    }
    let pick = |want: bool| {
        index
            .records
            .iter()
            .filter(|r| flags.get(&r.id) == Some(&want))
            .cloned()
            .collect::<Vec<_>>()
    };
    Ok((pick(true), pick(false)))
}

fn metrics_json(train: Option<&Metrics>, test: Option<&Metrics>) -> serde_json::Value {
    json!({
        "r2_train": train.and_then(|m| m.r2),
        "r2_test": test.and_then(|m| m.r2),
        "mue_train_kcal": train.map(|m| m.mue_kcal),
        "mue_test_kcal": test.map(|m| m.mue_kcal),
    })
}

fn evaluate(
    examples: &[TrainingExample],
    params: &ModelParams,
    exec: Exec,
) -> Result<(Vec<f64>, Option<Metrics>), CliError> {
    if examples.is_empty() {
        return Ok((Vec::new(), None));
    }
    let prepared = prepare_examples(examples, params, exec)?;
    let pred = predict_all(&prepared, params, exec)?;
    let actual: Vec<f64> = examples.iter().map(|e| e.label_kcal).collect();
    let m = metrics(&pred, &actual);
    Ok((pred, Some(m)))
}

fn initial_params(cfg: &RunConfig, vocab: AtomTypeVocabulary) -> Result<ModelParams, CliError> {
    let mut params = ModelParams::initial(vocab, &cfg.model(), cfg.seed)?;
    if let Some(beta) = &cfg.beta {
        params.radial.beta = beta.clone();
    }
    if let Some(bias) = &cfg.bias {
        params.radial.bias = bias.clone();
    }
    Ok(params)
}

pub fn train(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let exec = exec_for(cfg);
    let mut cfg = cfg.clone();
    for p in [&mut cfg.index, &mut cfg.split_file].into_iter().flatten() {
        *p = std::fs::canonicalize(&*p).map_err(|e| CliError::io(p, e))?;
    }
    let index = load_index(&cfg)?;
    create_dir(out)?;
    write_file(&out.join("run_config.cfg"), cfg.to_text())?;

    let split = match &cfg.split_file {
        Some(path) => {
            let flags = parse_split_csv(&read_text(path)?).map_err(|e| CliError::from(e).context(path))?;
            let (train, test) = partition(&index, &flags)?;
            SplitResult {
                train_ids: train.into_iter().map(|r| r.id).collect(),
                test_ids: test.into_iter().map(|r| r.id).collect(),
            }
        }
        None => compute_split(&cfg, &index)?,
    };
    write_split(&cfg, &index, &split, cfg.split_file.as_deref(), &out.join("split.csv"))?;
    let flags: HashMap<String, bool> = split
        .train_ids
        .iter()
        .map(|id| (id.clone(), true))
        .chain(split.test_ids.iter().map(|id| (id.clone(), false)))
        .collect();
    let (train_recs, test_recs) = partition(&index, &flags)?;
    let train_set = load_examples(&train_recs, &index.base, exec)?;
    let test_set = load_examples(&test_recs, &index.base, exec)?;

    let vocab = derive_vocabulary(&train_set, cfg.n_types)?;
    let params = initial_params(&cfg, vocab)?;
    eprintln!(
        "training on {} complexes ({} held out), {} learnable parameters, atom types {:?}",
        train_set.len(),
        test_set.len(),
        params.n_learnable(),
        params.vocab.types()
    );

    let history_path = out.join("history.csv");
    let file = File::create(&history_path).map_err(|e| CliError::io(&history_path, e))?;
    let mut history = BufWriter::new(file);
    writeln!(history, "{}", HistoryRow::CSV_HEADER)
        .and_then(|_| history.flush())
        .map_err(|e| CliError::io(&history_path, e))?;
    let mut io_error: Option<std::io::Error> = None;
    let log_row = |row: &HistoryRow| {
        if io_error.is_some() {
            return;
        }
        let written = writeln!(history, "{}", row.to_csv()).and_then(|_| history.flush());
        if let Err(e) = written {
            io_error = Some(e);
        }
        eprintln!(
            "epoch {:>4}  loss {:.6e}  mue {:.4} kcal/mol",
            row.epoch, row.train_loss, row.train_mue_kcal
        );
    };
    let outcome = train_from(&train_set, params, &cfg.train(), log_row);
    if let Some(e) = io_error {
        return Err(CliError::io(&history_path, e));
    }
    let outcome = outcome?;
    if outcome.dropped_slots > 0 {
        eprintln!("{} neighbor slots matched no atom type", outcome.dropped_slots);
    }

    checkpoint::save(&out.join("model.ckpt"), &outcome.params)?;
    let (_, train_m) = evaluate(&train_set, &outcome.params, exec)?;
    let (_, test_m) = evaluate(&test_set, &outcome.params, exec)?;
    write_json(
        &out.join("metrics.json"),
        &metrics_json(train_m.as_ref(), test_m.as_ref()),
    )?;
    eprintln!("wrote {}", out.display());
    Ok(())
}

/// Shape keys whose explicit presence makes `eval` check the checkpoint.
const SHAPE_KEYS: &[&str] = &[
    "preset",
    "n_types",
    "n_radial",
    "layers",
    "cutoff",
    "max_neighbors",
    "fc",
];

pub fn wants_shape_check(layers: &[BTreeMap<String, String>]) -> bool {
    layers
        .iter()
        .any(|l| l.keys().any(|k| SHAPE_KEYS.contains(&k.as_str())))
}

fn check_against_config(params: &ModelParams, cfg: &RunConfig) -> Result<(), CliError> {
    let mut problems = Vec::new();
    let mut cmp = |name: &str, ckpt: String, conf: String| {
        if ckpt != conf {
            problems.push(format!("{name}: checkpoint {ckpt}, config {conf}"));
        }
    };
    cmp("n_types", params.vocab.len().to_string(), cfg.n_types.to_string());
    cmp(
        "n_radial",
        params.radial.n_filters().to_string(),
        cfg.n_radial.to_string(),
    );
    cmp(
        "layers",
        format!("{:?}", params.net.hidden_sizes()),
        format!("{:?}", cfg.layers),
    );
    cmp("cutoff", params.cutoff().to_string(), cfg.cutoff.to_string());
    cmp(
        "max_neighbors",
        params.max_neighbors.to_string(),
        cfg.max_neighbors.to_string(),
    );
    cmp("fc", params.radial.mode.to_string(), cfg.fc.to_string());
    if problems.is_empty() {
        Ok(())
    } else {
        Err(CliError::new(
            EXIT_SHAPE,
            format!("checkpoint does not match config: {}", problems.join("; ")),
        ))
    }
}

pub fn eval(cfg: &RunConfig, check_shape: bool, ckpt: &Path, split_path: &Path, out: &Path) -> Result<(), CliError> {
    let exec = exec_for(cfg);
    let params = checkpoint::load(ckpt).map_err(|e| CliError::from(e).context(ckpt))?;
    if check_shape {
        check_against_config(&params, cfg)?;
    }
    let index = load_index(cfg)?;
    let flags = parse_split_csv(&read_text(split_path)?).map_err(|e| CliError::from(e).context(split_path))?;
    let (train_recs, test_recs) = partition(&index, &flags)?;
    let train_set = load_examples(&train_recs, &index.base, exec)?;
    let test_set = load_examples(&test_recs, &index.base, exec)?;
    let (train_pred, train_m) = evaluate(&train_set, &params, exec)?;
    let (test_pred, test_m) = evaluate(&test_set, &params, exec)?;

    create_dir(out)?;
    let mut rows: HashMap<&str, (f64, f64)> = HashMap::new();
    for (set, pred) in [(&train_set, &train_pred), (&test_set, &test_pred)] {
        for (e, &p) in set.iter().zip(pred) {
            rows.insert(e.id.as_str(), (e.label_kcal, p));
        }
    }
    let mut scatter = String::from("id,actual_logki,pred_logki,actual_kcal,pred_kcal\n");
    for r in &index.records {
        if let Some(&(actual, pred)) = rows.get(r.id.as_str()) {
            scatter.push_str(&format!(
                "{},{},{},{},{}\n",
                r.id,
                r.log_ki,
                kcal_to_log_ki(pred),
                actual,
                pred
            ));
        }
    }
    write_file(&out.join("scatter.csv"), scatter)?;
    write_json(
        &out.join("metrics.json"),
        &metrics_json(train_m.as_ref(), test_m.as_ref()),
    )?;
    eprintln!(
        "evaluated {} train and {} test complexes -> {}",
        train_set.len(),
        test_set.len(),
        out.display()
    );
    Ok(())
}

pub fn predict(ckpt: &Path, ligand: &Path, protein: &Path) -> Result<serde_json::Value, CliError> {
    let params = checkpoint::load(ckpt).map_err(|e| CliError::from(e).context(ckpt))?;
    let load = |p: &Path| {
        load_structure(p)
            .map(|(s, _)| s)
            .map_err(|e| CliError::from(e).context(p))
    };
    let lig = load(ligand)?;
    let prot = load(protein)?;
    let complex = merge_systems(&prot, &lig);
    let dg = predict_dg(&complex, &prot, &lig, &params)?;
    Ok(json!({ "dg_kcal": dg, "log_ki": kcal_to_log_ki(dg) }))
}

pub fn featurize(cfg: &RunConfig, structure: &Path, ckpt: Option<&Path>) -> Result<String, CliError> {
    let (system, _) = load_structure(structure).map_err(|e| CliError::from(e).context(structure))?;
    let (vocab, radial, m) = match ckpt {
        Some(path) => {
            let p = checkpoint::load(path).map_err(|e| CliError::from(e).context(path))?;
            (p.vocab, p.radial, p.max_neighbors)
        }
        None => {
            let vocab = AtomTypeVocabulary::most_frequent([system.atomic_numbers()], cfg.n_types)?;
            let mut radial = RadialFilterParams::initial(cfg.n_radial, cfg.cutoff, cfg.fc)?;
            if let Some(b) = &cfg.beta {
                radial.beta = b.clone();
            }
            if let Some(b) = &cfg.bias {
                radial.bias = b.clone();
            }
            radial.validate()?;
            (vocab, radial, cfg.max_neighbors)
        }
    };
    let ctx = build_neighbor_context(&system, radial.cutoff, m)?;
    let conv = atom_type_conv(&ctx, &vocab)?;
    if conv.dropped_slots() > 0 {
        eprintln!("{} neighbor slots matched no atom type", conv.dropped_slots());
    }
    let p = radial_pool(&conv, &radial);
    let mut s = String::from("atom,element");
    for &z in vocab.types() {
        let sym = atomic_number_to_symbol(z).unwrap_or("X");
        for k in 0..radial.n_filters() {
            s.push_str(&format!(",{sym}_r{k}"));
        }
    }
    s.push('\n');
    for (i, &z) in system.atomic_numbers().iter().enumerate() {
        s.push_str(&format!("{i},{}", atomic_number_to_symbol(z).unwrap_or("X")));
        for v in p.row(i) {
            s.push_str(&format!(",{v}"));
        }
        s.push('\n');
    }
    Ok(s)
}
