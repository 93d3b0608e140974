use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::advisor::{build_prompt, complete, CompletionBackend, GenerationSettings, MockBackend, RemoteBackend};
use crate::boneage::{
    evaluate_bone_age, synthetic_bone_age_dataset, train_bone_age_with, BoneAgeConfig, BoneAgeModel,
    BoneAgePredictor, BoneAgeTrainOptions,
};
use crate::casedata::{
    generate_synthetic_cases, load_xray, parse_cases, preprocess_xray, synthetic_hand_xray, uniform_mix, write_cases,
    PatientCase,
};
use crate::cli::{BackendArg, PipelineArgs, Stage, StageError};
use crate::error::{Error, Result};
use crate::fusion::{build_adjacency, embed_case, gnn_propagate, EmbeddingMatrix, TextEncoder};
use crate::icl::{
    optimize_ordering, select_exemplars, Exemplar, OrderingStrategy, RewardMode, SelectionReport, SelectionStrategy,
    SimilarityScorer,
};
use crate::numerics::tensor::Tensor;
use crate::training::{curves_csv, evaluate_model, train_model, EvaluationReport, TrainConfig};

const VALIDATION_IMAGES: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic(usize),
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub source: DataSource,
    pub seed: u64,
    pub dim: usize,
    pub k: usize,
    pub mode: RewardMode,
    pub selection: SelectionStrategy,
    pub ordering: OrderingStrategy,
    pub budget: u64,
    pub epochs: usize,
    pub neighbors: usize,
    pub boneage_images: usize,
    pub image_size: usize,
    pub train_gnn: bool,
    pub backend: BackendArg,
    pub out: PathBuf,
}

impl RunConfig {
    pub fn from_args(a: &PipelineArgs) -> Result<Self> {
        let source = match &a.data {
            Some(p) => {
                if !p.is_file() {
                    return Err(Error::validation(format!("data file `{}` does not exist", p.display())));
                }
                DataSource::File(p.clone())
            }
            None => DataSource::Synthetic(a.synthetic.unwrap_or(50)),
        };
        let cfg = RunConfig {
            source,
            seed: a.seed,
            dim: a.dim,
            k: a.k,
            mode: a.mode.into(),
            selection: a.strategy.selection(),
            ordering: a.strategy.ordering(),
            budget: a.budget,
            epochs: a.epochs,
            neighbors: a.neighbors,
            boneage_images: a.boneage_images,
            image_size: a.image_size,
            train_gnn: a.train_gnn,
            backend: a.backend,
            out: a.out.clone(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::config("k must be at least 1"));
        }
        if self.dim < 4 {
            return Err(Error::config("embedding dimension must be at least 4"));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if self.image_size < 8 {
            return Err(Error::config("image size must be at least 8"));
        }
        if self.boneage_images == 0 {
            return Err(Error::config("need at least one bone-age training image"));
        }
        if self.source == DataSource::Synthetic(0) {
            return Err(Error::config("--synthetic needs at least one case"));
        }
        Ok(())
    }

    fn manifest_lines(&self) -> String {
        let mut s = String::new();
        match &self.source {
            DataSource::Synthetic(n) => {
                let _ = writeln!(s, "source=synthetic\nsynthetic={n}");
            }
            DataSource::File(p) => {
                let _ = writeln!(s, "source=file\ndata={}", p.display());
            }
        }
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "dim={}", self.dim);
        let _ = writeln!(s, "k={}", self.k);
        let _ = writeln!(s, "mode={}", self.mode);
        let _ = writeln!(s, "strategy={}", self.selection);
        let _ = writeln!(s, "ordering_strategy={}", self.ordering);
        let _ = writeln!(s, "budget={}", self.budget);
        let _ = writeln!(s, "epochs={}", self.epochs);
        let _ = writeln!(s, "neighbors={}", self.neighbors);
        let _ = writeln!(s, "boneage_images={}", self.boneage_images);
        let _ = writeln!(s, "image_size={}", self.image_size);
        let _ = writeln!(s, "train_gnn={}", self.train_gnn);
        let _ = writeln!(s, "backend={}", self.backend.as_str());
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub cases: usize,
    pub ordered_ids: Vec<String>,
    pub losses: Vec<f64>,
    pub boneage_mae: Vec<f64>,
    pub evaluation: Option<EvaluationReport>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn write_file(path: &Path, contents: &[u8]) -> Result<String> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(contents))
}

fn file_hash(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path).map_err(|e| Error::io(path, e))?))
}

/// Case `i` goes to the probe set when `i % 5 == 3`, the test set when
/// `i % 5 == 4`, and the candidate pool otherwise.
pub fn split_indices(n: usize) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let (mut pool, mut probe, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..n {
        match i % 5 {
            3 => probe.push(i),
            4 => test.push(i),
            _ => pool.push(i),
        }
    }
    (pool, probe, test)
}

pub fn case_image_seed(seed: u64, index: usize) -> u64 {
    seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(index as u64 + 1))
}

/// Bone age the pipeline uses for case `index`: the regressor's prediction on
/// the case's radiograph (or a synthetic one rendered from its recorded bone
/// age, else its age), rounded to 0.1 months.
pub fn predict_case_bone_age(
    model: &BoneAgeModel,
    case: &PatientCase,
    index: usize,
    seed: u64,
    base_dir: Option<&Path>,
) -> Result<f64> {
    let size = model.config.input_size;
    let image = match &case.xray_path {
        Some(p) => {
            let path = match base_dir {
                Some(d) if Path::new(p).is_relative() => d.join(p),
                _ => PathBuf::from(p),
            };
            preprocess_xray(&load_xray(&path)?, size)?
        }
        None => synthetic_hand_xray(
            case.bone_age_months.unwrap_or(case.age_months),
            size,
            case_image_seed(seed, index),
        )?,
    };
    let p = model.predict(&image)?;
    Ok(((p * 10.0).round() / 10.0).clamp(0.1, 239.9))
}

fn build_backend(kind: BackendArg, dim: usize, seed: u64) -> Result<Box<dyn CompletionBackend>> {
    Ok(match kind {
        BackendArg::Mock => Box::new(MockBackend::new(dim, seed)?),
        BackendArg::Remote => Box::new(RemoteBackend::from_env()?),
    })
}

pub(crate) fn backend_for(kind: BackendArg, dim: usize, seed: u64) -> Result<Box<dyn CompletionBackend>> {
    build_backend(kind, dim, seed)
}

fn evaluation_text(ev: &EvaluationReport) -> String {
    let mut s = format!("accuracy={}\n", ev.accuracy);
    match ev.mae_in_months {
        Some(m) => {
            let _ = writeln!(s, "mae_in_months={m}");
        }
        None => s.push_str("mae_in_months=\n"),
    }
    for l in crate::casedata::DiagnosisLabel::ALL {
        let row: Vec<String> = ev.confusion[l.index()].iter().map(u64::to_string).collect();
        let _ = writeln!(s, "confusion.{}={}", l.as_str(), row.join(","));
    }
    s
}

pub fn cmd_pipeline(cfg: &RunConfig, stdout: &mut dyn Write) -> std::result::Result<RunSummary, StageError> {
    let out = cfg.out.as_path();
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e)).stage("output")?;
    let mut manifest = format!("tool=gda {}\ncommand=pipeline\n", env!("CARGO_PKG_VERSION"));
    manifest.push_str(&cfg.manifest_lines());

    // ingest
    let (cases, base_dir) = match &cfg.source {
        DataSource::Synthetic(n) => {
            manifest.push_str("input_sha256=\n");
            (generate_synthetic_cases(*n, cfg.seed, &uniform_mix()).stage("ingest")?, None)
        }
        DataSource::File(p) => {
            let _ = writeln!(manifest, "input_sha256={}", file_hash(p).stage("ingest")?);
            (parse_cases(p).stage("ingest")?, p.parent().map(Path::to_path_buf))
        }
    };
    if let Some(c) = cases.iter().find(|c| c.diagnosis.is_none()) {
        return Err(Error::validation(format!("case `{}` has no label; pipeline cases must be labeled", c.case_id)))
            .stage("ingest");
    }
    let n = cases.len();
    let (pool_idx, probe_idx, test_idx) = split_indices(n);
    if cfg.k > pool_idx.len() {
        return Err(Error::validation(format!(
            "k = {} exceeds the {} candidate cases",
            cfg.k,
            pool_idx.len()
        )))
        .stage("ingest");
    }
    let cases_path = out.join("cases.txt");
    write_cases(&cases_path, &cases).stage("ingest")?;

    // bone age
    let size = (cfg.image_size, cfg.image_size);
    let ba_config = BoneAgeConfig {
        input_size: size,
        ..BoneAgeConfig::default()
    };
    let mut model = BoneAgeModel::new(ba_config, cfg.seed).stage("boneage")?;
    let train_set = synthetic_bone_age_dataset(cfg.boneage_images, size, cfg.seed).stage("boneage")?;
    let val_set = synthetic_bone_age_dataset(VALIDATION_IMAGES, size, cfg.seed.wrapping_add(1)).stage("boneage")?;
    let mut boneage_mae = Vec::with_capacity(cfg.epochs);
    train_bone_age_with(
        &mut model,
        &train_set,
        &BoneAgeTrainOptions::new(cfg.epochs, cfg.seed),
        |_, m| {
            boneage_mae.push(evaluate_bone_age(m, &val_set)?.mae_in_months);
            Ok(())
        },
    )
    .stage("boneage")?;
    model.save(out.join("boneage.ckpt")).stage("boneage")?;
    let bone_ages: Vec<f64> = cases
        .par_iter()
        .enumerate()
        .map(|(i, c)| predict_case_bone_age(&model, c, i, cfg.seed, base_dir.as_deref()))
        .collect::<Result<_>>()
        .stage("boneage")?;

    // fusion
    let encoder = TextEncoder::with_dim(cfg.dim, cfg.seed).stage("fusion")?;
    let rows: Vec<Vec<f64>> = cases
        .par_iter()
        .zip(&bone_ages)
        .map(|(c, &b)| embed_case(c, b, &encoder))
        .collect::<Result<_>>()
        .stage("fusion")?;
    let h0 = EmbeddingMatrix::from_rows(rows, cases.iter().map(|c| c.case_id.clone()).collect()).stage("fusion")?;
    let adjacency = build_adjacency(&h0, cfg.neighbors.min(n - 1)).stage("fusion")?;
    let h = gnn_propagate(&adjacency, &h0, &Tensor::identity(cfg.dim)).stage("fusion")?;
    let exemplar = |i: usize| Exemplar::new(cases[i].clone(), bone_ages[i], h.row(i).to_vec());
    let collect = |idx: &[usize]| idx.iter().map(|&i| exemplar(i)).collect::<Result<Vec<_>>>();
    let pool = collect(&pool_idx).stage("fusion")?;
    let probe = collect(&probe_idx).stage("fusion")?;
    let test = collect(&test_idx).stage("fusion")?;

    // selection and ordering
    let scorer = SimilarityScorer;
    let selected = select_exemplars(&pool, &probe, cfg.k, &scorer, cfg.mode, cfg.selection, cfg.budget).stage("select")?;
    let order = optimize_ordering(&selected, &probe, &scorer, cfg.mode, cfg.ordering, cfg.budget).stage("order")?;
    let report = SelectionReport::new(&selected, &order, cfg.selection, cfg.ordering, cfg.mode, cfg.budget)
        .stage("order")?;
    let report_hash = write_file(&out.join("selection_report.txt"), report.to_text().as_bytes()).stage("export")?;
    let context = selected.ordered(&order).stage("order")?;
    let context_cases: Vec<PatientCase> = context
        .iter()
        .map(|e| {
            let mut c = e.case.clone();
            c.bone_age_months = Some(e.record.bone_age_months);
            c
        })
        .collect();
    let exemplars_path = out.join("exemplars.txt");
    write_cases(&exemplars_path, &context_cases).stage("export")?;

    // training
    let mut tc = TrainConfig::new(cfg.epochs, cfg.seed);
    tc.train_gnn = cfg.train_gnn;
    let run = train_model(&selected, &order, &tc)
        .and_then(|r| r.with_mae_curve(boneage_mae.clone()))
        .stage("train")?;
    let curves_hash = write_file(&out.join("curves.csv"), curves_csv(&run).as_bytes()).stage("export")?;
    run.params.save(out.join("head.ckpt")).stage("export")?;

    // evaluation
    let evaluation = if test.is_empty() {
        None
    } else {
        let ev = evaluate_model(&run.params, &test).stage("evaluate")?;
        write_file(&out.join("evaluation.txt"), evaluation_text(&ev).as_bytes()).stage("export")?;
        Some(ev)
    };

    // advice
    if !test.is_empty() {
        let backend = build_backend(cfg.backend, cfg.dim, cfg.seed).stage("advise")?;
        let settings = GenerationSettings::default();
        let mut advice_text = String::new();
        for (i, ex) in test.iter().enumerate() {
            let mut query = ex.case.clone();
            query.diagnosis = None;
            query.bone_age_months = Some(ex.record.bone_age_months);
            let prompt = build_prompt(&context, &query).stage("advise")?;
            if i == 0 {
                write_file(&out.join("prompt.txt"), prompt.diagnosis_text().as_bytes()).stage("export")?;
            }
            let advice = complete(backend.as_ref(), &prompt, &settings).stage("advise")?;
            let _ = write!(
                advice_text,
                "[{}]\ntruth : {}\ndiagnosis : {}\ntreatment : {}\n\n",
                ex.id(),
                ex.label().display_name(),
                advice.diagnosis_text,
                advice.treatment_text
            );
        }
        write_file(&out.join("advice.txt"), advice_text.as_bytes()).stage("export")?;
    }

    let _ = writeln!(manifest, "cases={n}");
    let _ = writeln!(manifest, "pool={} probe={} test={}", pool.len(), probe.len(), test.len());
    for (name, hash) in [
        ("cases_sha256", file_hash(&cases_path)),
        ("exemplars_sha256", file_hash(&exemplars_path)),
        ("boneage_ckpt_sha256", file_hash(&out.join("boneage.ckpt"))),
        ("head_ckpt_sha256", file_hash(&out.join("head.ckpt"))),
    ] {
        let _ = writeln!(manifest, "{name}={}", hash.stage("export")?);
    }
    let _ = writeln!(manifest, "selection_report_sha256={report_hash}");
    let _ = writeln!(manifest, "curves_sha256={curves_hash}");
    write_file(&out.join("manifest.txt"), manifest.as_bytes()).stage("export")?;

    let _ = writeln!(stdout, "cases: {n} (pool {}, probe {}, test {})", pool.len(), probe.len(), test.len());
    let _ = writeln!(
        stdout,
        "exemplars: {} (selection reward {}, ordering reward {})",
        report.ordered_ids.join(","),
        report.selection_reward,
        report.ordering_reward
    );
    let _ = writeln!(stdout, "loss: {:?}", run.losses);
    let _ = writeln!(stdout, "bone-age mae_in_months: {boneage_mae:?}");
    if let Some(ev) = &evaluation {
        let _ = writeln!(stdout, "test accuracy: {}", ev.accuracy);
    }
    let _ = writeln!(stdout, "artifacts in {}", out.display());
    Ok(RunSummary {
        cases: n,
        ordered_ids: report.ordered_ids.clone(),
        losses: run.losses.clone(),
        boneage_mae,
        evaluation,
    })
}
