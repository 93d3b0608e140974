use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Args;

use crate::advisor::{build_prompt, complete, GenerationSettings, DIAGNOSIS_PREFIX};
use crate::boneage::BoneAgeModel;
use crate::casedata::parse_cases;
use crate::cli::pipeline::{backend_for, predict_case_bone_age};
use crate::cli::{BackendArg, Stage, StageError};
use crate::error::{Error, Result};
use crate::fusion::{embed_case, TextEncoder};
use crate::icl::Exemplar;

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["run", "context"])))]
pub struct DiagnoseArgs {
    /// Case file with the cases to diagnose.
    #[arg(long)]
    pub case: PathBuf,
    /// Output directory of an earlier `pipeline` run.
    #[arg(long)]
    pub run: Option<PathBuf>,
    /// Case file of labeled exemplars, used in file order.
    #[arg(long)]
    pub context: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = BackendArg::Mock)]
    pub backend: BackendArg,
    /// Embedding dimension; defaults to the run's, else 32.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Encoder seed; defaults to the run's, else 7.
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn read_manifest(path: &Path) -> Result<HashMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect())
}

fn manifest_value<T: std::str::FromStr>(m: &HashMap<String, String>, key: &str) -> Result<Option<T>> {
    match m.get(key) {
        None => Ok(None),
        Some(v) => v
            .parse()
            .map(Some)
            .map_err(|_| Error::validation(format!("manifest value {key}={v} is malformed"))),
    }
}

pub fn cmd_diagnose(args: &DiagnoseArgs, stdout: &mut dyn Write) -> std::result::Result<(), StageError> {
    let (context_path, manifest, model) = match (&args.run, &args.context) {
        (Some(run), _) => {
            let manifest = read_manifest(&run.join("manifest.txt")).stage("load")?;
            let ckpt = run.join("boneage.ckpt");
            let model = if ckpt.is_file() {
                Some(BoneAgeModel::load(&ckpt).stage("load")?)
            } else {
                None
            };
            (run.join("exemplars.txt"), manifest, model)
        }
        (None, Some(c)) => (c.clone(), HashMap::new(), None),
        (None, None) => unreachable!("clap requires --run or --context"),
    };
    let dim = match args.dim {
        Some(d) => d,
        None => manifest_value(&manifest, "dim").stage("load")?.unwrap_or(32),
    };
    let seed = match args.seed {
        Some(s) => s,
        None => manifest_value(&manifest, "seed").stage("load")?.unwrap_or(7),
    };
    let encoder = TextEncoder::with_dim(dim, seed).stage("config")?;
    let backend = backend_for(args.backend, dim, seed).stage("config")?;

    let context_cases = parse_cases(&context_path).stage("load")?;
    let context = context_cases
        .into_iter()
        .map(|c| {
            let b = c
                .bone_age_months
                .ok_or_else(|| Error::validation(format!("exemplar `{}` has no bone age", c.case_id)))?;
            let e = embed_case(&c, b, &encoder)?;
            Exemplar::new(c, b, e)
        })
        .collect::<Result<Vec<_>>>()
        .stage("load")?;
    let refs: Vec<&Exemplar> = context.iter().collect();

    let cases = parse_cases(&args.case).stage("input")?;
    let settings = GenerationSettings::default();
    for (i, case) in cases.iter().enumerate() {
        let mut query = case.clone();
        query.diagnosis = None;
        if query.bone_age_months.is_none() && query.xray_path.is_some() {
            if let Some(m) = &model {
                let b = predict_case_bone_age(m, case, i, seed, args.case.parent()).stage("boneage")?;
                query.bone_age_months = Some(b);
            }
        }
        let prompt = build_prompt(&refs, &query).stage("input")?;
        let advice = complete(backend.as_ref(), &prompt, &settings).stage("advise")?;
        let _ = writeln!(
            stdout,
            "[{}]\n{DIAGNOSIS_PREFIX} {}\nTreatment : {}",
            case.case_id, advice.diagnosis_text, advice.treatment_text
        );
    }
    Ok(())
}
