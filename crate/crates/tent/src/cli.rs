//! The `tent` command line.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use tent_core::nn::{
    calibrate, evaluate, fold_batchnorm, predict, quantize_model, Calibration, Classifier, Dataset, EvalReport,
    FormatPolicy, LayerAssignment, Model, NnError, QuantizedModel,
};
use tent_core::sim::{simulate_model, ArrayConfig, CostTable, MemoryConfig, SimReport};
use tent_core::{Code, Format, FormatError};

use crate::blob::read_json;
use crate::dataset::{self, DatasetSpec};
use crate::error::{Error, Result};
use crate::fixture::{self, Variant};
use crate::manifest::{load_model_file, MODEL_FORMAT};
use crate::qmodel::{load_quantized, save_quantized, source_ref, QUANTIZED_FORMAT};

#[derive(Debug, Parser)]
#[command(name = "tent", version, about = "Tapered fixed-point quantization experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded fixture model.
    Fixture(FixtureArgs),
    /// Dump every value of a format.
    Inspect(InspectArgs),
    /// Quantize a float model and write the quantized manifest and selection report.
    Quantize(QuantizeArgs),
    /// Top-1 accuracy and quantization error of a float or quantized model.
    Evaluate(EvaluateArgs),
    /// Accuracy and error for every (format, width) pair.
    Sweep(SweepArgs),
    /// Systolic-array cost of every (format, width) pair.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct FixtureArgs {
    #[arg(long, default_value = "tiny-convnet")]
    pub variant: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    /// `tfx:n/IS/SC` or `fxp:n/frac`.
    pub descriptor: String,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// `idx:<dir>`, `cifar10:<dir>` or `synth:<seed>`; defaults to `synth:<--seed>`.
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Samples used for activation statistics (a prefix of the dataset).
    #[arg(long, default_value_t = 256)]
    pub calib_size: usize,
    /// Evaluation samples; synthetic data defaults to 1000, files to all.
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Debug, Args)]
pub struct QuantizeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub bits: String,
    /// `tfx:auto`, `fxp:auto` or a fixed descriptor.
    #[arg(long, default_value = "tfx:auto")]
    pub format: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Quantize the float model at these widths first (`n` or `a..b`).
    #[arg(long)]
    pub bits: Option<String>,
    #[arg(long)]
    pub format: Vec<String>,
    /// Directory for `evaluate.csv`; standard output if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "5..8")]
    pub bits: String,
    /// Repeatable; defaults to `tfx:auto` and `fxp:auto`.
    #[arg(long)]
    pub format: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "5..8")]
    pub bits: String,
    #[arg(long)]
    pub format: Vec<String>,
    /// PE grid as `ROWSxCOLS`.
    #[arg(long, default_value = "16x16")]
    pub array: String,
    /// JSON memory configuration.
    #[arg(long)]
    pub mem: Option<PathBuf>,
    /// JSON energy table.
    #[arg(long)]
    pub costs: Option<PathBuf>,
    #[arg(long, default_value_t = 200e6)]
    pub clock: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Inclusive width range `a..b`, or a single width.
pub fn parse_bits(s: &str) -> Result<Vec<u32>> {
    let bad = || Error::Argument(format!("bit range `{s}`: expected `n` or `a..b`"));
    let (a, b) = match s.split_once("..") {
        Some((a, b)) => (a.trim(), b.trim().trim_start_matches('=')),
        None => (s.trim(), s.trim()),
    };
    let (a, b): (u32, u32) = (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
    if a > b {
        return Err(bad());
    }
    for n in [a, b] {
        if !(tent_core::formats::MIN_BITS..=tent_core::formats::MAX_BITS).contains(&n) {
            return Err(FormatError::UnsupportedWidth(n).into());
        }
    }
    Ok((a..=b).collect())
}

pub fn parse_array(s: &str) -> Result<ArrayConfig> {
    let bad = || Error::Argument(format!("array `{s}`: expected ROWSxCOLS"));
    let (r, c) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    let (rows, cols) = (r.parse().map_err(|_| bad())?, c.parse().map_err(|_| bad())?);
    if rows == 0 || cols == 0 {
        return Err(bad());
    }
    Ok(ArrayConfig { rows, cols })
}

fn parse_policies(formats: &[String]) -> Result<Vec<FormatPolicy>> {
    if formats.is_empty() {
        return Ok(vec![FormatPolicy::TfxAuto, FormatPolicy::FxpAuto]);
    }
    formats.iter().map(|f| Ok(FormatPolicy::from_str(f)?)).collect()
}

/// The policy to use at width `n`; fixed descriptors must match the width.
fn policy_at(policy: FormatPolicy, n: u32) -> Result<FormatPolicy> {
    match policy {
        FormatPolicy::Fixed(f) if f.bits() != n => Err(Error::Argument(format!("format {f} is not {n} bits wide"))),
        p => Ok(p),
    }
}

enum Loaded {
    Float(crate::manifest::ModelFile),
    Quantized(crate::qmodel::QuantizedFile),
}

fn load_any(path: &Path) -> Result<Loaded> {
    let probe: serde_json::Value = read_json(path)?;
    match probe.get("format").and_then(|f| f.as_str()) {
        Some(MODEL_FORMAT) => Ok(Loaded::Float(load_model_file(path)?)),
        Some(QUANTIZED_FORMAT) => Ok(Loaded::Quantized(load_quantized(path)?)),
        other => Err(Error::Manifest(format!("unrecognised manifest format {other:?}"))),
    }
}

/// Float model with batch-norm folded, plus the data derived from it.
struct Prepared {
    float: Model,
    calib: Calibration,
    eval: Dataset,
    float_preds: Vec<usize>,
}

impl DataArgs {
    fn spec(&self) -> Result<DatasetSpec> {
        match &self.dataset {
            Some(s) => s.parse(),
            None => Ok(DatasetSpec::Synth(self.seed)),
        }
    }

    fn load_float(&self) -> Result<Model> {
        match load_any(&self.model)? {
            Loaded::Float(f) => Ok(fold_batchnorm(&f.model)?),
            Loaded::Quantized(_) => Err(Error::Argument(format!(
                "{} is already quantized; this command needs a float model",
                self.model.display()
            ))),
        }
    }

    fn calibration(&self, float: &Model) -> Result<Calibration> {
        if self.calib_size == 0 {
            return Err(Error::Argument("--calib-size must be positive".into()));
        }
        let data = dataset::load(&self.spec()?, Some(self.calib_size), Some(float))?;
        Ok(calibrate(float, data.inputs())?)
    }

    fn prepare(&self, float: Model) -> Result<Prepared> {
        let spec = self.spec()?;
        let calib = self.calibration(&float)?;
        let eval = dataset::load(&spec, self.samples, Some(&float))?;
        let float_preds = predict(&float, eval.inputs())?;
        Ok(Prepared {
            float,
            calib,
            eval,
            float_preds,
        })
    }
}

pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            write!(stdout, "{e}").map_err(Error::io("<stdout>"))?;
            return Ok(());
        }
        Err(e) => return Err(Error::Argument(e.render().to_string().trim_end().to_string())),
    };
    match cli.command {
        Command::Fixture(a) => cmd_fixture(a, stdout),
        Command::Inspect(a) => cmd_inspect(a, stdout, stderr),
        Command::Quantize(a) => cmd_quantize(a, stdout),
        Command::Evaluate(a) => cmd_evaluate(a, stdout),
        Command::Sweep(a) => cmd_sweep(a, stdout),
        Command::Simulate(a) => cmd_simulate(a, stdout, stderr),
    }
}

fn emit(out: &Option<PathBuf>, file: &str, text: &str, stdout: &mut dyn Write) -> Result<()> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(Error::io(dir))?;
            let path = dir.join(file);
            fs::write(&path, text).map_err(Error::io(&path))
        }
        None => stdout.write_all(text.as_bytes()).map_err(Error::io("<stdout>")),
    }
}

fn csv_text(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Argument(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn cmd_fixture(a: FixtureArgs, stdout: &mut dyn Write) -> Result<()> {
    let variant: Variant = a.variant.parse()?;
    let path = fixture::write(variant, a.seed, &a.out)?;
    writeln!(stdout, "{}", path.display()).map_err(Error::io("<stdout>"))
}

fn binary(c: Code, n: u32) -> String {
    format!("{:0width$b}", c.bits(), width = n as usize)
}

fn cmd_inspect(a: InspectArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    let format: Format = a.descriptor.parse()?;
    let n = format.bits();
    let rows: Vec<Vec<String>> = format
        .enumerate_values()
        .into_iter()
        .map(|(c, v)| vec![c.signed(n).to_string(), binary(c, n), v.to_string()])
        .collect();
    let text = csv_text(&["code", "bits", "value"], &rows)?;
    match &a.out {
        Some(path) => fs::write(path, &text).map_err(Error::io(path))?,
        None => stdout.write_all(text.as_bytes()).map_err(Error::io("<stdout>"))?,
    }
    let e = format.extremes();
    let dr = format.dynamic_range();
    writeln!(
        stderr,
        "{format}: max_pos={} min_neg={} min_pos={} dynamic_range={}",
        e.max_pos,
        e.min_neg,
        e.min_pos,
        dr.max / dr.min
    )
    .map_err(Error::io("<stderr>"))
}

fn selection_rows(q: &QuantizedModel) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for (i, l) in q.layers().iter().enumerate() {
        let Some(fw) = l.op.weight_format() else { continue };
        let (is_w, is_a, sc_w, frac_w, frac_a) = match l.assignment {
            Some(LayerAssignment::Tfx(t)) => (t.is_w.to_string(), t.is_a.to_string(), t.sc_w.to_string(), String::new(), String::new()),
            Some(LayerAssignment::Fxp(f)) => (
                String::new(),
                String::new(),
                String::new(),
                f.weight.frac_bits().to_string(),
                f.activation.frac_bits().to_string(),
            ),
            _ => Default::default(),
        };
        rows.push(vec![
            i.to_string(),
            l.op.kind().name().to_string(),
            is_w,
            is_a,
            sc_w,
            frac_w,
            frac_a,
            fw.to_string(),
            l.output_format.to_string(),
            l.weight_mse.map(|m| m.to_string()).unwrap_or_default(),
        ]);
    }
    rows
}

const SELECTION_HEADER: [&str; 10] = [
    "layer",
    "kind",
    "is_w",
    "is_a",
    "sc_w",
    "frac_w",
    "frac_a",
    "weight_format",
    "output_format",
    "weight_mse",
];

fn policy_slug(p: FormatPolicy) -> String {
    p.to_string().replace([':', '/'], "-")
}

fn cmd_quantize(a: QuantizeArgs, stdout: &mut dyn Write) -> Result<()> {
    let bits = parse_bits(&a.bits)?;
    let &[n] = bits.as_slice() else {
        return Err(Error::Argument("quantize takes a single width".into()));
    };
    let policy = policy_at(a.format.parse()?, n)?;
    let float = a.data.load_float()?;
    let calib = a.data.calibration(&float)?;
    let q = quantize_model(&float, n, policy, &calib)?;
    let stem = format!("{}.{}.{n}", float.name(), policy_slug(policy));
    save_quantized(&q, &a.out, &stem, Some(source_ref(&a.data.model)?))?;
    let report = csv_text(&SELECTION_HEADER, &selection_rows(&q))?;
    let report_path = a.out.join(format!("{stem}.selection.csv"));
    fs::write(&report_path, &report).map_err(Error::io(&report_path))?;
    write!(stdout, "{report}").map_err(Error::io("<stdout>"))
}

struct EvalRow {
    format: String,
    n: u32,
    top1: f64,
    mean_mse: f64,
    agreement: Option<f64>,
    samples: usize,
}

const EVAL_HEADER: [&str; 6] = ["format", "n", "top1", "mean_mse", "agreement", "samples"];

impl EvalRow {
    fn record(&self) -> Vec<String> {
        vec![
            self.format.clone(),
            self.n.to_string(),
            self.top1.to_string(),
            self.mean_mse.to_string(),
            self.agreement.map(|a| a.to_string()).unwrap_or_default(),
            self.samples.to_string(),
        ]
    }
}

fn fraction_equal(a: &[usize], b: impl Iterator<Item = usize>) -> f64 {
    let hits = a.iter().zip(b).filter(|(x, y)| **x == *y).count();
    hits as f64 / a.len() as f64
}

/// One pass over the data gives both accuracy and agreement with the float model.
fn eval_quantized(q: &QuantizedModel, float_preds: Option<&[usize]>, data: &Dataset) -> Result<EvalRow> {
    if data.is_empty() {
        return Err(NnError::EmptyBatch.into());
    }
    let preds = predict(q, data.inputs())?;
    let report = EvalReport {
        top1_accuracy: fraction_equal(&preds, data.labels().iter().map(|&l| l as usize)),
        layer_mse: q.layer_mse(),
        samples: data.len(),
    };
    Ok(EvalRow {
        format: q.policy().to_string(),
        n: q.bits(),
        top1: report.top1_accuracy,
        mean_mse: report.mean_mse(),
        agreement: float_preds.map(|f| fraction_equal(&preds, f.iter().copied())),
        samples: report.samples,
    })
}

fn quantized_rows(p: &Prepared, bits: &[u32], policies: &[FormatPolicy]) -> Result<Vec<(QuantizedModel, EvalRow)>> {
    let mut out = Vec::new();
    for &policy in policies {
        for &n in bits {
            let q = quantize_model(&p.float, n, policy_at(policy, n)?, &p.calib)?;
            let row = eval_quantized(&q, Some(&p.float_preds), &p.eval)?;
            out.push((q, row));
        }
    }
    Ok(out)
}

fn cmd_evaluate(a: EvaluateArgs, stdout: &mut dyn Write) -> Result<()> {
    let rows = match load_any(&a.data.model)? {
        Loaded::Quantized(qf) => {
            if a.bits.is_some() || !a.format.is_empty() {
                return Err(Error::Argument("--bits/--format apply to float models only".into()));
            }
            let spec = a.data.spec()?;
            let teacher = match (&spec, &qf.source) {
                (DatasetSpec::Synth(_), Some(src)) => Some(fold_batchnorm(&crate::manifest::load_model(&src.manifest)?)?),
                _ => None,
            };
            let data = dataset::load(&spec, a.data.samples, teacher.as_ref().map(|t| t as &dyn Classifier))?;
            let float_preds = match &teacher {
                Some(t) => Some(predict(t, data.inputs())?),
                None => None,
            };
            vec![eval_quantized(&qf.model, float_preds.as_deref(), &data)?]
        }
        Loaded::Float(f) => {
            let float = fold_batchnorm(&f.model)?;
            let p = a.data.prepare(float)?;
            match &a.bits {
                None => {
                    let r = evaluate(&p.float, &p.eval)?;
                    vec![EvalRow {
                        format: "float32".into(),
                        n: 32,
                        top1: r.top1_accuracy,
                        mean_mse: 0.0,
                        agreement: Some(1.0),
                        samples: r.samples,
                    }]
                }
                Some(bits) => {
                    let rows = quantized_rows(&p, &parse_bits(bits)?, &parse_policies(&a.format)?)?;
                    rows.into_iter().map(|(_, r)| r).collect()
                }
            }
        }
    };
    let records: Vec<Vec<String>> = rows.iter().map(EvalRow::record).collect();
    emit(&a.out, "evaluate.csv", &csv_text(&EVAL_HEADER, &records)?, stdout)
}

fn cmd_sweep(a: SweepArgs, stdout: &mut dyn Write) -> Result<()> {
    let bits = parse_bits(&a.bits)?;
    let policies = parse_policies(&a.format)?;
    let p = a.data.prepare(a.data.load_float()?)?;
    let rows = quantized_rows(&p, &bits, &policies)?;
    let records: Vec<Vec<String>> = rows.iter().map(|(_, r)| r.record()).collect();
    let mut layers = Vec::new();
    for (q, r) in &rows {
        for sel in selection_rows(q) {
            let mut rec = vec![r.format.clone(), r.n.to_string()];
            rec.extend(sel);
            layers.push(rec);
        }
    }
    emit(&a.out, "sweep.csv", &csv_text(&EVAL_HEADER, &records)?, stdout)?;
    if a.out.is_some() {
        let mut header = vec!["format", "n"];
        header.extend(SELECTION_HEADER);
        emit(&a.out, "sweep_layers.csv", &csv_text(&header, &layers)?, stdout)?;
    }
    Ok(())
}

const SIM_HEADER: [&str; 14] = [
    "format",
    "n",
    "is_policy",
    "cycles",
    "compute_cycles",
    "utilization",
    "macs",
    "dram_bytes",
    "sram_bytes",
    "energy_j",
    "edp",
    "top1",
    "mean_mse",
    "agreement",
];

fn cmd_simulate(a: SimulateArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    let bits = parse_bits(&a.bits)?;
    let policies = parse_policies(&a.format)?;
    let array = parse_array(&a.array)?;
    let mem: MemoryConfig = match &a.mem {
        Some(p) => read_json(p)?,
        None => MemoryConfig::default(),
    };
    let costs: CostTable = match &a.costs {
        Some(p) => read_json(p)?,
        None => {
            writeln!(stderr, "WARN: no --costs table given; using the built-in illustrative energy coefficients")
                .map_err(Error::io("<stderr>"))?;
            CostTable::default()
        }
    };
    let p = a.data.prepare(a.data.load_float()?)?;
    let rows = quantized_rows(&p, &bits, &policies)?;
    let mut records = Vec::new();
    let mut dat = String::from("# format n error edp\n");
    let mut last_format: Option<String> = None;
    for (q, r) in &rows {
        let s: SimReport = simulate_model(q, array, mem, &costs, a.clock)?;
        records.push(vec![
            q.policy().kind().to_string(),
            r.n.to_string(),
            r.format.clone(),
            s.cycles.to_string(),
            s.compute_cycles.to_string(),
            s.utilization.to_string(),
            s.macs.to_string(),
            s.dram_bytes.to_string(),
            s.sram_bytes.to_string(),
            s.energy_j.to_string(),
            s.edp.to_string(),
            r.top1.to_string(),
            r.mean_mse.to_string(),
            r.agreement.map(|v| v.to_string()).unwrap_or_default(),
        ]);
        // Blank lines separate gnuplot data blocks, one per format.
        if last_format.as_ref().is_some_and(|f| *f != r.format) {
            dat.push_str("\n\n");
        }
        last_format = Some(r.format.clone());
        writeln!(dat, "{} {} {} {}", r.format, r.n, 1.0 - r.top1, s.edp).unwrap();
    }
    emit(&a.out, "simulate.csv", &csv_text(&SIM_HEADER, &records)?, stdout)?;
    if a.out.is_some() {
        emit(&a.out, "edp_vs_error.dat", &dat, stdout)?;
    }
    Ok(())
}

/// Machine-readable error line for standard error.
pub fn error_json(e: &Error) -> String {
    serde_json::json!({ "error": e.code(), "message": e.to_string() }).to_string()
}
