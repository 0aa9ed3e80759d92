use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use ndarray::Array2;
use polvote::config::{FitSettings, StudyConfig};
use polvote::eval::{evaluate, render_table, EvalReport};
use polvote::features::{read_matrix_csv, write_matrix_csv, FeatureBuilder, ModelKind};
use polvote::forecast::{
    end_of_day, fit_weights, mae, raw_count_shares, read_polls_csv, reweight, window_counts, write_polls_csv,
    PollObservation,
};
use polvote::lasso::{argmax_rows, cross_validate_with_predictions, fit};
use polvote::model::{Dataset, FilterRule};
use polvote::nonresponse::{skew_table, write_skew_csv, SurveyFeature};
use polvote::propagation::{like_db_from_dataset, propagate, write_propagation_csv, SocialGraph};
use polvote::replicate::{analysis_sample, render, replicate, write_csv};
use polvote::rule::{sweep_grid, write_grid_csv, write_grid_matrix};
use polvote::synth::generate;
use polvote::{Error, Result};
use serde::Serialize;

use crate::manifest::{timestamp, RunManifest};
use crate::{Cli, Command, FitArgs};

struct Ctx {
    cfg: StudyConfig,
    out: PathBuf,
    seed: u64,
    inputs: Vec<PathBuf>,
    outputs: Vec<String>,
}

impl Ctx {
    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        self.outputs.push(name.to_string());
        Ok(BufWriter::new(File::create(self.out.join(name))?))
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    fn write_text(&mut self, name: &str, text: &str) -> Result<()> {
        let mut w = self.create(name)?;
        w.write_all(text.as_bytes())?;
        w.flush()?;
        Ok(())
    }

    fn open(&mut self, path: &Path) -> Result<BufReader<File>> {
        self.inputs.push(path.to_path_buf());
        Ok(BufReader::new(File::open(path)?))
    }

    fn read_dataset(&mut self, path: &Path) -> Result<Dataset> {
        let r = self.open(path)?;
        Dataset::read_jsonl(r, self.cfg.party_space.clone(), self.cfg.window)
    }
}

fn parse_list<T: FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad {what} value `{}`", x.trim())))
        })
        .collect()
}

fn fit_settings(cfg: &StudyConfig, args: &FitArgs) -> Result<FitSettings> {
    let mut s = cfg.fit.clone();
    if let Some(g) = &args.lambda_grid {
        s.lambda_grid = parse_list(g, "lambda")?;
    }
    if let Some(k) = args.folds {
        s.folds = k;
    }
    Ok(s)
}

pub fn run(cli: &Cli) -> Result<()> {
    let g = &cli.global;
    let cfg = match &g.config {
        Some(p) => StudyConfig::load(p)?,
        None => StudyConfig::default(),
    };
    let out = g
        .output
        .clone()
        .ok_or_else(|| Error::InvalidConfig("--output is required".into()))?;
    std::fs::create_dir_all(&out)?;
    let seed = g.seed.unwrap_or(cfg.synth.seed);
    let mut ctx = Ctx {
        cfg,
        out,
        seed,
        inputs: Vec::new(),
        outputs: Vec::new(),
    };
    match &cli.command {
        Command::Synth {
            n,
            alignment,
            survey_signal,
            age_skew,
        } => synth(&mut ctx, *n, *alignment, *survey_signal, *age_skew)?,
        Command::Features { input, model } => features(&mut ctx, input, model.as_deref())?,
        Command::Fit { input, fit } => fit_cmd(&mut ctx, input, fit)?,
        Command::Eval { input } => eval_cmd(&mut ctx, input)?,
        Command::Grid { input, min_likes, plc } => grid(&mut ctx, input, min_likes.as_deref(), plc.as_deref())?,
        Command::Propagate { input, social } => propagate_cmd(&mut ctx, input, social)?,
        Command::Nonresponse { input, n_perm } => nonresponse(&mut ctx, input, *n_perm)?,
        Command::Forecast {
            input,
            polls,
            actual,
            election_date,
            poll_days,
            election_days,
        } => forecast_cmd(
            &mut ctx,
            input,
            polls,
            actual.as_deref(),
            election_date.as_deref(),
            *poll_days,
            *election_days,
        )?,
        Command::Replicate {
            input,
            n,
            alignment,
            survey_signal,
            fit,
        } => replicate_cmd(&mut ctx, input.as_deref(), *n, *alignment, *survey_signal, fit)?,
    }
    RunManifest {
        subcommand: cli.command.name().to_string(),
        config: g.config.clone(),
        inputs: ctx.inputs.clone(),
        output: ctx.out.clone(),
        seed: ctx.seed,
        args: std::env::args().skip(1).collect(),
        timestamp: timestamp(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        outputs: ctx.outputs.clone(),
    }
    .write(&ctx.out)
}

fn save_config(ctx: &mut Ctx) -> Result<()> {
    let text = ctx.cfg.to_toml_string();
    ctx.write_text("config.toml", &text)
}

fn synth(
    ctx: &mut Ctx,
    n: Option<usize>,
    alignment: Option<f64>,
    survey_signal: Option<f64>,
    age_skew: Option<f64>,
) -> Result<()> {
    let s = &mut ctx.cfg.synth;
    s.seed = ctx.seed;
    if let Some(n) = n {
        s.n_respondents = n;
    }
    if let Some(a) = alignment {
        s.alignment = a;
    }
    if let Some(v) = survey_signal {
        s.survey_signal = v;
    }
    if let Some(v) = age_skew {
        s.age_skew = v;
    }
    ctx.cfg.validate()?;
    let out = generate(&ctx.cfg.synth, &ctx.cfg.party_space, &ctx.cfg.survey, ctx.cfg.window)?;
    save_config(ctx)?;
    let mut w = ctx.create("dataset.jsonl")?;
    out.dataset.write_jsonl(&mut w)?;
    w.flush()?;
    let mut w = ctx.create("social.jsonl")?;
    out.social.write_jsonl(&mut w)?;
    w.flush()?;
    let parties = ctx.cfg.party_space.parties().to_vec();
    let w = ctx.create("polls.csv")?;
    write_polls_csv(w, &out.polls, &parties)?;
    let election = [PollObservation {
        date: out.election_date,
        shares: out.election,
    }];
    let w = ctx.create("election.csv")?;
    write_polls_csv(w, &election, &parties)
}

fn features(ctx: &mut Ctx, input: &Path, model: Option<&str>) -> Result<()> {
    let kinds = match model {
        Some(m) => vec![ModelKind::parse(m).ok_or_else(|| Error::InvalidConfig(format!("unknown model `{m}`")))?],
        None => ModelKind::ALL.to_vec(),
    };
    let ds = analysis_sample(&ctx.read_dataset(input)?);
    let cfg = ctx.cfg.clone();
    let builder = FeatureBuilder::new(&cfg.party_space, &cfg.survey);
    for kind in kinds {
        let (x, y) = builder.build_matrix(&ds, kind)?;
        let w = ctx.create(&format!("features_{}.csv", kind.name()))?;
        write_matrix_csv(w, &x, &y, &cfg.party_space)?;
    }
    Ok(())
}

fn fit_cmd(ctx: &mut Ctx, input: &Path, args: &FitArgs) -> Result<()> {
    let settings = fit_settings(&ctx.cfg, args)?;
    ctx.cfg.fit = settings.clone();
    ctx.cfg.validate()?;
    let r = ctx.open(input)?;
    let (x, y) = read_matrix_csv(r, &ctx.cfg.party_space, None)?;
    let base = settings.fit_config(0.0);
    let (cv, oof) = cross_validate_with_predictions(&x, &y, &settings.lambda_grid, settings.folds, ctx.seed, &base)?;
    let full = fit(&x, &y, &settings.fit_config(cv.chosen_lambda))?;
    ctx.write_json("fit.json", &full)?;
    ctx.write_json("cv.json", &cv)?;

    let parties = ctx.cfg.party_space.clone();
    let pred = argmax_rows(oof.proba.view());
    let mut out = csv::Writer::from_writer(ctx.create("predictions.csv")?);
    let mut header: Vec<String> = ["respondent_id", "gold", "pred", "fold"].iter().map(|s| s.to_string()).collect();
    header.extend(parties.parties().iter().map(|p| format!("p:{p}")));
    out.write_record(&header)?;
    for i in 0..y.len() {
        let mut rec = vec![
            x.row_ids[i].clone(),
            parties.party(y.labels[i]).to_string(),
            parties.party(pred[i]).to_string(),
            oof.fold_of[i].to_string(),
        ];
        rec.extend(oof.proba.row(i).iter().map(|p| p.to_string()));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Predictions file: `respondent_id,gold,pred` plus optional `fold` and
/// `p:<party>` probability columns.
fn eval_cmd(ctx: &mut Ctx, input: &Path) -> Result<()> {
    let parties = ctx.cfg.party_space.clone();
    let mut rdr = csv::Reader::from_reader(ctx.open(input)?);
    let header = rdr.headers()?.clone();
    let col = |name: &str| header.iter().position(|h| h == name);
    let (gold_c, pred_c) = match (col("gold"), col("pred")) {
        (Some(g), Some(p)) => (g, p),
        _ => return Err(Error::SchemaMismatch("predictions need `gold` and `pred` columns".into())),
    };
    let fold_c = col("fold");
    let prob_c: Vec<Option<usize>> = parties.parties().iter().map(|p| col(&format!("p:{p}"))).collect();
    let has_probs = prob_c.iter().all(Option::is_some);
    if !has_probs && prob_c.iter().any(Option::is_some) {
        return Err(Error::SchemaMismatch("probability columns must cover every party".into()));
    }
    let label = |s: &str| {
        parties
            .index_of(s)
            .ok_or_else(|| Error::InvalidData(format!("unknown party `{s}`")))
    };
    let (mut gold, mut pred, mut folds, mut probs) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec?;
        gold.push(label(&rec[gold_c])?);
        pred.push(label(&rec[pred_c])?);
        if let Some(c) = fold_c {
            folds.push(parse_list::<usize>(&rec[c], "fold")?[0]);
        }
        if has_probs {
            for c in prob_c.iter().flatten() {
                probs.push(parse_list::<f64>(&rec[*c], "probability")?[0]);
            }
        }
    }
    if gold.is_empty() {
        return Err(Error::InvalidData("predictions file has no rows".into()));
    }
    let scores = if has_probs {
        Some(Array2::from_shape_vec((gold.len(), parties.len()), probs).expect("rectangular"))
    } else {
        None
    };
    let ci = if fold_c.is_some() {
        fold_ci(&pred, &gold, &folds)
    } else {
        let acc = polvote::eval::accuracy(&pred, &gold)?;
        1.96 * (acc * (1.0 - acc) / gold.len() as f64).sqrt()
    };
    let report: EvalReport = evaluate(&pred, scores.as_ref().map(|s| s.view()), &gold, &parties, ci)?;
    ctx.write_json("report.json", &report)?;
    let table = render_table(&[("model", &report)]);
    ctx.write_text("report.txt", &table)?;
    print!("{table}");
    Ok(())
}

/// Normal-approximation half-width over per-fold accuracies.
fn fold_ci(pred: &[usize], gold: &[usize], folds: &[usize]) -> f64 {
    let k = folds.iter().max().map_or(0, |m| m + 1);
    let accs: Vec<f64> = (0..k)
        .filter_map(|f| {
            let rows: Vec<usize> = (0..gold.len()).filter(|&i| folds[i] == f).collect();
            (!rows.is_empty()).then(|| rows.iter().filter(|&&i| pred[i] == gold[i]).count() as f64 / rows.len() as f64)
        })
        .collect();
    if accs.len() < 2 {
        return 0.0;
    }
    let m = accs.iter().sum::<f64>() / accs.len() as f64;
    let var = accs.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / (accs.len() - 1) as f64;
    1.96 * var.sqrt() / (accs.len() as f64).sqrt()
}

fn grid(ctx: &mut Ctx, input: &Path, min_likes: Option<&str>, plc: Option<&str>) -> Result<()> {
    if let Some(m) = min_likes {
        ctx.cfg.grid.min_likes = parse_list(m, "min likes")?;
    }
    if let Some(p) = plc {
        ctx.cfg.grid.plc = parse_list(p, "party like cap")?;
    }
    ctx.cfg.validate()?;
    let ds = analysis_sample(&ctx.read_dataset(input)?);
    let (mins, plcs) = (ctx.cfg.grid.min_likes.clone(), ctx.cfg.grid.plc.clone());
    let cells = sweep_grid(&ds, &mins, &plcs)?;
    write_grid_csv(ctx.create("grid.csv")?, &cells)?;
    write_grid_matrix(ctx.create("grid_matrix.csv")?, &cells, &mins, &plcs)
}

fn propagate_cmd(ctx: &mut Ctx, input: &Path, social: &Path) -> Result<()> {
    let ds = ctx.read_dataset(input)?;
    let graph = SocialGraph::read_jsonl(ctx.open(social)?)?;
    let outcome = propagate(&graph, &like_db_from_dataset(&ds))?;
    let mut text = String::new();
    for id in &outcome.political_posts {
        text.push_str(id);
        text.push('\n');
    }
    ctx.write_text("political_posts.txt", &text)?;
    write_propagation_csv(ctx.create("propagation.csv")?, &outcome, ds.party_space.parties())
}

fn nonresponse(ctx: &mut Ctx, input: &Path, n_perm: Option<usize>) -> Result<()> {
    if let Some(n) = n_perm {
        ctx.cfg.nonresponse.n_perm = n;
    }
    ctx.cfg.validate()?;
    let full = ctx.read_dataset(input)?;
    let subs = [
        ("any_engagement", full.filter(FilterRule::HasAnyLikes)),
        ("political_likes_1", full.filter(FilterRule::MinPoliticalLikes(1))),
        ("political_likes_7", full.filter(FilterRule::MinPoliticalLikes(7))),
        ("analysis_sample", analysis_sample(&full)),
    ];
    let schema = ctx.cfg.survey.clone();
    let features = SurveyFeature::all(&schema);
    let mut rows = Vec::new();
    for (name, sub) in subs {
        if sub.is_empty() {
            continue;
        }
        let reports = skew_table(
            &full,
            &sub,
            &features,
            &schema,
            ctx.cfg.nonresponse.n_perm,
            ctx.seed,
            &ctx.cfg.nonresponse.thresholds,
        )?;
        rows.extend(reports.into_iter().map(|r| (name.to_string(), r)));
    }
    write_skew_csv(ctx.create("skew.csv")?, &rows)
}

#[derive(Serialize)]
struct ForecastSummary {
    election_date: NaiveDate,
    users: usize,
    poll_users: Vec<usize>,
    mae_raw: Option<f64>,
    mae_weighted: Option<f64>,
}

fn forecast_cmd(
    ctx: &mut Ctx,
    input: &Path,
    polls_path: &Path,
    actual: Option<&Path>,
    election_date: Option<&str>,
    poll_days: i64,
    election_days: i64,
) -> Result<()> {
    if poll_days < 1 || election_days < 1 {
        return Err(Error::InvalidConfig("window lengths must be at least one day".into()));
    }
    let ds = ctx.read_dataset(input)?;
    let parties = ds.party_space.parties().to_vec();
    let polls = read_polls_csv(ctx.open(polls_path)?, &parties)?;
    let actual = match actual {
        Some(p) => {
            let rows = read_polls_csv(ctx.open(p)?, &parties)?;
            match rows.as_slice() {
                [one] => Some(one.shares),
                _ => return Err(Error::InvalidData("actual result file must hold exactly one row".into())),
            }
        }
        None => None,
    };
    let election_date = match election_date {
        Some(s) => NaiveDate::parse_from_str(s, "%Y-%m-%d")
            .map_err(|e| Error::InvalidConfig(format!("bad election date `{s}`: {e}")))?,
        None => chrono::DateTime::from_timestamp(ds.window.end, 0)
            .ok_or_else(|| Error::InvalidConfig("window end out of range".into()))?
            .date_naive(),
    };
    let mut fb = Vec::with_capacity(polls.len());
    let mut poll_users = Vec::with_capacity(polls.len());
    for p in &polls {
        let users = window_counts(&ds, end_of_day(p.date), poll_days);
        poll_users.push(users.len());
        fb.push(raw_count_shares(&users)?);
    }
    let weights = fit_weights(&fb, &polls)?;
    let users = window_counts(&ds, end_of_day(election_date), election_days);
    let raw = raw_count_shares(&users)?;
    let weighted = reweight(&raw, &weights.weights)?;

    let mut out = csv::Writer::from_writer(ctx.create("forecast.csv")?);
    let mut header = vec!["party", "raw", "weighted", "weight"];
    if actual.is_some() {
        header.push("actual");
    }
    out.write_record(&header)?;
    for (i, party) in parties.iter().enumerate() {
        let mut rec = vec![
            party.clone(),
            raw.shares[i].to_string(),
            weighted.shares[i].to_string(),
            weights.weights[i].to_string(),
        ];
        if let Some(a) = &actual {
            rec.push(a.shares[i].to_string());
        }
        out.write_record(&rec)?;
    }
    out.flush()?;
    drop(out);
    ctx.write_json("weights.json", &weights)?;
    let summary = ForecastSummary {
        election_date,
        users: users.len(),
        poll_users,
        mae_raw: actual.as_ref().map(|a| mae(&raw, a)),
        mae_weighted: actual.as_ref().map(|a| mae(&weighted, a)),
    };
    ctx.write_json("summary.json", &summary)
}

fn replicate_cmd(
    ctx: &mut Ctx,
    input: Option<&Path>,
    n: Option<usize>,
    alignment: Option<f64>,
    survey_signal: Option<f64>,
    args: &FitArgs,
) -> Result<()> {
    ctx.cfg.fit = fit_settings(&ctx.cfg, args)?;
    let ds = match input {
        Some(p) => {
            ctx.cfg.validate()?;
            ctx.read_dataset(p)?
        }
        None => {
            let s = &mut ctx.cfg.synth;
            s.seed = ctx.seed;
            if let Some(n) = n {
                s.n_respondents = n;
            }
            if let Some(a) = alignment {
                s.alignment = a;
            }
            if let Some(v) = survey_signal {
                s.survey_signal = v;
            }
            ctx.cfg.validate()?;
            generate(&ctx.cfg.synth, &ctx.cfg.party_space, &ctx.cfg.survey, ctx.cfg.window)?.dataset
        }
    };
    save_config(ctx)?;
    let rep = replicate(&ds, &ctx.cfg.survey, &ctx.cfg.fit, &ModelKind::ALL, ctx.seed)?;
    let table = render(&rep);
    ctx.write_text("table.txt", &table)?;
    write_csv(ctx.create("table.csv")?, &rep)?;
    ctx.write_json("replication.json", &rep)?;
    print!("{table}");
    Ok(())
}
