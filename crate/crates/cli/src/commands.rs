//! One function per subcommand. Each reads its inputs from the output tree,
//! writes new files there, and returns the key=value report it wrote.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wmlab_core::asr::{train, FrontendConfig, Utterance, Vocab};
use wmlab_core::attacks::{
    attack_learning_rate, finetune_attack, overwrite_attack, prune_attack, AttackReport, LabelDetectionEvasion,
};
use wmlab_core::audio::{read_wav, write_wav, AudioClip};
use wmlab_core::datagen::{gen_corpus, gen_owner_clips, read_manifest, write_manifest};
use wmlab_core::seed::derive_seed;
use wmlab_core::stego::{read_stegos, write_stegos, StegoMessage, StegoModel, StegoText};
use wmlab_core::watermark::{build_trigger_set, embed, evaluate, extract, ExtractionReport, TriggerSet};
use wmlab_core::Model;

use crate::config::{AttackKind, ExperimentConfig};
use crate::CliError;

/// Paths inside the output directory.
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: PathBuf) -> Self {
        Self { root }
    }

    fn corpus(&self) -> PathBuf {
        self.root.join("corpus")
    }
    fn train_manifest(&self) -> PathBuf {
        self.corpus().join("train.tsv")
    }
    fn eval_manifest(&self) -> PathBuf {
        self.corpus().join("eval.tsv")
    }
    fn owner_clip(&self, i: usize) -> PathBuf {
        self.corpus().join("owner").join(format!("clip{i}.wav"))
    }
    fn models(&self) -> PathBuf {
        self.root.join("models")
    }
    pub fn baseline(&self) -> PathBuf {
        self.models().join("baseline.ckpt")
    }
    pub fn watermarked(&self) -> PathBuf {
        self.models().join("watermarked.ckpt")
    }
    pub fn attacked(&self, kind: AttackKind) -> PathBuf {
        self.models().join(format!("attack-{}.ckpt", kind.name()))
    }
    fn stego(&self) -> PathBuf {
        self.root.join("stego")
    }
    fn stego_model(&self) -> PathBuf {
        self.stego().join("model.bin")
    }
    fn message(&self) -> PathBuf {
        self.stego().join("message.txt")
    }
    fn stegos(&self) -> PathBuf {
        self.stego().join("stegos.txt")
    }
    fn triggers(&self) -> PathBuf {
        self.root.join("triggers")
    }
    fn mixture(&self) -> PathBuf {
        self.triggers().join("mixture.tsv")
    }
    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }
    pub fn report(&self, name: &str) -> PathBuf {
        self.reports().join(format!("{name}.txt"))
    }
    pub fn run_log(&self) -> PathBuf {
        self.root.join("run.log")
    }
}

/// Key=value report under construction.
#[derive(Default)]
pub struct Report {
    body: String,
}

impl Report {
    fn kv(&mut self, key: &str, value: impl std::fmt::Display) {
        writeln!(self.body, "{key}={value}").expect("writing to a String");
    }

    fn rate(&mut self, key: &str, value: f64) {
        self.kv(key, format_args!("{value:.6}"));
    }

    fn raw(&mut self, lines: &str) {
        self.body.push_str(lines);
    }

    fn save(self, layout: &Layout, name: &str) -> Result<String> {
        let path = layout.report(name);
        create_parent(&path)?;
        fs::write(&path, &self.body).with_context(|| format!("writing {}", path.display()))?;
        Ok(self.body)
    }
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn need(path: &Path, made_by: &str) -> Result<()> {
    if !path.exists() {
        bail!("missing input {} (run `wmlab {made_by}` first)", path.display());
    }
    Ok(())
}

fn load_model(path: &Path, made_by: &str) -> Result<Model> {
    need(path, made_by)?;
    Model::load(path).with_context(|| format!("loading model {}", path.display()))
}

fn load_manifest(path: &Path, made_by: &str) -> Result<Vec<Utterance>> {
    need(path, made_by)?;
    read_manifest(path).with_context(|| format!("reading manifest {}", path.display()))
}

fn save_model(model: &Model, path: &Path) -> Result<()> {
    create_parent(path)?;
    model.save(path).with_context(|| format!("writing {}", path.display()))
}

fn owner_clips(layout: &Layout, n: usize) -> Result<Vec<AudioClip<f64>>> {
    (0..n)
        .map(|i| {
            let path = layout.owner_clip(i);
            need(&path, "datagen")?;
            read_wav(&path).with_context(|| format!("reading owner clip {}", path.display()))
        })
        .collect()
}

/// Attacker's training share and the held-out remainder of the eval split.
fn attack_split(cfg: &ExperimentConfig, eval: &[Utterance]) -> Result<(Vec<Utterance>, Vec<Utterance>)> {
    let cut = (cfg.attack.attacker_share * eval.len() as f64).round() as usize;
    if cut == 0 || cut >= eval.len() {
        bail!("eval split of {} utterances cannot be shared {}", eval.len(), cfg.attack.attacker_share);
    }
    let (a, h) = eval.split_at(cut);
    Ok((a.to_vec(), h.to_vec()))
}

pub fn datagen(cfg: &ExperimentConfig, layout: &Layout) -> Result<String> {
    let d = &cfg.datagen;
    let corpus = gen_corpus(&cfg.tone_spec(), d.utterances, d.min_len, d.max_len)?;
    write_manifest(&layout.corpus(), "train", &corpus.train)?;
    write_manifest(&layout.corpus(), "eval", &corpus.eval)?;
    let clips = gen_owner_clips(cfg.watermark.n, derive_seed(cfg.seed, "owner"))?;
    for (i, clip) in clips.iter().enumerate() {
        let path = layout.owner_clip(i);
        create_parent(&path)?;
        write_wav(clip, &path)?;
    }
    let mut r = Report::default();
    r.kv("datagen.train_utterances", corpus.train.len());
    r.kv("datagen.eval_utterances", corpus.eval.len());
    r.kv("datagen.owner_clips", clips.len());
    r.kv("datagen.train_manifest", "corpus/train.tsv");
    r.kv("datagen.eval_manifest", "corpus/eval.tsv");
    r.save(layout, "datagen")
}

pub fn train_baseline(cfg: &ExperimentConfig, layout: &Layout, epochs: Option<usize>) -> Result<String> {
    let data = load_manifest(&layout.train_manifest(), "datagen")?;
    let eval = load_manifest(&layout.eval_manifest(), "datagen")?;
    let epochs = epochs.unwrap_or(cfg.model.epochs);
    let hyper = cfg.hyperparams();
    let lr = hyper.learning_rate;
    let model = Model::new(Vocab::default(), FrontendConfig::default(), hyper)?;
    let (trained, report) = train(&model, &data, epochs, lr)?;
    save_model(&trained, &layout.baseline())?;
    let score = evaluate(&trained, &eval)?;
    let mut r = Report::default();
    r.kv("train.epochs", epochs);
    r.kv("train.parameters", trained.parameter_count());
    for (i, loss) in report.epoch_losses.iter().enumerate() {
        r.kv(&format!("train.loss.{}", i + 1), format_args!("{loss:.6}"));
    }
    r.kv("train.skipped", report.skipped.len());
    r.rate("train.eval_wer", score.wer);
    r.rate("train.eval_cer", score.cer);
    r.kv("train.fingerprint", trained.fingerprint());
    r.save(layout, "train")
}

fn message(cfg: &ExperimentConfig) -> Result<StegoMessage> {
    Ok(match &cfg.stego.message {
        Some(bits) => StegoMessage::from_bit_str(bits)?,
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "message"));
            StegoMessage::random(&mut rng, cfg.stego.message_bits)
        }
    })
}

pub fn stego_encode(cfg: &ExperimentConfig, layout: &Layout) -> Result<String> {
    let model = StegoModel::embedded(cfg.stego_config())?;
    let msg = message(cfg)?;
    let stegos = model.encode_message(&msg, cfg.watermark.n, derive_seed(cfg.seed, "stego-start"))?;
    for s in &stegos {
        let back = model.decode_text(s)?;
        if back != msg {
            bail!("stego {} does not decode back to the message", s.clip_index());
        }
    }
    create_parent(&layout.stego_model())?;
    model.save(layout.stego_model())?;
    fs::write(layout.message(), format!("{msg}\n"))?;
    write_stegos(layout.stegos(), &stegos)?;
    let mut r = Report::default();
    r.kv("stego.message", &msg);
    r.kv("stego.corpus_sha256", model.corpus_hash_hex());
    for s in &stegos {
        r.kv(&format!("stego.{}.text", s.clip_index()), s);
    }
    r.save(layout, "stego-encode")
}

fn load_stego(layout: &Layout) -> Result<(StegoModel, StegoMessage, Vec<StegoText>)> {
    for p in [layout.stego_model(), layout.message(), layout.stegos()] {
        need(&p, "stego-encode")?;
    }
    let model = StegoModel::load(layout.stego_model())?;
    let msg = StegoMessage::from_bit_str(fs::read_to_string(layout.message())?.trim())?;
    let stegos = read_stegos(layout.stegos())?;
    Ok((model, msg, stegos))
}

/// Decodes every non-empty line of `input` (default: the encoded stegos).
/// Fails when any line is not a stego.
pub fn stego_decode(layout: &Layout, input: Option<&Path>) -> Result<(String, bool)> {
    need(&layout.stego_model(), "stego-encode")?;
    let model = StegoModel::load(layout.stego_model())?;
    let input = input.map(Path::to_path_buf).unwrap_or_else(|| layout.stegos());
    need(&input, "stego-encode")?;
    let body = fs::read_to_string(&input).with_context(|| format!("reading {}", input.display()))?;
    let mut r = Report::default();
    let mut all_ok = true;
    let lines: Vec<&str> = body.lines().filter(|l| !l.trim().is_empty()).collect();
    r.kv("decode.lines", lines.len());
    for (i, line) in lines.iter().enumerate() {
        let decoded = StegoText::from_text(line, i).and_then(|t| model.decode_text(&t));
        match decoded {
            Ok(m) => r.kv(&format!("decode.{i}.message"), m),
            Err(e) => {
                all_ok = false;
                r.kv(&format!("decode.{i}.error"), e);
            }
        }
    }
    r.kv("decode.all_decoded", all_ok);
    Ok((r.save(layout, "stego-decode")?, all_ok))
}

pub fn trigger_synth(cfg: &ExperimentConfig, layout: &Layout) -> Result<String> {
    let data = load_manifest(&layout.train_manifest(), "datagen")?;
    let clips = owner_clips(layout, cfg.watermark.n)?;
    let (_, _, stegos) = load_stego(layout)?;
    let wcfg = cfg.watermark_config()?;
    let (set, mixture) = build_trigger_set(&data, &clips, &stegos, &wcfg, &FrontendConfig::default())?;
    set.save(&layout.triggers())?;
    // triggers point into the set, clean rows back into the corpus
    let mut manifest = String::new();
    for u in &mixture {
        let rel = match u.id().rsplit_once("-g") {
            Some((_, g)) if g.parse::<usize>().is_ok() => format!("triggers/{}.wav", u.id()),
            _ => format!("../corpus/train/{}.wav", u.id()),
        };
        writeln!(manifest, "{rel}\t{}", u.transcript())?;
    }
    fs::write(layout.mixture(), manifest)?;
    let mut r = Report::default();
    r.kv("triggers.count", set.triggers.len());
    for (i, c) in set.group_counts().iter().enumerate() {
        r.kv(&format!("triggers.group.{i}.count"), c);
        r.kv(&format!("triggers.group.{i}.key"), wcfg.key.values()[i]);
    }
    r.kv("triggers.mixture_size", mixture.len());
    r.save(layout, "trigger-synth")
}

pub fn embed_watermark(cfg: &ExperimentConfig, layout: &Layout, epochs: Option<usize>) -> Result<String> {
    let base = load_model(&layout.baseline(), "train")?;
    let mixture = load_manifest(&layout.mixture(), "trigger-synth")?;
    let eval = load_manifest(&layout.eval_manifest(), "datagen")?;
    let mut wcfg = cfg.watermark_config()?;
    if let Some(e) = epochs {
        wcfg.epochs = e;
    }
    let out = embed(&base, &mixture, &wcfg, Some(&eval))?;
    save_model(&out.model, &layout.watermarked())?;
    let mut r = Report::default();
    r.kv("embed.epochs", wcfg.epochs);
    r.kv("embed.mixture_size", mixture.len());
    if let Some(loss) = out.train.epoch_losses.last() {
        r.kv("embed.final_loss", format_args!("{loss:.6}"));
    }
    if let Some(f) = &out.fidelity {
        r.rate("embed.baseline_eval_wer", f.baseline_wer);
        r.rate("embed.baseline_eval_cer", f.baseline_cer);
        r.rate("embed.eval_wer", f.embedded_wer);
        r.rate("embed.eval_cer", f.embedded_cer);
    }
    r.kv("embed.fingerprint", out.model.fingerprint());
    r.save(layout, "embed")
}

struct Verification {
    stego: StegoModel,
    message: StegoMessage,
    set: TriggerSet,
}

fn verification(layout: &Layout) -> Result<Verification> {
    let (stego, message, _) = load_stego(layout)?;
    need(&layout.triggers().join("triggers.tsv"), "trigger-synth")?;
    let set = TriggerSet::load(&layout.triggers())?;
    Ok(Verification { stego, message, set })
}

/// Extracts from `model_path`; the boolean is true iff ownership is proven.
pub fn extract_from(cfg: &ExperimentConfig, layout: &Layout, model_path: &Path, name: &str) -> Result<(String, bool)> {
    let model = load_model(model_path, "train` or `wmlab embed")?;
    let v = verification(layout)?;
    let wcfg = cfg.watermark_config()?;
    let report = extract(|c| model.predict(c), &v.set, &v.stego, &v.message, &wcfg)?;
    let mut r = Report::default();
    r.kv("extract.model", model_path.strip_prefix(&layout.root).unwrap_or(model_path).display());
    r.raw(&report.to_kv("extract."));
    r.kv("extract.proves_ownership", report.proves_ownership());
    Ok((r.save(layout, name)?, report.proves_ownership()))
}

fn clean_rates(model: &Model, held: &[Utterance]) -> Result<(f64, f64)> {
    let s = evaluate(model, held)?;
    Ok((s.wer, s.cer))
}

pub fn attack(
    cfg: &ExperimentConfig,
    layout: &Layout,
    kind: AttackKind,
    sparsity: Option<f64>,
    epochs: Option<usize>,
) -> Result<String> {
    let marked = load_model(&layout.watermarked(), "embed")?;
    let eval = load_manifest(&layout.eval_manifest(), "datagen")?;
    let (attacker, held) = attack_split(cfg, &eval)?;
    let v = verification(layout)?;
    let wcfg = cfg.watermark_config()?;
    let a = &cfg.attack;
    let lr = attack_learning_rate(&marked);
    let mut params: Vec<(String, String)> = vec![("attacker_utterances".into(), attacker.len().to_string())];
    let (pre_wer, pre_cer) = clean_rates(&marked, &held)?;

    let (attacked, extraction): (Option<Model>, ExtractionReport) = match kind {
        AttackKind::Prune => {
            let s = sparsity.unwrap_or(a.sparsity);
            if !(0.0..1.0).contains(&s) {
                return Err(CliError::Usage(format!("--sparsity {s} must lie in [0, 1)")).into());
            }
            let e = epochs.unwrap_or(a.recovery_epochs);
            params.push(("sparsity".into(), s.to_string()));
            params.push(("recovery_epochs".into(), e.to_string()));
            params.push(("learning_rate".into(), lr.to_string()));
            let m = prune_attack(&marked, s, &attacker, e, lr)?;
            let r = extract(|c| m.predict(c), &v.set, &v.stego, &v.message, &wcfg)?;
            (Some(m), r)
        }
        AttackKind::Finetune => {
            let e = epochs.unwrap_or(a.finetune_epochs);
            params.push(("epochs".into(), e.to_string()));
            params.push(("learning_rate".into(), lr.to_string()));
            let m = finetune_attack(&marked, &attacker, e, lr)?;
            let r = extract(|c| m.predict(c), &v.set, &v.stego, &v.message, &wcfg)?;
            (Some(m), r)
        }
        AttackKind::Overwrite => {
            let clips = gen_owner_clips(wcfg.n, derive_seed(cfg.seed, "attacker-clips"))?;
            let stego = StegoModel::embedded(cfg.stego_config())?;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "attacker-message"));
            let amsg = StegoMessage::random(&mut rng, cfg.stego.message_bits);
            let astegos = stego.encode_message(&amsg, wcfg.n, derive_seed(cfg.seed, "attacker-stego-start"))?;
            let mut acfg = wcfg.clone();
            acfg.trigger_set_size = a.overwrite_trigger_set_size;
            acfg.replay_clean = a.overwrite_replay_clean;
            acfg.seed = derive_seed(cfg.seed, "attacker");
            if let Some(e) = epochs {
                acfg.epochs = e;
            }
            let ow = overwrite_attack(&marked, &attacker, &clips, &astegos, &wcfg.key, &acfg)?;
            let own = extract(|c| ow.model.predict(c), &ow.trigger_set, &stego, &amsg, &acfg)?;
            // the attacker's trigger audio scored against the owner's stegos
            let fake_set = TriggerSet {
                stegos: v.set.stegos.clone(),
                triggers: ow.trigger_set.triggers.clone(),
            };
            let fake = extract(|c| ow.model.predict(c), &fake_set, &v.stego, &v.message, &wcfg)?;
            params.push(("epochs".into(), acfg.epochs.to_string()));
            params.push(("attacker_key".into(), format!("{:?}", ow.key.values())));
            params.push(("attacker_verdict".into(), own.verdict.to_string()));
            params.push(("attacker_ber".into(), fmt_ber(own.ber)));
            params.push(("owner_on_attacker_triggers".into(), fake.verdict.to_string()));
            let r = extract(|c| ow.model.predict(c), &v.set, &v.stego, &v.message, &wcfg)?;
            (Some(ow.model), r)
        }
        AttackKind::Evasion => {
            let k = a.intercepted;
            params.push(("intercepted".into(), k.to_string()));
            let mut w = LabelDetectionEvasion::new(
                |c: &AudioClip<f64>| marked.predict(c),
                &v.set.stegos[..k],
                derive_seed(cfg.seed, "evasion"),
            );
            let r = extract(|c| w.predict(c), &v.set, &v.stego, &v.message, &wcfg)?;
            (None, r)
        }
    };

    let (clean_wer, clean_cer) = match &attacked {
        Some(m) => {
            save_model(m, &layout.attacked(kind))?;
            clean_rates(m, &held)?
        }
        None => (pre_wer, pre_cer),
    };
    let report = AttackReport {
        name: kind.name().to_string(),
        params,
        clean_wer,
        clean_cer,
        extraction,
    };
    let mut r = Report::default();
    r.rate(&format!("attack.{}.pre_clean_wer", kind.name()), pre_wer);
    r.rate(&format!("attack.{}.pre_clean_cer", kind.name()), pre_cer);
    r.raw(&report.to_kv());
    r.kv(
        &format!("attack.{}.message_recovered", kind.name()),
        report.extraction.ber == Some(0.0),
    );
    r.save(layout, &format!("attack-{}", kind.name()))
}

fn fmt_ber(b: Option<f64>) -> String {
    b.map(|b| format!("{b:.3}")).unwrap_or_else(|| "none".into())
}

/// Report names in a stable order.
const REPORT_ORDER: [&str; 7] = ["datagen", "train", "stego-encode", "stego-decode", "trigger-synth", "embed", "extract"];

/// Collects every report into one file plus a table of the headline numbers.
pub fn summarize(layout: &Layout) -> Result<String> {
    let dir = layout.reports();
    need(&dir, "datagen")?;
    let mut names: Vec<String> = fs::read_dir(&dir)?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let p = e.path();
            if p.extension()? != "txt" {
                return None;
            }
            Some(p.file_stem()?.to_string_lossy().into_owned())
        })
        .filter(|n| n != "summary")
        .collect();
    names.sort_by_key(|n| (REPORT_ORDER.iter().position(|o| o == n).unwrap_or(REPORT_ORDER.len()), n.clone()));

    let mut r = Report::default();
    let mut rows = Vec::new();
    for name in &names {
        let body = fs::read_to_string(layout.report(name))?;
        r.raw(&body);
        if let Some(row) = table_row(name, &body) {
            rows.push(row);
        }
    }
    let mut table = format!(
        "{:<20} {:<16} {:>8} {:>8} {:>6} {:>10}\n",
        "report", "verdict", "wer", "cer", "ber", "clean_cer"
    );
    for row in &rows {
        table.push_str(row);
    }
    r.raw(&table.lines().map(|l| format!("# {l}\n")).collect::<String>());
    r.save(layout, "summary")?;
    Ok(table)
}

fn table_row(name: &str, body: &str) -> Option<String> {
    let get = |suffix: &str| {
        body.lines()
            .filter(|l| !l.contains(".trigger.") && !l.contains(".group."))
            .find_map(|l| l.split_once('=').filter(|(k, _)| k.ends_with(suffix)).map(|(_, v)| v.to_string()))
    };
    let verdict = get(".verdict")?;
    let short = |v: Option<String>| v.map(|s| s.chars().take(8).collect::<String>()).unwrap_or_else(|| "-".into());
    Some(format!(
        "{:<20} {:<16} {:>8} {:>8} {:>6} {:>10}\n",
        name,
        verdict,
        short(get("extract.wer")),
        short(get("extract.cer")),
        get("extract.ber").unwrap_or_else(|| "-".into()),
        short(get(".clean_cer")),
    ))
}
